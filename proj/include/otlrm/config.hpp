#pragma once

// Experiment configuration: JSON round trip with unknown-key rejection, plus
// the defaults every run resolves against. Each run echoes its fully
// resolved configuration next to its outputs; re-running from the echo is
// bit-identical.

#include <cstdint>
#include <set>
#include <string>

#include "json.hpp"
#include "otlrm/tensor.hpp"

namespace otlrm {

struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentConfig {
  std::string task;  // complete | cassi | denoise
  std::string input;
  std::string output;
  std::string gt;
  std::string mask;    // mask path (completion Omega or CASSI mask)
  std::string report;  // JSON report path

  std::size_t r = 0;  // 0 = auto: round(min(n1,n2)/10), clamped to >= 1
  double lambda = 1e-8;
  double beta = 0.0;
  std::size_t k = 2;
  double slope = 0.01;
  double lr = 1e-3;
  long t_max = 3000;
  std::uint64_t seed = 0;
  std::string precision = "f64";  // f64 | f32
  std::string loss;               // "" = task default; sq-frobenius | l1

  double sr = -1.0;      // completion sampling rate when simulating Omega
  int shift = 2;         // CASSI shift step
  std::size_t bands = 0;  // CASSI band count
  double sigma = -1.0;   // noise std-dev when simulating

  bool tie_transforms = false;
  long eval_every = 100;
  double init_scale = 1.0;

  void validate() const {
    if (!task.empty() && task != "complete" && task != "cassi" && task != "denoise") {
      throw config_error("config: task must be complete|cassi|denoise, got '" + task + "'");
    }
    if (precision != "f64" && precision != "f32") {
      throw config_error("config: precision must be f64|f32, got '" + precision + "'");
    }
    if (!loss.empty() && loss != "sq-frobenius" && loss != "l1") {
      throw config_error("config: loss must be sq-frobenius|l1, got '" + loss + "'");
    }
    if (lambda < 0 || beta < 0) throw config_error("config: lambda and beta must be >= 0");
    if (lr <= 0) throw config_error("config: lr must be > 0");
    if (t_max < 1) throw config_error("config: t_max must be >= 1");
    if (sr != -1.0 && (sr < 0.0 || sr > 1.0)) {
      throw config_error("config: sr must lie in [0, 1]");
    }
    if (shift < 1) throw config_error("config: shift must be >= 1");
    if (sigma != -1.0 && sigma < 0.0) throw config_error("config: sigma must be >= 0");
    if (init_scale < 0) throw config_error("config: init_scale must be >= 0");
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return nlohmann::json{
      {"task", c.task},
      {"input", c.input},
      {"output", c.output},
      {"gt", c.gt},
      {"mask", c.mask},
      {"report", c.report},
      {"r", c.r},
      {"lambda", c.lambda},
      {"beta", c.beta},
      {"k", c.k},
      {"slope", c.slope},
      {"lr", c.lr},
      {"t_max", c.t_max},
      {"seed", c.seed},
      {"precision", c.precision},
      {"loss", c.loss},
      {"sr", c.sr},
      {"shift", c.shift},
      {"bands", c.bands},
      {"sigma", c.sigma},
      {"tie_transforms", c.tie_transforms},
      {"eval_every", c.eval_every},
      {"init_scale", c.init_scale},
  };
}

/// Parse a config object; unknown keys are errors (they are almost always
/// misspelled hyperparameter names).
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "task",  "input", "output", "gt",    "mask",  "report",         "r",
      "lambda", "beta",  "k",      "slope", "lr",    "t_max",          "seed",
      "precision", "loss", "sr",   "shift", "bands", "sigma",          "tie_transforms",
      "eval_every", "init_scale"};
  if (!j.is_object()) throw config_error("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw config_error("config: unknown key '" + key + "'");
  }
  ExperimentConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) {
      try {
        dst = j.at(key).get<std::decay_t<decltype(dst)>>();
      } catch (const nlohmann::json::exception&) {
        throw config_error("config: bad value for key '" + std::string(key) + "'");
      }
    }
  };
  get("task", c.task);
  get("input", c.input);
  get("output", c.output);
  get("gt", c.gt);
  get("mask", c.mask);
  get("report", c.report);
  get("r", c.r);
  get("lambda", c.lambda);
  get("beta", c.beta);
  get("k", c.k);
  get("slope", c.slope);
  get("lr", c.lr);
  get("t_max", c.t_max);
  get("seed", c.seed);
  get("precision", c.precision);
  get("loss", c.loss);
  get("sr", c.sr);
  get("shift", c.shift);
  get("bands", c.bands);
  get("sigma", c.sigma);
  get("tie_transforms", c.tie_transforms);
  get("eval_every", c.eval_every);
  get("init_scale", c.init_scale);
  c.validate();
  return c;
}

/// round(min(n1,n2)/10), clamped into [1, min(n1,n2)] — inside the
/// recommended [n/20, n/5] band.
inline std::size_t auto_rank(std::size_t n1, std::size_t n2) {
  const std::size_t n = std::min(n1, n2);
  std::size_t r = (n + 5) / 10;
  if (r < 1) r = 1;
  if (r > n) r = n;
  return r;
}

}  // namespace otlrm
