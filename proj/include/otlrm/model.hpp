#pragma once

// The generative low-rank model: X = L3^-1( L1(U) fw* Diag(rho(S)) fw*
// L2(V)^T ), its training objective (fidelity + lambda * OTV + optional
// semi-orthogonality penalty), and the gradient-descent fitting loop.
// Every frontal slice of L3(X) has rank <= r by construction, so low-rankness
// is never enforced by a loss.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "otlrm/autodiff.hpp"
#include "otlrm/metrics.hpp"
#include "otlrm/operators.hpp"
#include "otlrm/ortho.hpp"
#include "otlrm/random.hpp"
#include "otlrm/tensor.hpp"

namespace otlrm {

enum class LossKind { kSquaredFrobenius, kL1 };

template <typename T = double>
struct ModelHyper {
  std::size_t r = 1;
  std::size_t k = 2;       // layers of the rank estimation operator
  T slope = T(0.01);       // LeakyReLU negative slope
  T lambda = T(1e-8);      // OTV trade-off
  T beta = T(0);           // semi-orthogonality penalty weight
  bool tie_transforms = false;  // single shared L instead of L1, L2, L3
};

template <typename T = double>
struct OtlrmModel {
  std::size_t n1 = 0, n2 = 0, n3 = 0;
  ModelHyper<T> hyper;
  ad::ParamSet<T> params;
};

/// Observation container: a cube for completion/denoising, a 2-D measurement
/// for CASSI.
template <typename T = double>
using Observation = std::variant<Tensor3<T>, Matrix<T>>;

// ---------------------------------------------------------------------------
// Initialization

enum class InitScheme { kKaimingUniform, kConstant };

template <typename T = double>
struct InitSpec {
  InitScheme scheme = InitScheme::kKaimingUniform;
  T scale = T(1);     // multiplies the fan-in bound (kKaimingUniform)
  T constant = T(0);  // fill value (kConstant)
  std::map<std::string, T> constant_overrides;  // per-leaf constant fills
};

namespace detail_model {

template <typename T>
void fill_leaf(Tensor3<T>& leaf, std::size_t fan_in, Rng& rng, const InitSpec<T>& init,
               const std::string& name) {
  auto it = init.constant_overrides.find(name);
  if (it != init.constant_overrides.end()) {
    std::fill(leaf.data().begin(), leaf.data().end(), it->second);
    return;
  }
  if (init.scheme == InitScheme::kConstant) {
    std::fill(leaf.data().begin(), leaf.data().end(), init.constant);
    return;
  }
  // Uniform on [-b, b] with b = scale * sqrt(6 / fan_in): variance 2/fan_in
  // at scale 1.
  const T bound = init.scale * std::sqrt(T(6) / static_cast<T>(fan_in));
  for (T& v : leaf.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace detail_model

inline std::vector<std::string> g_names(std::size_t k) {
  std::vector<std::string> names;
  if (k >= 2)
    for (std::size_t i = 1; i <= k; ++i) names.push_back("G" + std::to_string(i));
  return names;
}

/// All learnable leaves, seeded. fan_in is the slice contraction dimension:
/// r for U, V and the G matrices, n3 for S and the transform parameters.
template <typename T>
ad::ParamSet<T> init_params(std::size_t n1, std::size_t n2, std::size_t n3,
                            const ModelHyper<T>& hyper, std::uint64_t seed,
                            const InitSpec<T>& init = {}) {
  if (hyper.r < 1 || hyper.r > std::min(n1, n2)) {
    throw precondition_error("init_params: rank " + std::to_string(hyper.r) +
                             " out of range [1, " + std::to_string(std::min(n1, n2)) + "]");
  }
  if (hyper.lambda < T(0) || hyper.beta < T(0)) {
    throw precondition_error("init_params: lambda and beta must be nonnegative");
  }
  Rng rng(seed);
  ad::ParamSet<T> params;
  const std::size_t r = hyper.r;

  Tensor3<T> u(n1, r, n3);
  detail_model::fill_leaf(u, r, rng, init, "U");
  params.add("U", std::move(u));

  Tensor3<T> v(n2, r, n3);
  detail_model::fill_leaf(v, r, rng, init, "V");
  params.add("V", std::move(v));

  Tensor3<T> s(n3, r, 1);
  detail_model::fill_leaf(s, n3, rng, init, "S");
  params.add("S", std::move(s));

  for (const std::string& name : g_names(hyper.k)) {
    Tensor3<T> g(r, r, 1);
    detail_model::fill_leaf(g, r, rng, init, name);
    params.add(name, std::move(g));
  }

  const std::size_t transforms = hyper.tie_transforms ? 1 : 3;
  for (std::size_t t = 1; t <= transforms; ++t) {
    Tensor3<T> w(n3, n3, 1);
    detail_model::fill_leaf(w, n3, rng, init, "W" + std::to_string(t));
    params.add("W" + std::to_string(t), std::move(w));
  }
  return params;
}

template <typename T>
OtlrmModel<T> make_model(std::size_t n1, std::size_t n2, std::size_t n3,
                         const ModelHyper<T>& hyper, std::uint64_t seed,
                         const InitSpec<T>& init = {}) {
  OtlrmModel<T> model{n1, n2, n3, hyper, init_params(n1, n2, n3, hyper, seed, init)};
  return model;
}

// ---------------------------------------------------------------------------
// Direct (tape-free) evaluation path. The fitting loop uses the tape; these
// are the reference semantics and the cross-check target.

namespace detail_model {

template <typename T>
Matrix<T> leaf_matrix(const ad::ParamSet<T>& params, const std::string& name) {
  const Tensor3<T>& t = params.at(name).value;
  Matrix<T> m(t.n1(), t.n2());
  for (std::size_t i = 0; i < t.n1(); ++i)
    for (std::size_t j = 0; j < t.n2(); ++j) m(i, j) = t(i, j, 0);
  return m;
}

template <typename T>
std::string transform_leaf(const OtlrmModel<T>& model, int which) {
  return model.hyper.tie_transforms ? "W1" : "W" + std::to_string(which);
}

template <typename T>
OrthoTransform<T> transform(const OtlrmModel<T>& model, int which) {
  return OrthoTransform<T>::from_parameters(
      leaf_matrix(model.params, transform_leaf(model, which)));
}

template <typename T>
T sum_abs_row_diffs(const Tensor3<T>& x) {
  T acc{};
  for (std::size_t k = 0; k < x.n3(); ++k)
    for (std::size_t i = 0; i + 1 < x.n1(); ++i)
      for (std::size_t j = 0; j < x.n2(); ++j) acc += std::abs(x(i + 1, j, k) - x(i, j, k));
  return acc;
}

}  // namespace detail_model

/// Dense rank estimation operator rho: k = 0 passes S through, k = 1 is a
/// bare LeakyReLU, k >= 2 alternates right-multiplications by G_i with
/// LeakyReLU between layers and none after the last.
template <typename T>
Matrix<T> rank_estimate(const Matrix<T>& s, const std::vector<Matrix<T>>& gs, T slope,
                        std::size_t k) {
  auto lrelu = [slope](Matrix<T> m) {
    for (T& v : m.data()) v = v >= T(0) ? v : slope * v;
    return m;
  };
  if (k == 0) return s;
  if (k == 1) return lrelu(s);
  if (gs.size() != k) {
    throw dim_error("rank_estimate: expected " + std::to_string(k) + " feature matrices");
  }
  Matrix<T> cur = s;
  for (std::size_t i = 0; i < k; ++i) {
    if (gs[i].rows() != s.cols() || gs[i].cols() != s.cols()) {
      throw dim_error("rank_estimate: G" + std::to_string(i + 1) + " must be r x r");
    }
    cur = matmul(cur, gs[i]);
    if (i + 1 < k) cur = lrelu(std::move(cur));
  }
  return cur;
}

template <typename T>
Matrix<T> rank_estimate(const OtlrmModel<T>& model) {
  std::vector<Matrix<T>> gs;
  for (const std::string& name : g_names(model.hyper.k))
    gs.push_back(detail_model::leaf_matrix(model.params, name));
  return rank_estimate(detail_model::leaf_matrix(model.params, "S"), gs, model.hyper.slope,
                       model.hyper.k);
}

/// X = L3^-1( L1(U) fw* Diag(rho(S)) fw* L2(V)^T ).
template <typename T>
Tensor3<T> reconstruct(const OtlrmModel<T>& model) {
  const OrthoTransform<T> l1 = detail_model::transform(model, 1);
  const OrthoTransform<T> l2 = detail_model::transform(model, 2);
  const OrthoTransform<T> l3 = detail_model::transform(model, 3);
  const Tensor3<T> uh = l1.apply(model.params.at("U").value);
  const Tensor3<T> vh = l2.apply(model.params.at("V").value);
  const Tensor3<T> sh = diag_embed(rank_estimate(model));
  return l3.apply_inverse(
      facewise_product(facewise_product(uh, sh), facewise_transpose(vh)));
}

/// Orthogonal total variation: l1 norms of forward row differences of L1(U),
/// of L2(V) (the second mode of the transposed factor), and of the
/// materialized L3 matrix. No wraparound.
template <typename T>
T otv(const OtlrmModel<T>& model) {
  const OrthoTransform<T> l1 = detail_model::transform(model, 1);
  const OrthoTransform<T> l2 = detail_model::transform(model, 2);
  const OrthoTransform<T> l3 = detail_model::transform(model, 3);
  const Matrix<T>& l3m = l3.matrix();
  Tensor3<T> l3t(l3m.rows(), l3m.cols(), 1);
  for (std::size_t i = 0; i < l3m.rows(); ++i)
    for (std::size_t j = 0; j < l3m.cols(); ++j) l3t(i, j, 0) = l3m(i, j);
  return detail_model::sum_abs_row_diffs(l1.apply(model.params.at("U").value)) +
         detail_model::sum_abs_row_diffs(l2.apply(model.params.at("V").value)) +
         detail_model::sum_abs_row_diffs(l3t);
}

/// beta ( |U^T *_L1 U - I|_F^2 + |V^T *_L2 V - I|_F^2 ), zero when beta = 0.
template <typename T>
T semi_orth_penalty(const OtlrmModel<T>& model) {
  if (model.hyper.beta == T(0)) return T(0);
  const std::size_t r = model.hyper.r;
  const Tensor3<T> eye = identity_slices<T>(r, model.n3);
  auto term = [&](const std::string& leaf, int which) {
    const OrthoTransform<T> l = detail_model::transform(model, which);
    const Tensor3<T>& u = model.params.at(leaf).value;
    const Tensor3<T> gram = t_product(tensor_transpose(u, l), u, l);
    return frob_norm_sq(sub(gram, eye));
  };
  return model.hyper.beta * (term("U", 1) + term("V", 2));
}

/// Fidelity phi(H(X), observation) for the given operator.
template <typename T>
T fidelity(const Tensor3<T>& x, const ForwardOperator<T>& op, const Observation<T>& obs,
           LossKind loss) {
  auto reduce = [loss](const auto& residual) {
    T acc{};
    for (const T v : residual.data()) acc += loss == LossKind::kL1 ? std::abs(v) : v * v;
    return acc;
  };
  if (const auto* comp = std::get_if<Completion<T>>(&op)) {
    const Tensor3<T>& y = std::get<Tensor3<T>>(obs);
    return reduce(sub(apply_completion(x, comp->omega), apply_completion(y, comp->omega)));
  }
  if (const auto* cas = std::get_if<Cassi<T>>(&op)) {
    const Matrix<T>& y = std::get<Matrix<T>>(obs);
    Matrix<T> r = cassi_forward(x, cas->mask, cas->shift);
    for (std::size_t i = 0; i < r.data().size(); ++i) r.data()[i] -= y.data()[i];
    T acc{};
    for (const T v : r.data()) acc += loss == LossKind::kL1 ? std::abs(v) : v * v;
    return acc;
  }
  const Tensor3<T>& y = std::get<Tensor3<T>>(obs);
  return reduce(sub(x, y));
}

/// Full objective: fidelity + lambda * OTV + semi-orthogonality penalty.
template <typename T>
T objective(const OtlrmModel<T>& model, const ForwardOperator<T>& op,
            const Observation<T>& obs, LossKind loss) {
  return fidelity(reconstruct(model), op, obs, loss) + model.hyper.lambda * otv(model) +
         semi_orth_penalty(model);
}

// ---------------------------------------------------------------------------
// Tape assembly

/// Build the differentiable objective. Leaf order matches the parameter set.
template <typename T>
ad::Program<T> build_program(const OtlrmModel<T>& model, const ForwardOperator<T>& op,
                             const Observation<T>& obs, LossKind loss) {
  ad::Program<T> prog;
  ad::Tape<T>& tape = prog.tape;

  std::map<std::string, int> leaf;
  for (const auto& e : model.params.entries) {
    const int id = tape.leaf(e.value.n1(), e.value.n2(), e.value.n3());
    leaf[e.name] = id;
    prog.leaves.emplace_back(e.name, id);
  }

  const int l1 = tape.householder_chain(leaf.at(detail_model::transform_leaf(model, 1)));
  const int l2 = model.hyper.tie_transforms
                     ? l1
                     : tape.householder_chain(leaf.at("W2"));
  const int l3 = model.hyper.tie_transforms
                     ? l1
                     : tape.householder_chain(leaf.at("W3"));

  const int uh = tape.mode3(leaf.at("U"), l1);
  const int vh = tape.mode3(leaf.at("V"), l2);

  int rho = leaf.at("S");
  const std::size_t k = model.hyper.k;
  if (k == 1) {
    rho = tape.leaky_relu(rho, model.hyper.slope);
  } else if (k >= 2) {
    const auto names = g_names(k);
    for (std::size_t i = 0; i < k; ++i) {
      rho = tape.facewise(rho, leaf.at(names[i]));
      if (i + 1 < k) rho = tape.leaky_relu(rho, model.hyper.slope);
    }
  }
  const int sh = tape.diag_embed(rho);

  const int z = tape.facewise(tape.facewise(uh, sh), tape.transpose_fw(vh));
  const int x = tape.mode3(z, l3, /*transpose_m=*/true);

  const bool l1_loss = loss == LossKind::kL1;
  int fid = -1;
  if (const auto* comp = std::get_if<Completion<T>>(&op)) {
    const Tensor3<T>& y = std::get<Tensor3<T>>(obs);
    if (!y.same_shape(comp->omega)) throw dim_error("build_program: observation shape mismatch");
    const int masked = tape.mask_mul(x, comp->omega);
    const int target = tape.constant(apply_completion(y, comp->omega));
    const int residual = tape.sub(masked, target);
    fid = l1_loss ? tape.sum_abs(residual) : tape.sum_sq(residual);
  } else if (const auto* cas = std::get_if<Cassi<T>>(&op)) {
    const Matrix<T>& y = std::get<Matrix<T>>(obs);
    Tensor3<T> mask(cas->mask.rows(), cas->mask.cols(), 1);
    for (std::size_t i = 0; i < mask.n1(); ++i)
      for (std::size_t j = 0; j < mask.n2(); ++j) mask(i, j, 0) = cas->mask(i, j);
    const int meas = tape.cassi(x, std::move(mask), cas->shift);
    Tensor3<T> yt(y.rows(), y.cols(), 1);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) yt(i, j, 0) = y(i, j);
    const int residual = tape.sub(meas, tape.constant(std::move(yt)));
    fid = l1_loss ? tape.sum_abs(residual) : tape.sum_sq(residual);
  } else {
    const Tensor3<T>& y = std::get<Tensor3<T>>(obs);
    const int residual = tape.sub(x, tape.constant(y));
    fid = l1_loss ? tape.sum_abs(residual) : tape.sum_sq(residual);
  }

  const int tv = tape.add(tape.add(tape.sum_abs_diff_rows(uh), tape.sum_abs_diff_rows(vh)),
                          tape.sum_abs_diff_rows(l3));
  int total = tape.add(fid, tape.scale(tv, model.hyper.lambda));

  if (model.hyper.beta > T(0)) {
    const std::size_t r = model.hyper.r;
    auto gram_defect = [&](int factor_hat, int lnode) {
      const int gram = tape.facewise(tape.transpose_fw(factor_hat), factor_hat);
      const int spatial = tape.mode3(gram, lnode, /*transpose_m=*/true);
      return tape.sum_sq(tape.sub(spatial, tape.constant(identity_slices<T>(r, model.n3))));
    };
    const int penalty =
        tape.scale(tape.add(gram_defect(uh, l1), gram_defect(vh, l2)), model.hyper.beta);
    total = tape.add(total, penalty);
  }

  prog.output = total;
  return prog;
}

// ---------------------------------------------------------------------------
// Fitting loop

template <typename T = double>
struct FitTrace {
  std::vector<T> loss;                      // objective value per iteration
  std::vector<std::pair<long, T>> psnr;     // periodic evaluations vs ground truth
  double wall_seconds = 0;
};

template <typename T = double>
struct FitOptions {
  long t_max = 3000;
  ad::AdamConfig<T> adam{};
  long eval_every = 0;  // 0 disables periodic PSNR evaluation
  T peak = T(1);
};

namespace detail_model {

// Columns drifting below norm 1e-6 are rescaled to unit norm; the reflection
// chain only sees directions, so this leaves L untouched while keeping the
// 1/|w|^2 factors bounded.
template <typename T>
void renormalize_transform_columns(ad::ParamSet<T>& params, bool tied) {
  const int count = tied ? 1 : 3;
  for (int t = 1; t <= count; ++t) {
    Tensor3<T>& w = params.at("W" + std::to_string(t)).value;
    for (std::size_t col = 0; col < w.n2(); ++col) {
      T norm{};
      for (std::size_t row = 0; row < w.n1(); ++row) norm += w(row, col, 0) * w(row, col, 0);
      norm = std::sqrt(norm);
      if (norm < T(1e-6) && norm > T(0)) {
        for (std::size_t row = 0; row < w.n1(); ++row) w(row, col, 0) /= norm;
      }
    }
  }
}

}  // namespace detail_model

/// Run the training loop: build the transforms, evaluate the objective,
/// backpropagate, Adam-update, for t_max iterations. Deterministic for a
/// fixed seed (the seed lives in the model initialization).
template <typename T>
std::pair<Tensor3<T>, FitTrace<T>> fit(OtlrmModel<T>& model, const ForwardOperator<T>& op,
                                       const Observation<T>& obs, LossKind loss,
                                       const FitOptions<T>& opt,
                                       const Tensor3<T>* ground_truth = nullptr) {
  if (opt.t_max < 1) throw precondition_error("fit: t_max must be >= 1");
  const auto start = std::chrono::steady_clock::now();

  ad::Program<T> prog = build_program(model, op, obs, loss);
  ad::AdamState<T> adam(model.params, opt.adam);
  FitTrace<T> trace;
  trace.loss.reserve(static_cast<std::size_t>(opt.t_max));

  for (long t = 1; t <= opt.t_max; ++t) {
    T loss_value;
    try {
      loss_value = ad::value_and_grad(prog, model.params);
    } catch (const numeric_error& e) {
      throw numeric_error("fit: iteration " + std::to_string(t) + ": " + e.what());
    }
    if (!std::isfinite(loss_value)) {
      throw numeric_error("fit: non-finite loss at iteration " + std::to_string(t));
    }
    ad::adam_step(model.params, adam);
    detail_model::renormalize_transform_columns(model.params, model.hyper.tie_transforms);
    trace.loss.push_back(loss_value);

    if (ground_truth && opt.eval_every > 0 && t % opt.eval_every == 0) {
      const Tensor3<T> current = reconstruct(model);
      trace.psnr.emplace_back(t, psnr(current, *ground_truth, opt.peak).psnr);
    }
  }

  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {reconstruct(model), trace};
}

}  // namespace otlrm
