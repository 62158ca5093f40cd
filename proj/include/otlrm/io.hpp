#pragma once

// On-disk tensor container (OT3D), .npy ingestion for public data cubes, and
// raster slice export.
//
// OT3D layout: magic "OT3D", 4-byte little-endian header length, UTF-8 JSON
// header {"dtype","shape","layout"}, then the raw little-endian payload in
// frontal-slice-major order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "otlrm/tensor.hpp"

namespace otlrm {

struct format_error : std::runtime_error {
  format_error(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")") {}
  explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail_io {

inline constexpr char kMagic[4] = {'O', 'T', '3', 'D'};
inline constexpr char kLayout[] = "frontal-slice-major,row-major";

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(data.data()), size);
  if (!in) throw io_error("failed reading " + path);
  return data;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw io_error("failed writing " + path);
}

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 8 ? "f64" : "f32";
}

}  // namespace detail_io

template <typename T>
void save_tensor(const std::string& path, const Tensor3<T>& x) {
  nlohmann::json header = {
      {"dtype", detail_io::dtype_name<T>()},
      {"shape", {x.n1(), x.n2(), x.n3()}},
      {"layout", detail_io::kLayout},
  };
  const std::string header_str = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + header_str.size() + x.size() * sizeof(T));
  out.insert(out.end(), detail_io::kMagic, detail_io::kMagic + 4);
  detail_io::put_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.insert(out.end(), header_str.begin(), header_str.end());
  for (const T v : x.data()) {
    if constexpr (sizeof(T) == 8) {
      detail_io::put_f64(out, static_cast<double>(v));
    } else {
      detail_io::put_f32(out, static_cast<float>(v));
    }
  }
  detail_io::write_file(path, out);
}

template <typename T = double>
Tensor3<T> load_tensor(const std::string& path) {
  const std::vector<std::uint8_t> in = detail_io::read_file(path);
  if (in.size() < 8 || std::memcmp(in.data(), detail_io::kMagic, 4) != 0) {
    throw format_error(path + ": bad magic, not an OT3D file", 0);
  }
  const std::uint32_t header_len = detail_io::get_u32(in, 4);
  if (in.size() < 8 + static_cast<std::size_t>(header_len)) {
    throw format_error(path + ": truncated header", in.size());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.begin() + 8, in.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path + ": invalid JSON header: " + e.what(), 8);
  }
  if (!header.contains("dtype") || !header.contains("shape") || !header.contains("layout")) {
    throw format_error(path + ": header missing dtype/shape/layout", 8);
  }
  const std::string dtype = header["dtype"].get<std::string>();
  if (dtype != "f64" && dtype != "f32") {
    throw format_error(path + ": unsupported dtype '" + dtype + "'", 8);
  }
  if (header["layout"].get<std::string>() != detail_io::kLayout) {
    throw format_error(path + ": unsupported layout", 8);
  }
  const auto shape = header["shape"];
  if (!shape.is_array() || shape.size() != 3) {
    throw format_error(path + ": shape must have three entries", 8);
  }
  const std::size_t n1 = shape[0].get<std::size_t>();
  const std::size_t n2 = shape[1].get<std::size_t>();
  const std::size_t n3 = shape[2].get<std::size_t>();
  if (n1 == 0 || n2 == 0 || n3 == 0) throw format_error(path + ": zero dimension in shape", 8);

  const std::size_t scalar = dtype == "f64" ? 8 : 4;
  const std::size_t payload_at = 8 + header_len;
  const std::size_t expected = n1 * n2 * n3 * scalar;
  if (in.size() - payload_at != expected) {
    throw format_error(path + ": payload length " + std::to_string(in.size() - payload_at) +
                           " != header shape requires " + std::to_string(expected),
                       payload_at);
  }
  std::vector<T> data(n1 * n2 * n3);
  const std::uint8_t* p = in.data() + payload_at;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = dtype == "f64" ? static_cast<T>(detail_io::get_f64(p + i * 8))
                             : static_cast<T>(detail_io::get_f32(p + i * 4));
  }
  return Tensor3<T>(n1, n2, n3, std::move(data));
}

/// Import a .npy v1.0 array: 3-D, little-endian f4/f8, C order. C-order axes
/// map directly to (n1, n2, n3).
template <typename T = double>
Tensor3<T> import_npy(const std::string& path) {
  const std::vector<std::uint8_t> in = detail_io::read_file(path);
  static const std::uint8_t magic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (in.size() < 10 || std::memcmp(in.data(), magic, 6) != 0) {
    throw format_error(path + ": not a .npy file", 0);
  }
  if (in[6] != 1 || in[7] != 0) {
    throw format_error(path + ": unsupported version " + std::to_string(in[6]) + "." +
                           std::to_string(in[7]) + " (need 1.0)",
                       6);
  }
  const std::size_t header_len = in[8] | (static_cast<std::size_t>(in[9]) << 8);
  if (in.size() < 10 + header_len) throw format_error(path + ": truncated header", in.size());
  const std::string header(reinterpret_cast<const char*>(in.data()) + 10, header_len);

  auto field = [&](const std::string& key) -> std::string {
    const auto at = header.find("'" + key + "'");
    if (at == std::string::npos) {
      throw format_error(path + ": header field '" + key + "' missing", 10);
    }
    auto colon = header.find(':', at);
    auto rest = header.substr(colon + 1);
    // value runs to the next top-level comma
    std::size_t depth = 0, end = rest.size();
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (rest[i] == '(' || rest[i] == '[') ++depth;
      if (rest[i] == ')' || rest[i] == ']') --depth;
      if (rest[i] == ',' && depth == 0) {
        end = i;
        break;
      }
    }
    std::string value = rest.substr(0, end);
    const auto first = value.find_first_not_of(" \t");
    const auto last = value.find_last_not_of(" \t}\n");
    return value.substr(first, last - first + 1);
  };

  const std::string descr = field("descr");
  std::size_t scalar = 0;
  if (descr == "'<f8'") {
    scalar = 8;
  } else if (descr == "'<f4'") {
    scalar = 4;
  } else {
    throw format_error(path + ": unsupported descr " + descr + " (need '<f4' or '<f8')", 10);
  }
  if (field("fortran_order") != "False") {
    throw format_error(path + ": fortran_order must be False (C order required)", 10);
  }
  std::string shape = field("shape");
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < shape.size();) {
    if (std::isdigit(static_cast<unsigned char>(shape[i]))) {
      std::size_t j = i;
      while (j < shape.size() && std::isdigit(static_cast<unsigned char>(shape[j]))) ++j;
      dims.push_back(std::stoull(shape.substr(i, j - i)));
      i = j;
    } else {
      ++i;
    }
  }
  if (dims.size() != 3) {
    throw format_error(path + ": shape must be 3-D, got " + std::to_string(dims.size()) +
                           " dims",
                       10);
  }
  const std::size_t n1 = dims[0], n2 = dims[1], n3 = dims[2];
  const std::size_t payload_at = 10 + header_len;
  const std::size_t expected = n1 * n2 * n3 * scalar;
  if (in.size() - payload_at != expected) {
    throw format_error(path + ": payload length mismatch", payload_at);
  }

  Tensor3<T> out(n1, n2, n3);
  const std::uint8_t* p = in.data() + payload_at;
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t k = 0; k < n3; ++k) {
        const std::size_t c_index = (i * n2 + j) * n3 + k;
        out(i, j, k) = scalar == 8 ? static_cast<T>(detail_io::get_f64(p + c_index * 8))
                                   : static_cast<T>(detail_io::get_f32(p + c_index * 4));
      }
  return out;
}

namespace detail_io {

template <typename T>
std::uint8_t to_byte(T v) {
  // clamp to [0,1], 8-bit, rounding half-up
  if (v < T(0)) v = T(0);
  if (v > T(1)) v = T(1);
  return static_cast<std::uint8_t>(std::floor(v * T(255) + T(0.5)));
}

}  // namespace detail_io

/// One band as a binary PGM (P5), width n2 x height n1.
template <typename T>
void export_pgm(const std::string& path, const Tensor3<T>& x, std::size_t band) {
  if (band >= x.n3()) {
    throw precondition_error("export_pgm: band " + std::to_string(band) + " out of range");
  }
  std::string header =
      "P5\n" + std::to_string(x.n2()) + " " + std::to_string(x.n1()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const T* p = x.slice(band);
  for (std::size_t s = 0; s < x.n1() * x.n2(); ++s) out.push_back(detail_io::to_byte(p[s]));
  detail_io::write_file(path, out);
}

/// Three bands mapped to RGB as a binary PPM (P6).
template <typename T>
void export_ppm(const std::string& path, const Tensor3<T>& x, std::size_t r, std::size_t g,
                std::size_t b) {
  for (const std::size_t band : {r, g, b}) {
    if (band >= x.n3()) {
      throw precondition_error("export_ppm: band " + std::to_string(band) + " out of range");
    }
  }
  std::string header =
      "P6\n" + std::to_string(x.n2()) + " " + std::to_string(x.n1()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::size_t i = 0; i < x.n1(); ++i)
    for (std::size_t j = 0; j < x.n2(); ++j) {
      out.push_back(detail_io::to_byte(x(i, j, r)));
      out.push_back(detail_io::to_byte(x(i, j, g)));
      out.push_back(detail_io::to_byte(x(i, j, b)));
    }
  detail_io::write_file(path, out);
}

/// One PGM per requested band, named <prefix>_band<k>.pgm.
template <typename T>
std::vector<std::string> export_slices(const std::string& prefix, const Tensor3<T>& x,
                                       const std::vector<std::size_t>& bands) {
  std::vector<std::string> written;
  for (const std::size_t band : bands) {
    const std::string path = prefix + "_band" + std::to_string(band) + ".pgm";
    export_pgm(path, x, band);
    written.push_back(path);
  }
  return written;
}

}  // namespace otlrm
