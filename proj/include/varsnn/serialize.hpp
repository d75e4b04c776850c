#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "varsnn/tensor.hpp"

namespace varsnn::io {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; byte swapping is not implemented");

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (sizeof(T) == 4) {
    return "f32";
  } else {
    return "f64";
  }
}

// Format: one ASCII header line "VNT <f32|f64> <rank> <extents...>\n"
// followed by the row-major payload as little-endian IEEE-754.
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os << "VNT " << dtype_name<T>() << ' ' << t.rank();
  for (int i = 0; i < t.rank(); ++i) os << ' ' << t.dim(i);
  os << '\n';
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!os) throw std::runtime_error("write_tensor: stream failure");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_tensor: missing header");
  std::istringstream hs(line);
  std::string magic, dtype;
  int rank = -1;
  hs >> magic >> dtype >> rank;
  if (magic != "VNT" || rank < 0) throw std::runtime_error("read_tensor: bad header '" + line + "'");
  if (dtype != dtype_name<T>()) {
    throw std::runtime_error("read_tensor: file holds " + dtype + ", expected " + dtype_name<T>());
  }
  Shape shape(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    if (!(hs >> shape[static_cast<size_t>(i)])) throw std::runtime_error("read_tensor: truncated header");
  }
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (is.gcount() != static_cast<std::streamsize>(t.size() * sizeof(T))) {
    throw std::runtime_error("read_tensor: truncated payload");
  }
  return t;
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_tensor<T>(is);
}

// Binary PPM (P6) dump of an HxWx3 image with values in [0,1].
template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw std::invalid_argument("write_ppm: expected HxWx3 image, got " + shape_str(image.shape()));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  for (int64_t i = 0; i < image.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, static_cast<double>(image[i])));
    os.put(static_cast<char>(static_cast<unsigned char>(v * 255.0 + 0.5)));
  }
  if (!os) throw std::runtime_error("write_ppm: stream failure");
}

// Checkpoint: "VNC1" magic, key=value header lines, a blank line, then the
// parameter tensors in declaration order.
template <typename T>
void save_checkpoint(const std::string& path, const std::map<std::string, std::string>& header,
                     const std::vector<const Tensor<T>*>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "VNC1\n";
  for (const auto& [k, v] : header) os << k << '=' << v << '\n';
  os << '\n';
  for (const auto* p : params) write_tensor(os, *p);
}

template <typename T>
std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                   const std::vector<Tensor<T>*>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "VNC1") {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  std::map<std::string, std::string> header;
  while (std::getline(is, line) && !line.empty()) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("load_checkpoint: bad header line " + line);
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (Tensor<T>* p : params) {
    Tensor<T> t = read_tensor<T>(is);
    if (!t.same_shape(*p)) {
      throw std::runtime_error("load_checkpoint: shape mismatch, file " + shape_str(t.shape()) +
                               " vs model " + shape_str(p->shape()));
    }
    *p = std::move(t);
  }
  return header;
}

inline uint64_t fnv1a_init() { return 14695981039346656037ull; }

inline uint64_t fnv1a_mix(uint64_t h, uint64_t value) {
  for (int b = 0; b < 8; ++b) {
    h ^= (value >> (8 * b)) & 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a_bytes(const void* data, size_t len, uint64_t h = fnv1a_init()) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t file_hash(const std::string& path);

}  // namespace varsnn::io
