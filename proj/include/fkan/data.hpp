#pragma once

// Dataset construction and ingestion: synthetic regression targets, MNIST
// IDX-format files, and deterministic batching.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fkan/rng.hpp"

namespace fkan::data {

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

class MissingDataError : public std::runtime_error {
 public:
  explicit MissingDataError(const std::string& what) : std::runtime_error(what) {}
};

struct Dataset {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t n = 0, dim_in = 0, dim_out = 0;
  std::vector<double> inputs;   // n x dim_in, row-major
  std::vector<double> targets;  // n x dim_out

  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * dim_in, dim_in};
  }
  std::span<const double> target(std::size_t i) const {
    return {targets.data() + i * dim_out, dim_out};
  }
};

/// f(x,y) = cos(4 pi x) + sin(pi y) + sin(2 pi y) + |sin(3 pi y^2)|.
inline double nonsmooth2d_target(double x, double y) {
  const double pi = std::numbers::pi;
  return std::cos(4.0 * pi * x) + std::sin(pi * y) + std::sin(2.0 * pi * y) +
         std::abs(std::sin(3.0 * pi * y * y));
}

/// Uniform i.i.d. samples on [0,1]^2 with the nonsmooth closed-form target.
inline Dataset gen_nonsmooth2d(std::size_t n, std::uint64_t seed) {
  Dataset d;
  d.name = "nonsmooth2d";
  d.seed = seed;
  d.n = n;
  d.dim_in = 2;
  d.dim_out = 1;
  d.inputs.resize(n * 2);
  d.targets.resize(n);
  auto g = rng::substream(seed, "data/nonsmooth2d");
  for (std::size_t i = 0; i < n; ++i) {
    const double x = g.uniform01();
    const double y = g.uniform01();
    d.inputs[i * 2] = x;
    d.inputs[i * 2 + 1] = y;
    d.targets[i] = nonsmooth2d_target(x, y);
  }
  return d;
}

/// f(x) = 0.1 sin(50 pi x) + sin(2 pi x).
inline double multiscale1d_target(double x) {
  const double pi = std::numbers::pi;
  return 0.1 * std::sin(50.0 * pi * x) + std::sin(2.0 * pi * x);
}

/// The multiscale target on n uniform grid points spanning [0,1] inclusive.
inline Dataset gen_multiscale1d(std::size_t n = 100) {
  Dataset d;
  d.name = "multiscale1d";
  d.n = n;
  d.dim_in = 1;
  d.dim_out = 1;
  d.inputs.resize(n);
  d.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / (n - 1);
    d.inputs[i] = x;
    d.targets[i] = multiscale1d_target(x);
  }
  return d;
}

// ---- IDX format ------------------------------------------------------------

struct IDXFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

inline IDXFile load_idx(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingDataError("cannot open " + path);
  auto read_be32 = [&]() -> std::uint32_t {
    std::uint8_t b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) {
      throw FormatError("truncated IDX header in " + path);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  };
  IDXFile idx;
  idx.magic = read_be32();
  if (idx.magic != 0x00000803u && idx.magic != 0x00000801u) {
    throw FormatError("bad IDX magic in " + path);
  }
  const std::size_t ndim = idx.magic & 0xFFu;
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    idx.dims.push_back(read_be32());
    total *= idx.dims.back();
  }
  idx.payload.resize(total);
  if (!f.read(reinterpret_cast<char*>(idx.payload.data()),
              static_cast<std::streamsize>(total))) {
    throw FormatError("truncated IDX payload in " + path);
  }
  return idx;
}

inline void write_idx(const std::string& path, std::uint32_t magic,
                      std::span<const std::uint32_t> dims,
                      std::span<const std::uint8_t> payload) {
  std::ofstream f(path, std::ios::binary);
  auto write_be32 = [&](std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24),
                               static_cast<std::uint8_t>(v >> 16),
                               static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  write_be32(magic);
  for (auto d : dims) write_be32(d);
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
}

/// Images scaled to [0,1], labels one-hot over 10 classes (regression
/// framing). `limit` truncates the set when positive.
inline Dataset mnist_to_dataset(const IDXFile& images, const IDXFile& labels,
                                std::size_t limit = 0) {
  if (images.magic != 0x00000803u) throw FormatError("images file has wrong magic");
  if (labels.magic != 0x00000801u) throw FormatError("labels file has wrong magic");
  if (images.dims.empty() || labels.dims.empty() ||
      images.dims[0] != labels.dims[0]) {
    throw FormatError("image/label count mismatch");
  }
  Dataset d;
  d.name = "mnist";
  d.n = images.dims[0];
  if (limit > 0) d.n = std::min<std::size_t>(d.n, limit);
  d.dim_in = images.payload.size() / images.dims[0];
  d.dim_out = 10;
  d.inputs.resize(d.n * d.dim_in);
  d.targets.assign(d.n * 10, 0.0);
  for (std::size_t i = 0; i < d.n * d.dim_in; ++i) {
    d.inputs[i] = images.payload[i] / 255.0;
  }
  for (std::size_t i = 0; i < d.n; ++i) {
    const std::uint8_t lab = labels.payload[i];
    if (lab > 9) throw FormatError("label out of range");
    d.targets[i * 10 + lab] = 1.0;
  }
  return d;
}

// ---- batching ----------------------------------------------------------------

/// Index batches covering [0, n) exactly once; the last batch may be short.
/// Order is a deterministic function of (seed, epoch) when shuffling.
inline std::vector<std::vector<std::uint32_t>> make_batches(std::size_t n,
                                                            std::size_t batch_size,
                                                            std::uint64_t seed,
                                                            std::uint64_t epoch,
                                                            bool shuffle) {
  if (n == 0) throw std::invalid_argument("make_batches: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  if (shuffle) {
    auto g = rng::substream(seed, "batching/epoch" + std::to_string(epoch));
    for (std::size_t i = n; i-- > 1;) {
      const std::size_t j = static_cast<std::size_t>(g.below(i + 1));
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t stop = std::min(at + batch_size, n);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                     order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

}  // namespace fkan::data
