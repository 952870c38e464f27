#pragma once

// Flat vector of named trainable parameters. Slices are appended
// sequentially, so they are disjoint and in-bounds by construction; the slice
// order fixes the leaf order on the tape.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fkan {

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class ParamStore {
 public:
  std::size_t add(std::string name, std::size_t n) {
    const std::size_t off = values_.size();
    slices_.push_back({std::move(name), off, n});
    values_.resize(off + n, 0.0);
    return off;
  }

  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  const std::vector<ParamSlice>& slices() const { return slices_; }

  bool has(std::string_view name) const {
    for (const auto& s : slices_) {
      if (s.name == name) return true;
    }
    return false;
  }

  std::span<double> slice(std::string_view name) {
    for (const auto& s : slices_) {
      if (s.name == name) return {values_.data() + s.offset, s.size};
    }
    throw std::out_of_range("no parameter slice named " + std::string(name));
  }

  std::span<const double> slice(std::string_view name) const {
    for (const auto& s : slices_) {
      if (s.name == name) return {values_.data() + s.offset, s.size};
    }
    throw std::out_of_range("no parameter slice named " + std::string(name));
  }

 private:
  std::vector<double> values_;
  std::vector<ParamSlice> slices_;
};

}  // namespace fkan
