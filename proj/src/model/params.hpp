#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "util/errors.hpp"

namespace pd::model {

// Parameters are stored as float32 (the checkpoint dtype, so save->load is
// bit-exact); all arithmetic widens to double. Gradients live in a separate
// double-precision map keyed by parameter name.

struct Tensor {
  std::vector<int> dims;
  std::vector<float> data;

  int64_t numel() const {
    int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
  }
  int dim(int i) const { return dims.at(i); }
};

class ParamStore {
 public:
  Tensor& add(const std::string& name, std::vector<int> dims);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return map_.count(name) != 0; }

  // Sorted by name; this is the canonical order for checksums and files.
  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  int64_t total_params() const;
  size_t size() const { return map_.size(); }

  std::array<uint8_t, 32> checksum() const;
  std::array<uint8_t, 32> checksum(const std::set<std::string>& subset) const;
  std::string checksum_hex() const;

  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

 private:
  std::map<std::string, Tensor> map_;
};

using GradMap = std::map<std::string, std::vector<double>>;

// Fetches (creating zero-filled if absent) the gradient buffer for a name.
std::vector<double>& grad_buffer(GradMap& grads, const std::string& name, int64_t numel);

std::string join_name(const std::string& prefix, const std::string& name);

}  // namespace pd::model
