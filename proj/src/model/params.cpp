#include "model/params.hpp"

#include "util/sha256.hpp"

namespace pd::model {

Tensor& ParamStore::add(const std::string& name, std::vector<int> dims) {
  if (map_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  for (int d : dims) {
    if (d <= 0) throw ConfigError("non-positive dimension for parameter " + name);
  }
  Tensor t;
  t.dims = std::move(dims);
  t.data.assign(static_cast<size_t>(t.numel()), 0.0f);
  return map_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(map_.size());
  for (const auto& [k, v] : map_) out.push_back(k);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : map_) {
    if (k.size() >= prefix.size() && k.compare(0, prefix.size(), prefix) == 0) {
      out.push_back(k);
    }
  }
  return out;
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& [k, v] : map_) n += v.numel();
  return n;
}

std::array<uint8_t, 32> ParamStore::checksum() const {
  Sha256 h;
  for (const auto& [k, v] : map_) {
    h.update(k.data(), k.size());
    for (int d : v.dims) h.update(&d, sizeof(d));
    h.update(v.data.data(), v.data.size() * sizeof(float));
  }
  return h.finish();
}

std::array<uint8_t, 32> ParamStore::checksum(const std::set<std::string>& subset) const {
  Sha256 h;
  for (const auto& name : subset) {
    const Tensor& v = at(name);
    h.update(name.data(), name.size());
    for (int d : v.dims) h.update(&d, sizeof(d));
    h.update(v.data.data(), v.data.size() * sizeof(float));
  }
  return h.finish();
}

std::string ParamStore::checksum_hex() const { return Sha256::hex(checksum()); }

std::vector<double>& grad_buffer(GradMap& grads, const std::string& name, int64_t numel) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    it = grads.emplace(name, std::vector<double>(static_cast<size_t>(numel), 0.0)).first;
  } else if (static_cast<int64_t>(it->second.size()) != numel) {
    throw ShapeError("gradient buffer size mismatch for " + name);
  }
  return it->second;
}

std::string join_name(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return name;
  return prefix + "." + name;
}

}  // namespace pd::model
