#include "mdn/param_set.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mdn/errors.hpp"

namespace mdn {

namespace {
constexpr int kCheckpointVersion = 1;
}

void ParamSet::add(const std::string& name, Tensor init, const std::string& group) {
  if (has(name)) throw std::invalid_argument("ParamSet::add: duplicate name " + name);
  Entry e;
  e.grad = Tensor::zeros(init.shape);
  e.value = std::move(init);
  e.group = group;
  entries_.emplace(name, std::move(e));
}

Tensor& ParamSet::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
  return it->second.value;
}

const Tensor& ParamSet::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
  return it->second.value;
}

Tensor& ParamSet::grad(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
  return it->second.grad;
}

const std::string& ParamSet::group(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("ParamSet: unknown parameter " + name);
  return it->second.group;
}

void ParamSet::zero_grads() {
  for (auto& [name, e] : entries_)
    std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamSet::names_in_groups(const std::set<std::string>& groups) const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_)
    if (groups.count(e.group)) out.push_back(name);
  return out;
}

std::set<std::string> ParamSet::group_names() const {
  std::set<std::string> out;
  for (const auto& [name, e] : entries_) out.insert(e.group);
  return out;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

bool ParamSet::groups_bitwise_equal(const ParamSet& other, const std::set<std::string>& groups) const {
  for (const auto& [name, e] : entries_) {
    if (!groups.count(e.group)) continue;
    if (!other.has(name)) return false;
    const Tensor& o = other.value(name);
    if (o.shape != e.value.shape) return false;
    if (std::memcmp(o.v.data(), e.value.v.data(), o.v.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

nlohmann::json ParamSet::to_json() const {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, e] : entries_) {
    nlohmann::json p;
    p["name"] = name;
    p["group"] = e.group;
    p["shape"] = e.value.shape;
    p["data"] = e.value.v;
    params.push_back(std::move(p));
  }
  j["params"] = std::move(params);
  return j;
}

ParamSet ParamSet::from_json(const nlohmann::json& j, const std::string& context) {
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    throw DataError(context + ": missing format_version");
  if (j["format_version"].get<int>() != kCheckpointVersion)
    throw DataError(context + ": unsupported format_version");
  if (!j.contains("params") || !j["params"].is_array())
    throw DataError(context + ": missing params array");

  ParamSet ps;
  for (const auto& p : j["params"]) {
    try {
      std::string name = p.at("name").get<std::string>();
      std::string group = p.at("group").get<std::string>();
      Tensor t;
      t.shape = p.at("shape").get<std::vector<int>>();
      t.v = p.at("data").get<std::vector<double>>();
      if (t.v.size() != shape_numel(t.shape))
        throw DataError(context + ": data size mismatch for " + name);
      ps.add(name, std::move(t), group);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(context + ": malformed entry: " + e.what());
    }
  }
  return ps;
}

void ParamSet::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f << to_json().dump();
  f << "\n";
  if (!f) throw DataError("failed writing checkpoint: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  return from_json(j, "checkpoint " + path);
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  bool frozen = frozen_.count(params_.group(name)) > 0;
  Var v = tape_.leaf(params_.value(name), !frozen);
  bound_.emplace(name, v);
  return v;
}

void ParamBinder::write_grads() {
  for (const auto& [name, var] : bound_) {
    if (!tape_.has_grad(var)) continue;
    const Tensor& g = tape_.grad(var);
    Tensor& dst = params_.grad(name);
    for (std::size_t i = 0; i < g.v.size(); ++i) dst.v[i] += g.v[i];
  }
}

}  // namespace mdn
