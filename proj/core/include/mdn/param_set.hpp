#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdn/tape.hpp"
#include "mdn/tensor.hpp"

namespace mdn {

// Named parameter tensors with matching gradient slots, partitioned into
// groups so optimizers and freeze checks can address subsets.
class ParamSet {
 public:
  void add(const std::string& name, Tensor init, const std::string& group);

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const std::string& group(const std::string& name) const;

  void zero_grads();
  std::vector<std::string> names() const;  // sorted
  std::vector<std::string> names_in_groups(const std::set<std::string>& groups) const;
  std::set<std::string> group_names() const;
  std::size_t total_size() const;

  bool groups_bitwise_equal(const ParamSet& other, const std::set<std::string>& groups) const;

  // JSON checkpoint; doubles survive a save/load round trip bit exactly.
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);
  nlohmann::json to_json() const;
  static ParamSet from_json(const nlohmann::json& j, const std::string& context);

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    std::string group;
  };
  std::map<std::string, Entry> entries_;
};

// Binds parameters onto a tape as leaves, one node per parameter per pass.
// Groups listed in frozen get requires_grad=false so backward never touches
// them. write_grads() copies accumulated tape gradients back into the set.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamSet& params, std::set<std::string> frozen_groups = {})
      : tape_(tape), params_(params), frozen_(std::move(frozen_groups)) {}

  Var operator()(const std::string& name);
  void write_grads();

 private:
  Tape& tape_;
  ParamSet& params_;
  std::set<std::string> frozen_;
  std::map<std::string, Var> bound_;
};

}  // namespace mdn
