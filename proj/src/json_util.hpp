// SPDX-License-Identifier: Apache-2.0
// Internal JSON helpers shared by the checkpoint writers. Not installed.
#pragma once

#include <json.hpp>
#include <string>

#include "proctrack/errors.hpp"
#include "proctrack/tensor.hpp"

namespace proctrack {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape;
  j["data"] = t.data;
  return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
  if (!j.contains("shape") || !j.contains("data"))
    throw ValidationError("E_PARSE", "checkpoint tensor '" + name + "' lacks shape or data");
  std::vector<int> shape = j["shape"].get<std::vector<int>>();
  Tensor t = Tensor::zeros(shape);
  std::vector<double> data = j["data"].get<std::vector<double>>();
  if (data.size() != t.data.size())
    throw ValidationError("E_SHAPE", "checkpoint tensor '" + name + "' has " +
                                         std::to_string(data.size()) + " values for shape " +
                                         t.shape_str());
  t.data = std::move(data);
  return t;
}

// Overwrites every named parameter (minus `skip`, which live elsewhere in the
// checkpoint) from the checkpoint's tensor map, preserving requires_grad.
template <typename Params>
void load_named_tensors(const nlohmann::json& tensors, Params&& named, const std::string& path,
                        const std::string& skip_suffix) {
  for (const auto& [name, t] : named) {
    if (!skip_suffix.empty() && name.size() >= skip_suffix.size() &&
        name.compare(name.size() - skip_suffix.size(), skip_suffix.size(), skip_suffix) == 0)
      continue;
    if (!tensors.contains(name))
      throw ValidationError("E_PARSE", "checkpoint '" + path + "' lacks tensor '" + name + "'");
    Tensor loaded = tensor_from_json(tensors[name], name);
    if (!loaded.same_shape(*t))
      throw ValidationError("E_SHAPE", "checkpoint tensor '" + name + "' shape " +
                                           loaded.shape_str() + " != expected " + t->shape_str());
    loaded.requires_grad = t->requires_grad;
    *t = std::move(loaded);
  }
}

}  // namespace proctrack
