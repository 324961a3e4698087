#include "cyberdef/tensor.hpp"

#include "cyberdef/errors.hpp"

namespace cyberdef::nn {

Parameter& ParameterStore::add(std::string name, Matrix value) {
  if (find(name)) throw ContractViolation("duplicate parameter name '" + name + "'");
  auto& p = params_.emplace_back();
  p.name = std::move(name);
  p.value = std::move(value);
  p.zero_grad();
  return p;
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_)
    if (!p.value.allFinite()) return false;
  return true;
}

}  // namespace cyberdef::nn
