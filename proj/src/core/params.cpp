#include "nrf/params.hpp"

#include "nrf/error.hpp"

namespace nrf {

std::size_t ParameterStore::add(std::string name, Matrix value, bool trainable) {
  if (find(name)) throw UsageError("duplicate parameter name '" + name + "'");
  params_.emplace_back(std::move(name), std::move(value), trainable);
  return params_.size() - 1;
}

std::optional<std::size_t> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

std::vector<ad::Parameter*> ParameterStore::trainable() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_)
    if (p.trainable) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::stored_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

ad::Var Binder::operator()(std::size_t slot) const {
  if (mut_) return tape_.param(mut_->at(slot));
  return tape_.constant_ref(store_->at(slot).value);
}

}  // namespace nrf
