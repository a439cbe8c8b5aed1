#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/tape.hpp"

namespace nrf {

// Flat, ordered collection of named parameters and buffers. Slots are stable
// indices; the order is the checkpoint order.
class ParameterStore {
 public:
  std::size_t add(std::string name, Matrix value, bool trainable = true);

  ad::Parameter& at(std::size_t slot) { return params_.at(slot); }
  const ad::Parameter& at(std::size_t slot) const { return params_.at(slot); }
  std::size_t size() const { return params_.size(); }
  std::optional<std::size_t> find(std::string_view name) const;

  std::vector<ad::Parameter>& all() { return params_; }
  const std::vector<ad::Parameter>& all() const { return params_; }
  std::vector<ad::Parameter*> trainable();

  // Number of stored reals, buffers included.
  std::size_t stored_count() const;
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<ad::Parameter> params_;
};

// Maps parameter slots onto tape variables, either as tracked leaves
// (training) or borrowed constants (inference).
class Binder {
 public:
  Binder(ad::Tape& tape, ParameterStore& store) : tape_(tape), store_(&store), mut_(&store) {}
  Binder(ad::Tape& tape, const ParameterStore& store) : tape_(tape), store_(&store) {}

  ad::Var operator()(std::size_t slot) const;
  ad::Tape& tape() const { return tape_; }
  const ParameterStore& store() const { return *store_; }

 private:
  ad::Tape& tape_;
  const ParameterStore* store_;
  ParameterStore* mut_ = nullptr;
};

}  // namespace nrf
