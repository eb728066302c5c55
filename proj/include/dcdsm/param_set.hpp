#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dcdsm/tensor.hpp"

namespace dcdsm {

/// Named parameter tensors, each paired with a gradient slot of the same
/// shape. Iteration order is insertion order.
///
/// Gradient slots are accumulators: a Tape may add into them through a const
/// reference, so forward passes can take the parameters by const&.
class ParamSet {
 public:
  void add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  std::size_t count() const noexcept { return entries_.size(); }
  /// Total number of scalar parameters.
  std::size_t parameter_count() const;

  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  Tensor& value(std::size_t i) { return entries_.at(i).value; }
  const Tensor& value(std::size_t i) const { return entries_.at(i).value; }
  Tensor& grad(std::size_t i) { return entries_.at(i).grad; }
  const Tensor& grad(std::size_t i) const { return entries_.at(i).grad; }

  Tensor& value(const std::string& name) { return value(index_of(name)); }
  const Tensor& value(const std::string& name) const { return value(index_of(name)); }
  Tensor& grad(const std::string& name) { return grad(index_of(name)); }
  const Tensor& grad(const std::string& name) const { return grad(index_of(name)); }

  /// Gradient accumulator used by Tape::backward.
  Tensor& grad_accumulator(std::size_t i) const { return entries_.at(i).grad; }

  void zero_grads();
  /// Rounds every parameter to the nearest float32 value.
  void quantize_to_f32();
  bool all_finite() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  struct Entry {
    std::string name;
    Tensor value;
    mutable Tensor grad;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Kaiming-normal initialized conv kernel [c_out, c_in, k, k].
class RngStream;
Tensor kaiming_conv(RngStream& rng, std::size_t c_out, std::size_t c_in, std::size_t k);

void quantize_to_f32(Tensor& t);

}  // namespace dcdsm
