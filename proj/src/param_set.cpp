#include "dcdsm/param_set.hpp"

#include <cmath>

#include "dcdsm/error.hpp"
#include "dcdsm/rng.hpp"

namespace dcdsm {

void ParamSet::add(const std::string& name, Tensor init) {
  if (contains(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  Tensor grad(init.shape());
  index_.emplace(name, entries_.size());
  entries_.push_back({name, std::move(init), std::move(grad)});
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamSet::zero_grads() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamSet::quantize_to_f32() {
  for (auto& e : entries_) dcdsm::quantize_to_f32(e.value);
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_)
    if (!dcdsm::all_finite(e.value)) return false;
  return true;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i)
    if (a.entries_[i].name != b.entries_[i].name || a.entries_[i].value != b.entries_[i].value) return false;
  return true;
}

Tensor kaiming_conv(RngStream& rng, std::size_t c_out, std::size_t c_in, std::size_t k) {
  Tensor w = randn(rng, {c_out, c_in, k, k});
  w *= std::sqrt(2.0 / static_cast<double>(c_in * k * k));
  return w;
}

void quantize_to_f32(Tensor& t) {
  for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace dcdsm
