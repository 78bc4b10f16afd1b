#include "simpletag/nn.hpp"

#include <stdexcept>

namespace simpletag {

const ag::Var& ParameterSet::find(const std::string& name) const {
  for (const auto& e : parameters)
    if (e.name == name) return e.var;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : parameters) total += e.var->value.size();
  return total;
}

Tensor truncated_normal(Shape shape, Real stddev, Rng& rng) {
  Tensor out(std::move(shape));
  std::normal_distribution<Real> normal(0.0, 1.0);
  for (auto& v : out.storage()) {
    Real z;
    do {
      z = normal(rng);
    } while (z < -2.0 || z > 2.0);
    v = z * stddev;
  }
  return out;
}

}  // namespace simpletag
