#pragma once

#include <random>
#include <string>
#include <vector>

#include "simpletag/autograd.hpp"

namespace simpletag {

using Rng = std::mt19937_64;

// Ordered view of named weights and non-trainable buffers. The order is the
// checkpoint order, so modules must register in a fixed sequence.
struct ParameterSet {
  struct Entry {
    std::string name;
    ag::Var var;
  };
  struct Buffer {
    std::string name;
    Tensor* tensor;
  };
  std::vector<Entry> parameters;
  std::vector<Buffer> buffers;

  void add(std::string name, const ag::Var& var) { parameters.push_back({std::move(name), var}); }
  void add_buffer(std::string name, Tensor& t) { buffers.push_back({std::move(name), &t}); }
  const ag::Var& find(const std::string& name) const;
  std::size_t scalar_count() const;
};

// Truncated normal (resampled beyond two standard deviations).
Tensor truncated_normal(Shape shape, Real stddev, Rng& rng);

// Training enables dropout and batch statistics. `rng` is only drawn from
// in training mode and may be null otherwise.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

}  // namespace simpletag
