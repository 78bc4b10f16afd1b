#pragma once

// Minimal reverse-mode differentiation over Tensor.
//
// A Var is a node in a dynamically built graph. Parameters are long-lived
// leaf nodes; every op creates a fresh node holding its parents and a
// closure that pushes the output gradient back into them. Gradients
// accumulate into Node::grad, which stays empty for nodes the backward
// pass never reaches. The optimizer relies on that to leave unreached
// parameters untouched.

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "simpletag/tensor.hpp"

namespace simpletag::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Zero-initialised on first use.
  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value);

// Seeds d(root)/d(root) = 1 for a scalar root and propagates.
void backward(const Var& root);

// Linear algebra. Matrices are rank-2.
Var matmul(const Var& a, const Var& b);     // (m,k) x (k,n)
Var matmul_nt(const Var& a, const Var& b);  // (m,k) x (n,k)^T
Var transpose(const Var& x);
Var add(const Var& a, const Var& b);
Var add_n(std::span<const Var> terms);
Var add_row_bias(const Var& x, const Var& bias);  // x: (..., n), bias: (n)
Var scale(const Var& x, Real factor);
Var reshape(const Var& x, Shape shape);

// Indexing.
Var gather_rows(const Var& table, std::span<const int> rows);
Var take_rows(const Var& x, std::size_t count);
Var gather_cols(const Var& table, std::span<const std::size_t> cols);
Var slice_cols(const Var& x, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_leading(std::span<const Var> parts);
Var diagonal_channels(const Var& x);  // (C,n,n) -> (n,C)

// Nonlinearities and normalisation.
Var softmax_rows(const Var& x);
Var relu(const Var& x);
Var gelu(const Var& x);
Var dropout(const Var& x, Real probability, std::mt19937_64& rng);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, Real eps);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

// Per-row normalisation of a (C,T) matrix. Training mode uses the row
// statistics and updates `state`; inference mode uses `state` only.
Var batch_norm_rows(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                    bool training, Real momentum, Real eps);

// 3x3 convolution, stride 1, zero padding 1. x: (C,n,m), w: (Co,C,3,3), b: (Co).
Var conv3x3(const Var& x, const Var& w, const Var& b);

// Pairwise rotation of columns (2m, 2m+1) of row i by positions[i] * freq[m].
Var rotate_pairs(const Var& x, std::span<const Real> positions, std::span<const Real> freqs);

// Sum over rows of -log softmax(logits[r])[targets[r]]; logits (..., K).
Var cross_entropy_sum(const Var& logits, std::span<const int> targets);

}  // namespace simpletag::ag
