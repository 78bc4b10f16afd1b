#include "simpletag/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "simpletag/errors.hpp"

namespace simpletag::ag {

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw NumericError(std::string(op) + ": " + what);
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto out = std::make_shared<Node>();
  out->value = std::move(value);
  out->requires_grad =
      std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p->requires_grad; });
  if (out->requires_grad) {
    out->parents = std::move(parents);
    out->backward_fn = std::move(fn);
  }
  return out;
}

// Returns nullptr when the parent does not need a gradient.
Tensor* grad_of(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

void backward(const Var& root) {
  require(root->value.size() == 1, "backward", "root must be scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

Var matmul(const Var& a, const Var& b) {
  const auto& A = a->value;
  const auto& B = b->value;
  require(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(0), "matmul",
          shape_string(A.shape()) + " x " + shape_string(B.shape()));
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = A.at(i, p);
      if (av == 0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * B.at(p, j);
    }
  return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& G = self.grad;
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    if (auto* dA = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          Real s = 0;
          for (std::size_t j = 0; j < n; ++j) s += G.at(i, j) * B.at(p, j);
          dA->at(i, p) += s;
        }
    if (auto* dB = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const Real av = A.at(i, p);
          for (std::size_t j = 0; j < n; ++j) dB->at(p, j) += av * G.at(i, j);
        }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const auto& A = a->value;
  const auto& B = b->value;
  require(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1), "matmul_nt",
          shape_string(A.shape()) + " x " + shape_string(B.shape()) + "^T");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(0);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      for (std::size_t p = 0; p < k; ++p) s += A.at(i, p) * B.at(j, p);
      out.at(i, j) = s;
    }
  return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& G = self.grad;
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    auto* dA = grad_of(self, 0);
    auto* dB = grad_of(self, 1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const Real g = G.at(i, j);
        if (g == 0) continue;
        for (std::size_t p = 0; p < k; ++p) {
          if (dA) dA->at(i, p) += g * B.at(j, p);
          if (dB) dB->at(j, p) += g * A.at(i, p);
        }
      }
  });
}

Var transpose(const Var& x) {
  const auto& X = x->value;
  require(X.rank() == 2, "transpose", "expects a matrix, got " + shape_string(X.shape()));
  const std::size_t m = X.dim(0), n = X.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = X.at(i, j);
  return make_op(std::move(out), {x}, [m, n](Node& self) {
    auto* dX = grad_of(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dX->at(i, j) += self.grad.at(j, i);
  });
}

Var add(const Var& a, const Var& b) {
  require(a->value.shape() == b->value.shape(), "add",
          shape_string(a->value.shape()) + " vs " + shape_string(b->value.shape()));
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto* d = grad_of(self, p))
        for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

Var add_n(std::span<const Var> terms) {
  require(!terms.empty(), "add_n", "no terms");
  Tensor out = terms[0]->value;
  for (std::size_t t = 1; t < terms.size(); ++t) {
    require(terms[t]->value.shape() == out.shape(), "add_n", "shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += terms[t]->value[i];
  }
  return make_op(std::move(out), {terms.begin(), terms.end()}, [](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p)
      if (auto* d = grad_of(self, p))
        for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

Var add_row_bias(const Var& x, const Var& bias) {
  const auto& X = x->value;
  const std::size_t n = bias->value.size();
  require(X.rank() >= 1 && X.shape().back() == n && bias->value.rank() == 1, "add_row_bias",
          shape_string(X.shape()) + " + " + shape_string(bias->value.shape()));
  Tensor out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias->value[i % n];
  return make_op(std::move(out), {x, bias}, [n](Node& self) {
    if (auto* dX = grad_of(self, 0))
      for (std::size_t i = 0; i < dX->size(); ++i) (*dX)[i] += self.grad[i];
    if (auto* db = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*db)[i % n] += self.grad[i];
  });
}

Var scale(const Var& x, Real factor) {
  Tensor out = x->value;
  for (auto& v : out.storage()) v *= factor;
  return make_op(std::move(out), {x}, [factor](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += factor * self.grad[i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_op(std::move(out), {x}, [](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

Var gather_rows(const Var& table, std::span<const int> rows) {
  const auto& T = table->value;
  require(T.rank() == 2, "gather_rows", "table must be a matrix");
  const std::size_t width = T.dim(1);
  std::vector<int> idx(rows.begin(), rows.end());
  Tensor out({idx.size(), width});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] >= 0 && static_cast<std::size_t>(idx[r]) < T.dim(0), "gather_rows",
            "row " + std::to_string(idx[r]) + " out of range");
    std::copy_n(T.data().begin() + idx[r] * width, width, out.data().begin() + r * width);
  }
  return make_op(std::move(out), {table}, [idx, width](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < width; ++c) d->at(idx[r], c) += self.grad.at(r, c);
  });
}

Var take_rows(const Var& x, std::size_t count) {
  const auto& X = x->value;
  require(X.rank() == 2 && count <= X.dim(0), "take_rows", "count exceeds rows");
  const std::size_t width = X.dim(1);
  Tensor out({count, width}, std::vector<Real>(X.data().begin(),
                                               X.data().begin() + count * width));
  return make_op(std::move(out), {x}, [](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*d)[i] += self.grad[i];
  });
}

Var gather_cols(const Var& table, std::span<const std::size_t> cols) {
  const auto& T = table->value;
  require(T.rank() == 2, "gather_cols", "table must be a matrix");
  const std::size_t rows = T.dim(0);
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  for (auto c : idx) require(c < T.dim(1), "gather_cols", "column out of range");
  Tensor out({rows, idx.size()});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < idx.size(); ++c) out.at(r, c) = T.at(r, idx[c]);
  return make_op(std::move(out), {table}, [idx, rows](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < idx.size(); ++c) d->at(r, idx[c]) += self.grad.at(r, c);
  });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t count) {
  const auto& X = x->value;
  require(X.rank() == 2 && start + count <= X.dim(1), "slice_cols", "range out of bounds");
  const std::size_t m = X.dim(0);
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = X.at(i, start + j);
  return make_op(std::move(out), {x}, [m, start, count](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) d->at(i, start + j) += self.grad.at(i, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols", "no parts");
  const std::size_t m = parts[0]->value.dim(0);
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p->value.rank() == 2 && p->value.dim(0) == m, "concat_cols", "row mismatch");
    offsets.push_back(total);
    total += p->value.dim(1);
  }
  Tensor out({m, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& P = parts[k]->value;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < P.dim(1); ++j) out.at(i, offsets[k] + j) = P.at(i, j);
  }
  return make_op(std::move(out), {parts.begin(), parts.end()}, [offsets, m](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k)
      if (auto* d = grad_of(self, k))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d->dim(1); ++j) d->at(i, j) += self.grad.at(i, offsets[k] + j);
  });
}

Var concat_leading(std::span<const Var> parts) {
  require(!parts.empty(), "concat_leading", "no parts");
  Shape tail(parts[0]->value.shape().begin() + 1, parts[0]->value.shape().end());
  std::size_t lead = 0;
  std::vector<Real> values;
  for (const auto& p : parts) {
    const auto& s = p->value.shape();
    require(Shape(s.begin() + 1, s.end()) == tail, "concat_leading", "trailing shape mismatch");
    lead += s[0];
    values.insert(values.end(), p->value.data().begin(), p->value.data().end());
  }
  Shape shape{lead};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return make_op(Tensor(std::move(shape), std::move(values)), {parts.begin(), parts.end()},
                 [](Node& self) {
                   std::size_t offset = 0;
                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                     const std::size_t len = self.parents[k]->value.size();
                     if (auto* d = grad_of(self, k))
                       for (std::size_t i = 0; i < len; ++i) (*d)[i] += self.grad[offset + i];
                     offset += len;
                   }
                 });
}

Var diagonal_channels(const Var& x) {
  const auto& X = x->value;
  require(X.rank() == 3 && X.dim(1) == X.dim(2), "diagonal_channels",
          "expects (C,n,n), got " + shape_string(X.shape()));
  const std::size_t c = X.dim(0), n = X.dim(1);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) out.at(i, ch) = X.at(ch, i, i);
  return make_op(std::move(out), {x}, [c, n](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) d->at(ch, i, i) += self.grad.at(i, ch);
  });
}

Var softmax_rows(const Var& x) {
  const auto& X = x->value;
  require(X.rank() >= 1 && X.size() > 0, "softmax_rows", "empty input");
  const std::size_t k = X.shape().back();
  const std::size_t rows = X.size() / k;
  Tensor out = X;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.data().subspan(r * k, k);
    const Real mx = *std::max_element(row.begin(), row.end());
    Real sum = 0;
    for (auto& v : row) sum += (v = std::exp(v - mx));
    for (auto& v : row) v /= sum;
  }
  Tensor probs = out;
  return make_op(std::move(out), {x}, [probs = std::move(probs), rows, k](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::size_t j = 0; j < k; ++j) dot += self.grad[r * k + j] * probs[r * k + j];
      for (std::size_t j = 0; j < k; ++j)
        (*d)[r * k + j] += probs[r * k + j] * (self.grad[r * k + j] - dot);
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (auto& v : out.storage()) v = v > 0 ? v : 0;
  return make_op(std::move(out), {x}, [](Node& self) {
    auto* d = grad_of(self, 0);
    const auto& X = self.parents[0]->value;
    for (std::size_t i = 0; i < d->size(); ++i)
      if (X[i] > 0) (*d)[i] += self.grad[i];
  });
}

Var gelu(const Var& x) {
  Tensor out = x->value;
  for (auto& v : out.storage()) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  return make_op(std::move(out), {x}, [](Node& self) {
    auto* d = grad_of(self, 0);
    const auto& X = self.parents[0]->value;
    const Real inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < d->size(); ++i) {
      const Real v = X[i];
      const Real cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const Real pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*d)[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Var dropout(const Var& x, Real probability, std::mt19937_64& rng) {
  if (probability <= 0) return x;
  require(probability < 1, "dropout", "probability must be < 1");
  std::bernoulli_distribution keep(1.0 - probability);
  Tensor mask(x->value.shape());
  const Real inv = 1.0 / (1.0 - probability);
  for (auto& m : mask.storage()) m = keep(rng) ? inv : 0.0;
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_op(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i] * mask[i];
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const auto& X = x->value;
  require(X.rank() == 2 && gamma->value.size() == X.dim(1) && beta->value.size() == X.dim(1),
          "layer_norm_rows", "shape mismatch");
  const std::size_t m = X.dim(0), n = X.dim(1);
  Tensor normed({m, n});
  std::vector<Real> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    Real mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += X.at(i, j);
    mean /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (X.at(i, j) - mean) * (X.at(i, j) - mean);
    var /= static_cast<Real>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) normed.at(i, j) = (X.at(i, j) - mean) * inv_std[i];
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.at(i, j) = normed.at(i, j) * gamma->value[j] + beta->value[j];
  return make_op(std::move(out), {x, gamma, beta},
                 [normed = std::move(normed), inv_std = std::move(inv_std), m, n](Node& self) {
                   const auto& G = self.grad;
                   const auto& g = self.parents[1]->value;
                   if (auto* dg = grad_of(self, 1))
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) (*dg)[j] += G.at(i, j) * normed.at(i, j);
                   if (auto* db = grad_of(self, 2))
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) (*db)[j] += G.at(i, j);
                   if (auto* dX = grad_of(self, 0))
                     for (std::size_t i = 0; i < m; ++i) {
                       Real mean_d = 0, mean_dx = 0;
                       for (std::size_t j = 0; j < n; ++j) {
                         const Real dxhat = G.at(i, j) * g[j];
                         mean_d += dxhat;
                         mean_dx += dxhat * normed.at(i, j);
                       }
                       mean_d /= static_cast<Real>(n);
                       mean_dx /= static_cast<Real>(n);
                       for (std::size_t j = 0; j < n; ++j) {
                         const Real dxhat = G.at(i, j) * g[j];
                         dX->at(i, j) += inv_std[i] * (dxhat - mean_d - normed.at(i, j) * mean_dx);
                       }
                     }
                 });
}

Var batch_norm_rows(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                    bool training, Real momentum, Real eps) {
  const auto& X = x->value;
  require(X.rank() == 2 && gamma->value.size() == X.dim(0) && beta->value.size() == X.dim(0) &&
              state.running_mean.size() == X.dim(0) && state.running_var.size() == X.dim(0),
          "batch_norm_rows", "shape mismatch");
  const std::size_t c = X.dim(0), t = X.dim(1);
  std::vector<Real> mean(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      Real mu = 0;
      for (std::size_t j = 0; j < t; ++j) mu += X.at(ch, j);
      mu /= static_cast<Real>(t);
      Real var = 0;
      for (std::size_t j = 0; j < t; ++j) var += (X.at(ch, j) - mu) * (X.at(ch, j) - mu);
      const Real unbiased = t > 1 ? var / static_cast<Real>(t - 1) : 0.0;
      var /= static_cast<Real>(t);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + eps);
      state.running_mean[ch] = (1 - momentum) * state.running_mean[ch] + momentum * mu;
      state.running_var[ch] = (1 - momentum) * state.running_var[ch] + momentum * unbiased;
    } else {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + eps);
    }
  }
  Tensor normed({c, t});
  Tensor out({c, t});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < t; ++j) {
      normed.at(ch, j) = (X.at(ch, j) - mean[ch]) * inv_std[ch];
      out.at(ch, j) = normed.at(ch, j) * gamma->value[ch] + beta->value[ch];
    }
  return make_op(
      std::move(out), {x, gamma, beta},
      [normed = std::move(normed), inv_std = std::move(inv_std), c, t, training](Node& self) {
        const auto& G = self.grad;
        const auto& g = self.parents[1]->value;
        if (auto* dg = grad_of(self, 1))
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t j = 0; j < t; ++j) (*dg)[ch] += G.at(ch, j) * normed.at(ch, j);
        if (auto* db = grad_of(self, 2))
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t j = 0; j < t; ++j) (*db)[ch] += G.at(ch, j);
        auto* dX = grad_of(self, 0);
        if (!dX) return;
        for (std::size_t ch = 0; ch < c; ++ch) {
          if (!training) {
            for (std::size_t j = 0; j < t; ++j) dX->at(ch, j) += G.at(ch, j) * g[ch] * inv_std[ch];
            continue;
          }
          Real mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < t; ++j) {
            const Real dxhat = G.at(ch, j) * g[ch];
            mean_d += dxhat;
            mean_dx += dxhat * normed.at(ch, j);
          }
          mean_d /= static_cast<Real>(t);
          mean_dx /= static_cast<Real>(t);
          for (std::size_t j = 0; j < t; ++j) {
            const Real dxhat = G.at(ch, j) * g[ch];
            dX->at(ch, j) += inv_std[ch] * (dxhat - mean_d - normed.at(ch, j) * mean_dx);
          }
        }
      });
}

Var conv3x3(const Var& x, const Var& w, const Var& b) {
  const auto& X = x->value;
  const auto& W = w->value;
  require(X.rank() == 3 && W.rank() == 4 && W.dim(1) == X.dim(0) && W.dim(2) == 3 &&
              W.dim(3) == 3 && b->value.size() == W.dim(0),
          "conv3x3", shape_string(X.shape()) + " * " + shape_string(W.shape()));
  const std::size_t cin = X.dim(0), rows = X.dim(1), cols = X.dim(2), cout = W.dim(0);
  auto widx = [cin](std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return ((o * cin + i) * 3 + ky) * 3 + kx;
  };
  Tensor out({cout, rows, cols});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out.at(o, r, c) = b->value[o];
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < cin; ++i)
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const Real wv = W[widx(o, i, ky, kx)];
          for (std::size_t r = 0; r < rows; ++r) {
            const auto sr = static_cast<std::ptrdiff_t>(r + ky) - 1;
            if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(rows)) continue;
            for (std::size_t c = 0; c < cols; ++c) {
              const auto sc = static_cast<std::ptrdiff_t>(c + kx) - 1;
              if (sc < 0 || sc >= static_cast<std::ptrdiff_t>(cols)) continue;
              out.at(o, r, c) += wv * X.at(i, sr, sc);
            }
          }
        }
  return make_op(std::move(out), {x, w, b}, [=](Node& self) {
    const auto& G = self.grad;
    const auto& X = self.parents[0]->value;
    const auto& W = self.parents[1]->value;
    auto* dX = grad_of(self, 0);
    auto* dW = grad_of(self, 1);
    if (auto* db = grad_of(self, 2))
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) (*db)[o] += G.at(o, r, c);
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < cin; ++i)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::size_t wi = widx(o, i, ky, kx);
            Real acc = 0;
            for (std::size_t r = 0; r < rows; ++r) {
              const auto sr = static_cast<std::ptrdiff_t>(r + ky) - 1;
              if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(rows)) continue;
              for (std::size_t c = 0; c < cols; ++c) {
                const auto sc = static_cast<std::ptrdiff_t>(c + kx) - 1;
                if (sc < 0 || sc >= static_cast<std::ptrdiff_t>(cols)) continue;
                const Real g = G.at(o, r, c);
                acc += g * X.at(i, sr, sc);
                if (dX) dX->at(i, sr, sc) += g * W[wi];
              }
            }
            if (dW) (*dW)[wi] += acc;
          }
  });
}

Var rotate_pairs(const Var& x, std::span<const Real> positions, std::span<const Real> freqs) {
  const auto& X = x->value;
  require(X.rank() == 2 && X.dim(0) == positions.size() && X.dim(1) == 2 * freqs.size(),
          "rotate_pairs", "shape mismatch for " + shape_string(X.shape()));
  const std::size_t n = X.dim(0), half = freqs.size();
  Tensor cosv({n, half}), sinv({n, half});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < half; ++m) {
      const Real angle = positions[i] * freqs[m];
      cosv.at(i, m) = std::cos(angle);
      sinv.at(i, m) = std::sin(angle);
    }
  Tensor out({n, 2 * half});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < half; ++m) {
      const Real a = X.at(i, 2 * m), b = X.at(i, 2 * m + 1);
      out.at(i, 2 * m) = a * cosv.at(i, m) - b * sinv.at(i, m);
      out.at(i, 2 * m + 1) = a * sinv.at(i, m) + b * cosv.at(i, m);
    }
  return make_op(std::move(out), {x}, [cosv = std::move(cosv), sinv = std::move(sinv), n, half](Node& self) {
    auto* d = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < half; ++m) {
        const Real ga = self.grad.at(i, 2 * m), gb = self.grad.at(i, 2 * m + 1);
        d->at(i, 2 * m) += ga * cosv.at(i, m) + gb * sinv.at(i, m);
        d->at(i, 2 * m + 1) += -ga * sinv.at(i, m) + gb * cosv.at(i, m);
      }
  });
}

Var cross_entropy_sum(const Var& logits, std::span<const int> targets) {
  const auto& L = logits->value;
  require(L.rank() >= 1, "cross_entropy_sum", "logits must have a class axis");
  const std::size_t k = L.shape().back();
  const std::size_t rows = L.size() / k;
  require(rows == targets.size(), "cross_entropy_sum",
          std::to_string(rows) + " logit rows vs " + std::to_string(targets.size()) + " targets");
  if (!L.all_finite()) throw NumericError("cross_entropy_sum: non-finite logits");
  Tensor probs = L;
  Real total = 0;
  std::vector<int> tgt(targets.begin(), targets.end());
  for (std::size_t r = 0; r < rows; ++r) {
    require(tgt[r] >= 0 && static_cast<std::size_t>(tgt[r]) < k, "cross_entropy_sum",
            "target out of range");
    auto row = probs.data().subspan(r * k, k);
    const Real mx = *std::max_element(row.begin(), row.end());
    Real sum = 0;
    for (auto v : row) sum += std::exp(v - mx);
    const Real log_z = mx + std::log(sum);
    total += log_z - row[tgt[r]];
    for (auto& v : row) v = std::exp(v - log_z);
  }
  return make_op(Tensor({1}, {total}), {logits},
                 [probs = std::move(probs), tgt = std::move(tgt), k](Node& self) {
                   auto* d = grad_of(self, 0);
                   const Real g = self.grad[0];
                   for (std::size_t r = 0; r < tgt.size(); ++r)
                     for (std::size_t j = 0; j < k; ++j)
                       (*d)[r * k + j] +=
                           g * (probs[r * k + j] - (static_cast<int>(j) == tgt[r] ? 1.0 : 0.0));
                 });
}

}  // namespace simpletag::ag
