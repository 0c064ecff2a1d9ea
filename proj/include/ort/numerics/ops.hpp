#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ort/numerics/rng.hpp"
#include "ort/numerics/tensor.hpp"

// Differentiable primitives. Shapes are checked at every boundary; the only
// implicit broadcast is add_bias over the last dimension.

namespace ort {

namespace detail {

template <class T>
bool needs_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class T, class Backward>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs, Backward&& bw) {
  Tensor<T> out(std::move(shape), std::move(value));
  if (needs_grad<T>(inputs)) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto* t : inputs) node.parents.push_back(t->node());
    node.backward = std::forward<Backward>(bw);
  }
  return out;
}

template <class T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <class T>
void require_finite(std::span<const T> xs, const char* op) {
  if (!all_finite(xs)) throw NumericError(std::string(op) + ": non-finite input");
}

template <class T>
bool parent_tracks(const Node<T>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

}  // namespace detail

/// a[m x k] * b[k x n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> c(m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      const T* bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return detail::make_result<T>({m, n}, std::move(c), {&a, &b}, [m, k, n](detail::Node<T>& self) {
    const T* g = self.grad.data();
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      // ga += g * b^T, via an explicit transpose so the inner loop is an axpy.
      auto& ga = pa.ensure_grad();
      const T* B = pb.value.data();
      std::vector<T> bt(n * k);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      }
      for (std::size_t i = 0; i < m; ++i) {
        T* gai = ga.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const T gij = g[i * n + j];
          const T* btj = bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) gai[p] += gij * btj[p];
        }
      }
    }
    if (pb.requires_grad) {
      // gb += a^T * g
      auto& gb = pb.ensure_grad();
      const T* A = pa.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const T* gi = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = A[i * k + p];
          T* gbp = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbp[j] += aip * gi[j];
        }
      }
    }
  });
}

/// a[m x k] * b[n x k]^T, without materializing the transpose.
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2(a, "matmul_nt");
  detail::require_rank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  std::vector<T> c(m * n);
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
      c[i * n + j] = acc;
    }
  }
  return detail::make_result<T>({m, n}, std::move(c), {&a, &b}, [m, k, n](detail::Node<T>& self) {
    const T* g = self.grad.data();
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      const T* B = pb.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const T gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * B[j * k + p];
        }
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      const T* A = pa.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const T gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * A[i * k + p];
        }
      }
    }
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(c), {&a, &b}, [](detail::Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!detail::parent_tracks(self, p)) continue;
      auto& g = self.parents[p]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

/// Elementwise product.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(c), {&a, &b}, [](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

/// x[..., d] + bias[d], broadcast over every leading position.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || bias.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last dim of " +
                         shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<T> c(x.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = x[i] + bias[i % d];
  return detail::make_result<T>(x.shape(), std::move(c), {&x, &bias}, [d](detail::Node<T>& self) {
    if (detail::parent_tracks(self, 0)) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (detail::parent_tracks(self, 1)) {
      auto& g = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % d] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> c(x.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = x[i] * s;
  return detail::make_result<T>(x.shape(), std::move(c), {&x}, [s](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> c(x.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = x[i] > T(0) ? x[i] : T(0);
  return detail::make_result<T>(x.shape(), std::move(c), {&x}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

/// Same data, new extents.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> c(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(c), {&x}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Inverted dropout: kept entries are scaled by 1/(1-rate) so the
/// expectation matches the input. Identity when !train or rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep_scale;
  std::vector<T> c(x.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = x[i] * mask[i];
  return detail::make_result<T>(x.shape(), std::move(c), {&x},
                                [mask = std::move(mask)](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                                });
}

enum class RowMask { none, causal };

/// Row-wise softmax with max subtraction. With RowMask::causal, entries
/// j > i are excluded (weight exactly 0).
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x, RowMask mask = RowMask::none) {
  detail::require_rank2(x, "softmax_rows");
  detail::require_finite(x.data(), "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> y(x.size(), T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t lim = mask == RowMask::causal ? std::min(n, i + 1) : n;
    const T* xi = x.data().data() + i * n;
    T* yi = y.data() + i * n;
    T mx = xi[0];
    for (std::size_t j = 1; j < lim; ++j) mx = std::max(mx, xi[j]);
    T sum = 0;
    for (std::size_t j = 0; j < lim; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (std::size_t j = 0; j < lim; ++j) yi[j] /= sum;
  }
  return detail::make_result<T>(x.shape(), std::move(y), {&x}, [m, n](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      const T* yi = self.value.data() + i * n;
      const T* gy = self.grad.data() + i * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * yi[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += yi[j] * (gy[j] - dot);
    }
  });
}

/// Per-row normalization over the last dimension followed by gamma/beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  const std::size_t d = x.cols();
  if (d < 2) throw DimensionError("layer_norm: last dimension must be >= 2");
  if (gamma.rank() != 1 || gamma.size() != d || beta.rank() != 1 || beta.size() != d) {
    throw DimensionError("layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.size() / d;
  std::vector<T> y(x.size());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mean) * inv;
      y[r * d + j] = gamma[j] * xhat[r * d + j] + beta[j];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(y), {&x, &gamma, &beta},
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const T* g = self.grad.data();
        if (pg.requires_grad) {
          auto& gg = pg.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % d] += g[i];
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          std::vector<T> dxhat(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = g[r * d + j] * pg.value[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * xhat[r * d + j];
            }
            mean_d /= T(d);
            mean_dx /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx[r * d + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[r * d + j] * mean_dx);
            }
          }
        }
      });
}

/// Rows of table[V x d] selected by ids.
template <class T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  detail::require_rank2(table, "embedding_lookup");
  if (ids.empty()) throw DimensionError("embedding_lookup: empty id list");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<T> out(ids.size() * d);
  std::vector<int> idx(ids.begin(), ids.end());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (idx[t] < 0 || static_cast<std::size_t>(idx[t]) >= v) {
      throw DimensionError("embedding_lookup: id " + std::to_string(idx[t]) + " outside vocabulary of " +
                           std::to_string(v));
    }
    std::copy_n(table.data().begin() + idx[t] * d, d, out.begin() + t * d);
  }
  const std::size_t n = idx.size();
  return detail::make_result<T>({n, d}, std::move(out), {&table},
                                [idx = std::move(idx), d](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t t = 0; t < idx.size(); ++t) {
                                    for (std::size_t j = 0; j < d; ++j) {
                                      g[idx[t] * d + j] += self.grad[t * d + j];
                                    }
                                  }
                                });
}

/// Concatenates matrices with equal row counts along columns.
template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(m * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.data().begin() + i * w, w, out.begin() + i * total + off);
    }
    off += w;
  }
  Tensor<T> result({m, total}, std::move(out));
  bool track = false;
  if (grad_enabled()) {
    for (const auto& p : parts) track = track || p.requires_grad();
  }
  if (track) {
    auto& node = *result.node();
    node.requires_grad = true;
    for (const auto& p : parts) node.parents.push_back(p.node());
    node.backward = [m, total, widths = std::move(widths)](detail::Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        const std::size_t w = widths[k];
        if (self.parents[k]->requires_grad) {
          auto& g = self.parents[k]->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + off + j];
          }
        }
        off += w;
      }
    };
  }
  return result;
}

/// Columns [start, start + width) of a matrix.
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t width) {
  detail::require_rank2(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (width == 0 || start + width > n) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + width) +
                         ") outside " + shape_str(x.shape()));
  }
  std::vector<T> out(m * width);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(x.data().begin() + i * n + start, width, out.begin() + i * width);
  }
  return detail::make_result<T>({m, width}, std::move(out), {&x},
                                [m, n, start, width](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < m; ++i) {
                                    for (std::size_t j = 0; j < width; ++j) {
                                      g[i * n + start + j] += self.grad[i * width + j];
                                    }
                                  }
                                });
}

/// Rows of x in the order given by perm (output row i = input row perm[i]).
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> perm) {
  detail::require_rank2(x, "gather_rows");
  const std::size_t n = x.cols();
  std::vector<std::size_t> idx(perm.begin(), perm.end());
  std::vector<T> out(idx.size() * n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.data().begin() + idx[i] * n, n, out.begin() + i * n);
  }
  const std::size_t rows = idx.size();
  return detail::make_result<T>({rows, n}, std::move(out), {&x},
                                [idx = std::move(idx), n](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < idx.size(); ++i) {
                                    for (std::size_t j = 0; j < n; ++j) g[idx[i] * n + j] += self.grad[i * n + j];
                                  }
                                });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return detail::make_result<T>({1}, {s}, {&x}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& gi : g) gi += self.grad[0];
  });
}

/// Mean of -log softmax(logits[t])[target[t]] over positions whose target is
/// not pad_id.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets, int pad_id) {
  detail::require_rank2(logits, "cross_entropy");
  const std::size_t t_len = logits.rows(), v = logits.cols();
  if (targets.size() != t_len) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(t_len) + " positions");
  }
  detail::require_finite(logits.data(), "cross_entropy");
  std::size_t counted = 0;
  for (int y : targets) {
    if (y == pad_id) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= v) {
      throw DimensionError("cross_entropy: target " + std::to_string(y) + " outside [0," +
                           std::to_string(v) + ")");
    }
    ++counted;
  }
  if (counted == 0) throw UsageError("cross_entropy: every target is padding (empty mean)");
  std::vector<T> probs(logits.size(), T(0));
  T loss = 0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (targets[t] == pad_id) continue;
    const T* lt = logits.data().data() + t * v;
    T mx = *std::max_element(lt, lt + v);
    T s = 0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[t * v + j] = std::exp(lt[j] - mx);
      s += probs[t * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[t * v + j] /= s;
    loss += (mx + std::log(s)) - lt[targets[t]];
  }
  const T inv = T(1) / T(counted);
  std::vector<int> tgt(targets.begin(), targets.end());
  return detail::make_result<T>(
      {1}, {loss * inv}, {&logits},
      [probs = std::move(probs), tgt = std::move(tgt), pad_id, v, inv](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const T go = self.grad[0] * inv;
        for (std::size_t t = 0; t < tgt.size(); ++t) {
          if (tgt[t] == pad_id) continue;
          for (std::size_t j = 0; j < v; ++j) g[t * v + j] += go * probs[t * v + j];
          g[t * v + tgt[t]] -= go;
        }
      });
}

/// Row-wise log-softmax of a plain vector (no autodiff).
template <class T>
std::vector<T> log_softmax(std::span<const T> logits) {
  std::vector<T> out(logits.size());
  const T mx = *std::max_element(logits.begin(), logits.end());
  T s = 0;
  for (T v : logits) s += std::exp(v - mx);
  const T lse = mx + std::log(s);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace ort
