#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ort/geometry.hpp"
#include "ort/numerics/ops.hpp"

namespace ort {

/// Denominator guard of the gated normalization.
inline constexpr double kGateEpsilon = 1e-12;

/// Diagnostics accumulated across forward passes.
struct AttentionStats {
  std::size_t gate_fallback_rows = 0;
};

/// Omega_A = Q K^T / sqrt(d_k).
template <class T>
Tensor<T> appearance_attention(const Tensor<T>& q, const Tensor<T>& k) {
  if (q.cols() != k.cols()) {
    throw DimensionError("appearance_attention: query width " + std::to_string(q.cols()) +
                         " != key width " + std::to_string(k.cols()));
  }
  return scale(matmul_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols()))));
}

/// softmax(Omega_A) V.
template <class T>
Tensor<T> standard_head(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  return matmul(softmax_rows(appearance_attention(q, k)), v);
}

/// Gated normalization over keys, per query row m:
///   w(m,n) = g(m,n) exp(a(m,n) - M) / (sum_l g(m,l) exp(a(m,l) - M) + eps)
/// with M the row max of a(m,l) + log g(m,l) over positive gates, so the
/// shifted sum is at least 1. Each gated term is evaluated as
/// exp(a + log g - M) <= 1, so no intermediate overflows. Zero gates are
/// inactive and receive no gradient. Rows whose gates are all <= eps fall
/// back to softmax(a) for that row; the gate receives no gradient there.
template <class T>
Tensor<T> combined_attention(const Tensor<T>& omega_a, const Tensor<T>& omega_g,
                             AttentionStats* stats = nullptr) {
  detail::require_rank2(omega_a, "combined_attention");
  detail::require_same_shape(omega_a, omega_g, "combined_attention");
  detail::require_finite(omega_a.data(), "combined_attention");
  detail::require_finite(omega_g.data(), "combined_attention");
  const std::size_t m = omega_a.rows(), n = omega_a.cols();
  const T eps = static_cast<T>(kGateEpsilon);
  std::vector<T> w(m * n);
  std::vector<T> u(m * n);      // g exp(a - M), or exp(a - M) for fallback rows
  std::vector<T> denom(m);      // S per row, or softmax sum for fallback rows
  std::vector<char> fallback(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const T* a = omega_a.data().data() + i * n;
    const T* g = omega_g.data().data() + i * n;
    T* ui = u.data() + i * n;
    bool any_gate = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (g[j] < T(0)) throw NumericError("combined_attention: negative gate");
      any_gate = any_gate || g[j] > eps;
    }
    T s = 0;
    if (any_gate) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (g[j] > T(0)) mx = std::max(mx, a[j] + std::log(g[j]));
      }
      for (std::size_t j = 0; j < n; ++j) {
        ui[j] = g[j] > T(0) ? std::exp(a[j] + std::log(g[j]) - mx) : T(0);
        s += ui[j];
      }
      s += eps;
    } else {
      fallback[i] = 1;
      const T mx = *std::max_element(a, a + n);
      for (std::size_t j = 0; j < n; ++j) s += (ui[j] = std::exp(a[j] - mx));
      if (stats) ++stats->gate_fallback_rows;
    }
    denom[i] = s;
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] = ui[j] / s;
  }
  return detail::make_result<T>(
      {m, n}, std::move(w), {&omega_a, &omega_g},
      [m, n, u = std::move(u), denom = std::move(denom), fallback = std::move(fallback)](
          detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pg = *self.parents[1];
        for (std::size_t i = 0; i < m; ++i) {
          const T* w = self.value.data() + i * n;
          const T* gw = self.grad.data() + i * n;
          T dot = 0;
          for (std::size_t j = 0; j < n; ++j) dot += gw[j] * w[j];
          if (fallback[i]) {
            if (pa.requires_grad) {
              auto& ga = pa.ensure_grad();
              for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += w[j] * (gw[j] - dot);
            }
            continue;
          }
          // dL/du_j = (gw_j - sum_k gw_k w_k) / S; du_j/da_j = u_j, du_j/dg_j = u_j / g_j.
          const T* g = pg.value.data() + i * n;
          const T* ui = u.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) {
            if (g[j] <= T(0)) continue;
            const T du = (gw[j] - dot) / denom[i];
            if (pa.requires_grad) pa.ensure_grad()[i * n + j] += du * ui[j];
            if (pg.requires_grad) pg.ensure_grad()[i * n + j] += du * ui[j] / g[j];
          }
        }
      });
}

/// One recorded attention map, for export and inspection.
template <class T>
struct AttentionRecord {
  std::string block;  // "encoder", "decoder_self" or "decoder_cross"
  std::size_t layer = 0;
  std::size_t head = 0;
  Tensor<T> weights;                 // the normalized map actually applied
  Tensor<T> softmax_appearance;      // softmax(Omega_A)
  std::optional<Tensor<T>> gate;     // omega_G, geometric encoder only
};

template <class T>
struct AttentionTrace {
  std::vector<AttentionRecord<T>> records;
};

}  // namespace ort
