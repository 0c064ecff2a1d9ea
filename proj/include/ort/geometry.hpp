#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "ort/errors.hpp"
#include "ort/numerics/ops.hpp"

namespace ort {

/// Axis-aligned box in absolute pixels, center parameterized.
struct BoundingBox {
  double x_center = 0.0;
  double y_center = 0.0;
  double w = 1.0;
  double h = 1.0;

  [[nodiscard]] double area() const { return w * h; }
  [[nodiscard]] bool valid() const {
    return std::isfinite(x_center) && std::isfinite(y_center) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Denominator of the vertical offset term. `height` divides |dy| by the
/// box height; `paper_verbatim_y` divides by the y coordinate itself, which
/// is not translation invariant.
enum class YDenominator { height, paper_verbatim_y };

struct GeometryConfig {
  double eps_clamp = 1e-3;
  std::size_t d_g = 64;
  double wavelength_base = 1000.0;
  YDenominator y_denominator = YDenominator::height;

  void validate() const {
    if (!(eps_clamp > 0.0)) throw ConfigError("geometry eps_clamp must be > 0");
    if (d_g == 0 || d_g % 8 != 0) {
      throw ConfigError("geometry embedding width d_g must be a positive multiple of 8, got " +
                        std::to_string(d_g));
    }
    if (!(wavelength_base > 1.0)) throw ConfigError("geometry wavelength_base must be > 1");
  }
};

using Displacement = std::array<double, 4>;

/// Log-space relative offset and size ratio of box n as seen from box m.
/// Distances below eps_clamp are clamped so coincident centers stay finite.
inline Displacement displacement(const BoundingBox& m, const BoundingBox& n,
                                 const GeometryConfig& cfg = {}) {
  const double dx = std::max(std::abs(m.x_center - n.x_center), cfg.eps_clamp);
  const double dy = std::max(std::abs(m.y_center - n.y_center), cfg.eps_clamp);
  const double y_den = cfg.y_denominator == YDenominator::height ? m.h : m.y_center;
  return {std::log(dx / m.w), std::log(dy / y_den), std::log(n.w / m.w), std::log(n.h / m.h)};
}

/// Sinusoidal embedding of a displacement: for each component c and
/// frequency k in [0, d_g/8), emits sin(c / base^(8k/d_g)) then cos of the
/// same argument. Component-major layout.
inline std::vector<double> sinusoidal_embed(const Displacement& lambda, const GeometryConfig& cfg = {}) {
  const std::size_t per_component = cfg.d_g / 4;
  const std::size_t n_freq = cfg.d_g / 8;
  std::vector<double> out(cfg.d_g);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t k = 0; k < n_freq; ++k) {
      const double wavelength =
          std::pow(cfg.wavelength_base, 8.0 * static_cast<double>(k) / static_cast<double>(cfg.d_g));
      const double arg = lambda[c] / wavelength;
      out[c * per_component + 2 * k] = std::sin(arg);
      out[c * per_component + 2 * k + 1] = std::cos(arg);
    }
  }
  return out;
}

/// Embeddings of every ordered pair (m, n) stacked row-wise: row m*N + n.
template <class T>
Tensor<T> pair_embeddings(const std::vector<BoundingBox>& boxes, const GeometryConfig& cfg) {
  const std::size_t n = boxes.size();
  if (n == 0) throw DimensionError("pair_embeddings: no boxes");
  std::vector<T> data;
  data.reserve(n * n * cfg.d_g);
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto e = sinusoidal_embed(displacement(boxes[m], boxes[k], cfg), cfg);
      for (double v : e) data.push_back(static_cast<T>(v));
    }
  }
  return Tensor<T>({n * n, cfg.d_g}, std::move(data));
}

/// Learned projection vector of one attention head, shape [d_g x 1].
template <class T>
struct GeometricParams {
  Tensor<T> w_g;
};

/// Initial W_G: gates start close to 1 for every pair so geometric attention
/// begins as ordinary softmax attention. The lowest-frequency cosine of each
/// component is ~1 over the range of realistic displacements and carries the
/// constant; the rest is small uniform noise.
template <class T>
GeometricParams<T> init_geometric_params(const GeometryConfig& cfg, Rng& rng, double noise = 0.05) {
  std::vector<T> w(cfg.d_g);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-noise, noise));
  const std::size_t per_component = cfg.d_g / 4;
  const std::size_t last_k = cfg.d_g / 8 - 1;
  for (std::size_t c = 0; c < 4; ++c) w[c * per_component + 2 * last_k + 1] += T(0.25);
  return {Tensor<T>({cfg.d_g, 1}, std::move(w), true)};
}

/// ReLU(Emb(lambda) . W_G); differentiable in W_G, lambda is a constant.
template <class T>
Tensor<T> geometric_weight(const Displacement& lambda, const GeometricParams<T>& params,
                           const GeometryConfig& cfg = {}) {
  const auto e = sinusoidal_embed(lambda, cfg);
  Tensor<T> row({1, cfg.d_g}, std::vector<T>(e.begin(), e.end()));
  return relu(reshape(matmul(row, params.w_g), {1}));
}

/// Gate matrix from precomputed pair embeddings: entry (m, n) is the
/// geometric weight of key n for query m.
template <class T>
Tensor<T> geometry_matrix_from_embeddings(const Tensor<T>& pair_emb, std::size_t n,
                                          const GeometricParams<T>& params) {
  return relu(reshape(matmul(pair_emb, params.w_g), {n, n}));
}

template <class T>
Tensor<T> geometry_matrix(const std::vector<BoundingBox>& boxes, const GeometricParams<T>& params,
                          const GeometryConfig& cfg = {}) {
  return geometry_matrix_from_embeddings(pair_embeddings<T>(boxes, cfg), boxes.size(), params);
}

enum class BoxOrder { none, by_area_desc, left_to_right, top_to_bottom };

inline std::string to_string(BoxOrder o) {
  switch (o) {
    case BoxOrder::none: return "none";
    case BoxOrder::by_area_desc: return "size";
    case BoxOrder::left_to_right: return "ltr";
    case BoxOrder::top_to_bottom: return "ttb";
  }
  return "none";
}

inline BoxOrder box_order_from_string(const std::string& s) {
  if (s == "none") return BoxOrder::none;
  if (s == "size") return BoxOrder::by_area_desc;
  if (s == "ltr") return BoxOrder::left_to_right;
  if (s == "ttb") return BoxOrder::top_to_bottom;
  throw ConfigError("unknown box ordering '" + s + "' (expected none|size|ltr|ttb)");
}

/// Permutation listing box indices in the requested order; ties keep the
/// original index order.
inline std::vector<std::size_t> order_boxes(const std::vector<BoundingBox>& boxes, BoxOrder mode) {
  std::vector<std::size_t> perm(boxes.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto by = [&](auto key, bool descending) {
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
      return descending ? key(boxes[a]) > key(boxes[b]) : key(boxes[a]) < key(boxes[b]);
    });
  };
  switch (mode) {
    case BoxOrder::none: break;
    case BoxOrder::by_area_desc: by([](const BoundingBox& b) { return b.area(); }, true); break;
    case BoxOrder::left_to_right: by([](const BoundingBox& b) { return b.x_center; }, false); break;
    case BoxOrder::top_to_bottom: by([](const BoundingBox& b) { return b.y_center; }, false); break;
  }
  return perm;
}

}  // namespace ort
