#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ort/numerics/tensor.hpp"

namespace ort {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  double abs_floor = 1e-6;  // denominator floor for the relative error
  std::size_t max_entries_per_tensor = 0;  // 0 = check every entry
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  std::vector<GradCheckEntry> per_tensor;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor<double>>>;

/// Compares tape gradients of a scalar function against central differences.
/// Only 64-bit tensors are accepted; at 32-bit the finite-difference noise
/// floor swamps the comparison.
template <class F>
GradCheckReport grad_check(F&& f, NamedTensors params, const GradCheckOptions& opt = {}) {
  for (auto& [name, p] : params) p.zero_grad();
  Tensor<double> loss = f();
  if (loss.size() != 1) {
    throw UsageError("grad_check: function output must be scalar, got " + shape_str(loss.shape()));
  }
  backward(loss);
  loss = Tensor<double>();

  GradCheckReport report;
  for (auto& [name, p] : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    GradCheckEntry entry{name, 0, 0.0};
    auto data = p.mutable_data();
    std::size_t stride = 1;
    if (opt.max_entries_per_tensor > 0 && data.size() > opt.max_entries_per_tensor) {
      stride = (data.size() + opt.max_entries_per_tensor - 1) / opt.max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < data.size(); i += stride) {
      const double orig = data[i];
      double fp = 0.0, fm = 0.0;
      {
        NoGradGuard guard;
        data[i] = orig + opt.h;
        fp = f().item();
        data[i] = orig - opt.h;
        fm = f().item();
        data[i] = orig;
      }
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double denom = std::max({opt.abs_floor, std::abs(analytic[i]), std::abs(numeric)});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++entry.checked;
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      if (rel > report.max_rel_error || report.checked == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_tensor = name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
      ++report.checked;
    }
    report.per_tensor.push_back(entry);
  }
  report.passed = report.max_rel_error <= opt.tol;
  return report;
}

}  // namespace ort
