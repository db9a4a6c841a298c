#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace multiprior {

/// One differentiable buffer (a parameter tensor or an input) to verify.
struct GradCheckEntry {
  std::string name;
  float* data = nullptr;        // perturbed in place
  const float* grad = nullptr;  // analytic gradient, same length
  size_t n = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_name;
  size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool finite = true;

  bool ok(double tol) const { return finite && max_rel_err < tol; }
};

/// Central finite differences against analytic gradients.
///
/// `forward` must be deterministic and side-effect free; `compute_grads`
/// runs forward+backward once and fills every entry's grad buffer. The
/// difference quotient is accumulated in 64-bit; the forward itself stays
/// 32-bit. Relative error is |a - n| / max(1, |a|, |n|).
GradCheckReport gradcheck(const std::function<double()>& forward,
                          const std::function<void()>& compute_grads,
                          std::span<GradCheckEntry> entries, double h = 1e-3);

}  // namespace multiprior
