#include "multiprior/gradcheck.hpp"

#include <cmath>

#include "multiprior/common.hpp"

namespace multiprior {

GradCheckReport gradcheck(const std::function<double()>& forward,
                          const std::function<void()>& compute_grads,
                          std::span<GradCheckEntry> entries, double h) {
  compute_grads();
  GradCheckReport rep;
  for (const GradCheckEntry& e : entries) {
    for (size_t i = 0; i < e.n; ++i) {
      const float saved = e.data[i];
      e.data[i] = float(double(saved) + h);
      const double fp = forward();
      e.data[i] = float(double(saved) - h);
      const double fm = forward();
      e.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = double(e.grad[i]);
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        rep.finite = false;
        rep.worst_name = e.name;
        rep.worst_index = i;
        return rep;
      }
      const double denom =
          std::max({1.0, std::abs(analytic), std::abs(numeric)});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_name = e.name;
        rep.worst_index = i;
        rep.worst_analytic = analytic;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace multiprior
