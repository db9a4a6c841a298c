#include <cmath>

#include "multiprior/tensor.hpp"

namespace multiprior {

void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg) {
  for (Parameter* p : params) {
    p->step += 1;
    const double bc1 = 1.0 - std::pow(double(cfg.beta1), double(p->step));
    const double bc2 = 1.0 - std::pow(double(cfg.beta2), double(p->step));
    const size_t n = p->value.data.size();
    for (size_t i = 0; i < n; ++i) {
      float g = p->grad.data[i];
      if (cfg.weight_decay != 0.0f) g += cfg.weight_decay * p->value.data[i];
      float& m = p->adam_m.data[i];
      float& v = p->adam_v.data[i];
      m = cfg.beta1 * m + (1.0f - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0f - cfg.beta2) * g * g;
      const double mhat = double(m) / bc1;
      const double vhat = double(v) / bc2;
      p->value.data[i] -=
          float(double(cfg.lr) * mhat / (std::sqrt(vhat) + double(cfg.eps)));
    }
    p->zero_grad();
  }
}

}  // namespace multiprior
