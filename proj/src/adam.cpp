#include "fairsr/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace fairsr {

AdamState::AdamState(const ParamStore& params) {
  m.reserve(params.count());
  v.reserve(params.count());
  for (int i = 0; i < params.count(); ++i) {
    m.emplace_back(params.value(i).rows, params.value(i).cols);
    v.emplace_back(params.value(i).rows, params.value(i).cols);
  }
}

void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg,
               Precision prec) {
  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int i = 0; i < params.count(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = params.grad(i);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (size_t k = 0; k < p.size(); ++k) {
      double gk = g.data[k];
      if (!std::isfinite(gk))
        throw std::runtime_error("adam_step: non-finite gradient in parameter " +
                                 params.name(i));
      m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
      v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
      double mhat = m.data[k] / bc1;
      double vhat = v.data[k] / bc2;
      p.data[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    round_to_precision(p, prec);
  }
}

}  // namespace fairsr
