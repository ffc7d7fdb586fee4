#pragma once

#include <vector>

#include "fairsr/graph.hpp"
#include "fairsr/tensor.hpp"

namespace fairsr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers per parameter plus the shared step counter.
struct AdamState {
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  explicit AdamState(const ParamStore& params);
};

// One Adam update over every registered parameter using the gradients
// currently held in the store. Throws on non-finite gradients, naming the
// parameter.
void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg,
               Precision prec = Precision::f64);

}  // namespace fairsr
