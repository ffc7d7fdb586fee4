#pragma once

#include "fairsr/dataio.hpp"

namespace fairsr {

// Deterministic successor pattern: each user walks a run of consecutive item
// ids (item i followed by i+1, wrapping at the catalogue end), with an
// optional per-position noise rate that substitutes a uniformly random item.
struct ToyChainSpec {
  int users = 200;
  int items = 50;
  int run_length = 17;
  double noise = 0.0;
  unsigned long seed = 7;
};
Dataset synth_toy_chain(const ToyChainSpec& spec);

// Half the catalogue gender-pure with age-skewed audiences, half balanced;
// users preferentially re-consume a personal bubble of their own gender's
// popular items, explore the same pool, and occasionally visit balanced
// items. The remainder share 1 - own_pure - other_pure goes to balanced
// items.
struct BiasedSpec {
  int users = 150;
  int items = 200;
  int seq_length = 17;
  double own_pure = 0.55;   // bubble re-consumption share
  double other_pure = 0.25; // own-pool exploration share
  unsigned long seed = 9;
};
Dataset synth_biased(const BiasedSpec& spec);

// Desk-scale surrogate with clustered taste: items carry genre properties
// aligned with latent clusters, users hold attribute-correlated cluster
// preferences, and sequences follow within-cluster rings with popularity
// skew. Stands in when the public rating dumps are not on disk.
struct ClusteredSpec {
  int users = 600;
  int items = 1200;
  int clusters = 12;
  int seq_min = 16;
  int seq_max = 28;
  unsigned long seed = 11;
};
Dataset synth_clustered(const ClusteredSpec& spec);

}  // namespace fairsr
