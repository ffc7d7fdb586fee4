#pragma once

#include <map>
#include <utility>
#include <vector>

#include "fairsr/graph.hpp"
#include "fairsr/pref_graph.hpp"
#include "fairsr/rng.hpp"

namespace fairsr {

struct ModelConfig {
  int d = 32;          // embedding dimension
  int t = 5;           // input window length
  int n_h = 16;        // horizontal filters
  int n_v = 16;        // vertical filters (n_h + n_v must equal d)
  int filter_width = 2;
  int cipl_layers = 2;      // cross&compress depth
  int mlp_layers = 2;       // user/relation MLP depth
  int tail_mlp_layers = 1;  // tail-prediction MLP depth
  bool shared_attention = false;  // one attention projection for all relations

  // Ablation switches.
  bool no_gating = false;               // -PFG
  bool no_conv = false;                 // -Conv
  bool no_relational_attention = false; // -RA
};

// Parameter ids into the shared store, grouped the way the architecture is.
struct SeqParams {
  int user_table = -1;  // d x M
  int item_table = -1;  // d x N
  int gate_w1 = -1;     // t x t
  int gate_w2 = -1;     // t x 1
  std::vector<int> horizontal;  // n_h filters, d x h each
  std::vector<int> vertical;    // n_v filters, 1 x t each
  std::vector<int> user_mlp_w;  // d x d per layer
  std::vector<int> user_mlp_b;  // d x 1 per layer
};

struct CiplParams {
  struct Layer {
    int w_vv, w_ev, w_ve, w_ee;  // d x 1 each
    int b_v, b_e;                // d x 1
  };
  std::vector<Layer> layers;
  int item_entity_table = -1;  // d x N base embeddings of item entities
  int default_entity = -1;     // d x 1, for items with no graph presence
};

struct FpgeParams {
  int tail_table = -1;          // d x (#non-item entities)
  std::vector<int> rel_mlp_w;   // first layer d x |R|, then d x d
  std::vector<int> rel_mlp_b;   // d x 1 per layer
  std::vector<int> attention_w; // d x d per relation (or a single shared one)
  std::vector<int> tail_mlp_w;  // first layer d x 2d, then d x d
  std::vector<int> tail_mlp_b;  // d x 1 per layer
};

// --- builders usable on their own (unit tested against the formulas) -------

namespace seqmodel {

// Stacked window embeddings S (d x t): column j = embedding of items[j].
int stacked_embeddings(Graph& g, const ParamStore& ps, int item_table,
                       const std::vector<int>& items);

// S ⊗ sigmoid(S W_g1 + u w_g2^T).
int gate(Graph& g, const ParamStore& ps, const SeqParams& sp, int user_col, int s_node);

// Per filter: tanh of the sliding-window inner products, max-pooled. n_h x 1.
int conv_horizontal(Graph& g, const ParamStore& ps, const SeqParams& sp, int sf_node);

// Per filter: time-weighted sum of the window columns, max over the d values.
// n_v x 1.
int conv_vertical(Graph& g, const ParamStore& ps, const SeqParams& sp, int sf_node);

// MLP with sigmoid activations applied to a column vector.
int mlp(Graph& g, const ParamStore& ps, const std::vector<int>& ws,
        const std::vector<int>& bs, int x_node);

// sum_j v_j^T vbar for the window's original item embeddings.
int item_item_score(Graph& g, int window_sum_node, int vbar_node);

}  // namespace seqmodel

namespace cipl {

// One cross&compress layer on column vectors v, e. Uses the rank-1 identity
// C w = v (e^T w), C^T w = e (v^T w) instead of materializing C = v e^T.
std::pair<int, int> cross_compress(Graph& g, const ParamStore& ps,
                                   const CiplParams::Layer& layer, int v_node,
                                   int e_node);

// The full stack; first feeds (v0, e0), returns (v_tilde, e_tilde).
std::pair<int, int> final_embeddings(Graph& g, const ParamStore& ps,
                                     const CiplParams& cp, int v0, int e0);

}  // namespace cipl

namespace fpge {

// Unnormalized relational attention (W_r t)^T tanh(W_r h + r).
int attention(Graph& g, int wr_node, int head_node, int rel_node, int tail_node);

}  // namespace fpge

// --- the assembled model ----------------------------------------------------

struct BprTuple {
  int user;
  std::vector<int> window;
  int positive;
  int negative;
};

class Model {
 public:
  Model(const ModelConfig& cfg, int num_users, int num_items,
        const PreferenceGraph& graph, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const SeqParams& seq() const { return seq_; }
  const CiplParams& cip() const { return cipl_; }
  const FpgeParams& fpge() const { return fpge_; }
  const PreferenceGraph& graph() const { return *graph_; }

  // SR-side graph builders.
  int build_user_vec(Graph& g, int user) const;                       // u-bar
  int build_seq_feature(Graph& g, int user, const std::vector<int>& window) const;
  int build_window_sum(Graph& g, const std::vector<int>& window) const;
  // Query q = u-bar + s + sum_j v_j; prediction is q^T vbar(candidate).
  int build_query(Graph& g, int user, const std::vector<int>& window) const;
  std::pair<int, int> build_cipl(Graph& g, int item) const;           // (vbar, etilde)
  int build_predict(Graph& g, int user, const std::vector<int>& window,
                    int candidate) const;

  // FPGE-side graph builders. `cache` deduplicates shared heads/relations
  // inside one batch graph.
  struct FpgeCache {
    std::map<int, int> head_agg;   // item -> aggregated head node
    std::map<int, int> relation;   // relation -> embedded relation node
    std::map<int, int> cipl_head;  // item -> etilde node
  };
  int build_relation_embed(Graph& g, int relation) const;
  int build_tail_embed(Graph& g, int entity) const;
  int build_head_agg(Graph& g, int item, FpgeCache& cache) const;
  int build_triplet_score(Graph& g, const Triplet& t, FpgeCache& cache) const;  // b
  int build_fpge_objective(Graph& g, const TripletBatch& batch, double lambda1) const;

  int build_bpr_loss(Graph& g, const std::vector<BprTuple>& batch) const;

  // Fast forward-only scoring used by ranking and validation. Matches the
  // graph path exactly (tested).
  std::vector<double> cipl_item_embedding(int item) const;  // vbar column
  std::vector<std::vector<double>> all_item_embeddings() const;
  std::vector<double> query_vector(int user, const std::vector<int>& window) const;
  double predict_fast(int user, const std::vector<int>& window, int candidate) const;

 private:
  int attention_w_node(Graph& g, int relation) const;

  ModelConfig cfg_;
  ParamStore params_;
  SeqParams seq_;
  CiplParams cipl_;
  FpgeParams fpge_;
  const PreferenceGraph* graph_;
  int num_users_ = 0;
  int num_items_ = 0;
};

}  // namespace fairsr
