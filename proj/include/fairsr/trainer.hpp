#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fairsr/adam.hpp"
#include "fairsr/dataio.hpp"
#include "fairsr/eval.hpp"
#include "fairsr/model.hpp"
#include "fairsr/pref_graph.hpp"

namespace fairsr {

struct TrainConfig {
  int d = 32;
  int t = 5;
  int g = 3;
  int n_h = 16;
  int n_v = 16;
  int filter_width = 2;
  int cipl_layers = 2;
  int mlp_layers = 2;
  int tail_mlp_layers = 1;
  double lambda1 = 1.0;
  double lambda2 = 1e-6;
  int epsilon = 3;  // SR batches per FPGE batch
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 100;
  int patience = 10;  // early stopping on validation NDCG@eval_k
  int eval_every = 1;
  int eval_k = 10;
  unsigned long seed = 42;
  bool precision32 = false;
  bool shared_attention = false;
  std::vector<std::string> protected_attrs;  // empty = all attributes

  // Ablations (Table-style switches).
  bool no_fpge = false;
  bool no_pfg = false;
  bool no_conv = false;
  bool no_ra = false;
  bool random_sampling = false;
  bool no_pfg_and_fpge = false;

  void validate() const;
  ModelConfig model_config() const;
};

std::string serialize_config(const TrainConfig& cfg);
TrainConfig parse_config(const std::string& text);
TrainConfig load_config_file(const std::string& path);
uint64_t config_hash(const TrainConfig& cfg);

// Binary parameter snapshot with a versioned header carrying the config hash.
void save_checkpoint(const ParamStore& params, uint64_t cfg_hash,
                     const std::string& path);
void load_checkpoint(ParamStore& params, uint64_t cfg_hash, const std::string& path);

struct TraceEntry {
  long iteration;
  std::string phase;  // "sr", "fpge", or "val"
  double value;
};

struct TrainResult {
  std::vector<TraceEntry> trace;
  long sr_updates = 0;
  long fpge_updates = 0;
  int best_epoch = -1;
  double best_val_ndcg = 0.0;
  int epochs_run = 0;
};

// Joint trainer: epsilon SR mini-batch updates then one FPGE mini-batch
// update per outer iteration, Adam throughout, L2 over every parameter.
class Trainer {
 public:
  // Builds windows, the 6:2:2 split, training-interaction stats, and (when no
  // graph is supplied) the preference graph.
  Trainer(const TrainConfig& cfg, const Dataset& data,
          std::optional<PreferenceGraph> graph = std::nullopt);

  TrainResult train(const std::string& run_dir = "");

  // One outer iteration on explicit batches (epsilon SR + one FPGE);
  // exposed for schedule tests.
  void joint_iteration(TrainResult& result);

  // Loss surfaces for a fixed batch, either just evaluated or with gradients
  // left in the store (no parameter update). Both include the L2 term.
  double sr_loss_with_grads(const std::vector<BprTuple>& batch);
  double fpge_loss_with_grads(const TripletBatch& batch);
  double joint_loss_value(const std::vector<BprTuple>& sr_batch,
                          const TripletBatch& fpge_batch);

  std::vector<BprTuple> next_sr_batch();
  TripletBatch next_fpge_batch();

  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  const SplitSamples& splits() const { return splits_; }
  const PreferenceGraph& graph() const { return graph_; }
  const Dataset& data() const { return *data_; }
  const std::vector<std::vector<int>>& train_items_per_user() const {
    return train_items_;
  }
  const AdoptionStats& protected_stats() const { return protected_stats_; }
  const TrainConfig& config() const { return cfg_; }

  EvalRun evaluate(const std::vector<SequenceSample>& windows, int k) const;

 private:
  void sr_update(const std::vector<BprTuple>& batch, TrainResult& result);
  void fpge_update(const TripletBatch& batch, TrainResult& result);
  void add_l2_gradients();
  double current_val_ndcg() const;

  TrainConfig cfg_;
  const Dataset* data_;
  SplitSamples splits_;
  std::vector<std::vector<int>> train_items_;  // per user, deduplicated
  std::vector<std::vector<bool>> train_member_;
  PreferenceGraph graph_;
  AdoptionStats protected_stats_;  // joint group, for fairness reports
  std::vector<int> protected_relations_;
  std::vector<int> sampleable_items_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<AdamState> adam_;
  Rng rng_;

  struct SrExample {
    int sample;  // index into splits_.train
    int target;  // index into targets of that sample
  };
  std::vector<SrExample> sr_pool_;
  size_t sr_cursor_ = 0;
  long iteration_ = 0;
};

// Writes the loss trace as iteration \t phase \t value rows.
void write_trace(const std::string& path, const std::vector<TraceEntry>& trace);

// Full train+eval convenience used by the CLI and sweeps: trains, evaluates
// the test split, and returns the metric row.
struct RunOutcome {
  ReportRow row;
  TrainResult result;
};
RunOutcome run_experiment(const TrainConfig& cfg, const Dataset& data,
                          std::optional<PreferenceGraph> graph = std::nullopt,
                          const std::string& run_dir = "");

// Sweeps mirror the evaluation tables: sequence-length grid and ablations.
std::vector<ReportRow> sweep_length(const TrainConfig& base, const Dataset& data);
std::vector<ReportRow> sweep_ablation(const TrainConfig& base, const Dataset& data);

}  // namespace fairsr
