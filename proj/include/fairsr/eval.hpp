#pragma once

#include <string>
#include <vector>

#include "fairsr/dataio.hpp"
#include "fairsr/fairness.hpp"
#include "fairsr/model.hpp"

namespace fairsr {

// One evaluated unit: a held-out window with its ranked top-k list.
struct EvalRun {
  int k = 0;
  std::vector<SequenceSample> units;
  std::vector<std::vector<int>> topk;  // per unit, no duplicates, |list| = k
};

// Ranks the full catalogue for every window, excluding the window user's
// training-interacted items. Descending score, ties by item index ascending.
EvalRun rank_topk(const Model& model, const std::vector<SequenceSample>& windows,
                  const std::vector<std::vector<int>>& train_items_per_user, int k);

// Same shape as rank_topk but with one global list (most-interacted training
// items) repeated for every unit. No per-user exclusion: the baseline is a
// single static ranking.
EvalRun popularity_baseline(int num_items,
                            const std::vector<SequenceSample>& train_windows,
                            const std::vector<SequenceSample>& eval_windows, int k);

struct AccuracyMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

// Macro-averaged P@k, R@k, N@k with binary relevance, log2 discounts, and
// IDCG over min(k, |targets|).
AccuracyMetrics accuracy_metrics(const EvalRun& run);

// Per-unit metrics for a single list against a target set.
double precision_at_k(const std::vector<int>& ranked, const std::vector<int>& targets,
                      int k);
double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& targets,
                   int k);
double ndcg_at_k(const std::vector<int>& ranked, const std::vector<int>& targets,
                 int k);

// DIF of an evaluation run against its ground-truth windows.
FairnessReport fairness_of_run(const EvalRun& run, const AdoptionStats& stats,
                               int catalogue_size);

struct ReportRow {
  std::string system;
  double p = 0.0, r = 0.0, n = 0.0, dif = 0.0;
};

// system \t P@k \t R@k \t N@k \t DIF@k
void write_report(const std::string& path, int k, const std::vector<ReportRow>& rows);

}  // namespace fairsr
