#include "fairsr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "fairsr/tsv.hpp"

namespace fairsr {

EvalRun rank_topk(const Model& model, const std::vector<SequenceSample>& windows,
                  const std::vector<std::vector<int>>& train_items_per_user, int k) {
  EvalRun run;
  run.k = k;
  run.units = windows;
  auto vbar = model.all_item_embeddings();
  int n = static_cast<int>(vbar.size());

  std::vector<int> order(n);
  std::vector<double> scores(n);
  for (const auto& w : windows) {
    auto q = model.query_vector(w.user, w.input);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (size_t d = 0; d < q.size(); ++d) s += q[d] * vbar[i][d];
      scores[i] = s;
    }
    std::unordered_set<int> excluded;
    if (w.user < static_cast<int>(train_items_per_user.size()))
      excluded.insert(train_items_per_user[w.user].begin(),
                      train_items_per_user[w.user].end());
    order.clear();
    for (int i = 0; i < n; ++i)
      if (!excluded.count(i)) order.push_back(i);
    if (static_cast<int>(order.size()) < k)
      throw std::runtime_error("rank_topk: fewer than k eligible items");
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        if (scores[a] != scores[b]) return scores[a] > scores[b];
                        return a < b;
                      });
    run.topk.emplace_back(order.begin(), order.begin() + k);
  }
  return run;
}

EvalRun popularity_baseline(int num_items,
                            const std::vector<SequenceSample>& train_windows,
                            const std::vector<SequenceSample>& eval_windows, int k) {
  // Distinct (user, item) training interactions per item.
  std::set<std::pair<int, int>> pairs;
  for (const auto& w : train_windows) {
    for (int it : w.input) pairs.emplace(w.user, it);
    for (int it : w.targets) pairs.emplace(w.user, it);
  }
  std::vector<int> count(num_items, 0);
  for (const auto& [u, it] : pairs) {
    (void)u;
    count[it]++;
  }

  std::vector<int> order(num_items);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (count[a] != count[b]) return count[a] > count[b];
    return a < b;
  });
  if (num_items < k)
    throw std::runtime_error("popularity_baseline: fewer than k items");
  std::vector<int> top(order.begin(), order.begin() + k);

  EvalRun run;
  run.k = k;
  run.units = eval_windows;
  run.topk.assign(eval_windows.size(), top);
  return run;
}

namespace {

std::set<int> target_set(const std::vector<int>& targets) {
  return std::set<int>(targets.begin(), targets.end());
}

}  // namespace

double precision_at_k(const std::vector<int>& ranked, const std::vector<int>& targets,
                      int k) {
  auto want = target_set(targets);
  int hits = 0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
    if (want.count(ranked[i])) ++hits;
  return static_cast<double>(hits) / k;
}

double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& targets,
                   int k) {
  auto want = target_set(targets);
  if (want.empty()) throw std::invalid_argument("recall_at_k: empty target set");
  int hits = 0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
    if (want.count(ranked[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(want.size());
}

double ndcg_at_k(const std::vector<int>& ranked, const std::vector<int>& targets,
                 int k) {
  auto want = target_set(targets);
  if (want.empty()) throw std::invalid_argument("ndcg_at_k: empty target set");
  double dcg = 0.0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
    if (want.count(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double idcg = 0.0;
  int ideal = std::min<int>(k, static_cast<int>(want.size()));
  for (int i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

AccuracyMetrics accuracy_metrics(const EvalRun& run) {
  AccuracyMetrics m;
  if (run.units.empty()) return m;
  for (size_t i = 0; i < run.units.size(); ++i) {
    const auto& targets = run.units[i].targets;
    m.precision += precision_at_k(run.topk[i], targets, run.k);
    m.recall += recall_at_k(run.topk[i], targets, run.k);
    m.ndcg += ndcg_at_k(run.topk[i], targets, run.k);
  }
  double n = static_cast<double>(run.units.size());
  m.precision /= n;
  m.recall /= n;
  m.ndcg /= n;
  return m;
}

FairnessReport fairness_of_run(const EvalRun& run, const AdoptionStats& stats,
                               int catalogue_size) {
  std::vector<std::vector<int>> gt;
  gt.reserve(run.units.size());
  for (const auto& u : run.units) gt.push_back(u.targets);
  return dif_at_k(run.topk, gt, stats, run.k, catalogue_size);
}

void write_report(const std::string& path, int k, const std::vector<ReportRow>& rows) {
  TsvWriter w(path);
  std::string ks = std::to_string(k);
  w.row({"system", "P@" + ks, "R@" + ks, "N@" + ks, "DIF@" + ks});
  char buf[64];
  auto fmt = [&](double v) {
    snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) w.row({r.system, fmt(r.p), fmt(r.r), fmt(r.n), fmt(r.dif)});
}

}  // namespace fairsr
