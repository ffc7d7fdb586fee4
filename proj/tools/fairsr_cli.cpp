#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "fairsr/dataio.hpp"
#include "fairsr/eval.hpp"
#include "fairsr/pref_graph.hpp"
#include "fairsr/synth.hpp"
#include "fairsr/trainer.hpp"
#include "fairsr/tsv.hpp"

using namespace fairsr;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::vector<AdoptionStats> per_attribute_train_stats(const Dataset& data,
                                                     const TrainConfig& cfg) {
  auto windows = make_windows(data, cfg.t, cfg.g);
  auto splits = split(windows);
  auto pairs = user_item_sets(splits.train, data.num_users);
  std::vector<AdoptionStats> stats;
  for (const auto& name : data.attribute_names)
    stats.push_back(build_adoption_stats(data, pairs, {name}));
  return stats;
}

struct RunMeta {
  std::string data_dir;
  std::string graph_path;  // empty = graph built internally
};

void write_meta(const std::string& run_dir, const RunMeta& meta) {
  std::ofstream out(run_dir + "/run_meta.txt");
  out << "data=" << meta.data_dir << "\ngraph=" << meta.graph_path << "\n";
}

RunMeta read_meta(const std::string& run_dir) {
  std::ifstream in(run_dir + "/run_meta.txt");
  if (!in) throw std::runtime_error("missing " + run_dir + "/run_meta.txt");
  RunMeta meta;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("data=", 0) == 0) meta.data_dir = line.substr(5);
    if (line.rfind("graph=", 0) == 0) meta.graph_path = line.substr(6);
  }
  return meta;
}

// Rebuilds the trainer exactly as `train` did and restores the checkpoint.
std::unique_ptr<Trainer> restore_run(const std::string& run_dir, Dataset& data_out) {
  RunMeta meta = read_meta(run_dir);
  TrainConfig cfg = load_config_file(run_dir + "/config.txt");
  data_out = load_dataset(meta.data_dir);
  std::optional<PreferenceGraph> graph;
  if (!meta.graph_path.empty()) graph = load_graph(meta.graph_path, data_out);
  auto trainer = std::make_unique<Trainer>(cfg, data_out, std::move(graph));
  load_checkpoint(trainer->model().params(), config_hash(cfg),
                  run_dir + "/model.ckpt");
  return trainer;
}

void write_cdf(const std::string& path,
               const std::vector<std::pair<double, double>>& series) {
  TsvWriter w(path);
  w.row({"if_value", "cumulative_probability"});
  char a[64], b[64];
  for (const auto& [v, p] : series) {
    snprintf(a, sizeof(a), "%.6f", v);
    snprintf(b, sizeof(b), "%.6f", p);
    w.row({a, b});
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness-aware sequential recommender"};
  app.require_subcommand(1);

  std::string in_inter, in_attr, in_prop, out_dir;
  double threshold = 0.0;
  int min_inter = 4;
  auto* ingest_cmd = app.add_subcommand("ingest", "read TSVs into a dense snapshot");
  ingest_cmd->add_option("--interactions", in_inter)->required();
  ingest_cmd->add_option("--attributes", in_attr)->required();
  ingest_cmd->add_option("--properties", in_prop);
  ingest_cmd->add_option("--threshold", threshold);
  ingest_cmd->add_option("--min-interactions", min_inter);
  ingest_cmd->add_option("--out", out_dir)->required();

  std::string ml_ratings, ml_users, ml_movies, ml_out;
  auto* ml_cmd = app.add_subcommand("convert-movielens",
                                    "convert ::-delimited dumps to the TSV layout");
  ml_cmd->add_option("--ratings", ml_ratings)->required();
  ml_cmd->add_option("--users", ml_users)->required();
  ml_cmd->add_option("--movies", ml_movies)->required();
  ml_cmd->add_option("--out", ml_out)->required();

  std::string bg_data, bg_out, bg_protected;
  int bg_t = 5, bg_g = 3;
  auto* bg_cmd = app.add_subcommand("build-graph", "construct the preference graph");
  bg_cmd->add_option("--data", bg_data)->required();
  bg_cmd->add_option("--protected", bg_protected);
  bg_cmd->add_option("--t", bg_t);
  bg_cmd->add_option("--g", bg_g);
  bg_cmd->add_option("--out", bg_out)->required();

  std::string sy_kind = "toy-chain", sy_out;
  int sy_users = 0, sy_items = 0;
  unsigned long sy_seed = 0;
  auto* sy_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  sy_cmd->add_option("--kind", sy_kind)
      ->check(CLI::IsMember({"toy-chain", "biased", "clustered"}));
  sy_cmd->add_option("--users", sy_users);
  sy_cmd->add_option("--items", sy_items);
  sy_cmd->add_option("--seed", sy_seed);
  sy_cmd->add_option("--out", sy_out)->required();

  std::string tr_data, tr_graph, tr_config, tr_out;
  auto* tr_cmd = app.add_subcommand("train", "joint SR + preference-graph training");
  tr_cmd->add_option("--data", tr_data)->required();
  tr_cmd->add_option("--graph", tr_graph);
  tr_cmd->add_option("--config", tr_config);
  tr_cmd->add_option("--out", tr_out)->required();

  std::string ev_run, ev_out;
  int ev_k = 10;
  bool ev_pop = true;
  auto* ev_cmd = app.add_subcommand("eval", "rank the test split and report metrics");
  ev_cmd->add_option("--run", ev_run)->required();
  ev_cmd->add_option("--k", ev_k);
  ev_cmd->add_option("--out", ev_out)->required();
  ev_cmd->add_flag("--with-popularity,!--no-popularity", ev_pop);

  std::string fr_run, fr_attr, fr_out;
  int fr_k = 10;
  auto* fr_cmd = app.add_subcommand("fairness-report",
                                    "per-unit IF/DIF table plus IF CDF series");
  fr_cmd->add_option("--run", fr_run)->required();
  fr_cmd->add_option("--attribute", fr_attr)->required();
  fr_cmd->add_option("--k", fr_k);
  fr_cmd->add_option("--out", fr_out)->required();

  std::string sw_data, sw_axis = "length", sw_config, sw_out;
  auto* sw_cmd = app.add_subcommand("sweep", "sequence-length or ablation grid");
  sw_cmd->add_option("--data", sw_data)->required();
  sw_cmd->add_option("--axis", sw_axis)->check(CLI::IsMember({"length", "ablation"}));
  sw_cmd->add_option("--config", sw_config);
  sw_cmd->add_option("--out", sw_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      Dataset d = ingest(in_inter, in_attr, in_prop, threshold, min_inter);
      write_dataset(d, out_dir);
      std::printf("ingested %d users, %d items, %zu interactions -> %s\n",
                  d.num_users, d.num_items, d.interactions.size(), out_dir.c_str());
    } else if (*ml_cmd) {
      convert_movielens(ml_ratings, ml_users, ml_movies, ml_out);
      std::printf("converted MovieLens dumps -> %s\n", ml_out.c_str());
    } else if (*bg_cmd) {
      Dataset d = load_dataset(bg_data);
      TrainConfig cfg;
      cfg.t = bg_t;
      cfg.g = bg_g;
      auto stats = per_attribute_train_stats(d, cfg);
      PreferenceGraph g = build_graph(d, stats);
      if (!bg_protected.empty())
        for (const auto& name : split_csv(bg_protected)) g.relation_id(name);
      write_graph(g, bg_out);
      std::printf("graph: %zu entities, %zu triplets -> %s\n", g.entities.size(),
                  g.triplets.size(), bg_out.c_str());
    } else if (*sy_cmd) {
      Dataset d;
      if (sy_kind == "toy-chain") {
        ToyChainSpec spec;
        if (sy_users) spec.users = sy_users;
        if (sy_items) spec.items = sy_items;
        if (sy_seed) spec.seed = sy_seed;
        d = synth_toy_chain(spec);
      } else if (sy_kind == "biased") {
        BiasedSpec spec;
        if (sy_users) spec.users = sy_users;
        if (sy_items) spec.items = sy_items;
        if (sy_seed) spec.seed = sy_seed;
        d = synth_biased(spec);
      } else {
        ClusteredSpec spec;
        if (sy_users) spec.users = sy_users;
        if (sy_items) spec.items = sy_items;
        if (sy_seed) spec.seed = sy_seed;
        d = synth_clustered(spec);
      }
      write_dataset(d, sy_out);
      std::printf("synth %s: %d users, %d items, %zu interactions -> %s\n",
                  sy_kind.c_str(), d.num_users, d.num_items, d.interactions.size(),
                  sy_out.c_str());
    } else if (*tr_cmd) {
      Dataset d = load_dataset(tr_data);
      TrainConfig cfg;
      if (!tr_config.empty()) cfg = load_config_file(tr_config);
      std::optional<PreferenceGraph> graph;
      if (!tr_graph.empty()) graph = load_graph(tr_graph, d);
      Trainer trainer(cfg, d, std::move(graph));
      TrainResult result = trainer.train(tr_out);
      write_meta(tr_out, {tr_data, tr_graph});
      std::printf("trained %d epochs (%ld SR / %ld FPGE updates), best val N@%d %.4f\n",
                  result.epochs_run, result.sr_updates, result.fpge_updates,
                  cfg.eval_k, result.best_val_ndcg);
    } else if (*ev_cmd) {
      Dataset d;
      auto trainer = restore_run(ev_run, d);
      const auto& test = trainer->splits().test;
      EvalRun run = trainer->evaluate(test, ev_k);
      AccuracyMetrics m = accuracy_metrics(run);
      FairnessReport f = fairness_of_run(run, trainer->protected_stats(), d.num_items);
      std::vector<ReportRow> rows = {{"fairsr", m.precision, m.recall, m.ndcg, f.dif}};
      if (ev_pop) {
        EvalRun pop =
            popularity_baseline(d.num_items, trainer->splits().train, test, ev_k);
        AccuracyMetrics pm = accuracy_metrics(pop);
        FairnessReport pf =
            fairness_of_run(pop, trainer->protected_stats(), d.num_items);
        rows.push_back({"popularity", pm.precision, pm.recall, pm.ndcg, pf.dif});
      }
      write_report(ev_out, ev_k, rows);
      for (const auto& r : rows)
        std::printf("%-12s P@%d=%.4f R@%d=%.4f N@%d=%.4f DIF@%d=%+.4f\n",
                    r.system.c_str(), ev_k, r.p, ev_k, r.r, ev_k, r.n, ev_k, r.dif);
    } else if (*fr_cmd) {
      Dataset d;
      auto trainer = restore_run(fr_run, d);
      auto attrs = split_csv(fr_attr);
      AdoptionStats stats =
          build_adoption_stats(d, trainer->train_items_per_user(), attrs);
      const auto& test = trainer->splits().test;
      EvalRun run = trainer->evaluate(test, fr_k);
      FairnessReport f = fairness_of_run(run, stats, d.num_items);
      EvalRun pop =
          popularity_baseline(d.num_items, trainer->splits().train, test, fr_k);
      FairnessReport pf = fairness_of_run(pop, stats, d.num_items);

      std::filesystem::create_directories(fr_out);
      {
        TsvWriter w(fr_out + "/per_unit.tsv");
        w.row({"unit", "user", "if_recommended", "if_ground_truth", "dif"});
        char b1[64], b2[64], b3[64];
        for (size_t i = 0; i < run.units.size(); ++i) {
          snprintf(b1, sizeof(b1), "%.6f", f.if_recommended[i]);
          snprintf(b2, sizeof(b2), "%.6f", f.if_ground_truth[i]);
          snprintf(b3, sizeof(b3), "%.6f",
                   f.if_recommended[i] - f.if_ground_truth[i]);
          w.row({std::to_string(i), std::to_string(run.units[i].user), b1, b2, b3});
        }
      }
      write_cdf(fr_out + "/cdf_fairsr.tsv", f.cdf_recommended);
      write_cdf(fr_out + "/cdf_ground_truth.tsv", f.cdf_ground_truth);
      write_cdf(fr_out + "/cdf_popularity.tsv", pf.cdf_recommended);
      std::printf("DIF@%d = %+.4f over %zu units (popularity %+.4f) -> %s\n", fr_k,
                  f.dif, run.units.size(), pf.dif, fr_out.c_str());
      if (f.items_without_stats > 0)
        std::fprintf(stderr,
                     "warning: %d list items had no training interactions "
                     "(counted as equality 0)\n",
                     f.items_without_stats);
    } else if (*sw_cmd) {
      Dataset d = load_dataset(sw_data);
      TrainConfig cfg;
      if (!sw_config.empty()) cfg = load_config_file(sw_config);
      auto rows = sw_axis == "length" ? sweep_length(cfg, d) : sweep_ablation(cfg, d);
      write_report(sw_out, cfg.eval_k, rows);
      for (const auto& r : rows)
        std::printf("%-12s P=%.4f R=%.4f N=%.4f DIF=%+.4f\n", r.system.c_str(), r.p,
                    r.r, r.n, r.dif);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
