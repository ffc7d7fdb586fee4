#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "fairsr/dataio.hpp"
#include "fairsr/eval.hpp"
#include "fairsr/fairness.hpp"
#include "fairsr/pref_graph.hpp"
#include "fairsr/synth.hpp"
#include "fairsr/trainer.hpp"

namespace py = pybind11;
using namespace fairsr;

namespace {

TrainConfig config_from_kwargs(const py::dict& kw) {
  std::string text;
  for (const auto& item : kw) {
    std::string key = py::str(item.first);
    std::string value = py::str(item.second);
    if (py::isinstance<py::bool_>(item.second))
      value = item.second.cast<bool>() ? "1" : "0";
    if (py::isinstance<py::list>(item.second) ||
        py::isinstance<py::tuple>(item.second)) {
      value.clear();
      for (const auto& part : item.second.cast<py::sequence>()) {
        if (!value.empty()) value += ',';
        value += py::str(part).cast<std::string>();
      }
    }
    text += key + "=" + value + "\n";
  }
  return parse_config(text);
}

}  // namespace

PYBIND11_MODULE(_fairsr, m) {
  m.doc() = "fairness-aware sequential recommender core";

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("num_users", &Dataset::num_users)
      .def_readonly("num_items", &Dataset::num_items)
      .def_readonly("attribute_names", &Dataset::attribute_names)
      .def("__repr__", [](const Dataset& d) {
        return "Dataset(users=" + std::to_string(d.num_users) +
               ", items=" + std::to_string(d.num_items) +
               ", interactions=" + std::to_string(d.interactions.size()) + ")";
      });

  py::class_<SequenceSample>(m, "SequenceSample")
      .def_readonly("user", &SequenceSample::user)
      .def_readonly("input", &SequenceSample::input)
      .def_readonly("targets", &SequenceSample::targets)
      .def_readonly("window_id", &SequenceSample::window_id);

  m.def("load_dataset", &load_dataset, py::arg("dir"));
  m.def("write_dataset", &write_dataset, py::arg("data"), py::arg("dir"));
  m.def("ingest", &ingest, py::arg("interactions"), py::arg("attributes"),
        py::arg("properties") = std::string(), py::arg("threshold") = 0.0,
        py::arg("min_interactions") = 4);
  m.def("convert_movielens", &convert_movielens, py::arg("ratings"), py::arg("users"),
        py::arg("movies"), py::arg("out_dir"));
  m.def("make_windows", &make_windows, py::arg("data"), py::arg("t"), py::arg("g"));
  m.def(
      "split_windows",
      [](const std::vector<SequenceSample>& samples, double train, double val,
         double test) {
        SplitSamples s = split(samples, train, val, test);
        return py::make_tuple(s.train, s.val, s.test);
      },
      py::arg("samples"), py::arg("train") = 0.6, py::arg("val") = 0.2,
      py::arg("test") = 0.2);

  m.def("synth_toy_chain", [](int users, int items, int run_length, double noise,
                              unsigned long seed) {
        ToyChainSpec spec;
        spec.users = users;
        spec.items = items;
        spec.run_length = run_length;
        spec.noise = noise;
        spec.seed = seed;
        return synth_toy_chain(spec);
      },
      py::arg("users") = 200, py::arg("items") = 50, py::arg("run_length") = 17,
      py::arg("noise") = 0.0, py::arg("seed") = 7);
  m.def("synth_biased", [](int users, int items, unsigned long seed) {
        BiasedSpec spec;
        spec.users = users;
        spec.items = items;
        spec.seed = seed;
        return synth_biased(spec);
      },
      py::arg("users") = 150, py::arg("items") = 120, py::arg("seed") = 9);
  m.def("synth_clustered", [](int users, int items, unsigned long seed) {
        ClusteredSpec spec;
        spec.users = users;
        spec.items = items;
        spec.seed = seed;
        return synth_clustered(spec);
      },
      py::arg("users") = 600, py::arg("items") = 1200, py::arg("seed") = 11);

  py::class_<AdoptionStats>(m, "AdoptionStats")
      .def_readonly("values", &AdoptionStats::values)
      .def("proportions",
           [](const AdoptionStats& s, int item) {
             std::map<std::string, double> out;
             auto p = adoption_proportion(s, item);
             for (size_t z = 0; z < p.size(); ++z) out[s.values[z]] = p[z];
             return out;
           },
           py::arg("item"))
      .def("equality",
           [](const AdoptionStats& s, int item) { return adoption_equality(s, item); },
           py::arg("item"));

  m.def(
      "adoption_stats",
      [](const Dataset& data, const std::vector<std::vector<int>>& user_items,
         const std::vector<std::string>& attrs) {
        return build_adoption_stats(data, user_items, attrs);
      },
      py::arg("data"), py::arg("user_items"), py::arg("attributes"));
  m.def(
      "interaction_fairness",
      [](const AdoptionStats& stats, const std::vector<int>& items) {
        return interaction_fairness(stats, items);
      },
      py::arg("stats"), py::arg("items"));
  m.def(
      "dif_at_k",
      [](const std::vector<std::vector<int>>& rec,
         const std::vector<std::vector<int>>& gt, const AdoptionStats& stats, int k,
         int catalogue) { return dif_at_k(rec, gt, stats, k, catalogue).dif; },
      py::arg("recommended"), py::arg("ground_truth"), py::arg("stats"), py::arg("k"),
      py::arg("catalogue_size"));

  py::class_<PreferenceGraph>(m, "PreferenceGraph")
      .def_readonly("relation_names", &PreferenceGraph::relation_names)
      .def_property_readonly("num_entities",
                             [](const PreferenceGraph& g) { return g.entities.size(); })
      .def_property_readonly("num_triplets",
                             [](const PreferenceGraph& g) { return g.triplets.size(); })
      .def("sampling_distribution",
           [](const PreferenceGraph& g, int item,
              const std::vector<std::string>& protected_attrs) {
             std::vector<int> rels;
             for (const auto& a : protected_attrs) rels.push_back(g.relation_id(a));
             std::map<std::string, double> out;
             for (const auto& [t, p] : fair_sampling_distribution(g, item, rels))
               out[g.relation_names[t.relation] + ":" + g.entities[t.tail].name] += p;
             return out;
           },
           py::arg("item"), py::arg("protected_attributes"));

  m.def(
      "build_graph",
      [](const Dataset& data, int t, int g) {
        auto windows = make_windows(data, t, g);
        auto splits = split(windows);
        auto pairs = user_item_sets(splits.train, data.num_users);
        std::vector<AdoptionStats> stats;
        for (const auto& name : data.attribute_names)
          stats.push_back(build_adoption_stats(data, pairs, {name}));
        return build_graph(data, stats);
      },
      py::arg("data"), py::arg("t") = 5, py::arg("g") = 3);

  py::class_<ReportRow>(m, "ReportRow")
      .def_readonly("system", &ReportRow::system)
      .def_readonly("precision", &ReportRow::p)
      .def_readonly("recall", &ReportRow::r)
      .def_readonly("ndcg", &ReportRow::n)
      .def_readonly("dif", &ReportRow::dif)
      .def("__repr__", [](const ReportRow& r) {
        char buf[160];
        snprintf(buf, sizeof(buf), "ReportRow(%s P=%.4f R=%.4f N=%.4f DIF=%+.4f)",
                 r.system.c_str(), r.p, r.r, r.n, r.dif);
        return std::string(buf);
      });

  m.def(
      "train",
      [](const Dataset& data, const std::string& run_dir, const py::kwargs& kwargs) {
        TrainConfig cfg = config_from_kwargs(kwargs);
        RunOutcome out = run_experiment(cfg, data, std::nullopt, run_dir);
        return out.row;
      },
      py::arg("data"), py::arg("run_dir") = std::string(),
      "Train on a dataset and evaluate the held-out split; config fields as "
      "keyword arguments (d, t, g, lr, epochs, ...).");

  m.def(
      "popularity_metrics",
      [](const Dataset& data, int t, int g, int k) {
        auto windows = make_windows(data, t, g);
        auto splits = split(windows);
        EvalRun pop = popularity_baseline(data.num_items, splits.train, splits.test, k);
        AccuracyMetrics m2 = accuracy_metrics(pop);
        ReportRow row;
        row.system = "popularity";
        row.p = m2.precision;
        row.r = m2.recall;
        row.n = m2.ndcg;
        return row;
      },
      py::arg("data"), py::arg("t") = 5, py::arg("g") = 3, py::arg("k") = 10);

  m.attr("__version__") = "0.1.0";
}
