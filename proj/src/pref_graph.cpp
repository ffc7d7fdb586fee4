#include "fairsr/pref_graph.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>

#include "fairsr/tsv.hpp"

namespace fairsr {

namespace {

uint64_t edge_key(int head, int relation, int tail) {
  return (static_cast<uint64_t>(head) << 40) ^ (static_cast<uint64_t>(relation) << 28) ^
         static_cast<uint64_t>(tail);
}

}  // namespace

int PreferenceGraph::relation_id(const std::string& name) const {
  for (size_t r = 0; r < relation_names.size(); ++r)
    if (relation_names[r] == name) return static_cast<int>(r);
  throw std::invalid_argument("unknown relation " + name);
}

int PreferenceGraph::tail_entity(int relation, const std::string& value) const {
  for (int e : relation_tails[relation])
    if (entities[e].name == value) return e;
  throw std::invalid_argument("unknown tail " + value + " for relation " +
                              relation_names[relation]);
}

bool PreferenceGraph::connected(int head, int relation, int tail) const {
  return edge_keys_.count(edge_key(head, relation, tail)) > 0;
}

std::optional<std::string> major_attribute_value(const AdoptionStats& stats,
                                                 int item) {
  if (stats.interactors[item] == 0) return std::nullopt;
  int best = -1;
  for (size_t z = 0; z < stats.values.size(); ++z) {
    if (stats.counts[item][z] == 0) continue;
    if (best < 0 || stats.counts[item][z] > stats.counts[item][best]) best = static_cast<int>(z);
    // Equal counts keep the earlier index; values are sorted, so ties break
    // lexicographically.
  }
  return stats.values[best];
}

PreferenceGraph build_graph(const Dataset& data,
                            const std::vector<AdoptionStats>& per_attribute_stats) {
  PreferenceGraph g;
  g.num_items = data.num_items;

  for (const auto& s : per_attribute_stats) {
    if (s.attrs.size() != 1)
      throw std::invalid_argument("build_graph: stats must be per single attribute");
    g.relation_names.push_back(s.attrs[0]);
    g.relation_is_attribute.push_back(true);
  }
  std::set<std::string> prop_names;
  for (const auto& props : data.item_props)
    for (const auto& [name, value] : props) prop_names.insert(name);
  for (const auto& name : prop_names) {
    g.relation_names.push_back(name);
    g.relation_is_attribute.push_back(false);
  }
  int num_relations = static_cast<int>(g.relation_names.size());

  // Item entities occupy [0, num_items).
  for (int i = 0; i < data.num_items; ++i)
    g.entities.push_back({EntityKind::kItem, -1, data.item_ids[i]});

  g.relation_tails.resize(num_relations);
  std::vector<std::map<std::string, int>> tail_index(num_relations);
  auto tail_of = [&](int rel, const std::string& value) {
    auto [it, fresh] = tail_index[rel].emplace(value, -1);
    if (fresh) {
      it->second = static_cast<int>(g.entities.size());
      g.entities.push_back({g.relation_is_attribute[rel] ? EntityKind::kAttrValue
                                                         : EntityKind::kPropValue,
                            rel, value});
      g.relation_tails[rel].push_back(it->second);
    }
    return it->second;
  };

  // Attribute-value entities for every observed value, so negative sampling
  // has the full family even when only one value ever wins the argmax.
  for (int r = 0; r < static_cast<int>(per_attribute_stats.size()); ++r)
    for (const auto& v : per_attribute_stats[r].values) tail_of(r, v);

  g.head_triplets.resize(data.num_items);
  auto add_triplet = [&](int head, int rel, int tail) {
    g.head_triplets[head].push_back(static_cast<int>(g.triplets.size()));
    g.triplets.push_back({head, rel, tail});
    g.edge_keys_.insert(edge_key(head, rel, tail));
  };

  for (int r = 0; r < static_cast<int>(per_attribute_stats.size()); ++r) {
    const auto& stats = per_attribute_stats[r];
    for (int item = 0; item < data.num_items; ++item) {
      auto z = major_attribute_value(stats, item);
      if (!z) continue;  // items without interactors get no attribute edge
      add_triplet(item, r, tail_of(r, *z));
    }
  }
  for (int item = 0; item < data.num_items; ++item)
    for (const auto& [name, value] : data.item_props[item]) {
      int rel = g.relation_id(name);
      add_triplet(item, rel, tail_of(rel, value));
    }

  // Nonzero interaction counts per (item, attribute value) drive the
  // fairness-aware sampler.
  g.attr_counts.resize(num_relations);
  for (int r = 0; r < static_cast<int>(per_attribute_stats.size()); ++r) {
    const auto& stats = per_attribute_stats[r];
    g.attr_counts[r].resize(data.num_items);
    for (int item = 0; item < data.num_items; ++item)
      for (size_t z = 0; z < stats.values.size(); ++z)
        if (stats.counts[item][z] > 0)
          g.attr_counts[r][item].emplace_back(tail_of(r, stats.values[z]),
                                              stats.counts[item][z]);
  }
  return g;
}

std::vector<std::pair<Triplet, double>> fair_sampling_distribution(
    const PreferenceGraph& graph, int item,
    const std::vector<int>& protected_relations) {
  std::vector<std::pair<Triplet, double>> attr_pool;
  double recip_total = 0.0;
  for (int r : protected_relations) {
    if (!graph.relation_is_attribute[r])
      throw std::invalid_argument("protected relation is not an attribute");
    for (const auto& [tail, count] : graph.attr_counts[r][item]) {
      double w = 1.0 / static_cast<double>(count);
      attr_pool.push_back({{item, r, tail}, w});
      recip_total += w;
    }
  }
  std::vector<std::pair<Triplet, double>> prop_pool;
  for (int ti : graph.head_triplets[item]) {
    const Triplet& t = graph.triplets[ti];
    if (!graph.relation_is_attribute[t.relation]) prop_pool.push_back({t, 1.0});
  }

  size_t na = attr_pool.size(), np = prop_pool.size();
  std::vector<std::pair<Triplet, double>> out;
  if (na + np == 0) {
    // No candidates at all: fall back to uniform over the static edges.
    for (int ti : graph.head_triplets[item])
      out.push_back({graph.triplets[ti],
                     1.0 / static_cast<double>(graph.head_triplets[item].size())});
    return out;
  }
  double attr_mass = static_cast<double>(na) / static_cast<double>(na + np);
  double prop_mass = static_cast<double>(np) / static_cast<double>(na + np);
  for (auto& [t, w] : attr_pool) out.push_back({t, attr_mass * w / recip_total});
  for (auto& [t, w] : prop_pool)
    out.push_back({t, prop_mass * w / static_cast<double>(np)});
  return out;
}

std::vector<Triplet> fair_sample_positives(const PreferenceGraph& graph, int item,
                                           const std::vector<int>& protected_relations,
                                           int count, Rng& rng) {
  auto dist = fair_sampling_distribution(graph, item, protected_relations);
  std::vector<Triplet> out;
  if (dist.empty()) return out;
  std::vector<double> weights;
  weights.reserve(dist.size());
  for (const auto& [t, p] : dist) weights.push_back(p);
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(dist[rand_weighted(rng, weights)].first);
  return out;
}

std::vector<Triplet> random_sample_positives(const PreferenceGraph& graph, int item,
                                             int count, Rng& rng) {
  const auto& edges = graph.head_triplets[item];
  std::vector<Triplet> out;
  if (edges.empty()) return out;
  out.reserve(count);
  for (int i = 0; i < count; ++i)
    out.push_back(graph.triplets[edges[rand_index(rng, edges.size())]]);
  return out;
}

TripletBatch sample_negatives(const PreferenceGraph& graph,
                              const std::vector<Triplet>& positives, Rng& rng,
                              std::vector<int>* skipped) {
  TripletBatch batch;
  for (size_t i = 0; i < positives.size(); ++i) {
    const Triplet& pos = positives[i];
    std::vector<int> pool;
    for (int tail : graph.relation_tails[pos.relation])
      if (!graph.connected(pos.head, pos.relation, tail)) pool.push_back(tail);
    if (pool.empty()) {
      if (skipped) skipped->push_back(static_cast<int>(i));
      continue;
    }
    batch.positives.push_back(pos);
    batch.negatives.push_back({pos.head, pos.relation,
                               pool[rand_index(rng, pool.size())]});
  }
  return batch;
}

void write_graph(const PreferenceGraph& graph, const std::string& path) {
  {
    TsvWriter w(path);
    for (const auto& t : graph.triplets)
      w.row({std::to_string(t.head), graph.relation_names[t.relation],
             std::to_string(t.tail)});
  }
  {
    TsvWriter w(path + ".dict.tsv");
    for (size_t e = 0; e < graph.entities.size(); ++e) {
      const Entity& ent = graph.entities[e];
      const char* kind = ent.kind == EntityKind::kItem ? "item"
                         : ent.kind == EntityKind::kAttrValue ? "attr_value"
                                                              : "prop_value";
      w.row({std::to_string(e), kind,
             ent.relation >= 0 ? graph.relation_names[ent.relation] : "-", ent.name});
    }
  }
}

PreferenceGraph load_graph(const std::string& path, const Dataset& data) {
  PreferenceGraph g;
  g.num_items = data.num_items;

  auto dict = read_tsv(path + ".dict.tsv");
  g.entities.resize(dict.size());
  std::map<std::string, int> rel_ids;
  for (const auto& row : dict) {
    if (row.size() < 4) throw std::runtime_error(path + ".dict.tsv: bad row");
    int id = std::stoi(row[0]);
    Entity& e = g.entities[id];
    e.kind = row[1] == "item" ? EntityKind::kItem
             : row[1] == "attr_value" ? EntityKind::kAttrValue
                                      : EntityKind::kPropValue;
    e.name = row[3];
    if (e.kind != EntityKind::kItem) {
      auto [it, fresh] = rel_ids.emplace(row[2], -1);
      if (fresh) {
        it->second = static_cast<int>(g.relation_names.size());
        g.relation_names.push_back(row[2]);
        g.relation_is_attribute.push_back(e.kind == EntityKind::kAttrValue);
        g.relation_tails.emplace_back();
      }
      e.relation = it->second;
      g.relation_tails[e.relation].push_back(id);
    }
  }
  g.head_triplets.resize(g.num_items);
  for (const auto& row : read_tsv(path)) {
    if (row.size() < 3) throw std::runtime_error(path + ": bad triplet row");
    int head = std::stoi(row[0]);
    int rel = rel_ids.at(row[1]);
    int tail = std::stoi(row[2]);
    g.head_triplets.at(head).push_back(static_cast<int>(g.triplets.size()));
    g.triplets.push_back({head, rel, tail});
    g.edge_keys_.insert(edge_key(head, rel, tail));
  }
  g.attr_counts.resize(g.relation_names.size());
  for (auto& per_item : g.attr_counts) per_item.resize(g.num_items);
  return g;
}

void attach_sampling_counts(PreferenceGraph& graph,
                            const std::vector<AdoptionStats>& per_attribute_stats) {
  for (const auto& stats : per_attribute_stats) {
    int rel = graph.relation_id(stats.attrs.at(0));
    auto& per_item = graph.attr_counts[rel];
    per_item.assign(graph.num_items, {});
    for (int item = 0; item < graph.num_items; ++item)
      for (size_t z = 0; z < stats.values.size(); ++z)
        if (stats.counts[item][z] > 0)
          per_item[item].emplace_back(graph.tail_entity(rel, stats.values[z]),
                                      stats.counts[item][z]);
  }
}

}  // namespace fairsr
