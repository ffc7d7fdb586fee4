#pragma once

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "fairsr/dataio.hpp"
#include "fairsr/fairness.hpp"
#include "fairsr/rng.hpp"

namespace fairsr {

enum class EntityKind { kItem, kAttrValue, kPropValue };

struct Entity {
  EntityKind kind;
  int relation = -1;  // owning relation for attr/prop value entities
  std::string name;   // original item id, or the attribute/property value
};

struct Triplet {
  int head;      // item entity id (== item index)
  int relation;  // relation id
  int tail;      // entity id
  bool operator==(const Triplet&) const = default;
};

// Tri-partite store: item entities, user-attribute-value entities, and
// item-property-value entities. Heads are always items; one relation per
// attribute name and per property name. Items keep exactly one static edge
// per attribute (the major value) and any number of property edges.
struct PreferenceGraph {
  int num_items = 0;
  std::vector<std::string> relation_names;  // attributes first, then properties
  std::vector<bool> relation_is_attribute;
  std::vector<Entity> entities;  // items occupy ids [0, num_items)
  std::vector<Triplet> triplets;

  std::vector<std::vector<int>> relation_tails;  // tail family per relation
  std::vector<std::vector<int>> head_triplets;   // triplet indices per item

  // Interaction counts per attribute relation: [relation][item] holds
  // (tail entity, distinct-user count) for every value with nonzero count.
  std::vector<std::vector<std::vector<std::pair<int, int>>>> attr_counts;

  int relation_id(const std::string& name) const;
  int tail_entity(int relation, const std::string& value) const;
  bool connected(int head, int relation, int tail) const;
  const std::vector<int>& neighbors(int item) const { return head_triplets[item]; }

  std::unordered_set<uint64_t> edge_keys_;  // packed (head, relation, tail)
};

// Major attribute value for an item: argmax adoption proportion, ties broken
// by lexicographic value order. Empty when the item has no interactors.
std::optional<std::string> major_attribute_value(const AdoptionStats& stats, int item);

// Builds the graph from per-attribute adoption stats (training interactions)
// plus the property table. Every item gets an entity; items with interactors
// get one edge per attribute; property edges come straight from the dataset.
PreferenceGraph build_graph(const Dataset& data,
                            const std::vector<AdoptionStats>& per_attribute_stats);

struct TripletBatch {
  std::vector<Triplet> positives;
  std::vector<Triplet> negatives;
};

// Positive triplets for one item head. Attribute tails cover every value with
// a nonzero count (not only the static major edge) and are drawn with
// probability proportional to the reciprocal of the value's interaction
// count, normalized jointly over the item's candidates across the protected
// attributes. Property edges are drawn uniformly. When both families are
// present, the family is picked proportionally to its candidate-pool size.
std::vector<Triplet> fair_sample_positives(const PreferenceGraph& graph, int item,
                                           const std::vector<int>& protected_relations,
                                           int count, Rng& rng);

// The probability distribution fair_sample_positives draws from; pairs of
// (triplet, probability). Exposed for tests and reporting.
std::vector<std::pair<Triplet, double>> fair_sampling_distribution(
    const PreferenceGraph& graph, int item,
    const std::vector<int>& protected_relations);

// Uniform over the item's static edges; the random-sampling ablation.
std::vector<Triplet> random_sample_positives(const PreferenceGraph& graph, int item,
                                             int count, Rng& rng);

// One negative per positive: same head and relation, tail uniform over the
// relation's family excluding tails connected to that head. Positives whose
// family is exhausted are skipped; their indices are reported.
TripletBatch sample_negatives(const PreferenceGraph& graph,
                              const std::vector<Triplet>& positives, Rng& rng,
                              std::vector<int>* skipped = nullptr);

// head \t relation \t tail triplet file plus an entity dictionary sidecar.
void write_graph(const PreferenceGraph& graph, const std::string& path);
PreferenceGraph load_graph(const std::string& path, const Dataset& data);

// Fills attr_counts on a loaded graph from freshly computed stats (the
// triplet file stores structure only).
void attach_sampling_counts(PreferenceGraph& graph,
                            const std::vector<AdoptionStats>& per_attribute_stats);

}  // namespace fairsr
