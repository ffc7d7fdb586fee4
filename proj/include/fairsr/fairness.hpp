#pragma once

#include <string>
#include <vector>

#include "fairsr/dataio.hpp"

namespace fairsr {

// Adoption counts per item over the values of a protected attribute group.
// The group is one attribute or the cross product of several; joint values
// with no support anywhere in the dataset are not part of the value set.
// Counts come from a caller-supplied interaction population (training split
// by convention) and count distinct users.
struct AdoptionStats {
  std::vector<std::string> attrs;    // attribute names forming the group
  std::vector<std::string> values;   // observed value set Z, sorted
  std::vector<std::vector<int>> counts;  // [item][value] distinct-user counts
  std::vector<int> interactors;          // |U(v)| per item
  int num_items = 0;

  int value_index(const std::string& v) const;
};

// `user_items[u]` lists the items user u interacted with in the population of
// interest (deduplicated). Attribute names must exist in the dataset schema.
AdoptionStats build_adoption_stats(const Dataset& data,
                                   const std::vector<std::vector<int>>& user_items,
                                   const std::vector<std::string>& attrs);

// Joint attribute value of a user under the group, e.g. "F|20-29".
std::string joint_value(const Dataset& data, int user,
                        const std::vector<std::string>& attrs);

// p_v(z) over the value set. Empty vector when the item has no interactors.
std::vector<double> adoption_proportion(const AdoptionStats& stats, int item);

// Entropy (nats) of the adoption proportions, 0 log 0 := 0. Items without
// interactors score 0 and bump `missing` when provided.
double adoption_equality(const AdoptionStats& stats, int item,
                         int* missing = nullptr);

// Sum of adoption equalities over the list.
double interaction_fairness(const AdoptionStats& stats,
                            const std::vector<int>& items, int* missing = nullptr);

struct FairnessReport {
  std::vector<double> if_recommended;  // per evaluation unit
  std::vector<double> if_ground_truth;
  double dif = 0.0;  // mean over units of (IF_rec - IF_gt)
  int items_without_stats = 0;

  // CDF series: values sorted ascending, cumulative probability (i+1)/n.
  std::vector<std::pair<double, double>> cdf_recommended;
  std::vector<std::pair<double, double>> cdf_ground_truth;
};

FairnessReport dif_at_k(const std::vector<std::vector<int>>& recommended,
                        const std::vector<std::vector<int>>& ground_truth,
                        const AdoptionStats& stats, int k, int catalogue_size);

}  // namespace fairsr
