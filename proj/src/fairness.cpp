#include "fairsr/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace fairsr {

int AdoptionStats::value_index(const std::string& v) const {
  auto it = std::lower_bound(values.begin(), values.end(), v);
  if (it == values.end() || *it != v) return -1;
  return static_cast<int>(it - values.begin());
}

std::string joint_value(const Dataset& data, int user,
                        const std::vector<std::string>& attrs) {
  std::string out;
  for (size_t i = 0; i < attrs.size(); ++i) {
    auto it = std::find(data.attribute_names.begin(), data.attribute_names.end(),
                        attrs[i]);
    if (it == data.attribute_names.end())
      throw std::invalid_argument("unknown attribute " + attrs[i]);
    size_t ai = it - data.attribute_names.begin();
    if (i) out += '|';
    out += data.user_attrs[user][ai];
  }
  return out;
}

AdoptionStats build_adoption_stats(const Dataset& data,
                                   const std::vector<std::vector<int>>& user_items,
                                   const std::vector<std::string>& attrs) {
  AdoptionStats s;
  s.attrs = attrs;
  s.num_items = data.num_items;

  std::vector<std::string> user_value(data.num_users);
  std::set<std::string> observed;
  for (int u = 0; u < data.num_users; ++u) {
    user_value[u] = joint_value(data, u, attrs);
    observed.insert(user_value[u]);
  }
  s.values.assign(observed.begin(), observed.end());

  s.counts.assign(data.num_items, std::vector<int>(s.values.size(), 0));
  s.interactors.assign(data.num_items, 0);
  for (size_t u = 0; u < user_items.size(); ++u) {
    int vi = s.value_index(user_value[u]);
    for (int item : user_items[u]) {
      s.counts[item][vi] += 1;
      s.interactors[item] += 1;
    }
  }
  return s;
}

std::vector<double> adoption_proportion(const AdoptionStats& stats, int item) {
  std::vector<double> p;
  int total = stats.interactors[item];
  if (total == 0) return p;
  p.resize(stats.values.size());
  for (size_t z = 0; z < p.size(); ++z)
    p[z] = static_cast<double>(stats.counts[item][z]) / total;
  return p;
}

double adoption_equality(const AdoptionStats& stats, int item, int* missing) {
  if (stats.interactors[item] == 0) {
    if (missing) ++*missing;
    return 0.0;
  }
  double e = 0.0;
  int total = stats.interactors[item];
  for (int c : stats.counts[item]) {
    if (c == 0) continue;  // 0 log 0 := 0
    double p = static_cast<double>(c) / total;
    e -= p * std::log(p);
  }
  return e;
}

double interaction_fairness(const AdoptionStats& stats,
                            const std::vector<int>& items, int* missing) {
  if (items.empty()) throw std::invalid_argument("interaction_fairness: empty list");
  double f = 0.0;
  for (int v : items) f += adoption_equality(stats, v, missing);
  return f;
}

namespace {

std::vector<std::pair<double, double>> cdf_series(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    out.emplace_back(values[i], static_cast<double>(i + 1) / values.size());
  return out;
}

}  // namespace

FairnessReport dif_at_k(const std::vector<std::vector<int>>& recommended,
                        const std::vector<std::vector<int>>& ground_truth,
                        const AdoptionStats& stats, int k, int catalogue_size) {
  if (k > catalogue_size)
    throw std::invalid_argument("dif_at_k: k exceeds catalogue size");
  if (recommended.size() != ground_truth.size())
    throw std::invalid_argument("dif_at_k: list counts differ");

  FairnessReport r;
  double acc = 0.0;
  for (size_t i = 0; i < recommended.size(); ++i) {
    double fr = interaction_fairness(stats, recommended[i], &r.items_without_stats);
    double fg = interaction_fairness(stats, ground_truth[i], &r.items_without_stats);
    r.if_recommended.push_back(fr);
    r.if_ground_truth.push_back(fg);
    acc += fr - fg;
  }
  r.dif = recommended.empty() ? 0.0 : acc / recommended.size();
  r.cdf_recommended = cdf_series(r.if_recommended);
  r.cdf_ground_truth = cdf_series(r.if_ground_truth);
  return r;
}

}  // namespace fairsr
