#include "fairsr/synth.hpp"

#include <algorithm>
#include <string>

#include "fairsr/rng.hpp"

namespace fairsr {

namespace {

class Builder {
 public:
  explicit Builder(std::vector<std::string> attribute_names) {
    std::sort(attribute_names.begin(), attribute_names.end());
    d_.attribute_names = std::move(attribute_names);
  }

  int user(const std::vector<std::string>& attrs) {
    d_.user_attrs.push_back(attrs);
    d_.user_ids.push_back("u" + std::to_string(d_.num_users));
    return d_.num_users++;
  }

  int item(const std::vector<std::pair<std::string, std::string>>& props) {
    d_.item_props.push_back(props);
    d_.item_ids.push_back("i" + std::to_string(d_.num_items));
    return d_.num_items++;
  }

  void interact(int user, int item) {
    d_.interactions.push_back({user, item, {}, next_ts_++});
  }

  Dataset take() {
    std::stable_sort(d_.interactions.begin(), d_.interactions.end(),
                     [](const Interaction& a, const Interaction& b) {
                       if (a.user != b.user) return a.user < b.user;
                       if (a.ts != b.ts) return a.ts < b.ts;
                       return a.item < b.item;
                     });
    return std::move(d_);
  }

 private:
  Dataset d_;
  long long next_ts_ = 0;
};

}  // namespace

Dataset synth_toy_chain(const ToyChainSpec& spec) {
  Rng rng(spec.seed);
  Builder b({"gender"});
  for (int i = 0; i < spec.items; ++i)
    b.item({{"band", "b" + std::to_string(i / 10)}});
  for (int u = 0; u < spec.users; ++u) {
    int id = b.user({u % 2 ? "F" : "M"});
    int start = static_cast<int>(rand_index(rng, static_cast<size_t>(spec.items)));
    for (int k = 0; k < spec.run_length; ++k) {
      int item = (start + k) % spec.items;  // wraps so every item gets coverage
      if (spec.noise > 0.0 && rand_unit(rng) < spec.noise)
        item = static_cast<int>(rand_index(rng, spec.items));
      b.interact(id, item);
    }
  }
  return b.take();
}

Dataset synth_biased(const BiasedSpec& spec) {
  Rng rng(spec.seed);
  Builder b({"age", "gender"});
  const char* ages[] = {"10-19", "20-29", "30-39"};
  int quarter = spec.items / 4;
  // Pools: [0, q) female-pure, [q, 2q) male-pure, [2q, items) balanced.
  std::vector<std::vector<int>> pools(3);
  for (int i = 0; i < spec.items; ++i) {
    b.item({{"band", "b" + std::to_string(i / 6)}});
    pools[i < quarter ? 0 : (i < 2 * quarter ? 1 : 2)].push_back(i);
  }
  for (int u = 0; u < spec.users; ++u) {
    bool female = u % 2 == 0;
    int age = (u / 2) % 3;
    int id = b.user({ages[age], female ? "F" : "M"});
    int own = female ? 0 : 1;
    // Draws are popularity-skewed under a cohort-specific ranking: each age
    // group prefers a rotated slice of its gender's pool, so pure items end
    // up gender-pure and age-skewed. Mixed items share one global ranking
    // and collect every cohort evenly.
    auto zipfish = [&](const std::vector<int>& pool, size_t rotation) {
      size_t n = pool.size();
      size_t idx = std::min(rand_index(rng, n), rand_index(rng, n));
      return pool[(rotation + idx) % n];
    };
    size_t own_rot = static_cast<size_t>(age) * pools[own].size() / 3;
    const int bubble_size = 6;
    std::vector<int> bubble;
    while (static_cast<int>(bubble.size()) < bubble_size) {
      int cand = zipfish(pools[own], own_rot);
      if (std::find(bubble.begin(), bubble.end(), cand) == bubble.end())
        bubble.push_back(cand);
    }
    size_t cursor = 0;
    for (int k = 0; k < spec.seq_length; ++k) {
      double x = rand_unit(rng);
      int item;
      if (x < spec.own_pure) {
        item = bubble[cursor % bubble.size()];
        ++cursor;
      } else if (x < spec.own_pure + spec.other_pure) {
        item = zipfish(pools[own], own_rot);
      } else {
        item = zipfish(pools[2], 0);
      }
      b.interact(id, item);
    }
  }
  return b.take();
}

Dataset synth_clustered(const ClusteredSpec& spec) {
  Rng rng(spec.seed);
  Builder b({"age", "gender"});
  const char* ages[] = {"10-19", "20-29", "30-39", "40-49", "50-59"};
  int num_ages = 5;

  // Items: cluster-aligned genre labels plus a secondary genre for texture.
  std::vector<std::vector<int>> cluster_items(spec.clusters);
  for (int i = 0; i < spec.items; ++i) {
    int c = i % spec.clusters;
    std::vector<std::pair<std::string, std::string>> props;
    props.emplace_back("genre", "g" + std::to_string(c));
    if (i % 3 == 0)
      props.emplace_back("genre", "g" + std::to_string((c + 1) % spec.clusters));
    b.item(props);
    cluster_items[c].push_back(i);
  }

  for (int u = 0; u < spec.users; ++u) {
    bool female = rand_unit(rng) < 0.55;
    int age = static_cast<int>(rand_index(rng, num_ages));
    int id = b.user({ages[age], female ? "F" : "M"});

    // Two preferred clusters, correlated with the attributes so the
    // preference graph carries usable signal.
    int c1 = (age * 2 + (female ? 0 : 1)) % spec.clusters;
    int c2 = (c1 + 3 + static_cast<int>(rand_index(rng, 3))) % spec.clusters;
    int len = spec.seq_min +
              static_cast<int>(rand_index(
                  rng, static_cast<size_t>(spec.seq_max - spec.seq_min + 1)));
    int cluster = c1;
    size_t pos = rand_index(rng, cluster_items[cluster].size());
    for (int k = 0; k < len; ++k) {
      double x = rand_unit(rng);
      if (x < 0.15) {
        cluster = cluster == c1 ? c2 : c1;
        pos = rand_index(rng, cluster_items[cluster].size());
      } else if (x < 0.25) {
        // Popularity-skewed jump inside the cluster: low indices favored.
        size_t n = cluster_items[cluster].size();
        pos = std::min(rand_index(rng, n), rand_index(rng, n));
      } else {
        pos = (pos + 1) % cluster_items[cluster].size();
      }
      b.interact(id, cluster_items[cluster][pos]);
    }
  }
  return b.take();
}

}  // namespace fairsr
