#include "fairsr/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>

#include "fairsr/tsv.hpp"

namespace fairsr {

namespace {

std::optional<double> parse_rating(const std::string& s) {
  if (s.empty() || s == "NA" || s == "-") return std::nullopt;
  return std::stod(s);
}

std::string bucket_age(const std::string& value) {
  // Numeric ages collapse to 10-year ranges; already-bucketed values pass
  // through untouched.
  char* end = nullptr;
  long v = std::strtol(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0' || v < 0) return value;
  long lo = (v / 10) * 10;
  return std::to_string(lo) + "-" + std::to_string(lo + 9);
}

}  // namespace

std::vector<RawInteraction> read_interactions(const std::string& path) {
  std::vector<RawInteraction> out;
  for (const auto& row : read_tsv(path)) {
    if (row.size() < 4)
      throw std::runtime_error(path + ": interaction rows need 4 columns");
    out.push_back({row[0], row[1], parse_rating(row[2]), std::stoll(row[3])});
  }
  return out;
}

std::vector<RawAttribute> read_attributes(const std::string& path) {
  std::vector<RawAttribute> out;
  for (const auto& row : read_tsv(path)) {
    if (row.size() < 3)
      throw std::runtime_error(path + ": attribute rows need 3 columns");
    out.push_back({row[0], row[1], row[2]});
  }
  return out;
}

std::vector<RawProperty> read_properties(const std::string& path) {
  std::vector<RawProperty> out;
  for (const auto& row : read_tsv(path)) {
    if (row.size() < 3)
      throw std::runtime_error(path + ": property rows need 3 columns");
    out.push_back({row[0], row[1], row[2]});
  }
  return out;
}

Dataset assemble(const std::vector<RawInteraction>& interactions,
                 const std::vector<RawAttribute>& attributes,
                 const std::vector<RawProperty>& properties) {
  Dataset d;
  std::map<std::string, int> users, items;
  auto user_of = [&](const std::string& id) {
    auto [it, fresh] = users.emplace(id, d.num_users);
    if (fresh) {
      d.user_ids.push_back(id);
      ++d.num_users;
    }
    return it->second;
  };
  auto item_of = [&](const std::string& id) {
    auto [it, fresh] = items.emplace(id, d.num_items);
    if (fresh) {
      d.item_ids.push_back(id);
      ++d.num_items;
    }
    return it->second;
  };

  for (const auto& r : interactions)
    d.interactions.push_back({user_of(r.user), item_of(r.item), r.rating, r.ts});

  // Attribute schema = every name seen, in sorted order.
  std::set<std::string> names;
  for (const auto& a : attributes) names.insert(a.name);
  d.attribute_names.assign(names.begin(), names.end());
  d.user_attrs.assign(d.num_users, std::vector<std::string>(d.attribute_names.size()));
  for (const auto& a : attributes) {
    auto uit = users.find(a.user);
    if (uit == users.end()) continue;  // attribute rows for unseen users are dropped
    size_t ai = std::lower_bound(d.attribute_names.begin(), d.attribute_names.end(),
                                 a.name) -
                d.attribute_names.begin();
    std::string value = a.name == "age" ? bucket_age(a.value) : a.value;
    d.user_attrs[uit->second][ai] = value;
  }

  d.item_props.assign(d.num_items, {});
  for (const auto& p : properties) {
    auto iit = items.find(p.item);
    if (iit == items.end()) continue;
    auto& props = d.item_props[iit->second];
    if (std::find(props.begin(), props.end(),
                  std::make_pair(p.name, p.value)) == props.end())
      props.emplace_back(p.name, p.value);
  }

  std::stable_sort(d.interactions.begin(), d.interactions.end(),
                   [](const Interaction& a, const Interaction& b) {
                     if (a.user != b.user) return a.user < b.user;
                     if (a.ts != b.ts) return a.ts < b.ts;
                     return a.item < b.item;
                   });
  return d;
}

Dataset to_implicit(const Dataset& data, double threshold) {
  if (threshold <= 0.0) return data;
  Dataset d = data;
  d.interactions.clear();
  for (const auto& r : data.interactions) {
    if (!r.rating)
      throw std::runtime_error(
          "to_implicit: record without rating under nonzero threshold");
    if (*r.rating >= threshold) d.interactions.push_back(r);
  }
  return d;
}

Dataset filter_users(const Dataset& data, int min_interactions) {
  std::vector<int> counts(data.num_users, 0);
  for (const auto& r : data.interactions) counts[r.user]++;

  std::vector<int> user_map(data.num_users, -1);
  int kept_users = 0;
  for (int u = 0; u < data.num_users; ++u) {
    bool full = !data.user_attrs[u].empty() || data.attribute_names.empty();
    for (const auto& v : data.user_attrs[u])
      if (v.empty()) full = false;
    if (full && counts[u] >= min_interactions) user_map[u] = kept_users++;
  }
  if (kept_users == 0)
    throw std::runtime_error("filter_users: no users survive (had " +
                             std::to_string(data.num_users) + " users, min " +
                             std::to_string(min_interactions) + " interactions)");

  std::vector<int> item_map(data.num_items, -1);
  for (const auto& r : data.interactions)
    if (user_map[r.user] >= 0) item_map[r.item] = 0;
  int kept_items = 0;
  for (int i = 0; i < data.num_items; ++i)
    if (item_map[i] == 0) item_map[i] = kept_items++;

  Dataset d;
  d.num_users = kept_users;
  d.num_items = kept_items;
  d.attribute_names = data.attribute_names;
  d.user_ids.resize(kept_users);
  d.user_attrs.resize(kept_users);
  for (int u = 0; u < data.num_users; ++u)
    if (user_map[u] >= 0) {
      d.user_ids[user_map[u]] = data.user_ids[u];
      d.user_attrs[user_map[u]] = data.user_attrs[u];
    }
  d.item_ids.resize(kept_items);
  d.item_props.resize(kept_items);
  for (int i = 0; i < data.num_items; ++i)
    if (item_map[i] >= 0) {
      d.item_ids[item_map[i]] = data.item_ids[i];
      d.item_props[item_map[i]] = data.item_props[i];
    }
  for (const auto& r : data.interactions)
    if (user_map[r.user] >= 0)
      d.interactions.push_back({user_map[r.user], item_map[r.item], r.rating, r.ts});
  return d;
}

std::vector<SequenceSample> make_windows(const Dataset& data, int t, int g) {
  if (t < 1 || g < 1) throw std::invalid_argument("make_windows: t and g must be >= 1");
  int span = t + g;
  std::vector<std::vector<int>> seq(data.num_users);
  for (const auto& r : data.interactions) seq[r.user].push_back(r.item);

  std::vector<SequenceSample> out;
  for (int u = 0; u < data.num_users; ++u) {
    const auto& items = seq[u];
    int n = static_cast<int>(items.size());
    for (int start = 0; start + span <= n; ++start) {
      SequenceSample s;
      s.user = u;
      s.window_id = start;
      s.input.assign(items.begin() + start, items.begin() + start + t);
      s.targets.assign(items.begin() + start + t, items.begin() + start + span);
      out.push_back(std::move(s));
    }
  }
  return out;
}

SplitSamples split(const std::vector<SequenceSample>& samples, double train_ratio,
                   double val_ratio, double test_ratio, unsigned long seed) {
  (void)seed;
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1");

  std::map<int, std::vector<SequenceSample>> per_user;
  for (const auto& s : samples) per_user[s.user].push_back(s);

  SplitSamples out;
  for (auto& [u, windows] : per_user) {
    (void)u;
    std::sort(windows.begin(), windows.end(),
              [](const SequenceSample& a, const SequenceSample& b) {
                return a.window_id < b.window_id;
              });
    int w = static_cast<int>(windows.size());
    int n_val = static_cast<int>(val_ratio * w + 1e-9);
    int n_test = static_cast<int>(test_ratio * w + 1e-9);
    int n_train = w - n_val - n_test;  // train takes the rounding remainder
    for (int i = 0; i < w; ++i) {
      if (i < n_train)
        out.train.push_back(windows[i]);
      else if (i < n_train + n_val)
        out.val.push_back(windows[i]);
      else
        out.test.push_back(windows[i]);
    }
  }
  return out;
}

void write_dataset(const Dataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    TsvWriter w(dir + "/interactions.tsv");
    for (const auto& r : data.interactions)
      w.row({std::to_string(r.user), std::to_string(r.item),
             r.rating ? std::to_string(*r.rating) : "NA", std::to_string(r.ts)});
  }
  {
    TsvWriter w(dir + "/attributes.tsv");
    for (int u = 0; u < data.num_users; ++u)
      for (size_t a = 0; a < data.attribute_names.size(); ++a)
        w.row({std::to_string(u), data.attribute_names[a], data.user_attrs[u][a]});
  }
  {
    TsvWriter w(dir + "/properties.tsv");
    for (int i = 0; i < data.num_items; ++i)
      for (const auto& [name, value] : data.item_props[i])
        w.row({std::to_string(i), name, value});
  }
  {
    TsvWriter w(dir + "/user_index.tsv");
    for (int u = 0; u < data.num_users; ++u)
      w.row({data.user_ids[u], std::to_string(u)});
  }
  {
    TsvWriter w(dir + "/item_index.tsv");
    for (int i = 0; i < data.num_items; ++i)
      w.row({data.item_ids[i], std::to_string(i)});
  }
}

Dataset load_dataset(const std::string& dir) {
  auto inter = read_interactions(dir + "/interactions.tsv");
  std::vector<RawAttribute> attrs;
  if (std::filesystem::exists(dir + "/attributes.tsv"))
    attrs = read_attributes(dir + "/attributes.tsv");
  std::vector<RawProperty> props;
  if (std::filesystem::exists(dir + "/properties.tsv"))
    props = read_properties(dir + "/properties.tsv");
  Dataset d = assemble(inter, attrs, props);

  // Snapshots are dense already; restore the original ids from the sidecars.
  auto restore = [](const std::string& path, std::vector<std::string>& ids) {
    if (!std::filesystem::exists(path)) return;
    for (const auto& row : read_tsv(path)) {
      if (row.size() < 2) continue;
      int dense = std::stoi(row[1]);
      if (dense >= 0 && dense < static_cast<int>(ids.size())) ids[dense] = row[0];
    }
  };
  restore(dir + "/user_index.tsv", d.user_ids);
  restore(dir + "/item_index.tsv", d.item_ids);
  return d;
}

Dataset ingest(const std::string& interactions_path,
               const std::string& attributes_path,
               const std::string& properties_path, double threshold,
               int min_interactions) {
  auto inter = read_interactions(interactions_path);
  auto attrs = read_attributes(attributes_path);
  std::vector<RawProperty> props;
  if (!properties_path.empty()) props = read_properties(properties_path);
  Dataset d = assemble(inter, attrs, props);
  d = to_implicit(d, threshold);
  return filter_users(d, min_interactions);
}

void convert_movielens(const std::string& ratings_path,
                       const std::string& users_path,
                       const std::string& movies_path, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ifstream ratings(ratings_path);
  if (!ratings) throw std::runtime_error("cannot open " + ratings_path);
  TsvWriter wi(out_dir + "/interactions.tsv");
  std::string line;
  while (std::getline(ratings, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_str(line, "::");
    if (f.size() < 4) continue;
    wi.row({f[0], f[1], f[2], f[3]});
  }

  std::ifstream users(users_path);
  if (!users) throw std::runtime_error("cannot open " + users_path);
  TsvWriter wa(out_dir + "/attributes.tsv");
  while (std::getline(users, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_str(line, "::");
    if (f.size() < 3) continue;
    wa.row({f[0], "gender", f[1]});
    wa.row({f[0], "age", f[2]});
  }

  std::ifstream movies(movies_path);
  if (!movies) throw std::runtime_error("cannot open " + movies_path);
  TsvWriter wp(out_dir + "/properties.tsv");
  while (std::getline(movies, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_str(line, "::");
    if (f.size() < 3) continue;
    for (const auto& genre : split(f[2], '|'))
      if (!genre.empty()) wp.row({f[0], "genre", genre});
  }
}

std::vector<std::vector<int>> user_item_sets(const std::vector<SequenceSample>& samples,
                                             int num_users) {
  std::vector<std::set<int>> sets(num_users);
  for (const auto& s : samples) {
    for (int it : s.input) sets[s.user].insert(it);
    for (int it : s.targets) sets[s.user].insert(it);
  }
  std::vector<std::vector<int>> out(num_users);
  for (int u = 0; u < num_users; ++u) out[u].assign(sets[u].begin(), sets[u].end());
  return out;
}

}  // namespace fairsr
