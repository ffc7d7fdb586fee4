#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fairsr {

struct Interaction {
  int user = 0;
  int item = 0;
  std::optional<double> rating;
  long long ts = 0;
};

// Dense-indexed interaction data with user attributes and item properties.
// After assembly, interactions are sorted per user chronologically with ties
// broken by item index, and the structure is immutable in practice.
struct Dataset {
  int num_users = 0;
  int num_items = 0;
  std::vector<Interaction> interactions;

  std::vector<std::string> user_ids;  // dense index -> original id
  std::vector<std::string> item_ids;

  std::vector<std::string> attribute_names;
  std::vector<std::vector<std::string>> user_attrs;  // [user][attr]; "" = missing

  // Per item: (property name, value) pairs; properties may be multi-valued.
  std::vector<std::vector<std::pair<std::string, std::string>>> item_props;
};

struct SequenceSample {
  int user = 0;
  std::vector<int> input;    // t item indices, chronological
  std::vector<int> targets;  // g item indices following the input
  int window_id = 0;         // per-user window index
};

struct SplitSamples {
  std::vector<SequenceSample> train;
  std::vector<SequenceSample> val;
  std::vector<SequenceSample> test;
};

// Raw rows as read from TSV files, original string ids.
struct RawInteraction {
  std::string user;
  std::string item;
  std::optional<double> rating;
  long long ts = 0;
};
struct RawAttribute {
  std::string user;
  std::string name;
  std::string value;
};
struct RawProperty {
  std::string item;
  std::string name;
  std::string value;
};

std::vector<RawInteraction> read_interactions(const std::string& path);
std::vector<RawAttribute> read_attributes(const std::string& path);
std::vector<RawProperty> read_properties(const std::string& path);

// Densifies ids (first-appearance order), attaches attributes/properties, and
// sorts per-user chronologically with item-id tie-break. Ages are bucketed
// into 10-year ranges ("20-29") when the attribute is named "age" and numeric.
Dataset assemble(const std::vector<RawInteraction>& interactions,
                 const std::vector<RawAttribute>& attributes,
                 const std::vector<RawProperty>& properties);

// Keeps records with rating >= threshold. threshold <= 0 keeps everything.
Dataset to_implicit(const Dataset& data, double threshold);

// Retains users that carry every configured attribute and have at least
// min_interactions interactions; users and surviving items are re-densified.
Dataset filter_users(const Dataset& data, int min_interactions);

// All maximal sliding windows of length t+g, stride 1, per user.
std::vector<SequenceSample> make_windows(const Dataset& data, int t, int g);

// Per-user chronological split. val/test take the floor share of each user's
// windows, train the remainder, so every retained user contributes training
// windows. `seed` is accepted for interface stability; the chronological rule
// is deterministic without it.
SplitSamples split(const std::vector<SequenceSample>& samples,
                   double train_ratio = 0.6, double val_ratio = 0.2,
                   double test_ratio = 0.2, unsigned long seed = 0);

// Snapshot of the dense dataset plus original-id index maps under `dir`.
void write_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Full ingest pipeline: read, assemble, to_implicit, filter_users.
Dataset ingest(const std::string& interactions_path,
               const std::string& attributes_path,
               const std::string& properties_path, double threshold,
               int min_interactions);

// Converts MovieLens "::"-delimited dumps (ratings/users/movies) into the
// TSV layout the ingest pipeline reads.
void convert_movielens(const std::string& ratings_path,
                       const std::string& users_path,
                       const std::string& movies_path, const std::string& out_dir);

// (user, item) pairs per sample list, deduplicated: which items a user
// touched inside these windows (inputs and targets).
std::vector<std::vector<int>> user_item_sets(const std::vector<SequenceSample>& samples,
                                             int num_users);

}  // namespace fairsr
