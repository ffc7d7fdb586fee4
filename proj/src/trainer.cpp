#include "fairsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace fairsr {

void TrainConfig::validate() const {
  if (lambda2 < 0.0) throw std::invalid_argument("config: lambda2 must be >= 0");
  if (epsilon < 1) throw std::invalid_argument("config: epsilon must be >= 1");
  if (t < 1 || g < 1) throw std::invalid_argument("config: t and g must be >= 1");
  if (n_h + n_v != d)
    throw std::invalid_argument("config: n_h + n_v must equal d");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.d = d;
  m.t = t;
  m.n_h = n_h;
  m.n_v = n_v;
  m.filter_width = filter_width;
  m.cipl_layers = cipl_layers;
  m.mlp_layers = mlp_layers;
  m.tail_mlp_layers = tail_mlp_layers;
  m.shared_attention = shared_attention;
  m.no_gating = no_pfg || no_pfg_and_fpge;
  m.no_conv = no_conv;
  m.no_relational_attention = no_ra;
  return m;
}

// ---------------------------------------------------------------------------
// Config file format: flat key=value lines mirroring the field names.

std::string serialize_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "d=" << c.d << "\nt=" << c.t << "\ng=" << c.g << "\nn_h=" << c.n_h
    << "\nn_v=" << c.n_v << "\nfilter_width=" << c.filter_width
    << "\ncipl_layers=" << c.cipl_layers << "\nmlp_layers=" << c.mlp_layers
    << "\ntail_mlp_layers=" << c.tail_mlp_layers;
  char buf[64];
  snprintf(buf, sizeof(buf), "%.17g", c.lambda1);
  o << "\nlambda1=" << buf;
  snprintf(buf, sizeof(buf), "%.17g", c.lambda2);
  o << "\nlambda2=" << buf;
  o << "\nepsilon=" << c.epsilon;
  snprintf(buf, sizeof(buf), "%.17g", c.lr);
  o << "\nlr=" << buf;
  o << "\nbatch_size=" << c.batch_size << "\nepochs=" << c.epochs
    << "\npatience=" << c.patience << "\neval_every=" << c.eval_every
    << "\neval_k=" << c.eval_k << "\nseed=" << c.seed
    << "\nprecision32=" << (c.precision32 ? 1 : 0)
    << "\nshared_attention=" << (c.shared_attention ? 1 : 0) << "\nprotected=";
  for (size_t i = 0; i < c.protected_attrs.size(); ++i) {
    if (i) o << ',';
    o << c.protected_attrs[i];
  }
  o << "\nno_fpge=" << (c.no_fpge ? 1 : 0) << "\nno_pfg=" << (c.no_pfg ? 1 : 0)
    << "\nno_conv=" << (c.no_conv ? 1 : 0) << "\nno_ra=" << (c.no_ra ? 1 : 0)
    << "\nrandom_sampling=" << (c.random_sampling ? 1 : 0)
    << "\nno_pfg_and_fpge=" << (c.no_pfg_and_fpge ? 1 : 0) << "\n";
  return o.str();
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value, got '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto as_int = [&] { return std::stoi(value); };
    auto as_real = [&] { return std::stod(value); };
    auto as_bool = [&] { return value == "1" || value == "true"; };
    if (key == "d") c.d = as_int();
    else if (key == "t") c.t = as_int();
    else if (key == "g") c.g = as_int();
    else if (key == "n_h") c.n_h = as_int();
    else if (key == "n_v") c.n_v = as_int();
    else if (key == "filter_width") c.filter_width = as_int();
    else if (key == "cipl_layers") c.cipl_layers = as_int();
    else if (key == "mlp_layers") c.mlp_layers = as_int();
    else if (key == "tail_mlp_layers") c.tail_mlp_layers = as_int();
    else if (key == "lambda1") c.lambda1 = as_real();
    else if (key == "lambda2") c.lambda2 = as_real();
    else if (key == "epsilon") c.epsilon = as_int();
    else if (key == "lr") c.lr = as_real();
    else if (key == "batch_size") c.batch_size = as_int();
    else if (key == "epochs") c.epochs = as_int();
    else if (key == "patience") c.patience = as_int();
    else if (key == "eval_every") c.eval_every = as_int();
    else if (key == "eval_k") c.eval_k = as_int();
    else if (key == "seed") c.seed = std::stoul(value);
    else if (key == "precision32") c.precision32 = as_bool();
    else if (key == "shared_attention") c.shared_attention = as_bool();
    else if (key == "protected") {
      c.protected_attrs.clear();
      std::string part;
      std::istringstream ps(value);
      while (std::getline(ps, part, ','))
        if (!part.empty()) c.protected_attrs.push_back(part);
    } else if (key == "no_fpge") c.no_fpge = as_bool();
    else if (key == "no_pfg") c.no_pfg = as_bool();
    else if (key == "no_conv") c.no_conv = as_bool();
    else if (key == "no_ra") c.no_ra = as_bool();
    else if (key == "random_sampling") c.random_sampling = as_bool();
    else if (key == "no_pfg_and_fpge") c.no_pfg_and_fpge = as_bool();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

uint64_t config_hash(const TrainConfig& cfg) {
  // FNV-1a over the serialized text.
  std::string s = serialize_config(cfg);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kCkptMagic[8] = {'F', 'S', 'R', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const ParamStore& params, uint64_t cfg_hash,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kCkptMagic, sizeof(kCkptMagic));
  out.write(reinterpret_cast<const char*>(&cfg_hash), sizeof(cfg_hash));
  uint32_t count = static_cast<uint32_t>(params.count());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (int i = 0; i < params.count(); ++i) {
    const std::string& name = params.name(i);
    uint32_t len = static_cast<uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), len);
    const Tensor& v = params.value(i);
    uint32_t rows = v.rows, cols = v.cols;
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
}

void load_checkpoint(ParamStore& params, uint64_t cfg_hash, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint " + path + ": bad magic");
  uint64_t stored = 0;
  in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
  if (stored != cfg_hash)
    throw std::runtime_error("checkpoint " + path +
                             ": config hash mismatch (saved under a different config)");
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != static_cast<uint32_t>(params.count()))
    throw std::runtime_error("checkpoint " + path + ": parameter count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    int id = params.id(name);
    uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    Tensor& v = params.value(id);
    if (static_cast<int>(rows) != v.rows || static_cast<int>(cols) != v.cols)
      throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(v.data.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("checkpoint " + path + ": truncated");
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const TrainConfig& cfg, const Dataset& data,
                 std::optional<PreferenceGraph> graph)
    : cfg_(cfg), data_(&data), rng_(cfg.seed) {
  cfg_.validate();
  auto windows = make_windows(data, cfg_.t, cfg_.g);
  splits_ = split(windows);
  if (splits_.train.empty()) throw std::runtime_error("trainer: no training windows");
  train_items_ = user_item_sets(splits_.train, data.num_users);
  train_member_.assign(data.num_users, std::vector<bool>(data.num_items, false));
  for (int u = 0; u < data.num_users; ++u)
    for (int it : train_items_[u]) train_member_[u][it] = true;

  // Per-attribute adoption stats over training interactions drive both the
  // graph construction and the fairness-aware sampler.
  std::vector<AdoptionStats> per_attr;
  for (const auto& name : data.attribute_names)
    per_attr.push_back(build_adoption_stats(data, train_items_, {name}));
  if (graph) {
    graph_ = std::move(*graph);
    attach_sampling_counts(graph_, per_attr);
  } else {
    graph_ = build_graph(data, per_attr);
  }

  std::vector<std::string> prot = cfg_.protected_attrs.empty()
                                      ? data.attribute_names
                                      : cfg_.protected_attrs;
  protected_stats_ = build_adoption_stats(data, train_items_, prot);
  for (const auto& name : prot)
    protected_relations_.push_back(graph_.relation_id(name));

  for (int item = 0; item < data.num_items; ++item)
    if (!fair_sampling_distribution(graph_, item, protected_relations_).empty())
      sampleable_items_.push_back(item);

  model_ = std::make_unique<Model>(cfg_.model_config(), data.num_users,
                                   data.num_items, graph_, rng_);
  adam_ = std::make_unique<AdamState>(model_->params());

  for (size_t s = 0; s < splits_.train.size(); ++s)
    for (size_t t = 0; t < splits_.train[s].targets.size(); ++t)
      sr_pool_.push_back({static_cast<int>(s), static_cast<int>(t)});
}

std::vector<BprTuple> Trainer::next_sr_batch() {
  std::vector<BprTuple> batch;
  int n_items = data_->num_items;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    if (sr_cursor_ == 0) {
      // Fisher-Yates reshuffle at the start of each pass over the pool.
      for (size_t i = sr_pool_.size(); i > 1; --i)
        std::swap(sr_pool_[i - 1], sr_pool_[rand_index(rng_, i)]);
    }
    const SrExample& ex = sr_pool_[sr_cursor_];
    sr_cursor_ = (sr_cursor_ + 1) % sr_pool_.size();
    const SequenceSample& s = splits_.train[ex.sample];
    BprTuple tup;
    tup.user = s.user;
    tup.window = s.input;
    tup.positive = s.targets[ex.target];
    int neg = static_cast<int>(rand_index(rng_, n_items));
    int guard = 0;
    while (train_member_[s.user][neg] && guard++ < 1000)
      neg = static_cast<int>(rand_index(rng_, n_items));
    tup.negative = neg;
    batch.push_back(std::move(tup));
  }
  return batch;
}

TripletBatch Trainer::next_fpge_batch() {
  std::vector<Triplet> positives;
  if (sampleable_items_.empty())
    throw std::runtime_error("fpge batch: graph has no sampleable items");
  for (int b = 0; b < cfg_.batch_size; ++b) {
    int item = sampleable_items_[rand_index(rng_, sampleable_items_.size())];
    std::vector<Triplet> drawn;
    if (cfg_.random_sampling)
      drawn = random_sample_positives(graph_, item, 1, rng_);
    else
      drawn = fair_sample_positives(graph_, item, protected_relations_, 1, rng_);
    positives.insert(positives.end(), drawn.begin(), drawn.end());
  }
  return sample_negatives(graph_, positives, rng_);
}

void Trainer::add_l2_gradients() {
  if (cfg_.lambda2 == 0.0) return;
  ParamStore& ps = model_->params();
  for (int i = 0; i < ps.count(); ++i) {
    Tensor& g = ps.grad(i);
    const Tensor& v = ps.value(i);
    for (size_t k = 0; k < g.size(); ++k) g.data[k] += 2.0 * cfg_.lambda2 * v.data[k];
  }
}

double Trainer::sr_loss_with_grads(const std::vector<BprTuple>& batch) {
  Graph g;
  int loss = model_->build_bpr_loss(g, batch);
  Precision prec = cfg_.precision32 ? Precision::f32 : Precision::f64;
  auto ev = compute_gradients(g, model_->params(), loss, {}, prec);
  add_l2_gradients();
  return ev.value(loss).data[0] + cfg_.lambda2 * model_->params().squared_norm();
}

double Trainer::fpge_loss_with_grads(const TripletBatch& batch) {
  Graph g;
  int obj = model_->build_fpge_objective(g, batch, cfg_.lambda1);
  Precision prec = cfg_.precision32 ? Precision::f32 : Precision::f64;
  auto ev = compute_gradients(g, model_->params(), obj, {}, prec);
  add_l2_gradients();
  return ev.value(obj).data[0] + cfg_.lambda2 * model_->params().squared_norm();
}

double Trainer::joint_loss_value(const std::vector<BprTuple>& sr_batch,
                                 const TripletBatch& fpge_batch) {
  Graph g;
  int sr = model_->build_bpr_loss(g, sr_batch);
  int fp = model_->build_fpge_objective(g, fpge_batch, cfg_.lambda1);
  int total = g.add(sr, fp);
  auto ev = forward(g, model_->params());
  return ev.value(total).data[0] + cfg_.lambda2 * model_->params().squared_norm();
}

void Trainer::sr_update(const std::vector<BprTuple>& batch, TrainResult& result) {
  double loss = sr_loss_with_grads(batch);
  if (!std::isfinite(loss)) throw std::runtime_error("sr loss is not finite");
  AdamConfig ac;
  ac.lr = cfg_.lr;
  adam_step(model_->params(), *adam_, ac,
            cfg_.precision32 ? Precision::f32 : Precision::f64);
  result.trace.push_back({iteration_++, "sr", loss});
  result.sr_updates++;
}

void Trainer::fpge_update(const TripletBatch& batch, TrainResult& result) {
  if (batch.positives.empty()) return;
  double loss = fpge_loss_with_grads(batch);
  if (!std::isfinite(loss)) throw std::runtime_error("fpge loss is not finite");
  AdamConfig ac;
  ac.lr = cfg_.lr;
  adam_step(model_->params(), *adam_, ac,
            cfg_.precision32 ? Precision::f32 : Precision::f64);
  result.trace.push_back({iteration_++, "fpge", loss});
  result.fpge_updates++;
}

void Trainer::joint_iteration(TrainResult& result) {
  for (int e = 0; e < cfg_.epsilon; ++e) sr_update(next_sr_batch(), result);
  if (!cfg_.no_fpge && !cfg_.no_pfg_and_fpge) fpge_update(next_fpge_batch(), result);
}

EvalRun Trainer::evaluate(const std::vector<SequenceSample>& windows, int k) const {
  return rank_topk(*model_, windows, train_items_, k);
}

double Trainer::current_val_ndcg() const {
  if (splits_.val.empty()) return 0.0;
  return accuracy_metrics(evaluate(splits_.val, cfg_.eval_k)).ndcg;
}

TrainResult Trainer::train(const std::string& run_dir) {
  TrainResult result;
  uint64_t hash = config_hash(cfg_);
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    std::ofstream cfg_out(run_dir + "/config.txt");
    cfg_out << serialize_config(cfg_);
  }

  long batches_per_epoch =
      std::max<long>(1, static_cast<long>((sr_pool_.size() + cfg_.batch_size - 1) /
                                          cfg_.batch_size));
  std::vector<Tensor> best;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    try {
      for (long b = 0; b < batches_per_epoch; b += cfg_.epsilon)
        joint_iteration(result);
    } catch (const std::exception&) {
      if (!run_dir.empty())
        save_checkpoint(model_->params(), hash, run_dir + "/abort.ckpt");
      throw;
    }
    result.epochs_run = epoch + 1;

    if ((epoch + 1) % cfg_.eval_every == 0) {
      double ndcg = current_val_ndcg();
      result.trace.push_back({iteration_, "val", ndcg});
      if (result.best_epoch < 0 || ndcg > result.best_val_ndcg) {
        result.best_val_ndcg = ndcg;
        result.best_epoch = epoch;
        since_best = 0;
        best.clear();
        for (int i = 0; i < model_->params().count(); ++i)
          best.push_back(model_->params().value(i));
      } else if (++since_best >= cfg_.patience) {
        break;
      }
    }
  }
  if (!best.empty())
    for (int i = 0; i < model_->params().count(); ++i)
      model_->params().value(i) = best[i];

  if (!run_dir.empty()) {
    save_checkpoint(model_->params(), hash, run_dir + "/model.ckpt");
    write_trace(run_dir + "/trace.tsv", result.trace);
  }
  return result;
}

void write_trace(const std::string& path, const std::vector<TraceEntry>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace " + path);
  char buf[64];
  for (const auto& e : trace) {
    snprintf(buf, sizeof(buf), "%.17g", e.value);
    out << e.iteration << '\t' << e.phase << '\t' << buf << '\n';
  }
}

RunOutcome run_experiment(const TrainConfig& cfg, const Dataset& data,
                          std::optional<PreferenceGraph> graph,
                          const std::string& run_dir) {
  Trainer trainer(cfg, data, std::move(graph));
  RunOutcome out;
  out.result = trainer.train(run_dir);
  const auto& test = trainer.splits().test.empty() ? trainer.splits().val
                                                   : trainer.splits().test;
  if (!test.empty()) {
    EvalRun run = trainer.evaluate(test, cfg.eval_k);
    AccuracyMetrics m = accuracy_metrics(run);
    FairnessReport f =
        fairness_of_run(run, trainer.protected_stats(), data.num_items);
    out.row = {"fairsr", m.precision, m.recall, m.ndcg, f.dif};
  }
  return out;
}

std::vector<ReportRow> sweep_length(const TrainConfig& base, const Dataset& data) {
  std::vector<ReportRow> rows;
  for (int t : {3, 5, 8}) {
    for (int g : {1, 2, 3}) {
      TrainConfig cfg = base;
      cfg.t = t;
      cfg.g = g;
      RunOutcome out = run_experiment(cfg, data);
      out.row.system = "t=" + std::to_string(t) + ",g=" + std::to_string(g);
      rows.push_back(out.row);
    }
  }
  return rows;
}

std::vector<ReportRow> sweep_ablation(const TrainConfig& base, const Dataset& data) {
  struct Variant {
    const char* name;
    void (*apply)(TrainConfig&);
  };
  const Variant variants[] = {
      {"full", [](TrainConfig&) {}},
      {"-FS", [](TrainConfig& c) { c.random_sampling = true; }},
      {"-RA", [](TrainConfig& c) { c.no_ra = true; }},
      {"-Conv", [](TrainConfig& c) { c.no_conv = true; }},
      {"-PFG", [](TrainConfig& c) { c.no_pfg = true; }},
      {"-FPGE", [](TrainConfig& c) { c.no_fpge = true; }},
      {"-PFG&FPGE", [](TrainConfig& c) { c.no_pfg_and_fpge = true; }},
  };
  std::vector<ReportRow> rows;
  for (const auto& v : variants) {
    TrainConfig cfg = base;
    v.apply(cfg);
    RunOutcome out = run_experiment(cfg, data);
    out.row.system = v.name;
    rows.push_back(out.row);
  }
  return rows;
}

}  // namespace fairsr
