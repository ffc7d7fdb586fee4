#include "fairsr/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fairsr {

namespace {

Tensor uniform_init(int rows, int cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = rand_uniform(rng, -bound, bound);
  return t;
}

Tensor xavier_init(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
  return uniform_init(rows, cols, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Free builders

namespace seqmodel {

int stacked_embeddings(Graph& g, const ParamStore& ps, int item_table,
                       const std::vector<int>& items) {
  int table = g.param(ps, item_table);
  int d = ps.value(item_table).rows;
  std::vector<int> cols;
  cols.reserve(items.size());
  for (int it : items) {
    if (it < 0 || it >= ps.value(item_table).cols)
      throw std::out_of_range("item index " + std::to_string(it) + " out of range");
    cols.push_back(g.slice(table, 0, d, it, it + 1));
  }
  return g.concat(cols, 1);
}

int gate(Graph& g, const ParamStore& ps, const SeqParams& sp, int user_col,
         int s_node) {
  int w1 = g.param(ps, sp.gate_w1);
  int w2 = g.param(ps, sp.gate_w2);
  int pre = g.add(g.matmul(s_node, w1), g.outer(user_col, w2));
  return g.mul(s_node, g.sigmoid(pre));
}

int conv_horizontal(Graph& g, const ParamStore& ps, const SeqParams& sp,
                    int sf_node) {
  int d = g.rows(sf_node);
  int t = g.cols(sf_node);
  int h = ps.value(sp.horizontal.at(0)).cols;
  if (h > t)
    throw std::invalid_argument("conv_horizontal: filter width " + std::to_string(h) +
                                " exceeds window length " + std::to_string(t));
  int positions = t - h + 1;
  int n_h = static_cast<int>(sp.horizontal.size());

  // Offset-batched form of the sliding inner products: position p, filter j
  // accumulate sum_o (S_{:,p+o})^T Psi^j_{:,o}.
  int acc = -1;
  for (int o = 0; o < h; ++o) {
    int shifted = g.transpose(g.slice(sf_node, 0, d, o, o + positions));
    std::vector<int> filter_cols;
    filter_cols.reserve(n_h);
    for (int j = 0; j < n_h; ++j) {
      int psi = g.param(ps, sp.horizontal[j]);
      filter_cols.push_back(g.slice(psi, 0, d, o, o + 1));
    }
    int conv = g.matmul(shifted, g.concat(filter_cols, 1));  // positions x n_h
    acc = acc < 0 ? conv : g.add(acc, conv);
  }
  int activated = g.tanh(acc);
  return g.transpose(g.max_reduce(activated, 0));  // n_h x 1
}

int conv_vertical(Graph& g, const ParamStore& ps, const SeqParams& sp, int sf_node) {
  int t = g.cols(sf_node);
  std::vector<int> filters;
  filters.reserve(sp.vertical.size());
  for (int id : sp.vertical) {
    if (ps.value(id).cols != t)
      throw std::invalid_argument("conv_vertical: filter length mismatch");
    filters.push_back(g.transpose(g.param(ps, id)));  // t x 1
  }
  int lambda = g.concat(filters, 1);          // t x n_v
  int conv = g.matmul(sf_node, lambda);       // d x n_v, column j = weighted sum
  return g.transpose(g.max_reduce(conv, 0));  // n_v x 1
}

int mlp(Graph& g, const ParamStore& ps, const std::vector<int>& ws,
        const std::vector<int>& bs, int x_node) {
  int x = x_node;
  for (size_t l = 0; l < ws.size(); ++l)
    x = g.sigmoid(g.add(g.matmul(g.param(ps, ws[l]), x), g.param(ps, bs[l])));
  return x;
}

int item_item_score(Graph& g, int window_sum_node, int vbar_node) {
  return g.matmul(g.transpose(window_sum_node), vbar_node);
}

}  // namespace seqmodel

namespace cipl {

std::pair<int, int> cross_compress(Graph& g, const ParamStore& ps,
                                   const CiplParams::Layer& layer, int v_node,
                                   int e_node) {
  int vt = g.transpose(v_node);
  int et = g.transpose(e_node);
  auto project = [&](int w_for_v, int w_for_e, int bias) {
    int sv = g.matmul(et, g.param(ps, w_for_v));  // e^T w, scalar
    int se = g.matmul(vt, g.param(ps, w_for_e));  // v^T w, scalar
    return g.add(g.add(g.matmul(v_node, sv), g.matmul(e_node, se)),
                 g.param(ps, bias));
  };
  int v_next = project(layer.w_vv, layer.w_ev, layer.b_v);
  int e_next = project(layer.w_ve, layer.w_ee, layer.b_e);
  return {v_next, e_next};
}

std::pair<int, int> final_embeddings(Graph& g, const ParamStore& ps,
                                     const CiplParams& cp, int v0, int e0) {
  if (cp.layers.empty()) throw std::invalid_argument("cipl: stack depth must be >= 1");
  std::pair<int, int> ve = {v0, e0};
  for (const auto& layer : cp.layers)
    ve = cross_compress(g, ps, layer, ve.first, ve.second);
  return ve;
}

}  // namespace cipl

namespace fpge {

int attention(Graph& g, int wr_node, int head_node, int rel_node, int tail_node) {
  int key = g.matmul(wr_node, tail_node);
  int query = g.tanh(g.add(g.matmul(wr_node, head_node), rel_node));
  return g.matmul(g.transpose(key), query);  // 1 x 1
}

}  // namespace fpge

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& cfg, int num_users, int num_items,
             const PreferenceGraph& graph, Rng& rng)
    : cfg_(cfg), graph_(&graph), num_users_(num_users), num_items_(num_items) {
  if (cfg.n_h + cfg.n_v != cfg.d)
    throw std::invalid_argument("model: n_h + n_v must equal d");
  int d = cfg.d;
  int t = cfg.t;
  int h = cfg.filter_width;
  double emb = 0.5 / d;

  seq_.user_table = params_.add("user_emb", uniform_init(d, num_users, emb, rng));
  seq_.item_table = params_.add("item_emb", uniform_init(d, num_items, emb, rng));
  seq_.gate_w1 = params_.add("gate_w1", xavier_init(t, t, t, t, rng));
  seq_.gate_w2 = params_.add("gate_w2", xavier_init(t, 1, d, t, rng));
  for (int j = 0; j < cfg.n_h; ++j)
    seq_.horizontal.push_back(
        params_.add("hfilter_" + std::to_string(j), xavier_init(d, h, d * h, 1, rng)));
  for (int j = 0; j < cfg.n_v; ++j)
    seq_.vertical.push_back(
        params_.add("vfilter_" + std::to_string(j), xavier_init(1, t, t, 1, rng)));
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    seq_.user_mlp_w.push_back(
        params_.add("user_mlp_w" + std::to_string(l), xavier_init(d, d, d, d, rng)));
    seq_.user_mlp_b.push_back(
        params_.add("user_mlp_b" + std::to_string(l), Tensor(d, 1)));
  }

  for (int l = 0; l < cfg.cipl_layers; ++l) {
    auto w = [&](const char* tag) {
      return params_.add("cipl_l" + std::to_string(l) + "_" + tag,
                         xavier_init(d, 1, d, 1, rng));
    };
    CiplParams::Layer layer;
    layer.w_vv = w("wvv");
    layer.w_ev = w("wev");
    layer.w_ve = w("wve");
    layer.w_ee = w("wee");
    layer.b_v = params_.add("cipl_l" + std::to_string(l) + "_bv", Tensor(d, 1));
    layer.b_e = params_.add("cipl_l" + std::to_string(l) + "_be", Tensor(d, 1));
    cipl_.layers.push_back(layer);
  }
  cipl_.item_entity_table =
      params_.add("item_entity_emb", uniform_init(d, num_items, emb, rng));
  cipl_.default_entity = params_.add("default_entity", uniform_init(d, 1, emb, rng));

  int num_tails = static_cast<int>(graph.entities.size()) - graph.num_items;
  fpge_.tail_table =
      params_.add("tail_emb", uniform_init(d, std::max(num_tails, 1), emb, rng));
  int r = std::max(1, static_cast<int>(graph.relation_names.size()));
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    int in = l == 0 ? r : d;
    fpge_.rel_mlp_w.push_back(
        params_.add("rel_mlp_w" + std::to_string(l), xavier_init(d, in, in, d, rng)));
    fpge_.rel_mlp_b.push_back(
        params_.add("rel_mlp_b" + std::to_string(l), Tensor(d, 1)));
  }
  int attn_count = cfg.shared_attention ? 1 : r;
  for (int i = 0; i < attn_count; ++i)
    fpge_.attention_w.push_back(
        params_.add("attn_w" + std::to_string(i), xavier_init(d, d, d, d, rng)));
  for (int l = 0; l < cfg.tail_mlp_layers; ++l) {
    int in = l == 0 ? 2 * d : d;
    fpge_.tail_mlp_w.push_back(
        params_.add("tail_mlp_w" + std::to_string(l), xavier_init(d, in, in, d, rng)));
    fpge_.tail_mlp_b.push_back(
        params_.add("tail_mlp_b" + std::to_string(l), Tensor(d, 1)));
  }
}

int Model::build_user_vec(Graph& g, int user) const {
  int table = g.param(params_, seq_.user_table);
  int u = g.slice(table, 0, cfg_.d, user, user + 1);
  return seqmodel::mlp(g, params_, seq_.user_mlp_w, seq_.user_mlp_b, u);
}

int Model::build_seq_feature(Graph& g, int user, const std::vector<int>& window) const {
  int s = seqmodel::stacked_embeddings(g, params_, seq_.item_table, window);
  int sf = s;
  if (!cfg_.no_gating) {
    int table = g.param(params_, seq_.user_table);
    int u = g.slice(table, 0, cfg_.d, user, user + 1);
    sf = seqmodel::gate(g, params_, seq_, u, s);
  }
  int hc = seqmodel::conv_horizontal(g, params_, seq_, sf);
  int vc = seqmodel::conv_vertical(g, params_, seq_, sf);
  return g.concat({hc, vc}, 0);  // d x 1
}

int Model::build_window_sum(Graph& g, const std::vector<int>& window) const {
  int s = seqmodel::stacked_embeddings(g, params_, seq_.item_table, window);
  int acc = g.slice(s, 0, cfg_.d, 0, 1);
  for (size_t j = 1; j < window.size(); ++j)
    acc = g.add(acc,
                g.slice(s, 0, cfg_.d, static_cast<int>(j), static_cast<int>(j) + 1));
  return acc;
}

int Model::build_query(Graph& g, int user, const std::vector<int>& window) const {
  int q = build_user_vec(g, user);
  if (!cfg_.no_conv) q = g.add(q, build_seq_feature(g, user, window));
  return g.add(q, build_window_sum(g, window));
}

std::pair<int, int> Model::build_cipl(Graph& g, int item) const {
  int v = g.slice(g.param(params_, seq_.item_table), 0, cfg_.d, item, item + 1);
  int e;
  if (item < graph_->num_items)
    e = g.slice(g.param(params_, cipl_.item_entity_table), 0, cfg_.d, item, item + 1);
  else
    e = g.param(params_, cipl_.default_entity);
  return cipl::final_embeddings(g, params_, cipl_, v, e);
}

int Model::build_predict(Graph& g, int user, const std::vector<int>& window,
                         int candidate) const {
  int q = build_query(g, user, window);
  int vbar = build_cipl(g, candidate).first;
  return g.matmul(g.transpose(q), vbar);
}

int Model::attention_w_node(Graph& g, int relation) const {
  int idx = cfg_.shared_attention ? 0 : relation;
  return g.param(params_, fpge_.attention_w.at(idx));
}

int Model::build_relation_embed(Graph& g, int relation) const {
  int num_rel = static_cast<int>(graph_->relation_names.size());
  if (relation < 0 || relation >= num_rel)
    throw std::invalid_argument("unknown relation id " + std::to_string(relation));
  // sigma(W x + b) with one-hot x selects a column of the first-layer W.
  int x = -1;
  for (size_t l = 0; l < fpge_.rel_mlp_w.size(); ++l) {
    int w = g.param(params_, fpge_.rel_mlp_w[l]);
    int b = g.param(params_, fpge_.rel_mlp_b[l]);
    int wx = l == 0 ? g.slice(w, 0, cfg_.d, relation, relation + 1) : g.matmul(w, x);
    x = g.sigmoid(g.add(wx, b));
  }
  return x;
}

int Model::build_tail_embed(Graph& g, int entity) const {
  int col = entity - graph_->num_items;
  if (col < 0) throw std::invalid_argument("tail entity is an item");
  return g.slice(g.param(params_, fpge_.tail_table), 0, cfg_.d, col, col + 1);
}

int Model::build_head_agg(Graph& g, int item, FpgeCache& cache) const {
  auto hit = cache.head_agg.find(item);
  if (hit != cache.head_agg.end()) return hit->second;

  auto cit = cache.cipl_head.find(item);
  int etilde = cit != cache.cipl_head.end() ? cit->second : build_cipl(g, item).second;
  cache.cipl_head[item] = etilde;

  const auto& edges = graph_->neighbors(item);
  int agg;
  if (edges.empty()) {
    agg = etilde;  // isolated head keeps its cross-learned embedding
  } else {
    std::vector<int> tails, scores;
    for (int ti : edges) {
      const Triplet& tr = graph_->triplets[ti];
      int tail = build_tail_embed(g, tr.tail);
      tails.push_back(tail);
      if (!cfg_.no_relational_attention) {
        int rit = cache.relation.count(tr.relation)
                      ? cache.relation[tr.relation]
                      : build_relation_embed(g, tr.relation);
        cache.relation[tr.relation] = rit;
        scores.push_back(
            fpge::attention(g, attention_w_node(g, tr.relation), etilde, rit, tail));
      }
    }
    int stacked = g.concat(tails, 1);  // d x n
    int weights;
    if (cfg_.no_relational_attention) {
      Tensor w(static_cast<int>(tails.size()), 1);
      w.fill(1.0 / static_cast<double>(tails.size()));
      weights = g.constant(std::move(w));
    } else {
      weights = g.softmax(g.concat(scores, 0), 0);  // n x 1, sums to 1
    }
    agg = g.matmul(stacked, weights);
  }
  cache.head_agg[item] = agg;
  return agg;
}

int Model::build_triplet_score(Graph& g, const Triplet& t, FpgeCache& cache) const {
  int h = build_head_agg(g, t.head, cache);
  int rit = cache.relation.count(t.relation) ? cache.relation[t.relation]
                                             : build_relation_embed(g, t.relation);
  cache.relation[t.relation] = rit;
  int x = g.concat({h, rit}, 0);  // 2d x 1
  for (size_t l = 0; l < fpge_.tail_mlp_w.size(); ++l)
    x = g.sigmoid(g.add(g.matmul(g.param(params_, fpge_.tail_mlp_w[l]), x),
                        g.param(params_, fpge_.tail_mlp_b[l])));
  int tail = build_tail_embed(g, t.tail);
  return g.sigmoid(g.matmul(g.transpose(tail), x));
}

int Model::build_fpge_objective(Graph& g, const TripletBatch& batch,
                                double lambda1) const {
  if (batch.positives.empty())
    throw std::invalid_argument("fpge objective: empty batch");
  FpgeCache cache;
  std::vector<int> pos, neg;
  for (const auto& t : batch.positives) pos.push_back(build_triplet_score(g, t, cache));
  for (const auto& t : batch.negatives) neg.push_back(build_triplet_score(g, t, cache));
  int pos_sum = g.sum(g.concat(pos, 0));
  if (neg.empty()) return g.scale(pos_sum, -lambda1);
  int neg_sum = g.sum(g.concat(neg, 0));
  return g.scale(g.sub(pos_sum, neg_sum), -lambda1);
}

int Model::build_bpr_loss(Graph& g, const std::vector<BprTuple>& batch) const {
  if (batch.empty()) throw std::invalid_argument("bpr loss: empty batch");
  std::map<int, int> vbar_cache;
  auto vbar_of = [&](int item) {
    auto it = vbar_cache.find(item);
    if (it != vbar_cache.end()) return it->second;
    int node = build_cipl(g, item).first;
    vbar_cache[item] = node;
    return node;
  };
  std::vector<int> diffs;
  diffs.reserve(batch.size());
  for (const auto& tup : batch) {
    int q = g.transpose(build_query(g, tup.user, tup.window));
    int pos = g.matmul(q, vbar_of(tup.positive));
    int neg = g.matmul(q, vbar_of(tup.negative));
    diffs.push_back(g.sub(pos, neg));
  }
  int stacked = g.concat(diffs, 0);
  int loglik = g.log(g.sigmoid(stacked));
  return g.scale(g.sum(loglik), -1.0 / static_cast<double>(batch.size()));
}

// ---------------------------------------------------------------------------
// Fast forward-only path

namespace {

std::vector<double> column(const Tensor& t, int col) {
  std::vector<double> out(t.rows);
  for (int r = 0; r < t.rows; ++r) out[r] = t.at(r, col);
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<double> Model::cipl_item_embedding(int item) const {
  int d = cfg_.d;
  std::vector<double> v = column(params_.value(seq_.item_table), item);
  std::vector<double> e = item < graph_->num_items
                              ? column(params_.value(cipl_.item_entity_table), item)
                              : column(params_.value(cipl_.default_entity), 0);
  for (const auto& layer : cipl_.layers) {
    double e_wvv = dot(e, params_.value(layer.w_vv).data);
    double v_wev = dot(v, params_.value(layer.w_ev).data);
    double e_wve = dot(e, params_.value(layer.w_ve).data);
    double v_wee = dot(v, params_.value(layer.w_ee).data);
    const Tensor& bv = params_.value(layer.b_v);
    const Tensor& be = params_.value(layer.b_e);
    std::vector<double> v2(d), e2(d);
    for (int k = 0; k < d; ++k) {
      v2[k] = v[k] * e_wvv + e[k] * v_wev + bv.data[k];
      e2[k] = v[k] * e_wve + e[k] * v_wee + be.data[k];
    }
    v = std::move(v2);
    e = std::move(e2);
  }
  return v;
}

std::vector<std::vector<double>> Model::all_item_embeddings() const {
  std::vector<std::vector<double>> out(num_items_);
  for (int i = 0; i < num_items_; ++i) out[i] = cipl_item_embedding(i);
  return out;
}

std::vector<double> Model::query_vector(int user, const std::vector<int>& window) const {
  int d = cfg_.d;
  int t = static_cast<int>(window.size());
  const Tensor& items = params_.value(seq_.item_table);

  // u-bar through the user MLP.
  std::vector<double> q = column(params_.value(seq_.user_table), user);
  for (size_t l = 0; l < seq_.user_mlp_w.size(); ++l) {
    const Tensor& w = params_.value(seq_.user_mlp_w[l]);
    const Tensor& b = params_.value(seq_.user_mlp_b[l]);
    std::vector<double> next(d);
    for (int r = 0; r < d; ++r) {
      double s = b.data[r];
      for (int c = 0; c < d; ++c) s += w.at(r, c) * q[c];
      next[r] = 1.0 / (1.0 + std::exp(-s));
    }
    q = std::move(next);
  }

  if (!cfg_.no_conv) {
    // Window columns, gated unless disabled.
    std::vector<std::vector<double>> sf(t);
    for (int j = 0; j < t; ++j) sf[j] = column(items, window[j]);
    if (!cfg_.no_gating) {
      const Tensor& w1 = params_.value(seq_.gate_w1);
      const Tensor& w2 = params_.value(seq_.gate_w2);
      std::vector<double> u = column(params_.value(seq_.user_table), user);
      std::vector<std::vector<double>> gated(t, std::vector<double>(d));
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < t; ++c) {
          double pre = u[r] * w2.data[c];
          for (int k = 0; k < t; ++k) pre += sf[k][r] * w1.at(k, c);
          gated[c][r] = sf[c][r] / (1.0 + std::exp(-pre));
        }
      sf = std::move(gated);
    }

    int h = cfg_.filter_width;
    int positions = t - h + 1;
    for (int j = 0; j < cfg_.n_h; ++j) {
      const Tensor& psi = params_.value(seq_.horizontal[j]);
      double best = -std::numeric_limits<double>::infinity();
      for (int p = 0; p < positions; ++p) {
        double s = 0.0;
        for (int o = 0; o < h; ++o)
          for (int r = 0; r < d; ++r) s += sf[p + o][r] * psi.at(r, o);
        best = std::max(best, std::tanh(s));
      }
      q[j] += best;
    }
    for (int j = 0; j < cfg_.n_v; ++j) {
      const Tensor& lam = params_.value(seq_.vertical[j]);
      double best = -std::numeric_limits<double>::infinity();
      for (int r = 0; r < d; ++r) {
        double s = 0.0;
        for (int c = 0; c < t; ++c) s += lam.data[c] * sf[c][r];
        best = std::max(best, s);
      }
      q[cfg_.n_h + j] += best;
    }
  }

  for (int j = 0; j < t; ++j)
    for (int r = 0; r < d; ++r) q[r] += items.at(r, window[j]);
  return q;
}

double Model::predict_fast(int user, const std::vector<int>& window,
                           int candidate) const {
  return dot(query_vector(user, window), cipl_item_embedding(candidate));
}

}  // namespace fairsr
