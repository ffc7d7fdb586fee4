#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "fairsr/model.hpp"
#include "support/gradient_check.hpp"
#include "support/toy_data.hpp"

using namespace fairsr;
using namespace fairsr::testing;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.t = 3;
  cfg.n_h = 4;
  cfg.n_v = 4;
  cfg.filter_width = 2;
  return cfg;
}

struct Micro {
  Dataset data;
  std::vector<AdoptionStats> stats;
  PreferenceGraph graph;
  std::unique_ptr<Model> model;
};

std::unique_ptr<Micro> make_micro(ModelConfig cfg = micro_config(),
                                  unsigned long seed = 11) {
  auto m = std::make_unique<Micro>();
  ToyData toy({"age", "gender"});
  for (int i = 0; i < 6; ++i) {
    std::vector<std::pair<std::string, std::string>> props;
    props.emplace_back("category", i % 2 ? "X" : "Y");
    if (i % 3 == 0) props.emplace_back("director", "D" + std::to_string(i % 2));
    toy.item(props);
  }
  for (int u = 0; u < 8; ++u) {
    int id = toy.user({u % 3 ? "10-19" : "20-29", u % 2 ? "F" : "M"});
    for (int v = 0; v < 6; ++v)
      if ((u + v) % 2 == 0) toy.interact(id, v);
  }
  m->data = toy.build();
  auto pairs = all_pairs(m->data);
  m->stats = {build_adoption_stats(m->data, pairs, {"age"}),
              build_adoption_stats(m->data, pairs, {"gender"})};
  m->graph = build_graph(m->data, m->stats);
  Rng rng(seed);
  m->model = std::make_unique<Model>(cfg, m->data.num_users, m->data.num_items,
                                     m->graph, rng);
  return m;
}

// Standalone sequence parameters for the free-builder tests.
struct SeqFixture {
  ParamStore ps;
  SeqParams sp;
  int d, t, h;
  SeqFixture(int d_, int t_, int h_, int n_items, Rng& rng, bool zero_gate)
      : d(d_), t(t_), h(h_) {
    sp.item_table = ps.add("V", random_tensor(d, n_items, rng));
    sp.gate_w1 = ps.add("w1", zero_gate ? Tensor(t, t) : random_tensor(t, t, rng));
    sp.gate_w2 = ps.add("w2", zero_gate ? Tensor(t, 1) : random_tensor(t, 1, rng));
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Personalized feature gating

TEST_CASE("gate: zero weights halve the stacked embeddings") {
  Rng rng(1);
  SeqFixture fx(4, 3, 2, 5, rng, /*zero_gate=*/true);
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, {0, 2, 4});
  int u = g.input("u", 4, 1);
  int sf = seqmodel::gate(g, fx.ps, fx.sp, u, s);
  auto ev = forward(g, fx.ps, {{"u", random_tensor(4, 1, rng)}});
  for (size_t k = 0; k < ev.value(sf).size(); ++k)
    CHECK(ev.value(sf).data[k] ==
          doctest::Approx(ev.value(s).data[k] / 2.0).epsilon(1e-15));
}

TEST_CASE("gate: saturated pre-activation passes embeddings through") {
  Rng rng(2);
  SeqFixture fx(4, 3, 2, 5, rng, /*zero_gate=*/true);
  fx.ps.value(fx.sp.gate_w2).fill(50.0);  // u w2^T dominates with u = 1
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, {1, 2, 3});
  int u = g.input("u", 4, 1);
  int sf = seqmodel::gate(g, fx.ps, fx.sp, u, s);
  Tensor ones(4, 1);
  ones.fill(1.0);
  auto ev = forward(g, fx.ps, {{"u", ones}});
  for (size_t k = 0; k < ev.value(sf).size(); ++k)
    CHECK(ev.value(sf).data[k] ==
          doctest::Approx(ev.value(s).data[k]).epsilon(1e-9));
}

TEST_CASE("gate: random case matches the elementwise formula oracle") {
  Rng rng(3);
  SeqFixture fx(4, 3, 2, 6, rng, /*zero_gate=*/false);
  Tensor u = random_tensor(4, 1, rng);
  std::vector<int> window = {5, 0, 3};
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, window);
  int ui = g.input("u", 4, 1);
  int sf = seqmodel::gate(g, fx.ps, fx.sp, ui, s);
  auto ev = forward(g, fx.ps, {{"u", u}});

  const Tensor& V = fx.ps.value(fx.sp.item_table);
  const Tensor& w1 = fx.ps.value(fx.sp.gate_w1);
  const Tensor& w2 = fx.ps.value(fx.sp.gate_w2);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) {
      double pre = u.data[r] * w2.data[c];
      for (int k = 0; k < 3; ++k) pre += V.at(r, window[k]) * w1.at(k, c);
      double want = V.at(r, window[c]) * sigmoid(pre);
      CHECK(ev.value(sf).at(r, c) == doctest::Approx(want).epsilon(1e-12));
    }
}

// ---------------------------------------------------------------------------
// Convolutions

TEST_CASE("horizontal conv: zero filters pool to zero") {
  Rng rng(4);
  SeqFixture fx(4, 3, 2, 5, rng, true);
  fx.sp.horizontal = {fx.ps.add("psi0", Tensor(4, 2)), fx.ps.add("psi1", Tensor(4, 2))};
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, {0, 1, 2});
  int pooled = seqmodel::conv_horizontal(g, fx.ps, fx.sp, s);
  auto ev = forward(g, fx.ps);
  for (double v : ev.value(pooled).data) CHECK(v == 0.0);
}

TEST_CASE("horizontal conv: t == h pools the single position") {
  Rng rng(5);
  SeqFixture fx(4, 2, 2, 5, rng, true);
  fx.sp.horizontal = {fx.ps.add("psi0", random_tensor(4, 2, rng))};
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, {1, 4});
  int pooled = seqmodel::conv_horizontal(g, fx.ps, fx.sp, s);
  auto ev = forward(g, fx.ps);
  double inner = 0.0;
  const Tensor& V = fx.ps.value(fx.sp.item_table);
  const Tensor& psi = fx.ps.value(fx.sp.horizontal[0]);
  int window[2] = {1, 4};
  for (int r = 0; r < 4; ++r)
    for (int o = 0; o < 2; ++o) inner += V.at(r, window[o]) * psi.at(r, o);
  CHECK(ev.value(pooled).data[0] == doctest::Approx(std::tanh(inner)).epsilon(1e-12));
}

TEST_CASE("horizontal conv: width beyond the window is an error") {
  Rng rng(6);
  SeqFixture fx(4, 3, 2, 5, rng, true);
  fx.sp.horizontal = {fx.ps.add("psi0", random_tensor(4, 4, rng))};  // h = 4 > t
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, {0, 1, 2});
  CHECK_THROWS_AS(seqmodel::conv_horizontal(g, fx.ps, fx.sp, s),
                  std::invalid_argument);
}

TEST_CASE("horizontal conv: random case matches brute force over all windows") {
  Rng rng(7);
  SeqFixture fx(2, 3, 2, 4, rng, true);
  for (int j = 0; j < 3; ++j)
    fx.sp.horizontal.push_back(
        fx.ps.add("psi" + std::to_string(j), random_tensor(2, 2, rng)));
  std::vector<int> window = {2, 0, 3};
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, window);
  int pooled = seqmodel::conv_horizontal(g, fx.ps, fx.sp, s);
  auto ev = forward(g, fx.ps);
  const Tensor& V = fx.ps.value(fx.sp.item_table);
  for (int j = 0; j < 3; ++j) {
    const Tensor& psi = fx.ps.value(fx.sp.horizontal[j]);
    double best = -1e30;
    for (int p = 0; p < 2; ++p) {
      double inner = 0.0;
      for (int r = 0; r < 2; ++r)
        for (int o = 0; o < 2; ++o) inner += V.at(r, window[p + o]) * psi.at(r, o);
      best = std::max(best, std::tanh(inner));
    }
    CHECK(ev.value(pooled).data[j] == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("vertical conv: one-hot filter selects a time step") {
  Rng rng(8);
  SeqFixture fx(4, 3, 2, 5, rng, true);
  Tensor lam(1, 3);
  lam.at(0, 1) = 1.0;  // second time step
  fx.sp.vertical = {fx.ps.add("lam0", lam)};
  std::vector<int> window = {0, 3, 1};
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, window);
  int pooled = seqmodel::conv_vertical(g, fx.ps, fx.sp, s);
  auto ev = forward(g, fx.ps);
  const Tensor& V = fx.ps.value(fx.sp.item_table);
  double best = -1e30;
  for (int r = 0; r < 4; ++r) best = std::max(best, V.at(r, window[1]));
  CHECK(ev.value(pooled).data[0] == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("vertical conv: uniform filter averages over time") {
  Rng rng(9);
  SeqFixture fx(4, 3, 2, 5, rng, true);
  Tensor lam(1, 3);
  lam.fill(1.0 / 3.0);
  fx.sp.vertical = {fx.ps.add("lam0", lam)};
  std::vector<int> window = {2, 4, 0};
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, window);
  int pooled = seqmodel::conv_vertical(g, fx.ps, fx.sp, s);
  auto ev = forward(g, fx.ps);
  const Tensor& V = fx.ps.value(fx.sp.item_table);
  double best = -1e30;
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0;
    for (int c = 0; c < 3; ++c) mean += V.at(r, window[c]) / 3.0;
    best = std::max(best, mean);
  }
  CHECK(ev.value(pooled).data[0] == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("vertical conv: random case matches the weighted-sum oracle") {
  Rng rng(10);
  SeqFixture fx(3, 4, 2, 6, rng, true);
  for (int j = 0; j < 2; ++j)
    fx.sp.vertical.push_back(
        fx.ps.add("lam" + std::to_string(j), random_tensor(1, 4, rng)));
  std::vector<int> window = {5, 1, 4, 2};
  Graph g;
  int s = seqmodel::stacked_embeddings(g, fx.ps, fx.sp.item_table, window);
  int pooled = seqmodel::conv_vertical(g, fx.ps, fx.sp, s);
  auto ev = forward(g, fx.ps);
  const Tensor& V = fx.ps.value(fx.sp.item_table);
  for (int j = 0; j < 2; ++j) {
    const Tensor& lam = fx.ps.value(fx.sp.vertical[j]);
    double best = -1e30;
    for (int r = 0; r < 3; ++r) {
      double s_r = 0.0;
      for (int c = 0; c < 4; ++c) s_r += lam.data[c] * V.at(r, window[c]);
      best = std::max(best, s_r);
    }
    CHECK(ev.value(pooled).data[j] == doctest::Approx(best).epsilon(1e-12));
  }
}

// ---------------------------------------------------------------------------
// Cross&compress

namespace {

struct CiplFixture {
  ParamStore ps;
  CiplParams cp;
  CiplFixture(int d, int layers, Rng& rng, bool zero_weights = false,
              bool zero_bias = true) {
    for (int l = 0; l < layers; ++l) {
      auto t = [&](const char* tag, bool zero) {
        return ps.add("l" + std::to_string(l) + tag,
                      zero ? Tensor(d, 1) : random_tensor(d, 1, rng));
      };
      CiplParams::Layer layer;
      layer.w_vv = t("wvv", zero_weights);
      layer.w_ev = t("wev", zero_weights);
      layer.w_ve = t("wve", zero_weights);
      layer.w_ee = t("wee", zero_weights);
      layer.b_v = t("bv", zero_bias);
      layer.b_e = t("be", zero_bias);
      cp.layers.push_back(layer);
    }
  }
};

// Dense oracle: builds C = v e^T explicitly and multiplies.
void dense_cross(const std::vector<double>& v, const std::vector<double>& e,
                 const Tensor& wvv, const Tensor& wev, const Tensor& wve,
                 const Tensor& wee, const Tensor& bv, const Tensor& be,
                 std::vector<double>& v_out, std::vector<double>& e_out) {
  int d = static_cast<int>(v.size());
  std::vector<std::vector<double>> C(d, std::vector<double>(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) C[i][j] = v[i] * e[j];
  v_out.assign(d, 0.0);
  e_out.assign(d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      v_out[i] += C[i][j] * wvv.data[j] + C[j][i] * wev.data[j];
      e_out[i] += C[i][j] * wve.data[j] + C[j][i] * wee.data[j];
    }
    v_out[i] += bv.data[i];
    e_out[i] += be.data[i];
  }
}

}  // namespace

TEST_CASE("cross_compress: zero item vector leaves only the biases") {
  Rng rng(11);
  CiplFixture fx(4, 1, rng, false, false);
  Graph g;
  int v = g.input("v", 4, 1);
  int e = g.input("e", 4, 1);
  auto [v1, e1] = cipl::cross_compress(g, fx.ps, fx.cp.layers[0], v, e);
  auto ev = forward(g, fx.ps, {{"v", Tensor(4, 1)}, {"e", random_tensor(4, 1, rng)}});
  for (int k = 0; k < 4; ++k) {
    CHECK(ev.value(v1).data[k] ==
          doctest::Approx(fx.ps.value(fx.cp.layers[0].b_v).data[k]).epsilon(1e-15));
    CHECK(ev.value(e1).data[k] ==
          doctest::Approx(fx.ps.value(fx.cp.layers[0].b_e).data[k]).epsilon(1e-15));
  }
}

TEST_CASE("cross_compress: unit entity with matching weight reproduces v") {
  Rng rng(12);
  CiplFixture fx(4, 1, rng, true, true);
  Tensor unit(4, 1);
  unit.data[0] = 1.0;
  fx.ps.value(fx.cp.layers[0].w_vv) = unit;  // C w = v (e^T w) = v when e = e1
  Graph g;
  int v = g.input("v", 4, 1);
  int e = g.input("e", 4, 1);
  auto [v1, e1] = cipl::cross_compress(g, fx.ps, fx.cp.layers[0], v, e);
  (void)e1;
  Tensor vin = random_tensor(4, 1, rng);
  auto ev = forward(g, fx.ps, {{"v", vin}, {"e", unit}});
  for (int k = 0; k < 4; ++k)
    CHECK(ev.value(v1).data[k] == doctest::Approx(vin.data[k]).epsilon(1e-15));
}

TEST_CASE("cross_compress: random case matches the dense outer-product oracle") {
  Rng rng(13);
  CiplFixture fx(4, 1, rng, false, false);
  Tensor vin = random_tensor(4, 1, rng);
  Tensor ein = random_tensor(4, 1, rng);
  Graph g;
  int v = g.input("v", 4, 1);
  int e = g.input("e", 4, 1);
  auto [v1, e1] = cipl::cross_compress(g, fx.ps, fx.cp.layers[0], v, e);
  auto ev = forward(g, fx.ps, {{"v", vin}, {"e", ein}});

  const auto& L = fx.cp.layers[0];
  std::vector<double> vo, eo;
  dense_cross(vin.data, ein.data, fx.ps.value(L.w_vv), fx.ps.value(L.w_ev),
              fx.ps.value(L.w_ve), fx.ps.value(L.w_ee), fx.ps.value(L.b_v),
              fx.ps.value(L.b_e), vo, eo);
  for (int k = 0; k < 4; ++k) {
    CHECK(ev.value(v1).data[k] == doctest::Approx(vo[k]).epsilon(1e-10));
    CHECK(ev.value(e1).data[k] == doctest::Approx(eo[k]).epsilon(1e-10));
  }
}

TEST_CASE("final_embeddings: bias-only stack is constant after layer one") {
  Rng rng(14);
  CiplFixture fx(4, 2, rng, true, false);
  Graph g;
  int v = g.input("v", 4, 1);
  int e = g.input("e", 4, 1);
  auto [vt, et] = cipl::final_embeddings(g, fx.ps, fx.cp, v, e);
  auto ev1 = forward(g, fx.ps, {{"v", random_tensor(4, 1, rng)},
                                {"e", random_tensor(4, 1, rng)}});
  auto ev2 = forward(g, fx.ps, {{"v", random_tensor(4, 1, rng)},
                                {"e", random_tensor(4, 1, rng)}});
  for (int k = 0; k < 4; ++k) {
    CHECK(ev1.value(vt).data[k] == ev2.value(vt).data[k]);
    CHECK(ev1.value(et).data[k] == ev2.value(et).data[k]);
  }
}

TEST_CASE("final_embeddings: two layers match the twice-applied oracle") {
  Rng rng(15);
  CiplFixture fx(4, 2, rng, false, false);
  Tensor vin = random_tensor(4, 1, rng);
  Tensor ein = random_tensor(4, 1, rng);
  Graph g;
  int v = g.input("v", 4, 1);
  int e = g.input("e", 4, 1);
  auto [vt, et] = cipl::final_embeddings(g, fx.ps, fx.cp, v, e);
  auto ev = forward(g, fx.ps, {{"v", vin}, {"e", ein}});

  std::vector<double> vo = vin.data, eo = ein.data;
  for (const auto& L : fx.cp.layers) {
    std::vector<double> v2, e2;
    dense_cross(vo, eo, fx.ps.value(L.w_vv), fx.ps.value(L.w_ev), fx.ps.value(L.w_ve),
                fx.ps.value(L.w_ee), fx.ps.value(L.b_v), fx.ps.value(L.b_e), v2, e2);
    vo = v2;
    eo = e2;
  }
  for (int k = 0; k < 4; ++k) {
    CHECK(ev.value(vt).data[k] == doctest::Approx(vo[k]).epsilon(1e-10));
    CHECK(ev.value(et).data[k] == doctest::Approx(eo[k]).epsilon(1e-10));
  }
}

TEST_CASE("cross_compress gradients pass finite differences") {
  Rng rng(16);
  CiplFixture fx(3, 2, rng, false, false);
  int vin = fx.ps.add("vin", random_tensor(3, 1, rng));
  int ein = fx.ps.add("ein", random_tensor(3, 1, rng));
  Graph g;
  auto [vt, et] = cipl::final_embeddings(g, fx.ps, fx.cp, g.param(fx.ps, vin),
                                         g.param(fx.ps, ein));
  int loss = g.sum(g.add(g.tanh(vt), g.tanh(et)));
  CHECK(max_grad_rel_err(g, fx.ps, loss) < 1e-6);
}

// ---------------------------------------------------------------------------
// FPGE pieces on the micro model

TEST_CASE("relation embedding: zero weights give the 0.5 vector") {
  auto m = make_micro();
  for (int id : m->model->fpge().rel_mlp_w) m->model->params().value(id).fill(0.0);
  Graph g;
  int r = m->model->build_relation_embed(g, 0);
  auto ev = forward(g, m->model->params());
  for (double v : ev.value(r).data) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("relation embedding: distinct relations embed differently") {
  auto m = make_micro();
  REQUIRE(m->graph.relation_names.size() >= 2);
  Graph g;
  int r0 = m->model->build_relation_embed(g, 0);
  int r1 = m->model->build_relation_embed(g, 1);
  auto ev = forward(g, m->model->params());
  double diff = 0.0;
  for (size_t k = 0; k < ev.value(r0).size(); ++k)
    diff += std::fabs(ev.value(r0).data[k] - ev.value(r1).data[k]);
  CHECK(diff > 1e-6);
}

TEST_CASE("relation embedding matches a dense one-hot MLP oracle") {
  auto m = make_micro();
  int rel = 1;
  Graph g;
  int r = m->model->build_relation_embed(g, rel);
  auto ev = forward(g, m->model->params());

  const ParamStore& ps = m->model->params();
  const auto& f = m->model->fpge();
  int num_rel = static_cast<int>(m->graph.relation_names.size());
  std::vector<double> x(num_rel, 0.0);
  x[rel] = 1.0;
  for (size_t l = 0; l < f.rel_mlp_w.size(); ++l) {
    const Tensor& w = ps.value(f.rel_mlp_w[l]);
    const Tensor& b = ps.value(f.rel_mlp_b[l]);
    std::vector<double> next(w.rows);
    for (int i = 0; i < w.rows; ++i) {
      double s = b.data[i];
      for (int j = 0; j < w.cols; ++j) s += w.at(i, j) * x[j];
      next[i] = sigmoid(s);
    }
    x = std::move(next);
  }
  for (size_t k = 0; k < x.size(); ++k)
    CHECK(ev.value(r).data[k] == doctest::Approx(x[k]).epsilon(1e-12));
}

TEST_CASE("attention: zero projection scores zero, softmax becomes uniform") {
  Rng rng(17);
  ParamStore ps;
  int wr = ps.add("wr", Tensor(4, 4));
  Graph g;
  std::vector<int> scores;
  for (int n = 0; n < 3; ++n) {
    int h = g.constant(random_tensor(4, 1, rng));
    int r = g.constant(random_tensor(4, 1, rng));
    int t = g.constant(random_tensor(4, 1, rng));
    scores.push_back(fpge::attention(g, g.param(ps, wr), h, r, t));
  }
  int weights = g.softmax(g.concat(scores, 0), 0);
  auto ev = forward(g, ps);
  for (int n = 0; n < 3; ++n) {
    CHECK(ev.value(scores[n]).data[0] == 0.0);
    CHECK(ev.value(weights).data[n] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("attention: identity projection with small vectors approximates h^T h") {
  ParamStore ps;
  Tensor eye(4, 4);
  for (int i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  int wr = ps.add("wr", eye);
  Tensor h(4, 1, {0.01, -0.02, 0.015, 0.005});
  Graph g;
  int hn = g.constant(h);
  int rn = g.constant(Tensor(4, 1));
  int score = fpge::attention(g, g.param(ps, wr), hn, rn, hn);
  auto ev = forward(g, ps);
  double hh = 0.0;
  for (double v : h.data) hh += v * v;
  CHECK(ev.value(score).data[0] == doctest::Approx(hh).epsilon(1e-3));
  CHECK(ev.value(score).data[0] > 0.0);
}

TEST_CASE("attention: random instance matches the direct formula") {
  Rng rng(18);
  ParamStore ps;
  int wr = ps.add("wr", random_tensor(4, 4, rng));
  Tensor h = random_tensor(4, 1, rng), r = random_tensor(4, 1, rng),
         t = random_tensor(4, 1, rng);
  Graph g;
  int score = fpge::attention(g, g.param(ps, wr), g.constant(h), g.constant(r),
                              g.constant(t));
  auto ev = forward(g, ps);

  const Tensor& W = ps.value(wr);
  double want = 0.0;
  for (int i = 0; i < 4; ++i) {
    double wt = 0.0, wh = 0.0;
    for (int j = 0; j < 4; ++j) {
      wt += W.at(i, j) * t.data[j];
      wh += W.at(i, j) * h.data[j];
    }
    want += wt * std::tanh(wh + r.data[i]);
  }
  CHECK(ev.value(score).data[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("information passing: aggregation is the attention-weighted tail sum") {
  auto m = make_micro();
  int item = 0;
  REQUIRE(m->graph.neighbors(item).size() >= 2);
  Graph g;
  Model::FpgeCache cache;
  int agg = m->model->build_head_agg(g, item, cache);
  auto ev = forward(g, m->model->params());

  // Recompute: weights from the softmax node found via the cache-built
  // structure cross-checked against a manual softmax of the score values.
  // Tails read straight from the parameter table.
  const auto& edges = m->graph.neighbors(item);
  int n = static_cast<int>(edges.size());
  // Scores recomputed with the attention formula oracle.
  const ParamStore& ps = m->model->params();
  int d = m->model->config().d;
  // etilde oracle: cross&compress stack on (v, e) columns.
  std::vector<double> v(d), e(d);
  for (int k = 0; k < d; ++k) {
    v[k] = ps.value(m->model->seq().item_table).at(k, item);
    e[k] = ps.value(m->model->cip().item_entity_table).at(k, item);
  }
  for (const auto& L : m->model->cip().layers) {
    std::vector<double> v2, e2;
    dense_cross(v, e, ps.value(L.w_vv), ps.value(L.w_ev), ps.value(L.w_ve),
                ps.value(L.w_ee), ps.value(L.b_v), ps.value(L.b_e), v2, e2);
    v = v2;
    e = e2;
  }
  std::vector<std::vector<double>> tails(n, std::vector<double>(d));
  std::vector<double> scores(n);
  for (int i = 0; i < n; ++i) {
    const Triplet& tr = m->graph.triplets[edges[i]];
    for (int k = 0; k < d; ++k)
      tails[i][k] =
          ps.value(m->model->fpge().tail_table).at(k, tr.tail - m->graph.num_items);
    // relation vector via the MLP oracle
    int num_rel = static_cast<int>(m->graph.relation_names.size());
    std::vector<double> x(num_rel, 0.0);
    x[tr.relation] = 1.0;
    for (size_t l = 0; l < m->model->fpge().rel_mlp_w.size(); ++l) {
      const Tensor& w = ps.value(m->model->fpge().rel_mlp_w[l]);
      const Tensor& b = ps.value(m->model->fpge().rel_mlp_b[l]);
      std::vector<double> next(w.rows);
      for (int a = 0; a < w.rows; ++a) {
        double s = b.data[a];
        for (int c = 0; c < w.cols; ++c) s += w.at(a, c) * x[c];
        next[a] = sigmoid(s);
      }
      x = std::move(next);
    }
    const Tensor& W = ps.value(m->model->fpge().attention_w[tr.relation]);
    double sc = 0.0;
    for (int a = 0; a < d; ++a) {
      double wt = 0.0, wh = 0.0;
      for (int c = 0; c < d; ++c) {
        wt += W.at(a, c) * tails[i][c];
        wh += W.at(a, c) * e[c];
      }
      sc += wt * std::tanh(wh + x[a]);
    }
    scores[i] = sc;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  std::vector<double> want(d, 0.0);
  for (int i = 0; i < n; ++i) {
    double w = std::exp(scores[i] - mx) / z;
    for (int k = 0; k < d; ++k) want[k] += w * tails[i][k];
  }
  for (int k = 0; k < d; ++k)
    CHECK(ev.value(agg).data[k] == doctest::Approx(want[k]).epsilon(1e-10));
}

TEST_CASE("information passing: a four-neighbor head aggregates all four tails") {
  // An item connected to a category, a director, a gender value, and an age
  // bucket, mirroring the movie example.
  ToyData toy({"age", "gender"});
  int frozen = toy.item({{"category", "Animation"}, {"director", "C. Buck"}});
  for (int i = 0; i < 3; ++i) toy.interact(toy.user({"20-29", "Female"}), frozen);
  Dataset d = toy.build();
  auto pairs = all_pairs(d);
  std::vector<AdoptionStats> stats = {build_adoption_stats(d, pairs, {"age"}),
                                      build_adoption_stats(d, pairs, {"gender"})};
  auto graph = build_graph(d, stats);
  REQUIRE(graph.neighbors(frozen).size() == 4);
  std::set<std::string> tails;
  for (int ti : graph.neighbors(frozen))
    tails.insert(graph.entities[graph.triplets[ti].tail].name);
  CHECK(tails == std::set<std::string>{"Animation", "C. Buck", "Female", "20-29"});

  ModelConfig cfg = micro_config();
  Rng rng(20);
  Model model(cfg, d.num_users, d.num_items, graph, rng);
  Graph g;
  Model::FpgeCache cache;
  int agg = model.build_head_agg(g, frozen, cache);
  g.mark_output("agg", agg);
  auto ev = forward(g, model.params());
  CHECK(ev.output("agg").rows == cfg.d);
}

TEST_CASE("information passing: equal scores average the tails, isolated heads pass through") {
  auto m = make_micro();
  // Zero attention projections force equal scores.
  for (int id : m->model->fpge().attention_w) m->model->params().value(id).fill(0.0);
  int item = 0;
  const auto& edges = m->graph.neighbors(item);
  int n = static_cast<int>(edges.size());
  REQUIRE(n >= 2);
  Graph g;
  Model::FpgeCache cache;
  int agg = m->model->build_head_agg(g, item, cache);
  auto ev = forward(g, m->model->params());
  int d = m->model->config().d;
  for (int k = 0; k < d; ++k) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      const Triplet& tr = m->graph.triplets[edges[i]];
      mean += m->model->params()
                  .value(m->model->fpge().tail_table)
                  .at(k, tr.tail - m->graph.num_items) /
              n;
    }
    CHECK(ev.value(agg).data[k] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("tail prediction: orthogonal tail scores 0.5, aligned tail saturates") {
  auto m = make_micro();
  const auto& edges = m->graph.neighbors(0);
  REQUIRE(!edges.empty());
  const Triplet& tr = m->graph.triplets[edges[0]];
  int col = tr.tail - m->graph.num_items;
  ParamStore& ps = m->model->params();
  int table = m->model->fpge().tail_table;

  // Zero tail embedding: t . t_hat = 0 regardless of t_hat.
  for (int k = 0; k < m->model->config().d; ++k) ps.value(table).at(k, col) = 0.0;
  {
    Graph g;
    Model::FpgeCache cache;
    int b = m->model->build_triplet_score(g, tr, cache);
    auto ev = forward(g, ps);
    CHECK(ev.value(b).data[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
  // Large positive tail embedding against a sigmoid-positive t_hat saturates
  // toward 1 (equality allowed: f64 rounds once the logit passes ~36).
  for (int k = 0; k < m->model->config().d; ++k) ps.value(table).at(k, col) = 8.0;
  {
    Graph g;
    Model::FpgeCache cache;
    int b = m->model->build_triplet_score(g, tr, cache);
    auto ev = forward(g, ps);
    CHECK(ev.value(b).data[0] > 1.0 - 1e-9);
    CHECK(ev.value(b).data[0] <= 1.0);
  }
}

TEST_CASE("triplet scores stay in (0,1) and match a composed oracle shape") {
  auto m = make_micro();
  Rng rng(21);
  std::vector<int> prot = {m->graph.relation_id("age"), m->graph.relation_id("gender")};
  for (int item = 0; item < m->data.num_items; ++item) {
    auto pos = fair_sample_positives(m->graph, item, prot, 3, rng);
    Graph g;
    Model::FpgeCache cache;
    for (const auto& t : pos) {
      int b = m->model->build_triplet_score(g, t, cache);
      auto ev = forward(g, m->model->params());
      CHECK(ev.value(b).data[0] > 0.0);
      CHECK(ev.value(b).data[0] < 1.0);
    }
  }
}

TEST_CASE("fpge objective: equal positive and negative scores cancel") {
  auto m = make_micro();
  Rng rng(22);
  std::vector<int> prot = {0, 1};
  auto pos = fair_sample_positives(m->graph, 0, prot, 3, rng);
  TripletBatch batch;
  batch.positives = pos;
  batch.negatives = pos;  // identical scores on both sides
  Graph g;
  int obj = m->model->build_fpge_objective(g, batch, 1.0);
  auto ev = forward(g, m->model->params());
  CHECK(ev.value(obj).data[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fpge objective: saturated scores give minus lambda1 per pair") {
  auto m = make_micro();
  const auto& edges0 = m->graph.neighbors(0);
  REQUIRE(edges0.size() >= 2);
  Triplet pos = m->graph.triplets[edges0[0]];
  Triplet neg = m->graph.triplets[edges0[1]];
  ParamStore& ps = m->model->params();
  int table = m->model->fpge().tail_table;
  int d = m->model->config().d;
  for (int k = 0; k < d; ++k) {
    ps.value(table).at(k, pos.tail - m->graph.num_items) = 1e4;   // b -> 1
    ps.value(table).at(k, neg.tail - m->graph.num_items) = -1e4;  // b -> 0
  }
  TripletBatch batch;
  batch.positives = {pos};
  batch.negatives = {neg};
  Graph g;
  int obj = m->model->build_fpge_objective(g, batch, 1.0);
  auto ev = forward(g, m->model->params());
  CHECK(ev.value(obj).data[0] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("fpge objective gradients pass finite differences") {
  auto m = make_micro();
  Rng rng(23);
  std::vector<int> prot = {0, 1};
  std::vector<Triplet> pos;
  for (int item = 0; item < 3; ++item) {
    auto p = fair_sample_positives(m->graph, item, prot, 1, rng);
    pos.insert(pos.end(), p.begin(), p.end());
  }
  auto batch = sample_negatives(m->graph, pos, rng);
  REQUIRE(!batch.positives.empty());
  Graph g;
  int obj = m->model->build_fpge_objective(g, batch, 1.0);
  CHECK(max_grad_rel_err(g, m->model->params(), obj) < 1e-6);
}

// ---------------------------------------------------------------------------
// Prediction

TEST_CASE("predict: all-zero parameters score zero") {
  auto m = make_micro();
  ParamStore& ps = m->model->params();
  for (int i = 0; i < ps.count(); ++i) ps.value(i).fill(0.0);
  Graph g;
  int y = m->model->build_predict(g, 0, {0, 1, 2}, 3);
  auto ev = forward(g, ps);
  CHECK(ev.value(y).data[0] == 0.0);
}

TEST_CASE("predict decomposes into user, sequence, and item-item terms") {
  auto m = make_micro();
  int user = 1;
  std::vector<int> window = {2, 0, 4};
  int candidate = 5;
  Graph g;
  int y = m->model->build_predict(g, user, window, candidate);
  int ubar = m->model->build_user_vec(g, user);
  int s = m->model->build_seq_feature(g, user, window);
  int wsum = m->model->build_window_sum(g, window);
  auto [vbar, et] = m->model->build_cipl(g, candidate);
  (void)et;
  int term1 = g.matmul(g.transpose(ubar), vbar);
  int term2 = g.matmul(g.transpose(s), vbar);
  int term3 = seqmodel::item_item_score(g, wsum, vbar);
  auto ev = forward(g, m->model->params());
  double want = ev.value(term1).data[0] + ev.value(term2).data[0] +
                ev.value(term3).data[0];
  CHECK(ev.value(y).data[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("item-item score examples: orthogonal zero, aligned unit") {
  Graph g;
  ParamStore ps;
  int a = g.input("a", 3, 1);
  int b = g.input("b", 3, 1);
  int score = seqmodel::item_item_score(g, a, b);
  auto ev = forward(g, ps, {{"a", Tensor(3, 1, {1, 0, 0})}, {"b", Tensor(3, 1, {0, 1, 0})}});
  CHECK(ev.value(score).data[0] == 0.0);
  auto ev2 = forward(g, ps, {{"a", Tensor(3, 1, {0, 1, 0})}, {"b", Tensor(3, 1, {0, 1, 0})}});
  CHECK(ev2.value(score).data[0] == 1.0);
}

TEST_CASE("predict is linear in the candidate embedding") {
  auto m = make_micro();
  auto q = m->model->query_vector(1, {0, 1, 2});
  auto vbar = m->model->cipl_item_embedding(4);
  double base = 0.0, scaled = 0.0;
  for (size_t k = 0; k < q.size(); ++k) {
    base += q[k] * vbar[k];
    scaled += q[k] * (2.5 * vbar[k]);
  }
  CHECK(scaled == doctest::Approx(2.5 * base).epsilon(1e-12));
}

TEST_CASE("fast scoring path agrees with the graph path") {
  for (bool no_gate : {false, true}) {
    for (bool no_conv : {false, true}) {
      ModelConfig cfg = micro_config();
      cfg.no_gating = no_gate;
      cfg.no_conv = no_conv;
      auto m = make_micro(cfg, 31);
      for (int user = 0; user < 3; ++user) {
        std::vector<int> window = {user, (user + 2) % 6, (user + 4) % 6};
        for (int cand = 0; cand < m->data.num_items; ++cand) {
          Graph g;
          int y = m->model->build_predict(g, user, window, cand);
          auto ev = forward(g, m->model->params());
          double fast = m->model->predict_fast(user, window, cand);
          CHECK(ev.value(y).data[0] == doctest::Approx(fast).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("predict gradients pass finite differences on the micro model") {
  auto m = make_micro();
  Graph g;
  int y = m->model->build_predict(g, 2, {1, 3, 5}, 0);
  CHECK(max_grad_rel_err(g, m->model->params(), y) < 1e-6);
}

TEST_CASE("gate output is bounded by the raw embeddings") {
  auto m = make_micro();
  Graph g;
  int s = seqmodel::stacked_embeddings(g, m->model->params(),
                                       m->model->seq().item_table, {0, 2, 4});
  int table = g.param(m->model->params(), m->model->seq().user_table);
  int u = g.slice(table, 0, m->model->config().d, 1, 2);
  int sf = seqmodel::gate(g, m->model->params(), m->model->seq(), u, s);
  auto ev = forward(g, m->model->params());
  for (size_t k = 0; k < ev.value(sf).size(); ++k)
    CHECK(std::fabs(ev.value(sf).data[k]) <= std::fabs(ev.value(s).data[k]));
}

TEST_CASE("horizontal pooled values stay inside the tanh range") {
  auto m = make_micro();
  Graph g;
  int s = m->model->build_seq_feature(g, 0, {1, 2, 3});
  auto ev = forward(g, m->model->params());
  for (int j = 0; j < m->model->config().n_h; ++j) {
    CHECK(ev.value(s).data[j] > -1.0);
    CHECK(ev.value(s).data[j] < 1.0);
  }
}
