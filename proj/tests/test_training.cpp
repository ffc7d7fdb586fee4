#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fairsr/synth.hpp"
#include "fairsr/trainer.hpp"
#include "support/gradient_check.hpp"

using namespace fairsr;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.d = 8;
  cfg.n_h = 4;
  cfg.n_v = 4;
  cfg.t = 3;
  cfg.g = 2;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.lr = 5e-3;
  cfg.seed = 5;
  return cfg;
}

Dataset tiny_data(int users = 20) {
  ToyChainSpec spec;
  spec.users = users;
  spec.items = 30;
  spec.run_length = 12;
  spec.noise = 0.0;
  spec.seed = 3;
  return synth_toy_chain(spec);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("config: serialize/parse round trip and validation") {
  TrainConfig cfg = tiny_config();
  cfg.protected_attrs = {"gender", "age"};
  cfg.random_sampling = true;
  cfg.lambda2 = 5e-7;
  TrainConfig back = parse_config(serialize_config(cfg));
  CHECK(serialize_config(back) == serialize_config(cfg));
  CHECK(config_hash(back) == config_hash(cfg));

  TrainConfig bad = cfg;
  bad.epsilon = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lambda2 = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("nonsense=1\n"), std::invalid_argument);
}

TEST_CASE("bpr loss: equal scores cost ln 2 per pair") {
  Dataset data = tiny_data();
  Trainer tr(tiny_config(), data);
  ParamStore& ps = tr.model().params();
  for (int i = 0; i < ps.count(); ++i) ps.value(i).fill(0.0);
  std::vector<BprTuple> batch = {{0, {0, 1, 2}, 3, 4}, {1, {2, 3, 4}, 5, 6}};
  Graph g;
  int loss = tr.model().build_bpr_loss(g, batch);
  auto ev = forward(g, ps);
  CHECK(ev.value(loss).data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bpr loss: a large positive margin drives the loss to zero") {
  TrainConfig cfg = tiny_config();
  cfg.cipl_layers = 1;
  Dataset data = tiny_data();
  Trainer tr(cfg, data);
  ParamStore& ps = tr.model().params();
  for (int i = 0; i < ps.count(); ++i) ps.value(i).fill(0.0);
  const auto& cip = tr.model().cip().layers[0];
  ps.value(cip.w_vv).data[0] = 1.0;  // C w = v (e^T w) passes v through
  int pos = 3, neg = 4;
  ps.value(tr.model().cip().item_entity_table).at(0, pos) = 1.0;
  ps.value(tr.model().cip().item_entity_table).at(0, neg) = 1.0;
  ps.value(tr.model().seq().item_table).at(0, pos) = 100.0;  // vbar_pos >> vbar_neg

  std::vector<BprTuple> batch = {{0, {1, 2, 5}, pos, neg}};
  Graph g;
  int loss = tr.model().build_bpr_loss(g, batch);
  auto ev = forward(g, ps);
  CHECK(ev.value(loss).data[0] < 1e-20);
  CHECK(ev.value(loss).data[0] >= 0.0);
}

TEST_CASE("bpr loss: random tiny model matches the direct formula") {
  Dataset data = tiny_data();
  Trainer tr(tiny_config(), data);
  std::vector<BprTuple> batch = {
      {0, {0, 1, 2}, 3, 7}, {2, {4, 5, 6}, 8, 1}, {5, {2, 4, 6}, 9, 0}};
  Graph g;
  int loss = tr.model().build_bpr_loss(g, batch);
  auto ev = forward(g, tr.model().params());

  double want = 0.0;
  for (const auto& tup : batch) {
    double yp = tr.model().predict_fast(tup.user, tup.window, tup.positive);
    double yn = tr.model().predict_fast(tup.user, tup.window, tup.negative);
    want += -std::log(1.0 / (1.0 + std::exp(-(yp - yn))));
  }
  want /= batch.size();
  CHECK(ev.value(loss).data[0] == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("bpr loss gradients pass finite differences") {
  TrainConfig cfg = tiny_config();
  Dataset data = tiny_data(8);
  Trainer tr(cfg, data);
  std::vector<BprTuple> batch = {{0, {0, 1, 2}, 3, 7}, {1, {4, 5, 6}, 8, 2}};
  Graph g;
  int loss = tr.model().build_bpr_loss(g, batch);
  CHECK(fairsr::testing::max_grad_rel_err(g, tr.model().params(), loss) < 1e-6);
}

TEST_CASE("joint schedule: epsilon SR updates per FPGE update") {
  TrainConfig cfg = tiny_config();
  cfg.epsilon = 3;
  Dataset data = tiny_data();
  Trainer tr(cfg, data);
  TrainResult result;
  tr.joint_iteration(result);
  tr.joint_iteration(result);
  CHECK(result.sr_updates == 6);
  CHECK(result.fpge_updates == 2);
  CHECK(result.sr_updates == 3 * result.fpge_updates);
}

TEST_CASE("no_fpge: the trace contains SR entries only") {
  TrainConfig cfg = tiny_config();
  cfg.no_fpge = true;
  Dataset data = tiny_data();
  Trainer tr(cfg, data);
  TrainResult result;
  for (int i = 0; i < 4; ++i) tr.joint_iteration(result);
  CHECK(result.fpge_updates == 0);
  for (const auto& e : result.trace) CHECK(e.phase == "sr");
}

TEST_CASE("SR loss decreases in moving average on a 20-user set") {
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 32;
  Dataset data = tiny_data(20);
  Trainer tr(cfg, data);
  TrainResult result;
  while (result.sr_updates < 60) tr.joint_iteration(result);
  std::vector<double> sr;
  for (const auto& e : result.trace)
    if (e.phase == "sr") sr.push_back(e.value);
  auto window_mean = [&](size_t from) {
    double s = 0.0;
    for (size_t i = from; i < from + 10; ++i) s += sr[i];
    return s / 10.0;
  };
  double first = window_mean(0), mid = window_mean(25), last = window_mean(50);
  CHECK(mid < first);
  CHECK(last < mid);
}

TEST_CASE("l2 term: gradients differ from the unregularized run by 2*lambda2*theta") {
  Dataset data = tiny_data(10);
  TrainConfig with = tiny_config();
  with.lambda2 = 0.01;
  TrainConfig without = tiny_config();
  without.lambda2 = 0.0;
  Trainer a(with, data);
  Trainer b(without, data);

  std::vector<BprTuple> batch = {{0, {0, 1, 2}, 3, 7}, {1, {4, 5, 6}, 8, 2}};
  a.sr_loss_with_grads(batch);
  b.sr_loss_with_grads(batch);
  ParamStore& pa = a.model().params();
  ParamStore& pb = b.model().params();
  for (int i = 0; i < pa.count(); ++i)
    for (size_t k = 0; k < pa.grad(i).size(); ++k) {
      double want = pb.grad(i).data[k] + 2.0 * with.lambda2 * pa.value(i).data[k];
      CHECK(pa.grad(i).data[k] == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("joint loss equals SR + FPGE + L2 recomputed term by term") {
  Dataset data = tiny_data(10);
  TrainConfig cfg = tiny_config();
  cfg.lambda2 = 1e-4;
  Trainer tr(cfg, data);
  auto srb = tr.next_sr_batch();
  auto fpb = tr.next_fpge_batch();
  REQUIRE(!fpb.positives.empty());

  double joint = tr.joint_loss_value(srb, fpb);
  double reg = cfg.lambda2 * tr.model().params().squared_norm();
  double sr_only = tr.sr_loss_with_grads(srb) - reg;
  double fpge_only = tr.fpge_loss_with_grads(fpb) - reg;
  CHECK(joint == doctest::Approx(sr_only + fpge_only + reg).epsilon(1e-10));
}

TEST_CASE("checkpoint: save-restore-save produces identical bytes") {
  Dataset data = tiny_data(8);
  TrainConfig cfg = tiny_config();
  Trainer tr(cfg, data);
  uint64_t hash = config_hash(cfg);
  std::string p1 = "/tmp/fairsr_ckpt_a.bin", p2 = "/tmp/fairsr_ckpt_b.bin";
  save_checkpoint(tr.model().params(), hash, p1);
  load_checkpoint(tr.model().params(), hash, p1);
  save_checkpoint(tr.model().params(), hash, p2);
  CHECK(read_file(p1) == read_file(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("checkpoint: restore under a different config is rejected") {
  Dataset data = tiny_data(8);
  TrainConfig cfg = tiny_config();
  Trainer tr(cfg, data);
  std::string path = "/tmp/fairsr_ckpt_c.bin";
  save_checkpoint(tr.model().params(), config_hash(cfg), path);

  TrainConfig other = cfg;
  other.d = 16;
  other.n_h = 8;
  other.n_v = 8;
  CHECK_THROWS_WITH_AS(load_checkpoint(tr.model().params(), config_hash(other), path),
                       doctest::Contains("hash mismatch"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: evaluation identical before save and after restore") {
  Dataset data = tiny_data(16);
  TrainConfig cfg = tiny_config();
  Trainer tr(cfg, data);
  TrainResult r;
  for (int i = 0; i < 3; ++i) tr.joint_iteration(r);

  auto before = tr.evaluate(tr.splits().test, 5);
  std::string path = "/tmp/fairsr_ckpt_d.bin";
  save_checkpoint(tr.model().params(), config_hash(cfg), path);
  for (int i = 0; i < tr.model().params().count(); ++i)
    tr.model().params().value(i).fill(0.123);  // clobber
  load_checkpoint(tr.model().params(), config_hash(cfg), path);
  auto after = tr.evaluate(tr.splits().test, 5);
  REQUIRE(before.topk.size() == after.topk.size());
  for (size_t i = 0; i < before.topk.size(); ++i) CHECK(before.topk[i] == after.topk[i]);
  std::filesystem::remove(path);
}

TEST_CASE("determinism: identical seeds give identical traces and reports") {
  Dataset data = tiny_data(16);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;

  std::string d1 = "/tmp/fairsr_run_a", d2 = "/tmp/fairsr_run_b";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  {
    Trainer t1(cfg, data);
    t1.train(d1);
  }
  {
    Trainer t2(cfg, data);
    t2.train(d2);
  }
  CHECK(read_file(d1 + "/trace.tsv") == read_file(d2 + "/trace.tsv"));
  CHECK(read_file(d1 + "/model.ckpt") == read_file(d2 + "/model.ckpt"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("nan loss aborts with a checkpoint left behind") {
  Dataset data = tiny_data(8);
  TrainConfig cfg = tiny_config();
  Trainer tr(cfg, data);
  // Poison a parameter so the first batch loss is non-finite.
  tr.model().params().value(0).data[0] = std::numeric_limits<double>::quiet_NaN();
  std::string dir = "/tmp/fairsr_run_nan";
  std::filesystem::remove_all(dir);
  CHECK_THROWS(tr.train(dir));
  CHECK(std::filesystem::exists(dir + "/abort.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("precision32 flag rounds parameters through float") {
  Dataset data = tiny_data(8);
  TrainConfig cfg = tiny_config();
  cfg.precision32 = true;
  Trainer tr(cfg, data);
  TrainResult r;
  tr.joint_iteration(r);
  const ParamStore& ps = tr.model().params();
  for (int i = 0; i < ps.count(); ++i)
    for (double v : ps.value(i).data)
      CHECK(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("32-bit gradients track the 64-bit ones to 1e-4") {
  Dataset data = tiny_data(8);
  TrainConfig c64 = tiny_config();
  TrainConfig c32 = tiny_config();
  c32.precision32 = true;
  Trainer a(c64, data);
  Trainer b(c32, data);
  std::vector<BprTuple> batch = {{0, {0, 1, 2}, 3, 7}, {1, {4, 5, 6}, 8, 2}};
  a.sr_loss_with_grads(batch);
  b.sr_loss_with_grads(batch);
  const ParamStore& pa = a.model().params();
  const ParamStore& pb = b.model().params();
  for (int i = 0; i < pa.count(); ++i)
    for (size_t k = 0; k < pa.grad(i).size(); ++k) {
      double scale = std::max({std::fabs(pa.grad(i).data[k]),
                               std::fabs(pb.grad(i).data[k]), 1e-2});
      CHECK(std::fabs(pa.grad(i).data[k] - pb.grad(i).data[k]) / scale < 1e-4);
    }
}
