#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "audits.hpp"
#include "pepsi/checkpoint.hpp"
#include "pepsi/training.hpp"

using namespace pepsi;

namespace {

Var<double> scores(Graph<double>& g, std::initializer_list<double> v) {
  Tensor<double> t(Shape{1, 1, 1, static_cast<int>(v.size())});
  std::size_t i = 0;
  for (double x : v) t[i++] = x;
  return g.constant(t);
}

double scalar(const Var<double>& v) { return v.value()[0]; }

}  // namespace

TEST_CASE("hinge discriminator loss") {
  Graph<double> g(false);
  CHECK(scalar(d_hinge_loss(scores(g, {0}), scores(g, {0}))) == doctest::Approx(2.0));
  CHECK(scalar(d_hinge_loss(scores(g, {1, 3}), scores(g, {-1, -2}))) == 0.0);
  CHECK(scalar(d_hinge_loss(scores(g, {0.5}), scores(g, {-0.25}))) == doctest::Approx(1.25));
  CHECK(scalar(d_hinge_loss(scores(g, {0, 2}), scores(g, {0, -2}))) == doctest::Approx(1.0));
}

TEST_CASE("generator adversarial loss and its gradient") {
  Graph<double> g;
  ParamSet<double> ps;
  Parameter<double>& s = ps.add("s", Tensor<double>(Shape{1, 1, 2, 2}, 2.0));
  const Var<double> loss = g_adv_loss(g.param(s));
  CHECK(scalar(loss) == doctest::Approx(-2.0));
  g.backward(loss);
  for (double v : s.grad.data()) CHECK(v == doctest::Approx(-0.25));
}

TEST_CASE("generator loss weighting") {
  Graph<double> g(false);
  const LossWeights w;
  const Var<double> a = g.constant(Tensor<double>(Shape{1, 3, 2, 2}, 0.1));
  const Var<double> b = g.constant(Tensor<double>(Shape{1, 3, 2, 2}, 0.0));
  CHECK(scalar(g_loss(a, b, scores(g, {0}), w)) == doctest::Approx(1.0));
  CHECK(scalar(g_loss(b, b, scores(g, {1}), w)) == doctest::Approx(-0.1));
  const Var<double> c = g.constant(Tensor<double>(Shape{1, 1, 1, 2}, 0.0));
  CHECK(scalar(coarse_loss(scores(g, {1, -2}), c)) == doctest::Approx(1.5));
}

TEST_CASE("total loss schedule") {
  Graph<double> g(false);
  const LossWeights w;
  const Var<double> lg = scores(g, {1}), lc = scores(g, {2});
  CHECK(scalar(total_loss(lg, lc, 0, 100, w)) == doctest::Approx(11.0));
  CHECK(scalar(total_loss(lg, lc, 50, 100, w)) == doctest::Approx(6.0));
  CHECK(scalar(total_loss(lg, lc, 100, 100, w)) == doctest::Approx(1.0));
  CHECK_THROWS(total_loss(lg, lc, 0, 0, w));
  CHECK_THROWS(total_loss(lg, lc, 101, 100, w));
}

TEST_CASE("learning-rate decay") {
  TrainState s;
  s.k_max = 100;
  CHECK(s.lr_g_at(89) == 1e-4);
  CHECK(s.lr_g_at(90) == doctest::Approx(1e-5));
  CHECK(s.lr_d_at(0) == 4e-4);
  CHECK(s.lr_d_at(99) == doctest::Approx(4e-5));
}

TEST_CASE("composite output keeps the background") {
  std::mt19937_64 rng(1);
  const Tensor<float> gen = audit::uniform({1, 3, 8, 8}, rng, -2, 2).cast<float>();
  const Tensor<float> orig = audit::uniform({1, 3, 8, 8}, rng).cast<float>();
  const Mask m = gen_square_mask(8, 8, Box{2, 2, 4, 4});
  const Tensor<float> out = composite_output(gen, orig, m);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const float want = m.at(y, x) ? std::clamp(gen.at(0, c, y, x), -1.0f, 1.0f) : orig.at(0, c, y, x);
        CHECK(out.at(0, c, y, x) == want);
      }
  CHECK(composite_output(gen, orig, Mask(8, 8)) == orig);
}

TEST_CASE("training step smoke") {
  const TrainConfig cfg = audit::tiny_config();
  Trainer t(cfg);
  const auto data = audit::tiny_dataset(cfg);
  const Batch b = sample_batch(data, cfg, 0);
  CHECK(b.images.shape() == Shape{2, 3, 32, 32});
  CHECK(b.masks.shape() == Shape{2, 1, 32, 32});
  const StepLog log = train_step(t.gen, t.red, t.state, b.images, b.masks, cfg);
  CHECK(std::isfinite(log.loss_d));
  CHECK(std::isfinite(log.loss_total));
  CHECK(log.loss_d >= 0);
  CHECK(t.state.k == 1);
  for (const auto& [name, s] : t.state.adam_g.states()) CHECK(s.t == 1);
}

TEST_CASE("steps touch only the network they update") {
  const TrainConfig cfg = audit::tiny_config();
  Trainer a(cfg), b(cfg);
  const Batch batch = sample_batch(audit::tiny_dataset(cfg), cfg, 0);
  d_step(a.gen, a.red, a.state, batch.images, batch.masks, cfg);
  CHECK(audit::same_params(a.gen.params(), b.gen.params()));
  CHECK_FALSE(audit::same_params(a.red.params(), b.red.params()));
  CHECK(a.state.adam_g.states().empty());

  Trainer c(cfg);
  const auto u_before = c.red.spectral();
  g_step(c.gen, c.red, c.state, batch.images, batch.masks, cfg);
  CHECK(audit::same_params(c.red.params(), b.red.params()));
  CHECK_FALSE(audit::same_params(c.gen.params(), b.gen.params()));
  for (std::size_t i = 0; i < u_before.size(); ++i) CHECK(u_before[i].second.u == c.red.spectral()[i].second.u);
}

TEST_CASE("zero learning rates leave every weight bit-identical") {
  TrainConfig cfg = audit::tiny_config();
  cfg.lr_g = 0;
  cfg.lr_d = 0;
  Trainer a(cfg), b(cfg);
  const Batch batch = sample_batch(audit::tiny_dataset(cfg), cfg, 0);
  train_step(a.gen, a.red, a.state, batch.images, batch.masks, cfg);
  CHECK(audit::same_params(a.gen.params(), b.gen.params()));
  CHECK(audit::same_params(a.red.params(), b.red.params()));
}

TEST_CASE("ten steps are bit-identical across runs") {
  const TrainConfig cfg = audit::tiny_config();
  const auto data = audit::tiny_dataset(cfg);
  Trainer a(cfg), b(cfg);
  for (int k = 0; k < 10; ++k) {
    const Batch ba = sample_batch(data, cfg, k), bb = sample_batch(data, cfg, k);
    CHECK(ba.images == bb.images);
    CHECK(ba.masks == bb.masks);
    train_step(a.gen, a.red, a.state, ba.images, ba.masks, cfg);
    train_step(b.gen, b.red, b.state, bb.images, bb.masks, cfg);
  }
  CHECK(audit::same_params(a.gen.params(), b.gen.params()));
  CHECK(audit::same_params(a.red.params(), b.red.params()));
  CHECK(sample_batch(data, cfg, 3).masks != sample_batch(data, cfg, 4).masks);
}

TEST_CASE("normalized discriminator kernels stay near unit norm") {
  const TrainConfig cfg = audit::tiny_config();
  Trainer t(cfg);
  const Batch batch = sample_batch(audit::tiny_dataset(cfg), cfg, 0);
  d_step(t.gen, t.red, t.state, batch.images, batch.masks, cfg);
  for (auto& [name, state] : t.red.spectral()) {
    const Tensor<float>& w = t.red.params().get(name).value;
    const double estimate = spectral_sigma(w, state, 0);
    SpectralState<float> fresh = make_spectral_state<float>(w.shape().w, 99);
    const double exact = spectral_sigma(w, fresh, 200);
    CHECK(exact / estimate >= 0.5);
    CHECK(exact / estimate <= 1.5);
  }
}

TEST_CASE("train loop writes logs and checkpoints") {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "pepsi_test_loop";
  std::filesystem::remove_all(dir);
  TrainConfig cfg = audit::tiny_config();
  cfg.k_max = 1;
  cfg.out_dir = dir.string();
  Trainer t(cfg);
  const auto data = audit::tiny_dataset(cfg);
  const Holdout h = make_holdout({data[0], data[1]}, cfg);
  const auto rows = train_loop(t, data, h);
  CHECK(rows.size() == 1);
  CHECK(std::filesystem::exists(dir / "ckpt_1.peps"));
  int ckpts = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) ckpts += e.path().extension() == ".peps";
  CHECK(ckpts == 1);
  std::ifstream csv(dir / "metrics.csv");
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header == kLogHeader);
  CHECK(row.rfind("1,", 0) == 0);
  CHECK_FALSE(std::getline(csv, extra));
  std::filesystem::remove_all(dir);
}

TEST_CASE("coarse path off runs one decoder pass per generator step") {
  TrainConfig cfg = audit::tiny_config();
  cfg.coarse_path = false;
  Trainer t(cfg);
  const Batch batch = sample_batch(audit::tiny_dataset(cfg), cfg, 0);
  t.gen.passes = {};
  const StepLog log = g_step(t.gen, t.red, t.state, batch.images, batch.masks, cfg);
  CHECK(t.gen.passes.encoder == 1);
  CHECK(t.gen.passes.decoder == 1);
  CHECK(log.loss_coarse == 0);
  CHECK(log.loss_total == log.loss_g);
}

TEST_CASE("configuration validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.image_size = 36;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.mask_mode = "circle";
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.k_max = 0;
  CHECK_THROWS(cfg.validate());
}
