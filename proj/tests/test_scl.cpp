#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "scl/loss.hpp"
#include "scl/model.hpp"
#include "scl/pairs.hpp"

using namespace scl;

namespace {

// latents with dialed-in cosine geometry: each 2-wide slice is a unit vector
// at a chosen angle, so D = 1 - cos(angle difference)
std::vector<double> angled(double inv_angle, double var_angle) {
  return {std::cos(inv_angle), std::sin(inv_angle), std::cos(var_angle), std::sin(var_angle)};
}

Tensor rows1(const std::vector<double>& v) { return Tensor({1, 4}, std::vector<double>(v)); }

double structured_loss(double th_inv_pos, double th_var_pos, double th_inv_neg,
                       const SclHyperparams& hp) {
  Tensor a = rows1(angled(0, 0));
  Tensor p = rows1(angled(th_inv_pos, th_var_pos));
  Tensor n = rows1(angled(th_inv_neg, 0.3));
  return contrastive_loss(a, p, n, {2, 2, 0}, hp).loss.item();
}

SclHyperparams hp_mode(TrainMode m, double beta = 1.0) {
  SclHyperparams hp;
  hp.mode = m;
  hp.beta = beta;
  return hp;
}

Rng& shared_rng() {
  static Rng rng(20250814);
  return rng;
}

Tensor rand_latents(int b, int d) {
  std::vector<double> v(static_cast<size_t>(b) * d);
  for (auto& x : v) x = shared_rng().uniform(-2.0, 2.0);
  // keep every slice norm well above the eps clamp
  for (int r = 0; r < b; ++r) v[static_cast<size_t>(r) * d] += (v[static_cast<size_t>(r) * d] >= 0 ? 1.0 : -1.0);
  return Tensor({b, d}, std::move(v));
}

}  // namespace

TEST(Scl, CosDistValues) {
  Tensor u({2}, {1, 0});
  EXPECT_NEAR(cos_dist(u, Tensor({2}, {1, 0})).item(), 0.0, 1e-15);
  EXPECT_NEAR(cos_dist(u, Tensor({2}, {0, 1})).item(), 1.0, 1e-15);
  EXPECT_NEAR(cos_dist(u, Tensor({2}, {-1, 0})).item(), 2.0, 1e-15);
  // identical vectors never go negative (clamped at 0)
  Tensor w({3}, {0.31, -1.7, 2.9});
  EXPECT_GE(cos_dist(w, w).item(), 0.0);
  EXPECT_NEAR(cos_dist(w, w).item(), 0.0, 1e-15);
}

TEST(Scl, HandComputedLossValues) {
  // D_inv_pos=0.5 (60 deg), D_var_pos=1 (90 deg), D_inv_neg=1 (90 deg)
  const double th60 = std::acos(0.5), th90 = std::acos(0.0);
  SclHyperparams hp = hp_mode(TrainMode::STRUCTURED, 1.0);
  EXPECT_NEAR(structured_loss(th60, th90, th90, hp), 0.25, 1e-9);
  // beta = 0 removes the variant factor: 0.5 / 1
  EXPECT_NEAR(structured_loss(th60, th90, th90, hp_mode(TrainMode::STRUCTURED, 0.0)), 0.5, 1e-9);
  // doubling the negative distance halves the loss: D_inv_neg = 2 (180 deg)
  EXPECT_NEAR(structured_loss(th60, th90, M_PI, hp), 0.125, 1e-9);
}

TEST(Scl, DiagnosticsMatchGeometry) {
  const double th60 = std::acos(0.5), th90 = std::acos(0.0);
  Tensor a = rows1(angled(0, 0));
  Tensor p = rows1(angled(th60, th90));
  Tensor n = rows1(angled(th90, 0.3));
  auto out = contrastive_loss(a, p, n, {2, 2, 0}, hp_mode(TrainMode::STRUCTURED));
  EXPECT_NEAR(out.d_inv_pos, 0.5, 1e-9);
  EXPECT_NEAR(out.d_var_pos, 1.0, 1e-9);
  EXPECT_NEAR(out.d_inv_neg, 1.0, 1e-9);
}

TEST(Scl, BetaZeroEqualsStandardContrastiveBitExact) {
  const LatentPartition part{3, 3, 2};
  for (int batch = 0; batch < 1000; ++batch) {
    Tensor za = rand_latents(4, 8);
    Tensor zp = rand_latents(4, 8);
    Tensor zn = rand_latents(4, 8);

    auto run = [&](const SclHyperparams& hp, std::vector<double>& grads) {
      Tensor a = Tensor(za.shape(), std::vector<double>(za.values())).set_requires_grad(true);
      Tensor p = Tensor(zp.shape(), std::vector<double>(zp.values())).set_requires_grad(true);
      Tensor n = Tensor(zn.shape(), std::vector<double>(zn.values())).set_requires_grad(true);
      auto out = contrastive_loss(a, p, n, part, hp);
      backward(out.loss);
      grads = a.grad();
      grads.insert(grads.end(), p.grad().begin(), p.grad().end());
      grads.insert(grads.end(), n.grad().begin(), n.grad().end());
      return out.loss.item();
    };
    std::vector<double> g_structured, g_standard;
    double v1 = run(hp_mode(TrainMode::STRUCTURED, 0.0), g_structured);
    double v2 = run(hp_mode(TrainMode::STANDARD_CONTRASTIVE, 5.0), g_standard);
    ASSERT_EQ(std::memcmp(&v1, &v2, sizeof v1), 0) << "batch " << batch;
    ASSERT_EQ(g_structured.size(), g_standard.size());
    ASSERT_EQ(std::memcmp(g_structured.data(), g_standard.data(),
                          g_structured.size() * sizeof(double)),
              0)
        << "batch " << batch;
  }
}

TEST(Scl, ScaleInvariance) {
  const LatentPartition part{3, 3, 2};
  SclHyperparams hp = hp_mode(TrainMode::STRUCTURED);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor za = rand_latents(3, 8), zp = rand_latents(3, 8), zn = rand_latents(3, 8);
    double ref = contrastive_loss(za, zp, zn, part, hp).loss.item();
    for (double s : {1e-3, 1.0, 1e3}) {
      auto scale = [&](const Tensor& t) {
        std::vector<double> v = t.values();
        for (auto& x : v) x *= s;
        return Tensor(t.shape(), std::move(v));
      };
      EXPECT_NEAR(contrastive_loss(scale(za), zp, zn, part, hp).loss.item(), ref, 1e-9);
      EXPECT_NEAR(contrastive_loss(za, scale(zp), zn, part, hp).loss.item(), ref, 1e-9);
      EXPECT_NEAR(contrastive_loss(za, zp, scale(zn), part, hp).loss.item(), ref, 1e-9);
    }
  }
}

TEST(Scl, Monotonicities) {
  SclHyperparams hp = hp_mode(TrainMode::STRUCTURED, 1.0);
  const double d = 1e-4;
  // base angles: all distances strictly inside (0, 2) and above the floor
  double ti = 1.0, tv = 1.2, tn = 1.4;
  double base = structured_loss(ti, tv, tn, hp);

  // D_inv_pos up (angle up) -> loss up
  EXPECT_GT(structured_loss(ti + d, tv, tn, hp), base);
  // D_var_pos up -> loss down (the variant mechanism)
  EXPECT_LT(structured_loss(ti, tv + d, tn, hp), base);
  // D_inv_neg up -> loss down
  EXPECT_LT(structured_loss(ti, tv, tn + d, hp), base);
  // and beta up -> loss down with D_var_pos > 0 fixed
  EXPECT_LT(structured_loss(ti, tv, tn, hp_mode(TrainMode::STRUCTURED, 2.0)), base);
}

TEST(Scl, DenominatorFloorKeepsLossFinite) {
  // negative identical to anchor: D_inv_neg = 0, floored at 1e-4
  Tensor a = rows1(angled(0, 0));
  Tensor p = rows1(angled(std::acos(0.5), 0.7));
  auto out = contrastive_loss(a, p, a, {2, 2, 0}, hp_mode(TrainMode::STRUCTURED, 0.0));
  ASSERT_TRUE(std::isfinite(out.loss.item()));
  EXPECT_NEAR(out.loss.item(), 0.5 / 1e-4, 0.5);
}

TEST(Scl, NonNegativity) {
  const LatentPartition part{3, 3, 2};
  for (TrainMode m : {TrainMode::STRUCTURED, TrainMode::STANDARD_CONTRASTIVE}) {
    for (int trial = 0; trial < 250; ++trial) {
      auto out = contrastive_loss(rand_latents(3, 8), rand_latents(3, 8), rand_latents(3, 8), part,
                                  hp_mode(m, 1.5));
      EXPECT_GE(out.loss.item(), 0.0);
    }
  }
}

TEST(Scl, EmptySlicePolicies) {
  SclHyperparams hp = hp_mode(TrainMode::STRUCTURED, 1.0);
  // d_var = 0: factor 1, plain ratio
  Tensor a2({1, 2}, {1, 0});
  Tensor p2({1, 2}, {std::cos(std::acos(0.5)), std::sin(std::acos(0.5))});
  Tensor n2({1, 2}, {0, 1});
  auto out_iv = contrastive_loss(a2, p2, n2, {2, 0, 0}, hp);
  EXPECT_NEAR(out_iv.loss.item(), 0.5, 1e-9);
  EXPECT_DOUBLE_EQ(out_iv.d_var_pos, 0.0);

  // d_inv = 0: loss = 1 / (1 + beta * D_var_pos); 90 deg -> 0.5
  Tensor av({1, 2}, {1, 0});
  Tensor pv({1, 2}, {0, 1});
  auto out_vo = contrastive_loss(av, pv, Tensor({1, 2}, {1, 1}), {0, 2, 0}, hp);
  EXPECT_NEAR(out_vo.loss.item(), 0.5, 1e-9);
  EXPECT_DOUBLE_EQ(out_vo.d_inv_pos, 0.0);
  EXPECT_DOUBLE_EQ(out_vo.d_inv_neg, 0.0);
}

TEST(Scl, TaskLossOracles) {
  Tensor logits({1, 4}, {0, 0, 0, 0});
  EXPECT_NEAR(task_loss(TaskKind::CROSS_ENTROPY, logits, std::vector<int>{1}).item(),
              std::log(4.0), 1e-12);
  Tensor sharp({1, 2}, {10, -10});
  EXPECT_NEAR(task_loss(TaskKind::CROSS_ENTROPY, sharp, std::vector<int>{0}).item(), 2.0611536e-9,
              1e-12);

  Tensor x({2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(task_loss(TaskKind::MSE, x, x).item(), 0.0);
  Tensor zero = Tensor::zeros({2, 2});
  EXPECT_DOUBLE_EQ(task_loss(TaskKind::MSE, x, zero).item(), (1.0 + 4 + 9 + 16) / 4);
}

// ---- total_loss over a hand-built batch ----

namespace {

PairBatch tiny_batch() {
  PairBatch pb;
  pb.B = 2;
  pb.V = 1;
  pb.n_neg = 1;
  pb.channels = 1;
  pb.length = 8;
  Rng rng(42);
  auto fill = [&](int rows) {
    std::vector<double> v(static_cast<size_t>(rows) * 8);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
  };
  pb.raw = fill(2);
  pb.anchors = fill(2);
  pb.positives = fill(2);
  pb.labels = {0, 1};
  pb.source_idx = {0, 1};
  pb.neg_index = {1, 0};
  pb.negatives.resize(16);
  for (int i = 0; i < 2; ++i)
    std::copy(pb.anchors.begin() + pb.neg_index[static_cast<size_t>(i)] * 8,
              pb.anchors.begin() + (pb.neg_index[static_cast<size_t>(i)] + 1) * 8,
              pb.negatives.begin() + i * 8);
  return pb;
}

Model tiny_model(bool vae = false) {
  EncoderSpec e;
  e.kind = EncoderArch::MLP;
  e.in_channels = 1;
  e.in_length = 8;
  e.hidden = {6};
  e.latent = 6;
  e.vae = vae;
  HeadSpec h;
  h.kind = HeadKind::CLASSIFIER;
  h.hidden = {};
  h.output = 2;
  return Model::init(e, h, {2, 2, 2}, 5);
}

}  // namespace

TEST(Scl, TotalLossDecomposition) {
  PairBatch pb = tiny_batch();
  Model m = tiny_model();

  SclHyperparams hp = hp_mode(TrainMode::STRUCTURED, 1.0);
  hp.lambda = 2.0;
  auto lb = total_loss(pb, m, hp);
  EXPECT_DOUBLE_EQ(lb.total_value, lb.task + 2.0 * lb.contrastive);
  EXPECT_GT(lb.contrastive, 0.0);
  EXPECT_GT(lb.d_inv_neg, 0.0);

  hp.lambda = 0.0;
  auto lb0 = total_loss(pb, m, hp);
  EXPECT_DOUBLE_EQ(lb0.total_value, lb0.task);
}

TEST(Scl, NonContrastiveModes) {
  PairBatch pb = tiny_batch();
  Model m = tiny_model();
  for (TrainMode mode : {TrainMode::BASELINE, TrainMode::AUGMENT_ONLY}) {
    auto lb = total_loss(pb, m, hp_mode(mode));
    EXPECT_DOUBLE_EQ(lb.contrastive, 0.0);
    EXPECT_DOUBLE_EQ(lb.total_value, lb.task);
    EXPECT_DOUBLE_EQ(lb.d_inv_pos, 0.0);
    EXPECT_DOUBLE_EQ(lb.d_var_pos, 0.0);
    EXPECT_DOUBLE_EQ(lb.d_inv_neg, 0.0);
  }
  // BASELINE consumes raw windows, AUGMENT_ONLY consumes anchors
  auto lb_base = total_loss(pb, m, hp_mode(TrainMode::BASELINE));
  auto lb_aug = total_loss(pb, m, hp_mode(TrainMode::AUGMENT_ONLY));
  EXPECT_NE(lb_base.task, lb_aug.task);
}

TEST(Scl, VaeFoldsKlIntoTask) {
  PairBatch pb = tiny_batch();
  Model det = tiny_model(false);
  Model vae = tiny_model(true);
  Rng vrng(77);
  auto lb = total_loss(pb, vae, hp_mode(TrainMode::STRUCTURED), &vrng, 1e-3);
  EXPECT_TRUE(std::isfinite(lb.total_value));
  EXPECT_DOUBLE_EQ(lb.total_value, lb.task + lb.contrastive);
  // gradients reach every parameter through the stochastic path
  backward(lb.total);
  for (auto& [name, p] : vae.named_params()) EXPECT_TRUE(p.has_grad()) << name;
  (void)det;
}

TEST(Scl, ModeNamesRoundTrip) {
  for (TrainMode m : {TrainMode::STRUCTURED, TrainMode::STANDARD_CONTRASTIVE,
                      TrainMode::AUGMENT_ONLY, TrainMode::BASELINE})
    EXPECT_EQ(mode_from_name(mode_name(m)), m);
  EXPECT_THROW(mode_from_name("bogus"), std::invalid_argument);
}

TEST(Scl, HyperparamValidation) {
  SclHyperparams hp;
  hp.beta = -0.5;
  EXPECT_THROW(hp.validate(), std::invalid_argument);
  SclHyperparams hp2;
  hp2.denom_floor = 0;
  EXPECT_THROW(hp2.validate(), std::invalid_argument);
}
