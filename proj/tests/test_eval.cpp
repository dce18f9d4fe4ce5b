#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "scl/metrics.hpp"
#include "scl/signal.hpp"

using namespace scl;

namespace {

Model ecg_mlp_model(LatentPartition part, HeadKind head_kind = HeadKind::DECODER,
                    std::uint64_t seed = 7) {
  EncoderSpec e;
  e.kind = EncoderArch::MLP;
  e.in_channels = 1;
  e.in_length = 512;
  e.hidden = {32};
  e.latent = part.total();
  HeadSpec h;
  h.kind = head_kind;
  h.output = head_kind == HeadKind::DECODER ? 512 : 4;
  return Model::init(e, h, part, seed);
}

Model imu_mlp_classifier(LatentPartition part = {4, 8, 0}, std::uint64_t seed = 7) {
  EncoderSpec e;
  e.kind = EncoderArch::MLP;
  e.in_channels = 3;
  e.in_length = 128;
  e.hidden = {32};
  e.latent = part.total();
  HeadSpec h;
  h.kind = HeadKind::CLASSIFIER;
  h.output = 6;
  return Model::init(e, h, part, seed);
}

std::vector<std::vector<double>> ecg_signals(int n) {
  std::vector<std::vector<double>> out;
  for (int i = 0; i < n; ++i) out.push_back(gen_ecg_signal(3, i % 4, i, 512));
  return out;
}

}  // namespace

TEST(Eval, PhaseCurveShiftZeroIsExactlyOne) {
  Model m = ecg_mlp_model({4, 6, 2});
  auto sig = ecg_signals(10);
  for (Subspace s : {Subspace::INV, Subspace::VAR, Subspace::FREE, Subspace::FULL}) {
    MetricReport rep = phase_similarity_curve(m, sig, {0, 16, 128}, s, 42);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_EQ(rep.rows[0].condition, "shift=0");
    EXPECT_NEAR(rep.rows[0].value, 1.0, 1e-12) << subspace_name(s);
    EXPECT_EQ(rep.rows[0].count, 10);
    for (const auto& r : rep.rows) {
      EXPECT_GE(r.value, -1.0 - 1e-9);
      EXPECT_LE(r.value, 1.0 + 1e-9);
    }
  }
}

TEST(Eval, PhaseCurveGuards) {
  auto sig = ecg_signals(4);
  // empty subspace under this partition
  Model m = ecg_mlp_model({4, 8, 0});
  try {
    phase_similarity_curve(m, sig, {0}, Subspace::FREE, 0);
    FAIL() << "expected empty-subspace error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("free"), std::string::npos);
  }
  // multi-channel checkpoints have no circular-shift story
  Model imu = imu_mlp_classifier();
  Dataset ds = make_dataset(imu_family(), 2, 0);
  EXPECT_THROW(phase_similarity_curve(imu, ds.x, {0}, Subspace::FULL, 0), std::invalid_argument);
}

TEST(Eval, PhaseCurveIsPure) {
  Model m = ecg_mlp_model({4, 6, 2});
  auto sig = ecg_signals(6);
  MetricReport a = phase_similarity_curve(m, sig, {0, 5, 17}, Subspace::INV, 9);
  MetricReport b = phase_similarity_curve(m, sig, {0, 5, 17}, Subspace::INV, 9);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].condition, b.rows[i].condition);
    EXPECT_EQ(a.rows[i].value, b.rows[i].value);
  }
}

TEST(Eval, RotationConsistencyRelabelingInvariant) {
  Model m = imu_mlp_classifier();
  Dataset ds = make_dataset(imu_family(), 5, 0);
  double before = rotation_consistency(m, ds, 3, 11);

  // permute the class ids; argmax identity survives any output bijection
  const std::vector<int> perm = {3, 5, 0, 4, 1, 2};
  const int C = 6;
  auto permute_cols = [&](Tensor& t) {
    auto& v = t.mutable_values();
    const int rows = static_cast<int>(t.numel()) / C;
    std::vector<double> nv(v.size());
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < C; ++c) nv[static_cast<size_t>(r) * C + perm[static_cast<size_t>(c)]] = v[static_cast<size_t>(r) * C + c];
    v = nv;
  };
  permute_cols(m.head_out.w);
  permute_cols(m.head_out.b);
  double after = rotation_consistency(m, ds, 3, 11);
  EXPECT_EQ(before, after);
}

TEST(Eval, RotationConsistencyGuards) {
  Model clf = imu_mlp_classifier();
  Dataset imu = make_dataset(imu_family(), 3, 0);
  EXPECT_THROW(rotation_consistency(clf, imu, 0, 0), std::invalid_argument);

  Dataset ecg = make_dataset(ecg_family(), 3, 0);
  Model dec = ecg_mlp_model({4, 6, 2});
  EXPECT_THROW(rotation_consistency(dec, ecg, 2, 0), std::invalid_argument);  // decoder head

  Model ecg_clf = ecg_mlp_model({4, 6, 2}, HeadKind::CLASSIFIER);
  EXPECT_THROW(rotation_consistency(ecg_clf, ecg, 2, 0), std::invalid_argument);  // 1 channel
}

TEST(Eval, AxisSweepHasFourConditions) {
  Model m = imu_mlp_classifier();
  Dataset ds = make_dataset(imu_family(), 4, 0);
  MetricReport rep = axis_sweep_accuracy(m, ds, 5);
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(rep.rows[0].condition, "axis=x");
  EXPECT_EQ(rep.rows[1].condition, "axis=y");
  EXPECT_EQ(rep.rows[2].condition, "axis=z");
  EXPECT_EQ(rep.rows[3].condition, "axis=combined");
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.count, ds.size());
    EXPECT_GE(r.value, 0.0);
    EXPECT_LE(r.value, 100.0);
  }
  EXPECT_EQ(rep.value_at("axis=combined"), rep.rows[3].value);
  EXPECT_THROW(rep.value_at("axis=w"), std::invalid_argument);
}

TEST(Eval, StressGridLayoutAndCleanCell) {
  Model m = imu_mlp_classifier();
  Dataset ds = make_dataset(imu_family(), 4, 1);
  MetricReport rep = stress_grid(m, ds, {0.0, 0.1}, 3);
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(rep.rows[0].condition, "noise=0;rotation=off");
  EXPECT_EQ(rep.rows[1].condition, "noise=0.1;rotation=off");
  EXPECT_EQ(rep.rows[2].condition, "noise=0;rotation=on");
  EXPECT_EQ(rep.rows[3].condition, "noise=0.1;rotation=on");
  // the unperturbed cell is plain test accuracy
  EXPECT_EQ(rep.value_at("noise=0;rotation=off"), accuracy(m, ds.x, ds.y));

  // rotation rows only exist for 3-channel data
  Model clf = ecg_mlp_model({4, 6, 2}, HeadKind::CLASSIFIER);
  Dataset ecg = make_dataset(ecg_family(), 3, 1);
  MetricReport rep1 = stress_grid(clf, ecg, {0.0, 0.1}, 3);
  ASSERT_EQ(rep1.rows.size(), 2u);
  EXPECT_EQ(rep1.rows[0].condition, "noise=0;rotation=off");
  EXPECT_EQ(rep1.rows[1].condition, "noise=0.1;rotation=off");
}

TEST(Eval, KnnIndicesRanksBySimilarity) {
  std::vector<std::vector<double>> gallery = {
      {1, 0, 0}, {0.9, 0.1, 0}, {0, 1, 0}, {-1, 0, 0}, {0.5, 0.5, 0}};
  std::vector<double> q = {1, 0, 0};
  auto nn = knn_indices(gallery, q, 3);
  ASSERT_EQ(nn.size(), 3u);
  EXPECT_EQ(nn[0], 0);  // exact match first
  EXPECT_EQ(nn[1], 1);
  EXPECT_EQ(nn[2], 4);

  // ties keep gallery order (stable sort)
  std::vector<std::vector<double>> tied = {{0, 1}, {1, 0}, {2, 0}};
  auto t = knn_indices(tied, {1, 0}, 3);
  EXPECT_EQ(t[0], 1);
  EXPECT_EQ(t[1], 2);  // same cosine as index 1, later row
  EXPECT_EQ(t[2], 0);
}

TEST(Eval, RetrievalGuardsAndPurity) {
  Model imu = imu_mlp_classifier();
  RetrievalSpec spec;
  spec.gallery_size = 40;
  spec.n_queries = 10;
  EXPECT_THROW(retrieval_eval(imu, imu_family(), spec), std::invalid_argument);

  Model m = ecg_mlp_model({4, 6, 2});
  RetrievalSpec bad = spec;
  bad.k = 100;
  EXPECT_THROW(retrieval_eval(m, ecg_family(), bad), std::invalid_argument);

  double a = retrieval_eval(m, ecg_family(), spec);
  double b = retrieval_eval(m, ecg_family(), spec);
  EXPECT_EQ(a, b);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 100.0);
}

TEST(Eval, SubspaceStatsRowsFollowPartition) {
  Dataset ds = make_dataset(imu_family(), 6, 2);
  TransformSpec tr;
  tr.kind = TransformKind::ROTATION_3D;
  tr.rotation = RotationMode::UNIFORM_SO3;

  Model m = imu_mlp_classifier({4, 6, 2});
  MetricReport rep = subspace_stats(m, ds, imu_family(), tr, 2, 8, 5);
  ASSERT_EQ(rep.rows.size(), 6u);
  EXPECT_EQ(rep.rows[0].condition, "inv_pos");
  EXPECT_EQ(rep.rows[1].condition, "inv_neg");
  EXPECT_EQ(rep.rows[2].condition, "var_pos");
  EXPECT_EQ(rep.rows[3].condition, "var_neg");
  EXPECT_EQ(rep.rows[4].condition, "free_pos");
  EXPECT_EQ(rep.rows[5].condition, "free_neg");
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.count, 16);  // 2 batches x 8 pairs
    EXPECT_GE(r.value, -1e-12);
    EXPECT_LE(r.value, 2.0 + 1e-12);
  }
  EXPECT_EQ(subspace_mean(rep, Subspace::VAR, true), rep.rows[2].value);
  EXPECT_EQ(subspace_mean(rep, Subspace::INV, false), rep.rows[1].value);

  // empty slices are skipped
  Model flat = imu_mlp_classifier({12, 0, 0});
  MetricReport rep2 = subspace_stats(flat, ds, imu_family(), tr, 1, 8, 5);
  ASSERT_EQ(rep2.rows.size(), 2u);
  EXPECT_EQ(rep2.rows[0].condition, "inv_pos");
  EXPECT_THROW(subspace_mean(rep2, Subspace::VAR, true), std::invalid_argument);

  // purity
  MetricReport rep3 = subspace_stats(m, ds, imu_family(), tr, 2, 8, 5);
  for (size_t i = 0; i < rep.rows.size(); ++i) EXPECT_EQ(rep.rows[i].value, rep3.rows[i].value);
}

// ---- PCA ----

namespace {

std::vector<std::vector<double>> embed_plane(const std::vector<std::array<double, 2>>& pts) {
  // orthonormal pair in R^5 plus a constant offset
  const double s = 1.0 / std::sqrt(2.0);
  const std::vector<double> u1 = {s, s, 0, 0, 0};
  const std::vector<double> u2 = {0, 0, s, -s, 0};
  std::vector<std::vector<double>> out;
  for (const auto& p : pts) {
    std::vector<double> e(5, 0.25);
    for (int k = 0; k < 5; ++k) e[static_cast<size_t>(k)] += p[0] * u1[static_cast<size_t>(k)] + p[1] * u2[static_cast<size_t>(k)];
    out.push_back(e);
  }
  return out;
}

double dist2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace

TEST(Eval, PcaRecoversPlanarGeometry) {
  std::vector<std::array<double, 2>> pts = {{0, 0}, {1, 0}, {0, 1}, {2, 2},
                                            {3, -1}, {-1, 2}, {0.5, 0.5}};
  PcaResult res = pca_project(embed_plane(pts));
  ASSERT_EQ(res.coords.size(), pts.size());
  // projection onto the top-2 plane is an isometry of the original layout
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      EXPECT_NEAR(dist2(res.coords[i], res.coords[j]), dist2(pts[i], pts[j]), 1e-9);
  // rank-2 data: the two components carry all the variance
  EXPECT_NEAR(res.explained[0] + res.explained[1], res.total_variance, 1e-9);
  EXPECT_GE(res.explained[0], res.explained[1]);
}

TEST(Eval, PcaCollapsesLineToOneComponent) {
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({static_cast<double>(i), 0.0});
  PcaResult res = pca_project(embed_plane(pts));
  EXPECT_NEAR(res.explained[0], res.total_variance, 1e-9);
  EXPECT_NEAR(res.explained[1], 0.0, 1e-12);
  for (const auto& c : res.coords) EXPECT_NEAR(c[1], 0.0, 1e-9);
}

TEST(Eval, PcaGuardsAndDeterminism) {
  EXPECT_THROW(pca_project({{1, 2}, {3, 4}}), std::invalid_argument);  // n < 3
  EXPECT_THROW(pca_project({{1, 1}, {1, 1}, {1, 1}}), std::invalid_argument);  // rank 0

  std::vector<std::array<double, 2>> pts = {{0, 0}, {1, 3}, {-2, 1}, {4, -1}, {2, 2}};
  auto emb = embed_plane(pts);
  PcaResult a = pca_project(emb), b = pca_project(emb);
  for (size_t i = 0; i < a.coords.size(); ++i) {
    EXPECT_EQ(a.coords[i][0], b.coords[i][0]);
    EXPECT_EQ(a.coords[i][1], b.coords[i][1]);
  }
}

TEST(Eval, SilhouetteOracles) {
  std::vector<std::array<double, 2>> pts = {{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  std::vector<int> labels = {0, 0, 1, 1};
  double s = silhouette_score(pts, labels);
  EXPECT_GT(s, 0.85);
  EXPECT_LE(s, 1.0);

  // relabeling clusters changes nothing
  std::vector<int> swapped = {1, 1, 0, 0};
  EXPECT_EQ(silhouette_score(pts, swapped), s);

  // hand-worked case with a singleton cluster (contributes 0)
  std::vector<std::array<double, 2>> p3 = {{0, 0}, {0, 1}, {5, 5}};
  double expect = ((1.0 - 1.0 / std::sqrt(50.0)) + (1.0 - 1.0 / std::sqrt(41.0))) / 3.0;
  EXPECT_NEAR(silhouette_score(p3, {0, 0, 1}), expect, 1e-12);

  EXPECT_THROW(silhouette_score(pts, {0, 0, 1}), std::invalid_argument);  // size mismatch
  EXPECT_THROW(silhouette_score({{0, 0}}, {0}), std::invalid_argument);   // n < 2
}

TEST(Eval, MetricReportCsvSchema) {
  MetricReport rep{"demo", 17, {{"cond=a", 1.0 / 3.0, 4}, {"cond=b", 2.0, 8}}};
  std::string csv = rep.to_csv();
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "metric,condition,value,count,seed");
  std::getline(is, line);
  // %.17g survives a text round trip bit-exactly
  auto second_field = line.substr(line.find("cond=a,") + 7);
  double back = std::stod(second_field.substr(0, second_field.find(',')));
  EXPECT_EQ(back, 1.0 / 3.0);
  EXPECT_NE(line.find(",4,17"), std::string::npos);
  std::getline(is, line);
  EXPECT_NE(line.find("demo,cond=b,2,8,17"), std::string::npos);

  EXPECT_EQ(rep.min_value(), 1.0 / 3.0);
  MetricReport empty{"none", 0, {}};
  EXPECT_THROW(empty.min_value(), std::invalid_argument);
}
