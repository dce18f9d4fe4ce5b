#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scl/checkpoint.hpp"
#include "scl/dataset.hpp"
#include "scl/loss.hpp"
#include "scl/model.hpp"
#include "scl/pairs.hpp"
#include "scl/transform.hpp"

// Quantitative evaluation protocols, all pure functions of
// (model, dataset seed, metric seed). Conditions use ';' as the separator so
// rows stay single CSV cells.

namespace scl {

// Evaluation transform draws must never overlap training draws.
constexpr std::uint64_t kEvalSeedOffset = 1000000;

struct MetricRow {
  std::string condition;
  double value = 0;
  long count = 0;
};

struct MetricReport {
  std::string metric;
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;

  std::string to_csv() const {
    std::ostringstream os;
    os << "metric,condition,value,count,seed\n";
    char buf[64];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.value);
      os << metric << ',' << r.condition << ',' << buf << ',' << r.count << ',' << seed << "\n";
    }
    return os.str();
  }

  double value_at(const std::string& condition) const {
    for (const auto& r : rows)
      if (r.condition == condition) return r.value;
    throw std::invalid_argument("metric '" + metric + "' has no condition '" + condition + "'");
  }

  double min_value() const {
    if (rows.empty()) throw std::invalid_argument("metric '" + metric + "' is empty");
    double m = rows[0].value;
    for (const auto& r : rows) m = std::min(m, r.value);
    return m;
  }
};

namespace detail {

inline Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("metrics: empty signal set");
  const int n = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows[0].size());
  std::vector<double> buf;
  buf.reserve(static_cast<size_t>(n) * w);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != w)
      throw std::invalid_argument("metrics: ragged signal rows");
    buf.insert(buf.end(), r.begin(), r.end());
  }
  return Tensor({n, w}, std::move(buf));
}

// Deterministic latents for a stack of windows, chunked to bound graph size.
inline std::vector<std::vector<double>> encode_all(const Model& m,
                                                   const std::vector<std::vector<double>>& rows,
                                                   int chunk = 256) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (size_t at = 0; at < rows.size(); at += static_cast<size_t>(chunk)) {
    size_t hi = std::min(rows.size(), at + static_cast<size_t>(chunk));
    std::vector<std::vector<double>> part(rows.begin() + static_cast<long>(at),
                                          rows.begin() + static_cast<long>(hi));
    Tensor z = m.encode(rows_tensor(part));
    const int d = z.dim(1);
    for (int i = 0; i < z.dim(0); ++i) {
      const double* p = z.values().data() + static_cast<long>(i) * d;
      out.emplace_back(p, p + d);
    }
  }
  return out;
}

inline std::vector<int> predict_all(const Model& m, const std::vector<std::vector<double>>& rows) {
  std::vector<int> preds;
  preds.reserve(rows.size());
  for (size_t at = 0; at < rows.size(); at += 256) {
    size_t hi = std::min(rows.size(), at + 256);
    std::vector<std::vector<double>> part(rows.begin() + static_cast<long>(at),
                                          rows.begin() + static_cast<long>(hi));
    Tensor logits = m.head_forward(m.encode(rows_tensor(part)));
    const int c = logits.dim(1);
    for (int i = 0; i < logits.dim(0); ++i) {
      const double* p = logits.values().data() + static_cast<long>(i) * c;
      preds.push_back(static_cast<int>(std::max_element(p, p + c) - p));
    }
  }
  return preds;
}

inline std::pair<int, int> slice_range(const LatentPartition& p, Subspace s) {
  switch (s) {
    case Subspace::INV: return {0, p.d_inv};
    case Subspace::VAR: return {p.d_inv, p.d_inv + p.d_var};
    case Subspace::FREE: return {p.d_inv + p.d_var, p.total()};
    default: return {0, p.total()};
  }
}

inline double cos_sim(const double* a, const double* b, int n, double eps = 1e-8) {
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
}

inline void require_classifier(const Model& m, const char* metric) {
  if (m.head.kind != HeadKind::CLASSIFIER)
    throw std::invalid_argument(std::string(metric) + ": checkpoint has no classifier head");
}

inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

// Mean cosine similarity between each window and its k-shifted copy, on one
// latent subspace, per shift.
inline MetricReport phase_similarity_curve(const Model& m,
                                           const std::vector<std::vector<double>>& signals,
                                           const std::vector<int>& shifts, Subspace subspace,
                                           std::uint64_t seed) {
  if (m.enc.in_channels != 1)
    throw std::invalid_argument("phase_similarity: requires a single-channel checkpoint");
  auto [lo, hi] = detail::slice_range(m.part, subspace);
  if (hi <= lo)
    throw std::invalid_argument(std::string("phase_similarity: subspace '") +
                                subspace_name(subspace) + "' is empty under this partition");
  const int L = m.enc.in_length;
  auto z0 = detail::encode_all(m, signals);
  MetricReport rep{std::string("phase_similarity_") + subspace_name(subspace), seed, {}};
  for (int k : shifts) {
    std::vector<std::vector<double>> shifted;
    shifted.reserve(signals.size());
    for (const auto& s : signals) shifted.push_back(phase_shift(s, 1, L, k));
    auto zk = detail::encode_all(m, shifted);
    double mean_sim = 0;
    for (size_t i = 0; i < z0.size(); ++i)
      mean_sim += detail::cos_sim(z0[i].data() + lo, zk[i].data() + lo, hi - lo);
    mean_sim /= static_cast<double>(z0.size());
    rep.rows.push_back({"shift=" + std::to_string(k), mean_sim, static_cast<long>(z0.size())});
  }
  return rep;
}

// Percentage of (sample, rotation) pairs whose argmax prediction survives the
// rotation.
inline double rotation_consistency(const Model& m, const Dataset& ds, int n_rotations,
                                   std::uint64_t seed) {
  detail::require_classifier(m, "rotation_consistency");
  if (ds.channels != 3)
    throw std::invalid_argument("rotation_consistency: requires a 3-channel dataset");
  if (n_rotations < 1) throw std::invalid_argument("rotation_consistency: n_rotations must be >= 1");
  auto clean = detail::predict_all(m, ds.x);
  Rng rng(mix_seed(seed, 0x50C0DEULL));
  long same = 0;
  for (int r = 0; r < n_rotations; ++r) {
    Rot3 R = random_rotation(rng, RotationMode::UNIFORM_SO3);
    std::vector<std::vector<double>> rot;
    rot.reserve(ds.x.size());
    for (const auto& row : ds.x) rot.push_back(apply_rotation(row, ds.length, R));
    auto preds = detail::predict_all(m, rot);
    for (size_t i = 0; i < preds.size(); ++i)
      if (preds[i] == clean[i]) ++same;
  }
  return 100.0 * static_cast<double>(same) / (static_cast<double>(ds.size()) * n_rotations);
}

inline double accuracy(const Model& m, const std::vector<std::vector<double>>& rows,
                       const std::vector<int>& labels) {
  detail::require_classifier(m, "accuracy");
  auto preds = detail::predict_all(m, rows);
  long hit = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++hit;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(preds.size());
}

// Test accuracy under per-sample rotations restricted to each axis, plus the
// combined (full SO(3)) condition.
inline MetricReport axis_sweep_accuracy(const Model& m, const Dataset& ds, std::uint64_t seed) {
  detail::require_classifier(m, "axis_sweep");
  if (ds.channels != 3) throw std::invalid_argument("axis_sweep: requires a 3-channel dataset");
  const std::array<std::pair<const char*, RotationMode>, 4> conds = {
      {{"axis=x", RotationMode::X_AXIS},
       {"axis=y", RotationMode::Y_AXIS},
       {"axis=z", RotationMode::Z_AXIS},
       {"axis=combined", RotationMode::UNIFORM_SO3}}};
  MetricReport rep{"axis_sweep_accuracy", seed, {}};
  for (size_t ci = 0; ci < conds.size(); ++ci) {
    Rng rng(mix_seed(seed, 0xA715ULL + ci));
    std::vector<std::vector<double>> rot;
    rot.reserve(ds.x.size());
    for (const auto& row : ds.x)
      rot.push_back(apply_rotation(row, ds.length, random_rotation(rng, conds[ci].second)));
    rep.rows.push_back({conds[ci].first, accuracy(m, rot, ds.y), ds.size()});
  }
  return rep;
}

// Accuracy over every (noise std, rotation off/on) cell.
inline MetricReport stress_grid(const Model& m, const Dataset& ds,
                                const std::vector<double>& noise_stds, std::uint64_t seed) {
  detail::require_classifier(m, "stress_grid");
  MetricReport rep{"stress_grid", seed, {}};
  for (int rot = 0; rot < 2; ++rot) {
    if (rot && ds.channels != 3) continue;  // rotation cells only exist for 3-channel data
    for (size_t ni = 0; ni < noise_stds.size(); ++ni) {
      double std_dev = noise_stds[ni];
      Rng rng(mix_seed(seed, 0x57E55ULL + ni * 2 + static_cast<size_t>(rot)));
      std::vector<std::vector<double>> pert;
      pert.reserve(ds.x.size());
      for (const auto& row : ds.x) {
        std::vector<double> v = row;
        if (rot) v = apply_rotation(v, ds.length, random_rotation(rng, RotationMode::UNIFORM_SO3));
        if (std_dev > 0) v = add_noise(v, std_dev, rng);
        pert.push_back(std::move(v));
      }
      rep.rows.push_back({"noise=" + detail::fmt_g(std_dev) + ";rotation=" + (rot ? "on" : "off"),
                          accuracy(m, pert, ds.y), ds.size()});
    }
  }
  return rep;
}

struct RetrievalSpec {
  int gallery_size = 200;
  int n_queries = 100;
  int k = 5;
  std::uint64_t seed = 0;
};

inline std::vector<int> knn_indices(const std::vector<std::vector<double>>& gallery,
                                    const std::vector<double>& query, int k) {
  std::vector<int> idx(gallery.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> sim(gallery.size());
  for (size_t i = 0; i < gallery.size(); ++i)
    sim[i] = detail::cos_sim(gallery[i].data(), query.data(), static_cast<int>(query.size()));
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return sim[static_cast<size_t>(a)] > sim[static_cast<size_t>(b)]; });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

// Top-k morphology-match rate on the invariant subspace (full latent when
// d_inv = 0): gallery and queries are fresh class-labeled signals inserted at
// random phases unseen in training.
inline double retrieval_eval(const Model& m, const SignalFamily& fam, const RetrievalSpec& spec) {
  if (m.enc.in_channels != 1)
    throw std::invalid_argument("retrieval: requires a single-channel checkpoint");
  if (spec.gallery_size < spec.k)
    throw std::invalid_argument("retrieval: gallery (" + std::to_string(spec.gallery_size) +
                                ") smaller than k (" + std::to_string(spec.k) + ")");
  Subspace sub = m.part.d_inv > 0 ? Subspace::INV : Subspace::FULL;
  auto [lo, hi] = detail::slice_range(m.part, sub);
  Rng rng(mix_seed(spec.seed, 0x6A11E7ULL));
  const int L = fam.length;

  std::vector<std::vector<double>> gallery_sig;
  std::vector<int> gallery_cls;
  for (int i = 0; i < spec.gallery_size; ++i) {
    int cls = i % fam.num_classes;
    auto s = gen_ecg_signal(spec.seed, cls, i, L);
    gallery_sig.push_back(phase_shift(s, 1, L, static_cast<int>(rng.uniform_int(0, L - 1))));
    gallery_cls.push_back(cls);
  }
  std::vector<std::vector<double>> query_sig;
  std::vector<int> query_cls;
  for (int q = 0; q < spec.n_queries; ++q) {
    int cls = rng.index(fam.num_classes);
    auto s = gen_ecg_signal(spec.seed, cls, spec.gallery_size + q, L);
    query_sig.push_back(phase_shift(s, 1, L, static_cast<int>(rng.uniform_int(0, L - 1))));
    query_cls.push_back(cls);
  }

  auto strip = [&](std::vector<std::vector<double>> z) {
    for (auto& row : z) row = std::vector<double>(row.begin() + lo, row.begin() + hi);
    return z;
  };
  auto zg = strip(detail::encode_all(m, gallery_sig));
  auto zq = strip(detail::encode_all(m, query_sig));

  double match = 0;
  for (size_t q = 0; q < zq.size(); ++q) {
    auto nn = knn_indices(zg, zq[q], spec.k);
    int same = 0;
    for (int i : nn)
      if (gallery_cls[static_cast<size_t>(i)] == query_cls[q]) ++same;
    match += static_cast<double>(same) / spec.k;
  }
  return 100.0 * match / static_cast<double>(zq.size());
}

// Mean cosine distance per latent slice over positive and negative pairs —
// the direct readout of the push/pull dynamic.
inline MetricReport subspace_stats(const Model& m, const Dataset& ds, const SignalFamily& fam,
                                   const TransformSpec& spec, int n_batches, int batch,
                                   std::uint64_t seed) {
  MetricReport rep{"subspace_stats", seed, {}};
  const std::array<std::pair<Subspace, const char*>, 3> slices = {
      {{Subspace::INV, "inv"}, {Subspace::VAR, "var"}, {Subspace::FREE, "free"}}};
  std::array<double, 6> sums{};
  std::array<long, 6> counts{};
  for (int b = 0; b < n_batches; ++b) {
    PairBatch pb = sample_pair_batch(ds, fam, spec, batch, 1, 1, mix_seed(seed, 0x5B5 + static_cast<std::uint64_t>(b)));
    Tensor za = m.encode(Tensor({pb.B, pb.flat()}, std::vector<double>(pb.anchors)));
    Tensor zp = m.encode(Tensor({pb.B, pb.flat()}, std::vector<double>(pb.positives)));
    Tensor zn = m.encode(Tensor({pb.B, pb.flat()}, std::vector<double>(pb.negatives)));
    for (size_t si = 0; si < slices.size(); ++si) {
      auto [lo, hi] = detail::slice_range(m.part, slices[si].first);
      if (hi <= lo) continue;
      for (int i = 0; i < pb.B; ++i) {
        const double* a = za.values().data() + static_cast<long>(i) * m.part.total() + lo;
        const double* p = zp.values().data() + static_cast<long>(i) * m.part.total() + lo;
        const double* n = zn.values().data() + static_cast<long>(i) * m.part.total() + lo;
        sums[si * 2] += 1.0 - detail::cos_sim(a, p, hi - lo);
        counts[si * 2] += 1;
        sums[si * 2 + 1] += 1.0 - detail::cos_sim(a, n, hi - lo);
        counts[si * 2 + 1] += 1;
      }
    }
  }
  for (size_t si = 0; si < slices.size(); ++si) {
    if (!counts[si * 2]) continue;
    rep.rows.push_back({std::string(slices[si].second) + "_pos",
                        sums[si * 2] / static_cast<double>(counts[si * 2]), counts[si * 2]});
    rep.rows.push_back({std::string(slices[si].second) + "_neg",
                        sums[si * 2 + 1] / static_cast<double>(counts[si * 2 + 1]), counts[si * 2 + 1]});
  }
  return rep;
}

inline double subspace_mean(const MetricReport& rep, Subspace s, bool positive) {
  return rep.value_at(std::string(subspace_name(s)) + (positive ? "_pos" : "_neg"));
}

// ---- PCA (Jacobi eigendecomposition) + silhouette ----

struct PcaResult {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> explained{};  // top-2 eigenvalues of the covariance
  double total_variance = 0;
};

namespace detail {

// Cyclic Jacobi on a symmetric matrix; returns eigenvalues (diag) and
// accumulates rotations into V (columns = eigenvectors).
inline void jacobi_eigen(std::vector<double>& A, std::vector<double>& V, int n) {
  V.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) V[static_cast<size_t>(i) * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += A[static_cast<size_t>(i) * n + j] * A[static_cast<size_t>(i) * n + j];
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        double apq = A[static_cast<size_t>(p) * n + q];
        if (std::abs(apq) < 1e-300) continue;
        double app = A[static_cast<size_t>(p) * n + p], aqq = A[static_cast<size_t>(q) * n + q];
        double theta = 0.5 * std::atan2(2 * apq, aqq - app);
        double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < n; ++k) {
          double akp = A[static_cast<size_t>(k) * n + p], akq = A[static_cast<size_t>(k) * n + q];
          A[static_cast<size_t>(k) * n + p] = c * akp - s * akq;
          A[static_cast<size_t>(k) * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = A[static_cast<size_t>(p) * n + k], aqk = A[static_cast<size_t>(q) * n + k];
          A[static_cast<size_t>(p) * n + k] = c * apk - s * aqk;
          A[static_cast<size_t>(q) * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = V[static_cast<size_t>(k) * n + p], vkq = V[static_cast<size_t>(k) * n + q];
          V[static_cast<size_t>(k) * n + p] = c * vkp - s * vkq;
          V[static_cast<size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
  }
}

}  // namespace detail

inline PcaResult pca_project(const std::vector<std::vector<double>>& embeddings) {
  const int n = static_cast<int>(embeddings.size());
  if (n < 3) throw std::invalid_argument("pca_project: need at least 3 points");
  const int d = static_cast<int>(embeddings[0].size());
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (const auto& e : embeddings)
    for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += e[static_cast<size_t>(j)];
  for (auto& v : mean) v /= n;
  std::vector<std::vector<double>> centered(embeddings);
  for (auto& e : centered)
    for (int j = 0; j < d; ++j) e[static_cast<size_t>(j)] -= mean[static_cast<size_t>(j)];

  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (const auto& e : centered)
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) cov[static_cast<size_t>(i) * d + j] += e[static_cast<size_t>(i)] * e[static_cast<size_t>(j)];
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      cov[static_cast<size_t>(i) * d + j] /= (n - 1);
      cov[static_cast<size_t>(j) * d + i] = cov[static_cast<size_t>(i) * d + j];
    }
  double total = 0;
  for (int i = 0; i < d; ++i) total += cov[static_cast<size_t>(i) * d + i];
  if (total <= 0) throw std::invalid_argument("pca_project: zero-variance (rank-0) input");

  std::vector<double> A = cov, V;
  detail::jacobi_eigen(A, V, d);
  std::vector<std::pair<double, int>> eig;
  for (int i = 0; i < d; ++i) eig.emplace_back(A[static_cast<size_t>(i) * d + i], i);
  std::stable_sort(eig.begin(), eig.end(), [](auto& a, auto& b) { return a.first > b.first; });

  PcaResult res;
  res.total_variance = total;
  std::array<std::vector<double>, 2> axes;
  for (int a = 0; a < 2; ++a) {
    int col = eig[static_cast<size_t>(a)].second;
    res.explained[static_cast<size_t>(a)] = std::max(0.0, eig[static_cast<size_t>(a)].first);
    axes[static_cast<size_t>(a)].resize(static_cast<size_t>(d));
    for (int k = 0; k < d; ++k) axes[static_cast<size_t>(a)][static_cast<size_t>(k)] = V[static_cast<size_t>(k) * d + col];
    // deterministic sign: the largest-magnitude component is positive
    int arg = 0;
    for (int k = 1; k < d; ++k)
      if (std::abs(axes[static_cast<size_t>(a)][static_cast<size_t>(k)]) > std::abs(axes[static_cast<size_t>(a)][static_cast<size_t>(arg)])) arg = k;
    if (axes[static_cast<size_t>(a)][static_cast<size_t>(arg)] < 0)
      for (auto& v : axes[static_cast<size_t>(a)]) v = -v;
  }
  res.coords.reserve(static_cast<size_t>(n));
  for (const auto& e : centered) {
    std::array<double, 2> c{};
    for (int a = 0; a < 2; ++a)
      for (int k = 0; k < d; ++k) c[static_cast<size_t>(a)] += e[static_cast<size_t>(k)] * axes[static_cast<size_t>(a)][static_cast<size_t>(k)];
    res.coords.push_back(c);
  }
  return res;
}

// Mean silhouette over 2D points; singleton clusters contribute 0.
inline double silhouette_score(const std::vector<std::array<double, 2>>& pts,
                               const std::vector<int>& labels) {
  const size_t n = pts.size();
  if (n != labels.size() || n < 2)
    throw std::invalid_argument("silhouette: need matching points and labels, n >= 2");
  int k = *std::max_element(labels.begin(), labels.end()) + 1;
  auto dist = [&](size_t i, size_t j) {
    double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1];
    return std::sqrt(dx * dx + dy * dy);
  };
  std::vector<long> cluster_size(static_cast<size_t>(k), 0);
  for (int l : labels) ++cluster_size[static_cast<size_t>(l)];
  double total = 0;
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> mean_d(static_cast<size_t>(k), 0.0);
    for (size_t j = 0; j < n; ++j)
      if (j != i) mean_d[static_cast<size_t>(labels[j])] += dist(i, j);
    int own = labels[i];
    if (cluster_size[static_cast<size_t>(own)] < 2) continue;  // silhouette 0
    double a = mean_d[static_cast<size_t>(own)] / static_cast<double>(cluster_size[static_cast<size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own && cluster_size[static_cast<size_t>(c)] > 0)
        b = std::min(b, mean_d[static_cast<size_t>(c)] / static_cast<double>(cluster_size[static_cast<size_t>(c)]));
    if (std::isfinite(b)) total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

}  // namespace scl
