#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scl/model.hpp"
#include "scl/pairs.hpp"
#include "scl/tensor.hpp"

// Cosine distance, the variant-enhanced structured contrastive loss with its
// degenerate-case policies, task losses, and the combined objective across
// the four comparator regimes.

namespace scl {

enum class TrainMode { STRUCTURED, STANDARD_CONTRASTIVE, AUGMENT_ONLY, BASELINE };

inline const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::STRUCTURED: return "structured";
    case TrainMode::STANDARD_CONTRASTIVE: return "standard_contrastive";
    case TrainMode::AUGMENT_ONLY: return "augment_only";
    default: return "baseline";
  }
}

inline TrainMode mode_from_name(const std::string& s) {
  if (s == "structured") return TrainMode::STRUCTURED;
  if (s == "standard_contrastive") return TrainMode::STANDARD_CONTRASTIVE;
  if (s == "augment_only") return TrainMode::AUGMENT_ONLY;
  if (s == "baseline") return TrainMode::BASELINE;
  throw std::invalid_argument(
      "unknown mode '" + s + "' (expected structured|standard_contrastive|augment_only|baseline)");
}

struct SclHyperparams {
  double beta = 1.0;
  double lambda = 1.0;
  double denom_floor = 1e-4;  // floor on D_inv(anchor, negative)
  double eps = 1e-8;          // norm/log/div guards
  TrainMode mode = TrainMode::STRUCTURED;

  void validate() const {
    if (beta < 0) throw std::invalid_argument("hp: beta must be >= 0");
    if (lambda < 0) throw std::invalid_argument("hp: lambda must be >= 0");
    if (denom_floor <= 0) throw std::invalid_argument("hp: denom_floor must be > 0");
    if (eps <= 0) throw std::invalid_argument("hp: eps must be > 0");
  }

  bool operator==(const SclHyperparams&) const = default;
};

// D(u,v) = 1 - cos(u,v), clamped into [0,2] (cos can round a hair past 1).
inline Tensor cos_dist(const Tensor& u, const Tensor& v, double eps = 1e-8) {
  return clamp_min(1.0 - cosine_similarity(u, v, eps), 0.0);
}

struct ContrastiveOut {
  Tensor loss;  // scalar, batch mean
  double d_inv_pos = 0, d_var_pos = 0, d_inv_neg = 0;
};

namespace detail {

inline double value_mean(const Tensor& t) {
  if (t.numel() == 0) return 0.0;
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s / static_cast<double>(t.numel());
}

inline Tensor as_rows(const Tensor& t) {
  return t.rank() == 1 ? reshape(t, {1, t.dim(0)}) : t;
}

}  // namespace detail

//   D(inv_a, inv_p) / ((1 + beta * D(var_a, var_p)) * max(D(inv_a, inv_n), floor))
// Degenerate policies: d_var = 0 drops the beta factor (treated as 1);
// d_inv = 0 keeps only the variant pressure, 1 / (1 + beta * D(var_a, var_p)).
// STANDARD_CONTRASTIVE is STRUCTURED with beta forced to 0 on the same code
// path, so the two are bit-identical.
inline ContrastiveOut contrastive_loss(const Tensor& z_a, const Tensor& z_p, const Tensor& z_n,
                                       const LatentPartition& p, const SclHyperparams& hp) {
  hp.validate();
  p.validate();
  Tensor a = detail::as_rows(z_a), pos = detail::as_rows(z_p), neg = detail::as_rows(z_n);
  if (a.shape() != pos.shape() || a.shape() != neg.shape())
    throw ShapeError("contrastive_loss: latents disagree " + shape_str(a.shape()) + " / " +
                     shape_str(pos.shape()) + " / " + shape_str(neg.shape()));
  if (a.dim(1) != p.total())
    throw ShapeError("contrastive_loss: latent width " + std::to_string(a.dim(1)) +
                     " != partition total " + std::to_string(p.total()));
  const double beta = hp.mode == TrainMode::STANDARD_CONTRASTIVE ? 0.0 : hp.beta;
  const int B = a.dim(0);

  auto sa = split_latent(a, p);
  auto sp = split_latent(pos, p);
  auto sn = split_latent(neg, p);

  ContrastiveOut out;
  Tensor denom_factor = Tensor::full({B}, 1.0);
  if (p.d_var > 0) {
    Tensor d_var_pos = cos_dist(sa.var, sp.var, hp.eps);
    out.d_var_pos = detail::value_mean(d_var_pos);
    denom_factor = 1.0 + d_var_pos * beta;
  }
  if (p.d_inv > 0) {
    Tensor d_inv_pos = cos_dist(sa.inv, sp.inv, hp.eps);
    Tensor d_inv_neg = cos_dist(sa.inv, sn.inv, hp.eps);
    out.d_inv_pos = detail::value_mean(d_inv_pos);
    out.d_inv_neg = detail::value_mean(d_inv_neg);
    out.loss = mean(divide(d_inv_pos, denom_factor * clamp_min(d_inv_neg, hp.denom_floor), hp.eps));
  } else {
    out.loss = mean(divide(Tensor::full({B}, 1.0), denom_factor, hp.eps));
  }
  return out;
}

enum class TaskKind { CROSS_ENTROPY, MSE };

inline Tensor task_loss(TaskKind kind, const Tensor& logits, const std::vector<int>& labels) {
  if (kind != TaskKind::CROSS_ENTROPY)
    throw std::invalid_argument("task_loss: class labels supplied to a non-classifier loss");
  return cross_entropy_logits(logits, labels);
}

inline Tensor task_loss(TaskKind kind, const Tensor& pred, const Tensor& target) {
  if (kind != TaskKind::MSE)
    throw std::invalid_argument("task_loss: tensor target supplied to a non-MSE loss");
  Tensor d = pred - target;
  return mean(d * d);
}

struct LossBreakdown {
  Tensor total;  // scalar graph root for backward()
  double task = 0, contrastive = 0, total_value = 0;
  double d_inv_pos = 0, d_var_pos = 0, d_inv_neg = 0;
};

// Eq-style combined objective over one PairBatch:
//   BASELINE      task loss on raw sources, no pairs
//   AUGMENT_ONLY  task loss on transformed anchors, no pairs
//   STANDARD/STRUCTURED  task on anchors + lambda * contrastive over views
// The VAE path adds kl_weight * KL into the task component (so the
// total == task + lambda*contrastive identity is preserved).
inline LossBreakdown total_loss(const PairBatch& pb, const Model& model, const SclHyperparams& hp,
                                Rng* vae_rng = nullptr, double kl_weight = 1e-3) {
  hp.validate();
  const int B = pb.B;
  const int flat = pb.flat();
  if (flat != model.enc.flat_input())
    throw ShapeError("total_loss: batch window " + std::to_string(flat) +
                     " != encoder input " + std::to_string(model.enc.flat_input()));
  const bool contrastive_mode =
      hp.mode == TrainMode::STRUCTURED || hp.mode == TrainMode::STANDARD_CONTRASTIVE;
  if (contrastive_mode && (pb.positives.empty() || pb.negatives.empty()))
    throw std::invalid_argument(std::string("total_loss: mode ") + mode_name(hp.mode) +
                                " requires positive views and negatives in the batch");
  const TaskKind tk =
      model.head.kind == HeadKind::CLASSIFIER ? TaskKind::CROSS_ENTROPY : TaskKind::MSE;

  const std::vector<double>& input_buf = hp.mode == TrainMode::BASELINE ? pb.raw : pb.anchors;
  Tensor x({B, flat}, std::vector<double>(input_buf.begin(), input_buf.end()));

  Tensor z_task, z_contrast;
  Tensor kl;
  bool has_kl = false;
  if (model.enc.vae && vae_rng) {
    auto st = model.encode_stochastic(x, *vae_rng);
    z_task = st.z;
    z_contrast = st.mu;  // contrastive geometry on the mean embedding
    kl = kl_divergence(st.mu, st.log_var);
    has_kl = true;
  } else {
    z_task = model.encode(x);
    z_contrast = z_task;
  }

  Tensor pred = model.head_forward(z_task);
  Tensor task = tk == TaskKind::CROSS_ENTROPY ? task_loss(tk, pred, pb.labels)
                                              : task_loss(tk, pred, x);
  if (has_kl) task = task + kl * kl_weight;

  LossBreakdown out;
  if (!contrastive_mode) {
    out.total = task;
    out.task = task.item();
    out.total_value = out.total.item();
    return out;
  }

  Tensor contr_sum = Tensor::scalar(0.0);
  double di_pos = 0, dv_pos = 0, di_neg = 0;
  int terms = 0;
  for (int v = 0; v < pb.V; ++v) {
    std::vector<double> view_buf(static_cast<size_t>(B) * flat);
    for (int i = 0; i < B; ++i) {
      const double* src = pb.positives.data() + (static_cast<long>(i) * pb.V + v) * flat;
      std::copy(src, src + flat, view_buf.data() + static_cast<long>(i) * flat);
    }
    Tensor xp({B, flat}, std::move(view_buf));
    Tensor z_p = model.encode(xp);
    for (int k = 0; k < pb.n_neg; ++k) {
      std::vector<int> idx(static_cast<size_t>(B));
      for (int i = 0; i < B; ++i) idx[static_cast<size_t>(i)] = pb.neg_index[static_cast<size_t>(i) * pb.n_neg + static_cast<size_t>(k)];
      Tensor z_n = gather_rows(z_contrast, idx);
      ContrastiveOut c = contrastive_loss(z_contrast, z_p, z_n, model.part, hp);
      contr_sum = contr_sum + c.loss;
      di_pos += c.d_inv_pos;
      dv_pos += c.d_var_pos;
      di_neg += c.d_inv_neg;
      ++terms;
    }
  }
  Tensor contrastive = contr_sum / static_cast<double>(terms);
  out.total = task + contrastive * hp.lambda;
  out.task = task.item();
  out.contrastive = contrastive.item();
  out.total_value = out.total.item();
  out.d_inv_pos = di_pos / terms;
  out.d_var_pos = dv_pos / terms;
  out.d_inv_neg = di_neg / terms;
  return out;
}

}  // namespace scl
