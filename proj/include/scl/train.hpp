#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "scl/checkpoint.hpp"
#include "scl/config.hpp"
#include "scl/dataset.hpp"
#include "scl/loss.hpp"
#include "scl/model.hpp"
#include "scl/optim.hpp"
#include "scl/pairs.hpp"

namespace scl {

constexpr const char* kMetricsHeader = "step,task,contrastive,total,d_inv_pos,d_var_pos,d_inv_neg";

struct TrainResult {
  Model model;
  std::string run_dir;
  std::string checkpoint_path;
  std::string metrics_path;
  long steps_done = 0;
  double final_task = 0;
  double final_total = 0;
};

inline std::string run_name(const ExperimentConfig& cfg) {
  std::string n = std::string(family_name(cfg.family.kind)) + "_" + mode_name(cfg.hp.mode) +
                  "_seed" + std::to_string(cfg.train.seed);
  if (!cfg.run.tag.empty()) n += "_" + cfg.run.tag;
  return n;
}

// Run directories are append-only: a name collision is an error, never an
// overwrite.
inline std::string create_run_dir(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(cfg.run.out) / run_name(cfg);
  if (fs::exists(dir))
    throw IoError("run directory already exists (runs are append-only): " + dir.string());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir.string();
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("short write to " + path);
}

inline void metrics_row(std::ostream& os, long step, const LossBreakdown& lb) {
  char buf[64];
  os << step;
  const double cols[6] = {lb.task, lb.contrastive, lb.total_value,
                          lb.d_inv_pos, lb.d_var_pos, lb.d_inv_neg};
  for (double v : cols) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  }
  os << '\n';
}

inline void check_component(double v, const char* what, long step) {
  if (!std::isfinite(v))
    throw std::runtime_error("training aborted at step " + std::to_string(step) +
                             ": non-finite " + what);
}

}  // namespace detail

// The shared optimization loop. Batches are a pure function of
// (train.seed, global step), so fresh runs and resumed runs alike are
// bit-reproducible.
inline void run_training(const ExperimentConfig& cfg, Model& m, const Dataset& train_split,
                         std::ostream& metrics, long step_offset, TrainResult* out = nullptr) {
  Optimizer opt(cfg.optim.kind, m.named_params(), cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2,
                cfg.optim.eps);
  Rng vae_rng(mix_seed(cfg.train.seed, 0x7AE5EEDULL));
  Rng* vp = m.enc.vae ? &vae_rng : nullptr;
  for (long i = 0; i < cfg.train.steps; ++i) {
    const long step = step_offset + i;
    PairBatch pb = sample_pair_batch(train_split, cfg.family, cfg.transform, cfg.train.batch,
                                     cfg.train.views, cfg.train.negatives,
                                     mix_seed(cfg.train.seed, static_cast<std::uint64_t>(step)));
    opt.zero_grad();
    LossBreakdown lb;
    try {
      lb = total_loss(pb, m, cfg.hp, vp, cfg.train.kl_weight);
      detail::check_component(lb.task, "task loss", step);
      detail::check_component(lb.contrastive, "contrastive loss", step);
      detail::check_component(lb.total_value, "total loss", step);
      backward(lb.total);
    } catch (const NonFiniteError& e) {
      throw std::runtime_error("training aborted at step " + std::to_string(step) + ": " +
                               e.what());
    }
    opt.step();
    detail::metrics_row(metrics, step, lb);
    if (out) {
      out->final_task = lb.task;
      out->final_total = lb.total_value;
      out->steps_done = step + 1;
    }
  }
}

// Train from fresh initialization into a new run directory: config snapshot,
// per-step metrics CSV, final checkpoint.
inline TrainResult train_run(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainResult res;
  res.run_dir = create_run_dir(cfg);
  detail::write_text_file(res.run_dir + "/config.txt", serialize_config(cfg));

  Dataset full = make_dataset(cfg.family, cfg.train.per_class, cfg.train.seed);
  SplitDataset split = split_dataset(full, cfg.train.test_frac, cfg.train.seed);

  res.model = Model::init(cfg.encoder, cfg.head, cfg.partition, cfg.train.seed);
  res.metrics_path = res.run_dir + "/metrics.csv";
  {
    std::ofstream metrics(res.metrics_path, std::ios::binary);
    if (!metrics) throw IoError("cannot write " + res.metrics_path);
    metrics << kMetricsHeader << '\n';
    run_training(cfg, res.model, split.train, metrics, 0, &res);
    if (!metrics) throw IoError("short write to " + res.metrics_path);
  }
  res.steps_done = cfg.train.steps;
  res.checkpoint_path = res.run_dir + "/model.ckpt";
  save_model_checkpoint(res.checkpoint_path, cfg, {cfg.train.seed, cfg.train.steps}, res.model);
  return res;
}

// Continue optimizing a saved model under a (possibly different) objective.
// The architecture is pinned by the checkpoint; only objective, partition and
// schedule may change.
inline TrainResult finetune_run(const ExperimentConfig& cfg, const std::string& base_checkpoint) {
  cfg.validate();
  Checkpoint ck = load_checkpoint(base_checkpoint);
  if (ck.config.encoder.latent != cfg.encoder.latent)
    throw std::invalid_argument(
        "finetune: latent width mismatch: checkpoint has " +
        std::to_string(ck.config.encoder.latent) + ", config requests " +
        std::to_string(cfg.encoder.latent));
  if (!(ck.config.encoder == cfg.encoder))
    throw std::invalid_argument("finetune: encoder architecture differs from checkpoint " +
                                base_checkpoint);
  if (!(ck.config.head == cfg.head))
    throw std::invalid_argument("finetune: head architecture differs from checkpoint " +
                                base_checkpoint);
  if (!(ck.config.family == cfg.family))
    throw std::invalid_argument("finetune: signal family differs from checkpoint " +
                                base_checkpoint);

  TrainResult res;
  res.run_dir = create_run_dir(cfg);
  detail::write_text_file(res.run_dir + "/config.txt", serialize_config(cfg));

  Dataset full = make_dataset(cfg.family, cfg.train.per_class, cfg.train.seed);
  SplitDataset split = split_dataset(full, cfg.train.test_frac, cfg.train.seed);

  res.model = model_from_checkpoint(ck);
  res.model.part = cfg.partition;  // re-slice the same latent under the new objective
  res.metrics_path = res.run_dir + "/metrics.csv";
  {
    std::ofstream metrics(res.metrics_path, std::ios::binary);
    if (!metrics) throw IoError("cannot write " + res.metrics_path);
    metrics << kMetricsHeader << '\n';
    run_training(cfg, res.model, split.train, metrics, ck.meta.steps, &res);
    if (!metrics) throw IoError("short write to " + res.metrics_path);
  }
  res.steps_done = ck.meta.steps + cfg.train.steps;
  res.checkpoint_path = res.run_dir + "/model.ckpt";
  save_model_checkpoint(res.checkpoint_path, cfg,
                        {cfg.train.seed, ck.meta.steps + cfg.train.steps}, res.model);
  return res;
}

}  // namespace scl
