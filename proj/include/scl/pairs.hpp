#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scl/common.hpp"
#include "scl/dataset.hpp"
#include "scl/rng.hpp"
#include "scl/transform.hpp"

// Positive/negative pair protocol: every source window in the batch gets V+1
// independently transformed views; view 0 is designated the anchor, the rest
// are positives. The anchor is therefore never the raw signal. Negatives are
// the anchor views of other source windows in the same batch.

namespace scl {

struct PairBatch {
  int B = 0, V = 0, n_neg = 0;
  int channels = 0, length = 0;
  std::vector<double> raw;        // [B][C*L] untransformed sources
  std::vector<double> anchors;    // [B][C*L]
  std::vector<double> positives;  // [B][V][C*L]
  std::vector<double> negatives;  // [B][n_neg][C*L], copies of other anchors
  std::vector<int> labels;        // [B]
  std::vector<int> source_idx;    // [B] dataset row behind each slot
  std::vector<int> neg_index;     // [B][n_neg] batch slot each negative copies
  std::vector<TransformRecord> records;  // [B][V+1], anchor record first

  int flat() const { return channels * length; }
};

inline PairBatch sample_pair_batch(const Dataset& ds, const SignalFamily& fam,
                                   const TransformSpec& spec, int B, int V, int n_neg,
                                   std::uint64_t seed) {
  if (ds.size() < 2) throw std::invalid_argument("sample_pair_batch: dataset too small (need >= 2)");
  if (B < 2) throw std::invalid_argument("sample_pair_batch: batch size must be >= 2");
  if (V < 1) throw std::invalid_argument("sample_pair_batch: need at least one positive view");
  if (n_neg < 1) throw std::invalid_argument("sample_pair_batch: need at least one negative");
  if (ds.channels != fam.channels || ds.length != fam.length)
    throw std::invalid_argument("sample_pair_batch: dataset window " + std::to_string(ds.channels) +
                                "x" + std::to_string(ds.length) + " does not match family");
  Rng rng(mix_seed(seed, 0xBA7C4ULL));
  PairBatch pb;
  pb.B = B;
  pb.V = V;
  pb.n_neg = n_neg;
  pb.channels = ds.channels;
  pb.length = ds.length;
  const size_t flat = static_cast<size_t>(ds.flat());

  // sources without replacement when possible; otherwise uniform draws
  std::vector<int> src(static_cast<size_t>(B));
  if (ds.size() >= B) {
    std::vector<int> perm(static_cast<size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) perm[static_cast<size_t>(i)] = i;
    for (size_t i = perm.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.uniform_int(0, i - 1));
      std::swap(perm[i - 1], perm[j]);
    }
    for (int i = 0; i < B; ++i) src[static_cast<size_t>(i)] = perm[static_cast<size_t>(i)];
  } else {
    for (int i = 0; i < B; ++i) src[static_cast<size_t>(i)] = rng.index(ds.size());
  }

  pb.raw.resize(static_cast<size_t>(B) * flat);
  pb.anchors.resize(static_cast<size_t>(B) * flat);
  pb.positives.resize(static_cast<size_t>(B) * V * flat);
  pb.records.resize(static_cast<size_t>(B) * (V + 1));
  pb.labels.resize(static_cast<size_t>(B));
  pb.source_idx = src;
  for (int i = 0; i < B; ++i) {
    const auto& window = ds.x[static_cast<size_t>(src[static_cast<size_t>(i)])];
    pb.labels[static_cast<size_t>(i)] = ds.y[static_cast<size_t>(src[static_cast<size_t>(i)])];
    std::copy(window.begin(), window.end(), pb.raw.begin() + static_cast<long>(i) * flat);
    for (int v = 0; v <= V; ++v) {
      TransformRecord rec;
      std::vector<double> view = apply_transform(window, fam, spec, rng, &rec);
      pb.records[static_cast<size_t>(i) * (V + 1) + static_cast<size_t>(v)] = rec;
      double* dst = v == 0 ? pb.anchors.data() + static_cast<long>(i) * flat
                           : pb.positives.data() + (static_cast<long>(i) * V + (v - 1)) * flat;
      std::copy(view.begin(), view.end(), dst);
    }
  }

  // negatives: anchor views of other slots, never sharing a source window
  pb.neg_index.resize(static_cast<size_t>(B) * n_neg);
  pb.negatives.resize(static_cast<size_t>(B) * n_neg * flat);
  for (int i = 0; i < B; ++i) {
    bool any_other = false;
    for (int j = 0; j < B; ++j)
      if (src[static_cast<size_t>(j)] != src[static_cast<size_t>(i)]) any_other = true;
    if (!any_other)
      throw std::invalid_argument("sample_pair_batch: no distinct source available for negatives");
    for (int k = 0; k < n_neg; ++k) {
      int j = rng.index(B);
      while (src[static_cast<size_t>(j)] == src[static_cast<size_t>(i)]) j = rng.index(B);
      pb.neg_index[static_cast<size_t>(i) * n_neg + static_cast<size_t>(k)] = j;
      std::copy(pb.anchors.begin() + static_cast<long>(j) * flat,
                pb.anchors.begin() + static_cast<long>(j + 1) * flat,
                pb.negatives.begin() + (static_cast<long>(i) * n_neg + k) * flat);
    }
  }
  return pb;
}

}  // namespace scl
