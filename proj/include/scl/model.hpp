#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scl/common.hpp"
#include "scl/rng.hpp"
#include "scl/tensor.hpp"

// Encoders with an explicitly partitioned latent output [inv | var | free],
// task heads (classifier logits or signal decoder), and an optional Gaussian
// reparameterization path.

namespace scl {

struct LatentPartition {
  int d_inv = 8;
  int d_var = 24;
  int d_free = 0;

  int total() const { return d_inv + d_var + d_free; }

  void validate() const {
    if (d_inv < 0 || d_var < 0 || d_free < 0)
      throw std::invalid_argument("partition: slice widths must be nonnegative, got (" +
                                  std::to_string(d_inv) + "," + std::to_string(d_var) + "," +
                                  std::to_string(d_free) + ")");
    if (total() <= 0) throw std::invalid_argument("partition: total latent width must be positive");
  }

  bool operator==(const LatentPartition&) const = default;
};

enum class Subspace { INV, VAR, FREE, FULL };

inline const char* subspace_name(Subspace s) {
  switch (s) {
    case Subspace::INV: return "inv";
    case Subspace::VAR: return "var";
    case Subspace::FREE: return "free";
    default: return "full";
  }
}

inline Subspace subspace_from_name(const std::string& s) {
  if (s == "inv") return Subspace::INV;
  if (s == "var") return Subspace::VAR;
  if (s == "free") return Subspace::FREE;
  if (s == "full") return Subspace::FULL;
  throw std::invalid_argument("unknown subspace '" + s + "' (expected inv|var|free|full)");
}

enum class EncoderArch { MLP, CNN1D };

struct ConvBlock {
  int channels = 16;
  int kernel = 5;
  int stride = 2;
  bool operator==(const ConvBlock&) const = default;
};

struct EncoderSpec {
  EncoderArch kind = EncoderArch::CNN1D;
  int in_channels = 1;
  int in_length = 128;
  std::vector<ConvBlock> blocks;  // CNN1D trunk
  std::vector<int> hidden;        // MLP trunk widths
  int latent = 32;
  bool vae = false;

  int flat_input() const { return in_channels * in_length; }

  // Output length after each conv block; throws if any feature map is empty.
  std::vector<int> feature_lengths() const {
    std::vector<int> ls;
    int L = in_length;
    for (size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      if (b.channels < 1 || b.kernel < 1 || b.stride < 1)
        throw std::invalid_argument("encoder: conv block " + std::to_string(i) +
                                    " has non-positive channels/kernel/stride");
      if (L < b.kernel)
        throw std::invalid_argument("encoder: conv block " + std::to_string(i) +
                                    " produces an empty feature map (length " + std::to_string(L) +
                                    " < kernel " + std::to_string(b.kernel) + ")");
      L = (L - b.kernel) / b.stride + 1;
      ls.push_back(L);
    }
    return ls;
  }

  void validate() const {
    if (in_channels < 1 || in_length < 1)
      throw std::invalid_argument("encoder: input must have positive channels and length");
    if (latent < 1) throw std::invalid_argument("encoder: latent width must be positive");
    if (kind == EncoderArch::CNN1D) {
      if (blocks.empty()) throw std::invalid_argument("encoder: CNN1D needs at least one conv block");
      feature_lengths();
    } else {
      for (int h : hidden)
        if (h < 1) throw std::invalid_argument("encoder: MLP hidden widths must be positive");
    }
  }

  bool operator==(const EncoderSpec&) const = default;
};

enum class HeadKind { CLASSIFIER, DECODER };

struct HeadSpec {
  HeadKind kind = HeadKind::CLASSIFIER;
  std::vector<int> hidden;
  int output = 4;  // classes, or channels*length for a decoder

  void validate() const {
    if (output < 1) throw std::invalid_argument("head: output width must be positive");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("head: hidden widths must be positive");
  }

  bool operator==(const HeadSpec&) const = default;
};

struct Dense {
  Tensor w;  // [in, out]
  Tensor b;  // [1, out]
};

struct ConvLayer {
  Tensor w;  // [c_out, c_in, k]
  Tensor b;  // [c_out]
  int stride = 1;
};

struct SplitLatent {
  Tensor inv, var, free;
};

inline SplitLatent split_latent(const Tensor& z, const LatentPartition& p) {
  p.validate();
  const int d = z.rank() == 2 ? z.dim(1) : z.dim(0);
  if (d != p.total())
    throw ShapeError("split_latent: latent width " + std::to_string(d) +
                     " != partition total " + std::to_string(p.total()));
  return {slice_last(z, 0, p.d_inv), slice_last(z, p.d_inv, p.d_inv + p.d_var),
          slice_last(z, p.d_inv + p.d_var, d)};
}

inline Tensor latent_subspace(const Tensor& z, const LatentPartition& p, Subspace s) {
  if (s == Subspace::FULL) return z;
  auto sp = split_latent(z, p);
  const Tensor& t = s == Subspace::INV ? sp.inv : (s == Subspace::VAR ? sp.var : sp.free);
  if (t.numel() == 0 && (z.rank() == 1 || z.dim(0) > 0))
    throw ShapeError(std::string("subspace '") + subspace_name(s) +
                     "' is empty under partition (" + std::to_string(p.d_inv) + "," +
                     std::to_string(p.d_var) + "," + std::to_string(p.d_free) + ")");
  return t;
}

// z = mu + exp(0.5*log_var) * eps, eps ~ N(0,1) from the given generator.
inline Tensor reparameterize(const Tensor& mu, const Tensor& log_var, Rng& rng) {
  if (mu.shape() != log_var.shape())
    throw ShapeError("reparameterize: mu " + shape_str(mu.shape()) + " vs log_var " +
                     shape_str(log_var.shape()));
  Tensor eps = Tensor::randn(mu.shape(), rng);
  return mu + exp(log_var * 0.5) * eps;
}

// KL(N(mu, exp(log_var)) || N(0,1)) = -1/2 sum(1 + log_var - mu^2 - exp(log_var)),
// averaged over batch rows for rank-2 inputs.
inline Tensor kl_divergence(const Tensor& mu, const Tensor& log_var) {
  if (mu.shape() != log_var.shape())
    throw ShapeError("kl_divergence: mu " + shape_str(mu.shape()) + " vs log_var " +
                     shape_str(log_var.shape()));
  Tensor per_elem = mu * mu + exp(log_var) - 1.0 - log_var;
  Tensor total = sum(per_elem) * 0.5;
  if (mu.rank() == 2 && mu.dim(0) > 1) return total / static_cast<double>(mu.dim(0));
  return total;
}

struct Model {
  EncoderSpec enc;
  HeadSpec head;
  LatentPartition part;

  std::vector<ConvLayer> convs;
  std::vector<Dense> enc_dense;  // MLP hidden layers
  Dense enc_out;                 // linear projection to latent (2x latent when vae)
  std::vector<Dense> head_hidden;
  Dense head_out;

  static Model init(EncoderSpec e, HeadSpec h, LatentPartition p, std::uint64_t seed) {
    e.validate();
    h.validate();
    p.validate();
    if (p.total() != e.latent)
      throw std::invalid_argument("model: partition total " + std::to_string(p.total()) +
                                  " != latent width " + std::to_string(e.latent));
    Model m;
    m.enc = e;
    m.head = h;
    m.part = p;
    Rng rng(mix_seed(seed, 0x57A67ULL));
    auto he_dense = [&](int in, int out) {
      Dense d;
      d.w = Tensor::randn({in, out}, rng, std::sqrt(2.0 / in));
      d.w.set_requires_grad(true);
      d.b = Tensor::zeros({1, out});
      d.b.set_requires_grad(true);
      return d;
    };
    int trunk_out = e.flat_input();
    if (e.kind == EncoderArch::CNN1D) {
      int cin = e.in_channels;
      auto lens = e.feature_lengths();
      for (size_t i = 0; i < e.blocks.size(); ++i) {
        const auto& blk = e.blocks[i];
        ConvLayer c;
        c.w = Tensor::randn({blk.channels, cin, blk.kernel}, rng,
                            std::sqrt(2.0 / (static_cast<double>(cin) * blk.kernel)));
        c.w.set_requires_grad(true);
        c.b = Tensor::zeros({blk.channels});
        c.b.set_requires_grad(true);
        c.stride = blk.stride;
        m.convs.push_back(c);
        cin = blk.channels;
      }
      trunk_out = e.blocks.back().channels * lens.back();
    } else {
      int in = e.flat_input();
      for (int hwidth : e.hidden) {
        m.enc_dense.push_back(he_dense(in, hwidth));
        in = hwidth;
      }
      trunk_out = in;
    }
    m.enc_out = he_dense(trunk_out, e.vae ? 2 * e.latent : e.latent);
    int hin = e.latent;
    for (int hwidth : h.hidden) {
      m.head_hidden.push_back(he_dense(hin, hwidth));
      hin = hwidth;
    }
    m.head_out = he_dense(hin, h.output);
    return m;
  }

  // Stable name -> tensor registry (order fixed for checkpoints and optimizers).
  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (size_t i = 0; i < convs.size(); ++i) {
      out.emplace_back("enc.conv" + std::to_string(i) + ".w", convs[i].w);
      out.emplace_back("enc.conv" + std::to_string(i) + ".b", convs[i].b);
    }
    for (size_t i = 0; i < enc_dense.size(); ++i) {
      out.emplace_back("enc.dense" + std::to_string(i) + ".w", enc_dense[i].w);
      out.emplace_back("enc.dense" + std::to_string(i) + ".b", enc_dense[i].b);
    }
    out.emplace_back("enc.out.w", enc_out.w);
    out.emplace_back("enc.out.b", enc_out.b);
    for (size_t i = 0; i < head_hidden.size(); ++i) {
      out.emplace_back("head.dense" + std::to_string(i) + ".w", head_hidden[i].w);
      out.emplace_back("head.dense" + std::to_string(i) + ".b", head_hidden[i].b);
    }
    out.emplace_back("head.out.w", head_out.w);
    out.emplace_back("head.out.b", head_out.b);
    return out;
  }

  // Full projection output: [B, latent] (or [B, 2*latent] when vae).
  Tensor projection(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != enc.flat_input())
      throw ShapeError("encode: expected input [B," + std::to_string(enc.flat_input()) +
                       "], got " + shape_str(x.shape()));
    Tensor h = x;
    if (enc.kind == EncoderArch::CNN1D) {
      h = reshape(h, {x.dim(0), enc.in_channels, enc.in_length});
      for (const auto& c : convs) h = relu(conv1d(h, c.w, c.b, c.stride));
      h = reshape(h, {x.dim(0), static_cast<int>(h.numel() / x.dim(0))});
    } else {
      for (const auto& d : enc_dense) h = relu(matmul(h, d.w) + d.b);
    }
    return matmul(h, enc_out.w) + enc_out.b;
  }

  // Deterministic latent: the mean path for VAE encoders.
  Tensor encode(const Tensor& x) const {
    Tensor p = projection(x);
    return enc.vae ? slice_last(p, 0, enc.latent) : p;
  }

  struct Stochastic {
    Tensor z, mu, log_var;
  };

  Stochastic encode_stochastic(const Tensor& x, Rng& rng) const {
    Tensor p = projection(x);
    if (!enc.vae) return {p, p, Tensor::zeros(p.shape())};
    Tensor mu = slice_last(p, 0, enc.latent);
    Tensor lv = slice_last(p, enc.latent, 2 * enc.latent);
    return {reparameterize(mu, lv, rng), mu, lv};
  }

  Tensor head_forward(const Tensor& z) const {
    if (z.rank() != 2 || z.dim(1) != enc.latent)
      throw ShapeError("head_forward: expected [B," + std::to_string(enc.latent) + "], got " +
                       shape_str(z.shape()));
    Tensor h = z;
    for (const auto& d : head_hidden) h = relu(matmul(h, d.w) + d.b);
    return matmul(h, head_out.w) + head_out.b;
  }
};

}  // namespace scl
