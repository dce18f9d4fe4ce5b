#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scl/common.hpp"
#include "scl/rng.hpp"
#include "scl/signal.hpp"

// Semantic-preserving transforms T: circular phase shift (single-channel),
// 3D rotation (3-channel), additive Gaussian noise, and their composition.

namespace scl {

enum class TransformKind { PHASE_SHIFT, ROTATION_3D, NOISE, COMPOSITE };

inline const char* transform_name(TransformKind k) {
  switch (k) {
    case TransformKind::PHASE_SHIFT: return "phase_shift";
    case TransformKind::ROTATION_3D: return "rotation_3d";
    case TransformKind::NOISE: return "noise";
    default: return "composite";
  }
}

inline TransformKind transform_from_name(const std::string& s) {
  if (s == "phase_shift") return TransformKind::PHASE_SHIFT;
  if (s == "rotation_3d") return TransformKind::ROTATION_3D;
  if (s == "noise") return TransformKind::NOISE;
  if (s == "composite") return TransformKind::COMPOSITE;
  throw std::invalid_argument("unknown transform '" + s +
                              "' (expected phase_shift|rotation_3d|noise|composite)");
}

enum class RotationMode { X_AXIS, Y_AXIS, Z_AXIS, UNIFORM_SO3 };

inline const char* rotation_name(RotationMode m) {
  switch (m) {
    case RotationMode::X_AXIS: return "x";
    case RotationMode::Y_AXIS: return "y";
    case RotationMode::Z_AXIS: return "z";
    default: return "so3";
  }
}

inline RotationMode rotation_from_name(const std::string& s) {
  if (s == "x") return RotationMode::X_AXIS;
  if (s == "y") return RotationMode::Y_AXIS;
  if (s == "z") return RotationMode::Z_AXIS;
  if (s == "so3") return RotationMode::UNIFORM_SO3;
  throw std::invalid_argument("unknown rotation mode '" + s + "' (expected x|y|z|so3)");
}

struct TransformSpec {
  TransformKind kind = TransformKind::PHASE_SHIFT;
  int phase_min = 0;   // shift sampled in [phase_min, phase_max); phase_max 0 => L
  int phase_max = 0;
  RotationMode rotation = RotationMode::UNIFORM_SO3;
  double angle_min = 0.0;  // axis-mode angle range, radians
  double angle_max = 2.0 * M_PI;
  double noise_std = 0.0;

  bool operator==(const TransformSpec&) const = default;
};

using Rot3 = std::array<double, 9>;  // row-major 3x3

inline Rot3 identity_rotation() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

inline double rotation_orthonormality_defect(const Rot3& R) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += R[static_cast<size_t>(k * 3 + i)] * R[static_cast<size_t>(k * 3 + j)];
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

inline double rotation_det(const Rot3& R) {
  return R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
         R[2] * (R[3] * R[7] - R[4] * R[6]);
}

inline Rot3 axis_rotation(int axis, double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  switch (axis) {
    case 0: return {1, 0, 0, 0, c, -s, 0, s, c};
    case 1: return {c, 0, s, 0, 1, 0, -s, 0, c};
    default: return {c, -s, 0, s, c, 0, 0, 0, 1};
  }
}

// Haar-uniform SO(3) via a normalized Gaussian quaternion.
inline Rot3 so3_from_quaternion(double w, double x, double y, double z) {
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n; x /= n; y /= n; z /= n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

inline Rot3 random_rotation(Rng& rng, RotationMode mode, double angle_min = 0.0,
                            double angle_max = 2.0 * M_PI) {
  switch (mode) {
    case RotationMode::X_AXIS: return axis_rotation(0, rng.uniform(angle_min, angle_max));
    case RotationMode::Y_AXIS: return axis_rotation(1, rng.uniform(angle_min, angle_max));
    case RotationMode::Z_AXIS: return axis_rotation(2, rng.uniform(angle_min, angle_max));
    default: {
      double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
      if (w == 0 && x == 0 && y == 0 && z == 0) w = 1.0;
      return so3_from_quaternion(w, x, y, z);
    }
  }
}

// Circular shift along time: out[t] = x[(t - k) mod L], per channel.
inline std::vector<double> phase_shift(const std::vector<double>& x, int channels, int length,
                                       int k) {
  if (static_cast<long>(x.size()) != static_cast<long>(channels) * length)
    throw ShapeError("phase_shift: buffer size " + std::to_string(x.size()) + " != " +
                     std::to_string(channels) + "x" + std::to_string(length));
  if (k < 0 || k >= length)
    throw std::invalid_argument("phase_shift: shift " + std::to_string(k) + " out of range [0," +
                                std::to_string(length) + ")");
  std::vector<double> out(x.size());
  for (int c = 0; c < channels; ++c) {
    const double* src = x.data() + static_cast<long>(c) * length;
    double* dst = out.data() + static_cast<long>(c) * length;
    for (int t = 0; t < length; ++t) dst[t] = src[(t - k + length) % length];
  }
  return out;
}

// Premultiplies every time-step's 3-vector by R; rejects non-orthonormal R.
inline std::vector<double> apply_rotation(const std::vector<double>& x, int length, const Rot3& R) {
  if (static_cast<long>(x.size()) != 3L * length)
    throw ShapeError("apply_rotation: buffer size " + std::to_string(x.size()) + " != 3x" +
                     std::to_string(length));
  if (rotation_orthonormality_defect(R) > 1e-9)
    throw std::invalid_argument("apply_rotation: matrix is not orthonormal (defect > 1e-9)");
  std::vector<double> out(x.size());
  for (int t = 0; t < length; ++t) {
    double v0 = x[static_cast<size_t>(t)];
    double v1 = x[static_cast<size_t>(length + t)];
    double v2 = x[static_cast<size_t>(2 * length + t)];
    out[static_cast<size_t>(t)] = R[0] * v0 + R[1] * v1 + R[2] * v2;
    out[static_cast<size_t>(length + t)] = R[3] * v0 + R[4] * v1 + R[5] * v2;
    out[static_cast<size_t>(2 * length + t)] = R[6] * v0 + R[7] * v1 + R[8] * v2;
  }
  return out;
}

inline std::vector<double> add_noise(const std::vector<double>& x, double std_dev, Rng& rng) {
  if (std_dev < 0) throw std::invalid_argument("add_noise: negative std");
  std::vector<double> out = x;
  if (std_dev > 0)
    for (auto& v : out) v += rng.normal() * std_dev;
  return out;
}

// What was actually done to one view (kept alongside every PairBatch view).
struct TransformRecord {
  int shift = 0;
  bool shifted = false;
  bool rotated = false;
  Rot3 rotation = identity_rotation();
  double noise_std = 0.0;
};

// Draws transform parameters from rng and applies the given TransformSpec to one window.
// COMPOSITE applies whichever parts fit the family: phase shift on
// single-channel, rotation on 3-channel, then noise.
inline std::vector<double> apply_transform(const std::vector<double>& x, const SignalFamily& fam,
                                           const TransformSpec& spec, Rng& rng,
                                           TransformRecord* rec = nullptr) {
  TransformRecord r;
  std::vector<double> out = x;
  const bool want_phase =
      spec.kind == TransformKind::PHASE_SHIFT || spec.kind == TransformKind::COMPOSITE;
  const bool want_rot =
      spec.kind == TransformKind::ROTATION_3D || spec.kind == TransformKind::COMPOSITE;
  const bool want_noise = spec.kind == TransformKind::NOISE ||
                          (spec.kind == TransformKind::COMPOSITE && spec.noise_std > 0);
  if (spec.kind == TransformKind::PHASE_SHIFT && fam.channels != 1)
    throw std::invalid_argument("transform: phase_shift requires a single-channel family");
  if (spec.kind == TransformKind::ROTATION_3D && fam.channels != 3)
    throw std::invalid_argument("transform: rotation_3d requires a 3-channel family");
  if (want_phase && fam.channels == 1) {
    int hi = spec.phase_max > 0 ? spec.phase_max : fam.length;
    if (spec.phase_min < 0 || hi > fam.length || spec.phase_min >= hi)
      throw std::invalid_argument("transform: phase range [" + std::to_string(spec.phase_min) +
                                  "," + std::to_string(hi) + ") invalid for length " +
                                  std::to_string(fam.length));
    r.shift = static_cast<int>(rng.uniform_int(spec.phase_min, hi - 1));
    r.shifted = true;
    out = phase_shift(out, fam.channels, fam.length, r.shift);
  }
  if (want_rot && fam.channels == 3) {
    r.rotation = random_rotation(rng, spec.rotation, spec.angle_min, spec.angle_max);
    r.rotated = true;
    out = apply_rotation(out, fam.length, r.rotation);
  }
  if (want_noise) {
    r.noise_std = spec.noise_std;
    out = add_noise(out, spec.noise_std, rng);
  }
  if (rec) *rec = r;
  return out;
}

}  // namespace scl
