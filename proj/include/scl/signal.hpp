#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scl/common.hpp"
#include "scl/rng.hpp"

// Synthetic signal families standing in for real ECG / accelerometer corpora.
// Every generator is a pure function of (seed, class, index): repeated calls
// are bit-identical.

namespace scl {

enum class FamilyKind { ECG_LIKE, IMU_LIKE };

inline const char* family_name(FamilyKind k) {
  return k == FamilyKind::ECG_LIKE ? "ecg_like" : "imu_like";
}

inline FamilyKind family_from_name(const std::string& s) {
  if (s == "ecg_like") return FamilyKind::ECG_LIKE;
  if (s == "imu_like") return FamilyKind::IMU_LIKE;
  throw std::invalid_argument("unknown family '" + s + "' (expected ecg_like|imu_like)");
}

struct SignalFamily {
  FamilyKind kind = FamilyKind::ECG_LIKE;
  int num_classes = 4;
  int length = 512;
  int channels = 1;
  double sample_rate = 100.0;  // nominal Hz

  int flat() const { return channels * length; }

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("family: need at least 2 classes");
    if (length < 8) throw std::invalid_argument("family: window length too short");
    if (kind == FamilyKind::ECG_LIKE && channels != 1)
      throw std::invalid_argument("family: ecg_like is single-channel");
    if (kind == FamilyKind::IMU_LIKE && channels != 3)
      throw std::invalid_argument("family: imu_like has exactly 3 channels");
  }

  bool operator==(const SignalFamily&) const = default;
};

inline SignalFamily ecg_family() { return {FamilyKind::ECG_LIKE, 4, 512, 1, 100.0}; }
inline SignalFamily imu_family() { return {FamilyKind::IMU_LIKE, 6, 128, 3, 50.0}; }

namespace detail {

struct Bump {
  double center;  // fraction of one period
  double width;   // samples
  double amp;
};

// Morphology templates: per class a distinct bump pattern repeated every
// `period` samples. Centers/widths/amps are perturbed per sample.
struct EcgTemplate {
  int period;
  std::vector<Bump> bumps;
};

inline const std::vector<EcgTemplate>& ecg_templates() {
  static const std::vector<EcgTemplate> t = {
      {128, {{0.30, 4.0, 1.0}, {0.45, 9.0, -0.25}}},                    // sharp spike + dip
      {128, {{0.22, 12.0, 0.65}, {0.55, 12.0, 0.65}}},                  // twin wide humps
      {128, {{0.18, 5.0, 0.9}, {0.34, 10.0, -0.45}, {0.62, 18.0, 0.4}}},// asymmetric triplet
      {128, {{0.40, 30.0, 0.55}, {0.78, 9.0, -0.35}}},                  // slow dome + notch
  };
  return t;
}

// Circular (wrapped) distance so bumps near the window edge stay periodic.
inline double wrapped_dist(double a, double b, double L) {
  double d = std::fmod(std::abs(a - b), L);
  return d > L / 2 ? L - d : d;
}

}  // namespace detail

// One ECG-analog window at canonical phase: a periodic Gaussian-bump beat
// train plus integer-frequency baseline wander (so circular shifts stay in
// family) and light noise. amp_scale=0 leaves only the wander.
inline std::vector<double> gen_ecg_signal(std::uint64_t seed, int class_id, int index, int length,
                                          double amp_scale = 1.0) {
  const auto& tmpl = detail::ecg_templates();
  if (class_id < 0 || class_id >= static_cast<int>(tmpl.size()))
    throw std::invalid_argument("gen_ecg_like: class " + std::to_string(class_id) +
                                " out of range [0," + std::to_string(tmpl.size()) + ")");
  Rng rng(mix_seed(mix_seed(seed, 0xEC6 + static_cast<std::uint64_t>(class_id)),
                   static_cast<std::uint64_t>(index)));
  const auto& t = tmpl[static_cast<size_t>(class_id)];
  const double L = static_cast<double>(length);
  const int beats = std::max(1, length / t.period);

  std::vector<double> x(static_cast<size_t>(length), 0.0);
  // per-sample jitter shared across beats (one heart, one morphology)
  double amp_jit = 1.0 + rng.normal() * 0.05;
  double width_jit = 1.0 + rng.normal() * 0.05;
  for (int b = 0; b < beats; ++b) {
    double beat_off = b * (L / beats);
    for (const auto& bump : t.bumps) {
      double c = beat_off + bump.center * (L / beats) + rng.normal() * 0.8;
      double w = std::max(1.5, bump.width * width_jit);
      double a = amp_scale * bump.amp * amp_jit;
      for (int i = 0; i < length; ++i) {
        double d = detail::wrapped_dist(static_cast<double>(i), c, L);
        x[static_cast<size_t>(i)] += a * std::exp(-0.5 * (d / w) * (d / w));
      }
    }
  }
  // integer-frequency wander: circularly periodic baseline drift
  int wf = 1 + static_cast<int>(rng.uniform_int(0, 1));
  double wa = rng.uniform(0.02, 0.08);
  double wp = rng.uniform(0.0, 2.0 * M_PI);
  for (int i = 0; i < length; ++i)
    x[static_cast<size_t>(i)] += wa * std::sin(2.0 * M_PI * wf * i / L + wp);
  for (auto& v : x) v += rng.normal() * 0.01;
  return x;
}

inline std::vector<std::vector<double>> gen_ecg_like(std::uint64_t seed, int class_id, int n,
                                                     int length = 512, double amp_scale = 1.0) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(gen_ecg_signal(seed, class_id, i, length, amp_scale));
  return out;
}

namespace detail {

struct ImuTone {
  int axis;     // 0=x, 1=y, 2=z
  int bin;      // integer DFT bin (cycles per window) — keeps shifts in family
  double amp_lo, amp_hi;
  double phase_off;  // relative to the sample's master phase (phase-locked axes)
};

struct ImuTemplate {
  const char* name;
  std::vector<ImuTone> tones;
  double tilt_std;    // radians of gravity-direction jitter
  double noise_std;
};

// Six activities with distinct dominant z-axis bins: walking 5, jogging 8,
// stairs_up 3, stairs_down 4, sitting 2 (breathing), standing 1 (sway).
// Locomotion classes carry harmonics and cross-axis components; gravity
// (0,0,1) is added to every sample so rotations move the DC part too.
inline const std::vector<ImuTemplate>& imu_templates() {
  static const std::vector<ImuTemplate> t = {
      {"walking",
       {{2, 5, 0.26, 0.36, 0.0}, {2, 10, 0.07, 0.11, 1.1}, {0, 5, 0.12, 0.18, 1.57}, {1, 5, 0.06, 0.10, 0.7}},
       0.06, 0.02},
      {"jogging",
       {{2, 8, 0.55, 0.75, 0.0}, {2, 16, 0.15, 0.25, 0.9}, {0, 8, 0.22, 0.34, 1.57}, {1, 8, 0.12, 0.20, 0.5}},
       0.08, 0.03},
      {"stairs_up",
       {{2, 3, 0.30, 0.42, 0.0}, {0, 3, 0.34, 0.48, 1.2}, {0, 6, 0.10, 0.16, 0.3}, {1, 3, 0.10, 0.16, 2.0}},
       0.07, 0.025},
      {"stairs_down",
       {{2, 4, 0.38, 0.52, 0.0}, {2, 8, 0.12, 0.20, 1.4}, {1, 4, 0.16, 0.26, 0.8}, {0, 4, 0.08, 0.14, 2.3}},
       0.07, 0.025},
      {"sitting", {{2, 2, 0.010, 0.020, 0.0}}, 0.0, 0.01},
      {"standing", {{2, 1, 0.025, 0.040, 0.0}, {0, 1, 0.040, 0.070, 1.3}, {1, 1, 0.030, 0.055, 2.4}}, 0.03, 0.02},
  };
  return t;
}

}  // namespace detail

// One IMU-analog window [3][L] flattened channel-major: gravity + activity
// tones + noise. Sitting keeps gravity exactly (0,0,1) so its mean vector is
// directly testable against the template.
inline std::vector<double> gen_imu_signal(std::uint64_t seed, int activity_id, int index, int length) {
  const auto& tmpl = detail::imu_templates();
  if (activity_id < 0 || activity_id >= static_cast<int>(tmpl.size()))
    throw std::invalid_argument("gen_imu_like: activity " + std::to_string(activity_id) +
                                " out of range [0," + std::to_string(tmpl.size()) + ")");
  Rng rng(mix_seed(mix_seed(seed, 0x1AB0 + static_cast<std::uint64_t>(activity_id)),
                   static_cast<std::uint64_t>(index)));
  const auto& t = tmpl[static_cast<size_t>(activity_id)];
  const double L = static_cast<double>(length);

  // gravity with small orientation jitter (device never held perfectly level)
  double g[3] = {0.0, 0.0, 1.0};
  if (t.tilt_std > 0) {
    double ax = rng.normal() * t.tilt_std;
    double ay = rng.normal() * t.tilt_std;
    g[0] = std::sin(ay);
    g[1] = -std::sin(ax) * std::cos(ay);
    g[2] = std::cos(ax) * std::cos(ay);
  }

  double master_phase = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<double> amps;
  amps.reserve(t.tones.size());
  for (const auto& tone : t.tones) amps.push_back(rng.uniform(tone.amp_lo, tone.amp_hi));

  std::vector<double> x(static_cast<size_t>(3 * length));
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < length; ++i) x[static_cast<size_t>(c * length + i)] = g[c];
  for (size_t k = 0; k < t.tones.size(); ++k) {
    const auto& tone = t.tones[k];
    double* ch = x.data() + static_cast<long>(tone.axis) * length;
    for (int i = 0; i < length; ++i)
      ch[i] += amps[k] * std::sin(2.0 * M_PI * tone.bin * i / L + master_phase + tone.phase_off);
  }
  for (auto& v : x) v += rng.normal() * t.noise_std;
  return x;
}

inline std::vector<std::vector<double>> gen_imu_like(std::uint64_t seed, int activity_id, int n,
                                                     int length = 128) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(gen_imu_signal(seed, activity_id, i, length));
  return out;
}

inline std::vector<double> gen_signal(const SignalFamily& fam, std::uint64_t seed, int class_id,
                                      int index) {
  fam.validate();
  if (class_id < 0 || class_id >= fam.num_classes)
    throw std::invalid_argument("gen_signal: class " + std::to_string(class_id) +
                                " out of range [0," + std::to_string(fam.num_classes) + ")");
  return fam.kind == FamilyKind::ECG_LIKE ? gen_ecg_signal(seed, class_id, index, fam.length)
                                          : gen_imu_signal(seed, class_id, index, fam.length);
}

}  // namespace scl
