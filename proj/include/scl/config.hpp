#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scl/loss.hpp"
#include "scl/model.hpp"
#include "scl/optim.hpp"
#include "scl/signal.hpp"
#include "scl/transform.hpp"

// Declarative description of one run, serialized as `section.key = value`
// lines with '#' comments. parse(serialize(c)) == c, and unknown keys are
// rejected so typos can't silently change an experiment.

namespace scl {

struct OptimSettings {
  OptimizerKind kind = OptimizerKind::ADAM;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const OptimSettings&) const = default;
};

struct TrainSettings {
  int batch = 64;
  int steps = 3000;
  int views = 2;      // positive views per source (V)
  int negatives = 1;  // in-batch negatives per anchor
  int per_class = 150;
  double test_frac = 0.2;
  double kl_weight = 1e-3;
  std::uint64_t seed = 0;
  bool operator==(const TrainSettings&) const = default;
};

// Output-location fields live in their own section; they are excluded from
// checkpoint headers so relocating a run does not change its content hash.
struct RunSettings {
  std::string out = "runs";
  std::string tag;
  bool operator==(const RunSettings&) const = default;
};

struct ExperimentConfig {
  SignalFamily family;
  TransformSpec transform;
  EncoderSpec encoder;
  HeadSpec head;
  LatentPartition partition;
  SclHyperparams hp;
  OptimSettings optim;
  TrainSettings train;
  RunSettings run;

  void validate() const {
    family.validate();
    encoder.validate();
    head.validate();
    partition.validate();
    hp.validate();
    if (partition.total() != encoder.latent)
      throw std::invalid_argument("config: partition total " + std::to_string(partition.total()) +
                                  " != encoder.latent " + std::to_string(encoder.latent));
    if (encoder.in_channels != family.channels || encoder.in_length != family.length)
      throw std::invalid_argument("config: encoder input " + std::to_string(encoder.in_channels) +
                                  "x" + std::to_string(encoder.in_length) + " != family window " +
                                  std::to_string(family.channels) + "x" +
                                  std::to_string(family.length));
    if (head.kind == HeadKind::CLASSIFIER && head.output != family.num_classes)
      throw std::invalid_argument("config: classifier head output " + std::to_string(head.output) +
                                  " != family classes " + std::to_string(family.num_classes));
    if (head.kind == HeadKind::DECODER && head.output != family.flat())
      throw std::invalid_argument("config: decoder head output " + std::to_string(head.output) +
                                  " != family window " + std::to_string(family.flat()));
    if (transform.kind == TransformKind::PHASE_SHIFT && family.channels != 1)
      throw std::invalid_argument("config: phase_shift transform needs a single-channel family");
    if (transform.kind == TransformKind::ROTATION_3D && family.channels != 3)
      throw std::invalid_argument("config: rotation_3d transform needs a 3-channel family");
    if (encoder.kind == EncoderArch::CNN1D) {
      int max_k = 0;
      for (const auto& b : encoder.blocks) max_k = std::max(max_k, b.kernel);
      if (family.length <= 2 * max_k)
        throw std::invalid_argument("config: window length " + std::to_string(family.length) +
                                    " too short for kernel footprint " + std::to_string(max_k));
    }
    if (train.batch < 2) throw std::invalid_argument("config: train.batch must be >= 2");
    if (train.steps < 0) throw std::invalid_argument("config: train.steps must be >= 0");
    if (train.views < 1) throw std::invalid_argument("config: train.views must be >= 1");
    if (train.negatives < 1) throw std::invalid_argument("config: train.negatives must be >= 1");
    if (train.per_class < 1) throw std::invalid_argument("config: train.per_class must be >= 1");
    if (train.test_frac < 0 || train.test_frac >= 1)
      throw std::invalid_argument("config: train.test_frac must be in [0,1)");
    if (train.kl_weight < 0) throw std::invalid_argument("config: train.kl_weight must be >= 0");
    if (optim.lr <= 0) throw std::invalid_argument("config: optim.lr must be positive");
  }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config: '" + key + "' expects true|false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::istringstream is(v);
  std::string cell;
  while (std::getline(is, cell, ',')) out.push_back(parse_int(key, trim(cell)));
  return out;
}

inline std::string fmt_int_list(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// conv stack grammar: "8x5s2,16x5s2" = channels x kernel s stride per block
inline std::vector<ConvBlock> parse_blocks(const std::string& key, const std::string& v) {
  std::vector<ConvBlock> out;
  if (trim(v).empty()) return out;
  std::istringstream is(v);
  std::string cell;
  while (std::getline(is, cell, ',')) {
    ConvBlock b;
    if (std::sscanf(trim(cell).c_str(), "%dx%ds%d", &b.channels, &b.kernel, &b.stride) != 3)
      throw std::invalid_argument("config: '" + key + "' block '" + cell +
                                  "' is not of the form CHANNELSxKERNELsSTRIDE");
    out.push_back(b);
  }
  return out;
}

inline std::string fmt_blocks(const std::vector<ConvBlock>& blocks) {
  std::string s;
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(blocks[i].channels) + "x" + std::to_string(blocks[i].kernel) + "s" +
         std::to_string(blocks[i].stride);
  }
  return s;
}

}  // namespace detail

inline void config_set(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  if (key == "family.kind") c.family.kind = family_from_name(v);
  else if (key == "family.classes") c.family.num_classes = parse_int(key, v);
  else if (key == "family.length") c.family.length = parse_int(key, v);
  else if (key == "family.channels") c.family.channels = parse_int(key, v);
  else if (key == "family.sample_rate") c.family.sample_rate = parse_double(key, v);
  else if (key == "transform.kind") c.transform.kind = transform_from_name(v);
  else if (key == "transform.phase_min") c.transform.phase_min = parse_int(key, v);
  else if (key == "transform.phase_max") c.transform.phase_max = parse_int(key, v);
  else if (key == "transform.rotation") c.transform.rotation = rotation_from_name(v);
  else if (key == "transform.angle_min") c.transform.angle_min = parse_double(key, v);
  else if (key == "transform.angle_max") c.transform.angle_max = parse_double(key, v);
  else if (key == "transform.noise_std") c.transform.noise_std = parse_double(key, v);
  else if (key == "encoder.kind")
    c.encoder.kind = v == "mlp" ? EncoderArch::MLP
                     : v == "cnn1d" ? EncoderArch::CNN1D
                     : throw std::invalid_argument("config: unknown encoder kind '" + v +
                                                   "' (expected mlp|cnn1d)");
  else if (key == "encoder.in_channels") c.encoder.in_channels = parse_int(key, v);
  else if (key == "encoder.in_length") c.encoder.in_length = parse_int(key, v);
  else if (key == "encoder.blocks") c.encoder.blocks = parse_blocks(key, v);
  else if (key == "encoder.hidden") c.encoder.hidden = parse_int_list(key, v);
  else if (key == "encoder.latent") c.encoder.latent = parse_int(key, v);
  else if (key == "encoder.vae") c.encoder.vae = parse_bool(key, v);
  else if (key == "head.kind")
    c.head.kind = v == "classifier" ? HeadKind::CLASSIFIER
                  : v == "decoder" ? HeadKind::DECODER
                  : throw std::invalid_argument("config: unknown head kind '" + v +
                                                "' (expected classifier|decoder)");
  else if (key == "head.hidden") c.head.hidden = parse_int_list(key, v);
  else if (key == "head.output") c.head.output = parse_int(key, v);
  else if (key == "partition.d_inv") c.partition.d_inv = parse_int(key, v);
  else if (key == "partition.d_var") c.partition.d_var = parse_int(key, v);
  else if (key == "partition.d_free") c.partition.d_free = parse_int(key, v);
  else if (key == "hp.mode") c.hp.mode = mode_from_name(v);
  else if (key == "hp.beta") c.hp.beta = parse_double(key, v);
  else if (key == "hp.lambda") c.hp.lambda = parse_double(key, v);
  else if (key == "hp.denom_floor") c.hp.denom_floor = parse_double(key, v);
  else if (key == "hp.eps") c.hp.eps = parse_double(key, v);
  else if (key == "optim.kind") c.optim.kind = optimizer_from_name(v);
  else if (key == "optim.lr") c.optim.lr = parse_double(key, v);
  else if (key == "optim.beta1") c.optim.beta1 = parse_double(key, v);
  else if (key == "optim.beta2") c.optim.beta2 = parse_double(key, v);
  else if (key == "optim.eps") c.optim.eps = parse_double(key, v);
  else if (key == "train.batch") c.train.batch = parse_int(key, v);
  else if (key == "train.steps") c.train.steps = parse_int(key, v);
  else if (key == "train.views") c.train.views = parse_int(key, v);
  else if (key == "train.negatives") c.train.negatives = parse_int(key, v);
  else if (key == "train.per_class") c.train.per_class = parse_int(key, v);
  else if (key == "train.test_frac") c.train.test_frac = parse_double(key, v);
  else if (key == "train.kl_weight") c.train.kl_weight = parse_double(key, v);
  else if (key == "train.seed") c.train.seed = parse_u64(key, v);
  else if (key == "run.out") c.run.out = v;
  else if (key == "run.tag") c.run.tag = v;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Canonical serialization; checkpoint headers use with_run=false so the
// output location never affects checkpoint content.
inline std::string serialize_config(const ExperimentConfig& c, bool with_run = true) {
  using namespace detail;
  std::ostringstream os;
  os << "family.kind = " << family_name(c.family.kind) << "\n";
  os << "family.classes = " << c.family.num_classes << "\n";
  os << "family.length = " << c.family.length << "\n";
  os << "family.channels = " << c.family.channels << "\n";
  os << "family.sample_rate = " << fmt_double(c.family.sample_rate) << "\n";
  os << "\n";
  os << "transform.kind = " << transform_name(c.transform.kind) << "\n";
  os << "transform.phase_min = " << c.transform.phase_min << "\n";
  os << "transform.phase_max = " << c.transform.phase_max << "\n";
  os << "transform.rotation = " << rotation_name(c.transform.rotation) << "\n";
  os << "transform.angle_min = " << fmt_double(c.transform.angle_min) << "\n";
  os << "transform.angle_max = " << fmt_double(c.transform.angle_max) << "\n";
  os << "transform.noise_std = " << fmt_double(c.transform.noise_std) << "\n";
  os << "\n";
  os << "encoder.kind = " << (c.encoder.kind == EncoderArch::MLP ? "mlp" : "cnn1d") << "\n";
  os << "encoder.in_channels = " << c.encoder.in_channels << "\n";
  os << "encoder.in_length = " << c.encoder.in_length << "\n";
  os << "encoder.blocks = " << fmt_blocks(c.encoder.blocks) << "\n";
  os << "encoder.hidden = " << fmt_int_list(c.encoder.hidden) << "\n";
  os << "encoder.latent = " << c.encoder.latent << "\n";
  os << "encoder.vae = " << (c.encoder.vae ? "true" : "false") << "\n";
  os << "\n";
  os << "head.kind = " << (c.head.kind == HeadKind::CLASSIFIER ? "classifier" : "decoder") << "\n";
  os << "head.hidden = " << fmt_int_list(c.head.hidden) << "\n";
  os << "head.output = " << c.head.output << "\n";
  os << "\n";
  os << "partition.d_inv = " << c.partition.d_inv << "\n";
  os << "partition.d_var = " << c.partition.d_var << "\n";
  os << "partition.d_free = " << c.partition.d_free << "\n";
  os << "\n";
  os << "hp.mode = " << mode_name(c.hp.mode) << "\n";
  os << "hp.beta = " << fmt_double(c.hp.beta) << "\n";
  os << "hp.lambda = " << fmt_double(c.hp.lambda) << "\n";
  os << "hp.denom_floor = " << fmt_double(c.hp.denom_floor) << "\n";
  os << "hp.eps = " << fmt_double(c.hp.eps) << "\n";
  os << "\n";
  os << "optim.kind = " << optimizer_name(c.optim.kind) << "\n";
  os << "optim.lr = " << fmt_double(c.optim.lr) << "\n";
  os << "optim.beta1 = " << fmt_double(c.optim.beta1) << "\n";
  os << "optim.beta2 = " << fmt_double(c.optim.beta2) << "\n";
  os << "optim.eps = " << fmt_double(c.optim.eps) << "\n";
  os << "\n";
  os << "train.batch = " << c.train.batch << "\n";
  os << "train.steps = " << c.train.steps << "\n";
  os << "train.views = " << c.train.views << "\n";
  os << "train.negatives = " << c.train.negatives << "\n";
  os << "train.per_class = " << c.train.per_class << "\n";
  os << "train.test_frac = " << fmt_double(c.train.test_frac) << "\n";
  os << "train.kl_weight = " << fmt_double(c.train.kl_weight) << "\n";
  os << "train.seed = " << c.train.seed << "\n";
  if (with_run) {
    os << "\n";
    os << "run.out = " << c.run.out << "\n";
    os << "run.tag = " << c.run.tag << "\n";
  }
  return os.str();
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          ExperimentConfig base = ExperimentConfig{}) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'section.key = value', got '" + line + "'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": key '" + key +
                                  "' has no section prefix");
    config_set(base, key, value);
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path,
                                    ExperimentConfig base = ExperimentConfig{}) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

inline void apply_overrides(ExperimentConfig& c, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override '" + s + "' is not of the form key=value");
    config_set(c, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
}

// ---- default experiment factories (desk-scale) ----

inline ExperimentConfig default_ecg_config() {
  ExperimentConfig c;
  c.family = ecg_family();
  c.transform.kind = TransformKind::PHASE_SHIFT;
  c.transform.phase_min = 0;
  c.transform.phase_max = 0;  // full [0, L)
  c.encoder.kind = EncoderArch::CNN1D;
  c.encoder.in_channels = 1;
  c.encoder.in_length = 512;
  c.encoder.blocks = {{8, 5, 2}, {16, 5, 2}, {32, 5, 2}, {32, 5, 2}};
  c.encoder.latent = 32;
  c.head.kind = HeadKind::DECODER;
  c.head.hidden = {64, 128};
  c.head.output = 512;
  c.partition = {16, 16, 0};
  c.hp.mode = TrainMode::BASELINE;
  c.train.steps = 3000;
  return c;
}

inline ExperimentConfig default_imu_config() {
  ExperimentConfig c;
  c.family = imu_family();
  c.transform.kind = TransformKind::ROTATION_3D;
  c.transform.rotation = RotationMode::UNIFORM_SO3;
  c.encoder.kind = EncoderArch::CNN1D;
  c.encoder.in_channels = 3;
  c.encoder.in_length = 128;
  c.encoder.blocks = {{16, 5, 2}, {32, 5, 2}, {64, 5, 2}};
  c.encoder.latent = 32;
  c.head.kind = HeadKind::CLASSIFIER;
  c.head.hidden = {32};
  c.head.output = 6;
  c.partition = {8, 24, 0};
  c.hp.mode = TrainMode::STRUCTURED;
  c.train.steps = 5000;
  return c;
}

inline ExperimentConfig default_config(FamilyKind kind) {
  return kind == FamilyKind::ECG_LIKE ? default_ecg_config() : default_imu_config();
}

}  // namespace scl
