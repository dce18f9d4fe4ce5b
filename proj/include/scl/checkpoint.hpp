#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "scl/common.hpp"
#include "scl/config.hpp"
#include "scl/model.hpp"

// Checkpoint file = text header (format version, config, run metadata as
// key-value lines, closed by `end_header`) + named binary tensor records +
// a trailing FNV-1a checksum over everything before it. Loads are all-or-
// nothing: the checksum is verified before any tensor is materialized.

namespace scl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr int kCheckpointVersion = 1;
constexpr int kTensorRecordVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  long steps = 0;
  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  ExperimentConfig config;
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

namespace detail {

template <class T>
inline void put_raw(std::string& buf, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

inline void put_tensor_record(std::string& buf, const std::string& name, const Tensor& t) {
  put_raw(buf, static_cast<std::uint32_t>(name.size()));
  buf.append(name);
  buf.append("SCLT", 4);
  put_raw(buf, static_cast<std::uint32_t>(kTensorRecordVersion));
  put_raw(buf, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_raw(buf, static_cast<std::uint32_t>(t.dim(i)));
  const auto& v = t.values();
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > buf.size())
      throw IoError(std::string("checkpoint truncated while reading ") + what);
  }
  template <class T>
  T take(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string take_bytes(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ExperimentConfig& config,
                            const CheckpointMeta& meta,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::string buf;
  buf += "SCLCKPT " + std::to_string(kCheckpointVersion) + "\n";
  buf += serialize_config(config, /*with_run=*/false);
  buf += "meta.seed = " + std::to_string(meta.seed) + "\n";
  buf += "meta.steps = " + std::to_string(meta.steps) + "\n";
  buf += "meta.tensors = " + std::to_string(tensors.size()) + "\n";
  buf += "end_header\n";
  for (const auto& [name, t] : tensors) detail::put_tensor_record(buf, name, t);
  detail::put_raw(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "' for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed for checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < 8 + 8) throw IoError("checkpoint truncated: file too small");

  // checksum first — nothing is materialized from a corrupt file
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (fnv1a64(buf.data(), buf.size() - 8) != stored)
    throw IoError("checkpoint checksum mismatch: '" + path + "' is corrupt");

  size_t header_end = buf.find("end_header\n");
  if (header_end == std::string::npos) throw IoError("checkpoint truncated: missing end_header");

  Checkpoint ck;
  std::istringstream header(buf.substr(0, header_end));
  std::string line;
  if (!std::getline(header, line) || line.rfind("SCLCKPT ", 0) != 0)
    throw IoError("not a checkpoint file (bad magic)");
  int version = std::atoi(line.c_str() + 8);
  if (version < 1 || version > kCheckpointVersion)
    throw IoError("unsupported checkpoint format version " + std::to_string(version) +
                  " (this build reads <= " + std::to_string(kCheckpointVersion) + ")");
  long declared_tensors = -1;
  std::string config_text;
  while (std::getline(header, line)) {
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.rfind("meta.", 0) == 0) {
      size_t eq = t.find('=');
      if (eq == std::string::npos) throw IoError("checkpoint header: malformed '" + t + "'");
      std::string key = detail::trim(t.substr(0, eq));
      std::string val = detail::trim(t.substr(eq + 1));
      if (key == "meta.seed") ck.meta.seed = detail::parse_u64(key, val);
      else if (key == "meta.steps") ck.meta.steps = detail::parse_int(key, val);
      else if (key == "meta.tensors") declared_tensors = detail::parse_int(key, val);
      else throw IoError("checkpoint header: unknown key '" + key + "'");
    } else {
      config_text += t + "\n";
    }
  }
  ck.config = parse_config_text(config_text);
  if (declared_tensors < 0) throw IoError("checkpoint header: missing meta.tensors");

  detail::ByteReader r{buf, header_end + std::strlen("end_header\n")};
  const size_t payload_end = buf.size() - 8;
  for (long i = 0; i < declared_tensors; ++i) {
    auto name_len = r.take<std::uint32_t>("tensor name length");
    std::string name = r.take_bytes(name_len, "tensor name");
    std::string magic = r.take_bytes(4, "tensor magic");
    if (magic != "SCLT") throw IoError("checkpoint: bad tensor record magic for '" + name + "'");
    auto rec_version = r.take<std::uint32_t>("tensor record version");
    if (rec_version < 1 || rec_version > kTensorRecordVersion)
      throw IoError("unsupported tensor record version " + std::to_string(rec_version));
    auto rank = r.take<std::uint32_t>("tensor rank");
    if (rank > 8) throw IoError("checkpoint: implausible tensor rank for '" + name + "'");
    Shape shape;
    long n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(r.take<std::uint32_t>("tensor dims")));
      n *= shape.back();
    }
    r.need(static_cast<size_t>(n) * sizeof(double), "tensor payload");
    std::vector<double> data(static_cast<size_t>(n));
    std::memcpy(data.data(), buf.data() + r.pos, data.size() * sizeof(double));
    r.pos += data.size() * sizeof(double);
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.pos != payload_end)
    throw IoError("checkpoint: " + std::to_string(payload_end - r.pos) +
                  " unexpected trailing bytes");
  return ck;
}

// Rebuilds a Model from a loaded checkpoint; every parameter must be present
// with its exact shape.
inline Model model_from_checkpoint(const Checkpoint& ck) {
  ck.config.validate();
  Model m = Model::init(ck.config.encoder, ck.config.head, ck.config.partition, ck.meta.seed);
  auto params = m.named_params();
  if (params.size() != ck.tensors.size())
    throw IoError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model needs " +
                  std::to_string(params.size()));
  for (auto& [name, p] : params) {
    const Tensor* found = nullptr;
    for (const auto& [tn, t] : ck.tensors)
      if (tn == name) found = &t;
    if (!found) throw IoError("checkpoint missing tensor '" + name + "'");
    if (found->shape() != p.shape())
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_str(found->shape()) +
                    ", model expects " + shape_str(p.shape()));
    p.mutable_values() = found->values();
  }
  return m;
}

inline void save_model_checkpoint(const std::string& path, const ExperimentConfig& config,
                                  const CheckpointMeta& meta, const Model& m) {
  save_checkpoint(path, config, meta, m.named_params());
}

inline std::uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for hashing");
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string s = ss.str();
  return fnv1a64(s.data(), s.size());
}

}  // namespace scl
