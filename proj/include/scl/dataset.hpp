#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "scl/common.hpp"
#include "scl/rng.hpp"
#include "scl/signal.hpp"

// Windowed dataset (one source signal per row), deterministic split, and the
// CSV interchange schema `label,ch0_s0,ch0_s1,...` shared with external data.

namespace scl {

struct Dataset {
  int channels = 1;
  int length = 0;
  int num_classes = 0;
  std::vector<std::vector<double>> x;  // [n][channels*length]
  std::vector<int> y;

  int size() const { return static_cast<int>(x.size()); }
  int flat() const { return channels * length; }
};

// Balanced class-interleaved dataset: rows 0..C-1 are one sample of each
// class, then the next round, etc.
inline Dataset make_dataset(const SignalFamily& fam, int per_class, std::uint64_t seed) {
  fam.validate();
  if (per_class < 1) throw std::invalid_argument("make_dataset: per_class must be positive");
  Dataset ds;
  ds.channels = fam.channels;
  ds.length = fam.length;
  ds.num_classes = fam.num_classes;
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < fam.num_classes; ++c) {
      ds.x.push_back(gen_signal(fam, seed, c, i));
      ds.y.push_back(c);
    }
  return ds;
}

struct SplitDataset {
  Dataset train, test;
};

// 80/20 split by source index, stratified per class, deterministic in seed.
// Views/transforms are never split — only whole source windows.
inline SplitDataset split_dataset(const Dataset& ds, double test_frac, std::uint64_t seed) {
  if (test_frac < 0.0 || test_frac >= 1.0)
    throw std::invalid_argument("split_dataset: test_frac must be in [0,1)");
  SplitDataset out;
  out.train.channels = out.test.channels = ds.channels;
  out.train.length = out.test.length = ds.length;
  out.train.num_classes = out.test.num_classes = ds.num_classes;
  Rng rng(mix_seed(seed, 0x5B117ULL));
  std::vector<std::vector<int>> by_class(static_cast<size_t>(ds.num_classes));
  for (int i = 0; i < ds.size(); ++i) by_class[static_cast<size_t>(ds.y[static_cast<size_t>(i)])].push_back(i);
  for (auto& idx : by_class) {
    // Fisher-Yates with the deterministic generator
    for (size_t i = idx.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.uniform_int(0, i - 1));
      std::swap(idx[i - 1], idx[j]);
    }
    size_t n_test = static_cast<size_t>(test_frac * static_cast<double>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) {
      Dataset& dst = i < n_test ? out.test : out.train;
      dst.x.push_back(ds.x[static_cast<size_t>(idx[i])]);
      dst.y.push_back(ds.y[static_cast<size_t>(idx[i])]);
    }
  }
  return out;
}

inline std::string dataset_csv_header(int channels, int length) {
  std::ostringstream os;
  os << "label";
  for (int c = 0; c < channels; ++c)
    for (int s = 0; s < length; ++s) os << ",ch" << c << "_s" << s;
  return os.str();
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << dataset_csv_header(ds.channels, ds.length) << "\n";
  f << std::setprecision(17);
  for (int i = 0; i < ds.size(); ++i) {
    f << ds.y[static_cast<size_t>(i)];
    for (double v : ds.x[static_cast<size_t>(i)]) f << ',' << v;
    f << "\n";
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline Dataset read_dataset_csv(const std::string& path, int num_classes = 0) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::string header;
  if (!std::getline(f, header)) throw IoError("'" + path + "': empty file");
  // channels/length recovered from the last header column "ch{C-1}_s{L-1}"
  size_t last_comma = header.rfind(',');
  if (last_comma == std::string::npos || header.substr(0, 5) != "label")
    throw IoError("'" + path + "': malformed header (expected label,ch0_s0,...)");
  std::string last_col = header.substr(last_comma + 1);
  int c_last = 0, s_last = 0;
  if (std::sscanf(last_col.c_str(), "ch%d_s%d", &c_last, &s_last) != 2)
    throw IoError("'" + path + "': malformed final column '" + last_col + "'");
  Dataset ds;
  ds.channels = c_last + 1;
  ds.length = s_last + 1;
  std::string line;
  int max_label = -1;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    if (!std::getline(is, cell, ',')) throw IoError("'" + path + "': bad row");
    int label = std::stoi(cell);
    if (label < 0) throw IoError("'" + path + "': negative label");
    std::vector<double> row;
    row.reserve(static_cast<size_t>(ds.flat()));
    while (std::getline(is, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != ds.flat())
      throw IoError("'" + path + "': row has " + std::to_string(row.size()) + " values, expected " +
                    std::to_string(ds.flat()));
    max_label = std::max(max_label, label);
    ds.x.push_back(std::move(row));
    ds.y.push_back(label);
  }
  ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  return ds;
}

}  // namespace scl
