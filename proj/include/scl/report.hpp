#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "scl/config.hpp"

// Aggregates finished run directories into one markdown summary: a per-family
// run table, the config keys that actually differ, and every evaluation
// metric side by side.

namespace scl {

struct RunInfo {
  std::string dir;
  std::string name;
  ExperimentConfig cfg;
  std::vector<std::pair<std::string, std::string>> cfg_kv;
  long last_step = -1;
  double final_task = 0, final_contrastive = 0, final_total = 0;
  // (metric, condition) -> value, from every report CSV in the directory
  std::vector<std::tuple<std::string, std::string, double>> metrics;
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> config_kv(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream is(serialize_config(cfg));
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else cur += c;
  }
  cells.push_back(cur);
  return cells;
}

inline std::string md_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline RunInfo load_run(const std::string& dir) {
  namespace fs = std::filesystem;
  RunInfo ri;
  ri.dir = dir;
  ri.name = fs::path(dir).filename().string();
  if (ri.name.empty()) ri.name = fs::path(dir).parent_path().filename().string();

  ri.cfg = load_config((fs::path(dir) / "config.txt").string());
  ri.cfg_kv = detail::config_kv(ri.cfg);

  std::ifstream mf(fs::path(dir) / "metrics.csv");
  if (!mf) throw IoError("run '" + ri.name + "': missing metrics file " + dir + "/metrics.csv");
  std::string line, last;
  std::getline(mf, line);  // header
  while (std::getline(mf, line))
    if (!line.empty()) last = line;
  if (!last.empty()) {
    auto cells = detail::split_csv_line(last);
    if (cells.size() != 7)
      throw IoError("run '" + ri.name + "': malformed metrics row '" + last + "'");
    ri.last_step = std::stol(cells[0]);
    ri.final_task = std::stod(cells[1]);
    ri.final_contrastive = std::stod(cells[2]);
    ri.final_total = std::stod(cells[3]);
  }

  std::vector<std::string> eval_files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string fn = e.path().filename().string();
    if (e.is_regular_file() && fn.size() > 4 && fn.substr(fn.size() - 4) == ".csv" &&
        fn != "metrics.csv" && fn.rfind("dataset_", 0) != 0)
      eval_files.push_back(e.path().string());
  }
  std::sort(eval_files.begin(), eval_files.end());
  for (const auto& f : eval_files) {
    std::ifstream ef(f);
    std::string row;
    std::getline(ef, row);  // header: metric,condition,value,count,seed
    while (std::getline(ef, row)) {
      if (row.empty()) continue;
      auto cells = detail::split_csv_line(row);
      if (cells.size() < 3) continue;
      ri.metrics.emplace_back(cells[0], cells[1], std::stod(cells[2]));
    }
  }
  return ri;
}

inline std::string markdown_report(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("report: need at least one run directory");
  std::vector<RunInfo> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  std::stable_sort(runs.begin(), runs.end(),
                   [](const RunInfo& a, const RunInfo& b) { return a.name < b.name; });

  std::map<std::string, std::vector<const RunInfo*>> by_family;
  for (const auto& r : runs) by_family[family_name(r.cfg.family.kind)].push_back(&r);

  std::ostringstream os;
  os << "# Experiment report\n\n";
  os << runs.size() << (runs.size() == 1 ? " run\n" : " runs\n");
  for (const auto& [fam, group] : by_family) {
    os << "\n## " << fam << "\n\n";
    os << "| run | mode | seed | steps | d_inv/d_var/d_free | beta | lambda | final task | final total |\n";
    os << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto* r : group) {
      os << "| " << r->name << " | " << mode_name(r->cfg.hp.mode) << " | " << r->cfg.train.seed
         << " | " << (r->last_step + 1) << " | " << r->cfg.partition.d_inv << "/"
         << r->cfg.partition.d_var << "/" << r->cfg.partition.d_free << " | "
         << detail::md_num(r->cfg.hp.beta) << " | " << detail::md_num(r->cfg.hp.lambda) << " | "
         << detail::md_num(r->final_task) << " | " << detail::md_num(r->final_total) << " |\n";
    }

    // keys whose values are not unanimous across the group
    std::vector<std::string> diff_keys;
    if (group.size() > 1) {
      for (size_t k = 0; k < group[0]->cfg_kv.size(); ++k) {
        const auto& key = group[0]->cfg_kv[k].first;
        if (key.rfind("run.", 0) == 0) continue;
        bool same = true;
        for (const auto* r : group)
          if (r->cfg_kv[k].second != group[0]->cfg_kv[k].second) same = false;
        if (!same) diff_keys.push_back(key);
      }
    }
    os << "\n### Config differences\n\n";
    if (diff_keys.empty()) {
      os << "All configs in this group are identical (ignoring run.*).\n";
    } else {
      os << "| key |";
      for (const auto* r : group) os << " " << r->name << " |";
      os << "\n|---|";
      for (size_t i = 0; i < group.size(); ++i) os << "---|";
      os << "\n";
      for (const auto& key : diff_keys) {
        os << "| **" << key << "** |";
        for (const auto* r : group) {
          std::string val;
          for (const auto& [k, v] : r->cfg_kv)
            if (k == key) val = v;
          os << " " << val << " |";
        }
        os << "\n";
      }
    }

    std::set<std::pair<std::string, std::string>> keys;
    for (const auto* r : group)
      for (const auto& [m, c, v] : r->metrics) keys.insert({m, c});
    if (!keys.empty()) {
      os << "\n### Metrics\n\n";
      os << "| metric | condition |";
      for (const auto* r : group) os << " " << r->name << " |";
      os << "\n|---|---|";
      for (size_t i = 0; i < group.size(); ++i) os << "---|";
      os << "\n";
      for (const auto& [m, c] : keys) {
        os << "| " << m << " | " << c << " |";
        for (const auto* r : group) {
          std::string cell;
          for (const auto& [rm, rc, rv] : r->metrics)
            if (rm == m && rc == c) cell = detail::md_num(rv);
          os << " " << (cell.empty() ? "-" : cell) << " |";
        }
        os << "\n";
      }
    }
  }
  return os.str();
}

}  // namespace scl
