// sclab — the experiment driver: synthetic data, training, finetuning,
// evaluation protocols, ablation sweeps and report aggregation, all from
// plain-text configs with deterministic seeds.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "scl/scl.hpp"

namespace fs = std::filesystem;
using namespace scl;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset = "ecg";
  std::vector<std::string> sets;
  std::string out;
  long seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_preset = true) {
  cmd->add_option("--config", o.config_path, "config file (section.key = value lines)");
  if (with_preset)
    cmd->add_option("--preset", o.preset, "base config when no --config: ecg | imu")
        ->check(CLI::IsMember({"ecg", "imu"}));
  cmd->add_option("--set", o.sets, "override, e.g. --set hp.beta=0.5 (repeatable)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "training seed (shorthand for --set train.seed=N)");
}

ExperimentConfig resolve_config(const CommonOpts& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path);
  else cfg = default_config(o.preset == "imu" ? FamilyKind::IMU_LIKE : FamilyKind::ECG_LIKE);
  apply_overrides(cfg, o.sets);
  if (o.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.out.empty()) cfg.run.out = o.out;
  cfg.validate();
  return cfg;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("short write to " + path);
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- synth ----

int cmd_synth(const CommonOpts& o) {
  ExperimentConfig cfg = resolve_config(o);
  fs::path dir = fs::path(cfg.run.out) /
                 (std::string(family_name(cfg.family.kind)) + "_data_seed" +
                  std::to_string(cfg.train.seed) + (cfg.run.tag.empty() ? "" : "_" + cfg.run.tag));
  if (fs::exists(dir))
    throw IoError("output directory already exists (append-only): " + dir.string());
  fs::create_directories(dir);

  Dataset full = make_dataset(cfg.family, cfg.train.per_class, cfg.train.seed);
  SplitDataset split = split_dataset(full, cfg.train.test_frac, cfg.train.seed);
  write_dataset_csv(split.train, (dir / "dataset_train.csv").string());
  write_dataset_csv(split.test, (dir / "dataset_test.csv").string());

  std::ostringstream man;
  man << "family = " << family_name(cfg.family.kind) << "\n"
      << "seed = " << cfg.train.seed << "\n"
      << "per_class = " << cfg.train.per_class << "\n"
      << "test_frac = " << cfg.train.test_frac << "\n"
      << "channels = " << cfg.family.channels << "\n"
      << "length = " << cfg.family.length << "\n"
      << "num_classes = " << cfg.family.num_classes << "\n"
      << "train_rows = " << split.train.size() << "\n"
      << "test_rows = " << split.test.size() << "\n";
  write_file((dir / "manifest.txt").string(), man.str());

  std::cout << "synth.dir=" << dir.string() << "\n"
            << "synth.train_rows=" << split.train.size() << "\n"
            << "synth.test_rows=" << split.test.size() << "\n";
  return 0;
}

// ---- train / finetune ----

void print_train_summary(const char* verb, const TrainResult& res) {
  char buf[64];
  std::cout << verb << ".run_dir=" << res.run_dir << "\n"
            << verb << ".checkpoint=" << res.checkpoint_path << "\n"
            << verb << ".steps=" << res.steps_done << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", res.final_task);
  std::cout << verb << ".final_task=" << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", res.final_total);
  std::cout << verb << ".final_total=" << buf << "\n"
            << verb << ".checkpoint_hash=" << hash_hex(file_hash(res.checkpoint_path)) << "\n";
}

int cmd_train(const CommonOpts& o) {
  TrainResult res = train_run(resolve_config(o));
  print_train_summary("train", res);
  return 0;
}

int cmd_finetune(const CommonOpts& o, const std::string& from) {
  TrainResult res = finetune_run(resolve_config(o), from);
  print_train_summary("finetune", res);
  return 0;
}

// ---- eval ----

struct EvalOpts {
  std::string checkpoint;
  std::string metric;
  std::string out;
  std::string subspace = "inv";
  int rotations = 20;
  int gallery = 200;
  int queries = 100;
  int k = 5;
  int shift_step = 0;  // 0 → length/32
  std::vector<double> noise = {0.0, 0.1, 0.3};
  bool svg = false;
  long seed = -1;
};

std::vector<std::vector<double>> eval_signals(const SignalFamily& fam, int per_class,
                                              std::uint64_t eval_seed) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < fam.num_classes; ++c) rows.push_back(gen_signal(fam, eval_seed, c, i));
  return rows;
}

int cmd_eval(const EvalOpts& e) {
  Checkpoint ck = load_checkpoint(e.checkpoint);
  Model m = model_from_checkpoint(ck);
  ExperimentConfig cfg = ck.config;
  std::uint64_t eval_seed =
      (e.seed >= 0 ? static_cast<std::uint64_t>(e.seed) : cfg.train.seed) + kEvalSeedOffset;
  fs::path out_dir = e.out.empty() ? fs::path(e.checkpoint).parent_path() : fs::path(e.out);
  if (out_dir.empty()) out_dir = ".";
  fs::create_directories(out_dir);

  Dataset full = make_dataset(cfg.family, cfg.train.per_class, cfg.train.seed);
  SplitDataset split = split_dataset(full, cfg.train.test_frac, cfg.train.seed);

  MetricReport rep;
  std::string svg_text;
  double headline = 0;

  if (e.metric == "phase_curve") {
    Subspace sub = subspace_from_name(e.subspace);
    int step = e.shift_step > 0 ? e.shift_step : std::max(1, cfg.family.length / 32);
    std::vector<int> shifts;
    for (int k = 0; k < cfg.family.length; k += step) shifts.push_back(k);
    auto sigs = eval_signals(cfg.family, 8, eval_seed);
    rep = phase_similarity_curve(m, sigs, shifts, sub, eval_seed);
    headline = rep.min_value();
    if (e.svg) {
      SvgSeries s{rep.metric, {}};
      for (size_t i = 0; i < shifts.size(); ++i)
        s.pts.push_back({static_cast<double>(shifts[i]), rep.rows[i].value});
      svg_text = svg_line_chart("phase similarity (" + e.subspace + ")", "shift",
                                "cosine similarity", {s});
    }
  } else if (e.metric == "rotation_consistency") {
    double pct = rotation_consistency(m, split.test, e.rotations, eval_seed);
    rep = {"rotation_consistency", eval_seed,
           {{"so3;rotations=" + std::to_string(e.rotations), pct,
             static_cast<long>(split.test.size()) * e.rotations}}};
    headline = pct;
  } else if (e.metric == "axis_sweep") {
    rep = axis_sweep_accuracy(m, split.test, eval_seed);
    headline = rep.value_at("axis=combined");
  } else if (e.metric == "stress_grid") {
    rep = stress_grid(m, split.test, e.noise, eval_seed);
    headline = rep.min_value();
    if (e.svg) {
      std::vector<std::string> rows_l = {"rotation=off", "rotation=on"};
      std::vector<std::string> cols_l;
      for (double n : e.noise) cols_l.push_back("noise=" + scl::detail::fmt_g(n));
      std::vector<std::vector<double>> cells;
      for (const auto& rl : rows_l) {
        std::vector<double> row;
        bool any = false;
        for (const auto& cl : cols_l) {
          try {
            row.push_back(rep.value_at(cl + ";" + rl));
            any = true;
          } catch (const std::invalid_argument&) {
            row.push_back(0);
          }
        }
        if (any) cells.push_back(row);
      }
      if (cells.size() == 1) rows_l.resize(1);
      svg_text = svg_heatmap("stress grid accuracy (%)", rows_l, cols_l, cells);
    }
  } else if (e.metric == "retrieval") {
    RetrievalSpec spec{e.gallery, e.queries, e.k, eval_seed};
    double pct = retrieval_eval(m, cfg.family, spec);
    rep = {"retrieval_topk", eval_seed,
           {{"k=" + std::to_string(e.k) + ";gallery=" + std::to_string(e.gallery), pct,
             static_cast<long>(e.queries)}}};
    headline = pct;
  } else if (e.metric == "subspace_stats") {
    rep = subspace_stats(m, split.test, cfg.family, cfg.transform, 8, 32, eval_seed);
    headline = rep.rows.empty() ? 0 : rep.rows[0].value;
  } else if (e.metric == "latent_pca") {
    auto z = scl::detail::encode_all(m, split.test.x);
    PcaResult pca = pca_project(z);
    double sil = silhouette_score(pca.coords, split.test.y);
    rep = {"latent_pca", eval_seed,
           {{"silhouette", sil, static_cast<long>(z.size())},
            {"explained_1", pca.explained[0], static_cast<long>(z.size())},
            {"explained_2", pca.explained[1], static_cast<long>(z.size())},
            {"total_variance", pca.total_variance, static_cast<long>(z.size())}}};
    headline = sil;
    if (e.svg) {
      std::vector<SvgSeries> series(static_cast<size_t>(split.test.num_classes));
      for (int c = 0; c < split.test.num_classes; ++c)
        series[static_cast<size_t>(c)].label = "class " + std::to_string(c);
      for (size_t i = 0; i < pca.coords.size(); ++i)
        series[static_cast<size_t>(split.test.y[i])].pts.push_back(pca.coords[i]);
      // scatter: one-point polylines render poorly, use the chart with markers
      std::ostringstream sc;
      sc << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"560\""
            " font-family=\"monospace\" font-size=\"12\">\n"
            "<rect width=\"560\" height=\"560\" fill=\"white\"/>\n"
            "<text x=\"280\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">latent PCA</text>\n";
      double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
      for (const auto& p : pca.coords) {
        xmin = std::min(xmin, p[0]); xmax = std::max(xmax, p[0]);
        ymin = std::min(ymin, p[1]); ymax = std::max(ymax, p[1]);
      }
      if (xmax - xmin < 1e-12) xmax = xmin + 1;
      if (ymax - ymin < 1e-12) ymax = ymin + 1;
      for (size_t i = 0; i < pca.coords.size(); ++i) {
        double px = 40 + (pca.coords[i][0] - xmin) / (xmax - xmin) * 480;
        double py = 520 - (pca.coords[i][1] - ymin) / (ymax - ymin) * 470;
        char pt[160];
        std::snprintf(pt, sizeof(pt), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                      px, py, scl::detail::svg_palette(static_cast<size_t>(split.test.y[i])));
        sc << pt;
      }
      for (int c = 0; c < split.test.num_classes; ++c)
        sc << "<text x=\"46\" y=\"" << 40 + 16 * c << "\" fill=\""
           << scl::detail::svg_palette(static_cast<size_t>(c)) << "\">class " << c << "</text>\n";
      sc << "</svg>\n";
      svg_text = sc.str();
    }
  } else {
    throw std::invalid_argument(
        "unknown metric '" + e.metric +
        "' (choose: phase_curve, rotation_consistency, axis_sweep, stress_grid, retrieval, "
        "subspace_stats, latent_pca)");
  }

  std::string base = "eval_" + e.metric + (e.metric == "phase_curve" ? "_" + e.subspace : "");
  fs::path csv_path = out_dir / (base + ".csv");
  write_file(csv_path.string(), rep.to_csv());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", headline);
  std::cout << "eval.metric=" << rep.metric << "\n"
            << "eval.csv=" << csv_path.string() << "\n"
            << "eval.headline=" << buf << "\n";
  if (e.svg && !svg_text.empty()) {
    fs::path svg_path = out_dir / (base + ".svg");
    write_file(svg_path.string(), svg_text);
    std::cout << "eval.svg=" << svg_path.string() << "\n";
  }
  return 0;
}

// ---- sweep ----

struct SweepOpts {
  std::string axis;
  std::vector<std::string> values;
  int parallel = 1;
};

struct SweepRow {
  std::string value;
  std::string run_dir;
  bool classifier = false;
  double final_task = 0, final_total = 0;
  double acc_clean = 0, acc_x = 0, acc_y = 0, acc_z = 0, acc_combined = 0, rot_consistency = 0;
  double phase_min_inv = 0, phase_min_full = 0;
};

ExperimentConfig sweep_config(const ExperimentConfig& base, const std::string& axis,
                              const std::string& value) {
  ExperimentConfig cfg = base;
  std::string tag;
  if (axis == "partition.d_inv") {
    int v = std::stoi(value);
    int d = cfg.encoder.latent;
    int d_var = d - v - cfg.partition.d_free;
    if (v < 0 || d_var < 0)
      throw std::invalid_argument("sweep: d_inv=" + value + " does not fit latent width " +
                                  std::to_string(d) + " with d_free " +
                                  std::to_string(cfg.partition.d_free));
    cfg.partition.d_inv = v;
    cfg.partition.d_var = d_var;
    tag = "dinv" + value;
  } else if (axis == "hp.beta") {
    cfg.hp.beta = std::stod(value);
    tag = "beta" + value;
  } else if (axis == "hp.lambda") {
    cfg.hp.lambda = std::stod(value);
    tag = "lambda" + value;
  } else if (axis == "hp.mode") {
    cfg.hp.mode = mode_from_name(value);
    tag = "mode-" + value;
  } else {
    throw std::invalid_argument("sweep: '" + axis +
                                "' is not a sweepable axis (partition.d_inv, hp.beta, hp.lambda, "
                                "hp.mode)");
  }
  for (auto& c : tag)
    if (c == '.') c = 'p';
  cfg.run.tag = cfg.run.tag.empty() ? tag : cfg.run.tag + "_" + tag;
  cfg.validate();
  return cfg;
}

SweepRow run_sweep_row(const ExperimentConfig& cfg, const std::string& value) {
  TrainResult res = train_run(cfg);
  SweepRow row;
  row.value = value;
  row.run_dir = res.run_dir;
  row.final_task = res.final_task;
  row.final_total = res.final_total;
  std::uint64_t eval_seed = cfg.train.seed + kEvalSeedOffset;

  Dataset full = make_dataset(cfg.family, cfg.train.per_class, cfg.train.seed);
  SplitDataset split = split_dataset(full, cfg.train.test_frac, cfg.train.seed);
  row.classifier = cfg.head.kind == HeadKind::CLASSIFIER;
  if (row.classifier) {
    row.acc_clean = accuracy(res.model, split.test.x, split.test.y);
    MetricReport axis_rep = axis_sweep_accuracy(res.model, split.test, eval_seed);
    row.acc_x = axis_rep.value_at("axis=x");
    row.acc_y = axis_rep.value_at("axis=y");
    row.acc_z = axis_rep.value_at("axis=z");
    row.acc_combined = axis_rep.value_at("axis=combined");
    row.rot_consistency = rotation_consistency(res.model, split.test, 20, eval_seed);
    write_file(res.run_dir + "/eval_axis_sweep.csv", axis_rep.to_csv());
  } else {
    auto sigs = eval_signals(cfg.family, 8, eval_seed);
    std::vector<int> shifts;
    for (int k = 0; k < cfg.family.length; k += std::max(1, cfg.family.length / 32))
      shifts.push_back(k);
    Subspace sub = cfg.partition.d_inv > 0 ? Subspace::INV : Subspace::FULL;
    MetricReport inv_rep = phase_similarity_curve(res.model, sigs, shifts, sub, eval_seed);
    MetricReport full_rep = phase_similarity_curve(res.model, sigs, shifts, Subspace::FULL, eval_seed);
    row.phase_min_inv = inv_rep.min_value();
    row.phase_min_full = full_rep.min_value();
    write_file(res.run_dir + "/eval_phase_curve.csv", inv_rep.to_csv());
  }
  return row;
}

int cmd_sweep(const CommonOpts& o, const SweepOpts& s) {
  if (s.values.empty()) throw std::invalid_argument("sweep: empty value list");
  ExperimentConfig base = resolve_config(o);
  std::vector<ExperimentConfig> configs;
  for (const auto& v : s.values) configs.push_back(sweep_config(base, s.axis, v));

  std::vector<SweepRow> rows(s.values.size());
  std::exception_ptr first_error = nullptr;
  std::mutex err_mu;
  std::atomic<size_t> next{0};
  int n_threads = std::max(1, std::min<int>(s.parallel, static_cast<int>(s.values.size())));
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      try {
        rows[i] = run_sweep_row(configs[i], s.values[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::ostringstream csv;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    csv << ',' << buf;
  };
  bool classifier = rows[0].classifier;
  if (classifier)
    csv << s.axis << ",acc_clean,acc_x,acc_y,acc_z,acc_combined,rotation_consistency,final_task\n";
  else
    csv << s.axis << ",phase_min_inv,phase_min_full,final_task\n";
  for (const auto& r : rows) {
    csv << r.value;
    if (classifier) {
      put(r.acc_clean);
      put(r.acc_x);
      put(r.acc_y);
      put(r.acc_z);
      put(r.acc_combined);
      put(r.rot_consistency);
      put(r.final_task);
    } else {
      put(r.phase_min_inv);
      put(r.phase_min_full);
      put(r.final_task);
    }
    csv << '\n';
  }
  fs::path out_dir(base.run.out);
  fs::create_directories(out_dir);
  std::string axis_slug = s.axis;
  for (auto& c : axis_slug)
    if (c == '.') c = '_';
  fs::path csv_path = out_dir / ("sweep_" + axis_slug + ".csv");
  write_file(csv_path.string(), csv.str());
  std::cout << "sweep.axis=" << s.axis << "\n"
            << "sweep.rows=" << rows.size() << "\n"
            << "sweep.csv=" << csv_path.string() << "\n";
  for (const auto& r : rows) std::cout << "sweep.run_dir=" << r.run_dir << "\n";
  return 0;
}

// ---- report ----

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  std::string md = markdown_report(dirs);
  std::string path = out.empty() ? "report.md" : out;
  if (!fs::path(path).parent_path().empty()) fs::create_directories(fs::path(path).parent_path());
  write_file(path, md);
  std::cout << "report.out=" << path << "\n"
            << "report.runs=" << dirs.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sclab — structured contrastive learning lab"};
  app.require_subcommand(1);

  CommonOpts synth_o, train_o, ft_o, sweep_o;
  std::string ft_from;
  EvalOpts eval_o;
  SweepOpts sweep_s;
  std::vector<std::string> report_dirs;
  std::string report_out;

  auto* c_synth = app.add_subcommand("synth", "generate dataset CSVs + manifest");
  add_common(c_synth, synth_o);

  auto* c_train = app.add_subcommand("train", "train a model into a fresh run directory");
  add_common(c_train, train_o);

  auto* c_ft = app.add_subcommand("finetune", "continue training from a checkpoint");
  add_common(c_ft, ft_o);
  c_ft->add_option("--from", ft_from, "base checkpoint path")->required();

  auto* c_eval = app.add_subcommand("eval", "run an evaluation protocol on a checkpoint");
  c_eval->add_option("--checkpoint", eval_o.checkpoint, "checkpoint path")->required();
  c_eval->add_option("--metric", eval_o.metric,
                     "phase_curve | rotation_consistency | axis_sweep | stress_grid | retrieval | "
                     "subspace_stats | latent_pca")
      ->required();
  c_eval->add_option("--out", eval_o.out, "output directory (default: checkpoint's directory)");
  c_eval->add_option("--subspace", eval_o.subspace, "latent slice for phase_curve");
  c_eval->add_option("--rotations", eval_o.rotations, "rotations per sample");
  c_eval->add_option("--gallery", eval_o.gallery, "retrieval gallery size");
  c_eval->add_option("--queries", eval_o.queries, "retrieval query count");
  c_eval->add_option("--k", eval_o.k, "retrieval neighbors");
  c_eval->add_option("--shift-step", eval_o.shift_step, "phase sweep stride (0 = length/32)");
  c_eval->add_option("--noise", eval_o.noise, "stress grid noise stds");
  c_eval->add_option("--seed", eval_o.seed, "evaluation seed base (default: checkpoint's)");
  c_eval->add_flag("--svg", eval_o.svg, "also write an SVG next to the CSV");

  auto* c_sweep = app.add_subcommand("sweep", "train one run per axis value, emit comparison CSV");
  add_common(c_sweep, sweep_o);
  c_sweep->add_option("--axis", sweep_s.axis, "partition.d_inv | hp.beta | hp.lambda | hp.mode")
      ->required();
  c_sweep->add_option("--values", sweep_s.values, "axis values (space separated)")->required();
  c_sweep->add_option("--parallel", sweep_s.parallel, "concurrent runs");

  auto* c_report = app.add_subcommand("report", "aggregate run directories into markdown");
  c_report->add_option("dirs", report_dirs, "run directories")->required();
  c_report->add_option("--out", report_out, "output markdown path (default report.md)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) return cmd_synth(synth_o);
    if (c_train->parsed()) return cmd_train(train_o);
    if (c_ft->parsed()) return cmd_finetune(ft_o, ft_from);
    if (c_eval->parsed()) return cmd_eval(eval_o);
    if (c_sweep->parsed()) return cmd_sweep(sweep_o, sweep_s);
    if (c_report->parsed()) return cmd_report(report_dirs, report_out);
  } catch (const std::exception& e) {
    const char* stage = c_synth->parsed()    ? "synth"
                        : c_train->parsed()  ? "train"
                        : c_ft->parsed()     ? "finetune"
                        : c_eval->parsed()   ? "eval"
                        : c_sweep->parsed()  ? "sweep"
                                             : "report";
    std::cerr << "error: " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
