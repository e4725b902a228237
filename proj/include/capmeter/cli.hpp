#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capmeter/bounds.hpp"
#include "capmeter/checkpoint.hpp"
#include "capmeter/data.hpp"
#include "capmeter/lowerbound.hpp"
#include "capmeter/measures.hpp"
#include "capmeter/report.hpp"
#include "capmeter/train.hpp"

namespace capmeter::cli {

// Exit codes: 0 success, 2 usage/flag errors, 3 bad arguments or config,
// 4 missing/malformed files or data, 5 numeric failures (non-convergence,
// degenerate inputs).
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBadArgument = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitNumeric = 5;

namespace detail {

inline std::size_t worker_threads() {
  if (const char* env = std::getenv("CAPMETER_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return 1;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

inline Vector parse_double_list(const std::string& text) {
  Vector out;
  for (const auto& item : split(text, ','))
    out.push_back(std::stod(item));
  return out;
}

}  // namespace detail

/// Shared dataset selection flags. Either --data <path> (a .csv file or a
/// directory holding an IDX image/label pair) or --synthetic d,m,c,sep,seed.
struct DataOptions {
  std::string data_path;
  std::string synthetic;
  std::size_t limit = 0;
  std::string normalize = "none";
  double random_label_fraction = 0.0;
  std::uint64_t label_seed = 0;

  void attach(CLI::App* app, bool exclusive) {
    auto* data = app->add_option("--data", data_path,
                                 "dataset path (.csv file or IDX directory)");
    auto* synth = app->add_option(
        "--synthetic", synthetic, "synthetic spec: d,m,c,separation,seed");
    if (exclusive) {
      data->excludes(synth);
      synth->excludes(data);
    }
    app->add_option("--limit", limit, "keep only the first N samples");
    app->add_option("--normalize", normalize, "unit_range|none")
        ->check(CLI::IsMember({"unit_range", "none"}));
    app->add_option("--random-labels", random_label_fraction,
                    "fraction of labels to resample uniformly");
    app->add_option("--label-seed", label_seed, "seed for label resampling");
  }

  DatasetSpec spec() const {
    DatasetSpec s;
    if (limit > 0) s.limit = limit;
    s.normalize =
        normalize == "unit_range" ? Normalize::unit_range : Normalize::none;
    s.random_label_fraction = random_label_fraction;
    s.label_seed = label_seed;
    return s;
  }

  LabeledDataset resolve() const {
    if (!synthetic.empty()) {
      const auto parts = detail::split(synthetic, ',');
      if (parts.size() != 5)
        throw std::invalid_argument(
            "--synthetic expects d,m,c,separation,seed");
      auto data = synthetic_gaussian(
          std::stoul(parts[0]), std::stoul(parts[1]), std::stoi(parts[2]),
          std::stoull(parts[4]), std::stod(parts[3]));
      if (limit > 0 && data.size() > limit) {
        DenseMatrix x(limit, data.dim());
        for (std::size_t i = 0; i < limit; ++i)
          for (std::size_t j = 0; j < data.dim(); ++j) x(i, j) = data.X(i, j);
        data.X = std::move(x);
        data.y.resize(limit);
      }
      if (random_label_fraction > 0.0)
        data = randomize_labels(std::move(data), random_label_fraction,
                                label_seed);
      return data;
    }
    if (data_path.empty())
      throw std::invalid_argument("no dataset given (--data or --synthetic)");
    namespace fs = std::filesystem;
    if (fs::is_directory(data_path)) {
      const fs::path dir(data_path);
      for (const char* stem : {"train", "t10k"}) {
        const auto images = dir / (std::string(stem) + "-images-idx3-ubyte");
        const auto labels = dir / (std::string(stem) + "-labels-idx1-ubyte");
        if (fs::exists(images) && fs::exists(labels))
          return load_idx(images.string(), labels.string(), spec());
      }
      throw std::runtime_error("no IDX pair found in directory " + data_path);
    }
    if (data_path.size() > 4 &&
        data_path.substr(data_path.size() - 4) == ".csv")
      return load_csv(data_path, spec());
    throw std::invalid_argument("unrecognized dataset path: " + data_path);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["data"] = data_path;
    j["synthetic"] = synthetic;
    j["limit"] = limit;
    j["normalize"] = normalize;
    j["random_labels"] = random_label_fraction;
    j["label_seed"] = label_seed;
    return j;
  }

  void from_json(const nlohmann::ordered_json& j) {
    data_path = j.value("data", data_path);
    synthetic = j.value("synthetic", synthetic);
    limit = j.value("limit", limit);
    normalize = j.value("normalize", normalize);
    random_label_fraction = j.value("random_labels", random_label_fraction);
    label_seed = j.value("label_seed", label_seed);
  }
};

struct TrainOptions {
  DataOptions data;
  TrainConfig cfg;
  std::string init_text = "uniform_fan_in";
  std::string config_path;

  void attach(CLI::App* app) {
    data.attach(app, true);
    app->add_option("--lr", cfg.lr, "learning rate");
    app->add_option("--momentum", cfg.momentum, "momentum coefficient");
    app->add_option("--batch", cfg.batch_size, "minibatch size");
    app->add_option("--stop-loss", cfg.stop_loss,
                    "stop when epoch-mean cross-entropy reaches this");
    app->add_option("--max-epochs", cfg.max_epochs, "epoch cap");
    app->add_option("--seed", cfg.seed, "base seed");
    app->add_option("--init", init_text,
                    "init scheme: uniform_fan_in or gaussian[:sigma]");
    app->add_flag("!--no-shuffle", cfg.shuffle, "disable per-epoch reshuffle");
    app->add_option("--config", config_path,
                    "JSON config with flat keys; CLI flags override");
  }

  /// Applies config-file values for options the command line did not set.
  void apply_config(const CLI::App* app) {
    if (config_path.empty()) return;
    std::ifstream is(config_path);
    if (!is) throw std::runtime_error("cannot open config " + config_path);
    nlohmann::ordered_json j;
    try {
      is >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("malformed config JSON: " +
                                  std::string(e.what()));
    }
    auto unset = [&](const std::string& flag) {
      const auto* opt = app->get_option_no_throw(flag);
      return opt != nullptr && opt->count() == 0;
    };
    if (j.contains("lr") && unset("--lr")) cfg.lr = j["lr"];
    if (j.contains("momentum") && unset("--momentum"))
      cfg.momentum = j["momentum"];
    if (j.contains("batch") && unset("--batch")) cfg.batch_size = j["batch"];
    if (j.contains("stop_loss") && unset("--stop-loss"))
      cfg.stop_loss = j["stop_loss"];
    if (j.contains("max_epochs") && unset("--max-epochs"))
      cfg.max_epochs = j["max_epochs"];
    if (j.contains("seed") && unset("--seed")) cfg.seed = j["seed"];
    if (j.contains("init") && unset("--init"))
      init_text = j["init"].get<std::string>();
    if (j.contains("data") && unset("--data"))
      data.data_path = j["data"].get<std::string>();
    if (j.contains("synthetic") && unset("--synthetic"))
      data.synthetic = j["synthetic"].get<std::string>();
    if (j.contains("limit") && unset("--limit")) data.limit = j["limit"];
    if (j.contains("normalize") && unset("--normalize"))
      data.normalize = j["normalize"].get<std::string>();
    if (j.contains("random_labels") && unset("--random-labels"))
      data.random_label_fraction = j["random_labels"];
    if (j.contains("label_seed") && unset("--label-seed"))
      data.label_seed = j["label_seed"];
  }

  void finalize_init() {
    const auto parts = detail::split(init_text, ':');
    if (parts[0] == "uniform_fan_in") {
      cfg.init = InitScheme::uniform_fan_in;
    } else if (parts[0] == "gaussian") {
      cfg.init = InitScheme::gaussian;
      if (parts.size() > 1) cfg.init_sigma = std::stod(parts[1]);
    } else {
      throw std::invalid_argument("unknown init scheme: " + init_text);
    }
  }
};

namespace detail {

inline nlohmann::ordered_json checkpoint_sidecar(const TrainConfig& cfg,
                                                 const LabeledDataset& data) {
  nlohmann::ordered_json extra;
  extra["init_scheme"] = to_string(cfg.init);
  if (cfg.init == InitScheme::gaussian) extra["init_sigma"] = cfg.init_sigma;
  extra["dataset"] = data.name;
  extra["lr"] = cfg.lr;
  extra["momentum"] = cfg.momentum;
  extra["batch_size"] = cfg.batch_size;
  extra["stop_loss"] = cfg.stop_loss;
  extra["max_epochs"] = cfg.max_epochs;
  return extra;
}

inline double resolve_gamma(const std::string& text, const MeasurePanel& panel) {
  if (text == "auto") {
    if (!(panel.gamma_5pct > 0.0))
      throw std::domain_error(
          "gamma=auto requires a positive 5th-percentile margin; pass "
          "--gamma explicitly");
    return panel.gamma_5pct;
  }
  const double g = std::stod(text);
  if (!(g > 0.0)) throw std::invalid_argument("gamma must be positive");
  return g;
}

inline std::vector<double> resolve_ps(const std::string& text, std::size_t h) {
  std::vector<double> ps;
  for (const auto& item : split(text, ',')) {
    if (item == "lnh")
      ps.push_back(thm4_corollary_p(h));
    else
      ps.push_back(std::stod(item));
  }
  return ps;
}

int run_selftest();

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"capmeter: unit-wise capacity measures and generalization "
               "bounds for two-layer ReLU networks"};
  app.require_subcommand(1);
  // --h is a real option (hidden units), so help lives on --help only.
  app.set_help_flag("--help", "print help");
  auto add_subcommand = [&app](const std::string& name,
                               const std::string& desc) {
    auto* sub = app.add_subcommand(name, desc);
    sub->set_help_flag("--help", "print help");
    return sub;
  };

  // ---- train ----
  auto* train_cmd = add_subcommand("train", "train one network");
  TrainOptions topt;
  std::size_t train_h = 0;
  std::string train_out;
  topt.attach(train_cmd);
  train_cmd->add_option("--h", train_h, "hidden units")->required();
  train_cmd->add_option("--out", train_out, "checkpoint output path")
      ->required();

  // ---- sweep ----
  auto* sweep_cmd = add_subcommand("sweep", "train one network per width");
  TrainOptions sopt;
  std::string sweep_widths, sweep_out_dir;
  sopt.attach(sweep_cmd);
  sweep_cmd->add_option("--widths", sweep_widths, "comma list of widths")
      ->required();
  sweep_cmd->add_option("--out-dir", sweep_out_dir, "checkpoint directory")
      ->required();

  // ---- measure ----
  auto* measure_cmd =
      add_subcommand("measure", "per-unit and layer measures");
  DataOptions mdata;
  std::string measure_ckpt, measure_out, measure_csv;
  mdata.attach(measure_cmd, true);
  measure_cmd->add_option("--ckpt", measure_ckpt, "checkpoint")->required();
  measure_cmd->add_option("--out", measure_out, "panel JSON path")->required();
  measure_cmd->add_option("--csv", measure_csv,
                          "append a one-row summary to this CSV");

  // ---- bounds ----
  auto* bounds_cmd =
      add_subcommand("bounds", "exact-constant bound evaluation");
  DataOptions bdata;
  std::string bounds_ckpt, bounds_out, bounds_gamma = "auto",
                           bounds_ps = "2,lnh";
  double bounds_delta = 0.01;
  bdata.attach(bounds_cmd, true);
  bounds_cmd->add_option("--ckpt", bounds_ckpt, "checkpoint")->required();
  bounds_cmd->add_option("--gamma", bounds_gamma, "margin: auto or a value");
  bounds_cmd->add_option("--delta", bounds_delta, "confidence parameter");
  bounds_cmd->add_option("--p", bounds_ps, "comma list of p values; lnh ok");
  bounds_cmd->add_option("--out", bounds_out, "bounds JSON path")->required();

  // ---- compare ----
  auto* compare_cmd =
      add_subcommand("compare", "aggregate a sweep into CSV + SVG");
  std::string compare_dir, compare_out, compare_svg, compare_gamma = "auto";
  std::string compare_columns;
  DataOptions cdata, ctest;
  double compare_delta = 0.01;
  bool compare_logy = false;
  compare_cmd->add_option("--sweep-dir", compare_dir, "sweep directory")
      ->required();
  compare_cmd->add_option("--out", compare_out, "CSV output path")->required();
  compare_cmd->add_option("--svg", compare_svg, "SVG chart path");
  compare_cmd->add_option("--gamma", compare_gamma, "margin: auto or a value");
  compare_cmd->add_option("--delta", compare_delta, "confidence parameter");
  compare_cmd
      ->add_option("--columns", compare_columns,
                   "comma list of SVG columns (default: normalized bounds)")
      ->default_str("");
  compare_cmd->add_flag("--log-y", compare_logy, "log-scale y axis");
  cdata.attach(compare_cmd, false);
  auto* ctest_opt = compare_cmd->add_option(
      "--test-data", ctest.data_path, "held-out dataset for test error");

  // ---- lowerbound ----
  auto* lb_cmd = add_subcommand(
      "lowerbound", "certify the Rademacher lower-bound construction");
  std::size_t lb_k = 1, lb_n = 1, lb_trials = 100000;
  std::uint64_t lb_seed = 0;
  std::string lb_alpha, lb_beta, lb_mode = "exact", lb_out;
  lb_cmd->add_option("--k", lb_k, "d = h = 2^k")->required();
  lb_cmd->add_option("--n", lb_n, "copies per basis vector")->required();
  lb_cmd->add_option("--alpha", lb_alpha, "comma list (default all ones)");
  lb_cmd->add_option("--beta", lb_beta, "comma list (default all ones)");
  lb_cmd->add_option("--mode", lb_mode, "exact|sampled")
      ->check(CLI::IsMember({"exact", "sampled"}));
  lb_cmd->add_option("--trials", lb_trials, "sampled-mode trials");
  lb_cmd->add_option("--seed", lb_seed, "sampled-mode seed");
  lb_cmd->add_option("--out", lb_out, "JSON output path");

  // ---- cover ----
  auto* cover_cmd =
      add_subcommand("cover", "l_p ball dominance-cover size");
  CoverSpec cover_spec;
  bool cover_do_construct = false;
  cover_cmd->add_option("--D", cover_spec.dim, "dimension")->required();
  cover_cmd->add_option("--p", cover_spec.p, "norm exponent (>= 2)")
      ->required();
  cover_cmd->add_option("--eps", cover_spec.eps, "cover slack epsilon")
      ->required();
  cover_cmd->add_option("--beta", cover_spec.beta_radius, "ball radius")
      ->required();
  cover_cmd->add_flag("--construct", cover_do_construct,
                      "also enumerate the boxes (D <= 12)");

  // ---- selftest ----
  add_subcommand("selftest", "run the built-in property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      topt.apply_config(train_cmd);
      topt.finalize_init();
      const LabeledDataset data = topt.data.resolve();
      TwoLayerNet net = init_network(data.dim(), train_h,
                                     static_cast<std::size_t>(data.num_classes),
                                     topt.cfg.init, topt.cfg.seed,
                                     topt.cfg.init_sigma);
      const TrainReport report = train(net, data, topt.cfg);
      save_checkpoint(net, train_out, detail::checkpoint_sidecar(topt.cfg, data));
      atomic_write_file(train_out + ".report.json",
                        report_to_json(report).dump(2) + "\n");
      std::cout << "trained h=" << train_h << " epochs=" << report.epochs_run
                << " final_ce=" << report.final_train_cross_entropy
                << " reached_stop=" << (report.reached_stop ? "yes" : "no")
                << "\n";
      return 0;
    }

    if (sweep_cmd->parsed()) {
      sopt.apply_config(sweep_cmd);
      sopt.finalize_init();
      const LabeledDataset data = sopt.data.resolve();
      std::vector<std::size_t> widths;
      for (const auto& w : detail::split(sweep_widths, ','))
        widths.push_back(std::stoul(w));
      const auto entries = width_sweep(widths, data, sopt.cfg, sweep_out_dir,
                                       detail::worker_threads());
      nlohmann::ordered_json manifest;
      manifest["widths"] = widths;
      manifest["dataset"] = sopt.data.to_json();
      manifest["config"] = {{"lr", sopt.cfg.lr},
                            {"momentum", sopt.cfg.momentum},
                            {"batch", sopt.cfg.batch_size},
                            {"stop_loss", sopt.cfg.stop_loss},
                            {"max_epochs", sopt.cfg.max_epochs},
                            {"seed", sopt.cfg.seed},
                            {"init", sopt.init_text}};
      atomic_write_file(
          (std::filesystem::path(sweep_out_dir) / "sweep.json").string(),
          manifest.dump(2) + "\n");
      bool all_ok = true;
      for (const auto& entry : entries) {
        if (entry.ok())
          std::cout << "h=" << entry.width
                    << " epochs=" << entry.report.epochs_run << " final_ce="
                    << entry.report.final_train_cross_entropy << "\n";
        else {
          std::cout << "h=" << entry.width << " FAILED: " << entry.error
                    << "\n";
          all_ok = false;
        }
      }
      return all_ok ? 0 : kExitNumeric;
    }

    if (measure_cmd->parsed()) {
      const TwoLayerNet net = load_checkpoint(measure_ckpt);
      const LabeledDataset data = mdata.resolve();
      const MeasurePanel panel = measure_panel(net, data);
      nlohmann::ordered_json out = panel_to_json(panel);
      // Margins normalized by the capacity numerator, for the
      // true-vs-random-label comparison; omitted for degenerate nets.
      const double numerator = capacity_numerator(net, data);
      out["capacity_numerator"] = numerator;
      if (numerator > 0.0) {
        Vector normalized = panel.margins;
        for (double& mu : normalized) mu /= numerator;
        out["normalized_margins"] = normalized;
      }
      atomic_write_file(measure_out, out.dump(2) + "\n");
      if (!measure_csv.empty()) {
        const bool fresh = !std::filesystem::exists(measure_csv);
        std::ofstream os(measure_csv, std::ios::app);
        if (!os) throw std::runtime_error("cannot open " + measure_csv);
        if (fresh)
          os << "#schema=h,gamma_5pct,alpha_max,alpha_mean,beta_max,beta_mean,"
                "fro_U,fro_V,fro_dU,fro_dV,spec_U,spec_U0,spec_V\n";
        const auto alpha_stats = capmeter::detail::vec_stats(panel.alpha);
        const auto beta_stats = capmeter::detail::vec_stats(panel.beta);
        os << net.hidden_units() << ',' << panel.gamma_5pct << ','
           << alpha_stats.max << ',' << alpha_stats.mean << ','
           << beta_stats.max << ',' << beta_stats.mean << ',' << panel.fro_U
           << ',' << panel.fro_V << ',' << panel.fro_dU << ',' << panel.fro_dV
           << ',' << panel.spec_U << ',' << panel.spec_U0 << ','
           << panel.spec_V << "\n";
      }
      std::cout << "wrote " << measure_out << "\n";
      return 0;
    }

    if (bounds_cmd->parsed()) {
      const TwoLayerNet net = load_checkpoint(bounds_ckpt);
      const LabeledDataset data = bdata.resolve();
      const MeasurePanel panel = measure_panel(net, data);
      const double gamma = detail::resolve_gamma(bounds_gamma, panel);
      const auto ps = detail::resolve_ps(bounds_ps, net.hidden_units());
      const BoundPanel bp =
          bound_panel(net, data, panel, gamma, bounds_delta, ps);
      atomic_write_file(bounds_out, bound_panel_to_json(bp).dump(2) + "\n");
      std::cout << "wrote " << bounds_out << "\n";
      return 0;
    }

    if (compare_cmd->parsed()) {
      namespace fs = std::filesystem;
      const fs::path dir(compare_dir);
      const fs::path manifest_path = dir / "sweep.json";
      if (cdata.data_path.empty() && cdata.synthetic.empty()) {
        if (!fs::exists(manifest_path))
          throw std::runtime_error(
              "no sweep.json manifest; pass --data/--synthetic explicitly");
        std::ifstream is(manifest_path);
        nlohmann::ordered_json manifest;
        is >> manifest;
        cdata.from_json(manifest["dataset"]);
      }
      const LabeledDataset data = cdata.resolve();
      std::optional<LabeledDataset> test_data;
      if (ctest_opt->count() > 0) test_data = ctest.resolve();

      SweepSummary summary;
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("ckpt_h", 0) != 0 ||
            entry.path().extension() != ".capm")
          continue;
        const TwoLayerNet net = load_checkpoint(entry.path().string());
        TrainReport report;
        const fs::path report_path =
            dir / ("report_h" + std::to_string(net.hidden_units()) + ".json");
        if (fs::exists(report_path)) {
          std::ifstream is(report_path);
          nlohmann::ordered_json j;
          is >> j;
          report.epochs_run = j.value("epochs_run", 0u);
          report.final_train_cross_entropy =
              j.value("final_train_cross_entropy", 0.0);
          report.reached_stop = j.value("reached_stop", false);
        }
        const MeasurePanel panel = measure_panel(net, data);
        const double gamma = detail::resolve_gamma(compare_gamma, panel);
        const auto ps = detail::resolve_ps(
            "2,lnh", net.hidden_units());
        const BoundPanel bp =
            bound_panel(net, data, panel, gamma, compare_delta, ps);
        const double train_error = empirical_margin_loss(net, data, 0.0);
        const double test_error =
            test_data ? empirical_margin_loss(net, *test_data, 0.0)
                      : std::numeric_limits<double>::quiet_NaN();
        summary.rows.push_back(make_sweep_row(net.hidden_units(), report,
                                              panel, bp, train_error,
                                              test_error));
      }
      if (summary.rows.empty())
        throw std::runtime_error("no checkpoints found in " + compare_dir);
      summary.sort_by_width();
      atomic_write_file(compare_out, summary_to_csv(summary));
      if (!compare_svg.empty()) {
        std::vector<std::string> columns;
        if (compare_columns.empty()) {
          for (int r = 1; r <= 6; ++r)
            columns.push_back("norm_table1_" + std::to_string(r));
          columns.push_back("norm_capacity_numerator");
        } else {
          columns = detail::split(compare_columns, ',');
        }
        emit_svg(summary, columns, compare_svg, compare_logy);
      }
      std::cout << "wrote " << compare_out << " (" << summary.rows.size()
                << " rows)\n";
      return 0;
    }

    if (lb_cmd->parsed()) {
      const std::size_t h = std::size_t{1} << lb_k;
      Vector alpha(h, 1.0), beta(h, 1.0);
      if (!lb_alpha.empty()) alpha = detail::parse_double_list(lb_alpha);
      if (!lb_beta.empty()) beta = detail::parse_double_list(lb_beta);
      const auto inst = build_instance(lb_k, lb_n, alpha, beta);
      const double analytic = analytic_lower_value(inst);
      RademacherEstimate est;
      if (lb_mode == "exact")
        est = rademacher_lower_estimate_exact(inst);
      else
        est = rademacher_lower_estimate_sampled(inst, lb_trials, lb_seed);
      nlohmann::ordered_json j;
      j["k"] = lb_k;
      j["n"] = lb_n;
      j["m"] = inst.samples();
      j["alpha"] = inst.alpha;
      j["beta"] = inst.beta;
      j["mode"] = lb_mode;
      j["estimate"] = est.value;
      j["std_error"] = est.std_error;
      j["trials"] = est.trials;
      j["analytic_value"] = analytic;
      j["analytic_general"] =
          analytic_lower_value_general(inst.alpha, inst.beta, inst.samples());
      j["certified"] = est.exact && est.value >= analytic - 1e-12;
      j["certification_margin"] = est.value - analytic;
      const std::string text = j.dump(2) + "\n";
      if (!lb_out.empty())
        atomic_write_file(lb_out, text);
      else
        std::cout << text;
      if (est.exact && est.value < analytic - 1e-12) return kExitNumeric;
      return 0;
    }

    if (cover_cmd->parsed()) {
      const std::size_t k = cover_grid_levels(cover_spec);
      const double ln_n = cover_count_log(cover_spec);
      std::cout << "K=" << k << "\n";
      std::cout << "ln_N=" << capmeter::detail::fmt(ln_n) << "\n";
      if (ln_n < 34.5)
        std::cout << "N=" << static_cast<std::uint64_t>(std::llround(
                         std::exp(ln_n)))
                  << "\n";
      if (cover_do_construct) {
        const auto boxes = cover_construct(cover_spec);
        std::cout << "boxes=" << boxes.size() << "\n";
        for (const auto& box : boxes) {
          for (std::size_t i = 0; i < box.size(); ++i)
            std::cout << (i ? "," : "") << capmeter::detail::fmt(box[i]);
          std::cout << "\n";
        }
      }
      return 0;
    }

    if (app.get_subcommand("selftest")->parsed()) return detail::run_selftest();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadArgument;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

namespace detail {

inline int run_selftest() {
  int failures = 0;
  auto check = [&](bool ok, const std::string& name) {
    std::cout << "[selftest] " << name << (ok ? " ok" : " FAILED") << "\n";
    if (!ok) ++failures;
  };

  // Hadamard: orthonormal columns, fixed entry magnitude, positive-part mass.
  {
    bool ok = true;
    rng::Engine eng(7);
    for (std::size_t k = 0; k <= 5 && ok; ++k) {
      const DenseMatrix f = hadamard(k);
      const std::size_t n = f.rows();
      const DenseMatrix gram = multiply(transpose(f), f);
      for (std::size_t i = 0; i < n && ok; ++i)
        for (std::size_t j = 0; j < n && ok; ++j)
          ok = std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12;
      const double mag = std::pow(2.0, -static_cast<double>(k) / 2.0);
      for (double v : f.data())
        if (std::abs(std::abs(v) - mag) > 1e-15) ok = false;
      Vector s(n);
      double total = 0.0;
      for (double& x : s) {
        x = 0.1 + eng.uniform01();
        total += x;
      }
      for (std::size_t j = 0; j < n && ok; ++j) {
        double pos = 0.0, neg = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
          pos += s[l] * std::max(f(l, j), 0.0);
          neg += s[l] * std::max(-f(l, j), 0.0);
        }
        ok = std::max(pos, neg) >= mag / 2.0 * total - 1e-12;
      }
    }
    check(ok, "hadamard orthonormality and positive-part mass");
  }

  // Norm identities on seeded matrices.
  {
    bool ok = true;
    rng::Engine eng(11);
    for (int t = 0; t < 50 && ok; ++t) {
      const std::size_t r = 1 + eng.below(6), c = 1 + eng.below(6);
      DenseMatrix m(r, c);
      for (double& v : m.data()) v = eng.gaussian();
      const double fro = frobenius_norm(m);
      const double spec = spectral_norm(m).value;
      const double root = std::sqrt(static_cast<double>(std::min(r, c)));
      ok = spec <= fro + 1e-9 && fro <= root * spec + 1e-9 &&
           std::abs(group_norm(m, Axis::rows, 2.0, 2) - fro) < 1e-12;
      double prev = group_norm(m, Axis::rows, 1.0, 2);
      for (double p : {1.5, 2.0, 3.0, 8.0}) {
        const double cur = group_norm(m, Axis::rows, p, 2);
        if (cur > prev + 1e-12) ok = false;
        prev = cur;
      }
    }
    check(ok, "norm ordering and group-norm identities");
  }

  // Ramp loss shape and margin-loss ordering.
  {
    bool ok = ramp_loss(-1e-9, 1.0) == 1.0 && ramp_loss(0.0, 1.0) == 1.0 &&
              ramp_loss(1.0, 1.0) == 0.0 && ramp_loss(0.5, 1.0) == 0.5;
    double prev = 2.0;
    for (double mu = -1.0; mu <= 2.0; mu += 0.01) {
      const double v = ramp_loss(mu, 1.0);
      if (v < 0.0 || v > 1.0 || v > prev + 1e-12) ok = false;
      prev = v;
    }
    const auto data = synthetic_gaussian(6, 60, 3, 5, 2.0);
    const auto net = init_network(6, 10, 3, InitScheme::uniform_fan_in, 9);
    const double l0 = empirical_margin_loss(net, data, 0.0);
    for (double gamma : {0.1, 1.0, 10.0})
      if (l0 > empirical_margin_loss(net, data, gamma) + 1e-12) ok = false;
    check(ok, "ramp loss shape; L_0 below every margin loss");
  }

  // Covering construction: domination, norm cap, count.
  {
    CoverSpec spec;
    spec.dim = 3;
    spec.p = 2.0;
    spec.eps = 0.5;
    spec.beta_radius = 1.3;
    const auto boxes = cover_construct(spec);
    bool ok = static_cast<double>(boxes.size()) <=
              std::exp(cover_count_log(spec)) + 0.5;
    const double cap = std::pow(static_cast<double>(spec.dim),
                                0.5 - 1.0 / spec.p) *
                           spec.beta_radius * (1.0 + spec.eps) +
                       1e-12;
    for (const auto& box : boxes)
      if (norm2(box) > cap) ok = false;
    rng::Engine eng(23);
    for (int t = 0; t < 2000 && ok; ++t) {
      Vector x(spec.dim);
      for (double& v : x) v = eng.gaussian();
      double norm_p = 0.0;
      for (double v : x) norm_p += std::pow(std::abs(v), spec.p);
      norm_p = std::pow(norm_p, 1.0 / spec.p);
      const double radius = spec.beta_radius * std::pow(eng.uniform01(),
                                                        1.0 / spec.dim);
      for (double& v : x) v *= radius / std::max(norm_p, 1e-300);
      bool dominated = false;
      for (const auto& box : boxes) {
        bool fits = true;
        for (std::size_t i = 0; i < x.size(); ++i)
          if (std::abs(x[i]) > box[i] + 1e-12) fits = false;
        if (fits) {
          dominated = true;
          break;
        }
      }
      ok = dominated;
    }
    check(ok, "covering boxes dominate sampled ball points");
  }

  // Contraction inequality, exact enumeration.
  {
    bool ok = true;
    rng::Engine eng(31);
    for (int t = 0; t < 30 && ok; ++t) {
      Vector v(1 + eng.below(8));
      for (double& x : v) x = eng.gaussian();
      const auto [lhs, rhs] = contraction_check(v);
      ok = lhs <= rhs + 1e-12;
    }
    check(ok, "contraction inequality");
  }

  // Lower-bound certification on tiny instances.
  {
    bool ok = true;
    rng::Engine eng(37);
    for (const auto& [k, n] :
         std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 1},
                                                          {1, 2}}) {
      const std::size_t h = std::size_t{1} << k;
      Vector alpha(h), beta(h);
      for (double& a : alpha) a = 0.2 + eng.uniform01();
      for (double& b : beta) b = 0.2 + eng.uniform01();
      const auto inst = build_instance(k, n, alpha, beta);
      const auto est = rademacher_lower_estimate_exact(inst);
      if (est.value < analytic_lower_value(inst) - 1e-12) ok = false;
      const std::size_t m = inst.samples();
      if (m <= 4) {
        for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << m); ++bits) {
          std::vector<int> xi(m);
          for (std::size_t i = 0; i < m; ++i)
            xi[i] = (bits >> i) & 1u ? 1 : -1;
          if (!witness(inst, xi).feasible()) ok = false;
        }
      }
    }
    check(ok, "lower-bound certification and witness feasibility");
  }

  // Determinism and the null training step.
  {
    const auto a = init_network(5, 7, 3, InitScheme::uniform_fan_in, 42);
    const auto b = init_network(5, 7, 3, InitScheme::uniform_fan_in, 42);
    bool ok = a.U.data() == b.U.data() && a.V.data() == b.V.data();
    auto data = synthetic_gaussian(5, 30, 3, 3, 4.0);
    TwoLayerNet net = a;
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.max_epochs = 3;
    const auto report = train(net, data, cfg);
    ok = ok && net.U.data() == a.U.data() && net.V.data() == a.V.data() &&
         report.epochs_run == cfg.max_epochs && !report.reached_stop;
    check(ok, "seeded determinism; lr=0 leaves weights unchanged");
  }

  std::cout << (failures == 0 ? "selftest passed" : "selftest FAILED") << "\n";
  return failures == 0 ? 0 : kExitNumeric;
}

}  // namespace detail

}  // namespace capmeter::cli
