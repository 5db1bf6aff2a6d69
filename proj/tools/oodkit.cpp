// oodkit command-line driver. Exit codes: 0 ok, 1 unexpected, 2 config,
// 3 io, 4 numeric, 5 shape/contract.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "oodkit/errors.hpp"
#include "oodkit/parallel.hpp"
#include "oodkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace oodkit;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::numeric: return 4;
    case ErrorKind::shape:
    case ErrorKind::contract: return 5;
  }
  return 1;
}

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string profile, out, metric;
};

// --config first, then --set key=value pairs, then the dedicated flags.
ExperimentConfig resolve(const Common& c) {
  ExperimentConfig config = c.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_given) config.set("seed", std::to_string(c.seed));
  if (!c.profile.empty()) config.set("profile", c.profile);
  if (!c.metric.empty()) config.set("metric", c.metric);
  if (!c.out.empty()) config.out_dir = c.out;
  config.validate();
  return config;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "Experiment config file (key = value lines)");
  app->add_option("--set", c.sets, "Override a config key, as key=value (repeatable)");
  app->add_option("--seed", c.seed, "Experiment seed")->each([&](const std::string&) { c.seed_given = true; });
  app->add_option("--profile", c.profile, "Model profile");
  app->add_option("--metric", c.metric, "mahalanobis | euclidean | cosine");
  app->add_option("--out", c.out, "Output directory");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-feature OOD detection toolkit"};
  app.require_subcommand(1);
  bool sequential = false;
  app.add_flag("--sequential", sequential, "Single-threaded, bit-reproducible kernels");
  Log log{&std::cerr};

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  SyntheticSpec spec;
  std::string kind = "blobs", synth_out;
  synth->add_option("--kind", kind, "blobs | textures | shifted");
  synth->add_option("--classes", spec.num_classes);
  synth->add_option("--per-class", spec.samples_per_class);
  synth->add_option("--channels", spec.channels);
  synth->add_option("--size", spec.image_size);
  synth->add_option("--bumps", spec.bumps_per_class);
  synth->add_option("--noise", spec.noise_sigma);
  synth->add_option("--jitter", spec.jitter);
  synth->add_option("--shift", spec.shift);
  synth->add_option("--pattern-seed", spec.pattern_seed);
  synth->add_option("--seed", spec.seed);
  synth->add_option("--out", synth_out, "Output .oodd file")->required();

  // import
  auto* import = app.add_subcommand("import", "Convert raw u8 NCHW pixels and u8 labels to OODD1");
  std::string imp_pixels, imp_labels, imp_out, imp_names;
  std::size_t imp_c = 3, imp_h = 32, imp_w = 32, imp_classes = 10;
  import->add_option("--pixels", imp_pixels)->required();
  import->add_option("--labels", imp_labels)->required();
  import->add_option("--channels", imp_c);
  import->add_option("--height", imp_h);
  import->add_option("--width", imp_w);
  import->add_option("--classes", imp_classes, "Class count (names default to class0..)");
  import->add_option("--names", imp_names, "Comma-separated class names");
  import->add_option("--out", imp_out)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  Common train_common;
  add_common(train_cmd, train_common);

  // extract
  auto* extract = app.add_subcommand("extract", "Write class-token embeddings for a dataset");
  std::string ex_model, ex_data, ex_out, ex_source = "data";
  extract->add_option("--model", ex_model)->required();
  extract->add_option("--data", ex_data)->required();
  extract->add_option("--out", ex_out)->required();
  extract->add_option("--source", ex_source, "Tag stored with the embeddings");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit per-class Gaussian statistics");
  std::string fit_emb, fit_out, fit_metric = "mahalanobis";
  FitOptions fit_opts;
  fit->add_option("--embeddings", fit_emb)->required();
  fit->add_option("--out", fit_out)->required();
  fit->add_option("--metric", fit_metric);
  fit->add_flag("--shared-covariance", fit_opts.shared_covariance);
  fit->add_option("--jitter", fit_opts.absolute_jitter, "Absolute jitter (default: 1e-6 * trace / d)");

  // score
  auto* score = app.add_subcommand("score", "Apply the OR-threshold rule and write decisions");
  ScoreInput sc_in;
  std::string sc_stats, sc_thresholds, sc_calibrate, sc_out, sc_metric = "mahalanobis", sc_save, sc_mode = "marginal";
  double sc_td = std::numeric_limits<double>::quiet_NaN(), sc_tc = std::numeric_limits<double>::quiet_NaN();
  double sc_tpr = 0.95;
  score->add_option("--embeddings", sc_in.embeddings);
  score->add_option("--model", sc_in.model);
  score->add_option("--data", sc_in.dataset);
  score->add_option("--stats", sc_stats)->required();
  score->add_option("--thresholds", sc_thresholds, "JSON with t_distance and t_conf");
  score->add_option("--t-distance", sc_td);
  score->add_option("--t-conf", sc_tc);
  score->add_option("--calibrate", sc_calibrate, "ID validation embeddings to calibrate thresholds on");
  score->add_option("--target-tpr", sc_tpr);
  score->add_option("--calibration", sc_mode, "marginal | joint");
  score->add_option("--save-thresholds", sc_save);
  score->add_option("--metric", sc_metric);
  score->add_option("--out", sc_out, "Decisions CSV")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "AUROC/AUPR report from ID and OOD decision files");
  std::string ev_id, ev_ood, ev_out, ev_metric = "mahalanobis", ev_id_name = "id", ev_ood_name = "ood";
  eval->add_option("--id", ev_id)->required();
  eval->add_option("--ood", ev_ood)->required();
  eval->add_option("--out", ev_out, "Output directory");
  eval->add_option("--metric", ev_metric, "Label for the metric column");
  eval->add_option("--id-name", ev_id_name);
  eval->add_option("--ood-name", ev_ood_name);

  // run
  auto* run = app.add_subcommand("run", "train -> extract -> fit -> score -> eval");
  Common run_common;
  add_common(run, run_common);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Repeat the pipeline over one axis");
  Common sweep_common;
  std::string sw_axis, sw_values;
  add_common(sweep, sweep_common);
  sweep->add_option("--axis", sw_axis, "batch_size | epochs | metric | model_profile")->required();
  sweep->add_option("--values", sw_values, "Comma-separated axis values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    configure_threads_from_env();
    if (sequential) set_num_threads(1);

    if (*synth) {
      spec.kind = parse_generator(kind);
      cmd_synth(spec, synth_out);
      std::cout << synth_out << "\n";
    } else if (*import) {
      std::vector<std::string> names = split_list(imp_names);
      if (names.empty()) {
        for (std::size_t c = 0; c < imp_classes; ++c) names.push_back("class" + std::to_string(c));
      }
      save_dataset(imp_out, import_raw_u8(imp_pixels, imp_labels, imp_c, imp_h, imp_w, names));
      std::cout << imp_out << "\n";
    } else if (*train_cmd) {
      const auto out = cmd_train(resolve(train_common), log);
      std::cout << out.checkpoint.string() << "\n";
    } else if (*extract) {
      cmd_extract(ex_model, ex_data, ex_out, ex_source);
      std::cout << ex_out << "\n";
    } else if (*fit) {
      fit_opts.metric = parse_metric(fit_metric);
      cmd_fit(fit_emb, fit_out, fit_opts);
      std::cout << fit_out << "\n";
    } else if (*score) {
      const Metric metric = parse_metric(sc_metric);
      Thresholds t;
      if (!sc_thresholds.empty()) {
        t = load_thresholds(sc_thresholds);
      } else if (!sc_calibrate.empty()) {
        const auto raw = cmd_score({sc_calibrate, {}, {}}, sc_stats,
                                   {std::numeric_limits<double>::max(), std::nextafter(0.0, 1.0)}, metric, {});
        t = calibrate_thresholds(raw, sc_tpr, parse_calibration(sc_mode));
      } else if (!std::isnan(sc_td) && !std::isnan(sc_tc)) {
        t = {sc_td, sc_tc};
      } else {
        throw ConfigError("score: give --thresholds, --calibrate, or both --t-distance and --t-conf");
      }
      if (!sc_save.empty()) save_thresholds(sc_save, t);
      const auto d = cmd_score(sc_in, sc_stats, t, metric, sc_out);
      std::size_t outliers = 0;
      for (const auto& x : d) outliers += x.is_outlier;
      std::cerr << fmt::format("t_distance {:.6g}  t_conf {:.6g}  outliers {}/{}\n", t.t_distance, t.t_conf, outliers,
                               d.size());
      std::cout << sc_out << "\n";
    } else if (*eval) {
      const auto rows = cmd_eval(ev_id, ev_ood, ev_out, ev_id_name, ev_ood_name, ev_metric);
      std::cout << report_csv(rows);
    } else if (*run) {
      const auto r = run_pipeline(resolve(run_common), log);
      std::cout << report_csv(r.rows);
    } else if (*sweep) {
      std::cout << cmd_sweep(resolve(sweep_common), parse_sweep_axis(sw_axis), split_list(sw_values), log);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
