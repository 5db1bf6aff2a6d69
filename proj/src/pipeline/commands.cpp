#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "oodkit/archive.hpp"
#include "oodkit/errors.hpp"
#include "oodkit/pipeline.hpp"

namespace oodkit {

namespace fs = std::filesystem;

void Log::operator()(const std::string& line) const {
  if (out) *out << line << std::endl;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

LabeledImageSet load_required(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " dataset given");
  if (!fs::exists(path)) throw IoError(std::string(what) + " dataset not found: " + path.string());
  return load_dataset(path);
}

// ID training/held-out split plus the OOD set, per the config.
struct Data {
  LabeledImageSet train, test, ood;
  bool has_ood = false;
};

Data prepare_data(const ExperimentConfig& config, bool need_ood) {
  auto id = load_required(config.id_data, "ID");
  Data out;
  if (!config.holdout.empty()) {
    auto h = holdout_classes(id, config.holdout);
    id = std::move(h.id);
    out.ood = std::move(h.ood);
    out.has_ood = true;
  } else if (!config.ood_data.empty()) {
    out.ood = load_required(config.ood_data, "OOD");
    out.has_ood = true;
  } else if (need_ood) {
    throw ConfigError("no OOD data: set ood_data or holdout");
  }
  auto parts = split(id, {1.0 - config.heldout_fraction, 0.0, config.heldout_fraction}, config.seed);
  out.train = std::move(parts.train);
  out.test = std::move(parts.test);
  return out;
}

ViTConfig model_config(const ExperimentConfig& config, const LabeledImageSet& data) {
  if (data.height != data.width) throw ConfigError("model: images must be square");
  auto vc = vit_profile(config.profile, data.num_classes());
  vc.channels = data.channels;
  vc.image_size = data.height;
  try {
    vc.validate();
  } catch (const ConfigError& ex) {
    throw ConfigError("profile '" + config.profile + "' does not fit " + std::to_string(data.height) + "px images: " +
                      ex.what());
  }
  return vc;
}

template <typename T>
TrainReport train_and_save(const ExperimentConfig& config, const ViTConfig& vc, Data data,
                           const fs::path& checkpoint, const Log& log) {
  const auto norm = data.train.standardization ? *data.train.standardization : channel_statistics(data.train);
  data.train.standardization = norm;
  data.test.standardization = norm;
  const auto init = ViTParams<T>::init(vc, config.seed);
  log(fmt::format("training {} ({} params, {}) on {} samples, {} held out", config.profile, init.parameter_count(),
                  to_string(config.train.precision), data.train.size(), data.test.size()));
  auto on_epoch = [&](const EpochRecord& r) {
    log(fmt::format("epoch {:3d}  loss {:.5f}  train_acc {:.4f}  test_acc {:.4f}  lr {:.6f}  {:.1f}s", r.epoch, r.loss,
                    r.train_acc, r.test_acc, r.lr, r.seconds));
  };
  auto result = train<T>(vc, init, data.train, data.test.size() ? &data.test : nullptr, config.train, on_epoch);
  save_model(checkpoint, ViTModel<T>{vc, result.best, norm});
  return result.report;
}

template <typename Fn>
auto with_model(const fs::path& path, Fn&& fn) {
  if (!fs::exists(path)) throw IoError("model checkpoint not found: " + path.string());
  if (checkpoint_dtype(path) == DType::f64) return fn(load_model<double>(path));
  return fn(load_model<float>(path));
}

// The model's input statistics take precedence over the dataset's.
template <typename M>
LabeledImageSet as_model_input(LabeledImageSet data, const M& model) {
  if (model.input_norm) data.standardization = model.input_norm;
  return data;
}

Thresholds permissive() { return {std::numeric_limits<double>::max(), std::nextafter(0.0, 1.0)}; }

std::vector<std::size_t> predictions_from_logits(const EmbeddingSet& set) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) out.push_back(confidence_score(set.logit_row(i)).cls);
  return out;
}

}  // namespace

TrainOutcome cmd_train(const ExperimentConfig& config, const Log& log) {
  config.validate();
  const auto data = prepare_data(config, false);
  const auto vc = model_config(config, data.train);
  fs::create_directories(config.out_dir);
  TrainOutcome out;
  out.checkpoint = config.out_dir / "model.oodt";
  out.report = config.train.precision == Precision::f64
                   ? train_and_save<double>(config, vc, data, out.checkpoint, log)
                   : train_and_save<float>(config, vc, data, out.checkpoint, log);
  write_text(config.out_dir / "train_report.csv", out.report.csv());
  auto summary = out.report.summary();
  summary["train_config"] = config.train.to_json();
  summary["vit_config"] = vc.to_json();
  summary["parameters"] = parameter_count(vc);
  write_text(config.out_dir / "train_summary.json", summary.dump(2) + "\n");
  return out;
}

void cmd_extract(const fs::path& model, const fs::path& dataset, const fs::path& out, const std::string& source) {
  const auto data = load_required(dataset, "input");
  const auto set = with_model(model, [&](const auto& m) {
    return extract_embeddings(m.config, m.params, as_model_input(data, m), source);
  });
  save_embeddings(out, set);
}

void cmd_fit(const fs::path& embeddings, const fs::path& out, const FitOptions& options) {
  const auto set = load_embeddings(embeddings);
  save_stats(out, fit_stats(set, options));
}

std::vector<OODDecision> cmd_score(const ScoreInput& input, const fs::path& stats_path, const Thresholds& thresholds,
                                   Metric metric, const fs::path& out) {
  thresholds.validate();
  EmbeddingSet set;
  if (!input.embeddings.empty()) {
    set = load_embeddings(input.embeddings);
  } else if (!input.model.empty() && !input.dataset.empty()) {
    const auto data = load_required(input.dataset, "input");
    set = with_model(input.model, [&](const auto& m) {
      return extract_embeddings(m.config, m.params, as_model_input(data, m), "data");
    });
  } else {
    throw ConfigError("score: give either embeddings or a model and a dataset");
  }
  const auto stats = load_stats(stats_path);
  const auto decisions = score_all(set, stats, thresholds, metric);
  if (!out.empty()) write_decisions(out, decisions);
  return decisions;
}

void save_thresholds(const fs::path& path, const Thresholds& t) {
  nlohmann::json j{{"t_distance", t.t_distance}, {"t_conf", t.t_conf}};
  write_text(path, j.dump(2) + "\n");
}

Thresholds load_thresholds(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("thresholds file not found: " + path.string());
  const auto bytes = read_file(path);
  Thresholds t;
  try {
    const auto j = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    t.t_distance = j.at("t_distance").get<double>();
    t.t_conf = j.at("t_conf").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": malformed thresholds: " + ex.what());
  }
  t.validate();
  return t;
}

std::vector<EvalRow> cmd_eval(const fs::path& id_scores, const fs::path& ood_scores, const fs::path& out_dir,
                              const std::string& id_name, const std::string& ood_name, const std::string& metric) {
  for (const auto& p : {id_scores, ood_scores}) {
    if (!fs::exists(p)) throw IoError("scores file not found: " + p.string());
  }
  const auto rows = evaluate_pairing(read_decisions(id_scores), read_decisions(ood_scores), id_name, ood_name, metric);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(out_dir / "eval.csv", report_csv(rows));
    write_text(out_dir / "eval.json", report_json(rows).dump(2) + "\n");
  }
  return rows;
}

void cmd_synth(const SyntheticSpec& spec, const fs::path& out) { save_dataset(out, synthesize(spec)); }

RunResult run_pipeline(const ExperimentConfig& config, const Log& log, std::vector<Metric> metrics, bool reuse_model) {
  config.validate();
  if (config.heldout_fraction <= 0) throw ConfigError("run: heldout_fraction must be positive to calibrate thresholds");
  if (metrics.empty()) metrics.push_back(config.metric);
  const auto data = prepare_data(config, true);
  const fs::path dir = config.out_dir;
  fs::create_directories(dir);

  fs::path model = dir / "model.oodt";
  if (reuse_model) {
    model = config.model;
    log("reusing model " + model.string());
  } else {
    cmd_train(config, log);
  }

  save_dataset(dir / "id_train.oodd", data.train);
  save_dataset(dir / "id_test.oodd", data.test);
  save_dataset(dir / "ood.oodd", data.ood);
  cmd_extract(model, dir / "id_train.oodd", dir / "emb_train.oodt", "train");
  cmd_extract(model, dir / "id_test.oodd", dir / "emb_test.oodt", "test");
  cmd_extract(model, dir / "ood.oodd", dir / "emb_ood.oodt", "ood");

  RunResult result;
  const auto test = load_embeddings(dir / "emb_test.oodt");
  const auto pred = predictions_from_logits(test);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += static_cast<std::int64_t>(pred[i]) == test.labels[i];
  result.test_acc = static_cast<double>(hit) / static_cast<double>(pred.size());

  for (const auto metric : metrics) {
    const std::string tag(to_string(metric));
    const auto stats = dir / ("stats_" + tag + ".oodt");
    cmd_fit(dir / "emb_train.oodt", stats, {metric, config.shared_covariance});
    const auto raw = cmd_score({dir / "emb_test.oodt", {}, {}}, stats, permissive(), metric, {});
    const auto thresholds = calibrate_thresholds(raw, config.target_tpr, config.calibration);
    save_thresholds(dir / ("thresholds_" + tag + ".json"), thresholds);
    const auto id = cmd_score({dir / "emb_test.oodt", {}, {}}, stats, thresholds, metric, dir / ("scores_id_" + tag + ".csv"));
    cmd_score({dir / "emb_ood.oodt", {}, {}}, stats, thresholds, metric, dir / ("scores_ood_" + tag + ".csv"));
    const auto rows = cmd_eval(dir / ("scores_id_" + tag + ".csv"), dir / ("scores_ood_" + tag + ".csv"), {},
                               config.id_data.stem().string(),
                               config.holdout.empty() ? config.ood_data.stem().string() : "holdout", tag);
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    if (metric == metrics.front()) {
      result.thresholds = thresholds;
      result.id_inlier_rate = inlier_rate(id, thresholds);
    }
    log(fmt::format("{:12s} distance AUROC {:.4f}  confidence AUROC {:.4f}", tag, rows[0].auroc, rows[1].auroc));
  }
  write_text(dir / "eval.csv", report_csv(result.rows));
  write_text(dir / "eval.json", report_json(result.rows).dump(2) + "\n");
  return result;
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "batch_size") return SweepAxis::batch_size;
  if (name == "epochs") return SweepAxis::epochs;
  if (name == "metric") return SweepAxis::metric;
  if (name == "model_profile") return SweepAxis::model_profile;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "' (expected batch_size, epochs, metric, model_profile)");
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::batch_size: return "batch_size";
    case SweepAxis::epochs: return "epochs";
    case SweepAxis::metric: return "metric";
    case SweepAxis::model_profile: return "model_profile";
  }
  return "?";
}

std::string cmd_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
                      const Log& log) {
  if (values.empty()) throw ConfigError("sweep: no axis values");
  const std::string key = axis == SweepAxis::model_profile ? "profile" : std::string(to_string(axis));
  // Validate every value before any work starts.
  for (const auto& v : values) {
    ExperimentConfig probe = config;
    probe.set(key, v);
    probe.validate();
  }

  std::string csv = "axis,value,metric,test_acc,auroc_distance,aupr_distance,auroc_confidence,aupr_confidence,"
                    "id_inlier_rate,n_id,n_ood\n";
  auto emit = [&](const std::string& value, const RunResult& r, std::size_t pair) {
    const auto& d = r.rows[2 * pair];
    const auto& c = r.rows[2 * pair + 1];
    csv += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", to_string(axis), value,
                       d.metric, r.test_acc, d.auroc, d.aupr, c.auroc, c.aupr, r.id_inlier_rate, d.n_id, d.n_ood);
  };

  if (axis == SweepAxis::metric) {
    // The model does not depend on the metric: train once, score each.
    std::vector<Metric> metrics;
    for (const auto& v : values) metrics.push_back(parse_metric(v));
    ExperimentConfig run = config;
    run.out_dir = config.out_dir / "metric";
    const auto r = run_pipeline(run, log, metrics);
    for (std::size_t i = 0; i < values.size(); ++i) emit(values[i], r, i);
  } else {
    for (const auto& v : values) {
      ExperimentConfig run = config;
      run.set(key, v);
      run.out_dir = config.out_dir / (std::string(to_string(axis)) + "=" + v);
      log(fmt::format("sweep {} = {}", to_string(axis), v));
      emit(v, run_pipeline(run, log), 0);
    }
  }
  fs::create_directories(config.out_dir);
  write_text(config.out_dir / "sweep.csv", csv);
  return csv;
}

}  // namespace oodkit
