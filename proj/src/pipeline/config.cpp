#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "oodkit/archive.hpp"
#include "oodkit/errors.hpp"
#include "oodkit/pipeline.hpp"

namespace oodkit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    n = std::stoull(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: '" + key + "' needs a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x)) {
    throw ConfigError("config: '" + key + "' needs a number, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' needs true or false, got '" + v + "'");
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "id_data") id_data = v;
  else if (key == "ood_data") ood_data = v;
  else if (key == "model") model = v;
  else if (key == "stats") stats = v;
  else if (key == "out_dir") out_dir = v;
  else if (key == "holdout") {
    holdout.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!trim(item).empty()) holdout.push_back(to_size(key, trim(item)));
    }
  } else if (key == "profile") {
    vit_profile(v, 1);  // rejects unknown names
    profile = v;
  } else if (key == "train_profile") {
    const auto keep_seed = train.seed;
    train = oodkit::train_profile(v);
    train.seed = keep_seed;
    train_profile = v;
  } else if (key == "epochs") train.epochs = to_size(key, v);
  else if (key == "batch_size") train.batch_size = to_size(key, v);
  else if (key == "base_lr") train.base_lr = to_double(key, v);
  else if (key == "max_lr") train.max_lr = to_double(key, v);
  else if (key == "weight_decay") train.weight_decay = to_double(key, v);
  else if (key == "momentum") train.momentum = to_double(key, v);
  else if (key == "augment") train.augment = to_bool(key, v);
  else if (key == "precision") train.precision = parse_precision(v);
  else if (key == "metric") metric = parse_metric(v);
  else if (key == "target_tpr") target_tpr = to_double(key, v);
  else if (key == "calibration") calibration = parse_calibration(v);
  else if (key == "heldout_fraction") heldout_fraction = to_double(key, v);
  else if (key == "shared_covariance") shared_covariance = to_bool(key, v);
  else if (key == "seed") {
    seed = to_size(key, v);
    train.seed = seed;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  train.validate();
  vit_profile(profile, 1);
  if (!(target_tpr > 0 && target_tpr <= 1)) throw ConfigError("config: target_tpr must be in (0, 1]");
  if (!(heldout_fraction >= 0 && heldout_fraction < 1)) throw ConfigError("config: heldout_fraction must be in [0, 1)");
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
}

std::string ExperimentConfig::to_text() const {
  std::string holdout_list;
  for (std::size_t i = 0; i < holdout.size(); ++i) holdout_list += (i ? "," : "") + std::to_string(holdout[i]);
  std::string out;
  auto line = [&](const char* key, const std::string& value) { out += fmt::format("{} = {}\n", key, value); };
  line("id_data", id_data.string());
  line("ood_data", ood_data.string());
  line("holdout", holdout_list);
  line("model", model.string());
  line("stats", stats.string());
  line("out_dir", out_dir.string());
  line("profile", profile);
  line("train_profile", train_profile);
  line("epochs", std::to_string(train.epochs));
  line("batch_size", std::to_string(train.batch_size));
  line("base_lr", fmt::format("{:.17g}", train.base_lr));
  line("max_lr", fmt::format("{:.17g}", train.max_lr));
  line("weight_decay", fmt::format("{:.17g}", train.weight_decay));
  line("momentum", fmt::format("{:.17g}", train.momentum));
  line("augment", train.augment ? "true" : "false");
  line("precision", std::string(to_string(train.precision)));
  line("metric", std::string(to_string(metric)));
  line("target_tpr", fmt::format("{:.17g}", target_tpr));
  line("calibration", std::string(to_string(calibration)));
  line("heldout_fraction", fmt::format("{:.17g}", heldout_fraction));
  line("shared_covariance", shared_covariance ? "true" : "false");
  line("seed", std::to_string(seed));
  return out;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  // train_profile resets the train keys, so apply it first wherever it appears.
  std::vector<std::pair<std::string, std::string>> entries;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    entries.emplace_back(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  std::stable_partition(entries.begin(), entries.end(), [](const auto& e) { return e.first == "train_profile"; });
  for (const auto& [key, value] : entries) {
    try {
      c.set(key, value);
    } catch (const ConfigError& ex) {
      throw ConfigError(origin + ": " + ex.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto bytes = read_file(path);
  return parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

}  // namespace oodkit
