#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <sys/wait.h>

#include <fmt/format.h>

#include "oodkit/archive.hpp"
#include "oodkit/errors.hpp"
#include "oodkit/pipeline.hpp"

using namespace oodkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(OODKIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 8x8 synthetic ID and shifted OOD sets plus a config that trains briefly.
ExperimentConfig small_experiment(const fs::path& dir) {
  SyntheticSpec id;
  id.num_classes = 3;
  id.samples_per_class = 20;
  id.image_size = 8;
  id.seed = 1;
  cmd_synth(id, dir / "id.oodd");
  auto ood = id;
  ood.kind = GeneratorKind::shifted;
  ood.shift = 2;
  ood.samples_per_class = 10;
  ood.seed = 2;
  cmd_synth(ood, dir / "ood.oodd");
  ExperimentConfig c;
  c.set("id_data", (dir / "id.oodd").string());
  c.set("ood_data", (dir / "ood.oodd").string());
  c.set("out_dir", (dir / "out").string());
  c.set("epochs", "2");
  c.set("batch_size", "16");
  c.set("shared_covariance", "true");
  c.set("seed", "3");
  return c;
}

}  // namespace

TEST(ExperimentConfig, ParseAndRoundTrip) {
  const auto c = ExperimentConfig::parse(
      "# comment\n"
      "epochs = 7  # inline\n"
      "train_profile = full\n"
      "metric = cosine\n"
      "holdout = 1, 3\n"
      "seed = 11\n");
  EXPECT_EQ(c.train.epochs, 7u);  // applied after the profile
  EXPECT_EQ(c.train.batch_size, 256u);
  EXPECT_EQ(c.metric, Metric::cosine);
  EXPECT_EQ(c.holdout, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(c.train.seed, 11u);
  const auto again = ExperimentConfig::parse(c.to_text());
  EXPECT_EQ(again.to_text(), c.to_text());
}

TEST(ExperimentConfig, Errors) {
  EXPECT_THROW(ExperimentConfig::parse("bogus = 1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("epochs\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("epochs = -3\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("profile = giant\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("target_tpr = 1.5\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/exp.cfg"), ConfigError);
}

TEST(Cli, ExitCodesByErrorClass) {
  const auto dir = temp_dir("oodkit_cli_codes");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train --bogus-flag"), 2);
  EXPECT_EQ(run_cli("train --set nope=1"), 2);
  EXPECT_EQ(run_cli("train --set id_data=/nonexistent/x.oodd --out " + (dir / "o").string()), 3);
  {
    std::ofstream bad(dir / "bad.oodd");
    bad << "not a dataset";
  }
  EXPECT_EQ(run_cli("train --set id_data=" + (dir / "bad.oodd").string() + " --out " + (dir / "o").string()), 3);
  EXPECT_EQ(run_cli("synth --classes 2 --per-class 3 --size 8 --out " + (dir / "s.oodd").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "s.oodd"));
  fs::remove_all(dir);
}

TEST(Pipeline, StagesProduceConsistentArtifacts) {
  const auto dir = temp_dir("oodkit_pipe_smoke");
  const auto c = small_experiment(dir);
  const auto r = run_pipeline(c, {}, all_metrics());
  const auto out = dir / "out";
  for (const char* f : {"model.oodt", "train_report.csv", "train_summary.json", "emb_train.oodt", "emb_test.oodt",
                        "emb_ood.oodt", "eval.csv", "eval.json", "stats_mahalanobis.oodt", "scores_ood_cosine.csv",
                        "thresholds_euclidean.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  ASSERT_EQ(r.rows.size(), 6u);
  for (const auto& row : r.rows) {
    EXPECT_GE(row.auroc, 0.0);
    EXPECT_LE(row.auroc, 1.0);
    EXPECT_EQ(row.n_ood, 30u);
  }

  // extract: n rows, equal to the forward features
  const auto model = load_model<float>(out / "model.oodt");
  auto data = load_dataset(dir / "ood.oodd");
  ASSERT_TRUE(model.input_norm.has_value());
  data.standardization = model.input_norm;
  cmd_extract(out / "model.oodt", dir / "ood.oodd", dir / "e1.oodt", "ood");
  cmd_extract(out / "model.oodt", dir / "ood.oodd", dir / "e2.oodt", "ood");
  EXPECT_EQ(slurp(dir / "e1.oodt"), slurp(dir / "e2.oodt"));
  EXPECT_EQ(slurp(dir / "e1.oodt"), slurp(out / "emb_ood.oodt"));
  const auto emb = load_embeddings(dir / "e1.oodt");
  ASSERT_EQ(emb.size(), data.size());
  const std::vector<std::size_t> first{5};
  const auto feat = forward(data.batch<float>(first), model.config, model.params).features;
  for (std::size_t j = 0; j < emb.dim(); ++j) EXPECT_EQ(emb.row(5)[j], static_cast<double>(feat.data()[j]));

  // score from the model path agrees with the embedding path
  const auto th = load_thresholds(out / "thresholds_mahalanobis.json");
  const auto via_emb = cmd_score({dir / "e1.oodt", {}, {}}, out / "stats_mahalanobis.oodt", th, Metric::mahalanobis,
                                 dir / "s1.csv");
  const auto via_model = cmd_score({{}, out / "model.oodt", dir / "ood.oodd"}, out / "stats_mahalanobis.oodt", th,
                                   Metric::mahalanobis, dir / "s2.csv");
  EXPECT_EQ(slurp(dir / "s1.csv"), slurp(dir / "s2.csv"));
  EXPECT_EQ(slurp(dir / "s1.csv"), slurp(out / "scores_ood_mahalanobis.csv"));
  EXPECT_EQ(via_emb.size(), via_model.size());
  fs::remove_all(dir);
}

TEST(Pipeline, ExtremeThresholdsFlagNothing) {
  const auto dir = temp_dir("oodkit_pipe_extreme");
  const auto c = small_experiment(dir);
  run_pipeline(c);
  const auto out = dir / "out";
  const auto emb = load_embeddings(out / "emb_ood.oodt");
  const Thresholds wide{std::numeric_limits<double>::max(), std::numeric_limits<double>::min()};
  const auto ds = cmd_score({out / "emb_ood.oodt", {}, {}}, out / "stats_mahalanobis.oodt", wide,
                            Metric::mahalanobis, dir / "wide.csv");
  ASSERT_EQ(ds.size(), emb.size());
  for (const auto& d : ds) EXPECT_FALSE(d.is_outlier);
  fs::remove_all(dir);
}

TEST(Pipeline, RepeatRunIsByteIdentical) {
  const auto a = temp_dir("oodkit_pipe_a"), b = temp_dir("oodkit_pipe_b");
  auto ca = small_experiment(a), cb = small_experiment(b);
  run_pipeline(ca);
  run_pipeline(cb);
  for (const char* f : {"model.oodt", "train_report.csv", "emb_train.oodt", "emb_ood.oodt", "stats_mahalanobis.oodt",
                        "scores_id_mahalanobis.csv", "scores_ood_mahalanobis.csv", "eval.csv"}) {
    EXPECT_EQ(slurp(a / "out" / f), slurp(b / "out" / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, MissingOodSourceIsConfigError) {
  const auto dir = temp_dir("oodkit_pipe_noood");
  auto c = small_experiment(dir);
  c.ood_data.clear();
  EXPECT_THROW(run_pipeline(c), ConfigError);
  fs::remove_all(dir);
}

TEST(Pipeline, HoldoutReplacesOodData) {
  const auto dir = temp_dir("oodkit_pipe_holdout");
  auto c = small_experiment(dir);
  c.ood_data.clear();
  c.set("holdout", "2");
  const auto r = run_pipeline(c);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].n_ood, 20u);
  fs::remove_all(dir);
}

TEST(Eval, HandCraftedScoresPassThrough) {
  const auto dir = temp_dir("oodkit_eval_pass");
  std::vector<OODDecision> id(3), ood(2);
  const double id_d[] = {1, 2, 3}, ood_d[] = {2.5, 4};
  for (std::size_t i = 0; i < 3; ++i) id[i] = {i, id_d[i], 0, 0.9, 0, false, Metric::mahalanobis};
  for (std::size_t i = 0; i < 2; ++i) ood[i] = {i, ood_d[i], 0, 0.5, 0, true, Metric::mahalanobis};
  write_decisions(dir / "id.csv", id);
  write_decisions(dir / "ood.csv", ood);
  const auto rows = cmd_eval(dir / "id.csv", dir / "ood.csv", dir);
  EXPECT_NEAR(rows[0].auroc, 5.0 / 6.0, 1e-15);
  EXPECT_EQ(rows[1].auroc, 1.0);
  EXPECT_TRUE(fs::exists(dir / "eval.csv"));
  EXPECT_TRUE(fs::exists(dir / "eval.json"));
  fs::remove_all(dir);
}

TEST(Sweep, MetricAxisGivesOneRowPerValue) {
  const auto dir = temp_dir("oodkit_sweep");
  const auto c = small_experiment(dir);
  const auto csv = cmd_sweep(c, SweepAxis::metric, {"mahalanobis", "euclidean", "cosine"});
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0].substr(0, 17), "axis,value,metric");
  EXPECT_NE(lines[2].find("metric,euclidean"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / "sweep.csv"));
  EXPECT_THROW(cmd_sweep(c, SweepAxis::epochs, {"0"}), ConfigError);
  EXPECT_THROW(cmd_sweep(c, SweepAxis::metric, {}), ConfigError);
  EXPECT_THROW(parse_sweep_axis("colour"), ConfigError);
  fs::remove_all(dir);
}

TEST(Sweep, SingleValueMatchesDirectRun) {
  const auto dir = temp_dir("oodkit_sweep_single");
  auto c = small_experiment(dir);
  const auto csv = cmd_sweep(c, SweepAxis::epochs, {"2"});
  c.set("out_dir", (dir / "direct").string());
  const auto r = run_pipeline(c);
  const auto expected = fmt::format("epochs,2,mahalanobis,{:.17g},{:.17g},", r.test_acc, r.rows[0].auroc);
  EXPECT_NE(csv.find(expected), std::string::npos) << csv;
  fs::remove_all(dir);
}
