#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "oodkit/archive.hpp"
#include "oodkit/dataset.hpp"
#include "oodkit/errors.hpp"

using namespace oodkit;
namespace fs = std::filesystem;

namespace {

SyntheticSpec spec(std::size_t classes, std::size_t per_class, std::uint64_t seed = 0) {
  SyntheticSpec s;
  s.num_classes = classes;
  s.samples_per_class = per_class;
  s.image_size = 8;
  s.seed = seed;
  return s;
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(DatasetFile, RoundTripIsBitIdentical) {
  const auto dir = temp_dir("oodkit_ds_rt");
  auto set = synthesize(spec(3, 4));
  set.standardization = Standardization{{0.5, 0.4, 0.3}, {0.2, 0.25, 0.3}};
  save_dataset(dir / "a.oodd", set);
  const auto back = load_dataset(dir / "a.oodd");
  EXPECT_EQ(back, set);
  EXPECT_EQ(std::memcmp(back.pixels.data(), set.pixels.data(), set.pixels.size() * sizeof(float)), 0);
  fs::remove_all(dir);
}

TEST(DatasetFile, TruncationIsAnErrorAtEveryLength) {
  const auto bytes = serialize_dataset(synthesize(spec(2, 1)));
  for (std::size_t n = 0; n < bytes.size(); n += 7) {
    EXPECT_THROW(parse_dataset(std::span<const std::byte>(bytes.data(), n)), FormatError) << n;
  }
  EXPECT_THROW(parse_dataset(std::span<const std::byte>(bytes.data(), bytes.size() - 1)), TruncatedError);
}

TEST(DatasetFile, DistinctErrors) {
  auto bytes = serialize_dataset(synthesize(spec(2, 1)));
  auto bad = bytes;
  bad[1] = std::byte{'X'};
  EXPECT_THROW(parse_dataset(bad), BadMagicError);
  auto extra = bytes;
  extra.push_back(std::byte{0});
  EXPECT_THROW(parse_dataset(extra), CountMismatchError);
  EXPECT_THROW(load_dataset("/nonexistent/x.oodd"), IoError);
}

TEST(DatasetFile, LabelOverflow) {
  auto set = synthesize(spec(3, 1));
  set.class_names.resize(10);
  for (std::size_t i = 3; i < 10; ++i) set.class_names[i] = "c" + std::to_string(i);
  auto bytes = serialize_dataset(set);
  // labels are the trailing i64 buffer
  const std::int64_t twelve = 12;
  std::memcpy(bytes.data() + bytes.size() - sizeof(std::int64_t), &twelve, sizeof twelve);
  EXPECT_THROW(parse_dataset(bytes), LabelOverflowError);
}

TEST(DatasetFile, ImportRawU8) {
  const auto dir = temp_dir("oodkit_ds_raw");
  {
    std::ofstream px(dir / "px.bin", std::ios::binary), lb(dir / "lb.bin", std::ios::binary);
    for (int i = 0; i < 2 * 4; ++i) px.put(static_cast<char>(i * 30));
    lb.put(1);
    lb.put(0);
  }
  const auto set = import_raw_u8(dir / "px.bin", dir / "lb.bin", 1, 2, 2, {"a", "b"});
  EXPECT_EQ(set.size(), 2u);
  EXPECT_EQ(set.labels, (std::vector<std::int64_t>{1, 0}));
  EXPECT_FLOAT_EQ(set.pixels[1], 30.0f / 255.0f);
  EXPECT_THROW(import_raw_u8(dir / "px.bin", dir / "lb.bin", 1, 3, 3, {"a", "b"}), CountMismatchError);
  fs::remove_all(dir);
}

TEST(Batch, AppliesStandardization) {
  auto set = synthesize(spec(2, 2));
  set.channels = 3;
  set.standardization = Standardization{{0.5, 0.5, 0.5}, {0.25, 0.5, 1.0}};
  const std::vector<std::size_t> idx{1};
  const auto b = set.batch<double>(idx);
  EXPECT_EQ(b.shape(), (Shape{1, 3, 8, 8}));
  EXPECT_NEAR(b.data()[0], (set.image(1)[0] - 0.5) / 0.25, 1e-6);
  EXPECT_NEAR(b.data()[64], (set.image(1)[64] - 0.5) / 0.5, 1e-6);
}

TEST(ChannelStatistics, MeanAndPopulationStd) {
  LabeledImageSet s;
  s.channels = 2;
  s.height = 1;
  s.width = 2;
  s.pixels = {0.0f, 1.0f, 0.5f, 0.5f, 1.0f, 0.0f, 0.5f, 0.5f};
  s.labels = {0, 0};
  s.class_names = {"a"};
  const auto st = channel_statistics(s);
  EXPECT_EQ(st.mean, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(st.std, (std::vector<double>{0.5, 1.0}));  // constant channel -> 1
}

TEST(Synthesize, ZeroNoiseClassesAreConstant) {
  auto s = spec(3, 5);
  s.noise_sigma = 0;
  const auto set = synthesize(s);
  set.validate();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto first = set.image(static_cast<std::size_t>(set.labels[i]));
    EXPECT_TRUE(std::equal(first.begin(), first.end(), set.image(i).begin()));
  }
  const auto t = class_template(s, 2);
  EXPECT_TRUE(std::equal(t.begin(), t.end(), set.image(2).begin()));
}

TEST(Synthesize, DeterministicPerSeed) {
  for (auto kind : {GeneratorKind::blobs, GeneratorKind::textures, GeneratorKind::shifted}) {
    auto s = spec(3, 4, 9);
    s.kind = kind;
    s.jitter = 0.5;
    s.shift = 2;
    EXPECT_EQ(synthesize(s), synthesize(s));
    auto other = s;
    other.seed = 10;
    EXPECT_NE(synthesize(s).pixels, synthesize(other).pixels);
  }
}

TEST(Synthesize, ClassMeansMatchTemplates) {
  auto s = spec(3, 400, 4);
  s.noise_sigma = 0.05;
  const auto set = synthesize(s);
  const std::size_t L = set.image_len();
  for (std::size_t c = 0; c < 3; ++c) {
    const auto t = class_template(s, c);
    std::vector<double> mean(L, 0);
    for (std::size_t i = c; i < set.size(); i += 3)
      for (std::size_t j = 0; j < L; ++j) mean[j] += set.image(i)[j];
    const double bound = s.noise_sigma / std::sqrt(400.0);
    std::size_t within3 = 0;
    for (std::size_t j = 0; j < L; ++j) {
      const double err = std::abs(mean[j] / 400 - t[j]);
      within3 += err <= 3 * bound;
      EXPECT_LE(err, 5 * bound) << "class " << c << " pixel " << j;
    }
    EXPECT_GE(static_cast<double>(within3) / L, 0.99);
  }
}

TEST(Synthesize, ShiftMovesPatternsAndZeroShiftMatchesBlobs) {
  auto blobs = spec(2, 2, 1);
  blobs.noise_sigma = 0;
  auto shifted = blobs;
  shifted.kind = GeneratorKind::shifted;
  EXPECT_EQ(synthesize(blobs).pixels, synthesize(shifted).pixels);
  shifted.shift = 3;
  EXPECT_NE(synthesize(blobs).pixels, synthesize(shifted).pixels);
  EXPECT_EQ(synthesize(shifted).labels, synthesize(blobs).labels);
}

TEST(Split, AllToTrain) {
  const auto set = synthesize(spec(3, 5));
  const auto s = split(set, {1, 0, 0}, 1);
  EXPECT_EQ(s.train.size(), set.size());
  EXPECT_EQ(s.val.size(), 0u);
  EXPECT_EQ(s.test.size(), 0u);
  EXPECT_THROW(split(set, {0.5, 0.1, 0.1}, 1), ConfigError);
}

TEST(Split, PartitionAndStratificationProperties) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = spec(2 + seed % 4, 3 + seed % 11, seed);
    s.image_size = 4;
    const auto set = synthesize(s);
    // tag each sample by its first pixel so the multiset can be compared
    const SplitFractions f{0.6, 0.15, 0.25};
    const auto parts = split(set, f, seed);
    EXPECT_EQ(parts.train.size() + parts.val.size() + parts.test.size(), set.size());
    std::multiset<std::pair<float, std::int64_t>> all, joined;
    for (std::size_t i = 0; i < set.size(); ++i) all.insert({set.image(i)[0], set.labels[i]});
    for (const auto* p : {&parts.train, &parts.val, &parts.test})
      for (std::size_t i = 0; i < p->size(); ++i) joined.insert({p->image(i)[0], p->labels[i]});
    EXPECT_EQ(all, joined);
    const auto counts = set.class_counts();
    const auto tc = parts.train.class_counts(), vc = parts.val.class_counts(), sc = parts.test.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const double n = static_cast<double>(counts[c]);
      EXPECT_LE(std::abs(static_cast<double>(tc[c]) - f.train * n), 1.0);
      EXPECT_LE(std::abs(static_cast<double>(vc[c]) - f.val * n), 1.0);
      EXPECT_LE(std::abs(static_cast<double>(sc[c]) - f.test * n), 1.0);
    }
    const auto again = split(set, f, seed);
    EXPECT_EQ(again.train, parts.train);
    EXPECT_EQ(again.test, parts.test);
  }
}

TEST(Holdout, RelabelsAndPartitions) {
  auto s = spec(10, 3);
  s.image_size = 4;
  const auto set = synthesize(s);
  const std::vector<std::size_t> one{4};
  const auto h1 = holdout_classes(set, one);
  EXPECT_EQ(h1.id.num_classes(), 9u);
  for (auto l : h1.id.labels) EXPECT_LT(l, 9);
  EXPECT_EQ(h1.id.class_names[4], set.class_names[5]);
  for (auto l : h1.ood.labels) EXPECT_EQ(l, 4);
  EXPECT_EQ(h1.id.size() + h1.ood.size(), set.size());

  std::vector<std::size_t> nine{0, 1, 2, 3, 5, 6, 7, 8, 9};
  const auto h9 = holdout_classes(set, nine);
  EXPECT_EQ(h9.id.num_classes(), 1u);
  EXPECT_EQ(h9.id.class_names[0], set.class_names[4]);
  for (auto l : h9.id.labels) EXPECT_EQ(l, 0);

  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i;
  EXPECT_THROW(holdout_classes(set, all), ConfigError);
  EXPECT_THROW(holdout_classes(set, std::vector<std::size_t>{}), ConfigError);
  EXPECT_THROW(holdout_classes(set, std::vector<std::size_t>{10}), ConfigError);
}

TEST(Holdout, RemergeRestoresLabelMultiset) {
  auto s = spec(6, 4, 2);
  s.image_size = 4;
  const auto set = synthesize(s);
  const std::vector<std::size_t> held{1, 3};
  const auto h = holdout_classes(set, held);
  std::map<std::string, std::size_t> name_to_label;
  for (std::size_t c = 0; c < set.num_classes(); ++c) name_to_label[set.class_names[c]] = c;
  std::multiset<std::int64_t> original(set.labels.begin(), set.labels.end()), merged;
  for (auto l : h.id.labels) merged.insert(static_cast<std::int64_t>(name_to_label.at(h.id.class_names[l])));
  for (auto l : h.ood.labels) merged.insert(l);
  EXPECT_EQ(merged, original);
  std::set<std::pair<float, float>> id_keys;
  for (std::size_t i = 0; i < h.id.size(); ++i) id_keys.insert({h.id.image(i)[0], h.id.image(i)[1]});
  for (std::size_t i = 0; i < h.ood.size(); ++i) EXPECT_FALSE(id_keys.count({h.ood.image(i)[0], h.ood.image(i)[1]}));
}
