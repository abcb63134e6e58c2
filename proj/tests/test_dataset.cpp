#include "adv/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "adv/io.hpp"

using adv::data::GenSpec;
using adv::data::Scene;

namespace {

bool scenes_identical(const Scene& a, const Scene& b) {
  if (a.label_map != b.label_map) return false;
  if (a.boxes.size() != b.boxes.size()) return false;
  for (std::size_t i = 0; i < a.boxes.size(); ++i) {
    const auto& x = a.boxes[i];
    const auto& y = b.boxes[i];
    if (x.cls != y.cls || x.x0 != y.x0 || x.y0 != y.y0 || x.x1 != y.x1 || x.y1 != y.y1)
      return false;
  }
  return a.image.size() == b.image.size() &&
         std::memcmp(a.image.data(), b.image.data(), a.image.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(GenerateScene, DeterministicForSeedAndSpec) {
  GenSpec spec;
  for (std::uint64_t seed : {0ull, 42ull, 1234567ull}) {
    Scene a = adv::data::generate_scene(seed, spec);
    Scene b = adv::data::generate_scene(seed, spec);
    EXPECT_TRUE(scenes_identical(a, b)) << "seed " << seed;
  }
}

TEST(GenerateScene, EmptyShapeRangeGivesBackgroundOnly) {
  GenSpec spec;
  spec.min_shapes = 0;
  spec.max_shapes = 0;
  Scene s = adv::data::generate_scene(7, spec);
  EXPECT_TRUE(s.boxes.empty());
  for (int label : s.label_map) EXPECT_EQ(label, 0);
}

TEST(GenerateScene, Seed42HistogramFixture) {
  // pixel counts per class, frozen from a reference render
  Scene s = adv::data::generate_scene(42, GenSpec{});
  std::vector<long long> hist(s.classes, 0);
  for (int label : s.label_map) ++hist[label];
  const std::vector<long long> expected = {3634, 197, 0, 265, 0};
  ASSERT_EQ(hist.size(), expected.size());
  for (std::size_t c = 0; c < hist.size(); ++c) EXPECT_EQ(hist[c], expected[c]) << "class " << c;
}

TEST(GenerateScene, LabelsMatchGeometryOn100Scenes) {
  GenSpec spec;
  for (std::uint64_t seed = 500; seed < 600; ++seed) {
    Scene s = adv::data::generate_scene(seed, spec);
    // boxes valid and class-consistent
    for (const auto& b : s.boxes) {
      ASSERT_GT(b.cls, 0);
      ASSERT_LT(b.cls, s.classes);
      ASSERT_LE(0, b.x0);
      ASSERT_LT(b.x0, b.x1);
      ASSERT_LE(b.x1, s.width);
      ASSERT_LE(0, b.y0);
      ASSERT_LT(b.y0, b.y1);
      ASSERT_LE(b.y1, s.height);
      bool has_pixel = false;
      for (int y = b.y0; y < b.y1 && !has_pixel; ++y)
        for (int x = b.x0; x < b.x1 && !has_pixel; ++x)
          has_pixel = s.label_map[static_cast<std::size_t>(y) * s.width + x] == b.cls;
      EXPECT_TRUE(has_pixel) << "box of class " << b.cls << " contains no pixel, seed "
                             << seed;
    }
    // every foreground pixel sits inside exactly one box, of its class
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const int cls = s.label_map[static_cast<std::size_t>(y) * s.width + x];
        if (cls == 0) continue;
        int containing = 0;
        for (const auto& b : s.boxes)
          if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) {
            ++containing;
            EXPECT_EQ(b.cls, cls);
          }
        EXPECT_EQ(containing, 1) << "pixel " << x << "," << y << " seed " << seed;
      }
  }
}

TEST(GenerateScene, IntensitiesAreBytes) {
  Scene s = adv::data::generate_scene(9, GenSpec{});
  for (std::size_t i = 0; i < s.image.size(); ++i) {
    EXPECT_GE(s.image[i], 0.0);
    EXPECT_LE(s.image[i], 255.0);
    EXPECT_EQ(s.image[i], std::floor(s.image[i]));
  }
}

TEST(GenerateScene, InfeasibleSpecRejected) {
  GenSpec spec;
  spec.min_size = 60;
  spec.max_size = 62;
  spec.min_shapes = 3;
  spec.max_shapes = 3;
  EXPECT_THROW(adv::data::generate_scene(1, spec), std::runtime_error);
}

TEST(GenerateScene, BadSpecRejected) {
  GenSpec spec;
  spec.classes = 2;
  EXPECT_THROW(adv::data::generate_scene(1, spec), std::invalid_argument);
}

TEST(BuildSplit, DistinctSeedsAndDeterminism) {
  GenSpec spec;
  auto [train, val] = adv::data::build_split(5, 2, 1, spec);
  ASSERT_EQ(train.size(), 2u);
  ASSERT_EQ(val.size(), 1u);
  std::set<std::uint64_t> seeds{train[0].seed, train[1].seed, val[0].seed};
  EXPECT_EQ(seeds.size(), 3u);

  auto [train2, val2] = adv::data::build_split(5, 2, 1, spec);
  EXPECT_TRUE(scenes_identical(train[0], train2[0]));
  EXPECT_TRUE(scenes_identical(val[0], val2[0]));
}

TEST(BuildSplit, DifferentBaseSeedsShareNoScenes) {
  GenSpec spec;
  auto [train_a, val_a] = adv::data::build_split(1, 3, 2, spec);
  auto [train_b, val_b] = adv::data::build_split(2, 3, 2, spec);
  std::set<std::uint64_t> a, b;
  for (const Scene& s : train_a) a.insert(s.seed);
  for (const Scene& s : val_a) a.insert(s.seed);
  for (const Scene& s : train_b) b.insert(s.seed);
  for (const Scene& s : val_b) b.insert(s.seed);
  for (std::uint64_t seed : a) EXPECT_EQ(b.count(seed), 0u);
}

TEST(BuildSplit, RejectsEmptySplits) {
  EXPECT_THROW(adv::data::build_split(0, 0, 1, GenSpec{}), std::invalid_argument);
}

TEST(ScenePersistence, RoundTripIsExact) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "adv_dataset_test";
  fs::create_directories(dir);
  Scene s = adv::data::generate_scene(42, GenSpec{});
  adv::data::save_scene(s, dir, "roundtrip");
  Scene r = adv::data::load_scene(dir, "roundtrip", s.classes, s.seed);
  EXPECT_TRUE(scenes_identical(s, r));
  fs::remove_all(dir);
}
