#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "adv/tensor.hpp"

namespace adv::data {

// Generation parameters. Class 0 is background; foreground classes are the
// shape kinds, at most four (circle, square, triangle, cross).
struct GenSpec {
  int height = 64;
  int width = 64;
  int classes = 5;
  int min_shapes = 1;
  int max_shapes = 3;
  int min_size = 12;   // bounding-box side of a shape, pixels
  int max_size = 18;
  int noise_amplitude = 4;  // background intensity noise, +-
  int color_jitter = 1;     // per-scene foreground color jitter, +-
};

struct SceneBox {
  int cls = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open pixel coordinates
};

struct Scene {
  Tensor image;               // 3 x H x W, integer intensities in [0, 255]
  std::vector<int> label_map;  // H * W class ids, 0 = background
  std::vector<SceneBox> boxes;
  int height = 0, width = 0, classes = 0;
  std::uint64_t seed = 0;
};

// Deterministic function of (seed, spec). Rasterization is integer-only so
// identical seeds produce identical scenes everywhere. Throws if the spec is
// infeasible (shapes cannot be placed after bounded retries).
Scene generate_scene(std::uint64_t seed, const GenSpec& spec);

// Disjoint seed ranges derived from base_seed; different base seeds give
// datasets with no scene in common.
std::pair<std::vector<Scene>, std::vector<Scene>> build_split(std::uint64_t base_seed,
                                                              int n_train, int n_val,
                                                              const GenSpec& spec);
std::uint64_t scene_seed(std::uint64_t base_seed, int index);

// Persistence: <stem>.ppm (image), <stem>.pgm (labels) and <stem>.boxes.txt
// with one "class x_min y_min x_max y_max" line per box.
void save_scene(const Scene& scene, const std::filesystem::path& dir,
                const std::string& stem);
Scene load_scene(const std::filesystem::path& dir, const std::string& stem,
                 int classes, std::uint64_t seed);

}  // namespace adv::data
