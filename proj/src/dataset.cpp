#include "adv/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "adv/io.hpp"
#include "adv/rng.hpp"

namespace adv::data {

namespace {

constexpr int kShapeKinds = 4;  // circle, square, triangle, cross

// Foreground palette sits well above the background level while the classes
// stay mutually close (pairwise-equidistant tetrahedron in RGB), keeping
// recognition margins small in input space.
const int kBaseColors[kShapeKinds][3] = {
    {133, 133, 133},  // class 1, circle
    {133, 127, 127},  // class 2, square
    {127, 133, 127},  // class 3, triangle
    {127, 127, 133},  // class 4, cross
};
constexpr int kBackgroundLevel = 130;
constexpr int kPlacementRetries = 200;
constexpr int kLayoutAttempts = 50;
constexpr int kBoxGap = 2;  // min spacing between shape bounding boxes

struct PlacedShape {
  int cls = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // tight box, filled in by rasterize
};

int clamp_byte(int v) { return v < 0 ? 0 : (v > 255 ? 255 : v); }

// Rasterizes shape `kind` with bounding square of side s at (x0, y0) into
// the label map, and records the tight pixel box. Integer arithmetic only.
PlacedShape rasterize(int kind, int cls, int x0, int y0, int s, std::vector<int>& labels,
                      int width) {
  PlacedShape placed;
  placed.cls = cls;
  int minx = x0 + s, maxx = x0 - 1, miny = y0 + s, maxy = y0 - 1;
  auto put = [&](int x, int y) {
    labels[static_cast<std::size_t>(y) * width + x] = cls;
    minx = std::min(minx, x);
    maxx = std::max(maxx, x);
    miny = std::min(miny, y);
    maxy = std::max(maxy, y);
  };
  switch (kind) {
    case 0: {  // circle
      const int r = (s - 1) / 2;
      const int cx = x0 + r, cy = y0 + r;
      for (int y = y0; y < y0 + 2 * r + 1; ++y)
        for (int x = x0; x < x0 + 2 * r + 1; ++x) {
          const int dx = x - cx, dy = y - cy;
          if (dx * dx + dy * dy <= r * r) put(x, y);
        }
      break;
    }
    case 1: {  // square
      for (int y = y0; y < y0 + s; ++y)
        for (int x = x0; x < x0 + s; ++x) put(x, y);
      break;
    }
    case 2: {  // upright isoceles triangle, 1-pixel apex
      const int half = (s - 1) / 2;
      const int cx = x0 + half;
      for (int i = 0; i < s; ++i) {
        const int hw = (i * half) / (s - 1);
        for (int x = cx - hw; x <= cx + hw; ++x) put(x, y0 + i);
      }
      break;
    }
    case 3: {  // cross: vertical and horizontal bars
      int t = std::max(3, s / 3);
      if (t % 2 == 0) ++t;
      const int cx = x0 + s / 2, cy = y0 + s / 2;
      for (int y = y0; y < y0 + s; ++y)
        for (int x = cx - t / 2; x <= cx + t / 2; ++x) put(x, y);
      for (int y = cy - t / 2; y <= cy + t / 2; ++y)
        for (int x = x0; x < x0 + s; ++x) put(x, y);
      break;
    }
    default:
      throw std::logic_error("unknown shape kind");
  }
  placed.x0 = minx;
  placed.y0 = miny;
  placed.x1 = maxx + 1;
  placed.y1 = maxy + 1;
  return placed;
}

bool boxes_clear(const std::vector<PlacedShape>& placed, int x0, int y0, int x1, int y1) {
  for (const PlacedShape& p : placed) {
    if (x0 < p.x1 + kBoxGap && p.x0 < x1 + kBoxGap && y0 < p.y1 + kBoxGap &&
        p.y0 < y1 + kBoxGap)
      return false;
  }
  return true;
}

bool try_layout(std::uint64_t stream_seed, const GenSpec& spec, std::vector<int>& labels,
                std::vector<PlacedShape>& shapes, int jitter[kShapeKinds][3]) {
  Rng rng(stream_seed);
  const int kinds = std::min(kShapeKinds, spec.classes - 1);
  for (int k = 0; k < kShapeKinds; ++k)
    for (int c = 0; c < 3; ++c)
      jitter[k][c] = rng.next_int(-spec.color_jitter, spec.color_jitter);

  std::fill(labels.begin(), labels.end(), 0);
  shapes.clear();
  const int count = rng.next_int(spec.min_shapes, spec.max_shapes);
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      const int kind = rng.next_int(0, kinds - 1);
      int s = rng.next_int(spec.min_size, spec.max_size);
      if ((kind == 0 || kind == 2) && s % 2 == 0) s = std::max(spec.min_size, s - 1);
      if (s + 2 > spec.width || s + 2 > spec.height) continue;
      const int x0 = rng.next_int(1, spec.width - s - 1);
      const int y0 = rng.next_int(1, spec.height - s - 1);
      if (!boxes_clear(shapes, x0, y0, x0 + s, y0 + s)) continue;
      shapes.push_back(rasterize(kind, kind + 1, x0, y0, s, labels, spec.width));
      placed = true;
    }
    if (!placed) return false;
  }
  return true;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const GenSpec& spec) {
  if (spec.classes < 3) throw std::invalid_argument("generate_scene: classes must be >= 3");
  if (spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes)
    throw std::invalid_argument("generate_scene: bad shape count range");
  if (spec.min_size < 5 || spec.max_size < spec.min_size)
    throw std::invalid_argument("generate_scene: bad shape size range");

  Scene scene;
  scene.height = spec.height;
  scene.width = spec.width;
  scene.classes = spec.classes;
  scene.seed = seed;
  scene.label_map.assign(static_cast<std::size_t>(spec.height) * spec.width, 0);

  std::vector<PlacedShape> shapes;
  int jitter[kShapeKinds][3];
  bool ok = false;
  for (int attempt = 0; attempt < kLayoutAttempts && !ok; ++attempt)
    ok = try_layout(Rng::derive(seed, 0x10000u + attempt), spec, scene.label_map, shapes,
                    jitter);
  if (!ok)
    throw std::runtime_error(
        "generate_scene: could not place shapes for seed " + std::to_string(seed) +
        " (size range " + std::to_string(spec.min_size) + ".." +
        std::to_string(spec.max_size) + " on " + std::to_string(spec.width) + "x" +
        std::to_string(spec.height) + ")");

  // Flat per-class colors over a noisy background.
  scene.image = Tensor({3, static_cast<std::size_t>(spec.height),
                        static_cast<std::size_t>(spec.width)});
  Rng noise(Rng::derive(seed, 0xB6));
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const int cls = scene.label_map[static_cast<std::size_t>(y) * spec.width + x];
      for (int c = 0; c < 3; ++c) {
        int v;
        if (cls == 0) {
          v = kBackgroundLevel + noise.next_int(-spec.noise_amplitude, spec.noise_amplitude);
        } else {
          // noise stream advances uniformly so layout does not shift it
          noise.next_u64();
          v = kBaseColors[cls - 1][c] + jitter[cls - 1][c];
        }
        scene.image.at(c, y, x) = clamp_byte(v);
      }
    }

  for (const PlacedShape& p : shapes)
    scene.boxes.push_back({p.cls, p.x0, p.y0, p.x1, p.y1});
  return scene;
}

std::uint64_t scene_seed(std::uint64_t base_seed, int index) {
  return (base_seed << 32) + static_cast<std::uint64_t>(index);
}

std::pair<std::vector<Scene>, std::vector<Scene>> build_split(std::uint64_t base_seed,
                                                              int n_train, int n_val,
                                                              const GenSpec& spec) {
  if (n_train <= 0 || n_val <= 0)
    throw std::invalid_argument("build_split: split sizes must be positive");
  std::vector<Scene> train, val;
  train.reserve(n_train);
  val.reserve(n_val);
  for (int i = 0; i < n_train; ++i) train.push_back(generate_scene(scene_seed(base_seed, i), spec));
  for (int i = 0; i < n_val; ++i)
    val.push_back(generate_scene(scene_seed(base_seed, n_train + i), spec));
  return {std::move(train), std::move(val)};
}

void save_scene(const Scene& scene, const std::filesystem::path& dir,
                const std::string& stem) {
  io::write_ppm(dir / (stem + ".ppm"), scene.image);
  io::write_pgm(dir / (stem + ".pgm"), scene.label_map, scene.height, scene.width);
  std::ostringstream boxes;
  for (const SceneBox& b : scene.boxes)
    boxes << b.cls << " " << b.x0 << " " << b.y0 << " " << b.x1 << " " << b.y1 << "\n";
  io::write_text_file(dir / (stem + ".boxes.txt"), boxes.str());
}

Scene load_scene(const std::filesystem::path& dir, const std::string& stem, int classes,
                 std::uint64_t seed) {
  Scene scene;
  scene.image = io::read_ppm(dir / (stem + ".ppm"));
  scene.label_map = io::read_pgm(dir / (stem + ".pgm"), scene.height, scene.width);
  scene.classes = classes;
  scene.seed = seed;
  std::istringstream boxes(io::read_text_file(dir / (stem + ".boxes.txt")));
  SceneBox b;
  while (boxes >> b.cls >> b.x0 >> b.y0 >> b.x1 >> b.y1) scene.boxes.push_back(b);
  return scene;
}

}  // namespace adv::data
