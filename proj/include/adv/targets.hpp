#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adv/dataset.hpp"
#include "adv/models.hpp"

namespace adv::targets {

// Fixed-point-free permutation of the foreground classes {1, ..., C-1};
// background always maps to itself and is never attacked.
struct ClassPermutation {
  std::vector<int> map;  // size C, map[0] == 0, map[c] != c for c >= 1
  int operator()(int cls) const { return map[cls]; }
};

// Uniform over derangements of the foreground classes (rejection sampling).
// Requires C >= 3 so at least two foreground classes exist.
ClassPermutation sample_permutation(int classes, std::uint64_t seed);

struct PixelCoord {
  int x = 0, y = 0;
};

// The recognition targets of one scene with original and adversarial labels.
struct TargetSet {
  std::string task;  // "seg", "det" or "mask"
  std::vector<PixelCoord> pixels;    // seg / mask tasks
  std::vector<models::Box> boxes;    // det task
  std::vector<int> original_labels;
  std::vector<int> adversarial_labels;
  std::uint64_t scene_seed = 0;
  std::string model_tag;
  double nms_iou = 0.0;  // det only
  std::size_t size() const { return original_labels.size(); }
  bool empty() const { return original_labels.empty(); }
};

// All non-background pixels, relabelled through the permutation.
TargetSet build_seg_targets(const data::Scene& scene, const ClassPermutation& pi);

// Positive proposals: IOU with some ground-truth box above 0.1 and
// softmax-normalized score of that box's class above 0.1; bound to the:
// ground truth of maximal IOU when several qualify.
TargetSet build_det_targets(const data::Scene& scene, const models::DetModel& model,
                            double nms_iou, const ClassPermutation& pi);

// Every pixel whose desired class differs from the scene label; adversarial
// labels come directly from the desired map instead of a permutation.
TargetSet build_mask_targets(const data::Scene& scene, const std::vector<int>& desired_mask);

// Line-oriented text: header "task=<t> n=<n> nms_iou=<v>", then one line per
// target ("px y x l l'" or "box x0 y0 x1 y1 l l'").
void save_targets(const TargetSet& t, const std::filesystem::path& path);
TargetSet load_targets(const std::filesystem::path& path);

}  // namespace adv::targets
