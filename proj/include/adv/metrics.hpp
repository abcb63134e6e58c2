#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adv/dataset.hpp"
#include "adv/models.hpp"
#include "adv/tensor.hpp"

namespace adv::metrics {

// Mean intersection-over-union in percent, pooled over the dataset. Classes
// absent from both prediction and truth are excluded from the mean.
double miou(const std::vector<std::vector<int>>& pred,
            const std::vector<std::vector<int>>& truth, int classes);

// Mean average precision in percent: per class, detections ranked by score,
// greedily matched against unmatched ground truth at the IOU threshold, and
// the all-point interpolated area under the precision-recall curve taken.
// Classes with no ground truth are excluded from the mean.
double map_score(const std::vector<std::vector<models::Detection>>& detections,
                 const std::vector<std::vector<data::SceneBox>>& truths,
                 double iou_thresh = 0.5, int classes = 0);

// Root-mean-square per-pixel norm of the perturbation with intensities
// normalized to [0, 1]. Accumulation over pixels is done in sorted value
// order so the result is invariant under pixel permutations.
double perceptibility(const Tensor& r);

// One random row permutation and one independent random column permutation,
// the same across channels. Preserves the value multiset exactly.
Tensor permute_perturbation(const Tensor& r, std::uint64_t seed);
Tensor permute_with(const Tensor& r, const std::vector<int>& row_perm,
                    const std::vector<int>& col_perm);

struct EvalReport {
  std::string metric;  // "miou" or "map"
  std::string model_tag;
  double clean = 0.0;
  double attacked = 0.0;
  double permuted = 0.0;  // mean of three permutations
  std::vector<std::pair<std::uint64_t, double>> clean_per_scene;
  std::vector<std::pair<std::uint64_t, double>> attacked_per_scene;
};

// CSV rows "metric,model,condition,value"; aggregate conditions first, then
// the per-scene breakdown as "orig:<seed>" / "adv:<seed>".
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace adv::metrics
