#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adv/dataset.hpp"
#include "adv/tape.hpp"
#include "adv/tensor.hpp"

namespace adv::models {

// Half-open pixel box with an optional score.
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double score = 0.0;
};

double iou(const Box& a, const Box& b);

// Greedy suppression: keep a box iff its IOU with every already kept box is
// <= iou_thresh. Boxes are ordered by (score desc, x0, y0, x1, y1 asc) and
// the kept boxes are returned in that order.
std::vector<Box> nms(std::vector<Box> boxes, double iou_thresh);

struct Conv {
  Tensor w;  // out_ch x in_ch x k x k
  Tensor b;  // out_ch
};

// Pixel-wise labeller: conv3x3 -> relu -> conv3x3 -> relu -> conv1x1.
// Channel widths depend on the arch tag ("seg-a": 16/32, "seg-b": 24/48).
struct SegModel {
  std::string arch = "seg-a";
  int classes = 5;
  int height = 64, width = 64;
  std::uint64_t train_seed = 0;
  std::uint64_t data_seed = 0;
  std::array<double, 3> channel_mean{0.0, 0.0, 0.0};
  Conv c1, c2, c3;
  std::string tag() const;
};

struct AnchorSpec {
  int stride = 4;
  std::vector<int> sides = {12, 24, 40};
};

// Proposal-based detector: shared conv backbone, a 1x1 two-way objectness
// head over the feature map, and a linear classification head over box
// mean-pooled features. No box regression; proposals are grid anchors.
struct DetModel {
  std::string arch = "det-a";
  int classes = 5;
  int height = 64, width = 64;
  std::uint64_t train_seed = 0;
  std::uint64_t data_seed = 0;
  std::array<double, 3> channel_mean{0.0, 0.0, 0.0};
  Conv c1, c2;   // backbone
  Conv obj;      // 1x1, 2 outputs
  Tensor cls_w;  // backbone_channels x classes
  Tensor cls_b;  // classes
  AnchorSpec anchors;
  std::string tag() const;
};

// Network input space: intensities minus the per-channel training mean.
Tensor preprocess(const std::array<double, 3>& channel_mean, const Tensor& raw);

std::vector<double> softmax(std::span<const double> scores);

struct SegForward {
  Tape tape;
  NodeId input = -1;
  NodeId scores = -1;  // C x H x W, pre-normalization
};
SegForward seg_forward(const SegModel& model, const Tensor& x);
Tensor seg_scores(const SegModel& model, const Tensor& x);
// Argmax labels from a raw [0,255] image (ties toward the smaller class).
std::vector<int> seg_predict(const SegModel& model, const Tensor& raw);

// Anchor boxes on the stride grid, clipped to image bounds.
std::vector<Box> anchor_grid(const DetModel& model);
// Per-position probability that the pixel belongs to an object (H*W values).
std::vector<double> objectness_map(const DetModel& model, const Tensor& x);
// Anchors whose center objectness exceeds 0.5, suppressed at nms_iou,
// ordered by descending score.
std::vector<Box> propose(const DetModel& model, const Tensor& x, double nms_iou);

struct BoxScores {
  Tape tape;
  NodeId input = -1;
  NodeId scores = -1;  // N x C
};
BoxScores classify_boxes(const DetModel& model, const Tensor& x, std::span<const Box> boxes);
Tensor box_class_scores(const DetModel& model, const Tensor& x, std::span<const Box> boxes);

struct Detection {
  Box box;
  int cls = 0;
  double score = 0.0;
};

struct DetectConfig {
  double propose_iou = 0.70;
  double final_nms_iou = 0.30;
  int contrast_ring = 4;  // width of the outside band used for box contrast
};

// Full inference on a raw image: propose, classify, score each box by class
// probability times objectness contrast (mean objectness inside the box minus
// the band just outside it), then per-class suppression.
std::vector<Detection> detect(const DetModel& model, const Tensor& raw,
                              const DetectConfig& cfg = {});

struct TrainConfig {
  int epochs = 30;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

SegModel train_seg(const std::vector<data::Scene>& train, int classes,
                   const std::string& arch, const TrainConfig& cfg,
                   std::uint64_t data_seed);
DetModel train_det(const std::vector<data::Scene>& train, int classes,
                   const std::string& arch, const TrainConfig& cfg,
                   std::uint64_t data_seed);

// Model files: one text header line "arch=<tag> C=<n> H=<n> W=<n> seed=<n>
// data=<n>", then the binary parameter stream.
void save_seg_model(const SegModel& model, const std::filesystem::path& path);
void save_det_model(const DetModel& model, const std::filesystem::path& path);
SegModel load_seg_model(const std::filesystem::path& path);
DetModel load_det_model(const std::filesystem::path& path);
// "seg" or "det" from the header line.
std::string model_kind(const std::filesystem::path& path);

}  // namespace adv::models
