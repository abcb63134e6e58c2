#include "adv/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "adv/io.hpp"
#include "adv/rng.hpp"

namespace adv::models {

namespace {

// Network input scaling after mean subtraction. Chosen near the dynamic
// range of the scene palette so features land at unit order.
constexpr double kInputScale = 1.0 / 32.0;

struct ArchDims {
  int c1 = 16;
  int c2 = 32;
  AnchorSpec anchors;
};

ArchDims arch_dims(const std::string& arch) {
  if (arch == "seg-a") return {16, 32, {}};
  if (arch == "seg-b") return {24, 48, {}};
  if (arch == "det-a") return {16, 32, {4, {12, 16, 24, 40}}};
  if (arch == "det-b") return {24, 48, {4, {12, 16, 24, 40}}};
  if (arch == "det-c") return {20, 40, {4, {12, 18, 28, 44}}};
  throw std::invalid_argument("unknown architecture tag '" + arch + "'");
}

Tensor uniform_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_double(-0.1, 0.1);
  return t;
}

Conv init_conv(std::size_t out_ch, std::size_t in_ch, std::size_t k, Rng& rng) {
  Conv c;
  c.w = uniform_tensor({out_ch, in_ch, k, k}, rng);
  c.b = uniform_tensor({out_ch}, rng);
  return c;
}

std::array<double, 3> dataset_channel_mean(const std::vector<data::Scene>& scenes) {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::size_t pixels = 0;
  for (const data::Scene& s : scenes) {
    const std::size_t plane = s.image.extent(1) * s.image.extent(2);
    for (int c = 0; c < 3; ++c) {
      const double* p = s.image.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) mean[c] += p[i];
    }
    pixels += plane;
  }
  if (pixels == 0) throw std::invalid_argument("channel mean of empty dataset");
  for (double& m : mean) m /= static_cast<double>(pixels);
  return mean;
}

void sgd_step(Tensor& param, const Tensor& grad, double lr) {
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

int argmax_class(const double* scores, int classes) {
  int best = 0;
  for (int c = 1; c < classes; ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

Rect box_to_rect(const Box& b) { return Rect{b.x0, b.y0, b.x1, b.y1}; }

}  // namespace

double iou(const Box& a, const Box& b) {
  const long long ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const long long iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const long long inter = ix * iy;
  const long long area_a = static_cast<long long>(a.x1 - a.x0) * (a.y1 - a.y0);
  const long long area_b = static_cast<long long>(b.x1 - b.x0) * (b.y1 - b.y0);
  const long long uni = area_a + area_b - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::vector<Box> nms(std::vector<Box> boxes, double iou_thresh) {
  std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.x0 != b.x0) return a.x0 < b.x0;
    if (a.y0 != b.y0) return a.y0 < b.y0;
    if (a.x1 != b.x1) return a.x1 < b.x1;
    return a.y1 < b.y1;
  });
  std::vector<Box> kept;
  for (const Box& cand : boxes) {
    bool clear = true;
    for (const Box& k : kept)
      if (iou(cand, k) > iou_thresh) {
        clear = false;
        break;
      }
    if (clear) kept.push_back(cand);
  }
  return kept;
}

std::string SegModel::tag() const {
  return arch + "-s" + std::to_string(train_seed) + "-d" + std::to_string(data_seed);
}

std::string DetModel::tag() const {
  return arch + "-s" + std::to_string(train_seed) + "-d" + std::to_string(data_seed);
}

Tensor preprocess(const std::array<double, 3>& channel_mean, const Tensor& raw) {
  if (raw.rank() != 3 || raw.extent(0) != 3)
    throw std::invalid_argument("preprocess: image must be 3 x H x W, got " +
                                raw.shape_str());
  Tensor x = raw;
  const std::size_t plane = x.extent(1) * x.extent(2);
  for (int c = 0; c < 3; ++c) {
    double* p = x.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] -= channel_mean[c];
  }
  return x;
}

std::vector<double> softmax(std::span<const double> scores) {
  double hi = scores[0];
  for (double s : scores) hi = std::max(hi, s);
  std::vector<double> p(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - hi);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

namespace {

// Shared backbone builder: scale to ~unit range, two 3x3 conv+relu stages.
NodeId backbone(Tape& tape, NodeId input, const Conv& c1, const Conv& c2) {
  NodeId h = tape.scale(input, kInputScale);
  h = tape.relu(tape.bias(tape.conv2d(h, tape.leaf(c1.w)), tape.leaf(c1.b)));
  h = tape.relu(tape.bias(tape.conv2d(h, tape.leaf(c2.w)), tape.leaf(c2.b)));
  return h;
}

void check_image_shape(const Tensor& x, int height, int width, const char* where) {
  if (x.rank() != 3 || x.extent(0) != 3 || x.extent(1) != static_cast<std::size_t>(height) ||
      x.extent(2) != static_cast<std::size_t>(width))
    throw std::invalid_argument(std::string(where) + ": expected input 3x" +
                                std::to_string(height) + "x" + std::to_string(width) +
                                ", got " + x.shape_str());
}

}  // namespace

SegForward seg_forward(const SegModel& model, const Tensor& x) {
  check_image_shape(x, model.height, model.width, "seg_forward");
  SegForward f;
  f.input = f.tape.leaf(x);
  NodeId h = backbone(f.tape, f.input, model.c1, model.c2);
  f.scores = f.tape.bias(f.tape.conv2d(h, f.tape.leaf(model.c3.w)), f.tape.leaf(model.c3.b));
  return f;
}

Tensor seg_scores(const SegModel& model, const Tensor& x) {
  SegForward f = seg_forward(model, x);
  return f.tape.value(f.scores);
}

std::vector<int> seg_predict(const SegModel& model, const Tensor& raw) {
  Tensor scores = seg_scores(model, preprocess(model.channel_mean, raw));
  const std::size_t plane = scores.extent(1) * scores.extent(2);
  const int classes = static_cast<int>(scores.extent(0));
  std::vector<int> labels(plane);
  std::vector<double> buf(classes);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < classes; ++c) buf[c] = scores[c * plane + i];
    labels[i] = argmax_class(buf.data(), classes);
  }
  return labels;
}

std::vector<Box> anchor_grid(const DetModel& model) {
  std::vector<Box> anchors;
  const int stride = model.anchors.stride;
  for (int cy = stride / 2; cy < model.height; cy += stride)
    for (int cx = stride / 2; cx < model.width; cx += stride)
      for (int side : model.anchors.sides) {
        Box b;
        b.x0 = std::max(0, cx - side / 2);
        b.y0 = std::max(0, cy - side / 2);
        b.x1 = std::min(model.width, cx - side / 2 + side);
        b.y1 = std::min(model.height, cy - side / 2 + side);
        if (b.x0 < b.x1 && b.y0 < b.y1) anchors.push_back(b);
      }
  return anchors;
}

namespace {

NodeId objectness_node(Tape& tape, const DetModel& model, NodeId input) {
  NodeId feat = backbone(tape, input, model.c1, model.c2);
  return tape.bias(tape.conv2d(feat, tape.leaf(model.obj.w)), tape.leaf(model.obj.b));
}

std::vector<double> objectness_from_scores(const Tensor& obj) {
  const std::size_t plane = obj.extent(1) * obj.extent(2);
  std::vector<double> p(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    // p(object) from the two-way scores
    const double s0 = obj[i], s1 = obj[plane + i];
    p[i] = 1.0 / (1.0 + std::exp(s0 - s1));
  }
  return p;
}

std::vector<Box> gate_anchors(const DetModel& model, const std::vector<double>& pobj) {
  std::vector<Box> kept;
  const int stride = model.anchors.stride;
  for (int cy = stride / 2; cy < model.height; cy += stride)
    for (int cx = stride / 2; cx < model.width; cx += stride) {
      const double p = pobj[static_cast<std::size_t>(cy) * model.width + cx];
      if (p <= 0.5) continue;
      for (int side : model.anchors.sides) {
        Box b;
        b.x0 = std::max(0, cx - side / 2);
        b.y0 = std::max(0, cy - side / 2);
        b.x1 = std::min(model.width, cx - side / 2 + side);
        b.y1 = std::min(model.height, cy - side / 2 + side);
        b.score = p;
        if (b.x0 < b.x1 && b.y0 < b.y1) kept.push_back(b);
      }
    }
  return kept;
}

}  // namespace

std::vector<double> objectness_map(const DetModel& model, const Tensor& x) {
  check_image_shape(x, model.height, model.width, "objectness_map");
  Tape tape;
  NodeId input = tape.leaf(x);
  NodeId obj = objectness_node(tape, model, input);
  return objectness_from_scores(tape.value(obj));
}

std::vector<Box> propose(const DetModel& model, const Tensor& x, double nms_iou) {
  if (!(nms_iou > 0.0 && nms_iou <= 1.0))
    throw std::invalid_argument("propose: nms_iou must be in (0, 1]");
  return nms(gate_anchors(model, objectness_map(model, x)), nms_iou);
}

BoxScores classify_boxes(const DetModel& model, const Tensor& x, std::span<const Box> boxes) {
  check_image_shape(x, model.height, model.width, "classify_boxes");
  BoxScores out;
  if (boxes.empty()) return out;
  out.input = out.tape.leaf(x);
  NodeId feat = backbone(out.tape, out.input, model.c1, model.c2);
  std::vector<NodeId> pooled;
  pooled.reserve(boxes.size());
  for (const Box& b : boxes) {
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > model.width || b.y1 > model.height ||
        b.x0 >= b.x1 || b.y0 >= b.y1)
      throw std::invalid_argument("classify_boxes: box outside image bounds");
    pooled.push_back(out.tape.box_mean_pool(feat, box_to_rect(b)));
  }
  NodeId features = out.tape.concat_rows(pooled);
  out.scores = out.tape.bias(out.tape.matmul(features, out.tape.leaf(model.cls_w)),
                             out.tape.leaf(model.cls_b));
  return out;
}

Tensor box_class_scores(const DetModel& model, const Tensor& x, std::span<const Box> boxes) {
  if (boxes.empty()) return Tensor();
  BoxScores s = classify_boxes(model, x, boxes);
  return s.tape.value(s.scores);
}

std::vector<Detection> detect(const DetModel& model, const Tensor& raw,
                              const DetectConfig& cfg) {
  const Tensor x = preprocess(model.channel_mean, raw);
  const std::vector<double> pobj = objectness_map(model, x);
  std::vector<Box> props = nms(gate_anchors(model, pobj), cfg.propose_iou);
  if (props.empty()) return {};
  const Tensor scores = box_class_scores(model, x, props);
  const int classes = static_cast<int>(scores.extent(1));

  // Summed-area table over the objectness map for box contrast.
  const int h = model.height, w = model.width;
  std::vector<double> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x2 = 0; x2 < w; ++x2)
      sat[static_cast<std::size_t>(y + 1) * (w + 1) + (x2 + 1)] =
          pobj[static_cast<std::size_t>(y) * w + x2] +
          sat[static_cast<std::size_t>(y) * (w + 1) + (x2 + 1)] +
          sat[static_cast<std::size_t>(y + 1) * (w + 1) + x2] -
          sat[static_cast<std::size_t>(y) * (w + 1) + x2];
  auto box_sum = [&](int x0, int y0, int x1, int y1) {
    return sat[static_cast<std::size_t>(y1) * (w + 1) + x1] -
           sat[static_cast<std::size_t>(y0) * (w + 1) + x1] -
           sat[static_cast<std::size_t>(y1) * (w + 1) + x0] +
           sat[static_cast<std::size_t>(y0) * (w + 1) + x0];
  };

  std::vector<Detection> dets;
  std::vector<double> row(classes);
  for (std::size_t i = 0; i < props.size(); ++i) {
    for (int c = 0; c < classes; ++c) row[c] = scores.at(i, c);
    const std::vector<double> p = softmax(row);
    const int cls = argmax_class(p.data(), classes);
    if (cls == 0) continue;
    const Box& b = props[i];
    const double inside = box_sum(b.x0, b.y0, b.x1, b.y1) / static_cast<double>(
                              (b.x1 - b.x0) * (b.y1 - b.y0));
    const int rx0 = std::max(0, b.x0 - cfg.contrast_ring);
    const int ry0 = std::max(0, b.y0 - cfg.contrast_ring);
    const int rx1 = std::min(w, b.x1 + cfg.contrast_ring);
    const int ry1 = std::min(h, b.y1 + cfg.contrast_ring);
    const double ring_area =
        static_cast<double>((rx1 - rx0) * (ry1 - ry0) - (b.x1 - b.x0) * (b.y1 - b.y0));
    const double ring = ring_area > 0.0
                            ? (box_sum(rx0, ry0, rx1, ry1) - box_sum(b.x0, b.y0, b.x1, b.y1)) /
                                  ring_area
                            : 1.0;
    const double quality = inside - ring;
    if (quality <= 0.0) continue;
    Detection d;
    d.box = b;
    d.cls = cls;
    d.score = quality * p[cls];
    d.box.score = d.score;
    dets.push_back(d);
  }

  // Per-class suppression, then a global stable order.
  std::vector<Detection> final_dets;
  for (int c = 1; c < classes; ++c) {
    std::vector<Box> cls_boxes;
    for (const Detection& d : dets)
      if (d.cls == c) cls_boxes.push_back(d.box);
    if (cls_boxes.empty()) continue;
    for (const Box& b : nms(std::move(cls_boxes), cfg.final_nms_iou))
      final_dets.push_back({b, c, b.score});
  }
  std::sort(final_dets.begin(), final_dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
    return a.box.y0 < b.box.y0;
  });
  return final_dets;
}

SegModel train_seg(const std::vector<data::Scene>& train, int classes,
                   const std::string& arch, const TrainConfig& cfg,
                   std::uint64_t data_seed) {
  if (train.empty()) throw std::invalid_argument("train_seg: empty dataset");
  const ArchDims dims = arch_dims(arch);
  SegModel model;
  model.arch = arch;
  model.classes = classes;
  model.height = train[0].height;
  model.width = train[0].width;
  model.train_seed = cfg.seed;
  model.data_seed = data_seed;
  model.channel_mean = dataset_channel_mean(train);

  Rng rng(Rng::derive(cfg.seed, 0x5e6));
  model.c1 = init_conv(dims.c1, 3, 3, rng);
  model.c2 = init_conv(dims.c2, dims.c1, 3, rng);
  model.c3 = init_conv(classes, dims.c2, 1, rng);

  const std::size_t plane = static_cast<std::size_t>(model.height) * model.width;
  std::vector<double> buf(classes);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t si = 0; si < train.size(); ++si) {
      const data::Scene& scene = train[si];
      Tensor x = preprocess(model.channel_mean, scene.image);
      Tape tape;
      NodeId input = tape.leaf(std::move(x));
      NodeId w1 = tape.leaf(model.c1.w), b1 = tape.leaf(model.c1.b);
      NodeId w2 = tape.leaf(model.c2.w), b2 = tape.leaf(model.c2.b);
      NodeId w3 = tape.leaf(model.c3.w), b3 = tape.leaf(model.c3.b);
      NodeId h = tape.scale(input, kInputScale);
      h = tape.relu(tape.bias(tape.conv2d(h, w1), b1));
      h = tape.relu(tape.bias(tape.conv2d(h, w2), b2));
      NodeId scores = tape.bias(tape.conv2d(h, w3), b3);

      // Cross-entropy gradient at the scores, averaged over pixels.
      const Tensor& sv = tape.value(scores);
      Tensor seed(sv.shape());
      double loss = 0.0;
      const double inv = 1.0 / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < classes; ++c) buf[c] = sv[c * plane + i];
        const std::vector<double> p = softmax(buf);
        const int label = scene.label_map[i];
        loss -= std::log(std::max(p[label], 1e-300)) * inv;
        for (int c = 0; c < classes; ++c)
          seed[c * plane + i] = (p[c] - (c == label ? 1.0 : 0.0)) * inv;
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("train_seg: loss diverged at epoch " +
                                 std::to_string(epoch) + ", scene " + std::to_string(si));

      std::pair<NodeId, Tensor> seeds{scores, std::move(seed)};
      tape.backward(std::span<const std::pair<NodeId, Tensor>>(&seeds, 1));
      sgd_step(model.c1.w, tape.grad(w1), cfg.lr);
      sgd_step(model.c1.b, tape.grad(b1), cfg.lr);
      sgd_step(model.c2.w, tape.grad(w2), cfg.lr);
      sgd_step(model.c2.b, tape.grad(b2), cfg.lr);
      sgd_step(model.c3.w, tape.grad(w3), cfg.lr);
      sgd_step(model.c3.b, tape.grad(b3), cfg.lr);
    }
  }
  return model;
}

DetModel train_det(const std::vector<data::Scene>& train, int classes,
                   const std::string& arch, const TrainConfig& cfg,
                   std::uint64_t data_seed) {
  if (train.empty()) throw std::invalid_argument("train_det: empty dataset");
  const ArchDims dims = arch_dims(arch);
  DetModel model;
  model.arch = arch;
  model.classes = classes;
  model.height = train[0].height;
  model.width = train[0].width;
  model.train_seed = cfg.seed;
  model.data_seed = data_seed;
  model.channel_mean = dataset_channel_mean(train);
  model.anchors = dims.anchors;

  Rng rng(Rng::derive(cfg.seed, 0xde7));
  model.c1 = init_conv(dims.c1, 3, 3, rng);
  model.c2 = init_conv(dims.c2, dims.c1, 3, rng);
  model.obj = init_conv(2, dims.c2, 1, rng);
  model.cls_w = uniform_tensor({static_cast<std::size_t>(dims.c2),
                                static_cast<std::size_t>(classes)}, rng);
  model.cls_b = uniform_tensor({static_cast<std::size_t>(classes)}, rng);

  const std::size_t plane = static_cast<std::size_t>(model.height) * model.width;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t si = 0; si < train.size(); ++si) {
      const data::Scene& scene = train[si];
      Tensor x = preprocess(model.channel_mean, scene.image);
      Tape tape;
      NodeId input = tape.leaf(std::move(x));
      NodeId w1 = tape.leaf(model.c1.w), b1 = tape.leaf(model.c1.b);
      NodeId w2 = tape.leaf(model.c2.w), b2 = tape.leaf(model.c2.b);
      NodeId wo = tape.leaf(model.obj.w), bo = tape.leaf(model.obj.b);
      NodeId wc = tape.leaf(model.cls_w), bc = tape.leaf(model.cls_b);
      NodeId h = tape.scale(input, kInputScale);
      h = tape.relu(tape.bias(tape.conv2d(h, w1), b1));
      NodeId feat = tape.relu(tape.bias(tape.conv2d(h, w2), b2));
      NodeId obj = tape.bias(tape.conv2d(feat, wo), bo);

      double loss = 0.0;
      std::vector<std::pair<NodeId, Tensor>> seeds;

      // Two-way objectness, every position labelled by ground truth coverage.
      {
        const Tensor& ov = tape.value(obj);
        Tensor seed(ov.shape());
        const double inv = 1.0 / static_cast<double>(plane);
        for (int y = 0; y < model.height; ++y)
          for (int xx = 0; xx < model.width; ++xx) {
            const std::size_t i = static_cast<std::size_t>(y) * model.width + xx;
            int label = 0;
            for (const data::SceneBox& b : scene.boxes)
              if (xx >= b.x0 && xx < b.x1 && y >= b.y0 && y < b.y1) {
                label = 1;
                break;
              }
            const double s0 = ov[i], s1 = ov[plane + i];
            const double p1 = 1.0 / (1.0 + std::exp(s0 - s1));
            const double p0 = 1.0 - p1;
            loss -= std::log(std::max(label ? p1 : p0, 1e-300)) * inv;
            seed[i] = (p0 - (label == 0 ? 1.0 : 0.0)) * inv;
            seed[plane + i] = (p1 - (label == 1 ? 1.0 : 0.0)) * inv;
          }
        seeds.emplace_back(obj, std::move(seed));
      }

      // Class head on the ground-truth boxes.
      if (!scene.boxes.empty()) {
        std::vector<NodeId> pooled;
        for (const data::SceneBox& b : scene.boxes)
          pooled.push_back(tape.box_mean_pool(feat, Rect{b.x0, b.y0, b.x1, b.y1}));
        NodeId rows = tape.concat_rows(pooled);
        NodeId cls = tape.bias(tape.matmul(rows, wc), bc);
        const Tensor& cv = tape.value(cls);
        Tensor seed(cv.shape());
        const double inv = 1.0 / static_cast<double>(scene.boxes.size());
        std::vector<double> buf(classes);
        for (std::size_t n = 0; n < scene.boxes.size(); ++n) {
          for (int c = 0; c < classes; ++c) buf[c] = cv.at(n, c);
          const std::vector<double> p = softmax(buf);
          const int label = scene.boxes[n].cls;
          loss -= std::log(std::max(p[label], 1e-300)) * inv;
          for (int c = 0; c < classes; ++c)
            seed.at(n, c) = (p[c] - (c == label ? 1.0 : 0.0)) * inv;
        }
        seeds.emplace_back(cls, std::move(seed));
      }

      if (!std::isfinite(loss))
        throw std::runtime_error("train_det: loss diverged at epoch " +
                                 std::to_string(epoch) + ", scene " + std::to_string(si));

      tape.backward(seeds);
      sgd_step(model.c1.w, tape.grad(w1), cfg.lr);
      sgd_step(model.c1.b, tape.grad(b1), cfg.lr);
      sgd_step(model.c2.w, tape.grad(w2), cfg.lr);
      sgd_step(model.c2.b, tape.grad(b2), cfg.lr);
      sgd_step(model.obj.w, tape.grad(wo), cfg.lr);
      sgd_step(model.obj.b, tape.grad(bo), cfg.lr);
      sgd_step(model.cls_w, tape.grad(wc), cfg.lr);
      sgd_step(model.cls_b, tape.grad(bc), cfg.lr);
    }
  }
  return model;
}

namespace {

constexpr std::uint8_t kTagWeights = 1;
constexpr std::uint8_t kTagBias = 2;
constexpr std::uint8_t kTagMean = 3;
constexpr std::uint8_t kTagLinearW = 4;
constexpr std::uint8_t kTagLinearB = 5;

std::string header_line(const std::string& arch, int classes, int height, int width,
                        std::uint64_t seed, std::uint64_t data_seed) {
  std::ostringstream os;
  os << "arch=" << arch << " C=" << classes << " H=" << height << " W=" << width
     << " seed=" << seed << " data=" << data_seed << "\n";
  return os.str();
}

std::map<std::string, std::string> parse_header(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream is(line);
  std::string token;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad model header token: " + token);
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  for (const char* key : {"arch", "C", "H", "W", "seed", "data"})
    if (!kv.count(key)) throw std::runtime_error(std::string("model header missing ") + key);
  return kv;
}

Tensor mean_tensor(const std::array<double, 3>& mean) {
  return Tensor::of({3}, {mean[0], mean[1], mean[2]});
}

std::array<double, 3> mean_from_tensor(const Tensor& t) {
  if (t.size() != 3) throw std::runtime_error("bad channel mean record");
  return {t[0], t[1], t[2]};
}

Tensor take(std::vector<io::TensorRecord>& records, std::size_t idx, std::uint8_t tag) {
  if (idx >= records.size()) throw std::runtime_error("model file: missing tensor record");
  if (records[idx].tag != tag)
    throw std::runtime_error("model file: unexpected record tag at index " +
                             std::to_string(idx));
  return std::move(records[idx].tensor);
}

}  // namespace

void save_seg_model(const SegModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << header_line(model.arch, model.classes, model.height, model.width, model.train_seed,
                     model.data_seed);
  io::write_dalw(out, {{kTagWeights, model.c1.w},
                       {kTagBias, model.c1.b},
                       {kTagWeights, model.c2.w},
                       {kTagBias, model.c2.b},
                       {kTagWeights, model.c3.w},
                       {kTagBias, model.c3.b},
                       {kTagMean, mean_tensor(model.channel_mean)}});
}

void save_det_model(const DetModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << header_line(model.arch, model.classes, model.height, model.width, model.train_seed,
                     model.data_seed);
  io::write_dalw(out, {{kTagWeights, model.c1.w},
                       {kTagBias, model.c1.b},
                       {kTagWeights, model.c2.w},
                       {kTagBias, model.c2.b},
                       {kTagWeights, model.obj.w},
                       {kTagBias, model.obj.b},
                       {kTagLinearW, model.cls_w},
                       {kTagLinearB, model.cls_b},
                       {kTagMean, mean_tensor(model.channel_mean)}});
}

SegModel load_seg_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto kv = parse_header(line);
  SegModel model;
  model.arch = kv.at("arch");
  if (model.arch.rfind("seg", 0) != 0)
    throw std::runtime_error(path.string() + " is not a segmentation model");
  model.classes = std::stoi(kv.at("C"));
  model.height = std::stoi(kv.at("H"));
  model.width = std::stoi(kv.at("W"));
  model.train_seed = std::stoull(kv.at("seed"));
  model.data_seed = std::stoull(kv.at("data"));
  auto records = io::read_dalw(in);
  model.c1 = {take(records, 0, kTagWeights), take(records, 1, kTagBias)};
  model.c2 = {take(records, 2, kTagWeights), take(records, 3, kTagBias)};
  model.c3 = {take(records, 4, kTagWeights), take(records, 5, kTagBias)};
  model.channel_mean = mean_from_tensor(take(records, 6, kTagMean));
  return model;
}

DetModel load_det_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto kv = parse_header(line);
  DetModel model;
  model.arch = kv.at("arch");
  if (model.arch.rfind("det", 0) != 0)
    throw std::runtime_error(path.string() + " is not a detection model");
  model.classes = std::stoi(kv.at("C"));
  model.height = std::stoi(kv.at("H"));
  model.width = std::stoi(kv.at("W"));
  model.train_seed = std::stoull(kv.at("seed"));
  model.data_seed = std::stoull(kv.at("data"));
  model.anchors = arch_dims(model.arch).anchors;
  auto records = io::read_dalw(in);
  model.c1 = {take(records, 0, kTagWeights), take(records, 1, kTagBias)};
  model.c2 = {take(records, 2, kTagWeights), take(records, 3, kTagBias)};
  model.obj = {take(records, 4, kTagWeights), take(records, 5, kTagBias)};
  model.cls_w = take(records, 6, kTagLinearW);
  model.cls_b = take(records, 7, kTagLinearB);
  model.channel_mean = mean_from_tensor(take(records, 8, kTagMean));
  return model;
}

std::string model_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto kv = parse_header(line);
  const std::string& arch = kv.at("arch");
  if (arch.rfind("seg", 0) == 0) return "seg";
  if (arch.rfind("det", 0) == 0) return "det";
  throw std::runtime_error("unrecognized model kind in " + path.string());
}

}  // namespace adv::models
