#include "adv/targets.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "adv/rng.hpp"

namespace adv::targets {

ClassPermutation sample_permutation(int classes, std::uint64_t seed) {
  if (classes < 3)
    throw std::invalid_argument("sample_permutation: need at least two foreground classes");
  const int fg = classes - 1;
  Rng rng(Rng::derive(seed, 0x9e2));
  ClassPermutation pi;
  pi.map.resize(classes);
  for (;;) {
    std::vector<int> perm(fg);
    for (int i = 0; i < fg; ++i) perm[i] = i + 1;
    rng.shuffle(perm);
    bool derangement = true;
    for (int i = 0; i < fg; ++i)
      if (perm[i] == i + 1) {
        derangement = false;
        break;
      }
    if (!derangement) continue;
    pi.map[0] = 0;
    for (int i = 0; i < fg; ++i) pi.map[i + 1] = perm[i];
    return pi;
  }
}

TargetSet build_seg_targets(const data::Scene& scene, const ClassPermutation& pi) {
  TargetSet t;
  t.task = "seg";
  t.scene_seed = scene.seed;
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const int cls = scene.label_map[static_cast<std::size_t>(y) * scene.width + x];
      if (cls == 0) continue;  // background targets stay unchanged
      t.pixels.push_back({x, y});
      t.original_labels.push_back(cls);
      t.adversarial_labels.push_back(pi(cls));
    }
  return t;
}

TargetSet build_det_targets(const data::Scene& scene, const models::DetModel& model,
                            double nms_iou, const ClassPermutation& pi) {
  TargetSet t;
  t.task = "det";
  t.scene_seed = scene.seed;
  t.model_tag = model.tag();
  t.nms_iou = nms_iou;

  const Tensor x = models::preprocess(model.channel_mean, scene.image);
  const std::vector<models::Box> proposals = models::propose(model, x, nms_iou);
  if (proposals.empty()) return t;
  const Tensor scores = models::box_class_scores(model, x, proposals);

  std::vector<double> row(model.classes);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    for (int c = 0; c < model.classes; ++c) row[c] = scores.at(i, c);
    const std::vector<double> p = models::softmax(row);
    int bound_class = -1;
    double best_iou = 0.1;  // strictly greater required
    for (const data::SceneBox& gt : scene.boxes) {
      const double overlap = models::iou(
          proposals[i], models::Box{gt.x0, gt.y0, gt.x1, gt.y1, 0.0});
      if (overlap > best_iou && p[gt.cls] > 0.1) {
        best_iou = overlap;
        bound_class = gt.cls;
      }
    }
    if (bound_class < 0) continue;
    t.boxes.push_back(proposals[i]);
    t.original_labels.push_back(bound_class);
    t.adversarial_labels.push_back(pi(bound_class));
  }
  return t;
}

TargetSet build_mask_targets(const data::Scene& scene, const std::vector<int>& desired_mask) {
  if (desired_mask.size() != scene.label_map.size())
    throw std::invalid_argument("build_mask_targets: mask size does not match scene");
  TargetSet t;
  t.task = "mask";
  t.scene_seed = scene.seed;
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * scene.width + x;
      const int desired = desired_mask[i];
      if (desired < 0 || desired >= scene.classes)
        throw std::invalid_argument("build_mask_targets: class id " +
                                    std::to_string(desired) + " out of range");
      const int current = scene.label_map[i];
      if (desired == current) continue;  // nothing to change
      t.pixels.push_back({x, y});
      t.original_labels.push_back(current);
      t.adversarial_labels.push_back(desired);
    }
  return t;
}

void save_targets(const TargetSet& t, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "task=" << t.task << " n=" << t.size() << " nms_iou=" << t.nms_iou << "\n";
  if (t.task == "det") {
    for (std::size_t i = 0; i < t.size(); ++i)
      os << "box " << t.boxes[i].x0 << " " << t.boxes[i].y0 << " " << t.boxes[i].x1 << " "
         << t.boxes[i].y1 << " " << t.original_labels[i] << " " << t.adversarial_labels[i]
         << "\n";
  } else {
    for (std::size_t i = 0; i < t.size(); ++i)
      os << "px " << t.pixels[i].y << " " << t.pixels[i].x << " " << t.original_labels[i]
         << " " << t.adversarial_labels[i] << "\n";
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << os.str();
}

TargetSet load_targets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  TargetSet t;
  {
    std::istringstream hs(header);
    std::string token;
    while (hs >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
      if (key == "task") t.task = value;
      if (key == "nms_iou") t.nms_iou = std::stod(value);
    }
  }
  std::string kind;
  while (in >> kind) {
    int l, lp;
    if (kind == "px") {
      PixelCoord p;
      in >> p.y >> p.x >> l >> lp;
      t.pixels.push_back(p);
    } else if (kind == "box") {
      models::Box b;
      in >> b.x0 >> b.y0 >> b.x1 >> b.y1 >> l >> lp;
      t.boxes.push_back(b);
    } else {
      throw std::runtime_error(path.string() + ": bad target line kind '" + kind + "'");
    }
    t.original_labels.push_back(l);
    t.adversarial_labels.push_back(lp);
  }
  return t;
}

}  // namespace adv::targets
