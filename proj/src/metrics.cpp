#include "adv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "adv/io.hpp"
#include "adv/rng.hpp"

namespace adv::metrics {

double miou(const std::vector<std::vector<int>>& pred,
            const std::vector<std::vector<int>>& truth, int classes) {
  if (pred.empty() || pred.size() != truth.size())
    throw std::invalid_argument("miou: empty or misaligned inputs");
  std::vector<long long> inter(classes, 0), uni(classes, 0);
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != truth[s].size())
      throw std::invalid_argument("miou: prediction/truth size mismatch");
    for (std::size_t i = 0; i < pred[s].size(); ++i) {
      const int p = pred[s][i], t = truth[s][i];
      if (p < 0 || p >= classes || t < 0 || t >= classes)
        throw std::invalid_argument("miou: class id out of range");
      if (p == t) {
        ++inter[p];
        ++uni[p];
      } else {
        ++uni[p];
        ++uni[t];
      }
    }
  }
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    if (uni[c] == 0) continue;  // class absent from both
    total += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    ++present;
  }
  if (present == 0) return 0.0;
  return 100.0 * total / present;
}

double map_score(const std::vector<std::vector<models::Detection>>& detections,
                 const std::vector<std::vector<data::SceneBox>>& truths,
                 double iou_thresh, int classes) {
  if (detections.size() != truths.size())
    throw std::invalid_argument("map_score: detections/truths misaligned");
  if (classes == 0) {
    for (const auto& scene : truths)
      for (const data::SceneBox& b : scene) classes = std::max(classes, b.cls + 1);
    for (const auto& scene : detections)
      for (const models::Detection& d : scene) classes = std::max(classes, d.cls + 1);
  }

  double ap_total = 0.0;
  int classes_with_truth = 0;
  for (int cls = 1; cls < classes; ++cls) {
    std::size_t n_truth = 0;
    for (const auto& scene : truths)
      for (const data::SceneBox& b : scene)
        if (b.cls == cls) ++n_truth;
    if (n_truth == 0) continue;
    ++classes_with_truth;

    // All detections of this class, ranked by score with a stable tie order.
    struct Ranked {
      double score;
      std::size_t scene;
      models::Box box;
    };
    std::vector<Ranked> ranked;
    for (std::size_t s = 0; s < detections.size(); ++s)
      for (const models::Detection& d : detections[s])
        if (d.cls == cls) ranked.push_back({d.score, s, d.box});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.scene != b.scene) return a.scene < b.scene;
      if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
      if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
      if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
      return a.box.y1 < b.box.y1;
    });

    std::vector<std::vector<bool>> matched(truths.size());
    for (std::size_t s = 0; s < truths.size(); ++s)
      matched[s].assign(truths[s].size(), false);

    std::vector<double> precision, recall;
    std::size_t tp = 0, fp = 0;
    for (const Ranked& det : ranked) {
      const auto& gt = truths[det.scene];
      double best_iou = 0.0;
      std::size_t best = gt.size();
      for (std::size_t g = 0; g < gt.size(); ++g) {
        if (gt[g].cls != cls) continue;
        const double ov = models::iou(
            det.box, models::Box{gt[g].x0, gt[g].y0, gt[g].x1, gt[g].y1, 0.0});
        if (ov > best_iou) {
          best_iou = ov;
          best = g;
        }
      }
      if (best < gt.size() && best_iou >= iou_thresh && !matched[det.scene][best]) {
        matched[det.scene][best] = true;
        ++tp;
      } else {
        ++fp;
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
      recall.push_back(static_cast<double>(tp) / static_cast<double>(n_truth));
    }

    // All-point interpolation: area under the monotone precision envelope.
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
      double envelope = precision[i];
      for (std::size_t j = i + 1; j < precision.size(); ++j)
        envelope = std::max(envelope, precision[j]);
      ap += (recall[i] - prev_recall) * envelope;
      prev_recall = recall[i];
    }
    ap_total += ap;
  }
  if (classes_with_truth == 0) return 0.0;
  return 100.0 * ap_total / classes_with_truth;
}

double perceptibility(const Tensor& r) {
  if (r.rank() != 3 || r.extent(0) != 3)
    throw std::invalid_argument("perceptibility: perturbation must be 3 x H x W, got " +
                                r.shape_str());
  const std::size_t plane = r.extent(1) * r.extent(2);
  std::vector<double> pixel_sq(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    double sq = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double v = r[c * plane + i] / 255.0;
      sq += v * v;
    }
    pixel_sq[i] = sq;
  }
  // sorted accumulation: the value is a pure function of the pixel multiset
  std::sort(pixel_sq.begin(), pixel_sq.end());
  double total = 0.0;
  for (double v : pixel_sq) total += v;
  return std::sqrt(total / static_cast<double>(plane));
}

Tensor permute_with(const Tensor& r, const std::vector<int>& row_perm,
                    const std::vector<int>& col_perm) {
  if (r.rank() != 3)
    throw std::invalid_argument("permute_with: perturbation must be C x H x W");
  const std::size_t h = r.extent(1), w = r.extent(2);
  if (row_perm.size() != h || col_perm.size() != w)
    throw std::invalid_argument("permute_with: permutation length mismatch");
  Tensor out(r.shape());
  for (std::size_t c = 0; c < r.extent(0); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(c, y, x) = r.at(c, row_perm[y], col_perm[x]);
  return out;
}

Tensor permute_perturbation(const Tensor& r, std::uint64_t seed) {
  if (r.rank() != 3)
    throw std::invalid_argument("permute_perturbation: perturbation must be C x H x W");
  Rng rng(Rng::derive(seed, 0x9321));
  std::vector<int> rows(r.extent(1)), cols(r.extent(2));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<int>(i);
  rng.shuffle(rows);
  rng.shuffle(cols);
  return permute_with(r, rows, cols);
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "metric,model,condition,value\n";
  os << report.metric << "," << report.model_tag << ",orig," << report.clean << "\n";
  os << report.metric << "," << report.model_tag << ",adv," << report.attacked << "\n";
  os << report.metric << "," << report.model_tag << ",perm," << report.permuted << "\n";
  for (const auto& [seed, value] : report.clean_per_scene)
    os << report.metric << "," << report.model_tag << ",orig:" << seed << "," << value << "\n";
  for (const auto& [seed, value] : report.attacked_per_scene)
    os << report.metric << "," << report.model_tag << ",adv:" << seed << "," << value << "\n";
  io::write_text_file(path, os.str());
}

}  // namespace adv::metrics
