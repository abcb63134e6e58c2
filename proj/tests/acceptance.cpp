// Acceptance suite: end-to-end properties of the attack laboratory at desk
// scale (64x64 scenes, 200 train / 50 val, toy recognizers). Prints one
// PASS/FAIL line per criterion and exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "adv/attack.hpp"
#include "adv/dataset.hpp"
#include "adv/io.hpp"
#include "adv/metrics.hpp"
#include "adv/models.hpp"
#include "adv/rng.hpp"
#include "adv/tape.hpp"
#include "adv/targets.hpp"
#include "adv/transfer.hpp"

using adv::Rng;
using adv::Tensor;
using namespace adv;

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kSplitA = 0;
constexpr std::uint64_t kSplitB = 1;
constexpr int kTrainScenes = 200;
constexpr int kValScenes = 50;
constexpr std::uint64_t kPermSeed = 7;       // per-scene adversarial label draws
constexpr std::uint64_t kControlSeed = 101;  // permuted-perturbation controls
const models::TrainConfig kSegTrain{16, 0.1, 0};
const models::TrainConfig kDetTrain{16, 0.1, 0};

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %02d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void log_stage(const char* what, const Timer& t) {
  std::fprintf(stderr, "  .. %s (%.1fs)\n", what, t.seconds());
}

targets::ClassPermutation scene_permutation(int classes, std::uint64_t scene_seed) {
  return targets::sample_permutation(classes, Rng::derive(kPermSeed, scene_seed));
}

// One standard segmentation attack batch over the scenes.
struct AttackBatch {
  std::vector<attack::Perturbation> perts;
  std::vector<attack::AttackTrace> traces;
  int converged = 0;
};

AttackBatch attack_seg(const models::SegModel& model, const std::vector<data::Scene>& scenes) {
  AttackBatch batch;
  attack::AttackConfig cfg{0.5, 200, "seg"};
  for (const data::Scene& scene : scenes) {
    auto t = targets::build_seg_targets(scene, scene_permutation(scene.classes, scene.seed));
    auto [pert, trace] = attack::run_attack(model, scene, t, cfg);
    batch.converged += pert.converged;
    batch.perts.push_back(std::move(pert));
    batch.traces.push_back(std::move(trace));
  }
  return batch;
}

AttackBatch attack_det(const models::DetModel& model, const std::vector<data::Scene>& scenes,
                       double nms_iou) {
  AttackBatch batch;
  attack::AttackConfig cfg{0.5, 150, "det"};
  for (const data::Scene& scene : scenes) {
    auto t = targets::build_det_targets(scene, model, nms_iou,
                                        scene_permutation(scene.classes, scene.seed));
    auto [pert, trace] = attack::run_attack(model, scene, t, cfg);
    batch.converged += pert.converged;
    batch.perts.push_back(std::move(pert));
    batch.traces.push_back(std::move(trace));
  }
  return batch;
}

double max_perceptibility(const AttackBatch& batch, bool converged_only) {
  double worst = 0.0;
  for (const attack::Perturbation& p : batch.perts)
    if (!converged_only || p.converged)
      worst = std::max(worst, metrics::perceptibility(p.r));
  return worst;
}

// ---- criterion 1: gradients through both model paths ----

models::SegModel random_seg(std::uint64_t seed, int hw) {
  Rng rng(seed);
  models::SegModel m;
  m.height = hw;
  m.width = hw;
  auto fill = [&](Tensor t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_double(-0.1, 0.1);
    return t;
  };
  m.c1 = {fill(Tensor({16, 3, 3, 3})), fill(Tensor({16}))};
  m.c2 = {fill(Tensor({32, 16, 3, 3})), fill(Tensor({32}))};
  m.c3 = {fill(Tensor({5, 32, 1, 1})), fill(Tensor({5}))};
  return m;
}

models::DetModel random_det(std::uint64_t seed, int hw) {
  Rng rng(seed);
  models::DetModel m;
  m.height = hw;
  m.width = hw;
  auto fill = [&](Tensor t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_double(-0.1, 0.1);
    return t;
  };
  m.c1 = {fill(Tensor({16, 3, 3, 3})), fill(Tensor({16}))};
  m.c2 = {fill(Tensor({32, 16, 3, 3})), fill(Tensor({32}))};
  m.obj = {fill(Tensor({2, 32, 1, 1})), fill(Tensor({2}))};
  m.cls_w = fill(Tensor({32, 5}));
  m.cls_b = fill(Tensor({5}));
  return m;
}

void criterion_gradients() {
  const int hw = 10;
  const double tol = 1e-5, step = 1e-5;
  int passed = 0, attempts = 0;
  const int wanted = 100, budget = 115;  // a few draws land on rectifier kinks
  for (std::uint64_t seed = 0; passed < wanted && attempts < budget; ++seed, ++attempts) {
    Rng rng(Rng::derive(0xACC1, seed));
    Tensor x({3, static_cast<std::size_t>(hw), static_cast<std::size_t>(hw)});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.next_double(-25.0, 25.0);
    double err = 0.0;
    if (seed % 2 == 0) {
      models::SegModel m = random_seg(10000 + seed, hw);
      Tensor coeffs({5, static_cast<std::size_t>(hw), static_cast<std::size_t>(hw)});
      for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] = rng.next_double(-1.0, 1.0);
      models::SegForward f = models::seg_forward(m, x);
      Tensor analytic = grad_input(f.tape, f.scores, coeffs, f.input);
      Tensor numeric = finite_diff(
          [&](const Tensor& probe) {
            Tensor s = models::seg_scores(m, probe);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) acc += coeffs[i] * s[i];
            return acc;
          },
          x, step);
      err = max_relative_error(analytic, numeric);
    } else {
      models::DetModel m = random_det(20000 + seed, hw);
      std::vector<models::Box> boxes{{0, 0, 6, 6, 0.0}, {3, 2, 10, 9, 0.0}, {1, 4, 7, 10, 0.0}};
      Tensor coeffs({3, 5});
      for (std::size_t i = 0; i < coeffs.size(); ++i) coeffs[i] = rng.next_double(-1.0, 1.0);
      models::BoxScores f = models::classify_boxes(m, x, boxes);
      Tensor analytic = grad_input(f.tape, f.scores, coeffs, f.input);
      Tensor numeric = finite_diff(
          [&](const Tensor& probe) {
            Tensor s = models::box_class_scores(m, probe, boxes);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) acc += coeffs[i] * s[i];
            return acc;
          },
          x, step);
      err = max_relative_error(analytic, numeric);
    }
    if (err <= tol) ++passed;
  }
  report(1, "gradient check against central differences", passed >= wanted,
         fmt("%d/%d cases within 1e-5 (%d draws)", passed, wanted, attempts));
}

// ---- criterion 11: metric oracles ----

void criterion_oracles() {
  bool ok = true;
  std::ostringstream detail;

  // greedy suppression against the literal definition
  for (std::uint64_t seed = 0; seed < 20 && ok; ++seed) {
    Rng rng(Rng::derive(0xACC2, seed));
    std::vector<models::Box> boxes;
    for (int i = 0; i < 40; ++i) {
      models::Box b{rng.next_int(0, 30), rng.next_int(0, 30), 0, 0, rng.next_double()};
      b.x1 = b.x0 + rng.next_int(2, 20);
      b.y1 = b.y0 + rng.next_int(2, 20);
      boxes.push_back(b);
    }
    const double thresh = rng.next_double(0.2, 0.8);
    auto kept = models::nms(boxes, thresh);
    std::sort(boxes.begin(), boxes.end(), [](const models::Box& a, const models::Box& b) {
      if (a.score != b.score) return a.score > b.score;
      return std::tie(a.x0, a.y0, a.x1, a.y1) < std::tie(b.x0, b.y0, b.x1, b.y1);
    });
    std::vector<models::Box> expect;
    for (const models::Box& cand : boxes) {
      bool clear = true;
      for (const models::Box& k : expect) clear = clear && models::iou(cand, k) <= thresh;
      if (clear) expect.push_back(cand);
    }
    if (kept.size() != expect.size()) ok = false;
    for (std::size_t i = 0; ok && i < kept.size(); ++i)
      ok = kept[i].x0 == expect[i].x0 && kept[i].y0 == expect[i].y0 &&
           kept[i].x1 == expect[i].x1 && kept[i].y1 == expect[i].y1;
  }
  if (!ok) detail << "nms mismatch; ";

  // ranked matching and all-point interpolation against a direct evaluation
  bool map_ok = true;
  for (std::uint64_t seed = 0; seed < 20 && map_ok; ++seed) {
    Rng rng(Rng::derive(0xACC3, seed));
    std::vector<std::vector<data::SceneBox>> truths(2);
    std::vector<std::vector<models::Detection>> dets(2);
    for (int s = 0; s < 2; ++s) {
      for (int g = rng.next_int(0, 2); g > 0; --g) {
        data::SceneBox b;
        b.cls = rng.next_int(1, 3);
        b.x0 = rng.next_int(0, 16);
        b.y0 = rng.next_int(0, 16);
        b.x1 = b.x0 + rng.next_int(4, 10);
        b.y1 = b.y0 + rng.next_int(4, 10);
        truths[s].push_back(b);
      }
      for (int d = rng.next_int(0, 5); d > 0; --d) {
        models::Detection det;
        det.cls = rng.next_int(1, 3);
        det.box = {rng.next_int(0, 16), rng.next_int(0, 16), 0, 0, 0.0};
        det.box.x1 = det.box.x0 + rng.next_int(4, 10);
        det.box.y1 = det.box.y0 + rng.next_int(4, 10);
        det.score = rng.next_double();
        dets[s].push_back(det);
      }
    }
    const double fast = metrics::map_score(dets, truths, 0.5, 4);
    // reference: recompute average precision from scratch per class
    double total = 0.0;
    int with_truth = 0;
    for (int cls = 1; cls < 4; ++cls) {
      std::size_t n_truth = 0;
      for (const auto& sc : truths)
        for (const auto& b : sc) n_truth += b.cls == cls;
      if (!n_truth) continue;
      ++with_truth;
      struct R {
        double score;
        std::size_t scene;
        models::Box box;
      };
      std::vector<R> ranked;
      for (std::size_t s = 0; s < 2; ++s)
        for (const auto& d : dets[s])
          if (d.cls == cls) ranked.push_back({d.score, s, d.box});
      std::sort(ranked.begin(), ranked.end(), [](const R& a, const R& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.scene != b.scene) return a.scene < b.scene;
        return std::tie(a.box.x0, a.box.y0, a.box.x1, a.box.y1) <
               std::tie(b.box.x0, b.box.y0, b.box.x1, b.box.y1);
      });
      std::vector<std::vector<bool>> used{std::vector<bool>(truths[0].size(), false),
                                          std::vector<bool>(truths[1].size(), false)};
      std::vector<int> tp_flags;
      for (const R& r : ranked) {
        double best = 0.0;
        int pick = -1;
        for (std::size_t g = 0; g < truths[r.scene].size(); ++g) {
          const auto& gt = truths[r.scene][g];
          if (gt.cls != cls) continue;
          const double v =
              models::iou(r.box, models::Box{gt.x0, gt.y0, gt.x1, gt.y1, 0.0});
          if (v > best) {
            best = v;
            pick = static_cast<int>(g);
          }
        }
        const bool tp = pick >= 0 && best >= 0.5 && !used[r.scene][pick];
        if (tp) used[r.scene][pick] = true;
        tp_flags.push_back(tp);
      }
      double ap = 0.0;
      for (std::size_t i = 0, tp = 0; i < tp_flags.size(); ++i) {
        if (!tp_flags[i]) continue;
        ++tp;
        double best_prec = 0.0;
        std::size_t tp2 = 0;
        for (std::size_t j = 0; j < tp_flags.size(); ++j) {
          tp2 += tp_flags[j];
          if (tp2 >= tp) best_prec = std::max(best_prec, double(tp2) / double(j + 1));
        }
        ap += best_prec / double(n_truth);
      }
      total += ap;
    }
    const double ref = with_truth ? 100.0 * total / with_truth : 0.0;
    map_ok = std::fabs(fast - ref) < 1e-9;
  }
  if (!map_ok) detail << "map mismatch; ";

  // hand-counted intersection-over-union fixture
  std::vector<std::vector<int>> truth{{0, 0, 1, 1}};
  std::vector<std::vector<int>> pred{{0, 1, 1, 1}};
  const double miou_val = metrics::miou(pred, truth, 2);
  const bool miou_ok = std::fabs(miou_val - 100.0 * (0.5 + 2.0 / 3.0) / 2.0) < 1e-9;
  if (!miou_ok) detail << "miou fixture mismatch; ";

  detail << "nms x20, map x20, miou fixture";
  report(11, "metric implementations match brute-force oracles", ok && map_ok && miou_ok,
         detail.str());
}

// Desired maps paint a geometric pattern onto the background and keep the
// scene's own shapes unchanged.
std::vector<int> disk_mask(const data::Scene& scene, int cls, int cx, int cy, int radius) {
  std::vector<int> mask = scene.label_map;
  for (int y = 0; y < scene.height; ++y)
    for (int x = 0; x < scene.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * scene.width + x;
      if (mask[i] == 0 && (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius)
        mask[i] = cls;
    }
  return mask;
}

std::vector<int> square_mask(const data::Scene& scene, int cls, int cx, int cy, int half) {
  std::vector<int> mask = scene.label_map;
  for (int y = std::max(0, cy - half); y < std::min(scene.height, cy + half); ++y)
    for (int x = std::max(0, cx - half); x < std::min(scene.width, cx + half); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * scene.width + x;
      if (mask[i] == 0) mask[i] = cls;
    }
  return mask;
}

// fraction of targeted pixels predicting their desired class after the
// truncated perturbation is applied
double mask_agreement(const models::SegModel& model, const data::Scene& scene,
                      const targets::TargetSet& t, const Tensor& r) {
  const Tensor adv = attack::adversarial_image(scene.image, r);
  const std::vector<int> pred = models::seg_predict(model, adv);
  std::size_t hit = 0;
  for (std::size_t n = 0; n < t.size(); ++n) {
    const std::size_t i =
        static_cast<std::size_t>(t.pixels[n].y) * scene.width + t.pixels[n].x;
    hit += pred[i] == t.adversarial_labels[n];
  }
  return t.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(t.size());
}

}  // namespace

int main() {
  Timer total;
  const fs::path out = "acceptance_out";
  fs::create_directories(out);

  std::fprintf(stderr, "building datasets and the model zoo...\n");
  Timer setup;
  data::GenSpec spec;
  auto [train_a, val_a] = data::build_split(kSplitA, kTrainScenes, kValScenes, spec);
  auto [train_b, val_b] = data::build_split(kSplitB, kTrainScenes, kValScenes, spec);
  log_stage("datasets", setup);

  Timer zoo;
  const models::SegModel seg_a = models::train_seg(train_a, spec.classes, "seg-a", kSegTrain, kSplitA);
  const models::SegModel seg_a2 = models::train_seg(train_b, spec.classes, "seg-a", kSegTrain, kSplitB);
  const models::SegModel seg_b = models::train_seg(train_a, spec.classes, "seg-b", kSegTrain, kSplitA);
  const models::DetModel det_a = models::train_det(train_a, spec.classes, "det-a", kDetTrain, kSplitA);
  const models::DetModel det_a2 = models::train_det(train_b, spec.classes, "det-a", kDetTrain, kSplitB);
  const models::DetModel det_b = models::train_det(train_a, spec.classes, "det-b", kDetTrain, kSplitA);
  const models::DetModel det_c = models::train_det(train_a, spec.classes, "det-c", kDetTrain, kSplitA);
  log_stage("model zoo (7 models)", zoo);

  criterion_gradients();

  // shared attack batches
  std::fprintf(stderr, "running attack batches...\n");
  Timer batches;
  AttackBatch seg_batch = attack_seg(seg_a, val_a);
  AttackBatch det_batch = attack_det(det_a, val_a, 0.90);
  log_stage("self-attack batches (100 scenes)", batches);

  // criterion 2: segmentation self-attack
  {
    const double clean = transfer::seg_miou_on(seg_a, val_a);
    const double attacked = transfer::seg_miou_on(seg_a, val_a, seg_batch.perts);
    const bool pass = clean >= 85.0 && attacked <= 0.20 * clean;
    report(2, "segmentation self-attack collapses mIOU", pass,
           fmt("clean %.2f, attacked %.2f (ratio %.3f, need <= 0.200)", clean, attacked,
               attacked / clean));
  }

  // criterion 3: detection self-attack with fresh proposals
  {
    const double clean = transfer::det_map_on(det_a, val_a);
    const double attacked = transfer::det_map_on(det_a, val_a, det_batch.perts);
    const bool pass = attacked <= 0.30 * clean;
    report(3, "detection self-attack collapses mAP on fresh proposals", pass,
           fmt("clean %.2f, attacked %.2f (ratio %.3f, need <= 0.300)", clean, attacked,
               clean > 0 ? attacked / clean : 0.0));
  }

  // criterion 4: permuted perturbations are harmless
  {
    const double seg_clean = transfer::seg_miou_on(seg_a, val_a);
    const double seg_perm =
        transfer::permuted_control(seg_batch.perts, transfer::Model(seg_a), val_a, kControlSeed);
    const double det_clean = transfer::det_map_on(det_a, val_a);
    const double det_perm =
        transfer::permuted_control(det_batch.perts, transfer::Model(det_a), val_a, kControlSeed);
    const bool pass =
        std::fabs(seg_clean - seg_perm) <= 2.0 && std::fabs(det_clean - det_perm) <= 2.0;
    report(4, "permuted controls stay within 2 points of clean", pass,
           fmt("miou %.2f vs %.2f, map %.2f vs %.2f", seg_clean, seg_perm, det_clean,
               det_perm));
  }

  // criterion 5: denser attack targets hurt the detector more
  {
    Timer t;
    const std::vector<data::Scene> subset(val_a.begin(), val_a.begin() + 25);
    AttackBatch b70 = attack_det(det_a, subset, 0.70);
    AttackBatch b80 = attack_det(det_a, subset, 0.80);
    std::vector<attack::Perturbation> b90(det_batch.perts.begin(),
                                          det_batch.perts.begin() + 25);
    const double m70 = transfer::det_map_on(det_a, subset, b70.perts);
    const double m80 = transfer::det_map_on(det_a, subset, b80.perts);
    const double m90 = transfer::det_map_on(det_a, subset, b90);
    const bool pass = m70 >= m80 - 1.0 && m80 >= m90 - 1.0;
    report(5, "attacked mAP decreases with target denseness", pass,
           fmt("map@0.70 %.2f >= map@0.80 %.2f >= map@0.90 %.2f (+1 tolerance)", m70, m80,
               m90));
    log_stage("denseness batches", t);
  }

  // criterion 6: convergence rate and trace artifacts
  {
    std::ostringstream summary;
    summary << "scene,task,targets,iterations,converged\n";
    for (std::size_t i = 0; i < seg_batch.perts.size(); ++i) {
      attack::write_trace_csv(seg_batch.traces[i],
                              out / fmt("trace_seg_%03zu.csv", i));
      summary << i << ",seg," << seg_batch.traces[i].initial_targets << ","
              << seg_batch.perts[i].iterations_run << "," << seg_batch.perts[i].converged
              << "\n";
    }
    for (std::size_t i = 0; i < det_batch.perts.size(); ++i) {
      attack::write_trace_csv(det_batch.traces[i],
                              out / fmt("trace_det_%03zu.csv", i));
      summary << i << ",det," << det_batch.traces[i].initial_targets << ","
              << det_batch.perts[i].iterations_run << "," << det_batch.perts[i].converged
              << "\n";
    }
    io::write_text_file(out / "attacks.csv", summary.str());
    const int converged = seg_batch.converged + det_batch.converged;
    const bool pass = converged >= 95;
    report(6, "at least 95 of 100 attacks converge before the budget", pass,
           fmt("%d/100 converged (seg %d, det %d); traces in %s", converged,
               seg_batch.converged, det_batch.converged, out.string().c_str()));
  }

  // criterion 7: perceptibility bound and permutation invariance
  {
    const double worst = std::max(max_perceptibility(seg_batch, true),
                                  max_perceptibility(det_batch, true));
    const Tensor& r = seg_batch.perts[0].r;
    const double p0 = metrics::perceptibility(r);
    const double p1 = metrics::perceptibility(metrics::permute_perturbation(r, 5));
    const bool pass = worst <= 1e-2 && p0 == p1;
    report(7, "perturbations are imperceptible and permutation-invariant", pass,
           fmt("max p %.2e (bound 1e-2), permuted p equal exactly: %s", worst,
               p0 == p1 ? "yes" : "no"));
  }

  // criterion 8: cross-training transfer ordering
  {
    Timer t;
    bool pass = true;
    std::ostringstream detail;
    // segmentation: source seg-a, victim same arch trained on split B
    {
      const double clean = transfer::seg_miou_on(seg_a2, val_a);
      const double cross = transfer::seg_miou_on(seg_a2, val_a, seg_batch.perts);
      const double perm = transfer::permuted_control(seg_batch.perts,
                                                     transfer::Model(seg_a2), val_a,
                                                     kControlSeed);
      const double self_attacked = transfer::seg_miou_on(seg_a, val_a, seg_batch.perts);
      const bool ok = (clean - cross) >= 5.0 * (clean - perm) && self_attacked <= cross &&
                      cross < perm;
      pass = pass && ok;
      detail << fmt("seg clean %.2f cross %.2f perm %.2f self %.2f; ", clean, cross, perm,
                    self_attacked);
    }
    // detection: source det-a, victim same arch trained on split B
    {
      const double clean = transfer::det_map_on(det_a2, val_a);
      const double cross = transfer::det_map_on(det_a2, val_a, det_batch.perts);
      const double perm = transfer::permuted_control(det_batch.perts,
                                                     transfer::Model(det_a2), val_a,
                                                     kControlSeed);
      const double self_attacked = transfer::det_map_on(det_a, val_a, det_batch.perts);
      const bool ok = (clean - cross) >= 5.0 * (clean - perm) && self_attacked <= cross &&
                      cross < perm;
      pass = pass && ok;
      detail << fmt("det clean %.2f cross %.2f perm %.2f self %.2f", clean, cross, perm,
                    self_attacked);
    }
    report(8, "cross-training transfer is strong but below self-attack", pass, detail.str());
    log_stage("cross-training evals", t);
  }

  // criterion 9: summed heterogeneous perturbations confuse both sources
  AttackBatch segb_batch;
  {
    Timer t;
    segb_batch = attack_seg(seg_b, val_a);
    const double own_a = transfer::seg_miou_on(seg_a, val_a, seg_batch.perts);
    const double own_b = transfer::seg_miou_on(seg_b, val_a, segb_batch.perts);
    std::vector<std::vector<attack::Perturbation>> parts{seg_batch.perts, segb_batch.perts};
    const std::vector<attack::Perturbation> summed = transfer::combine_per_scene(parts);
    const double sum_on_a = transfer::seg_miou_on(seg_a, val_a, summed);
    const double sum_on_b = transfer::seg_miou_on(seg_b, val_a, summed);
    const double clean_a = transfer::seg_miou_on(seg_a, val_a);
    const double clean_b = transfer::seg_miou_on(seg_b, val_a);
    const double perm_a =
        transfer::permuted_control(summed, transfer::Model(seg_a), val_a, kControlSeed);
    const double perm_b =
        transfer::permuted_control(summed, transfer::Model(seg_b), val_a, kControlSeed);
    const bool pass = std::fabs(sum_on_a - own_a) <= 10.0 &&
                      std::fabs(sum_on_b - own_b) <= 10.0 &&
                      std::fabs(perm_a - clean_a) <= 2.0 && std::fabs(perm_b - clean_b) <= 2.0;
    report(9, "summed perturbation confuses both source architectures", pass,
           fmt("A: own %.2f sum %.2f perm %.2f/%.2f; B: own %.2f sum %.2f perm %.2f/%.2f",
               own_a, sum_on_a, perm_a, clean_a, own_b, sum_on_b, perm_b, clean_b));
    log_stage("combination evals", t);
  }

  // criterion 10: black-box attack on the held-out detector
  {
    Timer t;
    AttackBatch detb_batch = attack_det(det_b, val_a, 0.90);
    std::vector<std::vector<attack::Perturbation>> parts{det_batch.perts, detb_batch.perts,
                                                         seg_batch.perts};
    const std::vector<attack::Perturbation> summed = transfer::combine_per_scene(parts);
    const double attacked = transfer::black_box_eval(summed, transfer::Model(det_c), val_a);
    const double perm =
        transfer::permuted_control(summed, transfer::Model(det_c), val_a, kControlSeed);
    const bool pass = attacked <= perm - 5.0;
    report(10, "summed sources drop the held-out detector below its control", pass,
           fmt("attacked %.2f vs permuted control %.2f (need 5 point gap)", attacked, perm));
    log_stage("black-box evals", t);
  }

  criterion_oracles();

  // criterion 12: pre-specified masks
  {
    Timer t;
    attack::AttackConfig cfg{0.5, 200, "mask"};
    std::size_t hits = 0, targets_total = 0;
    for (int i = 0; i < 10; ++i) {
      const data::Scene& scene = val_a[i];
      const std::vector<int> mask = disk_mask(scene, 1 + (i % 4), 32, 32, 12);
      auto tset = targets::build_mask_targets(scene, mask);
      auto [pert, trace] = attack::run_attack(seg_a, scene, tset, cfg);
      const double agree = mask_agreement(seg_a, scene, tset, pert.r);
      hits += static_cast<std::size_t>(agree * tset.size() + 0.5);
      targets_total += tset.size();
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(targets_total);

    // one perturbation, two models, two masks
    double agree_a_total = 0.0, agree_b_total = 0.0;
    std::size_t na = 0, nb = 0;
    for (int i = 0; i < 5; ++i) {
      const data::Scene& scene = val_a[i];
      const std::vector<int> mask_a = disk_mask(scene, 1, 20, 32, 10);
      const std::vector<int> mask_b = square_mask(scene, 2, 44, 32, 9);
      auto ta = targets::build_mask_targets(scene, mask_a);
      auto tb = targets::build_mask_targets(scene, mask_b);
      auto [ra, tra] = attack::run_attack(seg_a, scene, ta, cfg);
      auto [rb, trb] = attack::run_attack(seg_b, scene, tb, cfg);
      std::vector<attack::Perturbation> parts{ra, rb};
      const attack::Perturbation sum = transfer::combine_perturbations(parts);
      agree_a_total += mask_agreement(seg_a, scene, ta, sum.r) * ta.size();
      agree_b_total += mask_agreement(seg_b, scene, tb, sum.r) * tb.size();
      na += ta.size();
      nb += tb.size();
    }
    const double agree_a = agree_a_total / na, agree_b = agree_b_total / nb;
    const bool pass = frac >= 0.90 && agree_a >= 0.80 && agree_b >= 0.80;
    report(12, "mask attacks force the prescribed outputs", pass,
           fmt("single-model %.3f (need 0.90); summed two-model %.3f / %.3f (need 0.80)",
               frac, agree_a, agree_b));
    log_stage("mask attacks", t);
  }

  // criterion 13: determinism
  {
    const data::Scene scene_a = data::generate_scene(data::scene_seed(kSplitA, kTrainScenes),
                                                     spec);
    const data::Scene scene_b = data::generate_scene(data::scene_seed(kSplitA, kTrainScenes),
                                                     spec);
    const bool scene_same =
        scene_a.label_map == scene_b.label_map &&
        std::memcmp(scene_a.image.data(), scene_b.image.data(),
                    scene_a.image.size() * sizeof(double)) == 0;
    auto t0 = targets::build_seg_targets(val_a[0],
                                         scene_permutation(spec.classes, val_a[0].seed));
    attack::AttackConfig cfg{0.5, 200, "seg"};
    auto [p1, tr1] = attack::run_attack(seg_a, val_a[0], t0, cfg);
    auto [p2, tr2] = attack::run_attack(seg_a, val_a[0], t0, cfg);
    const bool attack_same =
        p1.iterations_run == p2.iterations_run &&
        std::memcmp(p1.r.data(), p2.r.data(), p1.r.size() * sizeof(double)) == 0;
    const bool pass = scene_same && attack_same;
    report(13, "every pipeline stage reproduces bit-identical results", pass,
           fmt("scene %s, attack %s (%d iterations)", scene_same ? "identical" : "differs",
               attack_same ? "identical" : "differs", p1.iterations_run));
  }

  std::fprintf(stderr, "acceptance total: %.1fs\n", total.seconds());
  if (failures) {
    std::printf("%d criterion(s) FAILED\n", failures);
    return 1;
  }
  std::printf("all 13 criteria passed\n");
  return 0;
}
