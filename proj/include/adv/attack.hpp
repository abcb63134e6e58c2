#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adv/dataset.hpp"
#include "adv/models.hpp"
#include "adv/targets.hpp"
#include "adv/tensor.hpp"

namespace adv::attack {

struct AttackConfig {
  double gamma = 0.5;       // step scale; every applied step has this Linf norm
  int max_iterations = 200; // 200 for segmentation, 150 for detection
  std::string task = "seg";
};

struct Perturbation {
  Tensor r;  // image-shaped, signed intensity units
  std::string source;
  AttackConfig config;
  int iterations_run = 0;
  bool converged = false;
};

struct TraceRow {
  int iteration = 0;
  std::size_t active_targets = 0;
  double step_norm = 0.0;  // Linf of the raw gradient sum, before scaling
};

struct AttackTrace {
  std::size_t initial_targets = 0;
  std::vector<TraceRow> rows;
};

// Model adapter for the attack loop: one forward produces the N x C target
// score matrix and retains state for a single backward pass.
class TargetScorer {
 public:
  virtual ~TargetScorer() = default;
  virtual std::size_t target_count() const = 0;
  virtual int class_count() const = 0;
  // Score matrix at x; must be called before backprop for the same x.
  virtual Tensor scores(const Tensor& x) = 0;
  // d/dx of sum(coeffs * scores), consuming the state retained by scores().
  virtual Tensor backprop(const Tensor& coeffs) = 0;
};

std::unique_ptr<TargetScorer> make_seg_scorer(const models::SegModel& model,
                                              const targets::TargetSet& t);
std::unique_ptr<TargetScorer> make_det_scorer(const models::DetModel& model,
                                              const targets::TargetSet& t);

// Indices whose argmax score equals the original label; argmax ties break
// toward the smaller class index.
std::vector<std::size_t> active_indices(const Tensor& scores_nc,
                                        std::span<const int> labels);
std::vector<std::size_t> active_targets(const models::SegModel& model, const Tensor& x,
                                        const targets::TargetSet& t);
std::vector<std::size_t> active_targets(const models::DetModel& model, const Tensor& x,
                                        const targets::TargetSet& t);

// Sum over the active targets of (grad of adversarial-class score minus grad
// of original-class score), computed as one backward pass.
Tensor dag_step(TargetScorer& scorer, const Tensor& x, const targets::TargetSet& t,
                std::span<const std::size_t> active);
Tensor dag_step(const models::SegModel& model, const Tensor& x, const targets::TargetSet& t,
                std::span<const std::size_t> active);
Tensor dag_step(const models::DetModel& model, const Tensor& x, const targets::TargetSet& t,
                std::span<const std::size_t> active);

// r * gamma / ||r||_inf. Rejects an all-zero input (vanished gradient).
Tensor normalize_step(const Tensor& rm, double gamma);

// The attack loop: while targets remain correctly classified and the
// iteration budget lasts, take normalized accumulated-gradient steps on the
// un-truncated working image. Converged means the active set emptied.
std::pair<Perturbation, AttackTrace> run_attack(TargetScorer& scorer, const Tensor& x0,
                                                const targets::TargetSet& t,
                                                const AttackConfig& cfg,
                                                const std::string& source_tag);
std::pair<Perturbation, AttackTrace> run_attack(const models::SegModel& model,
                                                const data::Scene& scene,
                                                const targets::TargetSet& t,
                                                const AttackConfig& cfg);
std::pair<Perturbation, AttackTrace> run_attack(const models::DetModel& model,
                                                const data::Scene& scene,
                                                const targets::TargetSet& t,
                                                const AttackConfig& cfg);

// Trunc(x + r + mean): the published image, every intensity clamped to
// [0, 255]. x is the mean-subtracted image the attack ran on.
Tensor apply_perturbation(const Tensor& x, const Tensor& r, const Tensor& mean_image);
Tensor mean_image_of(const std::array<double, 3>& channel_mean, std::size_t height,
                     std::size_t width);
// Convenience: clamp(raw + r), equivalent to the above for any mean.
Tensor adversarial_image(const Tensor& raw, const Tensor& r);

// Perturbation file: magic "DAGR", version byte, rank byte, extents (u32 LE),
// values (f64 LE), then a text trailer with source, config, iterations and
// convergence flag.
void save_perturbation(const Perturbation& p, const std::filesystem::path& path);
Perturbation load_perturbation(const std::filesystem::path& path);

void write_trace_csv(const AttackTrace& trace, const std::filesystem::path& path);

}  // namespace adv::attack
