#include "adv/attack.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "adv/io.hpp"
#include "adv/tape.hpp"

namespace adv::attack {

namespace {

// Segmentation targets: rows of the score matrix are the target pixels,
// gathered from the dense C x H x W output.
class SegScorer : public TargetScorer {
 public:
  SegScorer(const models::SegModel& model, const targets::TargetSet& t)
      : model_(model), targets_(t) {}

  std::size_t target_count() const override { return targets_.size(); }
  int class_count() const override { return model_.classes; }

  Tensor scores(const Tensor& x) override {
    forward_ = models::seg_forward(model_, x);
    const Tensor& dense = forward_.tape.value(forward_.scores);
    const std::size_t plane = dense.extent(1) * dense.extent(2);
    const int classes = model_.classes;
    Tensor out({std::max<std::size_t>(targets_.size(), 1), static_cast<std::size_t>(classes)});
    for (std::size_t n = 0; n < targets_.size(); ++n) {
      const std::size_t pix = static_cast<std::size_t>(targets_.pixels[n].y) * model_.width +
                              targets_.pixels[n].x;
      for (int c = 0; c < classes; ++c) out.at(n, c) = dense[c * plane + pix];
    }
    return out;
  }

  Tensor backprop(const Tensor& coeffs) override {
    const std::size_t plane = static_cast<std::size_t>(model_.height) * model_.width;
    Tensor seed({static_cast<std::size_t>(model_.classes),
                 static_cast<std::size_t>(model_.height),
                 static_cast<std::size_t>(model_.width)});
    for (std::size_t n = 0; n < targets_.size(); ++n) {
      const std::size_t pix = static_cast<std::size_t>(targets_.pixels[n].y) * model_.width +
                              targets_.pixels[n].x;
      for (int c = 0; c < model_.classes; ++c) seed[c * plane + pix] += coeffs.at(n, c);
    }
    return grad_input(forward_.tape, forward_.scores, seed, forward_.input);
  }

 private:
  const models::SegModel& model_;
  const targets::TargetSet& targets_;
  models::SegForward forward_;
};

// Detection targets: the fixed proposal boxes chosen at attack setup.
class DetScorer : public TargetScorer {
 public:
  DetScorer(const models::DetModel& model, const targets::TargetSet& t)
      : model_(model), targets_(t) {}

  std::size_t target_count() const override { return targets_.size(); }
  int class_count() const override { return model_.classes; }

  Tensor scores(const Tensor& x) override {
    forward_ = models::classify_boxes(model_, x, targets_.boxes);
    return forward_.tape.value(forward_.scores);
  }

  Tensor backprop(const Tensor& coeffs) override {
    return grad_input(forward_.tape, forward_.scores, coeffs, forward_.input);
  }

 private:
  const models::DetModel& model_;
  const targets::TargetSet& targets_;
  models::BoxScores forward_;
};

Tensor coeffs_for(std::span<const std::size_t> active, const targets::TargetSet& t,
                  std::size_t rows, int classes) {
  Tensor coeffs({rows, static_cast<std::size_t>(classes)});
  for (std::size_t n : active) {
    coeffs.at(n, t.adversarial_labels[n]) += 1.0;
    coeffs.at(n, t.original_labels[n]) -= 1.0;
  }
  return coeffs;
}

}  // namespace

std::unique_ptr<TargetScorer> make_seg_scorer(const models::SegModel& model,
                                              const targets::TargetSet& t) {
  return std::make_unique<SegScorer>(model, t);
}

std::unique_ptr<TargetScorer> make_det_scorer(const models::DetModel& model,
                                              const targets::TargetSet& t) {
  return std::make_unique<DetScorer>(model, t);
}

std::vector<std::size_t> active_indices(const Tensor& scores_nc,
                                        std::span<const int> labels) {
  std::vector<std::size_t> active;
  const int classes = static_cast<int>(scores_nc.extent(1));
  for (std::size_t n = 0; n < labels.size(); ++n) {
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (scores_nc.at(n, c) > scores_nc.at(n, best)) best = c;
    if (best == labels[n]) active.push_back(n);
  }
  return active;
}

std::vector<std::size_t> active_targets(const models::SegModel& model, const Tensor& x,
                                        const targets::TargetSet& t) {
  if (t.empty()) return {};
  SegScorer scorer(model, t);
  return active_indices(scorer.scores(x), t.original_labels);
}

std::vector<std::size_t> active_targets(const models::DetModel& model, const Tensor& x,
                                        const targets::TargetSet& t) {
  if (t.empty()) return {};
  DetScorer scorer(model, t);
  return active_indices(scorer.scores(x), t.original_labels);
}

Tensor dag_step(TargetScorer& scorer, const Tensor& x, const targets::TargetSet& t,
                std::span<const std::size_t> active) {
  if (active.empty()) throw std::invalid_argument("dag_step: active set is empty");
  const Tensor scores = scorer.scores(x);
  return scorer.backprop(coeffs_for(active, t, scores.extent(0), scorer.class_count()));
}

Tensor dag_step(const models::SegModel& model, const Tensor& x, const targets::TargetSet& t,
                std::span<const std::size_t> active) {
  SegScorer scorer(model, t);
  return dag_step(scorer, x, t, active);
}

Tensor dag_step(const models::DetModel& model, const Tensor& x, const targets::TargetSet& t,
                std::span<const std::size_t> active) {
  DetScorer scorer(model, t);
  return dag_step(scorer, x, t, active);
}

Tensor normalize_step(const Tensor& rm, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("normalize_step: gamma must be positive");
  const double norm = rm.max_abs();
  if (norm == 0.0)
    throw std::runtime_error("normalize_step: zero gradient (vanished gradient)");
  Tensor out = rm;
  const double s = gamma / norm;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

std::pair<Perturbation, AttackTrace> run_attack(TargetScorer& scorer, const Tensor& x0,
                                                const targets::TargetSet& t,
                                                const AttackConfig& cfg,
                                                const std::string& source_tag) {
  if (!(cfg.gamma > 0.0) || cfg.max_iterations < 1)
    throw std::invalid_argument("run_attack: bad attack config");
  Perturbation pert;
  pert.r = Tensor(x0.shape());
  pert.source = source_tag;
  pert.config = cfg;
  AttackTrace trace;
  trace.initial_targets = t.size();

  if (t.empty()) {
    pert.converged = true;
    return {std::move(pert), std::move(trace)};
  }

  Tensor x = x0;
  bool converged = false;
  int m = 0;
  while (m < cfg.max_iterations) {
    const Tensor scores = scorer.scores(x);
    const std::vector<std::size_t> active = active_indices(scores, t.original_labels);
    if (active.empty()) {
      converged = true;
      break;
    }
    const Tensor rm =
        scorer.backprop(coeffs_for(active, t, scores.extent(0), scorer.class_count()));
    const double norm = rm.max_abs();
    trace.rows.push_back({m, active.size(), norm});
    if (norm == 0.0) break;  // vanished gradient; report non-convergence
    const double s = cfg.gamma / norm;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double step = rm[i] * s;
      pert.r[i] += step;
      x[i] += step;
    }
    ++m;
  }
  pert.iterations_run = m;
  pert.converged = converged;
  return {std::move(pert), std::move(trace)};
}

std::pair<Perturbation, AttackTrace> run_attack(const models::SegModel& model,
                                                const data::Scene& scene,
                                                const targets::TargetSet& t,
                                                const AttackConfig& cfg) {
  SegScorer scorer(model, t);
  const Tensor x0 = models::preprocess(model.channel_mean, scene.image);
  return run_attack(scorer, x0, t, cfg, model.tag());
}

std::pair<Perturbation, AttackTrace> run_attack(const models::DetModel& model,
                                                const data::Scene& scene,
                                                const targets::TargetSet& t,
                                                const AttackConfig& cfg) {
  DetScorer scorer(model, t);
  const Tensor x0 = models::preprocess(model.channel_mean, scene.image);
  return run_attack(scorer, x0, t, cfg, model.tag());
}

Tensor apply_perturbation(const Tensor& x, const Tensor& r, const Tensor& mean_image) {
  if (!same_shape(x, r) || !same_shape(x, mean_image))
    throw std::invalid_argument("apply_perturbation: shape mismatch (" + x.shape_str() +
                                ", " + r.shape_str() + ", " + mean_image.shape_str() + ")");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = out[i] + r[i] + mean_image[i];
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    out[i] = v;
  }
  return out;
}

Tensor mean_image_of(const std::array<double, 3>& channel_mean, std::size_t height,
                     std::size_t width) {
  Tensor mean({3, height, width});
  const std::size_t plane = height * width;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) mean[c * plane + i] = channel_mean[c];
  return mean;
}

Tensor adversarial_image(const Tensor& raw, const Tensor& r) {
  if (!same_shape(raw, r))
    throw std::invalid_argument("adversarial_image: shape mismatch (" + raw.shape_str() +
                                " vs " + r.shape_str() + ")");
  Tensor out = raw;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = out[i] + r[i];
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    out[i] = v;
  }
  return out;
}

void save_perturbation(const Perturbation& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write("DAGR", 4);
  out.put(1);  // version
  out.put(static_cast<char>(p.r.rank()));
  for (std::size_t e : p.r.shape()) io::put_u32(out, static_cast<std::uint32_t>(e));
  for (std::size_t i = 0; i < p.r.size(); ++i) io::put_f64(out, p.r[i]);
  out << "source=" << p.source << "\n"
      << "task=" << p.config.task << "\n"
      << "gamma=" << p.config.gamma << "\n"
      << "max_iterations=" << p.config.max_iterations << "\n"
      << "iterations=" << p.iterations_run << "\n"
      << "converged=" << (p.converged ? 1 : 0) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Perturbation load_perturbation(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DAGR", 4) != 0)
    throw std::runtime_error(path.string() + ": bad perturbation magic");
  const int version = in.get();
  if (version != 1) throw std::runtime_error(path.string() + ": unsupported version");
  const int rank = in.get();
  if (rank <= 0 || rank > 4) throw std::runtime_error(path.string() + ": bad rank");
  std::vector<std::size_t> shape(rank);
  std::size_t count = 1;
  for (int d = 0; d < rank; ++d) {
    shape[d] = io::get_u32(in);
    count *= shape[d];
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = io::get_f64(in);
  Perturbation p;
  p.r = Tensor::of(std::move(shape), std::move(values));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ": bad trailer line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "source") p.source = value;
    else if (key == "task") p.config.task = value;
    else if (key == "gamma") p.config.gamma = std::stod(value);
    else if (key == "max_iterations") p.config.max_iterations = std::stoi(value);
    else if (key == "iterations") p.iterations_run = std::stoi(value);
    else if (key == "converged") p.converged = value == "1";
  }
  return p;
}

void write_trace_csv(const AttackTrace& trace, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "iteration,active_targets,step_norm\n";
  for (const TraceRow& row : trace.rows)
    os << row.iteration << "," << row.active_targets << "," << row.step_norm << "\n";
  io::write_text_file(path, os.str());
}

}  // namespace adv::attack
