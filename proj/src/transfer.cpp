#include "adv/transfer.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "adv/io.hpp"
#include "adv/rng.hpp"

namespace adv::transfer {

namespace {

std::vector<std::string> split_sources(const std::string& provenance) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream is(provenance);
  while (std::getline(is, token, '+'))
    if (!token.empty()) out.push_back(token);
  return out;
}

void check_alignment(std::span<const attack::Perturbation> per_scene,
                     std::span<const data::Scene> scenes) {
  if (per_scene.empty()) return;
  if (per_scene.size() != scenes.size())
    throw std::invalid_argument("transfer_eval: one perturbation per scene required");
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (!same_shape(per_scene[i].r, scenes[i].image))
      throw std::invalid_argument("transfer_eval: perturbation shape " +
                                  per_scene[i].r.shape_str() + " does not match scene " +
                                  scenes[i].image.shape_str());
}

}  // namespace

std::string model_tag(const Model& victim) {
  if (std::holds_alternative<models::SegModel>(victim))
    return std::get<models::SegModel>(victim).tag();
  return std::get<models::DetModel>(victim).tag();
}

bool is_seg(const Model& victim) {
  return std::holds_alternative<models::SegModel>(victim);
}

double seg_miou_on(const models::SegModel& model, std::span<const data::Scene> scenes,
                   std::span<const attack::Perturbation> per_scene) {
  check_alignment(per_scene, scenes);
  std::vector<std::vector<int>> preds, truths;
  preds.reserve(scenes.size());
  truths.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Tensor image = per_scene.empty()
                             ? scenes[i].image
                             : attack::adversarial_image(scenes[i].image, per_scene[i].r);
    preds.push_back(models::seg_predict(model, image));
    truths.push_back(scenes[i].label_map);
  }
  return metrics::miou(preds, truths, model.classes);
}

double det_map_on(const models::DetModel& model, std::span<const data::Scene> scenes,
                  std::span<const attack::Perturbation> per_scene) {
  check_alignment(per_scene, scenes);
  std::vector<std::vector<models::Detection>> dets;
  std::vector<std::vector<data::SceneBox>> truths;
  dets.reserve(scenes.size());
  truths.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Tensor image = per_scene.empty()
                             ? scenes[i].image
                             : attack::adversarial_image(scenes[i].image, per_scene[i].r);
    dets.push_back(models::detect(model, image));
    truths.push_back(scenes[i].boxes);
  }
  return metrics::map_score(dets, truths, 0.5, model.classes);
}

double transfer_eval(std::span<const attack::Perturbation> per_scene, const Model& victim,
                     std::span<const data::Scene> scenes) {
  if (is_seg(victim)) return seg_miou_on(std::get<models::SegModel>(victim), scenes, per_scene);
  return det_map_on(std::get<models::DetModel>(victim), scenes, per_scene);
}

attack::Perturbation combine_perturbations(std::span<const attack::Perturbation> parts) {
  if (parts.empty()) throw std::invalid_argument("combine_perturbations: no parts");
  attack::Perturbation sum = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const attack::Perturbation& p = parts[i];
    if (!same_shape(sum.r, p.r))
      throw std::invalid_argument("combine_perturbations: shape mismatch (" +
                                  sum.r.shape_str() + " vs " + p.r.shape_str() + ")");
    for (std::size_t j = 0; j < sum.r.size(); ++j) sum.r[j] += p.r[j];
    sum.source += "+" + p.source;
    sum.iterations_run += p.iterations_run;
    sum.converged = sum.converged && p.converged;
  }
  return sum;
}

std::vector<attack::Perturbation> combine_per_scene(
    std::span<const std::vector<attack::Perturbation>> sources) {
  if (sources.empty()) throw std::invalid_argument("combine_per_scene: no sources");
  const std::size_t n = sources[0].size();
  for (const auto& s : sources)
    if (s.size() != n)
      throw std::invalid_argument("combine_per_scene: sources cover different scene counts");
  std::vector<attack::Perturbation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<attack::Perturbation> parts;
    parts.reserve(sources.size());
    for (const auto& s : sources) parts.push_back(s[i]);
    out.push_back(combine_perturbations(parts));
  }
  return out;
}

double permuted_control(std::span<const attack::Perturbation> per_scene, const Model& victim,
                        std::span<const data::Scene> scenes, std::uint64_t seed) {
  double total = 0.0;
  for (int k = 0; k < 3; ++k) {
    std::vector<attack::Perturbation> permuted(per_scene.begin(), per_scene.end());
    for (std::size_t i = 0; i < permuted.size(); ++i)
      permuted[i].r = metrics::permute_perturbation(
          permuted[i].r, Rng::derive(seed, (static_cast<std::uint64_t>(k) << 32) + i));
    total += transfer_eval(permuted, victim, scenes);
  }
  return total / 3.0;
}

double black_box_eval(std::span<const attack::Perturbation> summed, const Model& victim,
                      std::span<const data::Scene> scenes) {
  const std::string tag = model_tag(victim);
  for (const attack::Perturbation& p : summed)
    for (const std::string& source : split_sources(p.source))
      if (source == tag)
        throw std::invalid_argument("black_box_eval: victim '" + tag +
                                    "' appears in perturbation provenance '" + p.source + "'");
  return transfer_eval(summed, victim, scenes);
}

const MatrixCell* TransferMatrix::find(const std::string& source, const std::string& victim,
                                       const std::string& condition) const {
  for (const MatrixCell& c : cells)
    if (c.source == source && c.victim == victim && c.condition == condition) return &c;
  return nullptr;
}

TransferMatrix build_transfer_matrix(
    std::span<const std::pair<std::string, std::vector<attack::Perturbation>>> sources,
    std::span<const Model> victims, std::span<const data::Scene> scenes,
    std::uint64_t perm_seed) {
  TransferMatrix m;
  for (const Model& victim : victims) {
    const std::string vtag = model_tag(victim);
    const std::string metric = is_seg(victim) ? "miou" : "map";
    m.cells.push_back({"none", vtag, "orig", metric, transfer_eval({}, victim, scenes)});
  }
  for (const auto& [name, perts] : sources) {
    for (const Model& victim : victims) {
      const std::string vtag = model_tag(victim);
      const std::string metric = is_seg(victim) ? "miou" : "map";
      m.cells.push_back({name, vtag, "adv", metric, transfer_eval(perts, victim, scenes)});
      m.cells.push_back(
          {name, vtag, "perm", metric, permuted_control(perts, victim, scenes, perm_seed)});
    }
  }
  return m;
}

void write_matrix_csv(const TransferMatrix& m, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "source,victim,condition,metric,value\n";
  for (const MatrixCell& c : m.cells)
    os << c.source << "," << c.victim << "," << c.condition << "," << c.metric << ","
       << c.value << "\n";
  io::write_text_file(path, os.str());
}

std::string render_matrix_table(const TransferMatrix& m) {
  std::vector<std::string> victims, rows;
  for (const MatrixCell& c : m.cells) {
    if (std::find(victims.begin(), victims.end(), c.victim) == victims.end())
      victims.push_back(c.victim);
    const std::string row = c.source + (c.condition == "perm" ? " (perm)" : "");
    if (c.source != "none" || c.condition == "orig") {
      const std::string label = c.source == "none" ? "clean" : row;
      if (std::find(rows.begin(), rows.end(), label) == rows.end()) rows.push_back(label);
    }
  }

  std::size_t name_w = 8;
  for (const std::string& r : rows) name_w = std::max(name_w, r.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w + 2)) << "source";
  for (const std::string& v : victims) os << std::right << std::setw(14) << v;
  os << "\n";
  auto value_of = [&](const std::string& row_label, const std::string& victim) {
    std::string source = row_label, condition = "adv";
    if (row_label == "clean") {
      source = "none";
      condition = "orig";
    } else if (row_label.size() > 7 && row_label.substr(row_label.size() - 7) == " (perm)") {
      source = row_label.substr(0, row_label.size() - 7);
      condition = "perm";
    }
    return m.find(source, victim, condition);
  };
  for (const std::string& r : rows) {
    os << std::left << std::setw(static_cast<int>(name_w + 2)) << r;
    for (const std::string& v : victims) {
      const MatrixCell* cell = value_of(r, v);
      if (cell)
        os << std::right << std::setw(14) << std::fixed << std::setprecision(2) << cell->value;
      else
        os << std::right << std::setw(14) << "-";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace adv::transfer
