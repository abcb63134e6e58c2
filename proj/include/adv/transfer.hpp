#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "adv/attack.hpp"
#include "adv/dataset.hpp"
#include "adv/metrics.hpp"
#include "adv/models.hpp"

namespace adv::transfer {

using Model = std::variant<models::SegModel, models::DetModel>;

std::string model_tag(const Model& victim);
bool is_seg(const Model& victim);

// Victim metric (mIOU or mAP, percent) on the scenes with the per-scene
// perturbations applied. Detection victims propose fresh boxes on the
// perturbed images; nothing from attack time is reused. Pass an empty span
// for the clean value.
double transfer_eval(std::span<const attack::Perturbation> per_scene, const Model& victim,
                     std::span<const data::Scene> scenes);

// Per-scene clean / perturbed evaluation pipelines.
double seg_miou_on(const models::SegModel& model, std::span<const data::Scene> scenes,
                   std::span<const attack::Perturbation> per_scene = {});
double det_map_on(const models::DetModel& model, std::span<const data::Scene> scenes,
                  std::span<const attack::Perturbation> per_scene = {});

// Elementwise sum; provenance is the sources joined with '+'.
attack::Perturbation combine_perturbations(std::span<const attack::Perturbation> parts);
std::vector<attack::Perturbation> combine_per_scene(
    std::span<const std::vector<attack::Perturbation>> sources);

// Mean victim metric over three row/column permutations of the perturbations.
double permuted_control(std::span<const attack::Perturbation> per_scene, const Model& victim,
                        std::span<const data::Scene> scenes, std::uint64_t seed);

// Transfer evaluation against a victim whose tag must not appear in the
// perturbations' provenance.
double black_box_eval(std::span<const attack::Perturbation> summed, const Model& victim,
                      std::span<const data::Scene> scenes);

struct MatrixCell {
  std::string source;  // "none" for the clean row
  std::string victim;
  std::string condition;  // "orig", "adv" or "perm"
  std::string metric;     // "miou" or "map"
  double value = 0.0;
};

struct TransferMatrix {
  std::vector<MatrixCell> cells;
  const MatrixCell* find(const std::string& source, const std::string& victim,
                         const std::string& condition) const;
};

// Rows: clean, one per source (adv + perm). Columns: victims.
TransferMatrix build_transfer_matrix(
    std::span<const std::pair<std::string, std::vector<attack::Perturbation>>> sources,
    std::span<const Model> victims, std::span<const data::Scene> scenes,
    std::uint64_t perm_seed);

// CSV with header "source,victim,condition,metric,value".
void write_matrix_csv(const TransferMatrix& m, const std::filesystem::path& path);
std::string render_matrix_table(const TransferMatrix& m);

}  // namespace adv::transfer
