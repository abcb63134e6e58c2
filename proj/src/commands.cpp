#include "adv/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "adv/attack.hpp"
#include "adv/io.hpp"
#include "adv/metrics.hpp"
#include "adv/models.hpp"
#include "adv/rng.hpp"
#include "adv/targets.hpp"
#include "adv/transfer.hpp"

namespace adv::cli {

namespace fs = std::filesystem;

namespace {

std::string scene_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%06d", index);
  return buf;
}

std::string numbered(const char* prefix, int index, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d%s", prefix, index, suffix);
  return buf;
}

void write_resolved(const Config& cfg, const fs::path& dir) {
  io::write_text_file(dir / "resolved.cfg", cfg.resolved_text());
}

data::GenSpec spec_from_config(const Config& cfg) {
  data::GenSpec spec;
  spec.height = cfg.get_int("height", spec.height);
  spec.width = cfg.get_int("width", spec.width);
  spec.classes = cfg.get_int("classes", spec.classes);
  spec.min_shapes = cfg.get_int("min_shapes", spec.min_shapes);
  spec.max_shapes = cfg.get_int("max_shapes", spec.max_shapes);
  spec.min_size = cfg.get_int("min_size", spec.min_size);
  spec.max_size = cfg.get_int("max_size", spec.max_size);
  spec.noise_amplitude = cfg.get_int("noise_amplitude", spec.noise_amplitude);
  return spec;
}

void fill_spec_keys(Config& cfg, const data::GenSpec& spec) {
  cfg.set("height", std::to_string(spec.height));
  cfg.set("width", std::to_string(spec.width));
  cfg.set("classes", std::to_string(spec.classes));
  cfg.set("min_shapes", std::to_string(spec.min_shapes));
  cfg.set("max_shapes", std::to_string(spec.max_shapes));
  cfg.set("min_size", std::to_string(spec.min_size));
  cfg.set("max_size", std::to_string(spec.max_size));
  cfg.set("noise_amplitude", std::to_string(spec.noise_amplitude));
}

// Scene-level parallel loop; each index writes only its own results, so the
// outputs are identical for any job count.
void parallel_scenes(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::mutex error_mutex;
  const int count = std::min<std::size_t>(jobs, n);
  for (int t = 0; t < count; ++t)
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (std::thread& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<data::Scene> select_scenes(Dataset& ds, const std::string& split, int count) {
  std::vector<data::Scene>& pool = split == "train" ? ds.train : ds.val;
  if (split != "train" && split != "val")
    throw std::runtime_error("config: split must be 'train' or 'val', got '" + split + "'");
  if (count <= 0 || count >= static_cast<int>(pool.size())) return std::move(pool);
  return std::vector<data::Scene>(pool.begin(), pool.begin() + count);
}

std::vector<attack::Perturbation> load_perturbation_dir(const fs::path& dir,
                                                        std::size_t expected) {
  std::vector<attack::Perturbation> perts;
  for (std::size_t i = 0; i < expected; ++i) {
    const fs::path path = dir / numbered("pert", static_cast<int>(i), ".dagr");
    if (!fs::exists(path))
      throw std::runtime_error("perturbation file missing: " + path.string() +
                               " (need one per scene)");
    perts.push_back(attack::load_perturbation(path));
  }
  return perts;
}

double pixel_accuracy(const std::vector<std::vector<int>>& pred,
                      const std::vector<std::vector<int>>& truth) {
  std::size_t hit = 0, total = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    for (std::size_t i = 0; i < pred[s].size(); ++i) hit += pred[s][i] == truth[s][i];
    total += pred[s].size();
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const Config cfg = Config::parse_file(dir / "resolved.cfg");
  Dataset ds;
  ds.spec = spec_from_config(cfg);
  ds.base_seed = cfg.get_u64("base_seed", 0);
  const int n_train = cfg.get_int("n_train", 0);
  const int n_val = cfg.get_int("n_val", 0);
  for (int i = 0; i < n_train; ++i)
    ds.train.push_back(data::load_scene(dir / "train", scene_stem(i), ds.spec.classes,
                                        data::scene_seed(ds.base_seed, i)));
  for (int i = 0; i < n_val; ++i)
    ds.val.push_back(data::load_scene(dir / "val", scene_stem(i), ds.spec.classes,
                                      data::scene_seed(ds.base_seed, n_train + i)));
  return ds;
}

void cmd_gen_data(const Config& raw_cfg) {
  static constexpr const char* kKeys[] = {"out",        "overwrite", "base_seed",
                                          "n_train",    "n_val",     "height",
                                          "width",      "classes",   "min_shapes",
                                          "max_shapes", "min_size",  "max_size",
                                          "noise_amplitude"};
  raw_cfg.validate_keys(kKeys);
  Config cfg = raw_cfg;
  const fs::path out = cfg.get("out");
  const data::GenSpec spec = spec_from_config(cfg);
  const std::uint64_t base_seed = cfg.get_u64("base_seed", 0);
  const int n_train = cfg.get_int("n_train", 200);
  const int n_val = cfg.get_int("n_val", 50);
  prepare_output_dir(out, cfg.get_bool("overwrite", false));
  fs::create_directories(out / "train");
  fs::create_directories(out / "val");

  auto [train, val] = data::build_split(base_seed, n_train, n_val, spec);
  for (int i = 0; i < n_train; ++i) data::save_scene(train[i], out / "train", scene_stem(i));
  for (int i = 0; i < n_val; ++i) data::save_scene(val[i], out / "val", scene_stem(i));

  fill_spec_keys(cfg, spec);
  cfg.set("base_seed", std::to_string(base_seed));
  cfg.set("n_train", std::to_string(n_train));
  cfg.set("n_val", std::to_string(n_val));
  write_resolved(cfg, out);
  std::cout << "wrote " << n_train << " train + " << n_val << " val scenes to " << out.string()
            << "\n";
}

void cmd_train(const Config& raw_cfg) {
  static constexpr const char* kKeys[] = {"out",  "overwrite", "data", "task",
                                          "arch", "seed",      "epochs", "lr"};
  raw_cfg.validate_keys(kKeys);
  Config cfg = raw_cfg;
  const fs::path out = cfg.get("out");
  const std::string task = cfg.get("task");
  const std::string arch_letter = cfg.get("arch", "a");
  const std::string arch = task + "-" + arch_letter;
  models::TrainConfig tc;
  tc.epochs = cfg.get_int("epochs", tc.epochs);
  tc.lr = cfg.get_double("lr", tc.lr);
  tc.seed = cfg.get_u64("seed", 0);
  prepare_output_dir(out, cfg.get_bool("overwrite", false));

  Dataset ds = load_dataset(cfg.get("data"));
  const fs::path model_path = out / "model.bin";
  if (task == "seg") {
    models::SegModel model =
        models::train_seg(ds.train, ds.spec.classes, arch, tc, ds.base_seed);
    models::save_seg_model(model, model_path);
    std::vector<std::vector<int>> train_pred, train_truth, val_pred, val_truth;
    for (const data::Scene& s : ds.train) {
      train_pred.push_back(models::seg_predict(model, s.image));
      train_truth.push_back(s.label_map);
    }
    for (const data::Scene& s : ds.val) {
      val_pred.push_back(models::seg_predict(model, s.image));
      val_truth.push_back(s.label_map);
    }
    std::cout << "model " << model.tag() << ": train accuracy "
              << pixel_accuracy(train_pred, train_truth) << ", val accuracy "
              << pixel_accuracy(val_pred, val_truth) << ", val miou "
              << metrics::miou(val_pred, val_truth, model.classes) << "\n";
  } else if (task == "det") {
    models::DetModel model =
        models::train_det(ds.train, ds.spec.classes, arch, tc, ds.base_seed);
    models::save_det_model(model, model_path);
    std::cout << "model " << model.tag() << ": train map "
              << transfer::det_map_on(model, ds.train) << ", val map "
              << transfer::det_map_on(model, ds.val) << "\n";
  } else {
    throw std::runtime_error("config: task must be 'seg' or 'det', got '" + task + "'");
  }
  cfg.set("arch", arch_letter);
  cfg.set("task", task);
  cfg.set("seed", std::to_string(tc.seed));
  cfg.set("epochs", std::to_string(tc.epochs));
  cfg.set("lr", std::to_string(tc.lr));
  write_resolved(cfg, out);
}

void cmd_attack(const Config& raw_cfg) {
  static constexpr const char* kKeys[] = {"out",     "overwrite", "model",  "data",
                                          "split",   "count",     "gamma",  "max_iterations",
                                          "nms_iou", "perm_seed", "mode",   "mask",
                                          "start",   "noise_seed", "jobs"};
  raw_cfg.validate_keys(kKeys);
  Config cfg = raw_cfg;
  const fs::path out = cfg.get("out");
  prepare_output_dir(out, cfg.get_bool("overwrite", false));

  const fs::path model_path = cfg.get("model");
  const std::string kind = models::model_kind(model_path);
  const std::string mode = cfg.get("mode", "standard");
  const std::string start = cfg.get("start", "scene");
  const double gamma = cfg.get_double("gamma", 0.5);
  const double nms_iou = cfg.get_double("nms_iou", 0.90);
  const std::uint64_t perm_seed = cfg.get_u64("perm_seed", 7);
  const int jobs = cfg.get_int("jobs", 1);

  Dataset ds = load_dataset(cfg.get("data"));
  std::vector<data::Scene> scenes =
      select_scenes(ds, cfg.get("split", "val"), cfg.get_int("count", 0));

  // Mask mode replaces the permutation rule with an explicit desired map.
  std::vector<int> mask;
  if (mode == "mask") {
    int mh = 0, mw = 0;
    mask = io::read_pgm(cfg.get("mask"), mh, mw);
    if (mh != ds.spec.height || mw != ds.spec.width)
      throw std::runtime_error("mask dimensions do not match the dataset");
  } else if (mode != "standard") {
    throw std::runtime_error("config: mode must be 'standard' or 'mask'");
  }
  for (data::Scene& scene : scenes) {
    if (start == "blank") {
      scene.image.fill(128.0);
    } else if (start == "noise") {
      Rng rng(Rng::derive(cfg.get_u64("noise_seed", 1), scene.seed));
      for (std::size_t i = 0; i < scene.image.size(); ++i)
        scene.image[i] = static_cast<double>(rng.next_int(0, 255));
    } else if (start != "scene") {
      throw std::runtime_error("config: start must be scene, blank or noise");
    }
  }

  models::SegModel seg;
  models::DetModel det;
  if (kind == "seg") seg = models::load_seg_model(model_path);
  else det = models::load_det_model(model_path);

  attack::AttackConfig ac;
  ac.gamma = gamma;
  ac.task = mode == "mask" ? "mask" : kind;
  ac.max_iterations = cfg.get_int("max_iterations", kind == "det" ? 150 : 200);

  struct Row {
    std::uint64_t seed;
    std::size_t targets;
    int iterations;
    bool converged;
    double p;
  };
  std::vector<Row> rows(scenes.size());
  parallel_scenes(scenes.size(), jobs, [&](std::size_t i) {
    const data::Scene& scene = scenes[i];
    targets::TargetSet t;
    if (mode == "mask") {
      t = targets::build_mask_targets(scene, mask);
    } else if (kind == "seg") {
      t = targets::build_seg_targets(
          scene, targets::sample_permutation(ds.spec.classes,
                                             Rng::derive(perm_seed, scene.seed)));
    } else {
      t = targets::build_det_targets(
          scene, det, nms_iou,
          targets::sample_permutation(ds.spec.classes, Rng::derive(perm_seed, scene.seed)));
    }
    auto [pert, trace] = kind == "seg" ? attack::run_attack(seg, scene, t, ac)
                                       : attack::run_attack(det, scene, t, ac);
    const int idx = static_cast<int>(i);
    targets::save_targets(t, out / numbered("targets", idx, ".txt"));
    attack::save_perturbation(pert, out / numbered("pert", idx, ".dagr"));
    attack::write_trace_csv(trace, out / numbered("trace", idx, ".csv"));
    io::write_ppm(out / numbered("adv", idx, ".ppm"),
                  attack::adversarial_image(scene.image, pert.r));
    rows[i] = {scene.seed, t.size(), pert.iterations_run, pert.converged,
               metrics::perceptibility(pert.r)};
  });

  std::ostringstream summary;
  summary << "scene,seed,targets,iterations,converged,perceptibility\n";
  int converged_count = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    summary << i << "," << rows[i].seed << "," << rows[i].targets << ","
            << rows[i].iterations << "," << (rows[i].converged ? 1 : 0) << "," << rows[i].p
            << "\n";
    converged_count += rows[i].converged;
  }
  io::write_text_file(out / "attacks.csv", summary.str());

  cfg.set("gamma", std::to_string(gamma));
  cfg.set("max_iterations", std::to_string(ac.max_iterations));
  cfg.set("mode", mode);
  cfg.set("start", start);
  if (kind == "det") cfg.set("nms_iou", std::to_string(nms_iou));
  write_resolved(cfg, out);
  std::cout << "attacked " << scenes.size() << " scenes, " << converged_count
            << " converged\n";
}

void cmd_eval(const Config& raw_cfg) {
  static constexpr const char* kKeys[] = {"out",   "overwrite", "model",
                                          "data",  "split",     "count",
                                          "perturbations", "perm_seed", "jobs"};
  raw_cfg.validate_keys(kKeys);
  Config cfg = raw_cfg;
  const fs::path out = cfg.get("out");
  prepare_output_dir(out, cfg.get_bool("overwrite", false));

  const fs::path model_path = cfg.get("model");
  const std::string kind = models::model_kind(model_path);
  Dataset ds = load_dataset(cfg.get("data"));
  std::vector<data::Scene> scenes =
      select_scenes(ds, cfg.get("split", "val"), cfg.get_int("count", 0));
  const std::vector<attack::Perturbation> perts =
      load_perturbation_dir(cfg.get("perturbations"), scenes.size());
  const std::uint64_t perm_seed = cfg.get_u64("perm_seed", 7);

  transfer::Model victim;
  if (kind == "seg") victim = models::load_seg_model(model_path);
  else victim = models::load_det_model(model_path);

  metrics::EvalReport report;
  report.metric = kind == "seg" ? "miou" : "map";
  report.model_tag = transfer::model_tag(victim);
  report.clean = transfer::transfer_eval({}, victim, scenes);
  report.attacked = transfer::transfer_eval(perts, victim, scenes);
  report.permuted = transfer::permuted_control(perts, victim, scenes, perm_seed);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::span<const data::Scene> one(&scenes[i], 1);
    std::span<const attack::Perturbation> one_pert(&perts[i], 1);
    report.clean_per_scene.emplace_back(scenes[i].seed,
                                        transfer::transfer_eval({}, victim, one));
    report.attacked_per_scene.emplace_back(scenes[i].seed,
                                           transfer::transfer_eval(one_pert, victim, one));
  }
  metrics::write_report_csv(report, out / "report.csv");
  write_resolved(cfg, out);
  std::cout << report.metric << " orig " << report.clean << " adv " << report.attacked
            << " perm " << report.permuted << "\n";
}

void cmd_transfer(const Config& raw_cfg) {
  static constexpr const char* kKeys[] = {"out",     "overwrite", "data",  "split",
                                          "count",   "victims",   "sources", "combos",
                                          "perm_seed", "jobs"};
  raw_cfg.validate_keys(kKeys);
  Config cfg = raw_cfg;
  const fs::path out = cfg.get("out");
  prepare_output_dir(out, cfg.get_bool("overwrite", false));

  Dataset ds = load_dataset(cfg.get("data"));
  std::vector<data::Scene> scenes =
      select_scenes(ds, cfg.get("split", "val"), cfg.get_int("count", 0));

  std::vector<transfer::Model> victims;
  for (const std::string& path : split_list(cfg.get("victims"))) {
    if (models::model_kind(path) == "seg") victims.emplace_back(models::load_seg_model(path));
    else victims.emplace_back(models::load_det_model(path));
  }

  // sources: "name:dir"; combos: "name:dirA+dirB+..."
  std::vector<std::pair<std::string, std::vector<attack::Perturbation>>> sources;
  for (const std::string& entry : split_list(cfg.get("sources", ""))) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("config: source entry must be name:dir, got '" + entry + "'");
    sources.emplace_back(entry.substr(0, colon),
                         load_perturbation_dir(entry.substr(colon + 1), scenes.size()));
  }
  for (const std::string& entry : split_list(cfg.get("combos", ""))) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("config: combo entry must be name:dirA+dirB, got '" + entry +
                               "'");
    std::vector<std::vector<attack::Perturbation>> parts;
    for (const std::string& dir : split_list(entry.substr(colon + 1), '+'))
      parts.push_back(load_perturbation_dir(dir, scenes.size()));
    sources.emplace_back(entry.substr(0, colon), transfer::combine_per_scene(parts));
  }

  const transfer::TransferMatrix matrix = transfer::build_transfer_matrix(
      sources, victims, scenes, cfg.get_u64("perm_seed", 7));
  transfer::write_matrix_csv(matrix, out / "matrix.csv");
  const std::string table = transfer::render_matrix_table(matrix);
  io::write_text_file(out / "matrix.txt", table);
  write_resolved(cfg, out);
  std::cout << table;
}

void cmd_report(const Config& raw_cfg) {
  static constexpr const char* kKeys[] = {"out", "overwrite", "attacks", "denseness"};
  raw_cfg.validate_keys(kKeys);
  Config cfg = raw_cfg;
  const fs::path out = cfg.get("out");
  prepare_output_dir(out, cfg.get_bool("overwrite", false));

  // Convergence histogram over the attack summaries.
  std::map<int, int> hist;
  for (const std::string& dir : split_list(cfg.get("attacks", ""))) {
    std::istringstream in(io::read_text_file(fs::path(dir) / "attacks.csv"));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> fields = split_list(line);
      if (fields.size() < 5) throw std::runtime_error("bad attacks.csv line: " + line);
      ++hist[std::stoi(fields[3])];
    }
  }
  std::ostringstream hist_csv;
  hist_csv << "iterations,count\n";
  for (const auto& [iters, count] : hist) hist_csv << iters << "," << count << "\n";
  io::write_text_file(out / "convergence_hist.csv", hist_csv.str());

  // Denseness curve: attack-time NMS threshold vs attacked detection score.
  std::vector<std::pair<double, double>> denseness;
  for (const std::string& entry : split_list(cfg.get("denseness", ""))) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("config: denseness entry must be iou:report.csv");
    const double iou = std::stod(entry.substr(0, colon));
    std::istringstream in(io::read_text_file(entry.substr(colon + 1)));
    std::string line;
    std::getline(in, line);
    double attacked = -1.0;
    while (std::getline(in, line)) {
      const std::vector<std::string> fields = split_list(line);
      if (fields.size() == 4 && fields[0] == "map" && fields[2] == "adv")
        attacked = std::stod(fields[3]);
    }
    if (attacked < 0.0)
      throw std::runtime_error("no adv map row found in " + entry.substr(colon + 1));
    denseness.emplace_back(iou, attacked);
  }
  std::sort(denseness.begin(), denseness.end());
  std::ostringstream dens_csv;
  dens_csv << "nms_iou,attacked_map\n";
  for (const auto& [iou, v] : denseness) dens_csv << iou << "," << v << "\n";
  io::write_text_file(out / "denseness.csv", dens_csv.str());
  write_resolved(cfg, out);
}

}  // namespace adv::cli
