#pragma once

#include <filesystem>
#include <vector>

#include "adv/config.hpp"
#include "adv/dataset.hpp"

namespace adv::cli {

// Subcommand bodies shared by the command-line tool and the tests. Each takes
// a parsed config, writes its outputs (plus the resolved config and tool
// version) into the config's `out` directory, and throws on error.
void cmd_gen_data(const Config& cfg);
void cmd_train(const Config& cfg);
void cmd_attack(const Config& cfg);
void cmd_eval(const Config& cfg);
void cmd_transfer(const Config& cfg);
void cmd_report(const Config& cfg);

struct Dataset {
  data::GenSpec spec;
  std::uint64_t base_seed = 0;
  std::vector<data::Scene> train;
  std::vector<data::Scene> val;
};

// Reads back a gen-data output directory (scene files plus resolved config).
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace adv::cli
