#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "adv/commands.hpp"
#include "adv/config.hpp"
#include "adv/version.hpp"

namespace {

struct Invocation {
  std::string config_path;
  bool overwrite = false;
  int jobs = 0;
};

adv::cli::Config load(const Invocation& inv) {
  adv::cli::Config cfg = adv::cli::Config::parse_file(inv.config_path);
  if (inv.overwrite) cfg.set("overwrite", "1");
  if (inv.jobs > 0) cfg.set("jobs", std::to_string(inv.jobs));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense adversarial attacks on toy recognizers"};
  app.set_version_flag("--version", std::string(adv::kToolName) + " " + adv::kToolVersion);
  app.require_subcommand(1);

  Invocation inv;
  auto add_command = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", inv.config_path, "key=value config file")->required();
    sub->add_flag("--overwrite", inv.overwrite, "replace an existing non-empty output dir");
    sub->add_option("--jobs", inv.jobs, "parallel scene-level workers");
    return sub;
  };

  CLI::App* gen = add_command("gen-data", "generate a synthetic labelled dataset");
  CLI::App* train = add_command("train", "train a recognizer on a dataset");
  CLI::App* atk = add_command("attack", "generate adversarial perturbations");
  CLI::App* eval = add_command("eval", "evaluate clean / attacked / permuted metrics");
  CLI::App* trans = add_command("transfer", "build a cross-model transfer matrix");
  CLI::App* report = add_command("report", "summarize traces into figure-ready CSVs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) adv::cli::cmd_gen_data(load(inv));
    else if (train->parsed()) adv::cli::cmd_train(load(inv));
    else if (atk->parsed()) adv::cli::cmd_attack(load(inv));
    else if (eval->parsed()) adv::cli::cmd_eval(load(inv));
    else if (trans->parsed()) adv::cli::cmd_transfer(load(inv));
    else if (report->parsed()) adv::cli::cmd_report(load(inv));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
