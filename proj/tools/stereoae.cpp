#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "stereoae/errors.hpp"
#include "stereoae/gradcheck.hpp"
#include "stereoae/pipeline.hpp"
#include "stereoae/runconfig.hpp"

namespace fs = std::filesystem;
using namespace stereoae;

namespace {

enum Exit { kOk = 0, kIo = 1, kValidation = 2, kNumeric = 3, kDivergence = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string profile;
  std::string output;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "Override the configured seed");
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--profile", c.profile, "Network profile (paper, desk)");
  cmd->add_option("--output", c.output, "Output directory");
}

RunConfig resolve(const Common& c) {
  nlohmann::json j = nlohmann::json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw IoError("cannot open config " + c.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(c.config + ": " + e.what());
    }
  }
  if (!c.profile.empty()) {
    j["profile"] = c.profile;
    j.erase("network");
  }
  RunConfig cfg = RunConfig::from_json(j);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.output.empty()) cfg.output_dir = c.output;
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Unsupervised stereo-trained single-view depth network"};
  app.require_subcommand(1);

  Common synth_c;
  std::string listing;
  std::uint64_t seed_offset = 0;
  auto* synth = app.add_subcommand("synth", "Render a scene listing into a dataset");
  synth->add_option("listing", listing, "Scene listing file")->required();
  synth->add_option("--output", synth_c.output, "Dataset directory")->required();
  synth->add_option("--seed", seed_offset, "Added to every texture seed");

  Common train_c;
  std::string resume;
  auto* train = app.add_subcommand("train", "Train through the stage schedule");
  add_common(train, train_c);
  train->add_option("--resume", resume, "Continue from a checkpoint");

  Common eval_c;
  std::string checkpoint, eval_dataset;
  bool force = false, images = false;
  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(evalc, eval_c);
  evalc->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evalc->add_option("--dataset", eval_dataset, "Dataset directory (default: data.eval)");
  evalc->add_flag("--force", force, "Accept a checkpoint from a different configuration");
  evalc->add_flag("--images", images, "Write error heat maps and inverse-depth images");

  Common gc_c;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  add_common(gc, gc_c);

  Common base_c;
  std::string base_dataset;
  auto* base = app.add_subcommand("baseline", "Horn-Schunck stereo on a dataset");
  add_common(base, base_c);
  base->add_option("--dataset", base_dataset, "Dataset directory (default: data.eval)");

  Common arch_c;
  auto* arch = app.add_subcommand("dump-arch", "Print layers and stage resolutions");
  add_common(arch, arch_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  if (synth->parsed()) {
    pipeline::run_synth(listing, synth_c.output, seed_offset, std::cout);
  } else if (train->parsed()) {
    const RunConfig cfg = resolve(train_c);
    const auto out = pipeline::run_train(cfg, resume.empty() ? std::nullopt : std::optional<fs::path>(resume),
                                         std::cout);
    std::cout << "final checkpoint " << out.final_checkpoint.string() << '\n';
  } else if (evalc->parsed()) {
    const RunConfig cfg = resolve(eval_c);
    pipeline::run_eval(cfg, checkpoint, eval_dataset.empty() ? fs::path(cfg.data.eval) : fs::path(eval_dataset),
                       force, images, std::cout);
  } else if (gc->parsed()) {
    const RunConfig cfg = resolve(gc_c);
    gradcheck::SuiteOptions opt;
    opt.seed = cfg.seed;
    const auto results = gradcheck::run_suite(opt);
    gradcheck::write_report(std::cout, results);
    for (const auto& r : results) {
      if (!r.passed()) return kNumeric;
    }
  } else if (base->parsed()) {
    const RunConfig cfg = resolve(base_c);
    pipeline::run_baseline(cfg, base_dataset.empty() ? fs::path(cfg.data.eval) : fs::path(base_dataset), std::cout);
  } else if (arch->parsed()) {
    pipeline::dump_architecture(resolve(arch_c).network, std::cout);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return kIo;
  }
}
