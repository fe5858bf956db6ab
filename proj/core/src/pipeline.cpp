#include "stereoae/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

#include "stereoae/baseline.hpp"
#include "stereoae/checkpoint.hpp"
#include "stereoae/errors.hpp"
#include "stereoae/image_io.hpp"

namespace stereoae::pipeline {
namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<StereoSample> load_data(const RunConfig& cfg, const fs::path& dir) {
  if (dir.empty()) throw ConfigError("no dataset given");
  auto data = read_dataset(dir);
  if (data.empty()) throw ConfigError("dataset " + dir.string() + " is empty");
  if (cfg.calibration) {
    for (auto& s : data) s.calibration = *cfg.calibration;
  }
  return data;
}

void write_metrics_files(const fs::path& dir, const eval::MetricsReport& m) {
  std::ofstream txt(dir / "metrics.txt");
  if (!txt) throw IoError("cannot write " + (dir / "metrics.txt").string());
  eval::write_metrics_text(txt, m);
  eval::append_metrics_csv(dir / "metrics.csv", m);
}

}  // namespace

std::uint64_t network_seed(const RunConfig& cfg) { return cfg.seed; }
std::uint64_t state_seed(const RunConfig& cfg) { return cfg.seed ^ 0x5bd1e9955bd1e995ULL; }

SynthSummary run_synth(const fs::path& listing, const fs::path& out_dir, std::uint64_t seed_offset,
                       std::ostream& log) {
  SceneListing scenes = load_scene_listing(listing);
  std::vector<StereoSample> samples;
  SynthSummary sum;
  sum.min_disparity = std::numeric_limits<double>::infinity();
  sum.max_disparity = -std::numeric_limits<double>::infinity();
  for (auto& spec : scenes.scenes) {
    spec.background.seed += seed_offset;
    for (auto& r : spec.layout) r.texture.seed += seed_offset;
    samples.push_back(synthesize_pair(spec));
    for (double d : samples.back().gt_disparity->values()) {
      sum.min_disparity = std::min(sum.min_disparity, d);
      sum.max_disparity = std::max(sum.max_disparity, d);
    }
  }
  ensure_dir(out_dir);
  write_dataset(out_dir, samples);
  sum.pairs = static_cast<int>(samples.size());
  log << "wrote " << sum.pairs << " pairs to " << out_dir.string() << ", disparity range [" << sum.min_disparity
      << ", " << sum.max_disparity << "] px\n";
  return sum;
}

TrainOutcome run_train(const RunConfig& cfg, const std::optional<fs::path>& resume, std::ostream& log) {
  cfg.validate(true);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  save_run_config(out / "config.json", cfg);
  const auto data = load_data(cfg, cfg.data.train);
  const std::uint64_t hash = cfg.hash();

  std::optional<Network<float>> net;
  TrainState<float> state(state_seed(cfg));
  if (resume) {
    auto loaded = load_checkpoint<float>(*resume);
    if (loaded.header.config_hash != hash) {
      throw ConfigError(resume->string() + " was written under a different configuration");
    }
    net.emplace(std::move(*loaded.network));
    state = std::move(loaded.state);
    log << "resuming at phase " << state.phase << " epoch " << state.epoch << '\n';
  } else {
    net.emplace(cfg.network, network_seed(cfg));
  }

  const StageSchedule schedule = cfg.schedule();
  const int phases = static_cast<int>(schedule.stages.size());
  TrainOptions<float> options;
  options.gamma = cfg.gamma;
  options.scaling = cfg.training.scaling;
  options.threads = cfg.threads;
  options.divergence_factor = cfg.training.divergence_factor;
  options.divergence_patience = cfg.training.divergence_patience;
  options.on_epoch_end = [&](const Network<float>& n, const TrainState<float>& s) {
    const auto& r = s.history.back();
    log << "phase " << r.phase << " stage " << r.stage << " epoch " << std::setw(4) << r.epoch << " lr "
        << std::scientific << std::setprecision(3) << r.lr << " loss " << r.total << " recons " << r.recons
        << " smooth " << r.smooth << std::defaultfloat << '\n';
    const int planned = s.phase < phases ? schedule.stages[static_cast<std::size_t>(s.phase)].epochs
                                         : cfg.training.finetune_epochs;
    if (s.epoch == planned) {
      save_checkpoint(out / ("stage_" + std::to_string(s.phase) + ".ckpt"), n, s, hash);
    }
    if (cfg.training.checkpoint_every > 0 && s.global_epoch % cfg.training.checkpoint_every == 0) {
      save_checkpoint(out / "latest.ckpt", n, s, hash);
    }
  };

  if (cfg.mode == RunMode::proxy_hs) {
    const auto labels = baseline::make_proxy_labels(data, cfg.proxy.labels, cfg.threads);
    std::vector<std::string> ids;
    for (const auto& s : data) ids.push_back(s.id);
    ensure_dir(out / "proxy_labels");
    write_proxy_labels(out / "proxy_labels", ids, labels.labels);
    log << "proxy labels: hole fraction " << labels.hole_fraction << '\n';
    options.scaling = cfg.proxy.scaling;
    baseline::train_proxy_supervised(*net, data, labels, schedule, cfg.optimizer, options, state);
  } else {
    train_schedule(*net, data, schedule, cfg.optimizer, options, state, cfg.training.finetune_epochs);
  }

  TrainOutcome outcome;
  outcome.final_checkpoint = out / "final.ckpt";
  save_checkpoint(outcome.final_checkpoint, *net, state, hash);
  std::ofstream csv(out / "loss.csv");
  if (!csv) throw IoError("cannot write " + (out / "loss.csv").string());
  write_loss_csv(csv, state.history);
  outcome.history = state.history;
  return outcome;
}

EvalOutcome run_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset, bool force,
                     bool images, std::ostream& log) {
  cfg.validate(false);
  EvalOutcome outcome;
  auto loaded = load_checkpoint<float>(checkpoint);
  outcome.config_hash_matches = loaded.header.config_hash == cfg.hash();
  if (!outcome.config_hash_matches) {
    log << "warning: " << checkpoint.string() << " was written under a different configuration\n";
    if (!force) throw ConfigError("checkpoint/config mismatch; pass --force to evaluate anyway");
  }
  const Network<float>& net = *loaded.network;
  const auto data = load_data(cfg, dataset);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);

  eval::ProtocolOptions popt;
  popt.crop = cfg.evaluation.crop;
  popt.clamp = cfg.clamp;
  std::vector<double> pooled_pred, pooled_gt;
  for (const auto& s : data) {
    const DisparityMap pred = predict_disparity(net, s);
    const auto r = eval::evaluation_protocol(pred, s, popt);
    outcome.per_sample.emplace_back(s.id, r.metrics);
    pooled_pred.insert(pooled_pred.end(), r.selected_pred.begin(), r.selected_pred.end());
    pooled_gt.insert(pooled_gt.end(), r.selected_gt.begin(), r.selected_gt.end());
    if (images) {
      io::write_image(out / (s.id + "_error.png"),
                      eval::error_heatmap(r.pred_depth, r.gt_depth, cfg.evaluation.heatmap_max_error));
      io::write_image(out / (s.id + "_invdepth.pgm"), eval::inverse_depth_image(r.pred_depth));
    }
  }
  outcome.pooled = eval::compute_metrics(pooled_pred, pooled_gt);
  write_metrics_files(out, outcome.pooled);
  log << eval::kMetricsCsvHeader << '\n';
  eval::write_metrics_csv_row(log, outcome.pooled);
  return outcome;
}

BaselineOutcome run_baseline(const RunConfig& cfg, const fs::path& dataset, std::ostream& log) {
  cfg.validate(false);
  const auto data = load_data(cfg, dataset);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  BaselineOutcome outcome;
  eval::ProtocolOptions popt;
  popt.crop = cfg.evaluation.crop;
  popt.clamp = cfg.clamp;
  std::vector<double> pooled_pred, pooled_gt;
  for (const auto& s : data) {
    const auto hs = baseline::hs_stereo(s, cfg.proxy.labels.hs);
    for (const auto& w : hs.warnings) log << s.id << ": " << w << '\n';
    outcome.warnings += static_cast<int>(hs.warnings.size());
    io::write_f32(out / (s.id + "_hs.f32"), hs.disparity.values());
    io::write_image(out / (s.id + "_hs.pgm"),
                    eval::inverse_depth_image(geometry::disparity_to_depth(hs.disparity, s.calibration, cfg.clamp)));
    if (s.gt_disparity) {
      const auto r = eval::evaluation_protocol(hs.disparity, s, popt);
      pooled_pred.insert(pooled_pred.end(), r.selected_pred.begin(), r.selected_pred.end());
      pooled_gt.insert(pooled_gt.end(), r.selected_gt.begin(), r.selected_gt.end());
    }
  }
  if (!pooled_gt.empty()) {
    outcome.pooled = eval::compute_metrics(pooled_pred, pooled_gt);
    write_metrics_files(out, *outcome.pooled);
    log << eval::kMetricsCsvHeader << '\n';
    eval::write_metrics_csv_row(log, *outcome.pooled);
  }
  return outcome;
}

void dump_architecture(const NetworkConfig& cfg, std::ostream& out) {
  out << "profile " << cfg.profile << " input " << cfg.input_channels << "x" << cfg.input_height << "x"
      << cfg.input_width << '\n';
  const auto shapes = infer_shapes(cfg, static_cast<int>(cfg.stages.size()));
  std::int64_t total = 0;
  for (const auto& l : shapes) {
    out << "  " << std::left << std::setw(60) << l.spec.describe() << " -> " << shape_string(l.output) << '\n';
    total += l.spec.parameter_count();
  }
  out << std::right << "parameters " << total << '\n';
  for (int k = 0; k <= static_cast<int>(cfg.stages.size()); ++k) {
    const auto [h, w] = output_resolution(cfg, k);
    out << "stage " << k << (k == 0 ? " (coarse)" : " (" + cfg.stages[static_cast<std::size_t>(k - 1)].id + ")")
        << " output " << h << "x" << w << '\n';
  }
}

}  // namespace stereoae::pipeline
