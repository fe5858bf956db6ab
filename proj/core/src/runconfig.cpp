#include "stereoae/runconfig.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>

#include "stereoae/errors.hpp"

namespace stereoae {
namespace {

using json = nlohmann::json;

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

json hs_to_json(const baseline::HSConfig& h) {
  return {{"pyramid_levels", h.pyramid_levels},   {"pyramid_scale", h.pyramid_scale},
          {"warp_iterations", h.warp_iterations}, {"gamma_hs", h.gamma_hs},
          {"inner_tolerance", h.inner_tolerance}, {"inner_iterations", h.inner_iterations},
          {"warp_tolerance", h.warp_tolerance},   {"line_search_steps", h.line_search_steps},
          {"min_level_extent", h.min_level_extent}};
}

baseline::HSConfig hs_from_json(const json& j) {
  only_keys(j, "proxy.hs",
            {"pyramid_levels", "pyramid_scale", "warp_iterations", "gamma_hs", "inner_tolerance", "inner_iterations",
             "warp_tolerance", "line_search_steps", "min_level_extent"});
  baseline::HSConfig h;
  read(j, "pyramid_levels", h.pyramid_levels);
  read(j, "pyramid_scale", h.pyramid_scale);
  read(j, "warp_iterations", h.warp_iterations);
  read(j, "gamma_hs", h.gamma_hs);
  read(j, "inner_tolerance", h.inner_tolerance);
  read(j, "inner_iterations", h.inner_iterations);
  read(j, "warp_tolerance", h.warp_tolerance);
  read(j, "line_search_steps", h.line_search_steps);
  read(j, "min_level_extent", h.min_level_extent);
  return h;
}

}  // namespace

std::string to_string(RunMode mode) { return mode == RunMode::unsupervised ? "unsupervised" : "proxy_hs"; }

RunMode run_mode_from_string(const std::string& name) {
  if (name == "unsupervised") return RunMode::unsupervised;
  if (name == "proxy_hs") return RunMode::proxy_hs;
  throw ConfigError("unknown mode '" + name + "' (unsupervised, proxy_hs)");
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig RunConfig::defaults(Profile profile) {
  RunConfig cfg;
  cfg.profile = profile;
  cfg.network = NetworkConfig::make(profile);
  cfg.training.finer_stages = profile == Profile::desk ? 2 : static_cast<int>(cfg.network.stages.size());
  return cfg;
}

RunConfig RunConfig::from_json(const json& j) {
  try {
    only_keys(j, "config",
              {"profile", "network", "optimizer", "geometry", "data", "mode", "proxy", "training", "evaluation", "seed",
               "threads", "output_dir"});
    const Profile profile = profile_from_string(j.value("profile", std::string("desk")));
    RunConfig cfg = defaults(profile);
    if (j.contains("network")) cfg.network = NetworkConfig::from_json(j.at("network"));

    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      only_keys(o, "optimizer",
                {"momentum", "weight_decay", "lr0", "alpha", "stage_lr_divisor", "batch_size",
                 "reset_decay_per_stage"});
      read(o, "momentum", cfg.optimizer.momentum);
      read(o, "weight_decay", cfg.optimizer.weight_decay);
      read(o, "lr0", cfg.optimizer.lr0);
      read(o, "alpha", cfg.optimizer.alpha);
      read(o, "stage_lr_divisor", cfg.optimizer.stage_lr_divisor);
      read(o, "batch_size", cfg.optimizer.batch_size);
      read(o, "reset_decay_per_stage", cfg.optimizer.reset_decay_per_stage);
    }
    if (j.contains("geometry")) {
      const json& g = j.at("geometry");
      only_keys(g, "geometry", {"gamma", "clamp", "calibration"});
      read(g, "gamma", cfg.gamma);
      if (g.contains("clamp")) {
        only_keys(g.at("clamp"), "geometry.clamp", {"min_m", "max_m"});
        read(g.at("clamp"), "min_m", cfg.clamp.min_m);
        read(g.at("clamp"), "max_m", cfg.clamp.max_m);
      }
      if (g.contains("calibration") && !g.at("calibration").is_null()) {
        only_keys(g.at("calibration"), "geometry.calibration", {"focal_px", "baseline_m"});
        cfg.calibration = Calibration{g.at("calibration").at("focal_px").get<double>(),
                                      g.at("calibration").at("baseline_m").get<double>()};
      }
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      only_keys(d, "data", {"train", "eval", "listing"});
      read(d, "train", cfg.data.train);
      read(d, "eval", cfg.data.eval);
      read(d, "listing", cfg.data.listing);
    }
    if (j.contains("mode")) cfg.mode = run_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("proxy")) {
      const json& p = j.at("proxy");
      only_keys(p, "proxy", {"engine", "inject_holes", "consistency_threshold", "loss_scaling", "hs"});
      if (p.contains("engine")) cfg.proxy.labels.engine = baseline::proxy_engine_from_string(p.at("engine"));
      read(p, "inject_holes", cfg.proxy.labels.inject_holes);
      read(p, "consistency_threshold", cfg.proxy.labels.consistency_threshold);
      if (p.contains("loss_scaling")) cfg.proxy.scaling = loss_scaling_from_string(p.at("loss_scaling"));
      if (p.contains("hs")) cfg.proxy.labels.hs = hs_from_json(p.at("hs"));
    }
    if (j.contains("training")) {
      const json& t = j.at("training");
      only_keys(t, "training",
                {"finer_stages", "coarse_epochs", "finer_epochs", "finetune_epochs", "loss_scaling",
                 "divergence_factor", "divergence_patience", "checkpoint_every"});
      read(t, "finer_stages", cfg.training.finer_stages);
      read(t, "coarse_epochs", cfg.training.coarse_epochs);
      read(t, "finer_epochs", cfg.training.finer_epochs);
      read(t, "finetune_epochs", cfg.training.finetune_epochs);
      if (t.contains("loss_scaling")) cfg.training.scaling = loss_scaling_from_string(t.at("loss_scaling"));
      read(t, "divergence_factor", cfg.training.divergence_factor);
      read(t, "divergence_patience", cfg.training.divergence_patience);
      read(t, "checkpoint_every", cfg.training.checkpoint_every);
    }
    if (j.contains("evaluation")) {
      const json& e = j.at("evaluation");
      only_keys(e, "evaluation", {"crop", "heatmap_max_error"});
      if (e.contains("crop") && !e.at("crop").is_null()) {
        const json& c = e.at("crop");
        if (!c.is_array() || c.size() != 4) throw ConfigError("evaluation.crop: expected [y0, x0, y1, x1]");
        cfg.evaluation.crop = eval::CropRect{c[0].get<int>(), c[1].get<int>(), c[2].get<int>(), c[3].get<int>()};
      }
      read(e, "heatmap_max_error", cfg.evaluation.heatmap_max_error);
    }
    read(j, "seed", cfg.seed);
    read(j, "threads", cfg.threads);
    read(j, "output_dir", cfg.output_dir);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json RunConfig::to_json() const {
  json j;
  j["profile"] = stereoae::to_string(profile);
  j["network"] = network.to_json();
  j["optimizer"] = {{"momentum", optimizer.momentum},
                    {"weight_decay", optimizer.weight_decay},
                    {"lr0", optimizer.lr0},
                    {"alpha", optimizer.alpha},
                    {"stage_lr_divisor", optimizer.stage_lr_divisor},
                    {"batch_size", optimizer.batch_size},
                    {"reset_decay_per_stage", optimizer.reset_decay_per_stage}};
  j["geometry"] = {{"gamma", gamma}, {"clamp", {{"min_m", clamp.min_m}, {"max_m", clamp.max_m}}}};
  j["geometry"]["calibration"] =
      calibration ? json{{"focal_px", calibration->focal_px}, {"baseline_m", calibration->baseline_m}} : json(nullptr);
  j["data"] = {{"train", data.train}, {"eval", data.eval}, {"listing", data.listing}};
  j["mode"] = stereoae::to_string(mode);
  j["proxy"] = {{"engine", baseline::to_string(proxy.labels.engine)},
                {"inject_holes", proxy.labels.inject_holes},
                {"consistency_threshold", proxy.labels.consistency_threshold},
                {"loss_scaling", stereoae::to_string(proxy.scaling)},
                {"hs", hs_to_json(proxy.labels.hs)}};
  j["training"] = {{"finer_stages", training.finer_stages},
                   {"coarse_epochs", training.coarse_epochs},
                   {"finer_epochs", training.finer_epochs},
                   {"finetune_epochs", training.finetune_epochs},
                   {"loss_scaling", stereoae::to_string(training.scaling)},
                   {"divergence_factor", training.divergence_factor},
                   {"divergence_patience", training.divergence_patience},
                   {"checkpoint_every", training.checkpoint_every}};
  j["evaluation"] = {{"heatmap_max_error", evaluation.heatmap_max_error}};
  j["evaluation"]["crop"] = evaluation.crop ? json{evaluation.crop->y0, evaluation.crop->x0, evaluation.crop->y1,
                                                   evaluation.crop->x1}
                                            : json(nullptr);
  j["seed"] = seed;
  j["threads"] = threads;
  j["output_dir"] = output_dir;
  return j;
}

void RunConfig::validate(bool check_paths) const {
  network.validate();
  optimizer.validate();
  proxy.labels.hs.validate();
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw ConfigError("geometry.gamma must be finite and >= 0");
  if (!(clamp.min_m > 0) || !(clamp.max_m > clamp.min_m)) {
    throw ConfigError("geometry.clamp requires 0 < min_m < max_m");
  }
  if (calibration) calibration->validate();
  if (training.finer_stages < 0 || training.finer_stages > static_cast<int>(network.stages.size())) {
    throw ConfigError("training.finer_stages must lie in [0, " + std::to_string(network.stages.size()) + "]");
  }
  if (training.coarse_epochs < 0 || training.finer_epochs < 0 || training.finetune_epochs < 0 ||
      training.checkpoint_every < 0) {
    throw ConfigError("training epoch counts must be non-negative");
  }
  if (!(training.divergence_factor > 1) || training.divergence_patience < 1) {
    throw ConfigError("training.divergence_factor must exceed 1 and divergence_patience be >= 1");
  }
  if (mode == RunMode::proxy_hs && training.finetune_epochs > 0) {
    throw ConfigError("training.finetune_epochs applies to the unsupervised mode only");
  }
  if (!(proxy.labels.consistency_threshold > 0)) throw ConfigError("proxy.consistency_threshold must be positive");
  if (!(evaluation.heatmap_max_error > 0)) throw ConfigError("evaluation.heatmap_max_error must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (check_paths) {
    for (const auto& [key, p] : {std::pair{"data.train", data.train}, std::pair{"data.eval", data.eval},
                                 std::pair{"data.listing", data.listing}}) {
      if (!p.empty() && !std::filesystem::exists(p)) throw ConfigError(std::string(key) + ": no such path '" + p + "'");
    }
  }
}

std::uint64_t RunConfig::hash() const {
  json j = to_json();
  for (const char* k : {"data", "evaluation", "threads", "output_dir"}) j.erase(k);
  return fnv1a(j.dump());
}

StageSchedule RunConfig::schedule() const {
  return make_schedule(network, training.finer_stages, training.coarse_epochs, training.finer_epochs, optimizer.lr0,
                       optimizer.stage_lr_divisor);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << cfg.to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace stereoae
