#include "stereoae/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stereoae/errors.hpp"

namespace stereoae {
namespace {

using nlohmann::json;

LayerSpec conv(std::string id, int k, int stride, int pad, int in, int out, LayerKind kind = LayerKind::conv,
               InitKind init = InitKind::random) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.pad = ops::Sides::uniform(pad);
  s.in_channels = in;
  s.out_channels = out;
  s.init = init;
  return s;
}

LayerSpec simple(std::string id, LayerKind kind, int channels) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.in_channels = s.out_channels = channels;
  return s;
}

LayerSpec pool(std::string id, int channels, ops::Sides pad) {
  LayerSpec s = simple(std::move(id), LayerKind::pool, channels);
  s.kernel_h = s.kernel_w = 3;
  s.stride = 2;
  s.pad = pad;
  return s;
}

std::vector<LayerSpec> alexnet_trunk(int in, const std::vector<int>& ch, int k1, int s1, int p1, ops::Sides pool_pad,
                                     ops::Sides last_pool_pad) {
  std::vector<LayerSpec> t;
  t.push_back(conv("C1", k1, s1, p1, in, ch[0]));
  t.push_back(simple("R1", LayerKind::relu, ch[0]));
  t.push_back(simple("N1", LayerKind::lrn, ch[0]));
  t.push_back(pool("P1", ch[0], pool_pad));
  t.push_back(conv("C2", 5, 1, 2, ch[0], ch[1]));
  t.push_back(simple("R2", LayerKind::relu, ch[1]));
  t.push_back(simple("N2", LayerKind::lrn, ch[1]));
  t.push_back(pool("P2", ch[1], pool_pad));
  t.push_back(conv("C3", 3, 1, 1, ch[1], ch[2]));
  t.push_back(simple("R3", LayerKind::relu, ch[2]));
  t.push_back(conv("C4", 3, 1, 1, ch[2], ch[3]));
  t.push_back(simple("R4", LayerKind::relu, ch[3]));
  t.push_back(conv("C5", 3, 1, 1, ch[3], ch[4]));
  t.push_back(simple("R5", LayerKind::relu, ch[4]));
  t.push_back(pool("P3", ch[4], last_pool_pad));
  return t;
}

std::vector<LayerSpec> fcn_head(int in, int filters) {
  return {conv("F6", 5, 1, 2, in, filters, LayerKind::fullyconv),
          simple("R6", LayerKind::relu, filters),
          conv("F7", 5, 1, 2, filters, 1, LayerKind::fullyconv, InitKind::zero)};
}

std::string stage_suffix(const UpsampleStage& st) {
  return st.id.size() > 1 && st.id[0] == 'L' ? st.id.substr(1) : st.id;
}

std::string sides_string(const ops::Sides& s) {
  std::ostringstream os;
  os << s.top << ',' << s.bottom << ',' << s.left << ',' << s.right;
  return os.str();
}

[[noreturn]] void chain_error(const LayerSpec& l, const std::string& msg) {
  throw ConfigError("layer " + l.id + " (" + to_string(l.kind) + "): " + msg);
}

json sides_json(const ops::Sides& s) { return json::array({s.top, s.bottom, s.left, s.right}); }

ops::Sides sides_from(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw ConfigError("padding must be [top, bottom, left, right]");
  }
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

LayerKind kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::pool, LayerKind::lrn, LayerKind::relu, LayerKind::fullyconv,
                 LayerKind::upsample, LayerKind::skip_fuse, LayerKind::crop_pad}) {
    if (to_string(k) == s) {
      return k;
    }
  }
  throw ConfigError("unknown layer kind '" + s + "'");
}

InitKind init_from_string(const std::string& s) {
  for (auto k : {InitKind::none, InitKind::random, InitKind::zero, InitKind::bilinear}) {
    if (to_string(k) == s) {
      return k;
    }
  }
  throw ConfigError("unknown init kind '" + s + "'");
}

json layer_json(const LayerSpec& l) {
  json j{{"id", l.id}, {"kind", to_string(l.kind)}};
  if (l.kernel_h || l.kernel_w) {
    j["kernel"] = json::array({l.kernel_h, l.kernel_w});
  }
  if (l.stride != 1) {
    j["stride"] = l.stride;
  }
  if (!(l.pad == ops::Sides{})) {
    j["pad"] = sides_json(l.pad);
  }
  j["channels"] = json::array({l.in_channels, l.out_channels});
  if (l.init != InitKind::none) {
    j["init"] = to_string(l.init);
  }
  if (!l.source.empty()) {
    j["source"] = l.source;
  }
  if (l.kind == LayerKind::lrn) {
    j["lrn"] = {{"depth_radius", l.lrn.depth_radius}, {"alpha", l.lrn.alpha}, {"beta", l.lrn.beta}, {"k", l.lrn.k}};
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.id = j.at("id").get<std::string>();
  l.kind = kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("kernel")) {
    l.kernel_h = j["kernel"].at(0).get<int>();
    l.kernel_w = j["kernel"].at(1).get<int>();
  }
  l.stride = j.value("stride", 1);
  if (j.contains("pad")) {
    l.pad = sides_from(j["pad"]);
  }
  l.in_channels = j.at("channels").at(0).get<int>();
  l.out_channels = j.at("channels").at(1).get<int>();
  l.init = init_from_string(j.value("init", std::string("none")));
  l.source = j.value("source", std::string());
  if (j.contains("lrn")) {
    const auto& n = j["lrn"];
    l.lrn = {n.at("depth_radius").get<int>(), n.at("alpha").get<double>(), n.at("beta").get<double>(),
             n.at("k").get<double>()};
  }
  return l;
}

// Walks the executed layers, returning each output shape and the input
// shape seen by every pool.
struct ShapeWalk {
  std::vector<LayerShape> shapes;
  std::map<std::string, Shape> pool_inputs;
};

ShapeWalk walk(const NetworkConfig& cfg, const std::vector<LayerSpec>& layers) {
  ShapeWalk w;
  Shape cur{cfg.input_channels, cfg.input_height, cfg.input_width};
  for (const auto& l : layers) {
    const bool fuses = l.kind == LayerKind::skip_fuse;
    if (!fuses && l.in_channels != cur[0]) {
      chain_error(l, "expects " + std::to_string(l.in_channels) + " input channels, got " + shape_string(cur));
    }
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::fullyconv: {
        if (l.kernel_h < 1 || l.kernel_w < 1 || l.stride < 1 || l.out_channels < 1) {
          chain_error(l, "invalid geometry");
        }
        try {
          cur = {l.out_channels, ops::sweep_extent(cur[1], l.pad.top, l.pad.bottom, l.kernel_h, l.stride, "height"),
                 ops::sweep_extent(cur[2], l.pad.left, l.pad.right, l.kernel_w, l.stride, "width")};
        } catch (const ConfigError& e) {
          chain_error(l, e.what());
        }
        break;
      }
      case LayerKind::pool: {
        const auto& p = l.pad;
        if (std::max(p.top, p.bottom) >= l.kernel_h || std::max(p.left, p.right) >= l.kernel_w) {
          chain_error(l, "padding must be smaller than the window");
        }
        w.pool_inputs[l.id] = cur;
        try {
          cur = {cur[0], ops::sweep_extent(cur[1], p.top, p.bottom, l.kernel_h, l.stride, "height"),
                 ops::sweep_extent(cur[2], p.left, p.right, l.kernel_w, l.stride, "width")};
        } catch (const ConfigError& e) {
          chain_error(l, e.what());
        }
        break;
      }
      case LayerKind::lrn:
      case LayerKind::relu:
        if (l.out_channels != l.in_channels) {
          chain_error(l, "must preserve the channel count");
        }
        break;
      case LayerKind::upsample:
        if (l.stride < 1 || l.out_channels != 1 || l.kernel_h != 2 * l.stride - l.stride % 2) {
          chain_error(l, "invalid upsampling geometry");
        }
        cur = {1, cur[1] * l.stride, cur[2] * l.stride};
        break;
      case LayerKind::crop_pad:
        cur = {cur[0], cur[1] + l.pad.top + l.pad.bottom, cur[2] + l.pad.left + l.pad.right};
        if (cur[1] < 1 || cur[2] < 1) {
          chain_error(l, "crops away the whole map");
        }
        break;
      case LayerKind::skip_fuse: {
        const auto src = w.pool_inputs.find(l.source);
        if (src == w.pool_inputs.end()) {
          chain_error(l, "skip source '" + l.source + "' is not a pooling layer of the trunk");
        }
        if (src->second[0] != l.in_channels) {
          chain_error(l, "expects " + std::to_string(l.in_channels) + " channels from " + l.source + ", got " +
                             shape_string(src->second));
        }
        if (src->second[1] != cur[1] || src->second[2] != cur[2]) {
          chain_error(l, "resolution mismatch between skip source " + l.source + " " + shape_string(src->second) +
                             " and upsampled map " + shape_string(cur));
        }
        break;
      }
    }
    w.shapes.push_back({l, cur});
  }
  return w;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv:
      return "conv";
    case LayerKind::pool:
      return "pool";
    case LayerKind::lrn:
      return "lrn";
    case LayerKind::relu:
      return "relu";
    case LayerKind::fullyconv:
      return "fullyconv";
    case LayerKind::upsample:
      return "upsample";
    case LayerKind::skip_fuse:
      return "skip_fuse";
    case LayerKind::crop_pad:
      return "crop_pad";
  }
  return "?";
}

std::string to_string(InitKind kind) {
  switch (kind) {
    case InitKind::none:
      return "none";
    case InitKind::random:
      return "random";
    case InitKind::zero:
      return "zero";
    case InitKind::bilinear:
      return "bilinear";
  }
  return "?";
}

std::string to_string(Profile profile) { return profile == Profile::paper ? "paper" : "desk"; }

Profile profile_from_string(const std::string& name) {
  if (name == "paper") {
    return Profile::paper;
  }
  if (name == "desk") {
    return Profile::desk;
  }
  throw ConfigError("unknown profile '" + name + "' (paper, desk)");
}

bool LayerSpec::has_parameters() const {
  return kind == LayerKind::conv || kind == LayerKind::fullyconv || kind == LayerKind::upsample ||
         kind == LayerKind::skip_fuse;
}

std::int64_t LayerSpec::parameter_count() const {
  if (!has_parameters()) {
    return 0;
  }
  const std::int64_t weights = static_cast<std::int64_t>(kernel_h) * kernel_w * in_channels * out_channels;
  return kind == LayerKind::upsample ? weights : weights + out_channels;
}

std::string LayerSpec::describe() const {
  std::ostringstream os;
  os << id << ' ' << to_string(kind);
  if (kernel_h || kernel_w) {
    os << ' ' << kernel_h << 'x' << kernel_w << '/' << stride;
  }
  if (!(pad == ops::Sides{})) {
    os << " pad=" << sides_string(pad);
  }
  if (kind == LayerKind::skip_fuse) {
    os << " from=" << source;
  }
  os << ' ' << in_channels << "->" << out_channels;
  if (init != InitKind::none) {
    os << " init=" << to_string(init);
  }
  os << " params=" << parameter_count();
  return os.str();
}

NetworkConfig NetworkConfig::make(Profile profile) {
  NetworkConfig cfg;
  cfg.profile = to_string(profile);
  if (profile == Profile::paper) {
    cfg.input_channels = 3;
    cfg.input_height = 188;
    cfg.input_width = 620;
    cfg.trunk = alexnet_trunk(3, {96, 256, 384, 384, 256}, 11, 4, 0, {}, {0, 1, 0, 0});
    cfg.head = fcn_head(256, 2048);
    cfg.stages = {{"L8", 2, "P3", {}}, {"L9", 2, "P2", {}}, {"L10", 2, {}, {}}, {"L11", 2, {}, {}},
                  {"L12", 2, {}, {}}};
  } else {
    cfg.input_channels = 1;
    cfg.input_height = 64;
    cfg.input_width = 192;
    cfg.trunk = alexnet_trunk(1, {12, 32, 48, 48, 32}, 7, 2, 3, ops::Sides::uniform(1), ops::Sides::uniform(1));
    cfg.head = fcn_head(32, 128);
    cfg.stages = {{"L8", 2, "P3", {}}, {"L9", 2, "P2", {}}, {"L10", 2, {}, {}}};
  }
  cfg.resolve();
  return cfg;
}

void NetworkConfig::resolve() {
  if (input_channels < 1 || input_height < 1 || input_width < 1) {
    throw ConfigError("network input size must be positive");
  }
  if (head.empty() || trunk.empty()) {
    throw ConfigError("network needs a trunk and a head");
  }
  if (stages.size() > 5) {
    throw ConfigError("at most 5 upsampling stages are supported, got " + std::to_string(stages.size()));
  }
  if (wide_head) {
    const auto trunk_walk = walk(*this, trunk);
    const Shape& coarse = trunk_walk.shapes.back().output;
    auto& f6 = head.front();
    f6.kernel_h = coarse[1];
    f6.kernel_w = coarse[2];
    f6.pad = {(coarse[1] - 1) / 2, coarse[1] / 2, (coarse[2] - 1) / 2, coarse[2] / 2};
  }
  // Alignment is derived stage by stage, so start from a clean slate.
  for (auto& st : stages) {
    st.align = {};
  }
  for (std::size_t k = 0; k < stages.size(); ++k) {
    auto& st = stages[k];
    if (st.factor < 2) {
      throw ConfigError("stage " + st.id + ": upsampling factor must be >= 2");
    }
    if (!st.skip_pool) {
      continue;
    }
    auto seq = layers(static_cast<int>(k));
    const auto before = walk(*this, seq);
    const auto src = before.pool_inputs.find(*st.skip_pool);
    if (src == before.pool_inputs.end()) {
      throw ConfigError("stage " + st.id + ": skip source '" + *st.skip_pool + "' is not a pooling layer");
    }
    const Shape& up_from = before.shapes.back().output;
    const int dh = src->second[1] - up_from[1] * st.factor;
    const int dw = src->second[2] - up_from[2] * st.factor;
    st.align = {dh >= 0 ? dh / 2 : -((-dh) / 2), 0, dw >= 0 ? dw / 2 : -((-dw) / 2), 0};
    st.align.bottom = dh - st.align.top;
    st.align.right = dw - st.align.left;
  }
  validate();
}

void NetworkConfig::validate() const {
  std::set<std::string> ids;
  for (const auto& l : layers(static_cast<int>(stages.size()))) {
    if (!ids.insert(l.id).second) {
      throw ConfigError("duplicate layer id '" + l.id + "'");
    }
  }
  for (const auto& l : head) {
    if (l.kind == LayerKind::fullyconv && !wide_head && (l.kernel_h != 5 || l.kernel_w != 5)) {
      chain_error(l, "fully convolutional layers use 5x5 kernels");
    }
  }
  const auto& terminal = head.back();
  if (terminal.kind != LayerKind::fullyconv || terminal.out_channels != 1 || terminal.init != InitKind::zero) {
    chain_error(terminal, "the terminal layer must be a zero-initialised single-channel fullyconv");
  }
  const auto all = walk(*this, layers(static_cast<int>(stages.size())));
  // Each stage must roughly double the resolution.
  for (int k = 1; k <= static_cast<int>(stages.size()); ++k) {
    const auto [h0, w0] = output_resolution(*this, k - 1);
    const auto [h1, w1] = output_resolution(*this, k);
    const double ry = static_cast<double>(h1) / h0;
    const double rx = static_cast<double>(w1) / w0;
    const double f = stages[static_cast<std::size_t>(k - 1)].factor;
    if (std::abs(ry / f - 1.0) > 0.25 || std::abs(rx / f - 1.0) > 0.25) {
      throw ConfigError("stage " + stages[static_cast<std::size_t>(k - 1)].id +
                        " does not scale the resolution by its factor");
    }
  }
}

std::vector<LayerSpec> NetworkConfig::layers(int active_stages) const {
  if (active_stages < 0 || active_stages > static_cast<int>(stages.size())) {
    throw UsageError("active stage count out of range");
  }
  std::vector<LayerSpec> out(trunk);
  out.insert(out.end(), head.begin(), head.end());
  std::map<std::string, int> pool_channels;
  for (const auto& l : trunk) {
    if (l.kind == LayerKind::pool) {
      pool_channels[l.id] = l.in_channels;
    }
  }
  for (int k = 0; k < active_stages; ++k) {
    const auto& st = stages[static_cast<std::size_t>(k)];
    const std::string sfx = stage_suffix(st);
    LayerSpec up = simple("D" + sfx, LayerKind::upsample, 1);
    up.kernel_h = up.kernel_w = 2 * st.factor - st.factor % 2;
    up.stride = st.factor;
    up.pad = ops::Sides::uniform(1);
    up.init = InitKind::bilinear;
    out.push_back(up);
    if (!(st.align == ops::Sides{})) {
      LayerSpec a = simple("A" + sfx, LayerKind::crop_pad, 1);
      a.pad = st.align;
      out.push_back(a);
    }
    if (st.skip_pool) {
      LayerSpec s;
      s.id = "S" + sfx;
      s.kind = LayerKind::skip_fuse;
      s.kernel_h = s.kernel_w = 1;
      const auto ch = pool_channels.find(*st.skip_pool);
      s.in_channels = ch == pool_channels.end() ? 0 : ch->second;
      s.out_channels = 1;
      s.init = InitKind::zero;
      s.source = *st.skip_pool;
      out.push_back(s);
    }
  }
  return out;
}

json NetworkConfig::to_json() const {
  json j{{"profile", profile},
         {"input", json::array({input_channels, input_height, input_width})},
         {"init_gain", init_gain},
         {"wide_head", wide_head},
         {"trunk", json::array()},
         {"head", json::array()},
         {"stages", json::array()}};
  for (const auto& l : trunk) {
    j["trunk"].push_back(layer_json(l));
  }
  for (const auto& l : head) {
    j["head"].push_back(layer_json(l));
  }
  for (const auto& s : stages) {
    json st{{"id", s.id}, {"factor", s.factor}, {"align", sides_json(s.align)}};
    if (s.skip_pool) {
      st["skip"] = *s.skip_pool;
    }
    j["stages"].push_back(st);
  }
  return j;
}

NetworkConfig NetworkConfig::from_json(const json& j) {
  NetworkConfig cfg;
  try {
    cfg.profile = j.value("profile", std::string("custom"));
    cfg.input_channels = j.at("input").at(0).get<int>();
    cfg.input_height = j.at("input").at(1).get<int>();
    cfg.input_width = j.at("input").at(2).get<int>();
    cfg.init_gain = j.value("init_gain", 1.0);
    cfg.wide_head = j.value("wide_head", false);
    for (const auto& l : j.at("trunk")) {
      cfg.trunk.push_back(layer_from_json(l));
    }
    for (const auto& l : j.at("head")) {
      cfg.head.push_back(layer_from_json(l));
    }
    for (const auto& s : j.at("stages")) {
      UpsampleStage st;
      st.id = s.at("id").get<std::string>();
      st.factor = s.value("factor", 2);
      if (s.contains("skip")) {
        st.skip_pool = s["skip"].get<std::string>();
      }
      cfg.stages.push_back(st);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  cfg.resolve();
  return cfg;
}

std::vector<LayerShape> infer_shapes(const NetworkConfig& cfg, int active_stages) {
  return walk(cfg, cfg.layers(active_stages)).shapes;
}

std::pair<int, int> output_resolution(const NetworkConfig& cfg, int active_stages) {
  const auto shapes = infer_shapes(cfg, active_stages);
  const Shape& s = shapes.back().output;
  return {s[1], s[2]};
}

template <typename T>
Network<T>::Network(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.resolve();
  std::mt19937_64 rng(seed);
  for (const auto& l : cfg_.layers(0)) {
    add_layer_parameters(l, &rng);
  }
}

template <typename T>
void Network<T>::add_layer_parameters(const LayerSpec& l, std::mt19937_64* rng) {
  if (!l.has_parameters()) {
    return;
  }
  const Shape wshape = l.kind == LayerKind::upsample ? Shape{l.in_channels, l.out_channels, l.kernel_h, l.kernel_w}
                                                     : Shape{l.out_channels, l.in_channels, l.kernel_h, l.kernel_w};
  Tensor<T> weight(wshape);
  switch (l.init) {
    case InitKind::random: {
      const double s = cfg_.init_gain * std::sqrt(1.0 / (static_cast<double>(l.in_channels) * l.kernel_h * l.kernel_w));
      std::uniform_real_distribution<double> u(-s, s);
      for (auto& v : weight.data()) {
        v = static_cast<T>(u(*rng));
      }
      break;
    }
    case InitKind::bilinear:
      weight = ops::bilinear_kernel<T>(l.in_channels, l.stride);
      break;
    case InitKind::zero:
    case InitKind::none:
      break;
  }
  weight.set_requires_grad(true);
  index_[l.id + ".weight"] = params_.size();
  params_.push_back({l.id + ".weight", weight});
  if (l.kind != LayerKind::upsample) {
    Tensor<T> bias(Shape{l.out_channels});
    bias.set_requires_grad(true);
    index_[l.id + ".bias"] = params_.size();
    params_.push_back({l.id + ".bias", bias});
  }
}

template <typename T>
void Network<T>::grow_stage() {
  if (active_stages_ >= max_stages()) {
    throw UsageError("all " + std::to_string(max_stages()) + " upsampling stages are already active");
  }
  const auto before = cfg_.layers(active_stages_);
  const auto after = cfg_.layers(active_stages_ + 1);
  for (std::size_t i = before.size(); i < after.size(); ++i) {
    add_layer_parameters(after[i], nullptr);
  }
  ++active_stages_;
}

template <typename T>
const Tensor<T>& Network<T>::parameter(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) {
    throw UsageError("no parameter named '" + name + "'");
  }
  return params_[it->second].value;
}

template <typename T>
std::int64_t Network<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    n += p.value.numel();
  }
  return n;
}

template <typename T>
std::pair<int, int> Network<T>::output_resolution() const {
  return stereoae::output_resolution(cfg_, active_stages_);
}

template <typename T>
Tensor<T> Network<T>::forward(Tape<T>& tape, const Tensor<T>& image, const ForwardOptions& options) const {
  if (!image.defined() || image.shape() != Shape{cfg_.input_channels, cfg_.input_height, cfg_.input_width}) {
    throw ConfigError("network expects input " +
                      shape_string({cfg_.input_channels, cfg_.input_height, cfg_.input_width}) + ", got " +
                      (image.defined() ? shape_string(image.shape()) : std::string("undefined")));
  }
  std::map<std::string, Tensor<T>> pool_inputs;
  Tensor<T> h = image;
  const auto weight = [&](const LayerSpec& l) { return parameter(l.id + ".weight"); };
  const auto bias = [&](const LayerSpec& l) { return parameter(l.id + ".bias"); };
  for (const auto& l : layers()) {
    try {
      switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::fullyconv:
          h = ops::conv2d(tape, h, weight(l), bias(l), {l.stride, l.stride, l.pad});
          break;
        case LayerKind::pool:
          pool_inputs[l.id] = h;
          h = ops::maxpool2d(tape, h, {l.kernel_h, l.kernel_w, l.stride, l.stride, l.pad});
          break;
        case LayerKind::lrn:
          h = ops::lrn(tape, h, l.lrn);
          break;
        case LayerKind::relu:
          h = ops::relu(tape, h);
          break;
        case LayerKind::upsample:
          h = ops::bilinear_upsample(tape, h, weight(l), l.stride);
          break;
        case LayerKind::crop_pad:
          h = ops::crop_pad(tape, h, l.pad, ops::BorderMode::replicate);
          break;
        case LayerKind::skip_fuse:
          if (options.ablate_skips) {
            break;
          }
          h = ops::add(tape, h, ops::conv2d(tape, pool_inputs.at(l.source), weight(l), bias(l)));
          break;
      }
    } catch (const NumericError& e) {
      throw NumericError("layer " + l.id + ": " + e.what());
    }
    if (options.trace && !(options.ablate_skips && l.kind == LayerKind::skip_fuse)) {
      options.trace->push_back(l.id);
    }
  }
  return h;
}

template <typename T>
Network<T> Network<T>::clone() const {
  Network out = *this;
  for (auto& p : out.params_) {
    const bool rg = p.value.requires_grad();
    p.value = p.value.clone();
    p.value.set_requires_grad(rg);
  }
  return out;
}

template <typename T>
void Network<T>::copy_parameters_from(const Network& other) {
  if (other.params_.size() != params_.size()) {
    throw UsageError("parameter layouts differ");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].value.data();
    const auto src = other.params_[i].value.data();
    if (dst.size() != src.size()) {
      throw UsageError("parameter '" + params_[i].name + "' differs in size");
    }
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

template class Network<float>;
template class Network<double>;

void StageSchedule::validate() const {
  if (stages.empty()) {
    throw ConfigError("stage schedule is empty");
  }
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const auto& s = stages[k];
    if (s.epochs < 0 || !(s.initial_learning_rate > 0.0)) {
      throw ConfigError("stage " + std::to_string(k) + ": epochs must be >= 0 and the learning rate positive");
    }
    if (k == 0) {
      continue;
    }
    const std::set<std::string> prev(stages[k - 1].active_layers.begin(), stages[k - 1].active_layers.end());
    const std::set<std::string> cur(s.active_layers.begin(), s.active_layers.end());
    const bool contains = std::includes(cur.begin(), cur.end(), prev.begin(), prev.end());
    if (!contains || cur.size() <= prev.size()) {
      throw ConfigError("stage " + std::to_string(k) + " must strictly extend the previous stage's layers");
    }
  }
}

StageSchedule make_schedule(const NetworkConfig& cfg, int finer_stages, int coarse_epochs, int finer_epochs,
                            double lr0, double stage_lr_divisor) {
  if (finer_stages < 0 || finer_stages > static_cast<int>(cfg.stages.size())) {
    throw ConfigError("requested " + std::to_string(finer_stages) + " finer stages, network declares " +
                      std::to_string(cfg.stages.size()));
  }
  if (!(stage_lr_divisor > 0.0)) {
    throw ConfigError("stage learning-rate divisor must be positive");
  }
  StageSchedule sched;
  for (int k = 0; k <= finer_stages; ++k) {
    StagePlan p;
    p.stage = k;
    for (const auto& l : cfg.layers(k)) {
      p.active_layers.push_back(l.id);
    }
    p.epochs = k == 0 ? coarse_epochs : finer_epochs;
    p.initial_learning_rate = lr0 / std::pow(stage_lr_divisor, k);
    sched.stages.push_back(std::move(p));
  }
  sched.validate();
  return sched;
}

}  // namespace stereoae
