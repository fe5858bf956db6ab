#include "stereoae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stereoae/errors.hpp"

namespace stereoae {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'A', 'E', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename V>
  void pod(V v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(V));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename T>
  void tensor(const std::string& name, const Tensor<T>& t) {
    str(name);
    pod(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) pod(static_cast<std::int32_t>(d));
    const auto v = t.data();
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename V>
  V pod() {
    V v{};
    bytes(reinterpret_cast<char*>(&v), sizeof(V));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 30)) fail("implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  template <typename T>
  std::pair<std::string, Tensor<T>> tensor() {
    std::string name = str();
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) fail("implausible tensor rank for '" + name + "'");
    Shape shape;
    std::int64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = pod<std::int32_t>();
      if (d < 0) fail("negative dimension for '" + name + "'");
      shape.push_back(d);
      n *= d;
    }
    if (n > (std::int64_t{1} << 32)) fail("implausible tensor size for '" + name + "'");
    Tensor<T> t(shape);
    auto v = t.data();
    bytes(reinterpret_cast<char*>(v.data()), v.size_bytes());
    return {std::move(name), std::move(t)};
  }
  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated");
  }
  [[noreturn]] void fail(const std::string& what) const { throw IoError(source_ + ": checkpoint " + what); }

 private:
  std::istream& in_;
  std::string source_;
};

CheckpointHeader read_header(Reader& r) {
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("has a bad magic number");
  CheckpointHeader h;
  h.version = r.pod<std::uint32_t>();
  if (h.version != kCheckpointVersion) r.fail("version " + std::to_string(h.version) + " is not supported");
  h.config_hash = r.pod<std::uint64_t>();
  const std::string arch = r.str();
  try {
    h.architecture = NetworkConfig::from_json(nlohmann::json::parse(arch));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("architecture is not valid JSON: ") + e.what());
  }
  h.active_stages = static_cast<int>(r.pod<std::uint32_t>());
  h.network_seed = r.pod<std::uint64_t>();
  h.element_size = r.pod<std::uint8_t>();
  return h;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, const TrainState<T>& state,
                     std::uint64_t config_hash) {
  std::ostringstream buf(std::ios::binary);
  Writer w(buf);
  buf.write(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.pod(config_hash);
  w.str(net.config().to_json().dump());
  w.pod(static_cast<std::uint32_t>(net.active_stages()));
  w.pod(static_cast<std::uint64_t>(net.seed()));
  w.pod(static_cast<std::uint8_t>(sizeof(T)));

  w.pod(static_cast<std::int32_t>(state.phase));
  w.pod(static_cast<std::int32_t>(state.epoch));
  w.pod(static_cast<std::int32_t>(state.global_epoch));
  w.pod(static_cast<std::uint64_t>(state.seed));
  std::ostringstream rng;
  rng << state.rng;
  w.str(rng.str());

  const auto& params = net.parameters();
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) w.tensor(p.name, p.value);
  w.pod(static_cast<std::uint32_t>(state.velocity.size()));
  for (std::size_t i = 0; i < state.velocity.size(); ++i) {
    w.tensor(i < params.size() ? params[i].name : std::string("velocity"), state.velocity[i]);
  }
  w.pod(static_cast<std::uint32_t>(state.history.size()));
  for (const auto& h : state.history) {
    w.pod(static_cast<std::int32_t>(h.phase));
    w.pod(static_cast<std::int32_t>(h.stage));
    w.pod(static_cast<std::int32_t>(h.epoch));
    w.pod(h.lr);
    w.pod(h.recons);
    w.pod(h.smooth);
    w.pod(h.total);
  }

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    const std::string bytes = buf.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  return read_header(r);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  LoadedCheckpoint<T> out;
  out.header = read_header(r);
  if (out.header.element_size != static_cast<int>(sizeof(T))) {
    throw ConfigError(path.string() + ": checkpoint holds " + std::to_string(out.header.element_size) +
                      "-byte elements, expected " + std::to_string(sizeof(T)));
  }
  out.header.architecture.resolve();
  Network<T>& net = out.network.emplace(out.header.architecture, out.header.network_seed);
  if (out.header.active_stages > net.max_stages()) r.fail("declares more stages than the architecture has");
  while (net.active_stages() < out.header.active_stages) net.grow_stage();

  auto& st = out.state;
  st.phase = r.pod<std::int32_t>();
  st.epoch = r.pod<std::int32_t>();
  st.global_epoch = r.pod<std::int32_t>();
  st.seed = r.pod<std::uint64_t>();
  std::istringstream rng(r.str());
  rng >> st.rng;
  if (!rng) r.fail("has an unreadable RNG state");

  auto& params = net.parameters();
  const auto n = r.pod<std::uint32_t>();
  if (n != params.size()) {
    r.fail("has " + std::to_string(n) + " parameter tensors, network has " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto [name, t] = r.tensor<T>();
    if (name != p.name || t.shape() != p.value.shape()) {
      throw ConfigError(path.string() + ": parameter '" + name + "' " + shape_string(t.shape()) +
                        " does not match '" + p.name + "' " + shape_string(p.value.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p.value.data().begin());
  }
  const auto nv = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nv; ++i) st.velocity.push_back(r.tensor<T>().second);
  const auto nh = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nh; ++i) {
    EpochRecord h;
    h.phase = r.pod<std::int32_t>();
    h.stage = r.pod<std::int32_t>();
    h.epoch = r.pod<std::int32_t>();
    h.lr = r.pod<double>();
    h.recons = r.pod<double>();
    h.smooth = r.pod<double>();
    h.total = r.pod<double>();
    st.history.push_back(h);
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("has trailing bytes");
  return out;
}

template void save_checkpoint<float>(const std::filesystem::path&, const Network<float>&, const TrainState<float>&,
                                     std::uint64_t);
template void save_checkpoint<double>(const std::filesystem::path&, const Network<double>&,
                                      const TrainState<double>&, std::uint64_t);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace stereoae
