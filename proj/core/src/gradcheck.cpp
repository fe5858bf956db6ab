#include "stereoae/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <ostream>

#include "stereoae/dataio.hpp"
#include "stereoae/encoder.hpp"
#include "stereoae/errors.hpp"
#include "stereoae/geometry.hpp"
#include "stereoae/ops.hpp"
#include "stereoae/trainer.hpp"

namespace stereoae::gradcheck {
namespace {

using Clock = std::chrono::steady_clock;

struct Probe {
  std::size_t input;
  std::size_t index;
};

double weighted_sum(const Tensor<double>& out, const std::vector<double>& w) {
  double s = 0;
  auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
  return s;
}

CheckResult run_check(const std::string& name, const Function& f, std::vector<Tensor<double>>& inputs,
                      double tolerance, const SuiteOptions& options, std::mt19937_64& rng,
                      std::size_t per_input_cap, std::size_t total_cap) {
  const auto t0 = Clock::now();
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }

  // Fixed random projection of the output onto a scalar.
  std::vector<double> w;
  {
    Tape<double> probe(TapeMode::inference);
    const Tensor<double> out = f(probe, inputs);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    w.resize(static_cast<std::size_t>(out.numel()));
    for (auto& v : w) v = out.numel() == 1 ? 1.0 : u(rng);
  }

  Tape<double> tape;
  const Tensor<double> out = f(tape, inputs);
  Tensor<double> weights(out.shape(), std::vector<double>(w));
  const Tensor<double> loss = ops::sum(tape, ops::mul(tape, out, weights));
  tape.backward(loss);

  std::vector<Probe> probes;
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(inputs[j].numel()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > per_input_cap) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_input_cap);
    }
    for (auto i : idx) probes.push_back({j, i});
  }
  if (probes.size() > total_cap) {
    std::shuffle(probes.begin(), probes.end(), rng);
    probes.resize(total_cap);
  }

  const auto eval = [&] {
    Tape<double> t(TapeMode::inference);
    return weighted_sum(f(t, inputs), w);
  };
  std::vector<double> num2(inputs.size(), 0.0), ana2(inputs.size(), 0.0), diff2(inputs.size(), 0.0);
  CheckResult r;
  r.name = name;
  r.tolerance = tolerance;
  for (const auto& p : probes) {
    auto data = inputs[p.input].data();
    const double saved = data[p.index];
    data[p.index] = saved + options.step;
    const double fp = eval();
    data[p.index] = saved - options.step;
    const double fm = eval();
    data[p.index] = saved;
    const double numeric = (fp - fm) / (2 * options.step);
    const double analytic = inputs[p.input].grad()[p.index];
    num2[p.input] += numeric * numeric;
    ana2[p.input] += analytic * analytic;
    diff2[p.input] += (numeric - analytic) * (numeric - analytic);
    r.max_abs_error = std::max(r.max_abs_error, std::abs(numeric - analytic));
    ++r.entries;
  }
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const double denom = std::max({std::sqrt(num2[j]), std::sqrt(ana2[j]), 1e-300});
    if (num2[j] == 0 && ana2[j] == 0) continue;
    r.rel_error = std::max(r.rel_error, std::sqrt(diff2[j]) / denom);
  }
  if (!std::isfinite(r.rel_error)) r.rel_error = std::numeric_limits<double>::infinity();
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

Tensor<double> uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Magnitudes in [lo, hi] with random sign, keeping clear of a kink at 0.
Tensor<double> away_from_zero(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor<double> t = uniform(std::move(shape), lo, hi, rng);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) v = sign(rng) ? v : -v;
  return t;
}

// Disparities whose sample positions x + D stay clear of integer knots and
// the image border, with |D| <= max_d.
Tensor<double> knot_free_disparity(int h, int w, int max_d, std::mt19937_64& rng) {
  Tensor<double> d(Shape{1, h, w});
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uniform_int_distribution<int> cell(std::max(0, x - max_d), std::min(w - 2, x + max_d - 1));
      d.at(0, y, x) = cell(rng) + frac(rng) - x;
    }
  }
  return d;
}

CheckResult composite(const SuiteOptions& options, std::mt19937_64& rng) {
  const auto t0 = Clock::now();
  NetworkConfig cfg = NetworkConfig::make(Profile::desk);
  Network<double> net(cfg, options.seed);
  while (net.active_stages() < net.max_stages()) net.grow_stage();

  // Move zero-initialised branches off zero so every layer receives signal.
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (auto& p : net.parameters()) {
    auto v = p.value.data();
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
      for (auto& x : v) x = u(rng);
    }
  }

  SceneFamilyParams fp;
  fp.height = cfg.input_height;
  fp.width = cfg.input_width;
  const StereoSample scene = synthesize_pair(scene_family(fp, 1, options.seed, "gc").front());
  const auto [h, w] = net.output_resolution();
  const StereoSample small = resize_for_stage(scene, h, w);
  const Tensor<double> image = network_input(net, scene);

  std::vector<Tensor<double>> inputs;
  for (auto& p : net.parameters()) inputs.push_back(p.value);
  const Function f = [&](Tape<double>& tape, const std::vector<Tensor<double>>&) {
    const Tensor<double> d = net.forward(tape, image);
    return geometry::total_loss(tape, small.left, small.right, d).total;
  };
  CheckResult r = run_check("composite desk network + total loss", f, inputs, options.composite_tolerance, options,
                            rng, std::numeric_limits<std::size_t>::max(),
                            static_cast<std::size_t>(options.composite_entries));
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

}  // namespace

CheckResult check(const std::string& name, const Function& f, std::vector<Tensor<double>> inputs, double tolerance,
                  const SuiteOptions& options, std::mt19937_64& rng) {
  return run_check(name, f, inputs, tolerance, options, rng, static_cast<std::size_t>(options.max_entries_per_input),
                   std::numeric_limits<std::size_t>::max());
}

std::vector<CheckResult> run_suite(const SuiteOptions& options) {
  std::mt19937_64 rng(options.seed);
  const double tol = options.primitive_tolerance;
  std::vector<CheckResult> out;
  const auto add = [&](const std::string& name, const Function& f, std::vector<Tensor<double>> inputs) {
    out.push_back(check(name, f, std::move(inputs), tol, options, rng));
  };

  add("conv2d stride 2 pad 1,2,0,1",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::conv2d(t, in[0], in[1], in[2], ops::Conv2dParams{2, 2, {1, 2, 0, 1}});
      },
      {uniform({3, 7, 8}, -1, 1, rng), uniform({4, 3, 3, 3}, -1, 1, rng), uniform({4}, -1, 1, rng)});
  add("conv2d 1x1",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::conv2d(t, in[0], in[1], in[2]);
      },
      {uniform({5, 4, 6}, -1, 1, rng), uniform({2, 5, 1, 1}, -1, 1, rng), uniform({2}, -1, 1, rng)});
  add("conv_transpose2d stride 2",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::conv_transpose2d(t, in[0], in[1], in[2], 2);
      },
      {uniform({2, 4, 5}, -1, 1, rng), uniform({2, 3, 4, 4}, -1, 1, rng), uniform({3}, -1, 1, rng)});
  add("bilinear_upsample x2 learnable kernel",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::bilinear_upsample(t, in[0], in[1], 2);
      },
      {uniform({2, 4, 5}, -1, 1, rng), ops::bilinear_kernel<double>(2, 2)});
  add("maxpool2d 3x3/2 pad 1",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::maxpool2d(t, in[0], ops::Pool2dParams{3, 3, 2, 2, ops::Sides::uniform(1)});
      },
      {uniform({2, 7, 9}, -1, 1, rng)});
  add("lrn",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::lrn(t, in[0], ops::LrnParams{2, 0.5, 0.75, 2.0});
      },
      {uniform({7, 3, 4}, -2, 2, rng)});
  add("relu", [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return ops::relu(t, in[0]); },
      {away_from_zero({2, 5, 6}, 0.01, 1, rng)});
  add("add", [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return ops::add(t, in[0], in[1]); },
      {uniform({2, 3, 4}, -1, 1, rng), uniform({2, 3, 4}, -1, 1, rng)});
  add("mul", [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return ops::mul(t, in[0], in[1]); },
      {uniform({2, 3, 4}, -1, 1, rng), uniform({2, 3, 4}, -1, 1, rng)});
  add("scale", [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return ops::scale(t, in[0], -1.7); },
      {uniform({2, 3, 4}, -1, 1, rng)});
  add("sum", [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return ops::sum(t, in[0]); },
      {uniform({2, 3, 4}, -1, 1, rng)});
  add("crop_pad zero",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::crop_pad(t, in[0], ops::Sides{1, -1, -2, 2}, ops::BorderMode::zero);
      },
      {uniform({2, 5, 6}, -1, 1, rng)});
  add("crop_pad replicate",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return ops::crop_pad(t, in[0], ops::Sides{2, -1, 1, -1}, ops::BorderMode::replicate);
      },
      {uniform({2, 5, 6}, -1, 1, rng)});
  add("inverse_warp",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return geometry::inverse_warp(t, in[0], in[1]).warped;
      },
      {uniform({2, 4, 12}, -1, 1, rng), knot_free_disparity(4, 12, 4, rng)});
  {
    Tensor<double> mask = uniform({1, 4, 6}, 0, 1, rng);
    for (auto& v : mask.data()) v = v < 0.3 ? 0.0 : 1.0;
    add("photometric_loss",
        [mask](Tape<double>& t, const std::vector<Tensor<double>>& in) {
          return geometry::photometric_loss(t, in[0], in[1], mask).value;
        },
        {uniform({3, 4, 6}, -1, 1, rng), uniform({3, 4, 6}, -1, 1, rng)});
  }
  add("smoothness_loss",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return geometry::smoothness_loss(t, in[0]); },
      {uniform({1, 5, 7}, -3, 3, rng)});
  add("total_loss",
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) {
        return geometry::total_loss(t, in[0], in[1], in[2], 0.01).total;
      },
      {uniform({1, 4, 12}, -1, 1, rng), uniform({1, 4, 12}, -1, 1, rng), knot_free_disparity(4, 12, 4, rng)});

  if (options.include_composite) out.push_back(composite(options, rng));
  return out;
}

void write_report(std::ostream& out, const std::vector<CheckResult>& results) {
  const auto old = out.precision(3);
  for (const auto& r : results) {
    out << r.name << ": rel=" << std::scientific << r.rel_error << " abs=" << r.max_abs_error
        << " tol=" << r.tolerance << std::defaultfloat << " entries=" << r.entries << ' '
        << (r.passed() ? "PASS" : "FAIL") << '\n';
  }
  out.precision(old);
}

}  // namespace stereoae::gradcheck
