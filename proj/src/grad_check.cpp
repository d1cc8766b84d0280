#include "sdvit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sdvit/errors.hpp"
#include "sdvit/ops.hpp"

namespace sdvit {

float grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, float eps) {
  if (!(eps > 0.0f && eps < 0.1f)) throw InvalidArgument("grad_check: eps must be in (0, 0.1)");

  std::vector<Tensor> args = inputs;
  std::vector<bool> had_flag;
  for (Tensor& t : args) {
    had_flag.push_back(t.requires_grad());
    t.zero_grad();
    t.set_requires_grad(true);
  }
  f(args).backward();
  std::vector<std::vector<float>> analytic;
  for (const Tensor& t : args) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0f);
    }
  }

  double worst = 0.0;
  {
    NoGradGuard no_grad;
    for (std::size_t a = 0; a < args.size(); ++a) {
      auto values = args[a].data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const float saved = values[i];
        values[i] = saved + eps;
        const double plus = f(args).item();
        values[i] = saved - eps;
        const double minus = f(args).item();
        values[i] = saved;
        const double numeric = (plus - minus) / (2.0 * static_cast<double>(eps));
        const double exact = analytic[a][i];
        const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(exact - numeric) / denom);
      }
    }
  }

  for (std::size_t a = 0; a < args.size(); ++a) {
    args[a].zero_grad();
    args[a].set_requires_grad(had_flag[a]);
  }
  return static_cast<float>(worst);
}

float directional_grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, float eps,
                             std::size_t directions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(-1.0f, 1.0f);
  std::vector<Tensor> base;
  for (const Tensor& t : inputs) base.push_back(t.detach());

  // Analytic gradient, used only to reject directions nearly orthogonal to it:
  // there the directional derivative is below f32 differencing noise.
  std::vector<Tensor> probe;
  for (const Tensor& t : base) probe.push_back(t.clone().set_requires_grad(true));
  f(probe).backward();

  float worst = 0.0f;
  for (std::size_t round = 0; round < directions; ++round) {
    std::vector<Tensor> dirs;
    bool aligned = false;
    double dot = 0.0, gg = 0.0, dd = 0.0;
    for (int attempt = 0; attempt < 100 && !aligned; ++attempt) {
      dirs.clear();
      dot = gg = dd = 0.0;
      for (std::size_t i = 0; i < base.size(); ++i) {
        Tensor d(base[i].shape());
        auto g = probe[i].grad();
        auto dv = d.data();
        for (std::size_t j = 0; j < dv.size(); ++j) {
          dv[j] = unit(rng);
          const double gj = g.empty() ? 0.0 : g[j];
          dot += gj * dv[j];
          gg += gj * gj;
          dd += static_cast<double>(dv[j]) * dv[j];
        }
        dirs.push_back(std::move(d));
      }
      aligned = std::abs(dot) >= 0.1 * std::sqrt(gg * dd);
    }
    if (!aligned) {
      // High-dimensional inputs: random directions are all nearly orthogonal
      // to the gradient. Mix in the unit gradient (cosine about 0.7) and take
      // a unit step, so eps is the Euclidean step length.
      const double rn = 1.0 / std::sqrt(dd);
      const double gn = gg > 0.0 ? 1.0 / std::sqrt(gg) : 0.0;
      double nn = 0.0;
      for (std::size_t i = 0; i < base.size(); ++i) {
        auto g = probe[i].grad();
        for (std::size_t j = 0; j < dirs[i].numel(); ++j) {
          const double v = dirs[i].data()[j] * rn + (g.empty() ? 0.0 : g[j] * gn);
          dirs[i].data()[j] = static_cast<float>(v);
          nn += v * v;
        }
      }
      const float inv = static_cast<float>(1.0 / std::sqrt(nn));
      for (Tensor& d : dirs)
        for (float& v : d.data()) v *= inv;
    }
    auto along = [&](const std::vector<Tensor>& step) {
      std::vector<Tensor> moved;
      moved.reserve(base.size());
      for (std::size_t i = 0; i < base.size(); ++i) moved.push_back(add(base[i], scale_by(dirs[i], step[0])));
      return f(moved);
    };
    worst = std::max(worst, grad_check(along, {Tensor::scalar(0.0f)}, eps));
  }
  return worst;
}

}  // namespace sdvit
