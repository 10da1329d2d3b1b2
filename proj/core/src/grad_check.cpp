#include "panet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "panet/ops.hpp"

namespace panet {

namespace {

double projected(const Tensor& out, const std::vector<double>& weights) {
  long double acc = 0.0L;
  const auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) acc += weights.empty() ? v[i] : v[i] * weights[i];
  return static_cast<double>(acc);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

GradCheckReport grad_check(const GradCheckedOp& op, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;

  std::vector<double> weights;
  Tensor out = op(inputs);
  if (options.projection_seed != 0) {
    std::mt19937_64 rng(options.projection_seed);
    std::uniform_real_distribution<double> dist(0.5, 1.5);
    weights.resize(out.size());
    for (auto& w : weights) w = dist(rng);
  }

  for (auto& in : inputs) {
    if (in.requires_grad()) in.zero_grad();
  }
  if (!all_finite(out.data())) {
    report.finite = false;
    report.worst = "non-finite forward output";
    return report;
  }
  if (!out.requires_grad()) {
    report.worst = "output does not depend on any differentiable input";
    return report;
  }
  Tensor loss = weights.empty() ? sum(out) : sum(mul_const(out, weights));
  loss.backward();

  std::mt19937_64 pick(options.projection_seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& in = inputs[k];
    if (!in.requires_grad()) continue;
    std::vector<double> analytic(in.size(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    if (!all_finite(analytic)) {
      report.finite = false;
      report.worst = "non-finite analytic gradient on input#" + std::to_string(k);
      return report;
    }

    std::vector<std::size_t> coords(in.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_probes_per_input != 0 && coords.size() > options.max_probes_per_input) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(options.max_probes_per_input);
      std::sort(coords.begin(), coords.end());
    }

    auto values = in.mutable_data();
    for (std::size_t c : coords) {
      const double saved = values[c];
      double f_plus = 0.0, f_minus = 0.0;
      {
        NoGradGuard guard;
        values[c] = saved + options.eps;
        f_plus = projected(op(inputs), weights);
        values[c] = saved - options.eps;
        f_minus = projected(op(inputs), weights);
        values[c] = saved;
      }
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        report.finite = false;
        report.worst = "non-finite perturbed output on input#" + std::to_string(k);
        return report;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * options.eps);
      const double a = analytic[c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.rel_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.probes;
      if (rel > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          std::ostringstream os;
          os.precision(10);
          os << "input#" << k << '[' << c << "]: analytic " << a << " vs numeric " << numeric;
          report.worst = os.str();
        }
      }
    }
  }
  report.passed = report.finite && report.probes > 0 && report.max_rel_error <= options.tol;
  return report;
}

}  // namespace panet
