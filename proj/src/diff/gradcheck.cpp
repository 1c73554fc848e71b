#include "supmae/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "supmae/error.hpp"

namespace supmae::diff {
namespace {

double evaluate(const LossBuilder& f, const NamedTensors<double>& params, GradMode mode,
                Gradients<double>* grads) {
  Graph<double> g(mode);
  Leaves<double> leaves;
  for (const auto& [name, t] : params) leaves.emplace(name, g.leaf(name, t));
  Var<double> loss = f(g, leaves);
  if (loss.value().size() != 1) {
    fail(ErrorCategory::usage, "grad_check: loss must be a scalar, got shape " +
                                   shape_str(loss.shape()));
  }
  const double v = loss.value()[0];
  if (!std::isfinite(v)) fail(ErrorCategory::numeric, "grad_check: loss is not finite");
  if (grads) *grads = g.backward(loss);
  return v;
}

long double evaluate_extended(const ExtendedLossBuilder& f, const NamedTensors<long double>& params) {
  Graph<long double> g(GradMode::disabled);
  Leaves<long double> leaves;
  for (const auto& [name, t] : params) leaves.emplace(name, g.leaf(name, t));
  const long double v = f(g, leaves).value()[0];
  if (!std::isfinite(v)) fail(ErrorCategory::numeric, "grad_check: extended loss is not finite");
  return v;
}

std::vector<std::size_t> entries_to_check(const Tensor<double>& analytic,
                                          const GradCheckOptions& opt, std::size_t salt) {
  std::vector<std::size_t> idx(analytic.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (opt.max_entries_per_tensor == 0 || idx.size() <= opt.max_entries_per_tensor) return idx;
  std::size_t largest = 0;
  for (std::size_t i = 1; i < analytic.size(); ++i)
    if (std::abs(analytic[i]) > std::abs(analytic[largest])) largest = i;
  std::mt19937_64 rng(opt.subset_seed * 0x9E3779B97F4A7C15ULL + salt);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(opt.max_entries_per_tensor);
  if (std::find(idx.begin(), idx.end(), largest) == idx.end()) idx.back() = largest;
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

bool GradCheckReport::passed() const {
  return std::all_of(params.begin(), params.end(),
                     [this](const ParamCheck& p) { return p.max_rel_err <= tol; });
}

double GradCheckReport::max_rel_err() const {
  double m = 0;
  for (const auto& p : params) m = std::max(m, p.max_rel_err);
  return m;
}

std::string GradCheckReport::table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-36s %-14s %8s %8s %12s %13s %13s %s\n", "parameter", "shape",
                "checked", "refined", "max_rel_err", "analytic", "numeric", "status");
  os << line;
  for (const auto& p : params) {
    std::snprintf(line, sizeof line, "%-36s %-14s %8zu %8zu %12.3e %13.6e %13.6e %s\n", p.name.c_str(),
                  shape_str(p.shape).c_str(), p.checked, p.refined, p.max_rel_err, p.analytic, p.numeric,
                  p.max_rel_err <= tol ? "ok" : "FAIL");
    os << line;
  }
  std::snprintf(line, sizeof line, "loss=%.12g step=%g tol=%g max_rel_err=%.3e -> %s\n", loss,
                step, tol, max_rel_err(), passed() ? "PASS" : "FAIL");
  os << line;
  return os.str();
}

GradCheckReport grad_check(const LossBuilder& f, const NamedTensors<double>& params, double step,
                           double tol, const GradCheckOptions& options) {
  if (!(step > 0) || !(tol > 0)) fail(ErrorCategory::usage, "grad_check: step and tol must be positive");
  GradCheckReport report;
  report.tol = tol;
  report.step = step;
  Gradients<double> grads;
  report.loss = evaluate(f, params, GradMode::enabled, &grads);

  NamedTensors<double> probe = params;
  NamedTensors<long double> wide;
  if (options.refine) {
    for (const auto& [name, t] : params) wide.emplace_back(name, t.template cast<long double>());
  }
  for (std::size_t pi = 0; pi < probe.size(); ++pi) {
    auto& [name, tensor] = probe[pi];
    const auto& analytic = grads.at(name);
    ParamCheck pc;
    pc.name = name;
    pc.shape = tensor.shape();
    for (auto i : entries_to_check(analytic, options, pi)) {
      const double orig = tensor[i];
      tensor[i] = orig + step;
      const double fp = evaluate(f, probe, GradMode::disabled, nullptr);
      tensor[i] = orig - step;
      const double fm = evaluate(f, probe, GradMode::disabled, nullptr);
      tensor[i] = orig;
      double numeric = (fp - fm) / (2.0 * step);
      double err = relative_error(analytic[i], numeric);
      if (options.refine && err > options.refine_fraction * tol) {
        auto& w = wide[pi].second;
        const long double worig = w[i];
        w[i] = worig + step;
        const long double wp = evaluate_extended(options.refine, wide);
        w[i] = worig - step;
        const long double wm = evaluate_extended(options.refine, wide);
        w[i] = worig;
        numeric = static_cast<double>((wp - wm) / (2.0L * step));
        err = relative_error(analytic[i], numeric);
        ++pc.refined;
      }
      if (pc.checked == 0 || err > pc.max_rel_err) {
        pc.max_rel_err = err;
        pc.worst_index = i;
        pc.analytic = analytic[i];
        pc.numeric = numeric;
      }
      ++pc.checked;
    }
    report.params.push_back(std::move(pc));
  }
  return report;
}

}  // namespace supmae::diff
