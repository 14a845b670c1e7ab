#include "kanlab/tasks_fit.hpp"

#include "kanlab/special.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <span>

namespace kanlab {

namespace {

constexpr double kPi = std::numbers::pi;

double f3(double x, double y) { return bessel_i1(x) + std::exp(std::exp(-std::abs(y)) * bessel_i1(y)) + std::sin(x * y); }

double f4(double x, double y) {
  // S(z) C(z) tends to 1/4 as z -> +-inf, which is where erfinv(+-1) sends it.
  if (std::abs(y) >= 1.0) return 0.25;
  const double z = f3(x, y) + erfinv(y);
  return fresnel_s(z) * fresnel_c(z);
}

double f5(double x, double y) {
  const double xy = x * y;
  const double m = xy == 0.0 ? 0.0 : std::min(xy, 1.0 / xy);
  return y * sgn_half_minus(x) + erf(x) * m;
}

using Formula = double (*)(const double*);

struct Entry {
  const char* id;
  int arity;
  bool feynman;
  Formula fn;
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries{
      {"f1", 2, false, [](const double* v) { return v[0] * v[1]; }},
      {"f2", 2, false, [](const double* v) { return std::exp(std::sin(kPi * v[0]) + v[1] * v[1]); }},
      {"f3", 2, false, [](const double* v) { return f3(v[0], v[1]); }},
      {"f4", 2, false, [](const double* v) { return f4(v[0], v[1]); }},
      {"f5", 2, false, [](const double* v) { return f5(v[0], v[1]); }},
      {"I.6.2", 2, true,
       [](const double* v) { return std::exp(-v[0] * v[0] / (2 * v[1] * v[1])) / std::sqrt(2 * kPi * v[1] * v[1]); }},
      {"I.6.2b", 3, true,
       [](const double* v) {
         const double d = v[0] - v[1];
         return std::exp(-d * d / (2 * v[2] * v[2])) / std::sqrt(2 * kPi * v[2] * v[2]);
       }},
      {"I.12.11", 2, true, [](const double* v) { return 1 + v[0] * std::sin(v[1]); }},
      {"I.13.12", 2, true, [](const double* v) { return v[0] * (1 / v[1] - 1); }},
      {"I.16.6", 2, true, [](const double* v) { return (v[0] + v[1]) / (1 + v[0] * v[1]); }},
      {"I.18.4", 2, true, [](const double* v) { return (1 + v[0] * v[1]) / (1 + v[0]); }},
      {"I.26.2", 2, true, [](const double* v) { return std::asin(v[0] * std::sin(v[1])); }},
      {"I.27.6", 2, true, [](const double* v) { return 1 / (1 + v[0] * v[1]); }},
      {"I.29.16", 3, true,
       [](const double* v) { return std::sqrt(1 + v[0] * v[0] - 2 * v[0] * std::cos(v[1] - v[2])); }},
      {"I.30.3", 2, true,
       [](const double* v) {
         const double num = std::sin(v[0] * v[1] / 2);
         const double den = std::sin(v[1] / 2);
         return num * num / (den * den);
       }},
      {"I.40.1", 2, true, [](const double* v) { return v[0] * std::exp(-v[1]); }},
      {"I.50.26", 2, true,
       [](const double* v) {
         const double c = std::cos(v[0]);
         return c + v[1] * c * c;
       }},
      {"II.2.42", 2, true, [](const double* v) { return (v[0] - 1) * v[1]; }},
      {"II.6.15a", 3, true,
       [](const double* v) { return v[2] / (4 * kPi) * std::sqrt(v[0] * v[0] + v[1] * v[1]); }},
      {"II.11.7", 3, true, [](const double* v) { return v[0] * (1 + v[1] * std::cos(v[2])); }},
      {"II.11.27", 2, true, [](const double* v) { return v[0] * v[1] / (1 - v[0] * v[1] / 3); }},
      {"II.35.18", 2, true, [](const double* v) { return v[0] / (std::exp(v[1]) + std::exp(-v[1])); }},
      {"II.36.38", 3, true, [](const double* v) { return v[0] + v[1] * v[2]; }},
      {"III.10.19", 2, true, [](const double* v) { return std::sqrt(1 + v[0] * v[0] + v[1] * v[1]); }},
      {"III.17.37", 3, true, [](const double* v) { return v[1] * (1 + v[0] * std::cos(v[2])); }},
  };
  return entries;
}

const Entry& lookup(const std::string& id) {
  for (const auto& e : registry()) {
    if (id == e.id) return e;
  }
  fail(Errc::unknown_id, "unknown fit task '" + id + "'");
}

bool excluded(double v) {
  return std::abs(v) < kFeynmanExclusion || std::abs(v - 1.0) < kFeynmanExclusion ||
         std::abs(v + 1.0) < kFeynmanExclusion;
}

}  // namespace

std::vector<std::string> fit_task_ids() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.emplace_back(e.id);
  return out;
}

std::vector<std::string> feynman_task_ids() {
  std::vector<std::string> out;
  for (const auto& e : registry()) {
    if (e.feynman) out.emplace_back(e.id);
  }
  return out;
}

FitTask make_fit_task(const std::string& id) {
  const Entry& e = lookup(id);
  FitTask task;
  task.id = e.id;
  task.input_dim = e.arity;
  task.feynman = e.feynman;
  if (e.feynman) {
    task.grid_per_axis = e.arity == 3 ? 30 : 200;
    task.grid_margin = kFeynmanGridMargin;
  }
  return task;
}

double eval_target(const FitTask& task, const double* point) {
  const double v = lookup(task.id).fn(point);
  if (!std::isfinite(v)) fail(Errc::singular_input, "target " + task.id + " is not finite at this point");
  return v;
}

Vector eval_target(const FitTask& task, const Batch& points) {
  if (points.cols() != task.input_dim) {
    fail(Errc::dimension_mismatch, task.id + " takes " + std::to_string(task.input_dim) + " inputs");
  }
  const Entry& e = lookup(task.id);
  Vector out(points.rows());
  for (Eigen::Index s = 0; s < points.rows(); ++s) {
    const double v = e.fn(points.row(s).data());
    if (!std::isfinite(v)) fail(Errc::singular_input, "target " + task.id + " is not finite at row " + std::to_string(s));
    out(s) = v;
  }
  return out;
}

Batch sample_inputs(const FitTask& task, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Batch x(task.n_train, task.input_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double v = u(rng);
    while (task.feynman && excluded(v)) v = u(rng);
    x.data()[i] = v;
  }
  return x;
}

Batch eval_grid_points(const FitTask& task) {
  const int n = task.grid_per_axis;
  const int d = task.input_dim;
  std::vector<double> axis(static_cast<std::size_t>(n));
  const double lo = -1.0 + task.grid_margin;
  const double hi = 1.0 - task.grid_margin;
  for (int i = 0; i < n; ++i) {
    if (task.feynman) {
      axis[static_cast<std::size_t>(i)] = lo + (i + 0.5) * (hi - lo) / n;
    } else {
      axis[static_cast<std::size_t>(i)] = i == n - 1 ? hi : lo + i * (hi - lo) / (n - 1);
    }
  }
  Eigen::Index total = 1;
  for (int k = 0; k < d; ++k) total *= n;
  Batch out(total, d);
  for (Eigen::Index row = 0; row < total; ++row) {
    Eigen::Index rest = row;
    for (int k = d - 1; k >= 0; --k) {
      out(row, k) = axis[static_cast<std::size_t>(rest % n)];
      rest /= n;
    }
  }
  return out;
}

}  // namespace kanlab
