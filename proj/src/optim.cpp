#include "kanlab/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace kanlab {

AdamState make_adam(std::size_t n_params, double lr) {
  AdamState s;
  s.m.assign(n_params, 0.0);
  s.v.assign(n_params, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    fail(Errc::shape_mismatch, "Adam parameters, gradients and moments differ in size");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) fail(Errc::non_finite_gradient, "gradient has a non-finite entry");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double mse_loss(const Batch& pred, const Batch& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    fail(Errc::shape_mismatch, "MSE operands differ in shape");
  }
  if (pred.size() == 0) fail(Errc::empty_batch, "MSE of an empty batch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double relative_l2(const Vector& pred, const Vector& ref) {
  if (pred.size() != ref.size()) fail(Errc::shape_mismatch, "relative L2 operands differ in length");
  const double den = ref.norm();
  if (den == 0.0) fail(Errc::zero_reference, "reference has zero norm");
  return (pred - ref).norm() / den;
}

std::string canonical_string(const RunSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "task=" << spec.task << ";widths=";
  for (std::size_t i = 0; i < spec.widths.size(); ++i) os << (i ? "," : "") << spec.widths[i];
  os << ";G=" << spec.grid << ";k=" << spec.spline_order << ";scheme=" << scheme_name(spec.scheme);
  if (const auto* p = std::get_if<PowerLaw>(&spec.scheme)) os << ";alpha=" << p->alpha << ";beta=" << p->beta;
  os << ";seed=" << spec.seed << ";epochs=" << spec.epochs;
  return os.str();
}

std::string fingerprint(const RunSpec& spec) { return fnv1a_hex(canonical_string(spec)); }

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainRecord train_fit(KanNetwork& net, const FitTask& task, int epochs, std::uint64_t seed,
                      const TrainOptions& options) {
  if (epochs < 0) fail(Errc::invalid_config, "epochs must be non-negative");
  if (net.input_dim() != task.input_dim || net.output_dim() != 1) {
    fail(Errc::dimension_mismatch, "network shape does not fit task " + task.id);
  }
  const auto start = std::chrono::steady_clock::now();
  const Batch x = sample_inputs(task, seed);
  const Batch t = eval_target(task, x);
  const JetLoss loss = mse_jet_loss(t);

  TrainRecord rec;
  rec.spec.task = task.id;
  rec.spec.widths = net.widths();
  rec.spec.grid = net.layers.front().kv.intervals();
  rec.spec.spline_order = net.layers.front().kv.order();
  rec.spec.seed = seed;
  rec.spec.epochs = epochs;
  rec.loss_history.reserve(static_cast<std::size_t>(epochs));

  auto theta = pack_parameters(net);
  AdamState adam = make_adam(theta.size(), options.lr);
  if (options.on_epoch) options.on_epoch(0, net);
  for (int e = 0; e <= epochs; ++e) {
    double value = 0.0;
    NetworkGradient grad;
    try {
      auto vg = value_and_gradients(net, loss, x);
      value = vg.first;
      grad = std::move(vg.second);
    } catch (const Error& err) {
      // Training data is finite, so a non-finite layer input means blown-up hidden activations.
      if (err.code() != Errc::non_finite_loss && err.code() != Errc::non_finite_input) throw;
      rec.diverged = true;
      break;
    }
    if (e == 0) {
      rec.initial_loss = value;
    } else {
      rec.loss_history.push_back(value);
      if (options.on_epoch) options.on_epoch(e, net);
    }
    if (e == epochs) break;
    try {
      adam_step(theta, grad.flatten(), adam);
    } catch (const Error& err) {
      if (err.code() != Errc::non_finite_gradient) throw;
      rec.diverged = true;
      break;
    }
    unpack_parameters(net, theta);
  }
  rec.final_loss = rec.loss_history.empty() ? rec.initial_loss : rec.loss_history.back();
  if (rec.diverged) {
    rec.final_loss = std::numeric_limits<double>::quiet_NaN();
    rec.rel_l2 = std::numeric_limits<double>::quiet_NaN();
  } else {
    const Batch grid = eval_grid_points(task);
    const Batch pred = network_forward(net, grid);
    rec.rel_l2 = relative_l2(pred.col(0), eval_target(task, grid));
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

TrainRecord run_fit(const RunSpec& spec, const InitOptions& init, const TrainOptions& options) {
  const FitTask task = make_fit_task(spec.task);
  if (spec.widths.size() < 2 || spec.widths.front() != task.input_dim || spec.widths.back() != 1) {
    fail(Errc::invalid_config, "widths must run from the task's input count to 1");
  }
  KanNetwork net = make_network(spec.widths, spec.grid, spec.spline_order);
  initialize(net, spec.scheme, spec.seed, init);
  TrainRecord rec = train_fit(net, task, spec.epochs, spec.seed, options);
  rec.spec = spec;
  rec.fingerprint = fingerprint(spec);
  return rec;
}

}  // namespace kanlab
