#include "attnes/controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace attnes {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check(const std::vector<double>& v, const char* name) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw NumericError(std::string("non-finite controller parameter ") + name + "[" +
                         std::to_string(i) + "]");
}

}  // namespace

ActionSpec ActionSpec::continuous(std::vector<ActionBounds> bounds) {
  for (const auto& b : bounds)
    if (!(b.lo < b.hi)) throw ConfigError("ActionSpec: bounds need lo < hi");
  ActionSpec s;
  s.kind = ActionKind::Continuous;
  s.dim = bounds.size();
  s.bounds = std::move(bounds);
  return s;
}

ActionSpec ActionSpec::discrete(std::size_t count) {
  if (count == 0) throw ConfigError("ActionSpec: discrete action count must be >= 1");
  ActionSpec s;
  s.kind = ActionKind::Discrete;
  s.dim = count;
  return s;
}

LstmParams LstmParams::zeros(std::size_t inputs, std::size_t hidden, std::size_t actions) {
  return {Matrix(4 * hidden, inputs), Matrix(4 * hidden, hidden), std::vector<double>(4 * hidden),
          std::vector<double>(4 * hidden), Matrix(actions, hidden), std::vector<double>(actions)};
}

std::size_t LstmParams::count(std::size_t inputs, std::size_t hidden, std::size_t actions) {
  return 4 * hidden * (inputs + hidden) + 8 * hidden + hidden * actions + actions;
}

ControllerState reset_controller(std::size_t hidden) {
  return {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0)};
}

void check_finite(const LstmParams& p) {
  check(p.w_ih.data(), "W_ih");
  check(p.w_hh.data(), "W_hh");
  check(p.b_ih, "b_ih");
  check(p.b_hh, "b_hh");
  check(p.w_out.data(), "W_out");
  check(p.b_out, "b_out");
}

std::pair<Action, ControllerState> step_controller(std::span<const double> features,
                                                   const ControllerState& state,
                                                   const LstmParams& p, const ActionSpec& spec) {
  const std::size_t in = p.inputs(), h = p.hidden(), na = p.actions();
  if (features.size() != in)
    throw ConfigError("step_controller: expected " + std::to_string(in) + " features, got " +
                      std::to_string(features.size()));
  if (state.h.size() != h || state.c.size() != h)
    throw ConfigError("step_controller: state size does not match hidden size");
  if (spec.dim != na) throw ConfigError("step_controller: action spec dim does not match head");
  for (std::size_t i = 0; i < in; ++i)
    if (!std::isfinite(features[i])) throw NumericError("step_controller: non-finite feature");
  check_finite(p);

  std::vector<double> gates(4 * h);
  for (std::size_t r = 0; r < 4 * h; ++r) {
    double z = p.b_ih[r] + p.b_hh[r];
    const auto wi = p.w_ih.row(r);
    for (std::size_t k = 0; k < in; ++k) z += wi[k] * features[k];
    const auto wh = p.w_hh.row(r);
    for (std::size_t k = 0; k < h; ++k) z += wh[k] * state.h[k];
    gates[r] = z;
  }

  ControllerState next{std::vector<double>(h), std::vector<double>(h)};
  for (std::size_t j = 0; j < h; ++j) {
    const double i_gate = sigmoid(gates[j]);
    const double f_gate = sigmoid(gates[h + j]);
    const double g_cell = std::tanh(gates[2 * h + j]);
    const double o_gate = sigmoid(gates[3 * h + j]);
    next.c[j] = f_gate * state.c[j] + i_gate * g_cell;
    next.h[j] = o_gate * std::tanh(next.c[j]);
  }

  std::vector<double> logits(na);
  for (std::size_t a = 0; a < na; ++a) {
    double z = p.b_out[a];
    const auto w = p.w_out.row(a);
    for (std::size_t k = 0; k < h; ++k) z += w[k] * next.h[k];
    logits[a] = z;
  }

  Action action;
  if (spec.kind == ActionKind::Continuous) {
    action.values.resize(na);
    for (std::size_t a = 0; a < na; ++a) {
      const auto [lo, hi] = spec.bounds[a];
      const double v = lo + (std::tanh(logits[a]) + 1.0) * 0.5 * (hi - lo);
      action.values[a] = std::clamp(v, lo, hi);
    }
  } else {
    std::size_t best = 0;
    for (std::size_t a = 1; a < na; ++a)
      if (logits[a] > logits[best]) best = a;
    action.index = static_cast<int>(best);
  }
  return {std::move(action), std::move(next)};
}

}  // namespace attnes
