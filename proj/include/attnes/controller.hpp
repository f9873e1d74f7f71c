#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "attnes/core.hpp"

namespace attnes {

enum class ActionKind { Continuous, Discrete };

struct ActionBounds {
  double lo = -1.0;
  double hi = 1.0;
  bool operator==(const ActionBounds&) const = default;
};

struct ActionSpec {
  ActionKind kind = ActionKind::Continuous;
  std::size_t dim = 0;
  std::vector<ActionBounds> bounds;  // one per dimension, continuous only

  static ActionSpec continuous(std::vector<ActionBounds> bounds);
  static ActionSpec discrete(std::size_t count);

  bool operator==(const ActionSpec&) const = default;
};

/// Continuous actions fill `values`; discrete actions set `index` and leave `values` empty.
struct Action {
  std::vector<double> values;
  int index = -1;
  bool operator==(const Action&) const = default;
};

/// LSTM cell plus linear output head. Gate blocks are stacked (input, forget, cell, output),
/// each block `hidden` rows tall.
struct LstmParams {
  Matrix w_ih;                // 4h x in
  Matrix w_hh;                // 4h x h
  std::vector<double> b_ih;   // 4h
  std::vector<double> b_hh;   // 4h
  Matrix w_out;               // A x h
  std::vector<double> b_out;  // A

  static LstmParams zeros(std::size_t inputs, std::size_t hidden, std::size_t actions);
  static std::size_t count(std::size_t inputs, std::size_t hidden, std::size_t actions);

  std::size_t inputs() const { return w_ih.cols(); }
  std::size_t hidden() const { return w_hh.cols(); }
  std::size_t actions() const { return w_out.rows(); }
  std::size_t parameter_count() const { return count(inputs(), hidden(), actions()); }

  bool operator==(const LstmParams&) const = default;
};

struct ControllerState {
  std::vector<double> h;
  std::vector<double> c;
  bool operator==(const ControllerState&) const = default;
};

ControllerState reset_controller(std::size_t hidden);

/// One LSTM tick followed by the action head: tanh + affine rescale into the bounds for
/// continuous specs, argmax (lowest index on ties) for discrete ones.
std::pair<Action, ControllerState> step_controller(std::span<const double> features,
                                                   const ControllerState& state,
                                                   const LstmParams& params,
                                                   const ActionSpec& spec);

/// Throws NumericError naming the first non-finite parameter.
void check_finite(const LstmParams& params);

}  // namespace attnes
