#include <doctest.h>

#include <cmath>

#include "cimsim/nodal.hpp"

using namespace cimsim;

namespace {
SmallArrayState small_state(int n, int m) {
  SmallArrayState st;
  st.cfg.rows = n;
  st.cfg.cols = m;
  st.weights = WeightMatrix(n, m);
  st.inputs.assign(static_cast<std::size_t>(n), InputCode{});
  return st;
}
}  // namespace

TEST_CASE("zero parasitics reproduce the ideal per-cell currents") {
  SmallArrayState st = small_state(4, 4);
  for (int i = 0; i < 4; ++i) {
    st.inputs[static_cast<std::size_t>(i)] = InputCode{20 + 10 * i, i % 2 ? -1 : +1};
    for (int j = 0; j < 4; ++j)
      st.weights.at(i, j) =
          (i + j) % 2 ? WeightCode::positive(30 + j) : WeightCode::negative(10 + i);
  }
  const NodalSolution sol = nodal_oracle(st);
  for (int i = 0; i < 4; ++i) {
    const double dv = input_dac_transfer(st.inputs[static_cast<std::size_t>(i)], st.cfg) - 0.4;
    for (int j = 0; j < 4; ++j) {
      const WeightCode& w = st.weights.at(i, j);
      const double want = dv / st.cfg.r_unit * (w.magnitude / 64.0);
      const double got = sol.cell_current[static_cast<std::size_t>(i) * 4 + j];
      CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
    }
  }
  CHECK(sol.max_kcl_residual < 1e-9);
}

TEST_CASE("single cell with driver resistance is a hand-computable divider") {
  SmallArrayState st = small_state(1, 1);
  st.inputs[0] = InputCode{63, -1};  // v_dac = 0.4 + 63/64*0.2
  st.weights.at(0, 0) = WeightCode::positive(63);
  st.r_driver = 50e3;  // exaggerated so the divider is visible
  const NodalSolution sol = nodal_oracle(st);
  // cell conductance g = (63/64)/R_U between the input node and virtual
  // ground; driver R_D in series with the source:
  // I = (v_dac - v_bias) / (R_D + 1/g)
  const double v_dac = input_dac_transfer(st.inputs[0], st.cfg);
  const double g = (63.0 / 64.0) / st.cfg.r_unit;
  const double want = (v_dac - 0.4) / (st.r_driver + 1.0 / g);
  CHECK(sol.cell_current[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("random instances satisfy Kirchhoff everywhere") {
  const CounterRng rng(404);
  for (int trial = 0; trial < 25; ++trial) {
    SmallArrayState st = small_state(4, 4);
    st.r_driver = 100;
    st.r_wire_x = 10;
    st.r_wire_y = 10;
    for (int i = 0; i < 4; ++i) {
      st.inputs[static_cast<std::size_t>(i)] =
          InputCode{static_cast<int>(rng.bits(Stream::stimulus, trial, i, 0) % 64),
                    rng.uniform(Stream::stimulus, trial, i, 1) < 0.5 ? -1 : +1};
      for (int j = 0; j < 4; ++j) {
        const int mag = static_cast<int>(rng.bits(Stream::stimulus, trial, i, 2 + j) % 64);
        const double pick = rng.uniform(Stream::stimulus, trial, i, 6 + j);
        st.weights.at(i, j) = pick < 1.0 / 3 ? WeightCode::positive(mag)
                                             : (pick < 2.0 / 3 ? WeightCode::negative(mag)
                                                               : WeightCode::idle());
      }
    }
    CHECK(nodal_oracle(st).max_kcl_residual < 1e-9);
  }
}

TEST_CASE("oracle rejects oversized arrays and bad shapes") {
  SmallArrayState st = small_state(9, 4);
  CHECK_THROWS_AS(nodal_oracle(st), std::invalid_argument);
  st = small_state(4, 4);
  st.inputs.resize(3);
  CHECK_THROWS_AS(nodal_oracle(st), std::invalid_argument);
  st = small_state(4, 4);
  st.r_wire_y = -1;
  CHECK_THROWS_AS(nodal_oracle(st), std::invalid_argument);
}
