#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cimsim/array.hpp"
#include "cimsim/core.hpp"

namespace cimsim {

/// Inputs for the exact resistive-network solve: a small array with explicit
/// parasitics and optional per-cell conductance mismatch. Validation oracle
/// for the first-order attenuation model; not used on the inference path.
struct SmallArrayState {
  ArrayConfig cfg;
  std::vector<InputCode> inputs;  // one per row
  WeightMatrix weights;           // rows x cols
  double r_driver = 0.0;
  double r_wire_x = 0.0;
  double r_wire_y = 0.0;
  std::vector<double> mismatch;   // rows*cols, optional (empty = none)

  double mismatch_at(int i, int j) const {
    if (mismatch.empty()) return 0.0;
    return mismatch[static_cast<std::size_t>(i) * cfg.cols + j];
  }
};

struct NodalSolution {
  std::vector<double> cell_current;   // rows*cols, signed toward the line
  std::vector<LineCurrents> lines;    // per column
  double max_kcl_residual = 0.0;      // amps, over all solved nodes
};

namespace detail {

/// Union-find over node ids; zero-ohm branches merge nodes outright so the
/// conductance matrix never sees infinite entries.
class NodeMerge {
 public:
  explicit NodeMerge(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  void merge(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

/// Dense LU with partial pivoting; solves in place.
inline std::vector<double> lu_solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  std::vector<std::size_t> piv(n);
  std::iota(piv.begin(), piv.end(), std::size_t{0});
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(a[piv[k] * n + k]);
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(a[piv[r] * n + k]);
      if (v > best) {
        best = v;
        p = r;
      }
    }
    if (best < 1e-300)
      throw std::runtime_error("nodal_oracle: singular conductance matrix");
    std::swap(piv[k], piv[p]);
    const double pivot = a[piv[k] * n + k];
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = a[piv[r] * n + k] / pivot;
      if (f == 0.0) continue;
      a[piv[r] * n + k] = 0.0;
      for (std::size_t c = k + 1; c < n; ++c) a[piv[r] * n + c] -= f * a[piv[k] * n + c];
      b[piv[r]] -= f * b[piv[k]];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[piv[k]];
    for (std::size_t c = k + 1; c < n; ++c) s -= a[piv[k] * n + c] * x[c];
    x[k] = s / a[piv[k] * n + k];
  }
  return x;
}

}  // namespace detail

/// Assembles the full conductance network (drivers, row wires, cells, column
/// summation wires, regulated line ends) and solves it directly. Node layout
/// per column line: the amplifier end is a fixed node at V_BIAS adjacent to
/// row 0, with r_y between consecutive row taps, matching the first-order
/// model's row indexing.
inline NodalSolution nodal_oracle(const SmallArrayState& st) {
  const ArrayConfig& cfg = st.cfg;
  cfg.validate();
  if (cfg.rows > 8 || cfg.cols > 8)
    throw std::invalid_argument("nodal_oracle: array must be at most 8x8");
  if (st.inputs.size() != static_cast<std::size_t>(cfg.rows) ||
      st.weights.rows != cfg.rows || st.weights.cols != cfg.cols)
    throw std::invalid_argument("nodal_oracle: shape mismatch");
  if (st.r_driver < 0 || st.r_wire_x < 0 || st.r_wire_y < 0)
    throw std::invalid_argument("nodal_oracle: negative resistance");

  const int n = cfg.rows, m = cfg.cols;
  // Node ids: X(i,j), Tp(i,j), Tn(i,j), then per-row source, per-column-line
  // grounds. Sources and grounds are fixed-potential.
  const std::size_t n_x = static_cast<std::size_t>(n) * m;
  const auto x_id = [&](int i, int j) { return static_cast<std::size_t>(i) * m + j; };
  const auto tp_id = [&](int i, int j) { return n_x + static_cast<std::size_t>(i) * m + j; };
  const auto tn_id = [&](int i, int j) { return 2 * n_x + static_cast<std::size_t>(i) * m + j; };
  const std::size_t src0 = 3 * n_x;
  const auto src_id = [&](int i) { return src0 + static_cast<std::size_t>(i); };
  const std::size_t gnd0 = src0 + static_cast<std::size_t>(n);
  const auto gnd_id = [&](int j, int line) {
    return gnd0 + static_cast<std::size_t>(2 * j + line);
  };
  const std::size_t total = gnd0 + static_cast<std::size_t>(2 * m);

  std::vector<double> fixed(total, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> v_dac(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    v_dac[static_cast<std::size_t>(i)] = input_dac_transfer(st.inputs[static_cast<std::size_t>(i)], cfg);
    fixed[src_id(i)] = v_dac[static_cast<std::size_t>(i)];
  }
  for (int j = 0; j < m; ++j)
    for (int line = 0; line < 2; ++line) fixed[gnd_id(j, line)] = cfg.v_bias;

  struct Branch {
    std::size_t a, b;
    double conductance;
  };
  std::vector<Branch> branches;
  detail::NodeMerge merge(total);
  const auto add_resistor = [&](std::size_t a, std::size_t b, double r) {
    if (r == 0.0)
      merge.merge(a, b);
    else
      branches.push_back({a, b, 1.0 / r});
  };

  for (int i = 0; i < n; ++i) {
    add_resistor(src_id(i), x_id(i, 0), st.r_driver);
    for (int j = 0; j + 1 < m; ++j) add_resistor(x_id(i, j), x_id(i, j + 1), st.r_wire_x);
  }
  for (int j = 0; j < m; ++j) {
    add_resistor(gnd_id(j, 0), tp_id(0, j), 0.0);
    add_resistor(gnd_id(j, 1), tn_id(0, j), 0.0);
    for (int i = 0; i + 1 < n; ++i) {
      add_resistor(tp_id(i, j), tp_id(i + 1, j), st.r_wire_y);
      add_resistor(tn_id(i, j), tn_id(i + 1, j), st.r_wire_y);
    }
  }
  struct CellBranch {
    int i, j;
    std::size_t x, t;
    double g;
    bool to_positive;
  };
  std::vector<CellBranch> cells;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const WeightCode& w = st.weights.at(i, j);
      w.validate(cfg);
      if (w.idle_state() || w.magnitude == 0) continue;
      const double g = (static_cast<double>(w.magnitude) / (1 << cfg.weight_bits)) *
                       (1.0 + st.mismatch_at(i, j)) / cfg.r_unit;
      const std::size_t t = w.to_positive ? tp_id(i, j) : tn_id(i, j);
      cells.push_back({i, j, x_id(i, j), t, g, w.to_positive});
      branches.push_back({x_id(i, j), t, g});
    }
  }

  // Resolve representatives; propagate fixed potentials through merges.
  std::vector<std::size_t> rep(total);
  for (std::size_t k = 0; k < total; ++k) rep[k] = merge.find(k);
  std::vector<double> rep_fixed(total, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < total; ++k) {
    if (std::isnan(fixed[k])) continue;
    const std::size_t r = rep[k];
    if (!std::isnan(rep_fixed[r]) && std::abs(rep_fixed[r] - fixed[k]) > 1e-15)
      throw std::runtime_error("nodal_oracle: merged sources with different potentials");
    rep_fixed[r] = fixed[k];
  }

  std::vector<std::size_t> unknown_index(total, SIZE_MAX);
  std::vector<std::size_t> unknown_nodes;
  for (std::size_t k = 0; k < total; ++k) {
    if (rep[k] != k || !std::isnan(rep_fixed[k])) continue;
    unknown_index[k] = unknown_nodes.size();
    unknown_nodes.push_back(k);
  }
  const std::size_t nu = unknown_nodes.size();

  std::vector<double> g_mat(nu * nu, 0.0), rhs(nu, 0.0);
  const auto stamp = [&](std::size_t a, std::size_t b, double g) {
    const std::size_t ra = rep[a], rb = rep[b];
    if (ra == rb) return;
    const bool a_unknown = unknown_index[ra] != SIZE_MAX;
    const bool b_unknown = unknown_index[rb] != SIZE_MAX;
    if (a_unknown) {
      const std::size_t ia = unknown_index[ra];
      g_mat[ia * nu + ia] += g;
      if (b_unknown)
        g_mat[ia * nu + unknown_index[rb]] -= g;
      else
        rhs[ia] += g * rep_fixed[rb];
    }
    if (b_unknown) {
      const std::size_t ib = unknown_index[rb];
      g_mat[ib * nu + ib] += g;
      if (a_unknown)
        g_mat[ib * nu + unknown_index[ra]] -= g;
      else
        rhs[ib] += g * rep_fixed[ra];
    }
  };
  for (const Branch& br : branches) stamp(br.a, br.b, br.conductance);

  std::vector<double> solution;
  if (nu > 0) solution = detail::lu_solve(g_mat, rhs);

  const auto voltage = [&](std::size_t k) {
    const std::size_t r = rep[k];
    if (!std::isnan(rep_fixed[r])) return rep_fixed[r];
    return solution[unknown_index[r]];
  };

  NodalSolution out;
  out.cell_current.assign(n_x, 0.0);
  out.lines.assign(static_cast<std::size_t>(m), LineCurrents{});
  for (const CellBranch& cb : cells) {
    const double i_cell = (voltage(cb.x) - voltage(cb.t)) * cb.g;
    out.cell_current[static_cast<std::size_t>(cb.i) * m + cb.j] = i_cell;
    if (cb.to_positive)
      out.lines[static_cast<std::size_t>(cb.j)].positive += i_cell;
    else
      out.lines[static_cast<std::size_t>(cb.j)].negative += i_cell;
  }

  if (nu > 0) {
    // KCL residual in amps at every solved node.
    std::vector<double> resid(nu, 0.0);
    for (std::size_t r = 0; r < nu; ++r) {
      double s = -rhs[r];
      for (std::size_t c = 0; c < nu; ++c) s += g_mat[r * nu + c] * solution[c];
      resid[r] = std::abs(s);
    }
    out.max_kcl_residual = *std::max_element(resid.begin(), resid.end());
  }
  return out;
}

}  // namespace cimsim
