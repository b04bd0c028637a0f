#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cimsim/bisc.hpp"
#include "cimsim/core.hpp"
#include "cimsim/metrics.hpp"
#include "cimsim/mlp.hpp"
#include "cimsim/profile.hpp"
#include "cimsim/techproj.hpp"

namespace cimsim {

using json = nlohmann::ordered_json;

inline void check_format_version(const json& j, int supported, const std::string& what) {
  const int v = j.value("format_version", supported);
  if (v > supported)
    throw std::runtime_error(what + ": unsupported format_version " + std::to_string(v));
}

/// Non-finite doubles as JSON strings ("inf", "-inf"), since JSON has no
/// literal for them.
inline json finite_or_string(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  if (std::isnan(v)) return json("nan");
  return json(v);
}
inline double number_or_sentinel(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

// ---------------------------------------------------------------- Dist

inline json to_json(const Dist& d) {
  json j;
  switch (d.kind) {
    case Dist::Kind::uniform:
      j["kind"] = "uniform";
      j["lo"] = d.lo;
      j["hi"] = d.hi;
      break;
    case Dist::Kind::sym_uniform:
      j["kind"] = "sym_uniform";
      j["mean"] = d.mean;
      j["mag_lo"] = d.mag_lo;
      j["mag_hi"] = d.mag_hi;
      break;
    case Dist::Kind::normal:
    default:
      j["kind"] = "normal";
      j["mean"] = d.mean;
      j["stddev"] = d.stddev;
      if (d.lo > -1e299) j["lo"] = d.lo;
      if (d.hi < 1e299) j["hi"] = d.hi;
      break;
  }
  return j;
}

inline Dist dist_from_json(const json& j) {
  if (j.is_number()) return Dist::constant(j.get<double>());
  const std::string kind = j.value("kind", "normal");
  Dist d;
  if (kind == "uniform") {
    d = Dist::uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
  } else if (kind == "sym_uniform") {
    d = Dist::sym_uniform(j.value("mean", 0.0), j.at("mag_lo").get<double>(),
                          j.at("mag_hi").get<double>());
  } else if (kind == "normal") {
    d = Dist::normal(j.value("mean", 0.0), j.value("stddev", 0.0),
                     j.value("lo", -1e300), j.value("hi", 1e300));
  } else {
    throw std::runtime_error("unknown distribution kind: " + kind);
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------- ArrayConfig

inline json to_json(const ArrayConfig& c) {
  json j;
  j["rows"] = c.rows;
  j["cols"] = c.cols;
  j["r_unit"] = c.r_unit;
  j["input_bits"] = c.input_bits;
  j["weight_bits"] = c.weight_bits;
  j["adc_bits"] = c.adc_bits;
  j["v_in_low"] = c.v_in_low;
  j["v_in_high"] = c.v_in_high;
  j["v_bias"] = c.v_bias;
  j["t_sample"] = c.t_sample;
  j["f_inference"] = c.f_inference;
  j["v_adc_low"] = c.v_adc_low;
  j["v_adc_high"] = c.v_adc_high;
  j["dac_positive_toward_low"] = c.dac_positive_toward_low;
  return j;
}

inline ArrayConfig array_config_from_json(const json& j) {
  ArrayConfig d;
  ArrayConfig c;
  c.rows = j.value("rows", d.rows);
  c.cols = j.value("cols", d.cols);
  c.r_unit = j.value("r_unit", d.r_unit);
  c.input_bits = j.value("input_bits", d.input_bits);
  c.weight_bits = j.value("weight_bits", d.weight_bits);
  c.adc_bits = j.value("adc_bits", d.adc_bits);
  c.v_in_low = j.value("v_in_low", d.v_in_low);
  c.v_in_high = j.value("v_in_high", d.v_in_high);
  c.v_bias = j.value("v_bias", d.v_bias);
  c.t_sample = j.value("t_sample", d.t_sample);
  c.f_inference = j.value("f_inference", d.f_inference);
  c.v_adc_low = j.value("v_adc_low", d.v_adc_low);
  c.v_adc_high = j.value("v_adc_high", d.v_adc_high);
  c.dac_positive_toward_low = j.value("dac_positive_toward_low", d.dac_positive_toward_low);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- ProfileSpec

inline json to_json(const ProfileSpec& s) {
  json j;
  j["alpha_a"] = to_json(s.alpha_a);
  j["beta_a"] = to_json(s.beta_a);
  j["alpha_d"] = to_json(s.alpha_d);
  j["beta_d"] = to_json(s.beta_d);
  j["r_driver"] = to_json(s.r_driver);
  j["r_wire_x"] = to_json(s.r_wire_x);
  j["r_wire_y"] = to_json(s.r_wire_y);
  j["mismatch_sigma"] = to_json(s.mismatch_sigma);
  j["dac_inl_amp"] = to_json(s.dac_inl_amp);
  j["adc_inl_amp"] = to_json(s.adc_inl_amp);
  j["noise_sigma"] = to_json(s.noise_sigma);
  j["drift_rate"] = to_json(s.drift_rate);
  return j;
}

inline ProfileSpec profile_spec_from_json(const json& j) {
  ProfileSpec d = ProfileSpec::defaults();
  ProfileSpec s;
  const auto get = [&](const char* key, const Dist& fallback) {
    return j.contains(key) ? dist_from_json(j.at(key)) : fallback;
  };
  s.alpha_a = get("alpha_a", d.alpha_a);
  s.beta_a = get("beta_a", d.beta_a);
  s.alpha_d = get("alpha_d", d.alpha_d);
  s.beta_d = get("beta_d", d.beta_d);
  s.r_driver = get("r_driver", d.r_driver);
  s.r_wire_x = get("r_wire_x", d.r_wire_x);
  s.r_wire_y = get("r_wire_y", d.r_wire_y);
  s.mismatch_sigma = get("mismatch_sigma", d.mismatch_sigma);
  s.dac_inl_amp = get("dac_inl_amp", d.dac_inl_amp);
  s.adc_inl_amp = get("adc_inl_amp", d.adc_inl_amp);
  s.noise_sigma = get("noise_sigma", d.noise_sigma);
  s.drift_rate = get("drift_rate", d.drift_rate);
  s.validate();
  return s;
}

// ------------------------------------------------------- NonidealityProfile

inline json to_json(const NonidealityProfile& p) {
  json j;
  j["format_version"] = 1;
  j["rows"] = p.rows;
  j["cols"] = p.cols;
  j["seed"] = p.seed;
  json alpha = json::array(), beta = json::array();
  for (int c = 0; c < p.cols; ++c) {
    alpha.push_back({p.alpha_a[static_cast<std::size_t>(c)][0],
                     p.alpha_a[static_cast<std::size_t>(c)][1]});
    beta.push_back({p.beta_a[static_cast<std::size_t>(c)][0],
                    p.beta_a[static_cast<std::size_t>(c)][1]});
  }
  j["alpha_a"] = alpha;
  j["beta_a"] = beta;
  j["alpha_d"] = p.alpha_d;
  j["beta_d"] = p.beta_d;
  j["r_driver"] = p.r_driver;
  j["r_wire_x"] = p.r_wire_x;
  j["r_wire_y"] = p.r_wire_y;
  j["mismatch"] = p.mismatch;
  j["inl_amp"] = p.inl_amp;
  j["inl_freq"] = p.inl_freq;
  j["inl_phase"] = p.inl_phase;
  j["adc_inl_amp"] = p.adc_inl_amp;
  j["adc_inl_coeff"] = p.adc_inl_coeff;
  j["adc_inl_phase"] = p.adc_inl_phase;
  j["adc_inl_a0"] = p.adc_inl_a0;
  j["adc_inl_a1"] = p.adc_inl_a1;
  j["noise_sigma"] = p.noise_sigma;
  j["drift_rate"] = p.drift_rate;
  return j;
}

inline NonidealityProfile profile_from_json(const json& j) {
  check_format_version(j, 1, "profile");
  NonidealityProfile p;
  p.rows = j.at("rows").get<int>();
  p.cols = j.at("cols").get<int>();
  p.seed = j.value("seed", std::uint64_t{0});
  for (const auto& a : j.at("alpha_a"))
    p.alpha_a.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
  for (const auto& b : j.at("beta_a"))
    p.beta_a.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  p.alpha_d = j.value("alpha_d", 1.0);
  p.beta_d = j.value("beta_d", 0.0);
  p.r_driver = j.value("r_driver", 0.0);
  p.r_wire_x = j.value("r_wire_x", 0.0);
  p.r_wire_y = j.value("r_wire_y", 0.0);
  p.mismatch = j.at("mismatch").get<std::vector<double>>();
  p.inl_amp = j.at("inl_amp").get<std::vector<double>>();
  p.inl_freq = j.at("inl_freq").get<std::vector<double>>();
  p.inl_phase = j.at("inl_phase").get<std::vector<double>>();
  p.adc_inl_amp = j.value("adc_inl_amp", 0.0);
  if (j.contains("adc_inl_coeff")) p.adc_inl_coeff = j.at("adc_inl_coeff").get<std::array<double, 3>>();
  if (j.contains("adc_inl_phase")) p.adc_inl_phase = j.at("adc_inl_phase").get<std::array<double, 3>>();
  p.adc_inl_a0 = j.value("adc_inl_a0", 0.0);
  p.adc_inl_a1 = j.value("adc_inl_a1", 0.0);
  p.noise_sigma = j.value("noise_sigma", 0.0);
  p.drift_rate = j.value("drift_rate", 0.0);
  if (p.alpha_a.size() != static_cast<std::size_t>(p.cols) ||
      p.mismatch.size() != static_cast<std::size_t>(p.rows) * p.cols)
    throw std::runtime_error("profile: inconsistent dimensions");
  return p;
}

// -------------------------------------------------------- CalibrationState

inline json to_json(const CalibrationState& s) {
  json j;
  j["format_version"] = 1;
  j["v_adc_low"] = s.v_adc_low;
  j["v_adc_high"] = s.v_adc_high;
  j["adc_alpha_d"] = s.adc_alpha_d;
  j["adc_beta_d"] = s.adc_beta_d;
  json cols = json::array();
  for (std::size_t c = 0; c < s.trims.size(); ++c) {
    json col;
    for (int l = 0; l < 2; ++l) {
      const LineTrim& t = s.trims[c][static_cast<std::size_t>(l)];
      json lt;
      lt["r_sa"] = t.r_sa;
      lt["v_cal"] = t.v_cal;
      lt["pot_code"] = t.pot_code;
      lt["dac_code"] = t.dac_code;
      lt["calibrated"] = t.calibrated;
      lt["failed"] = t.failed;
      lt["residual_gain"] = s.residual[c][static_cast<std::size_t>(l)].gain;
      lt["residual_v_zero"] = s.residual[c][static_cast<std::size_t>(l)].v_zero_offset;
      col[l == 0 ? "positive" : "negative"] = lt;
    }
    cols.push_back(col);
  }
  j["columns"] = cols;
  return j;
}

inline CalibrationState calibration_from_json(const json& j) {
  check_format_version(j, 1, "calibration");
  CalibrationState s;
  s.v_adc_low = j.at("v_adc_low").get<double>();
  s.v_adc_high = j.at("v_adc_high").get<double>();
  s.adc_alpha_d = j.value("adc_alpha_d", 1.0);
  s.adc_beta_d = j.value("adc_beta_d", 0.0);
  for (const auto& col : j.at("columns")) {
    std::array<LineTrim, 2> pair;
    std::array<ResidualResponse, 2> resid;
    for (int l = 0; l < 2; ++l) {
      const json& lt = col.at(l == 0 ? "positive" : "negative");
      LineTrim t;
      t.r_sa = lt.at("r_sa").get<double>();
      t.v_cal = lt.at("v_cal").get<double>();
      t.pot_code = lt.value("pot_code", -1);
      t.dac_code = lt.value("dac_code", -1);
      t.calibrated = lt.value("calibrated", false);
      t.failed = lt.value("failed", false);
      pair[static_cast<std::size_t>(l)] = t;
      resid[static_cast<std::size_t>(l)].gain = lt.value("residual_gain", 1.0);
      resid[static_cast<std::size_t>(l)].v_zero_offset = lt.value("residual_v_zero", 0.0);
    }
    s.trims.push_back(pair);
    s.residual.push_back(resid);
  }
  return s;
}

// ----------------------------------------------------------------- models

inline json to_json(const FloatMlp& m) {
  json j;
  j["format_version"] = 1;
  j["kind"] = "float_mlp";
  j["inputs"] = m.inputs;
  j["hidden"] = m.hidden;
  j["outputs"] = m.outputs;
  j["w1"] = m.w1;
  j["b1"] = m.b1;
  j["w2"] = m.w2;
  j["b2"] = m.b2;
  return j;
}

inline FloatMlp float_mlp_from_json(const json& j) {
  check_format_version(j, 1, "float model");
  if (j.value("kind", "") != "float_mlp")
    throw std::runtime_error("float model: unexpected kind");
  FloatMlp m;
  m.inputs = j.at("inputs").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.outputs = j.at("outputs").get<int>();
  m.w1 = j.at("w1").get<std::vector<double>>();
  m.b1 = j.at("b1").get<std::vector<double>>();
  m.w2 = j.at("w2").get<std::vector<double>>();
  m.b2 = j.at("b2").get<std::vector<double>>();
  if (m.w1.size() != static_cast<std::size_t>(m.hidden) * m.inputs ||
      m.w2.size() != static_cast<std::size_t>(m.outputs) * m.hidden)
    throw std::runtime_error("float model: inconsistent dimensions");
  return m;
}

inline json to_json(const QuantizedMlp& q) {
  json j;
  j["format_version"] = 1;
  j["kind"] = "quantized_mlp";
  json layers = json::array();
  for (const QuantizedLayer& l : q.layers) {
    json lj;
    lj["in"] = l.in;
    lj["out"] = l.out;
    lj["weight_scale"] = l.weight_scale;
    lj["act_scale"] = l.act_scale;
    lj["adc_low"] = l.adc_low;
    lj["adc_high"] = l.adc_high;
    lj["bias"] = l.bias;
    std::vector<int> codes(l.codes.size());
    for (std::size_t k = 0; k < l.codes.size(); ++k) codes[k] = l.codes[k].signed_value();
    lj["codes"] = codes;
    layers.push_back(lj);
  }
  j["layers"] = layers;
  return j;
}

inline QuantizedMlp quantized_mlp_from_json(const json& j) {
  check_format_version(j, 1, "quantized model");
  if (j.value("kind", "") != "quantized_mlp")
    throw std::runtime_error("quantized model: unexpected kind");
  QuantizedMlp q;
  for (const auto& lj : j.at("layers")) {
    QuantizedLayer l;
    l.in = lj.at("in").get<int>();
    l.out = lj.at("out").get<int>();
    l.weight_scale = lj.at("weight_scale").get<double>();
    l.act_scale = lj.at("act_scale").get<double>();
    l.adc_low = lj.value("adc_low", 0.0);
    l.adc_high = lj.value("adc_high", 0.0);
    l.bias = lj.at("bias").get<std::vector<double>>();
    for (int v : lj.at("codes").get<std::vector<int>>())
      l.codes.push_back(WeightCode::from_signed(v));
    if (l.codes.size() != static_cast<std::size_t>(l.in) * l.out)
      throw std::runtime_error("quantized model: inconsistent dimensions");
    q.layers.push_back(std::move(l));
  }
  return q;
}

// ---------------------------------------------------------------- techproj

inline json to_json(const TechSpec& t) {
  json j;
  j["name"] = t.name;
  j["r_unit"] = t.r_unit;
  j["area_1bit"] = t.area_1bit;
  j["area_6bit"] = t.area_6bit;
  j["v_op"] = t.v_op;
  j["baseline"] = t.baseline;
  j["listed_unit_current_ua"] = t.listed_unit_current_ua;
  j["listed_area_factor"] = t.listed_area_factor;
  j["listed_power_factor"] = t.listed_power_factor;
  return j;
}

inline TechSpec tech_spec_from_json(const json& j) {
  TechSpec t;
  t.name = j.at("name").get<std::string>();
  t.r_unit = j.at("r_unit").get<double>();
  t.area_1bit = j.value("area_1bit", 0.0);
  t.area_6bit = j.value("area_6bit", t.area_1bit);
  t.v_op = j.value("v_op", 1.0);
  t.baseline = j.value("baseline", false);
  t.listed_unit_current_ua = j.value("listed_unit_current_ua", 0.0);
  t.listed_area_factor = j.value("listed_area_factor", 1.0);
  t.listed_power_factor = j.value("listed_power_factor", 1.0);
  t.validate();
  return t;
}

/// Technology table: the built-in rows, optionally extended or replaced by a
/// config file ({"technologies": [...]}).
inline std::vector<TechSpec> tech_table_from_json(const json& j) {
  std::vector<TechSpec> out;
  for (const json& tj : j.at("technologies")) out.push_back(tech_spec_from_json(tj));
  if (out.empty()) throw std::runtime_error("technology table is empty");
  return out;
}

// ------------------------------------------------------------------ files

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  json j;
  in >> j;
  return j;
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace cimsim
