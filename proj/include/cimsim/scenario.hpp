#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cimsim/array.hpp"
#include "cimsim/bisc.hpp"
#include "cimsim/metrics.hpp"
#include "cimsim/mlp.hpp"
#include "cimsim/mnist.hpp"
#include "cimsim/nodal.hpp"
#include "cimsim/serialize.hpp"

namespace cimsim {

struct SweepSettings {
  int points = 16;   // test points per column/line for the MAC sweeps
  int repeats = 4;   // readings averaged per point
};

struct SnrSettings {
  SnrStimulus stimulus = SnrStimulus::full_scale;
  int instances = 1024;
};

struct DnnSettings {
  bool enabled = false;
  std::string train_images, train_labels, test_images, test_labels;
  std::string float_model;
  int eval_count = 2000;
  int calib_count = 512;
};

/// Everything a run needs, loadable from one JSON file. The seed is explicit
/// and mandatory; nothing in the pipeline touches system entropy.
struct Scenario {
  ArrayConfig array;
  ProfileSpec profile_spec = ProfileSpec::defaults();
  BiscParams bisc;
  SweepSettings sweep;
  SnrSettings snr;
  DnnSettings dnn;
  std::uint64_t seed = 0;
  bool seed_set = false;

  Scenario() { bisc.trims = TrimModel::for_config(array); }

  void validate() const {
    array.validate();
    profile_spec.validate();
    if (!seed_set) throw std::invalid_argument("scenario: seed is required");
    if (sweep.points < 2 || sweep.repeats < 1)
      throw std::invalid_argument("scenario: invalid sweep settings");
    if (snr.instances < 2) throw std::invalid_argument("scenario: invalid snr settings");
    if (dnn.enabled) {
      for (const std::string* p : {&dnn.train_images, &dnn.train_labels,
                                   &dnn.test_images, &dnn.test_labels, &dnn.float_model})
        if (p->empty() || !std::filesystem::exists(*p))
          throw std::invalid_argument("scenario: dnn path missing or unresolvable: " + *p);
    }
  }

  /// Derived sub-seeds, one per purpose, so consumers never collide.
  std::uint64_t derived_seed(std::uint64_t tag) const { return mix64(seed ^ mix64(tag)); }
};

inline json to_json(const Scenario& s) {
  json j;
  j["schema_version"] = 1;
  j["seed"] = s.seed;
  j["array"] = to_json(s.array);
  j["profile_spec"] = to_json(s.profile_spec);
  json b;
  b["test_points"] = s.bisc.test_points;
  b["repeats"] = s.bisc.repeats;
  b["guard_margin"] = s.bisc.guard_margin;
  b["passes"] = s.bisc.passes;
  b["keep_guard_refs"] = s.bisc.keep_guard_refs;
  b["continuous_trims"] = s.bisc.trims.continuous;
  b["pot_steps"] = s.bisc.trims.pot_steps;
  b["cal_dac_bits"] = s.bisc.trims.cal_dac_bits;
  j["bisc"] = b;
  j["sweep"] = {{"points", s.sweep.points}, {"repeats", s.sweep.repeats}};
  j["snr"] = {{"stimulus", stimulus_name(s.snr.stimulus)}, {"instances", s.snr.instances}};
  json d;
  d["enabled"] = s.dnn.enabled;
  d["train_images"] = s.dnn.train_images;
  d["train_labels"] = s.dnn.train_labels;
  d["test_images"] = s.dnn.test_images;
  d["test_labels"] = s.dnn.test_labels;
  d["float_model"] = s.dnn.float_model;
  d["eval_count"] = s.dnn.eval_count;
  d["calib_count"] = s.dnn.calib_count;
  j["dnn"] = d;
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  const int version = j.value("schema_version", 1);
  if (version > 1)
    throw std::runtime_error("scenario: unsupported schema_version " +
                             std::to_string(version));
  Scenario s;
  if (j.contains("array")) s.array = array_config_from_json(j.at("array"));
  if (j.contains("profile_spec")) s.profile_spec = profile_spec_from_json(j.at("profile_spec"));
  s.bisc.trims = TrimModel::for_config(s.array);
  if (j.contains("bisc")) {
    const json& b = j.at("bisc");
    s.bisc.test_points = b.value("test_points", s.bisc.test_points);
    s.bisc.repeats = b.value("repeats", s.bisc.repeats);
    s.bisc.guard_margin = b.value("guard_margin", s.bisc.guard_margin);
    s.bisc.passes = b.value("passes", s.bisc.passes);
    s.bisc.keep_guard_refs = b.value("keep_guard_refs", s.bisc.keep_guard_refs);
    s.bisc.trims.continuous = b.value("continuous_trims", false);
    s.bisc.trims.pot_steps = b.value("pot_steps", s.bisc.trims.pot_steps);
    s.bisc.trims.cal_dac_bits = b.value("cal_dac_bits", s.bisc.trims.cal_dac_bits);
  }
  if (j.contains("sweep")) {
    s.sweep.points = j.at("sweep").value("points", s.sweep.points);
    s.sweep.repeats = j.at("sweep").value("repeats", s.sweep.repeats);
  }
  if (j.contains("snr")) {
    const std::string stim = j.at("snr").value("stimulus", "full_scale");
    if (stim == "full_scale")
      s.snr.stimulus = SnrStimulus::full_scale;
    else if (stim == "uniform")
      s.snr.stimulus = SnrStimulus::uniform;
    else
      throw std::runtime_error("scenario: unknown snr stimulus: " + stim);
    s.snr.instances = j.at("snr").value("instances", s.snr.instances);
  }
  if (j.contains("dnn")) {
    const json& d = j.at("dnn");
    s.dnn.enabled = d.value("enabled", false);
    s.dnn.train_images = d.value("train_images", "");
    s.dnn.train_labels = d.value("train_labels", "");
    s.dnn.test_images = d.value("test_images", "");
    s.dnn.test_labels = d.value("test_labels", "");
    s.dnn.float_model = d.value("float_model", "");
    s.dnn.eval_count = d.value("eval_count", 2000);
    s.dnn.calib_count = d.value("calib_count", 512);
  }
  if (j.contains("seed")) {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.seed_set = true;
  }
  return s;
}

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string scenario_hash_hex(const Scenario& s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(s).dump())));
  return buf;
}

// ------------------------------------------------------------- CSV helpers

inline std::string fmt_g(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// CSV with a provenance comment line (scenario hash + seed) above the header
/// row. Numeric cells go through one fixed formatter so reruns are
/// byte-identical.
class CsvFile {
 public:
  CsvFile(const std::string& path, const std::string& scenario_hash,
          std::uint64_t seed)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot write CSV: " + path);
    out_ << "# scenario=" << scenario_hash << " seed=" << seed << "\n";
  }
  void header(const std::vector<std::string>& names) { line(names); }
  void row(const std::vector<std::string>& cells) { line(cells); }

 private:
  void line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }
  std::ofstream out_;
};

// ------------------------------------------------------------- run report

struct StageStatus {
  std::string name;
  std::string status;  // "ok", "failed", "skipped"
  std::string message;
};

struct ReportBundle {
  std::vector<StageStatus> stages;
  bool all_ok = true;
  std::string report_path;
};

struct SweepData {
  // [column][line] -> paired series over sweep points
  std::vector<std::array<std::vector<double>, 2>> q_nom;
  std::vector<std::array<std::vector<double>, 2>> q_act;
};

/// Stepped per-column, per-line MAC sweep (the measurement behind the
/// uncalibrated/calibrated output plots): averaged readings per test point.
inline SweepData mac_sweep(Simulator& sim, const SweepSettings& settings) {
  const ArrayConfig& cfg = sim.cfg;
  SweepData data;
  data.q_nom.resize(static_cast<std::size_t>(cfg.cols));
  data.q_act.resize(static_cast<std::size_t>(cfg.cols));
  std::vector<InputCode> row_inputs(static_cast<std::size_t>(cfg.rows));
  for (int col = 0; col < cfg.cols; ++col) {
    for (Line line : {Line::positive, Line::negative}) {
      const TestVectors tv = build_test_vectors(settings.points, line, cfg,
                                                sim.cal.v_adc_low, sim.cal.v_adc_high);
      auto& qn = data.q_nom[static_cast<std::size_t>(col)][static_cast<std::size_t>(line)];
      auto& qa = data.q_act[static_cast<std::size_t>(col)][static_cast<std::size_t>(line)];
      for (std::size_t k = 0; k < tv.inputs.size(); ++k) {
        row_inputs.assign(row_inputs.size(), tv.inputs[k]);
        double acc = 0.0;
        for (int r = 0; r < settings.repeats; ++r)
          acc += sim.step_column(col, row_inputs, tv.weights).adc_code;
        qn.push_back(tv.q_nom[k]);
        qa.push_back(acc / settings.repeats);
      }
    }
  }
  return data;
}

inline void write_sweep_csv(const SweepData& d, const std::string& path,
                            const std::string& hash, std::uint64_t seed) {
  CsvFile csv(path, hash, seed);
  csv.header({"column", "line", "point", "q_nom", "q_act"});
  for (std::size_t col = 0; col < d.q_nom.size(); ++col)
    for (int line = 0; line < 2; ++line)
      for (std::size_t k = 0; k < d.q_nom[col][static_cast<std::size_t>(line)].size(); ++k)
        csv.row({std::to_string(col), line_name(static_cast<Line>(line)),
                 std::to_string(k),
                 fmt_g(d.q_nom[col][static_cast<std::size_t>(line)][k]),
                 fmt_g(d.q_act[col][static_cast<std::size_t>(line)][k])});
}

struct ColumnErrors {
  std::vector<std::array<FitResult, 2>> fits;  // [column][line]
};

inline ColumnErrors sweep_errors(const SweepData& d) {
  ColumnErrors e;
  e.fits.resize(d.q_nom.size());
  for (std::size_t col = 0; col < d.q_nom.size(); ++col)
    for (int line = 0; line < 2; ++line)
      e.fits[col][static_cast<std::size_t>(line)] = extract_column_errors(
          d.q_nom[col][static_cast<std::size_t>(line)],
          d.q_act[col][static_cast<std::size_t>(line)]);
  return e;
}

inline void write_column_errors_csv(const ColumnErrors& e, const std::string& path,
                                    const std::string& hash, std::uint64_t seed) {
  CsvFile csv(path, hash, seed);
  csv.header({"column", "line", "g", "eps"});
  for (std::size_t col = 0; col < e.fits.size(); ++col)
    for (int line = 0; line < 2; ++line)
      csv.row({std::to_string(col), line_name(static_cast<Line>(line)),
               fmt_g(e.fits[col][static_cast<std::size_t>(line)].g_tot),
               fmt_g(e.fits[col][static_cast<std::size_t>(line)].eps_tot)});
}

inline void write_characterization_csv(const std::vector<CharacterizationResult>& results,
                                       const std::string& path, const std::string& hash,
                                       std::uint64_t seed,
                                       const CalibrationState& state) {
  CsvFile csv(path, hash, seed);
  csv.header({"column", "line", "pass", "g_tot", "eps_tot", "alpha_a", "beta_a",
              "residual_rms", "points_used", "clipped_readings", "failed",
              "r_sa", "v_cal", "pot_code", "dac_code"});
  for (const CharacterizationResult& r : results) {
    const LineTrim& t = state.at(r.column, r.line);
    csv.row({std::to_string(r.column), line_name(r.line), std::to_string(r.pass),
             fmt_g(r.g_tot), fmt_g(r.eps_tot), fmt_g(r.alpha_a), fmt_g(r.beta_a),
             fmt_g(r.residual_rms), std::to_string(r.points_used),
             std::to_string(r.clipped_readings), r.failed ? "1" : "0",
             fmt_g(t.r_sa), fmt_g(t.v_cal), std::to_string(t.pot_code),
             std::to_string(t.dac_code)});
  }
}

/// Rounded nominal codes: what an error-free chain would emit. The SNR
/// comparison uses these so an all-ideal run reports the infinity sentinel
/// rather than its own quantization residue.
inline std::vector<double> rounded(const std::vector<double>& q) {
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = std::round(q[i]);
  return out;
}

struct SnrComparison {
  std::vector<SnrEntry> pre, post;
};

inline void write_snr_csv(const SnrComparison& c, const ColumnErrors& pre_errors,
                          const std::string& path, const std::string& hash,
                          std::uint64_t seed) {
  CsvFile csv(path, hash, seed);
  csv.header({"col", "snr_db_pre", "snr_db_post", "enob_pre", "enob_post", "g",
              "eps", "mean_err", "snr_mse_db_pre", "snr_mse_db_post"});
  for (std::size_t col = 0; col < c.pre.size(); ++col) {
    // g/eps report the uncalibrated combined-line state (mean over lines for
    // the gain, sum of line offsets lands in the single eps readout).
    const FitResult& fp = pre_errors.fits[col][0];
    const FitResult& fn = pre_errors.fits[col][1];
    csv.row({std::to_string(col), fmt_g(c.pre[col].snr_db), fmt_g(c.post[col].snr_db),
             fmt_g(c.pre[col].enob), fmt_g(c.post[col].enob),
             fmt_g(0.5 * (fp.g_tot + fn.g_tot)), fmt_g(0.5 * (fp.eps_tot + fn.eps_tot)),
             fmt_g(c.post[col].err_mean), fmt_g(c.pre[col].snr_mse_db),
             fmt_g(c.post[col].snr_mse_db)});
  }
}

// ------------------------------------------------------------ run_scenario

struct ScenarioOutcome {
  ReportBundle bundle;
  int exit_code = 0;  // 0 ok, 1 stage failure
};

/// Full measurement flow: sample the profile, sweep the uncalibrated array,
/// calibrate, sweep again, compare SNR, optionally run the DNN demo, and
/// write every artifact (each embeds the scenario hash and seed). Timestamps
/// live only in the run_meta.txt sidecar so payloads are rerun-stable.
inline ScenarioOutcome run_scenario(const Scenario& scenario,
                                    const std::string& out_dir, int threads = 0) {
  scenario.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string hash = scenario_hash_hex(scenario);
  const std::uint64_t seed = scenario.seed;
  const auto path = [&](const std::string& name) {
    return (fs::path(out_dir) / name).string();
  };

  ScenarioOutcome outcome;
  json report;
  report["schema_version"] = 1;
  report["scenario_hash"] = hash;
  report["seed"] = seed;
  report["scenario"] = to_json(scenario);
  json stages = json::array();

  Simulator sim(scenario.array, NonidealityProfile::ideal(scenario.array));
  SweepData pre_sweep, post_sweep;
  ColumnErrors pre_errors;
  SnrSweep snr_pre, snr_post;
  std::vector<CharacterizationResult> char_results;
  bool aborted = false;

  const auto run_stage = [&](const std::string& name, auto&& body) {
    StageStatus st{name, "ok", ""};
    if (aborted) {
      st.status = "skipped";
      st.message = "earlier stage failed";
    } else {
      try {
        body();
      } catch (const std::exception& e) {
        st.status = "failed";
        st.message = e.what();
        aborted = true;
        outcome.exit_code = 1;
        outcome.bundle.all_ok = false;
      }
    }
    outcome.bundle.stages.push_back(st);
    stages.push_back({{"name", st.name}, {"status", st.status}, {"message", st.message}});
  };

  const auto with_provenance = [&](json j) {
    j["scenario_hash"] = hash;
    j["scenario_seed"] = seed;
    return j;
  };

  run_stage("profile", [&] {
    const NonidealityProfile profile =
        sample_profile(scenario.profile_spec, scenario.array, scenario.derived_seed(1));
    sim = Simulator(scenario.array, profile);
    write_json_file(with_provenance(to_json(profile)), path("profile.json"));
  });

  run_stage("uncalibrated-sweep", [&] {
    sim.cycle = 1u << 20;
    pre_sweep = mac_sweep(sim, scenario.sweep);
    write_sweep_csv(pre_sweep, path("mac_sweep_pre.csv"), hash, seed);
    pre_errors = sweep_errors(pre_sweep);
    write_column_errors_csv(pre_errors, path("column_errors_pre.csv"), hash, seed);
    snr_pre = snr_sweep(sim, scenario.snr.stimulus, scenario.snr.instances,
                        scenario.derived_seed(2), 2u << 20);
  });

  run_stage("bisc", [&] {
    sim.cycle = 3u << 20;
    BiscParams params = scenario.bisc;
    const BiscOutcome bisc = run_bisc(sim, params);
    char_results = bisc.results;
    write_characterization_csv(char_results, path("characterization.csv"), hash,
                               seed, bisc.state);
    write_json_file(with_provenance(to_json(bisc.state)), path("calibration.json"));
  });

  run_stage("calibrated-sweep", [&] {
    sim.cycle = 4u << 20;
    post_sweep = mac_sweep(sim, scenario.sweep);
    write_sweep_csv(post_sweep, path("mac_sweep_post.csv"), hash, seed);
    write_column_errors_csv(sweep_errors(post_sweep), path("column_errors_post.csv"),
                            hash, seed);
    snr_post = snr_sweep(sim, scenario.snr.stimulus, scenario.snr.instances,
                         scenario.derived_seed(2), 5u << 20);
  });

  run_stage("snr", [&] {
    SnrComparison cmp;
    for (int col = 0; col < scenario.array.cols; ++col) {
      const std::size_t c = static_cast<std::size_t>(col);
      SnrEntry pre = compute_snr(rounded(snr_pre.q_nom_col[c]), snr_pre.q_act[c]);
      SnrEntry post = compute_snr(rounded(snr_post.q_nom_col[c]), snr_post.q_act[c]);
      pre.column = col;
      post.column = col;
      cmp.pre.push_back(pre);
      cmp.post.push_back(post);
    }
    write_snr_csv(cmp, pre_errors, path("snr.csv"), hash, seed);
    double mean_boost = 0.0;
    int finite = 0;
    json snr_json = json::array();
    for (int col = 0; col < scenario.array.cols; ++col) {
      const std::size_t c = static_cast<std::size_t>(col);
      snr_json.push_back({{"col", col},
                          {"snr_db_pre", finite_or_string(cmp.pre[c].snr_db)},
                          {"snr_db_post", finite_or_string(cmp.post[c].snr_db)},
                          {"enob_pre", finite_or_string(cmp.pre[c].enob)},
                          {"enob_post", finite_or_string(cmp.post[c].enob)}});
      if (std::isfinite(cmp.pre[c].snr_db) && std::isfinite(cmp.post[c].snr_db)) {
        mean_boost += cmp.post[c].snr_db - cmp.pre[c].snr_db;
        ++finite;
      }
    }
    report["snr"] = snr_json;
    report["snr_mean_boost_db"] =
        finite > 0 ? json(mean_boost / finite) : json("inf");
  });

  if (scenario.dnn.enabled) {
    run_stage("dnn", [&] {
      const Dataset train = load_mnist(scenario.dnn.train_images, scenario.dnn.train_labels);
      const Dataset test = load_mnist(scenario.dnn.test_images, scenario.dnn.test_labels);
      const FloatMlp fm = float_mlp_from_json(load_json_file(scenario.dnn.float_model));
      const QuantizedMlp qm = quantize_mlp(fm, scenario.array, train,
                                           scenario.dnn.calib_count,
                                           scenario.derived_seed(3));
      const TileSchedule schedule = build_schedule(qm, scenario.array);
      const std::vector<int> subset = subset_indices(
          test.count, scenario.dnn.eval_count, scenario.derived_seed(4));
      const int nthreads = threads > 0
                               ? threads
                               : static_cast<int>(std::thread::hardware_concurrency());
      Simulator ideal_sim(scenario.array, NonidealityProfile::ideal(scenario.array));
      const EvalOutcome ideal = evaluate(test, subset, qm, schedule, ideal_sim,
                                         InferMode::quantized, nthreads, 1u << 24);
      Simulator uncal_sim(scenario.array, sim.profile);
      const EvalOutcome uncal = evaluate(test, subset, qm, schedule, uncal_sim,
                                         InferMode::quantized, nthreads, 2u << 24);
      const EvalOutcome cal = evaluate(test, subset, qm, schedule, sim,
                                       InferMode::quantized, nthreads, 3u << 24);
      CsvFile csv(path("dnn.csv"), hash, seed);
      csv.header({"condition", "correct", "total", "accuracy"});
      csv.row({"ideal", std::to_string(ideal.correct), std::to_string(ideal.total),
               fmt_g(ideal.accuracy)});
      csv.row({"uncalibrated", std::to_string(uncal.correct),
               std::to_string(uncal.total), fmt_g(uncal.accuracy)});
      csv.row({"calibrated", std::to_string(cal.correct), std::to_string(cal.total),
               fmt_g(cal.accuracy)});
      report["dnn"] = {{"ideal", ideal.accuracy},
                       {"uncalibrated", uncal.accuracy},
                       {"calibrated", cal.accuracy},
                       {"eval_count", static_cast<int>(subset.size())}};
    });
  }

  report["stages"] = stages;
  report["ok"] = outcome.bundle.all_ok;
  write_json_file(report, path("report.json"));
  outcome.bundle.report_path = path("report.json");

  {
    // Sidecar only; keeps wall-clock provenance out of the deterministic payloads.
    std::ofstream meta(path("run_meta.txt"));
    const auto now = std::chrono::system_clock::now();
    meta << "scenario=" << hash << "\nseed=" << seed << "\nunix_time="
         << std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()
         << "\n";
  }
  return outcome;
}

// ---------------------------------------------------------------- selftest

/// Quick oracle suite: cross-checks the closed forms against independent
/// computations and verifies determinism. Returns true when everything holds.
inline bool selftest(std::string& log) {
  log.clear();
  bool ok = true;
  const auto check = [&](bool cond, const std::string& name) {
    log += (cond ? "PASS " : "FAIL ") + name + "\n";
    ok = ok && cond;
  };
  ArrayConfig cfg;
  const CounterRng rng(99);

  // mac_ideal equals the all-ideal simulated chain before rounding.
  {
    Simulator sim(cfg, NonidealityProfile::ideal(cfg));
    double worst = 0.0;
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows));
    std::vector<WeightCode> w(static_cast<std::size_t>(cfg.rows));
    for (int t = 0; t < 200; ++t) {
      for (int i = 0; i < cfg.rows; ++i) {
        in[static_cast<std::size_t>(i)] = InputCode{
            static_cast<int>(rng.bits(Stream::scenario, t, i, 0) % 64),
            rng.uniform(Stream::scenario, t, i, 1) < 0.5 ? -1 : 1};
        const int mag = static_cast<int>(rng.bits(Stream::scenario, t, i, 2) % 64);
        const double pick = rng.uniform(Stream::scenario, t, i, 3);
        w[static_cast<std::size_t>(i)] =
            pick < 1.0 / 3 ? WeightCode::positive(mag)
                           : (pick < 2.0 / 3 ? WeightCode::negative(mag)
                                             : WeightCode::idle());
      }
      const ColumnSample s = sim.eval_column_at(0, in, w, t);
      const double q = mac_ideal(in, w, cfg);
      worst = std::max(worst, std::abs(s.code_real - q) / std::max(1.0, std::abs(q)));
    }
    check(worst < 1e-9, "mac_ideal matches all-ideal chain (200 random instances)");
  }

  // Least-squares closed form vs a mean-centered reference fit.
  {
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      std::vector<double> x(8), y(8);
      for (int k = 0; k < 8; ++k) {
        x[static_cast<std::size_t>(k)] = 10.0 * rng.uniform(Stream::scenario, 1000 + t, k, 0);
        y[static_cast<std::size_t>(k)] = 3.0 * x[static_cast<std::size_t>(k)] + 2.0 +
                                         rng.gaussian(Stream::scenario, 1000 + t, k, 1);
      }
      const FitResult f = least_squares_fit(x, y);
      double mx = 0, my = 0;
      for (int k = 0; k < 8; ++k) {
        mx += x[static_cast<std::size_t>(k)];
        my += y[static_cast<std::size_t>(k)];
      }
      mx /= 8;
      my /= 8;
      double sxx = 0, sxy = 0;
      for (int k = 0; k < 8; ++k) {
        sxx += (x[static_cast<std::size_t>(k)] - mx) * (x[static_cast<std::size_t>(k)] - mx);
        sxy += (x[static_cast<std::size_t>(k)] - mx) * (y[static_cast<std::size_t>(k)] - my);
      }
      const double g_ref = sxy / sxx;
      const double e_ref = my - g_ref * mx;
      worst = std::max({worst, std::abs(f.g_tot - g_ref), std::abs(f.eps_tot - e_ref)});
    }
    check(worst < 1e-10, "least-squares estimators match centered regression oracle");
  }

  // Nodal oracle: Kirchhoff residual and ideal-limit agreement.
  {
    SmallArrayState st;
    st.cfg = cfg;
    st.cfg.rows = 4;
    st.cfg.cols = 4;
    st.r_driver = 100;
    st.r_wire_x = 10;
    st.r_wire_y = 10;
    st.weights = WeightMatrix(4, 4);
    st.inputs.resize(4);
    for (int i = 0; i < 4; ++i) {
      st.inputs[static_cast<std::size_t>(i)] = InputCode{40, i % 2 ? -1 : 1};
      for (int j = 0; j < 4; ++j)
        st.weights.at(i, j) = (i + j) % 2 ? WeightCode::positive(50) : WeightCode::negative(30);
    }
    const NodalSolution sol = nodal_oracle(st);
    check(sol.max_kcl_residual < 1e-9, "nodal oracle Kirchhoff residual < 1e-9 A");
  }

  // Determinism: identical runs produce identical readings.
  {
    const NonidealityProfile p = sample_profile(ProfileSpec::defaults(), cfg, 1234);
    Simulator a(cfg, p), b(cfg, p);
    std::vector<InputCode> in(static_cast<std::size_t>(cfg.rows), InputCode{17, -1});
    WeightMatrix w(cfg.rows, cfg.cols);
    for (auto& c : w.w) c = WeightCode::positive(40);
    bool same = true;
    for (int t = 0; t < 20; ++t) {
      const auto ra = a.step(in, w);
      const auto rb = b.step(in, w);
      for (int j = 0; j < cfg.cols; ++j)
        same = same &&
               ra[static_cast<std::size_t>(j)].adc_code == rb[static_cast<std::size_t>(j)].adc_code &&
               ra[static_cast<std::size_t>(j)].v_sa == rb[static_cast<std::size_t>(j)].v_sa;
    }
    check(same, "seeded reruns are bit-identical");
  }

  // Trim grids: round trip within half an LSB.
  {
    const TrimModel trims = TrimModel::for_config(cfg);
    TrimTargets t;
    t.r_sa = 10000.0;
    t.v_cal = 0.412;
    const LineTrim q = quantize_trims(t, cfg, trims);
    const double dac_lsb = (trims.cal_dac_hi - trims.cal_dac_lo) / 63.0;
    const double pot_step = cfg.r_sa_nominal() / 127.0;
    check(std::abs(q.v_cal - t.v_cal) <= 0.5 * dac_lsb + 1e-12 &&
              std::abs(q.r_sa - t.r_sa) <= 0.5 * pot_step + 1e-9,
          "trim quantization residuals within half an LSB");
  }
  return ok;
}

}  // namespace cimsim
