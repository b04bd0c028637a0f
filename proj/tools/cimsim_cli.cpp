// cimsim command-line front end: batch experiments over the array simulator.
// Exit codes: 0 success, 1 stage failure, 2 configuration error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cimsim/datagen.hpp"
#include "cimsim/scenario.hpp"
#include "cimsim/techproj.hpp"

namespace fs = std::filesystem;
using namespace cimsim;

namespace {

struct CommonArgs {
  std::string config;
  std::string profile_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

Scenario load_scenario(const CommonArgs& args) {
  Scenario s;
  if (!args.config.empty()) s = scenario_from_json(load_json_file(args.config));
  if (args.seed_set) {
    s.seed = args.seed;
    s.seed_set = true;
  }
  s.validate();
  return s;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "scenario JSON file");
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--threads", args.threads,
                  "worker threads for sample-parallel stages (never affects results)");
  cmd->add_option("--profile", args.profile_path,
                  "restore a dumped error profile instead of sampling one");
}

Simulator make_sim(const Scenario& s, const CommonArgs& args) {
  if (!args.profile_path.empty())
    return Simulator(s.array, profile_from_json(load_json_file(args.profile_path)));
  return Simulator(s.array,
                   sample_profile(s.profile_spec, s.array, s.derived_seed(1)));
}

int run_simulate(const CommonArgs& args, const std::string& out_dir,
                 const std::string& cal_path) {
  const Scenario s = load_scenario(args);
  fs::create_directories(out_dir);
  Simulator sim = make_sim(s, args);
  if (!cal_path.empty()) sim.cal = calibration_from_json(load_json_file(cal_path));
  const std::string hash = scenario_hash_hex(s);
  const SweepData sweep = mac_sweep(sim, s.sweep);
  write_sweep_csv(sweep, (fs::path(out_dir) / "mac_sweep.csv").string(), hash, s.seed);
  write_column_errors_csv(sweep_errors(sweep),
                          (fs::path(out_dir) / "column_errors.csv").string(), hash,
                          s.seed);
  write_json_file(to_json(sim.profile), (fs::path(out_dir) / "profile.json").string());
  std::printf("simulate: wrote mac_sweep.csv, column_errors.csv, profile.json to %s\n",
              out_dir.c_str());
  return 0;
}

int run_calibrate(const CommonArgs& args, const std::string& out_dir) {
  const Scenario s = load_scenario(args);
  fs::create_directories(out_dir);
  Simulator sim = make_sim(s, args);
  const std::string hash = scenario_hash_hex(s);
  const BiscOutcome outcome = run_bisc(sim, s.bisc);
  write_characterization_csv(outcome.results,
                             (fs::path(out_dir) / "characterization.csv").string(),
                             hash, s.seed, outcome.state);
  write_json_file(to_json(outcome.state),
                  (fs::path(out_dir) / "calibration.json").string());
  int failed = 0;
  for (const auto& r : outcome.results) failed += r.failed ? 1 : 0;
  std::printf("calibrate: %zu characterizations, %d failed; wrote calibration.json\n",
              outcome.results.size(), failed);
  return failed == 0 ? 0 : 1;
}

int run_snr(const CommonArgs& args, const std::string& out_dir) {
  const Scenario s = load_scenario(args);
  fs::create_directories(out_dir);
  const std::string hash = scenario_hash_hex(s);
  Simulator sim = make_sim(s, args);

  sim.cycle = 1u << 20;
  const SweepData pre_sweep = mac_sweep(sim, s.sweep);
  const SnrSweep pre = snr_sweep(sim, s.snr.stimulus, s.snr.instances,
                                 s.derived_seed(2), 2u << 20);
  sim.cycle = 3u << 20;
  run_bisc(sim, s.bisc);
  const SnrSweep post = snr_sweep(sim, s.snr.stimulus, s.snr.instances,
                                  s.derived_seed(2), 5u << 20);

  SnrComparison cmp;
  double boost = 0.0;
  int finite = 0;
  for (int col = 0; col < s.array.cols; ++col) {
    const std::size_t c = static_cast<std::size_t>(col);
    SnrEntry a = compute_snr(rounded(pre.q_nom_col[c]), pre.q_act[c]);
    SnrEntry b = compute_snr(rounded(post.q_nom_col[c]), post.q_act[c]);
    a.column = col;
    b.column = col;
    if (std::isfinite(a.snr_db) && std::isfinite(b.snr_db)) {
      boost += b.snr_db - a.snr_db;
      ++finite;
    }
    cmp.pre.push_back(a);
    cmp.post.push_back(b);
  }
  write_snr_csv(cmp, sweep_errors(pre_sweep),
                (fs::path(out_dir) / "snr.csv").string(), hash, s.seed);
  if (finite > 0)
    std::printf("snr: mean boost %.2f dB over %d columns; wrote snr.csv\n",
                boost / finite, finite);
  else
    std::printf("snr: error-free chain, SNR at the infinity sentinel; wrote snr.csv\n");
  return 0;
}

int run_train_ref(const std::string& train_images, const std::string& train_labels,
                  const std::string& test_images, const std::string& test_labels,
                  const std::string& out_model, TrainOptions opt) {
  const Dataset train = load_mnist(train_images, train_labels);
  const FloatMlp m = train_reference(train, opt);
  double test_acc = -1.0;
  if (!test_images.empty()) {
    const Dataset test = load_mnist(test_images, test_labels);
    test_acc = model_accuracy(m, test);
  }
  write_json_file(to_json(m), out_model);
  if (test_acc >= 0)
    std::printf("train-ref: test accuracy %.2f%%, wrote %s\n", 100.0 * test_acc,
                out_model.c_str());
  else
    std::printf("train-ref: wrote %s\n", out_model.c_str());
  return 0;
}

int run_quantize(const CommonArgs& args, const std::string& model_path,
                 const std::string& calib_images, const std::string& calib_labels,
                 const std::string& out_path) {
  const Scenario s = load_scenario(args);
  const FloatMlp m = float_mlp_from_json(load_json_file(model_path));
  const Dataset calib = load_mnist(calib_images, calib_labels);
  const QuantizedMlp q =
      quantize_mlp(m, s.array, calib, s.dnn.calib_count, s.derived_seed(3));
  write_json_file(to_json(q), out_path);
  std::printf("quantize: wrote %s\n", out_path.c_str());
  return 0;
}

int run_evaluate(const CommonArgs& args, const std::string& qmodel_path,
                 const std::string& images, const std::string& labels, int count,
                 const std::string& cal_path, bool with_bisc, bool high_precision) {
  const Scenario s = load_scenario(args);
  const QuantizedMlp q = quantized_mlp_from_json(load_json_file(qmodel_path));
  const Dataset data = load_mnist(images, labels);
  const TileSchedule schedule = build_schedule(q, s.array);
  const std::vector<int> subset = subset_indices(data.count, count, s.derived_seed(4));
  const int threads = args.threads > 0
                          ? args.threads
                          : static_cast<int>(std::thread::hardware_concurrency());
  const InferMode mode =
      high_precision ? InferMode::high_precision : InferMode::quantized;

  Simulator ideal(s.array, NonidealityProfile::ideal(s.array));
  const EvalOutcome e_ideal =
      evaluate(data, subset, q, schedule, ideal, mode, threads, 1u << 24);
  std::printf("evaluate[ideal]:        %d/%d = %.2f%%\n", e_ideal.correct,
              e_ideal.total, 100.0 * e_ideal.accuracy);

  Simulator sim = make_sim(s, args);
  const EvalOutcome e_uncal =
      evaluate(data, subset, q, schedule, sim, mode, threads, 2u << 24);
  std::printf("evaluate[uncalibrated]: %d/%d = %.2f%%\n", e_uncal.correct,
              e_uncal.total, 100.0 * e_uncal.accuracy);

  if (!cal_path.empty())
    sim.cal = calibration_from_json(load_json_file(cal_path));
  else if (with_bisc)
    run_bisc(sim, s.bisc);
  else
    return 0;
  const EvalOutcome e_cal =
      evaluate(data, subset, q, schedule, sim, mode, threads, 3u << 24);
  std::printf("evaluate[calibrated]:   %d/%d = %.2f%%\n", e_cal.correct, e_cal.total,
              100.0 * e_cal.accuracy);
  return 0;
}

int run_extrapolate(const std::string& out_path, const std::string& specs_path) {
  std::vector<TechSpec> techs = builtin_techs();
  if (!specs_path.empty()) {
    const std::vector<TechSpec> extra = tech_table_from_json(load_json_file(specs_path));
    bool replaces_baseline = false;
    for (const TechSpec& t : extra) replaces_baseline = replaces_baseline || t.baseline;
    if (replaces_baseline) techs.clear();
    techs.insert(techs.end(), extra.begin(), extra.end());
  }
  const TechSpec& base = builtin_baseline(techs);
  std::printf("%-14s %10s %12s %11s %11s %18s\n", "technology", "R_U (MOhm)",
              "I_cell (uA)", "area x", "power x", "published (a/p)");
  json out = json::array();
  for (const TechSpec& t : techs) {
    const double i_ua = unit_current(t) * 1e6;
    const ImprovementFactors f = improvement_factors(t, base);
    char published[40] = "-";
    if (t.listed_unit_current_ua > 0)
      std::snprintf(published, sizeof published, "%gx / %gx", t.listed_area_factor,
                    t.listed_power_factor);
    std::printf("%-14s %10.3f %12.4f %11.4g %11.4g %18s\n", t.name.c_str(),
                t.r_unit / 1e6, i_ua, f.area, f.power, published);
    out.push_back({{"name", t.name},
                   {"r_unit_ohm", t.r_unit},
                   {"unit_current_a", unit_current(t)},
                   {"listed_unit_current_ua", t.listed_unit_current_ua},
                   {"area_factor_exact", f.area},
                   {"power_factor_exact", f.power},
                   {"listed_area_factor", t.listed_area_factor},
                   {"listed_power_factor", t.listed_power_factor},
                   {"baseline", t.baseline}});
  }
  if (!out_path.empty()) {
    json doc;
    doc["format_version"] = 1;
    doc["technologies"] = out;
    write_json_file(doc, out_path);
    std::printf("extrapolate: wrote %s\n", out_path.c_str());
  }
  return 0;
}

int run_gen_data(const std::string& out_dir, int train_count, int test_count,
                 std::uint64_t seed) {
  fs::create_directories(out_dir);
  const Dataset train = make_synthetic_digits(train_count, mix64(seed ^ 0x7261u));
  const Dataset test = make_synthetic_digits(test_count, mix64(seed ^ 0x7465u));
  save_idx(train, (fs::path(out_dir) / "train-images-idx3-ubyte").string(),
           (fs::path(out_dir) / "train-labels-idx1-ubyte").string());
  save_idx(test, (fs::path(out_dir) / "t10k-images-idx3-ubyte").string(),
           (fs::path(out_dir) / "t10k-labels-idx1-ubyte").string());
  std::printf("gen-data: wrote %d train / %d test images to %s\n", train_count,
              test_count, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"behavioral R-2R MDAC compute-in-memory array simulator"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string out_dir = "out";
  std::string cal_path, model_path, qmodel_path, images, labels, out_path;
  std::string train_images, train_labels, test_images, test_labels;
  int count = 2000;
  bool with_bisc = false, high_precision = false;
  TrainOptions train_opt;
  int gen_train = 24000, gen_test = 5000;
  std::uint64_t gen_seed = 1;

  CLI::App* simulate = app.add_subcommand("simulate", "uncalibrated (or given-state) MAC sweep");
  add_common(simulate, common);
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_option("--cal", cal_path, "calibration file to apply");

  CLI::App* calibrate = app.add_subcommand("calibrate", "run self-calibration, persist state");
  add_common(calibrate, common);
  calibrate->add_option("--out", out_dir, "output directory");

  CLI::App* snr = app.add_subcommand("snr", "pre/post-calibration compute-SNR comparison");
  add_common(snr, common);
  snr->add_option("--out", out_dir, "output directory");

  CLI::App* train = app.add_subcommand("train-ref", "train the float reference model");
  train->add_option("--train-images", train_images)->required();
  train->add_option("--train-labels", train_labels)->required();
  train->add_option("--test-images", test_images);
  train->add_option("--test-labels", test_labels);
  train->add_option("--out", out_path, "model file to write")->required();
  train->add_option("--epochs", train_opt.epochs);
  train->add_option("--lr", train_opt.lr);
  train->add_option("--hidden", train_opt.hidden);
  train->add_option("--train-seed", train_opt.seed);

  CLI::App* quantize = app.add_subcommand("quantize", "quantize a float model for the array");
  add_common(quantize, common);
  quantize->add_option("--model", model_path)->required();
  quantize->add_option("--calib-images", images)->required();
  quantize->add_option("--calib-labels", labels)->required();
  quantize->add_option("--out", out_path)->required();

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "dataset accuracy through the array");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--qmodel", qmodel_path)->required();
  evaluate_cmd->add_option("--images", images)->required();
  evaluate_cmd->add_option("--labels", labels)->required();
  evaluate_cmd->add_option("--count", count, "seeded evaluation subset size");
  evaluate_cmd->add_option("--cal", cal_path, "calibration file for the calibrated condition");
  evaluate_cmd->add_flag("--bisc", with_bisc, "run self-calibration for the calibrated condition");
  evaluate_cmd->add_flag("--high-precision", high_precision, "bypass ADC quantization");

  CLI::App* extrapolate = app.add_subcommand("extrapolate", "resistor-technology projection table");
  extrapolate->add_option("--out", out_path, "JSON file to write");
  std::string tech_specs_path;
  extrapolate->add_option("--specs", tech_specs_path,
                          "custom technology table (JSON; rows with a baseline "
                          "entry replace the built-ins, otherwise they extend them)");

  CLI::App* report = app.add_subcommand("report", "full scenario run: sweeps, calibration, SNR, reports");
  add_common(report, common);
  report->add_option("--out", out_dir, "output directory");

  CLI::App* selftest_cmd = app.add_subcommand("selftest", "run the built-in oracle suite");

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic IDX digit dataset");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--train", gen_train, "training image count");
  gen->add_option("--test", gen_test, "test image count");
  gen->add_option("--seed", gen_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(simulate)) return run_simulate(common, out_dir, cal_path);
    if (app.got_subcommand(calibrate)) return run_calibrate(common, out_dir);
    if (app.got_subcommand(snr)) return run_snr(common, out_dir);
    if (app.got_subcommand(train))
      return run_train_ref(train_images, train_labels, test_images, test_labels,
                           out_path, train_opt);
    if (app.got_subcommand(quantize))
      return run_quantize(common, model_path, images, labels, out_path);
    if (app.got_subcommand(evaluate_cmd))
      return run_evaluate(common, qmodel_path, images, labels, count, cal_path,
                          with_bisc, high_precision);
    if (app.got_subcommand(extrapolate)) return run_extrapolate(out_path, tech_specs_path);
    if (app.got_subcommand(report)) {
      const Scenario s = load_scenario(common);
      const ScenarioOutcome outcome = run_scenario(s, out_dir, common.threads);
      for (const StageStatus& st : outcome.bundle.stages)
        std::printf("stage %-20s %s%s%s\n", st.name.c_str(), st.status.c_str(),
                    st.message.empty() ? "" : ": ", st.message.c_str());
      return outcome.exit_code;
    }
    if (app.got_subcommand(selftest_cmd)) {
      std::string log;
      const bool ok = selftest(log);
      std::fputs(log.c_str(), stdout);
      return ok ? 0 : 1;
    }
    if (app.got_subcommand(gen)) return run_gen_data(out_dir, gen_train, gen_test, gen_seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
