// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ttfs/convert.hpp"
#include "ttfs/error.hpp"
#include "ttfs/model_io.hpp"
#include "ttfs/model_zoo.hpp"
#include "ttfs/preprocess.hpp"
#include "ttfs/snn_sim.hpp"
#include "ttfs/verify.hpp"

namespace ttfs {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string command;
  std::string model;
  std::string calibration;
  std::string data;
  std::string artifacts;
  std::string out;
  HyperParams hyper;
  std::string variant = "fixed_alpha";
  std::string mode = "strict";
  bool sparse = false;
  double jitter_sd = 0.0;
  double alpha_sd = 0.0;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  double dt_oracle = 0.0;
  std::size_t oracle_samples = 10;
  // sweep
  std::string sweep_kind;
  std::vector<double> values;
  std::size_t trials = 16;
  // trace
  std::size_t index = 0;
  // gen-model
  std::string zoo = "mlp";
  std::size_t n_train = 1000;
  std::size_t n_calibration = 1000;
  std::size_t n_eval = 1000;
};

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

ReportHeader header_for(const RunConfig& c) {
  ReportHeader h{{"command", c.command}};
  auto add = [&](const char* k, const std::string& v) {
    if (!v.empty()) h.emplace_back(k, v);
  };
  add("model", c.model);
  add("calibration", c.calibration);
  add("data", c.data);
  add("artifacts", c.artifacts);
  h.emplace_back("delta", format_double(c.hyper.delta));
  h.emplace_back("b_low", format_double(c.hyper.b_low));
  h.emplace_back("zeta", format_double(c.hyper.zeta));
  h.emplace_back("b_floor", format_double(c.hyper.b_floor));
  h.emplace_back("bound_positive_sum", c.hyper.bound_positive_sum ? "true" : "false");
  h.emplace_back("variant", c.variant);
  h.emplace_back("threshold_mode", c.mode);
  h.emplace_back("sparse", c.sparse ? "true" : "false");
  h.emplace_back("jitter_sd", format_double(c.jitter_sd));
  h.emplace_back("alpha_sd", format_double(c.alpha_sd));
  h.emplace_back("seed", std::to_string(c.seed));
  if (c.command == "sweep") {
    h.emplace_back("sweep", c.sweep_kind);
    h.emplace_back("values", join(c.values));
    h.emplace_back("trials", std::to_string(c.trials));
  }
  if (c.command == "trace") h.emplace_back("index", std::to_string(c.index));
  return h;
}

void print_header(std::ostream& out, const ReportHeader& h) {
  for (const auto& [k, v] : h) out << "# " << k << " = " << v << '\n';
}

SimOptions sim_options(const RunConfig& c) {
  SimOptions o;
  o.mode = threshold_mode_from_string(c.mode);
  o.sparse = c.sparse;
  o.noise.jitter_sd = c.jitter_sd;
  o.noise.alpha_sd = c.alpha_sd;
  o.noise.seed = c.seed;
  return o;
}

fs::path out_dir(const RunConfig& c) {
  if (c.out.empty()) throw Error(ErrorKind::Usage, "--out is required");
  fs::create_directories(c.out);
  return c.out;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + p.string());
  return f;
}

Dataset need_dataset(const std::string& path, const char* flag) {
  if (path.empty()) throw Error(ErrorKind::Usage, std::string(flag) + " is required");
  return load_dataset(path);
}

struct Pipeline {
  ReluNetwork source;
  ScaledNetwork scaled;
  SnnNetwork snn;
};

Pipeline build_pipeline(const RunConfig& c) {
  if (c.model.empty()) throw Error(ErrorKind::Usage, "--model is required");
  check_hyper(c.hyper);
  Pipeline p;
  p.source = load_model(c.model);
  if (!c.artifacts.empty()) {
    p.scaled = load_scaled(fs::path(c.artifacts) / "scaled.json");
    p.snn = load_snn(fs::path(c.artifacts) / "snn.json");
  } else {
    const Dataset cal = need_dataset(c.calibration, "--calibration (or --artifacts)");
    p.scaled = preprocess(p.source, cal.inputs(), c.hyper, c.workers);
    p.snn = convert(p.scaled, variant_from_string(c.variant));
  }
  return p;
}

void print_summary(std::ostream& out, const ScaledNetwork& s, const SnnNetwork& snn) {
  out << "layer  kind        shape            X                        t_min                    t_max\n";
  for (std::size_t k = 0; k < snn.layers.size(); ++k) {
    const SnnLayer& l = snn.layers[k];
    const char* kind = l.kind == SnnLayerKind::Neuron   ? "neuron"
                       : l.kind == SnnLayerKind::Pool    ? "pool"
                       : l.kind == SnnLayerKind::Flatten ? "flatten"
                                                         : "readout";
    out << std::left << std::setw(7) << k << std::setw(12) << kind << std::setw(17)
        << shape_to_string(l.out_shape) << std::setw(25) << format_double(s.layer_max[k])
        << std::setw(25) << format_double(l.t_min) << format_double(l.t_max) << '\n';
  }
  out << std::right;
  const double lo = -s.hyper.b_low;
  const double hi = 1.0 - s.hyper.delta;
  constexpr std::size_t kBins = 5;
  out << "hidden weight sums in [" << format_double(lo) << ", " << format_double(hi) << "]\n";
  for (std::size_t k : hidden_layer_indices(s.net)) {
    std::vector<std::size_t> bins(kBins, 0);
    for (double c : row_sums(s.net.layers[k])) {
      const double f = (c - lo) / (hi - lo);
      bins[std::min<std::size_t>(kBins - 1, static_cast<std::size_t>(std::max(0.0, f) * kBins))]++;
    }
    out << "  layer " << k << ':';
    for (std::size_t b : bins) out << ' ' << b;
    out << '\n';
  }
}

int cmd_gen_model(const RunConfig& c, std::ostream& out) {
  const fs::path dir = out_dir(c);
  ZooOptions o;
  o.n_train = c.n_train;
  o.n_calibration = c.n_calibration;
  o.n_eval = c.n_eval;
  const ZooBundle z = make_zoo_model(zoo_model_from_string(c.zoo), c.seed, o);
  save_model(z.net, dir / "model.json", dir / "model.bin");
  save_dataset(z.train, dir / "train.json", dir / "train.bin");
  save_dataset(z.calibration, dir / "calibration.json", dir / "calibration.bin");
  save_dataset(z.eval, dir / "eval.json", dir / "eval.bin");
  out << "wrote " << c.zoo << " model (" << z.net.layers.size() << " layers) and datasets to "
      << dir.string() << '\n';
  return kExitOk;
}

int cmd_convert(const RunConfig& c, std::ostream& out) {
  if (c.model.empty()) throw Error(ErrorKind::Usage, "--model is required");
  check_hyper(c.hyper);
  const Variant variant = variant_from_string(c.variant);
  const fs::path dir = out_dir(c);
  const ReluNetwork source = load_model(c.model);
  const Dataset cal = need_dataset(c.calibration, "--calibration");
  const ScaledNetwork scaled = preprocess(source, cal.inputs(), c.hyper, c.workers);
  const SnnNetwork snn = convert(scaled, variant);
  save_scaled(scaled, dir / "scaled.json", dir / "scaled.bin");
  save_snn(snn, dir / "snn.json", dir / "snn.bin");
  print_header(out, header_for(c));
  print_summary(out, scaled, snn);
  return kExitOk;
}

double oracle_discrepancy(const Pipeline& p, const Dataset& data, double dt, std::size_t samples) {
  double worst = 0.0;
  const std::size_t n = std::min(samples, data.samples.size());
  for (std::size_t s = 0; s < n; ++s) {
    const Tensor x = normalize_sample(p.scaled, data.samples[s].input);
    const SpikeTrace e = simulate_event(p.snn, x);
    const SpikeTrace g = simulate_stepped(p.snn, x, dt);
    for (std::size_t k : neuron_layer_indices(p.snn)) {
      for (std::size_t i = 0; i < e.layers[k].times.size(); ++i) {
        worst = std::max(worst, std::abs(e.layers[k].times[i] - g.layers[k].times[i]));
      }
    }
  }
  return worst;
}

int cmd_verify(const RunConfig& c, std::ostream& out) {
  const Pipeline p = build_pipeline(c);
  const Dataset data = need_dataset(c.data, "--data");
  const AgreementReport rep = run_agreement(p.source, p.scaled, p.snn, data, sim_options(c), c.workers);
  ReportHeader h = header_for(c);
  if (c.dt_oracle > 0.0) {
    h.emplace_back("oracle_dt", format_double(c.dt_oracle));
    h.emplace_back("oracle_max_discrepancy",
                   format_double(oracle_discrepancy(p, data, c.dt_oracle, c.oracle_samples)));
  }
  if (!c.out.empty()) {
    const fs::path dir = out_dir(c);
    auto a = open_out(dir / "agreement.csv");
    write_agreement_csv(a, rep, h);
    auto m = open_out(dir / "mismatches.csv");
    write_mismatches_csv(m, rep, h);
    auto t = open_out(dir / "report.txt");
    write_agreement_text(t, rep, h);
  }
  write_agreement_text(out, rep, h);
  return rep.n_agree == rep.n_samples ? kExitOk : kExitVerificationFailed;
}

int cmd_sweep(const RunConfig& c, std::ostream& out) {
  if (c.values.empty()) throw Error(ErrorKind::Usage, "--values is required");
  const ReportHeader h = header_for(c);
  const Dataset data = need_dataset(c.data, "--data");
  const SimOptions sim = sim_options(c);
  const fs::path dir = out_dir(c);
  if (c.sweep_kind == "zeta") {
    if (c.model.empty()) throw Error(ErrorKind::Usage, "--model is required");
    const Dataset cal = need_dataset(c.calibration, "--calibration");
    const auto rows = sweep_zeta(load_model(c.model), cal, data, c.values, c.hyper,
                                 variant_from_string(c.variant), sim, c.workers);
    auto f = open_out(dir / "zeta.csv");
    write_zeta_csv(f, rows, h);
    write_zeta_csv(out, rows, h);
    return kExitOk;
  }
  const Pipeline p = build_pipeline(c);
  const NoiseSweep sweep =
      c.sweep_kind == "jitter"
          ? sweep_jitter(p.source, p.scaled, p.snn, data, c.values, c.trials, c.seed, sim, c.workers)
          : sweep_alpha_noise(p.source, p.scaled, p.snn, data, c.values, c.trials, c.seed, sim,
                              c.workers);
  auto t = open_out(dir / (c.sweep_kind + "_trials.csv"));
  write_trials_csv(t, sweep, h);
  auto s = open_out(dir / (c.sweep_kind + "_summary.csv"));
  write_noise_summary_csv(s, sweep, h);
  write_noise_summary_csv(out, sweep, h);
  return kExitOk;
}

int cmd_trace(const RunConfig& c, std::ostream& out) {
  const Pipeline p = build_pipeline(c);
  const Dataset data = need_dataset(c.data, "--data");
  if (c.index >= data.samples.size()) {
    throw Error(ErrorKind::Usage, "--index " + std::to_string(c.index) + " exceeds the " +
                                      std::to_string(data.samples.size()) + " samples");
  }
  SimOptions o = sim_options(c);
  o.sample_key = c.index;
  const SpikeTrace trace = simulate_event(p.snn, normalize_sample(p.scaled, data.samples[c.index].input), o);
  if (c.out.empty()) {
    print_header(out, header_for(c));
    write_trace(out, trace, p.snn);
  } else {
    const fs::path file = c.out;
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    auto f = open_out(file);
    print_header(f, header_for(c));
    write_trace(f, trace, p.snn);
  }
  return kExitOk;
}

void add_pipeline_options(CLI::App* app, RunConfig& c) {
  app->add_option("--model", c.model, "Model manifest");
  app->add_option("--calibration", c.calibration, "Calibration dataset manifest");
  app->add_option("--artifacts", c.artifacts, "Directory written by convert");
  app->add_option("--delta", c.hyper.delta, "Upper weight-sum margin, sums stay <= 1 - delta");
  app->add_option("--b-low", c.hyper.b_low, "Lower weight-sum bound, sums stay >= -b_low");
  app->add_option("--zeta", c.hyper.zeta, "Window size factor, B = (1 + zeta) X");
  app->add_option("--b-floor", c.hyper.b_floor, "Smallest window for silent layers");
  app->add_flag("--bound-positive-sum", c.hyper.bound_positive_sum,
                "Also bound the positive weight sum (needed by positive_slope)");
  app->add_option("--variant", c.variant, "fixed_alpha, identical_weights or positive_slope")
      ->check(CLI::IsMember({"fixed_alpha", "identical_weights", "positive_slope"}));
  app->add_option("--workers", c.workers, "Worker threads, 0 = all cores");
}

void add_sim_options(CLI::App* app, RunConfig& c) {
  app->add_option("--data", c.data, "Dataset manifest to evaluate");
  app->add_option("--mode", c.mode, "Threshold mode")->check(CLI::IsMember({"strict", "constant"}));
  app->add_flag("--sparse", c.sparse, "Silence neurons that only fire through the t_max pulse");
  app->add_option("--jitter-sd", c.jitter_sd, "Gaussian spike-time jitter SD");
  app->add_option("--alpha-sd", c.alpha_sd, "Gaussian slope noise SD");
  app->add_option("--seed", c.seed, "Noise seed");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convert ReLU networks into time-to-first-spike spiking networks and verify them"};
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  RunConfig gc, cc, vc, sc, tc;

  auto* gen = app.add_subcommand("gen-model", "Generate a desk-scale model and datasets");
  gen->add_option("--model", gc.zoo, "mlp, lenet or vgg")->check(CLI::IsMember({"mlp", "lenet", "vgg"}));
  gen->add_option("--seed", gc.seed, "Generator seed");
  gen->add_option("--n-train", gc.n_train, "Samples used to fit the readout");
  gen->add_option("--n-calibration", gc.n_calibration, "Calibration samples");
  gen->add_option("--n-eval", gc.n_eval, "Held-out samples");
  gen->add_option("--out", gc.out, "Output directory")->required();

  auto* conv = app.add_subcommand("convert", "Preprocess and convert a model");
  add_pipeline_options(conv, cc);
  conv->add_option("--out", cc.out, "Output directory for scaled.json and snn.json")->required();

  auto* ver = app.add_subcommand("verify", "Check ReLU and spiking predictions agree");
  add_pipeline_options(ver, vc);
  add_sim_options(ver, vc);
  ver->add_option("--dt-oracle", vc.dt_oracle, "Also compare against the stepped simulator at this dt");
  ver->add_option("--oracle-samples", vc.oracle_samples, "Samples for the stepped comparison");
  ver->add_option("--out", vc.out, "Directory for agreement.csv, mismatches.csv, report.txt");

  auto* sweep = app.add_subcommand("sweep", "Sensitivity sweeps over zeta, jitter or slope noise");
  sweep->add_option("kind", sc.sweep_kind, "zeta, jitter or alpha")
      ->required()
      ->check(CLI::IsMember({"zeta", "jitter", "alpha"}));
  add_pipeline_options(sweep, sc);
  add_sim_options(sweep, sc);
  sweep->add_option("--values", sc.values, "Comma-separated parameter values")->delimiter(',');
  sweep->add_option("--trials", sc.trials, "Trials per noise level");
  sweep->add_option("--out", sc.out, "Output directory")->required();

  auto* trace = app.add_subcommand("trace", "Dump the spike raster of one input");
  add_pipeline_options(trace, tc);
  add_sim_options(trace, tc);
  trace->add_option("--index", tc.index, "Sample index in --data");
  trace->add_option("--out", tc.out, "Output file (stdout when omitted)");

  for (auto* sub : {gen, conv, ver, sweep, trace}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      gc.command = "gen-model";
      return cmd_gen_model(gc, out);
    }
    if (*conv) {
      cc.command = "convert";
      return cmd_convert(cc, out);
    }
    if (*ver) {
      vc.command = "verify";
      return cmd_verify(vc, out);
    }
    if (*sweep) {
      sc.command = "sweep";
      return cmd_sweep(sc, out);
    }
    tc.command = "trace";
    return cmd_trace(tc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Usage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace ttfs
