// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance checks on the desk models. Prints one PASS/FAIL
// line per criterion and exits non-zero if any fails.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ttfs/cli.hpp"
#include "ttfs/forward.hpp"
#include "ttfs/model_zoo.hpp"
#include "ttfs/verify.hpp"

namespace fs = std::filesystem;
using namespace ttfs;

namespace {

constexpr std::uint64_t kSeed = 7;

struct Desk {
  ZooModel model;
  ZooBundle bundle;
  ScaledNetwork scaled;
  SnnNetwork snn;
};

std::string name(const Desk& d) { return to_string(d.model); }

std::vector<Desk> make_desks() {
  std::vector<Desk> out;
  for (ZooModel m : {ZooModel::Mlp, ZooModel::LeNet, ZooModel::Vgg}) {
    Desk d{m, make_zoo_model(m, kSeed), {}, {}};
    d.scaled = preprocess(d.bundle.net, d.bundle.calibration.inputs());
    d.snn = convert(d.scaled, Variant::FixedAlpha);
    out.push_back(std::move(d));
  }
  return out;
}

Tensor unit_input(const Desk& d, std::size_t i) {
  return normalize_sample(d.scaled, d.bundle.eval.samples[i].input);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string num(double v) { return format_double(v); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
  void require(bool ok, const std::string& s) {
    pass = pass && ok;
    note(s);
  }
};

Outcome exact_agreement(const std::vector<Desk>& desks) {
  Outcome o;
  for (const Desk& d : desks) {
    const AgreementReport r = run_agreement(d.bundle.net, d.scaled, d.snn, d.bundle.eval);
    o.require(r.n_samples >= 1000 && r.n_agree == r.n_samples,
              name(d) + " " + std::to_string(r.n_agree) + "/" + std::to_string(r.n_samples));
  }
  bool min_pool = false;
  for (const Layer& l : desks[2].scaled.net.layers) {
    if (l.is_pool())
      min_pool = min_pool || std::count(l.pool.modes.begin(), l.pool.modes.end(), PoolMode::Min);
  }
  o.require(min_pool, std::string("vgg min-pool channel ") + (min_pool ? "present" : "missing"));
  return o;
}

Outcome phase_one_lossless(const std::vector<Desk>& desks) {
  Outcome o;
  for (const Desk& d : desks) {
    double worst = 0.0;
    for (const Sample& s : d.bundle.eval.samples) {
      const Tensor a = relu_logits(d.bundle.net, s.input);
      const Tensor b = relu_logits(d.scaled.net, normalize_sample(d.scaled, s.input));
      double scale = 0.0;
      for (double v : a.data()) scale = std::max(scale, std::abs(v));
      worst = std::max(worst, max_abs_diff(a.data(), b.data()) / std::max(scale, 1e-300));
    }
    double lo = 0.0, hi = -1e300;
    for (std::size_t k : hidden_layer_indices(d.scaled.net)) {
      for (double c : row_sums(d.scaled.net.layers[k])) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
    }
    const HyperParams& h = d.scaled.hyper;
    o.require(worst <= 1e-8 && lo >= -h.b_low && hi <= 1.0 - h.delta,
              name(d) + " rel " + num(worst) + " sums [" + num(lo) + ", " + num(hi) + "]");
  }
  return o;
}

Outcome decoded_identity(const std::vector<Desk>& desks) {
  Outcome o;
  for (const Desk& d : desks) {
    double worst = 0.0;
    for (std::size_t s = 0; s < 100; ++s) {
      const Tensor x = unit_input(d, s);
      const ForwardResult r = relu_forward(d.scaled.net, x);
      const SpikeTrace tr = simulate_event(d.snn, x);
      for (std::size_t k = 0; k + 1 < d.snn.layers.size(); ++k)
        worst = std::max(worst, max_abs_diff(decode(tr, d.snn, k).data(), r.outputs[k].data()));
    }
    o.require(worst <= 1e-9, name(d) + " " + num(worst));
  }
  return o;
}

Outcome oracle_equivalence(const Desk& mlp) {
  Outcome o;
  const std::vector<double> dts{1e-4, 5e-5, 2.5e-5};
  std::vector<double> worst(dts.size(), 0.0);
  for (std::size_t s = 0; s < 100; ++s) {
    const Tensor x = unit_input(mlp, s);
    const SpikeTrace e = simulate_event(mlp.snn, x);
    for (std::size_t i = 0; i < dts.size(); ++i) {
      const SpikeTrace g = simulate_stepped(mlp.snn, x, dts[i]);
      for (std::size_t k : neuron_layer_indices(mlp.snn))
        worst[i] = std::max(worst[i], max_abs_diff(e.layers[k].times, g.layers[k].times));
    }
  }
  o.require(worst[0] <= dts[0], "max |dt_event - dt_stepped| at dt 1e-4 = " + num(worst[0]));
  for (std::size_t i = 1; i < dts.size(); ++i) {
    const double ratio = worst[i - 1] / worst[i];
    o.require(ratio >= 1.5 && ratio <= 2.5,
              "halving to " + num(dts[i]) + ": " + num(worst[i]) + " (ratio " + num(ratio) + ")");
  }
  return o;
}

Outcome variant_equivalence(const std::vector<Desk>& desks) {
  Outcome o;
  for (const Desk& d : desks) {
    HyperParams h;
    h.bound_positive_sum = true;
    const ScaledNetwork scaled = preprocess(d.bundle.net, d.bundle.calibration.inputs(), h);
    std::vector<SnnNetwork> nets;
    for (Variant v : {Variant::FixedAlpha, Variant::IdenticalWeights, Variant::PositiveSlope})
      nets.push_back(convert(scaled, v));
    double worst = 0.0;
    std::size_t pred_mismatch = 0;
    for (std::size_t s = 0; s < 100; ++s) {
      const Tensor x = normalize_sample(scaled, d.bundle.eval.samples[s].input);
      const SpikeTrace base = simulate_event(nets[0], x);
      const std::size_t ann = predict(scaled.net, x);
      pred_mismatch += argmax(base.potentials.data()) != ann;
      for (std::size_t v = 1; v < nets.size(); ++v) {
        const SpikeTrace tr = simulate_event(nets[v], x);
        for (std::size_t k : neuron_layer_indices(nets[0]))
          worst = std::max(worst, max_abs_diff(base.layers[k].times, tr.layers[k].times));
        pred_mismatch += argmax(tr.potentials.data()) != ann;
      }
    }
    std::size_t unit = 0, total = 0;
    for (std::size_t k : neuron_layer_indices(nets[1])) {
      const Tensor slope = slope_after_arrivals(nets[1], k);
      for (double v : slope.data()) {
        unit += v == 1.0;
        ++total;
      }
    }
    o.require(worst <= 1e-9 && pred_mismatch == 0 && unit == total,
              name(d) + " times " + num(worst) + ", prediction mismatches " +
                  std::to_string(pred_mismatch) + ", unit slope " + std::to_string(unit) + "/" +
                  std::to_string(total));
  }
  return o;
}

Outcome dynamic_threshold(const std::vector<Desk>& desks) {
  Outcome o;
  SimOptions dyn;
  dyn.realization = Realization::DynamicThreshold;
  for (const Desk& d : desks) {
    double worst = 0.0;
    for (std::size_t s = 0; s < 100; ++s) {
      const Tensor x = unit_input(d, s);
      const SpikeTrace a = simulate_event(d.snn, x);
      const SpikeTrace b = simulate_event(d.snn, x, dyn);
      for (std::size_t k : neuron_layer_indices(d.snn))
        worst = std::max(worst, max_abs_diff(a.layers[k].times, b.layers[k].times));
    }
    o.require(worst <= 1e-12, name(d) + " " + num(worst));
  }
  return o;
}

Outcome sparse_mode(const std::vector<Desk>& desks) {
  Outcome o;
  SimOptions sparse;
  sparse.sparse = true;
  for (const Desk& d : desks) {
    double worst = 0.0;
    for (std::size_t s = 0; s < d.bundle.eval.samples.size(); ++s) {
      const Tensor x = unit_input(d, s);
      worst = std::max(worst, max_abs_diff(simulate_event(d.snn, x).potentials.data(),
                                           simulate_event(d.snn, x, sparse).potentials.data()));
    }
    const AgreementReport r = run_agreement(d.bundle.net, d.scaled, d.snn, d.bundle.eval, sparse);
    const double positive = positive_activation_pct(d.scaled, d.bundle.eval);
    o.require(worst <= 1e-12 && r.spike_fraction_pct == positive && r.spike_fraction_pct < 100.0,
              name(d) + " potentials " + num(worst) + ", spikes " + num(r.spike_fraction_pct) +
                  "% vs positive " + num(positive) + "%");
  }
  return o;
}

Outcome pooling_units() {
  Outcome o;
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (std::size_t q : {2u, 4u, 9u}) {
    std::size_t wrong = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> t(q);
      for (double& v : t) v = u(rng);
      const auto mx = pool_unit_trigger(t, convert_pooling(PoolMode::Max, q));
      const auto mn = pool_unit_trigger(t, convert_pooling(PoolMode::Min, q));
      wrong += !mx || t[*mx] != *std::min_element(t.begin(), t.end());
      wrong += !mn || t[*mn] != *std::max_element(t.begin(), t.end());
    }
    o.require(wrong == 0, "Q=" + std::to_string(q) + " " + std::to_string(wrong) + " wrong");
  }
  return o;
}

Outcome zeta_sensitivity(const std::vector<Desk>& desks) {
  Outcome o;
  for (const Desk& d : desks) {
    if (d.model == ZooModel::Mlp) continue;
    const auto rows = sweep_zeta(d.bundle.net, d.bundle.calibration, d.bundle.eval,
                                 {0.5, 0.1, 0.0, -0.5}, {}, Variant::FixedAlpha, {});
    const double ratio = rows[0].t_max_total / rows[3].t_max_total;
    o.require(rows[0].agreement_pct == 100.0 && rows[1].agreement_pct == 100.0 &&
                  rows[3].agreement_pct < rows[2].agreement_pct && ratio >= 2.0,
              name(d) + " agreement " + num(rows[0].agreement_pct) + "/" +
                  num(rows[1].agreement_pct) + "/" + num(rows[2].agreement_pct) + "/" +
                  num(rows[3].agreement_pct) + " at zeta 0.5/0.1/0/-0.5, t_max ratio " + num(ratio));
  }
  return o;
}

Outcome jitter_robustness(const std::vector<Desk>& desks) {
  Outcome o;
  for (const Desk& d : desks) {
    if (d.model == ZooModel::Mlp) continue;
    const NoiseSweep sw =
        sweep_jitter(d.bundle.net, d.scaled, d.snn, d.bundle.eval, {0.0, 0.001}, 16, kSeed);
    const NoiseSummary& base = sw.summary[0];
    const NoiseSummary& j = sw.summary[1];
    const double gap = std::abs(j.mean - base.mean);
    o.require(gap <= j.std_error, name(d) + " noise-free " + num(base.mean) + "%, sd 0.001 mean " +
                                      num(j.mean) + "% (gap " + num(gap) + ", SE " +
                                      num(j.std_error) + ")");
  }
  return o;
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in),
                                                   std::istreambuf_iterator<char>()};
  }
  return files;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ttfs");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "ttfs_acceptance_determinism";
  const auto run_all = [&](const std::string& workers) {
    fs::remove_all(dir);
    const std::string m = (dir / "m").string();
    const std::vector<std::string> model{"--model", m + "/model.json", "--calibration",
                                         m + "/calibration.json", "--workers", workers};
    const auto with = [&](std::vector<std::string> a) {
      a.insert(a.end(), model.begin(), model.end());
      return a;
    };
    int rc = cli({"gen-model", "--model", "lenet", "--seed", "11", "--n-train", "300",
                  "--n-calibration", "200", "--n-eval", "200", "--out", m});
    rc |= cli(with({"convert", "--out", (dir / "conv").string()}));
    rc |= cli(with({"verify", "--data", m + "/eval.json", "--jitter-sd", "0.01", "--seed", "5",
                    "--dt-oracle", "1e-3", "--oracle-samples", "2", "--out",
                    (dir / "verify").string()})) > 1;
    rc |= cli(with({"sweep", "jitter", "--values", "0,0.01", "--trials", "3", "--seed", "5",
                    "--data", m + "/eval.json", "--out", (dir / "jitter").string()}));
    rc |= cli(with({"sweep", "alpha", "--values", "0.01", "--trials", "3", "--seed", "5",
                    "--data", m + "/eval.json", "--out", (dir / "alpha").string()}));
    rc |= cli(with({"sweep", "zeta", "--values", "0.5,-0.5", "--data", m + "/eval.json", "--out",
                    (dir / "zeta").string()}));
    rc |= cli(with({"trace", "--data", m + "/eval.json", "--index", "3", "--jitter-sd", "0.01",
                    "--out", (dir / "trace.txt").string()}));
    return std::make_pair(rc, read_tree(dir));
  };
  const auto [rc1, first] = run_all("1");
  const auto [rc2, second] = run_all("3");
  std::size_t differing = 0;
  for (const auto& [path, bytes] : first) {
    const auto it = second.find(path);
    differing += it == second.end() || it->second != bytes;
  }
  o.require(rc1 == 0 && rc2 == 0 && first.size() == second.size() && differing == 0,
            std::to_string(first.size()) + " files compared, " + std::to_string(differing) +
                " differ");
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> selected;
  std::vector<std::size_t> known_red;
  CLI::App app{"Acceptance criteria for the conversion pipeline"};
  app.add_option("criteria", selected, "Criterion numbers to run (default: all)")
      ->check(CLI::PositiveNumber);
  app.add_option("--known-red", known_red,
                 "Criteria whose failure is reported but does not fail the exit code")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    std::string title;
    std::function<Outcome()> check;
  };
  std::cout << "generating desk models (seed " << kSeed << ")\n" << std::flush;
  const std::vector<Desk> desks = make_desks();
  const std::vector<Criterion> criteria{
      {"exact agreement", [&] { return exact_agreement(desks); }},
      {"preprocessing is lossless", [&] { return phase_one_lossless(desks); }},
      {"decoded spike times equal ReLU outputs", [&] { return decoded_identity(desks); }},
      {"event-driven matches time-stepped", [&] { return oracle_equivalence(desks[0]); }},
      {"mapping variants agree", [&] { return variant_equivalence(desks); }},
      {"dynamic threshold realization", [&] { return dynamic_threshold(desks); }},
      {"sparse mode", [&] { return sparse_mode(desks); }},
      {"pooling units", [] { return pooling_units(); }},
      {"window factor sensitivity", [&] { return zeta_sensitivity(desks); }},
      {"spike jitter robustness", [&] { return jitter_robustness(desks); }},
      {"determinism", [] { return determinism(); }},
  };
  if (selected.empty()) {
    for (std::size_t i = 0; i < criteria.size(); ++i) selected.push_back(i + 1);
  }
  for (std::size_t n : selected) {
    if (n > criteria.size()) {
      std::cerr << "criterion " << n << " does not exist (1-" << criteria.size() << ")\n";
      return 2;
    }
  }
  std::size_t failed = 0;
  std::vector<std::size_t> unexpected;
  for (std::size_t n : selected) {
    const std::size_t i = n - 1;
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failed += !o.pass;
    if (!o.pass && std::find(known_red.begin(), known_red.end(), n) == known_red.end()) {
      unexpected.push_back(n);
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].title << ": "
              << o.detail << '\n'
              << std::flush;
  }
  std::cout << selected.size() - failed << "/" << selected.size() << " criteria passed\n";
  if (failed > unexpected.size()) {
    std::cout << failed - unexpected.size() << " failing criteria are listed as known red\n";
  }
  return unexpected.empty() ? 0 : 1;
}
