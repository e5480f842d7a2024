// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/verify.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ttfs/error.hpp"
#include "ttfs/forward.hpp"
#include "ttfs/parallel.hpp"

namespace ttfs {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

struct SampleResult {
  std::size_t ann = 0;
  std::size_t snn = 0;
  std::size_t natural = 0;
  std::size_t hidden = 0;
  std::size_t early = 0;
};

double pct(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

void require_samples(const Dataset& data) {
  if (data.samples.empty()) throw Error(ErrorKind::Data, "dataset has no samples");
}

}  // namespace

AgreementReport run_agreement(const ReluNetwork& source, const ScaledNetwork& scaled,
                              const SnnNetwork& snn, const Dataset& data, const SimOptions& sim,
                              unsigned workers) {
  require_samples(data);
  std::vector<SampleResult> results(data.samples.size());
  parallel_for(data.samples.size(), workers, [&](std::size_t s) {
    const Tensor& x = data.samples[s].input;
    SimOptions o = sim;
    o.sample_key = s;
    const SpikeTrace t = simulate_event(snn, normalize_sample(scaled, x), o);
    SampleResult& r = results[s];
    r.ann = predict(source, x);
    r.snn = argmax(t.potentials.data());
    r.natural = t.natural_spikes;
    r.hidden = t.hidden_neurons;
    r.early = t.early_crossings;
  });

  AgreementReport rep;
  rep.n_samples = results.size();
  const bool labeled = data.labeled();
  std::size_t ann_correct = 0;
  std::size_t snn_correct = 0;
  for (std::size_t s = 0; s < results.size(); ++s) {
    const SampleResult& r = results[s];
    if (r.ann == r.snn) ++rep.n_agree;
    else rep.mismatches.push_back({s, r.ann, r.snn});
    rep.natural_spikes += r.natural;
    rep.hidden_neurons += r.hidden;
    rep.early_crossings += r.early;
    if (labeled) {
      ann_correct += r.ann == *data.samples[s].label ? 1 : 0;
      snn_correct += r.snn == *data.samples[s].label ? 1 : 0;
    }
  }
  rep.agreement_pct = pct(rep.n_agree, rep.n_samples);
  rep.spike_fraction_pct = pct(rep.natural_spikes, rep.hidden_neurons);
  if (labeled) {
    rep.ann_accuracy_pct = pct(ann_correct, rep.n_samples);
    rep.snn_accuracy_pct = pct(snn_correct, rep.n_samples);
  }
  return rep;
}

double positive_activation_pct(const ScaledNetwork& scaled, const Dataset& data, unsigned workers) {
  require_samples(data);
  const auto hidden = hidden_layer_indices(scaled.net);
  std::vector<std::pair<std::size_t, std::size_t>> counts(data.samples.size());
  parallel_for(data.samples.size(), workers, [&](std::size_t s) {
    const ForwardResult r = relu_forward(scaled.net, normalize_sample(scaled, data.samples[s].input));
    std::size_t pos = 0;
    std::size_t total = 0;
    for (std::size_t k : hidden) {
      for (double a : r.activations[k].data()) pos += a > 0.0 ? 1 : 0;
      total += r.activations[k].size();
    }
    counts[s] = {pos, total};
  });
  std::size_t pos = 0;
  std::size_t total = 0;
  for (const auto& [p, t] : counts) {
    pos += p;
    total += t;
  }
  return pct(pos, total);
}

std::vector<ZetaRow> sweep_zeta(const ReluNetwork& source, const Dataset& calibration,
                                const Dataset& eval, const std::vector<double>& zetas,
                                const HyperParams& hyper, Variant variant, const SimOptions& sim,
                                unsigned workers) {
  require_samples(calibration);
  const ScaledNetwork base = preprocess(source, calibration.inputs(), hyper, workers);
  std::vector<ZetaRow> rows;
  for (double z : zetas) {
    ScaledNetwork scaled = base;
    scaled.hyper.zeta = z;
    check_hyper(scaled.hyper);
    const SnnNetwork snn = convert(scaled, variant);
    const AgreementReport rep = run_agreement(source, scaled, snn, eval, sim, workers);
    ZetaRow row;
    row.zeta = z;
    row.agreement_pct = rep.agreement_pct;
    row.ann_accuracy_pct = rep.ann_accuracy_pct;
    row.snn_accuracy_pct = rep.snn_accuracy_pct;
    row.t_max_total = snn.layers.back().t_max;
    row.early_crossings = rep.early_crossings;
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::vector<NoiseSummary> summarize(const std::vector<TrialRow>& rows,
                                    const std::vector<double>& sds) {
  std::vector<NoiseSummary> out;
  for (double sd : sds) {
    NoiseSummary s;
    s.sd = sd;
    std::vector<double> values;
    for (const TrialRow& r : rows) {
      if (r.sd != sd) continue;
      ++s.trials;
      if (!r.valid) {
        ++s.invalid_trials;
        continue;
      }
      values.push_back(r.accuracy_pct ? *r.accuracy_pct : r.agreement_pct);
    }
    if (!values.empty()) {
      double offset = 0.0;
      for (double v : values) offset += v - values.front();
      s.mean = values.front() + offset / static_cast<double>(values.size());
      if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
        s.std_error = s.stddev / std::sqrt(static_cast<double>(values.size()));
      }
    }
    out.push_back(s);
  }
  return out;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t sd_index, std::size_t trial) {
  return mix_seed(mix_seed(seed, sd_index), trial);
}

void check_sweep_args(const std::vector<double>& sds, std::size_t trials) {
  if (trials == 0) throw Error(ErrorKind::Usage, "need at least one trial");
  for (double sd : sds) {
    if (!(sd >= 0.0) || !std::isfinite(sd)) {
      throw Error(ErrorKind::Usage, "noise SDs must be finite and non-negative");
    }
  }
}

}  // namespace

NoiseSweep sweep_jitter(const ReluNetwork& source, const ScaledNetwork& scaled,
                        const SnnNetwork& snn, const Dataset& data, const std::vector<double>& sds,
                        std::size_t trials, std::uint64_t seed, const SimOptions& sim,
                        unsigned workers) {
  check_sweep_args(sds, trials);
  NoiseSweep sweep;
  for (std::size_t s = 0; s < sds.size(); ++s) {
    for (std::size_t t = 0; t < trials; ++t) {
      SimOptions o = sim;
      o.noise.jitter_sd = sds[s];
      o.noise.alpha_sd = 0.0;
      o.noise.seed = trial_seed(seed, s, t);
      const AgreementReport rep = run_agreement(source, scaled, snn, data, o, workers);
      TrialRow row;
      row.sd = sds[s];
      row.trial = t;
      row.agreement_pct = rep.agreement_pct;
      row.accuracy_pct = rep.snn_accuracy_pct;
      sweep.trials.push_back(row);
    }
  }
  sweep.summary = summarize(sweep.trials, sds);
  return sweep;
}

NoiseSweep sweep_alpha_noise(const ReluNetwork& source, const ScaledNetwork& scaled,
                             const SnnNetwork& snn, const Dataset& data,
                             const std::vector<double>& sds, std::size_t trials,
                             std::uint64_t seed, const SimOptions& sim, unsigned workers) {
  check_sweep_args(sds, trials);
  if (snn.variant != Variant::FixedAlpha) {
    throw Error(ErrorKind::Precondition, "slope noise is defined against the fixed_alpha variant",
                std::nullopt, "variant");
  }
  NoiseSweep sweep;
  for (std::size_t s = 0; s < sds.size(); ++s) {
    for (std::size_t t = 0; t < trials; ++t) {
      const PerturbedSlopes p = perturb_slopes(snn, sds[s], trial_seed(seed, s, t));
      SimOptions o = sim;
      o.noise.alpha_sd = 0.0;
      const AgreementReport rep = run_agreement(source, scaled, p.snn, data, o, workers);
      TrialRow row;
      row.sd = sds[s];
      row.trial = t;
      row.invalid_neurons = p.invalid_neurons;
      row.valid = p.invalid_neurons == 0;
      row.agreement_pct = rep.agreement_pct;
      row.accuracy_pct = rep.snn_accuracy_pct;
      sweep.trials.push_back(row);
    }
  }
  sweep.summary = summarize(sweep.trials, sds);
  return sweep;
}

namespace {

void write_header(std::ostream& out, const ReportHeader& header) {
  for (const auto& [k, v] : header) out << "# " << k << " = " << v << '\n';
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

void write_agreement_csv(std::ostream& out, const AgreementReport& r, const ReportHeader& header) {
  write_header(out, header);
  out << "metric,value\n";
  out << "n_samples," << r.n_samples << '\n';
  out << "n_agree," << r.n_agree << '\n';
  out << "agreement_pct," << format_double(r.agreement_pct) << '\n';
  out << "ann_accuracy_pct," << opt(r.ann_accuracy_pct) << '\n';
  out << "snn_accuracy_pct," << opt(r.snn_accuracy_pct) << '\n';
  out << "spike_fraction_pct," << format_double(r.spike_fraction_pct) << '\n';
  out << "natural_spikes," << r.natural_spikes << '\n';
  out << "hidden_neurons," << r.hidden_neurons << '\n';
  out << "early_crossings," << r.early_crossings << '\n';
  out << "mismatches," << r.mismatches.size() << '\n';
}

void write_mismatches_csv(std::ostream& out, const AgreementReport& r, const ReportHeader& header) {
  write_header(out, header);
  out << "index,ann_class,snn_class\n";
  for (const Mismatch& m : r.mismatches) {
    out << m.index << ',' << m.ann_class << ',' << m.snn_class << '\n';
  }
}

void write_agreement_text(std::ostream& out, const AgreementReport& r, const ReportHeader& header) {
  write_header(out, header);
  out << "samples          " << r.n_samples << '\n';
  out << "agreement        " << format_double(r.agreement_pct) << " % (" << r.n_agree << '/'
      << r.n_samples << ")\n";
  if (r.ann_accuracy_pct) out << "relu accuracy    " << format_double(*r.ann_accuracy_pct) << " %\n";
  if (r.snn_accuracy_pct) out << "snn accuracy     " << format_double(*r.snn_accuracy_pct) << " %\n";
  out << "spike fraction   " << format_double(r.spike_fraction_pct) << " %\n";
  out << "early crossings  " << r.early_crossings << '\n';
  for (const Mismatch& m : r.mismatches) {
    out << "mismatch sample " << m.index << ": relu " << m.ann_class << ", snn " << m.snn_class
        << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Format, "not a number: '" + s + "'");
  }
  return v;
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Format, "not a count: '" + s + "'");
  }
  return v;
}

}  // namespace

AgreementReport read_agreement_csv(const std::filesystem::path& summary,
                                   const std::filesystem::path& mismatches) {
  AgreementReport r;
  for (const auto& row : read_csv_rows(summary)) {
    if (row.size() != 2) throw Error(ErrorKind::Format, "expected metric,value rows");
    const std::string& k = row[0];
    const std::string& v = row[1];
    if (k == "n_samples") r.n_samples = parse_size(v);
    else if (k == "n_agree") r.n_agree = parse_size(v);
    else if (k == "agreement_pct") r.agreement_pct = parse_double(v);
    else if (k == "ann_accuracy_pct") r.ann_accuracy_pct = v.empty() ? std::nullopt : std::optional(parse_double(v));
    else if (k == "snn_accuracy_pct") r.snn_accuracy_pct = v.empty() ? std::nullopt : std::optional(parse_double(v));
    else if (k == "spike_fraction_pct") r.spike_fraction_pct = parse_double(v);
    else if (k == "natural_spikes") r.natural_spikes = parse_size(v);
    else if (k == "hidden_neurons") r.hidden_neurons = parse_size(v);
    else if (k == "early_crossings") r.early_crossings = parse_size(v);
  }
  for (const auto& row : read_csv_rows(mismatches)) {
    if (row.size() != 3) throw Error(ErrorKind::Format, "expected index,ann_class,snn_class rows");
    r.mismatches.push_back({parse_size(row[0]), parse_size(row[1]), parse_size(row[2])});
  }
  return r;
}

void write_zeta_csv(std::ostream& out, const std::vector<ZetaRow>& rows, const ReportHeader& header) {
  write_header(out, header);
  out << "zeta,agreement_pct,ann_accuracy_pct,snn_accuracy_pct,t_max_total,early_crossings\n";
  for (const ZetaRow& r : rows) {
    out << format_double(r.zeta) << ',' << format_double(r.agreement_pct) << ','
        << opt(r.ann_accuracy_pct) << ',' << opt(r.snn_accuracy_pct) << ','
        << format_double(r.t_max_total) << ',' << r.early_crossings << '\n';
  }
}

void write_trials_csv(std::ostream& out, const NoiseSweep& sweep, const ReportHeader& header) {
  write_header(out, header);
  out << "sd,trial,valid,invalid_neurons,agreement_pct,accuracy_pct\n";
  for (const TrialRow& r : sweep.trials) {
    out << format_double(r.sd) << ',' << r.trial << ',' << (r.valid ? 1 : 0) << ','
        << r.invalid_neurons << ',' << format_double(r.agreement_pct) << ','
        << opt(r.accuracy_pct) << '\n';
  }
}

void write_noise_summary_csv(std::ostream& out, const NoiseSweep& sweep,
                             const ReportHeader& header) {
  write_header(out, header);
  out << "sd,trials,invalid_trials,mean,stddev,std_error\n";
  for (const NoiseSummary& s : sweep.summary) {
    out << format_double(s.sd) << ',' << s.trials << ',' << s.invalid_trials << ','
        << format_double(s.mean) << ',' << format_double(s.stddev) << ','
        << format_double(s.std_error) << '\n';
  }
}

}  // namespace ttfs
