// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ttfs/convert.hpp"
#include "ttfs/model_io.hpp"
#include "ttfs/network.hpp"
#include "ttfs/preprocess.hpp"
#include "ttfs/snn_sim.hpp"

namespace ttfs {

struct Mismatch {
  std::size_t index = 0;
  std::size_t ann_class = 0;
  std::size_t snn_class = 0;

  friend bool operator==(const Mismatch&, const Mismatch&) = default;
};

struct AgreementReport {
  std::size_t n_samples = 0;
  std::size_t n_agree = 0;
  double agreement_pct = 0.0;
  std::optional<double> ann_accuracy_pct;
  std::optional<double> snn_accuracy_pct;
  /// Hidden neurons that fire before the t_max pulse, as a percentage of
  /// all hidden neurons over all samples.
  double spike_fraction_pct = 0.0;
  std::size_t natural_spikes = 0;
  std::size_t hidden_neurons = 0;
  std::size_t early_crossings = 0;
  std::vector<Mismatch> mismatches;

  friend bool operator==(const AgreementReport&, const AgreementReport&) = default;
};

/// Compares ReLU and spiking predictions sample by sample. `source` takes
/// samples in the dataset's own range; the spiking network sees them
/// normalized through `scaled`.
AgreementReport run_agreement(const ReluNetwork& source, const ScaledNetwork& scaled,
                              const SnnNetwork& snn, const Dataset& data,
                              const SimOptions& sim = {}, unsigned workers = 0);

/// Percentage of positive hidden activations of the scaled network over `data`.
double positive_activation_pct(const ScaledNetwork& scaled, const Dataset& data,
                               unsigned workers = 0);

struct ZetaRow {
  double zeta = 0.0;
  double agreement_pct = 0.0;
  std::optional<double> ann_accuracy_pct;
  std::optional<double> snn_accuracy_pct;
  /// End of the last hidden window, the total processing time.
  double t_max_total = 0.0;
  std::size_t early_crossings = 0;
};

/// Re-preprocesses and converts `source` for every zeta (calibrating on
/// `calibration`) and evaluates agreement on `eval`.
std::vector<ZetaRow> sweep_zeta(const ReluNetwork& source, const Dataset& calibration,
                                const Dataset& eval, const std::vector<double>& zetas,
                                const HyperParams& hyper, Variant variant, const SimOptions& sim,
                                unsigned workers = 0);

struct TrialRow {
  double sd = 0.0;
  std::size_t trial = 0;
  bool valid = true;
  std::size_t invalid_neurons = 0;
  double agreement_pct = 0.0;
  std::optional<double> accuracy_pct;
};

struct NoiseSummary {
  double sd = 0.0;
  std::size_t trials = 0;
  std::size_t invalid_trials = 0;
  /// Statistics over valid trials, of accuracy when labels exist and of
  /// agreement otherwise.
  double mean = 0.0;
  double stddev = 0.0;
  double std_error = 0.0;
};

struct NoiseSweep {
  std::vector<TrialRow> trials;
  std::vector<NoiseSummary> summary;
};

/// Spike-time jitter: `trials` seeded runs per SD.
NoiseSweep sweep_jitter(const ReluNetwork& source, const ScaledNetwork& scaled,
                        const SnnNetwork& snn, const Dataset& data, const std::vector<double>& sds,
                        std::size_t trials, std::uint64_t seed, const SimOptions& sim = {},
                        unsigned workers = 0);

/// Per-neuron slope offsets, frozen within a trial. Needs a fixed-alpha
/// network. Trials with a non-positive slope anywhere are kept and flagged.
NoiseSweep sweep_alpha_noise(const ReluNetwork& source, const ScaledNetwork& scaled,
                             const SnnNetwork& snn, const Dataset& data,
                             const std::vector<double>& sds, std::size_t trials,
                             std::uint64_t seed, const SimOptions& sim = {},
                             unsigned workers = 0);

/// Lines of "key = value" written as "# " comments ahead of every report.
using ReportHeader = std::vector<std::pair<std::string, std::string>>;

void write_agreement_csv(std::ostream& out, const AgreementReport& r, const ReportHeader& header);
void write_mismatches_csv(std::ostream& out, const AgreementReport& r, const ReportHeader& header);
void write_agreement_text(std::ostream& out, const AgreementReport& r, const ReportHeader& header);
/// Reads what write_agreement_csv and write_mismatches_csv produced.
AgreementReport read_agreement_csv(const std::filesystem::path& summary,
                                   const std::filesystem::path& mismatches);

void write_zeta_csv(std::ostream& out, const std::vector<ZetaRow>& rows, const ReportHeader& header);
void write_trials_csv(std::ostream& out, const NoiseSweep& sweep, const ReportHeader& header);
void write_noise_summary_csv(std::ostream& out, const NoiseSweep& sweep,
                             const ReportHeader& header);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace ttfs
