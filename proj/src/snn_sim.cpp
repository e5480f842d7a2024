// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/snn_sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "ttfs/error.hpp"
#include "ttfs/forward.hpp"

namespace ttfs {

const char* to_string(ThresholdMode mode) {
  return mode == ThresholdMode::Strict ? "strict" : "constant";
}

ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "strict") return ThresholdMode::Strict;
  if (s == "constant") return ThresholdMode::Constant;
  throw Error(ErrorKind::Usage, "unknown threshold mode '" + s + "' (strict, constant)");
}

std::vector<double> encode_input(const Tensor& x) {
  constexpr double kSlack = 1e-12;
  std::vector<double> t(x.size());
  const auto d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = d[i];
    if (!(v >= -kSlack && v <= 1.0 + kSlack)) {
      throw Error(ErrorKind::Data, "input value " + std::to_string(v) + " at index " +
                                       std::to_string(i) + " lies outside [0, 1]");
    }
    t[i] = 1.0 - std::clamp(v, 0.0, 1.0 - kSlack);
  }
  return t;
}

namespace {

struct Event {
  double t;
  double w;
};

// Spikes of the stage feeding the current layer.
struct Stage {
  const std::vector<double>* times;
  const std::vector<std::uint8_t>* emitted;
  const std::vector<std::uint8_t>* forced;
  double t_min;
  double t_max;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::optional<std::size_t> pool_unit_trigger(std::span<const double> arrivals,
                                             const PoolUnitParams& unit) {
  std::vector<std::size_t> order(arrivals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return arrivals[a] < arrivals[b]; });
  double v = 0.0;
  for (std::size_t j : order) {
    v += unit.k;
    if (v >= unit.theta) return j;
  }
  return std::nullopt;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

namespace {

// Collects the timed inputs of every neuron of a Dense/Conv2d stage.
// Silent presynaptic units and zero-padded taps act as inputs arriving at
// the close of the presynaptic window; they are merged into one event.
class InputGatherer {
 public:
  InputGatherer(const SnnLayer& layer, const Stage& stage) : layer_(layer), stage_(stage) {}

  // Events for `neuron`, sorted by time wherever they fall after `settled`.
  const std::vector<Event>& gather(std::size_t neuron, double settled) {
    events_.clear();
    double catch_up = 0.0;
    bool has_catch_up = false;
    const auto& times = *stage_.times;
    const auto& emitted = *stage_.emitted;
    const auto w = layer_.weights.data();
    if (layer_.geometry == LayerKind::Dense) {
      const std::size_t in = layer_.weights.dim(1);
      const double* row = w.data() + neuron * in;
      for (std::size_t j = 0; j < in; ++j) {
        if (emitted[j]) {
          events_.push_back({times[j], row[j]});
        } else {
          catch_up += row[j];
          has_catch_up = true;
        }
      }
    } else {
      const auto& m = layer_.conv;
      const std::size_t in_ch = layer_.weights.dim(1);
      const std::size_t ih = layer_.in_shape[1];
      const std::size_t iw = layer_.in_shape[2];
      const std::size_t oh = layer_.out_shape[1];
      const std::size_t ow = layer_.out_shape[2];
      const std::size_t k = neuron / (oh * ow);
      const std::size_t oy = (neuron / ow) % oh;
      const std::size_t ox = neuron % ow;
      for (std::size_t c = 0; c < in_ch; ++c) {
        for (std::size_t dy = 0; dy < m.kernel_h; ++dy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * m.stride + dy) -
                          static_cast<std::ptrdiff_t>(m.pad_top);
          for (std::size_t dx = 0; dx < m.kernel_w; ++dx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * m.stride + dx) -
                            static_cast<std::ptrdiff_t>(m.pad_left);
            const double wj = w[((k * in_ch + c) * m.kernel_h + dy) * m.kernel_w + dx];
            const bool inside = iy >= 0 && iy < static_cast<std::ptrdiff_t>(ih) && ix >= 0 &&
                                ix < static_cast<std::ptrdiff_t>(iw);
            if (inside) {
              const std::size_t j =
                  (c * ih + static_cast<std::size_t>(iy)) * iw + static_cast<std::size_t>(ix);
              if (emitted[j]) {
                events_.push_back({times[j], wj});
                continue;
              }
            }
            catch_up += wj;
            has_catch_up = true;
          }
        }
      }
    }
    if (has_catch_up) events_.push_back({stage_.t_max, catch_up});
    // Arrivals up to `settled` are summed without regard to order, so only
    // later ones need sorting.
    const bool late = std::any_of(events_.begin(), events_.end(),
                                  [&](const Event& e) { return e.t > settled; });
    if (late) {
      std::stable_sort(events_.begin(), events_.end(),
                       [](const Event& a, const Event& b) { return a.t < b.t; });
    }
    return events_;
  }

 private:
  const SnnLayer& layer_;
  const Stage& stage_;
  std::vector<Event> events_;
};

struct Crossing {
  double t = 0.0;
  bool forced = false;
  bool early = false;
};

struct NeuronParams {
  double alpha;
  double theta;
  double t_min_prev;
  double t_min;
  double t_max;
};

// Neumaier summation, so the result barely depends on term order.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Finds the first threshold crossing of a piecewise-linear potential by
// scanning the segments between input arrivals.
Crossing solve_crossing(const std::vector<Event>& events, const NeuronParams& p,
                        ThresholdMode mode, Realization realization) {
  const bool drive = realization == Realization::Drive;
  const double t0 = mode == ThresholdMode::Strict ? p.t_min : p.t_min_prev;
  // Potential (or synaptic potential) is slope * t - offset.
  CompensatedSum slope_sum;
  CompensatedSum offset_sum;
  const double alpha_offset = p.alpha * p.t_min_prev;
  if (drive) {
    slope_sum.add(p.alpha);
    offset_sum.add(alpha_offset);
  }
  double slope = slope_sum.value();
  double offset = offset_sum.value();
  std::size_t idx = 0;
  auto absorb_until = [&](double t) {
    while (idx < events.size() && events[idx].t <= t) {
      slope_sum.add(events[idx].w);
      offset_sum.add(events[idx].w * events[idx].t);
      ++idx;
    }
    slope = slope_sum.value();
    offset = offset_sum.value();
  };
  auto above = [&](double t, bool strictly) {
    const double v = slope * t - offset;
    const double th = drive ? p.theta : p.theta - p.alpha * (t - p.t_min_prev);
    return strictly ? v > th : v >= th;
  };
  auto root = [&]() {
    if (drive) {
      CompensatedSum num = offset_sum;
      num.add(p.theta);
      return num.value() / slope;
    }
    CompensatedSum num = offset_sum;
    num.add(alpha_offset);
    num.add(p.theta);
    CompensatedSum den = slope_sum;
    den.add(p.alpha);
    return num.value() / den.value();
  };
  auto rising = [&]() {
    if (drive) return slope > 0.0;
    CompensatedSum den = slope_sum;
    den.add(p.alpha);
    return den.value() > 0.0;
  };

  absorb_until(t0);
  double t = t0;
  if (above(t, false)) {
    return {t, false, mode == ThresholdMode::Strict ? above(t, true) : t < p.t_min};
  }
  for (;;) {
    const double next = idx < events.size() ? events[idx].t : std::numeric_limits<double>::infinity();
    const double seg_end = std::min(next, p.t_max);
    if (rising()) {
      const double r = root();
      if (r <= seg_end) {
        const double tc = std::max(r, t);
        return {tc, false, mode == ThresholdMode::Constant && tc < p.t_min};
      }
    }
    if (seg_end >= p.t_max) break;
    t = next;
    absorb_until(t);
    if (above(t, false)) {
      return {t, false, mode == ThresholdMode::Constant && t < p.t_min};
    }
  }
  return {p.t_max, true, false};
}

double slope_sum(const std::vector<Event>& events, double alpha) {
  double s = alpha;
  for (const Event& e : events) s += e.w;
  return s;
}

// Relays the first (max) or last (min) input spike of each window.
void run_pool(const SnnLayer& l, const Stage& stage, LayerTrace& out) {
  const std::size_t ch = l.in_shape[0];
  const std::size_t ih = l.in_shape[1];
  const std::size_t iw = l.in_shape[2];
  const std::size_t oh = l.out_shape[1];
  const std::size_t ow = l.out_shape[2];
  const std::size_t n = ch * oh * ow;
  out.times.assign(n, l.t_max);
  out.forced.assign(n, 1);
  out.emitted.assign(n, 0);
  std::vector<std::size_t> window;
  std::vector<double> arrivals;
  for (std::size_t c = 0; c < ch; ++c) {
    const PoolUnitParams unit{l.pool.modes[c] == PoolMode::Max ? l.pool_k_max : l.pool_k_min,
                              l.pool_theta};
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        window.clear();
        arrivals.clear();
        for (std::size_t dy = 0; dy < l.pool.window; ++dy) {
          for (std::size_t dx = 0; dx < l.pool.window; ++dx) {
            const std::size_t j = (c * ih + oy * l.pool.stride + dy) * iw + ox * l.pool.stride + dx;
            if ((*stage.emitted)[j]) {
              window.push_back(j);
              arrivals.push_back((*stage.times)[j]);
            }
          }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        if (const auto hit = pool_unit_trigger(arrivals, unit)) {
          const std::size_t j = window[*hit];
          out.times[o] = (*stage.times)[j];
          out.forced[o] = (*stage.forced)[j];
          out.emitted[o] = 1;
        }
      }
    }
  }
}

Tensor readout_potentials(const SnnLayer& l, const Stage& stage) {
  const std::size_t out = l.weights.dim(0);
  const std::size_t in = l.weights.dim(1);
  const auto w = l.weights.data();
  Tensor v(l.out_shape);
  for (std::size_t i = 0; i < out; ++i) {
    double acc = l.alpha[i] * (l.t_max - l.t_min_prev);
    for (std::size_t j = 0; j < in; ++j) {
      if (!(*stage.emitted)[j]) continue;
      const double tj = (*stage.times)[j];
      if (tj < l.t_max) acc += w[i * in + j] * (l.t_max - tj);
    }
    v[i] = acc;
  }
  return v;
}

Stage stage_of(const SpikeTrace& trace, const SnnNetwork& snn, std::size_t k,
               const std::vector<std::uint8_t>& all_emitted, const std::vector<std::uint8_t>& none) {
  if (k == 0) return {&trace.input_times, &all_emitted, &none, 0.0, 1.0};
  const LayerTrace& prev = trace.layers[k - 1];
  const SnnLayer& l = snn.layers[k - 1];
  return {&prev.times, &prev.emitted, &prev.forced, l.t_min, l.t_max};
}

void check_input(const SnnNetwork& snn, const Tensor& input) {
  if (input.shape() != snn.input_shape) {
    throw Error(ErrorKind::Shape,
                "input shape " + shape_to_string(input.shape()) + " does not match network input " +
                    shape_to_string(snn.input_shape),
                0);
  }
}

}  // namespace

PerturbedSlopes perturb_slopes(const SnnNetwork& snn, double sd, std::uint64_t seed) {
  if (!(sd >= 0.0)) throw Error(ErrorKind::Usage, "slope noise SD must be non-negative");
  PerturbedSlopes r{snn, 0};
  std::mt19937_64 rng(mix_seed(seed, 0x736c6f7065ULL));
  std::normal_distribution<double> noise(0.0, sd > 0.0 ? sd : 1.0);
  for (std::size_t k : neuron_layer_indices(r.snn)) {
    SnnLayer& l = r.snn.layers[k];
    if (sd > 0.0) {
      for (double& a : l.alpha.data()) a += noise(rng);
    }
    const Tensor slope = slope_after_arrivals(r.snn, k);
    for (double s : slope.data()) {
      if (!(s > 0.0)) ++r.invalid_neurons;
    }
  }
  return r;
}

SpikeTrace simulate_event(const SnnNetwork& snn, const Tensor& input, const SimOptions& options) {
  const NoiseSpec& noise = options.noise;
  if (!(noise.jitter_sd >= 0.0) || !(noise.alpha_sd >= 0.0)) {
    throw Error(ErrorKind::Usage, "noise SDs must be non-negative");
  }
  if (noise.alpha_sd > 0.0) {
    const PerturbedSlopes p = perturb_slopes(snn, noise.alpha_sd, noise.seed);
    SimOptions o = options;
    o.noise.alpha_sd = 0.0;
    return simulate_event(p.snn, input, o);
  }
  check_input(snn, input);

  std::mt19937_64 rng(mix_seed(noise.seed, options.sample_key));
  std::normal_distribution<double> jitter(0.0, noise.jitter_sd > 0.0 ? noise.jitter_sd : 1.0);
  const bool jittered = noise.jitter_sd > 0.0;

  SpikeTrace trace;
  trace.input_times = encode_input(input);
  if (jittered) {
    for (double& t : trace.input_times) t += jitter(rng);
  }
  const std::vector<std::uint8_t> all_emitted(trace.input_times.size(), 1);
  const std::vector<std::uint8_t> none(trace.input_times.size(), 0);
  trace.layers.resize(snn.layers.size());

  for (std::size_t k = 0; k < snn.layers.size(); ++k) {
    const SnnLayer& l = snn.layers[k];
    const Stage stage = stage_of(trace, snn, k, all_emitted, none);
    LayerTrace& out = trace.layers[k];
    switch (l.kind) {
      case SnnLayerKind::Flatten:
        out.times = *stage.times;
        out.forced = *stage.forced;
        out.emitted = *stage.emitted;
        break;
      case SnnLayerKind::Pool:
        run_pool(l, stage, out);
        break;
      case SnnLayerKind::Readout:
        trace.potentials = readout_potentials(l, stage);
        break;
      case SnnLayerKind::Neuron: {
        const std::size_t n = shape_size(l.out_shape);
        out.times.resize(n);
        out.forced.resize(n);
        out.emitted.resize(n);
        const double settled = options.mode == ThresholdMode::Strict ? l.t_min : l.t_min_prev;
        InputGatherer gather(l, stage);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& events = gather.gather(i, settled);
          const NeuronParams p{l.alpha[i], l.threshold[i], l.t_min_prev, l.t_min, l.t_max};
          if (!(slope_sum(events, p.alpha) > 0.0)) ++trace.invalid_neurons;
          const Crossing c = solve_crossing(events, p, options.mode, options.realization);
          const bool emit = !(options.sparse && c.forced);
          out.times[i] = emit && jittered ? c.t + jitter(rng) : c.t;
          out.forced[i] = c.forced;
          out.emitted[i] = emit;
          trace.hidden_neurons += 1;
          trace.natural_spikes += c.forced ? 0 : 1;
          trace.emitted_spikes += emit ? 1 : 0;
          trace.early_crossings += c.early ? 1 : 0;
        }
        break;
      }
    }
  }
  return trace;
}

SpikeTrace simulate_stepped(const SnnNetwork& snn, const Tensor& input, double dt,
                            ThresholdMode mode) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::Usage, "dt must be positive");
  check_input(snn, input);
  SpikeTrace trace;
  trace.input_times = encode_input(input);
  const std::vector<std::uint8_t> all_emitted(trace.input_times.size(), 1);
  const std::vector<std::uint8_t> none(trace.input_times.size(), 0);
  trace.layers.resize(snn.layers.size());

  for (std::size_t k = 0; k < snn.layers.size(); ++k) {
    const SnnLayer& l = snn.layers[k];
    const Stage stage = stage_of(trace, snn, k, all_emitted, none);
    LayerTrace& out = trace.layers[k];
    switch (l.kind) {
      case SnnLayerKind::Flatten:
        out.times = *stage.times;
        out.forced = *stage.forced;
        out.emitted = *stage.emitted;
        break;
      case SnnLayerKind::Pool:
        run_pool(l, stage, out);
        break;
      case SnnLayerKind::Readout: {
        // Euler up to the last grid point before t_max, then the remainder.
        const std::size_t n = l.weights.dim(0);
        const std::size_t in = l.weights.dim(1);
        const auto w = l.weights.data();
        trace.potentials = Tensor(l.out_shape);
        std::vector<Event> events;
        for (std::size_t j = 0; j < in; ++j) events.push_back({(*stage.times)[j], 0.0});
        std::vector<std::size_t> order(in);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return events[a].t < events[b].t; });
        for (std::size_t i = 0; i < n; ++i) {
          const double start = std::min(l.t_min_prev, in ? events[order[0]].t : l.t_min_prev);
          auto step = static_cast<std::int64_t>(std::floor(start / dt));
          double v = 0.0;
          double current = 0.0;
          bool drive_on = false;
          std::size_t idx = 0;
          for (;; ++step) {
            const double t = static_cast<double>(step) * dt;
            while (idx < in && events[order[idx]].t < t) {
              current += w[i * in + order[idx]];
              ++idx;
            }
            if (!drive_on && l.t_min_prev < t) {
              current += l.alpha[i];
              drive_on = true;
            }
            const double t_next = static_cast<double>(step + 1) * dt;
            if (t_next >= l.t_max) {
              v += current * (l.t_max - t);
              break;
            }
            v += current * dt;
          }
          trace.potentials[i] = v;
        }
        break;
      }
      case SnnLayerKind::Neuron: {
        const std::size_t n = shape_size(l.out_shape);
        out.times.resize(n);
        out.forced.resize(n);
        out.emitted.assign(n, 1);
        InputGatherer gather(l, stage);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& events = gather.gather(i, -std::numeric_limits<double>::infinity());
          const double alpha = l.alpha[i];
          const double theta = l.threshold[i];
          const double start = std::min(l.t_min_prev, events.empty() ? l.t_min_prev : events.front().t);
          auto step = static_cast<std::int64_t>(std::floor(start / dt));
          double v = 0.0;
          double current = 0.0;
          bool drive_on = false;
          std::size_t idx = 0;
          double fired = l.t_max;
          bool forced = true;
          for (;; ++step) {
            const double t = static_cast<double>(step) * dt;
            if (t > l.t_max) break;
            const bool open = mode == ThresholdMode::Constant || t >= l.t_min;
            if (open && v >= theta) {
              fired = t;
              forced = false;
              break;
            }
            while (idx < events.size() && events[idx].t < t) {
              current += events[idx].w;
              ++idx;
            }
            if (!drive_on && l.t_min_prev < t) {
              current += alpha;
              drive_on = true;
            }
            v += current * dt;
          }
          out.times[i] = fired;
          out.forced[i] = forced;
          trace.hidden_neurons += 1;
          trace.natural_spikes += forced ? 0 : 1;
          trace.emitted_spikes += 1;
        }
        break;
      }
    }
  }
  return trace;
}

Tensor decode(const SpikeTrace& trace, const SnnNetwork& snn, std::size_t layer) {
  if (layer >= snn.layers.size() || snn.layers[layer].kind == SnnLayerKind::Readout) {
    throw Error(ErrorKind::Precondition, "layer has no spikes to decode", layer);
  }
  const SnnLayer& l = snn.layers[layer];
  const LayerTrace& lt = trace.layers.at(layer);
  Tensor x(l.out_shape);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = lt.forced[i] ? 0.0 : l.t_max - lt.times[i];
  return x;
}

std::size_t snn_predict(const SnnNetwork& snn, const Tensor& input, const SimOptions& options) {
  return argmax(simulate_event(snn, input, options).potentials.data());
}

void write_trace(std::ostream& out, const SpikeTrace& trace, const SnnNetwork& snn) {
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::setprecision(17);
  out << "ttfs-trace 1\n";
  out << "input units " << trace.input_times.size() << " t_min 0 t_max 1\n";
  for (std::size_t i = 0; i < trace.input_times.size(); ++i) {
    out << i << ' ' << trace.input_times[i] << " N\n";
  }
  for (std::size_t k = 0; k < snn.layers.size(); ++k) {
    const SnnLayer& l = snn.layers[k];
    if (l.kind == SnnLayerKind::Readout) {
      out << "readout layer " << k << " units " << trace.potentials.size() << " t_max " << l.t_max
          << '\n';
      for (std::size_t i = 0; i < trace.potentials.size(); ++i) {
        out << i << ' ' << trace.potentials[i] << '\n';
      }
      continue;
    }
    const char* kind = l.kind == SnnLayerKind::Neuron ? "neuron"
                       : l.kind == SnnLayerKind::Pool ? "pool"
                                                      : "flatten";
    const LayerTrace& lt = trace.layers[k];
    out << kind << " layer " << k << " units " << lt.times.size() << " t_min " << l.t_min
        << " t_max " << l.t_max << '\n';
    for (std::size_t i = 0; i < lt.times.size(); ++i) {
      const char flag = !lt.emitted[i] ? 'S' : lt.forced[i] ? 'F' : 'N';
      out << i << ' ' << lt.times[i] << ' ' << flag << '\n';
    }
  }
  out.flags(old_flags);
  out.precision(old_precision);
}

}  // namespace ttfs
