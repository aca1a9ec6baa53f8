#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hwbci/recording.hpp"

namespace hwbci::synchro {

struct SpikeTrain {
  std::string clock_domain;
  std::vector<double> spike_times_s;  // strictly increasing
};

struct AlignmentReport {
  struct Correction {
    double original_t = 0.0;
    double matched_spike_t = 0.0;
    double offset_s = 0.0;
  };
  std::vector<Correction> corrections;
  double max_abs_offset_s = 0.0;
};

// Rising-edge threshold crossings with debounce suppression.  Operates on the
// raw amplifier-rate stream; filters would smear the edges.
inline SpikeTrain detect_spikes(const Recording& photodiode, double threshold, double debounce_s) {
  if (photodiode.n_channels() != 1)
    throw PipelineError("detect_spikes: expected a single-channel recording, got " +
                        std::to_string(photodiode.n_channels()));
  if (threshold <= 0 || debounce_s <= 0)
    throw PipelineError("detect_spikes: threshold and debounce must be > 0");

  SpikeTrain train;
  train.clock_domain = photodiode.clock_domain;
  const double dt = 1.0 / photodiode.sample_rate_hz;
  double last_spike = -std::numeric_limits<double>::infinity();
  for (long s = 1; s < photodiode.n_samples(); ++s) {
    const bool rising = photodiode.samples(0, s - 1) < threshold && photodiode.samples(0, s) >= threshold;
    if (!rising) continue;
    const double t = photodiode.start_time_s + s * dt;
    if (t - last_spike < debounce_s) continue;
    train.spike_times_s.push_back(t);
    last_spike = t;
  }
  return train;
}

// One-to-one greedy nearest-spike matching in time order; a spike absorbs at
// most one event, ties break to the earlier spike.  Every event must find a
// spike within max_dist_s (a miss signals a dropped flash).
inline std::pair<EventStream, AlignmentReport> align_events(const EventStream& events,
                                                            const SpikeTrain& spikes,
                                                            double max_dist_s = 0.2) {
  if (events.events.empty()) throw PipelineError("align_events: empty event stream");
  if (spikes.spike_times_s.empty()) throw PipelineError("align_events: empty spike train");
  if (max_dist_s <= 0) throw PipelineError("align_events: max_dist_s must be > 0");

  EventStream out = events;
  out.clock_domain = spikes.clock_domain;
  AlignmentReport report;

  size_t next_free_spike = 0;
  for (size_t i = 0; i < out.events.size(); ++i) {
    Event& e = out.events[i];
    // nearest unconsumed spike; <= prefers the earlier spike on ties
    size_t best = next_free_spike;
    bool found = false;
    for (size_t s = next_free_spike; s < spikes.spike_times_s.size(); ++s) {
      const double d = std::abs(spikes.spike_times_s[s] - e.t_s);
      if (!found || d < std::abs(spikes.spike_times_s[best] - e.t_s)) {
        best = s;
        found = true;
      }
      if (spikes.spike_times_s[s] > e.t_s + max_dist_s) break;
    }
    if (!found || std::abs(spikes.spike_times_s[best] - e.t_s) > max_dist_s)
      throw PipelineError("align_events: no spike within " + std::to_string(max_dist_s) +
                          " s of event #" + std::to_string(i) + " (" + to_string(e.kind) +
                          " at t=" + std::to_string(e.t_s) + " s); likely a missed flash");
    const double matched = spikes.spike_times_s[best];
    report.corrections.push_back({e.t_s, matched, matched - e.t_s});
    report.max_abs_offset_s = std::max(report.max_abs_offset_s, std::abs(matched - e.t_s));
    e.t_s = matched;
    next_free_spike = best + 1;
  }
  out.sort_stable();
  return {std::move(out), std::move(report)};
}

}  // namespace hwbci::synchro
