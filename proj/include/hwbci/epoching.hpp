#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "hwbci/recording.hpp"

namespace hwbci::epoching {

struct OnsetDetectorConfig {
  double speed_threshold_mm_per_s = 10.0;
  double sustain_ms = 30.0;
};

// First time inside [t0, t1] where pen speed (central differences) exceeds
// the threshold and stays above it for sustain_ms.
inline std::optional<double> detect_movement_onset(const Recording& pen, double t0, double t1,
                                                   const OnsetDetectorConfig& cfg = {}) {
  if (pen.n_channels() != 2)
    throw PipelineError("detect_movement_onset: pen recording must have exactly channels {x, y}");
  if (cfg.speed_threshold_mm_per_s <= 0 || cfg.sustain_ms <= 0)
    throw PipelineError("detect_movement_onset: config values must be > 0");
  if (t0 < pen.start_time_s || t1 > pen.end_time_s() || t0 >= t1)
    throw PipelineError("detect_movement_onset: window [" + std::to_string(t0) + ", " +
                        std::to_string(t1) + "] outside recording");

  const double fs = pen.sample_rate_hz;
  const double dt = 1.0 / fs;
  const long n = pen.n_samples();
  const long i0 = std::max<long>(1, static_cast<long>(std::ceil((t0 - pen.start_time_s) * fs)));
  const long i1 = std::min<long>(n - 2, static_cast<long>(std::floor((t1 - pen.start_time_s) * fs)));
  const long sustain = std::max<long>(1, static_cast<long>(std::lround(cfg.sustain_ms / 1000.0 * fs)));

  auto speed = [&](long i) {
    const double vx = (pen.samples(0, i + 1) - pen.samples(0, i - 1)) / (2 * dt);
    const double vy = (pen.samples(1, i + 1) - pen.samples(1, i - 1)) / (2 * dt);
    return std::hypot(vx, vy);
  };

  long run = 0;
  for (long i = i0; i <= i1; ++i) {
    if (speed(i) > cfg.speed_threshold_mm_per_s) {
      if (++run >= sustain) return pen.start_time_s + (i - run + 1) * dt;
    } else {
      run = 0;
    }
  }
  return std::nullopt;
}

enum class CenterRule { movement, cue };

// Movement rule: window starts at anchor - 200 ms.  Cue rule: window starts
// at the anchor.  Always 1000 ms of data.
inline Epoch extract_epoch(const Recording& eeg, CenterRule rule, double anchor_time_s, char label,
                           EpochSetting setting, double window_length_s = 1.0,
                           double pre_s = 0.2, const std::string& session_id = "") {
  const double start = (rule == CenterRule::movement) ? anchor_time_s - pre_s : anchor_time_s;
  const double fs = eeg.sample_rate_hz;
  const long win = static_cast<long>(std::lround(window_length_s * fs));
  const long first = static_cast<long>(std::lround((start - eeg.start_time_s) * fs));
  if (first < 0 || first + win > eeg.n_samples())
    throw PipelineError("extract_epoch: window for trial at anchor " + std::to_string(anchor_time_s) +
                        " s exceeds recording bounds");
  Epoch e;
  e.data = eeg.samples.middleCols(first, win);
  e.label = label;
  e.setting = setting;
  e.onset_time_s = anchor_time_s;
  e.session_id = session_id;
  return e;
}

struct BuildReport {
  int n_trials = 0;
  int n_epochs = 0;
  int n_dropped_no_onset = 0;
  int n_dropped_out_of_bounds = 0;
};

// One epoch per letter trial.  me_movement anchors on detected pen onsets
// (trials without one are dropped and counted); cue settings anchor on the
// fixation cross.  Labels come from the preceding letter cue.  Events must
// already be aligned to the EEG clock.
inline std::pair<EpochDataset, BuildReport> build_dataset(const Recording& eeg,
                                                          const Recording* pen,
                                                          const EventStream& events,
                                                          EpochSetting setting,
                                                          const OnsetDetectorConfig& onset_cfg = {},
                                                          const std::string& session_id = "") {
  if (setting == EpochSetting::me_movement && pen == nullptr)
    throw PipelineError("build_dataset: me-movement requires a pen stream");

  EpochDataset ds;
  ds.sample_rate_hz = eeg.sample_rate_hz;
  ds.channel_names = eeg.channel_names;
  BuildReport report;

  char pending_letter = 0;
  for (const auto& ev : events.events) {
    if (ev.kind == EventKind::letter_cue) {
      pending_letter = ev.label;
      continue;
    }
    if (ev.kind != EventKind::fixation_cue) continue;
    if (!pending_letter)
      throw PipelineError("build_dataset: fixation cue at t=" + std::to_string(ev.t_s) +
                          " s has no preceding letter cue");
    const char label = pending_letter;
    pending_letter = 0;
    report.n_trials++;

    double anchor = ev.t_s;
    CenterRule rule = CenterRule::cue;
    if (setting == EpochSetting::me_movement) {
      const double t1 = std::min(ev.t_s + 1.0, pen->end_time_s() - 2.0 / pen->sample_rate_hz);
      auto onset = detect_movement_onset(*pen, ev.t_s, t1, onset_cfg);
      if (!onset) {
        report.n_dropped_no_onset++;
        continue;
      }
      anchor = *onset;
      rule = CenterRule::movement;
    }
    try {
      ds.epochs.push_back(extract_epoch(eeg, rule, anchor, label, setting, 1.0, 0.2, session_id));
      report.n_epochs++;
    } catch (const PipelineError&) {
      report.n_dropped_out_of_bounds++;
    }
  }
  return {std::move(ds), report};
}

}  // namespace hwbci::epoching
