#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hwbci/dataio.hpp"
#include "hwbci/epoching.hpp"
#include "hwbci/evalharness.hpp"
#include "hwbci/sigproc.hpp"
#include "hwbci/synchro.hpp"

namespace hwbci::synthgen {

struct ArtifactSpec {
  bool enabled = false;
  bool class_correlated = false;
  double amplitude = 3.0;  // artifact RMS / noise RMS at Fp1
};

struct SynthSpec {
  int n_trials = 400;
  double sample_rate_hz = 1000.0;
  double pen_rate_hz = 200.0;
  double snr = 0.5;  // template RMS / noise RMS at the most-loaded channel
  double jitter_lo_s = 0.05;  // cue-to-movement delay
  double jitter_hi_s = 0.35;
  ArtifactSpec artifact;
  double max_latency_s = 0.08;  // per-event stream offset
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trials < 4 || n_trials % 4 != 0)
      throw PipelineError("SynthSpec: n_trials must be a positive multiple of 4");
    if (snr <= 0) throw PipelineError("SynthSpec: snr must be > 0");
    if (!(0 <= jitter_lo_s && jitter_lo_s <= jitter_hi_s && jitter_hi_s <= 1.0))
      throw PipelineError("SynthSpec: jitter range must lie within the 1.0 s writing window");
    if (max_latency_s < 0) throw PipelineError("SynthSpec: max_latency_s must be >= 0");
  }
};

struct TrialTruth {
  char letter = 0;
  double t_letter_cue_s = 0.0;
  double t_fixation_s = 0.0;
  double t_onset_s = 0.0;  // true pen movement onset
};

struct GroundTruth {
  std::vector<TrialTruth> trials;
  Recording artifact_timecourse;     // single channel, amplifier clock
  Eigen::VectorXd template_spatial;  // loading of the letter templates (32)
  Eigen::VectorXd artifact_spatial;  // loading of the artifact (32)
  double noise_rms_at_loaded = 0.0;
  double template_rms_at_loaded = 0.0;  // achieved SNR = template / noise
};

struct SynthSession {
  Recording eeg;  // 32 montage channels + PD_MONITOR + PD_TABLET
  Recording pen;  // channels {x, y}, millimeters
  EventStream events;
  GroundTruth truth;
};

namespace detail {

// Voss-McCartney pink noise, 16 rows plus a white floor handled by the caller.
class PinkNoise {
public:
  explicit PinkNoise(std::uint64_t seed) : rng_(seed) {
    for (auto& r : rows_) r = uni_(rng_);
  }
  double next() {
    ++counter_;
    const int row = std::countr_zero(counter_) % kRows;
    rows_[static_cast<size_t>(row)] = uni_(rng_);
    double sum = 0;
    for (double r : rows_) sum += r;
    return sum / kRows;
  }

private:
  static constexpr int kRows = 16;
  Rng rng_;
  std::uniform_real_distribution<double> uni_{-1.0, 1.0};
  double rows_[kRows] = {};
  std::uint64_t counter_ = 0;
};

inline Eigen::VectorXd bandlimited_waveform(int n, double fs, double low_hz, double high_hz,
                                            Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(static_cast<size_t>(n));
  for (auto& v : x) v = gauss(rng);
  sigproc::SosCascade c;
  for (double q : sigproc::butterworth4_q())
    c.sections.push_back(sigproc::butter_highpass_section(low_hz, fs, q));
  for (double q : sigproc::butterworth4_q())
    c.sections.push_back(sigproc::butter_lowpass_section(high_hz, fs, q));
  sigproc::filtfilt_inplace(c, x);
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (n - 1)));  // Hann
    out(i) = x[static_cast<size_t>(i)] * w;
  }
  const double rms = std::sqrt(out.squaredNorm() / n);
  if (rms > 0) out /= rms;
  return out;
}

// Idealized single-stroke letter paths in millimeters, unit parameter in
// [0,1].  Every path starts at the pen rest position (0, 0).
inline std::pair<double, double> letter_path(char letter, double u) {
  auto lerp = [](double a, double b, double s) { return a + (b - a) * s; };
  switch (letter) {
    case 'L':  // down stroke then base stroke, drawn from the top
      if (u < 0.6) return {0.0, lerp(0.0, -20.0, u / 0.6)};
      return {lerp(0.0, 12.0, (u - 0.6) / 0.4), -20.0};
    case 'V':
      if (u < 0.5) return {lerp(0.0, 6.0, u / 0.5), lerp(0.0, -20.0, u / 0.5)};
      return {lerp(6.0, 12.0, (u - 0.5) / 0.5), lerp(-20.0, 0.0, (u - 0.5) / 0.5)};
    case 'O': {  // circle starting and ending at the top
      const double a = 2.0 * std::numbers::pi * u + std::numbers::pi / 2.0;
      return {10.0 * std::cos(a), 10.0 * std::sin(a) - 10.0};
    }
    case 'W': {
      const double seg = u * 4.0;
      const int i = std::min(3, static_cast<int>(seg));
      const double s = seg - i;
      const double xs[5] = {0, 4, 8, 12, 16};
      const double ys[5] = {0, -20, -6, -20, 0};
      return {lerp(xs[i], xs[i + 1], s), lerp(ys[i], ys[i + 1], s)};
    }
  }
  throw PipelineError("letter_path: invalid letter");
}

inline Eigen::VectorXd midline_spatial_pattern(const Montage& montage) {
  const std::vector<std::string> zeroed = {"Fp1", "Fp2", "T8", "TP10", "P8"};
  Eigen::VectorXd w(static_cast<long>(montage.channels.size()));
  for (size_t c = 0; c < montage.channels.size(); ++c) {
    const auto& pos = montage.channels[c];
    if (std::find(zeroed.begin(), zeroed.end(), pos.name) != zeroed.end()) {
      w(static_cast<long>(c)) = 0.0;
      continue;
    }
    w(static_cast<long>(c)) =
        std::exp(-pos.x * pos.x / (2 * 0.35 * 0.35)) * std::exp(-pos.y * pos.y / (2 * 0.6 * 0.6));
  }
  w /= w.maxCoeff();
  return w;
}

inline Eigen::VectorXd frontal_spatial_pattern(const Montage& montage) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<long>(montage.channels.size()));
  auto set = [&](const std::string& name, double v) {
    for (size_t c = 0; c < montage.channels.size(); ++c)
      if (montage.channels[c].name == name) w(static_cast<long>(c)) = v;
  };
  set("Fp1", 1.0);
  set("Fp2", 0.9);
  set("AFz", 0.5);
  set("F7", 0.3);
  set("F8", 0.3);
  set("F3", 0.2);
  set("F4", 0.2);
  return w;
}

}  // namespace detail

inline SynthSession generate_session(const SynthSpec& spec) {
  spec.validate();
  const Montage montage = dataio::montage_paper32();
  const int n_eeg = static_cast<int>(montage.channels.size());
  const double fs = spec.sample_rate_hz;

  // trial sequence: random first permutation, continued so that every window
  // of 4 consecutive trials holds all four letters (hence no repeats)
  std::vector<char> letters = letter_alphabet();
  Rng seq_rng(derive_seed(spec.seed, "sequence"));
  std::shuffle(letters.begin(), letters.end(), seq_rng);
  std::vector<char> sequence(static_cast<size_t>(spec.n_trials));
  for (int i = 0; i < spec.n_trials; ++i)
    sequence[static_cast<size_t>(i)] = letters[static_cast<size_t>(i % 4)];

  // trial timing: 800 ms letter cue, 400-600 ms blank, 1000 ms fixation /
  // writing, 500 ms blank
  Rng timing_rng(derive_seed(spec.seed, "timing"));
  std::uniform_real_distribution<double> blank_dist(0.4, 0.6);
  std::uniform_real_distribution<double> jitter_dist(spec.jitter_lo_s, spec.jitter_hi_s);
  GroundTruth truth;
  double t = 2.0;  // lead-in
  for (int i = 0; i < spec.n_trials; ++i) {
    TrialTruth tr;
    tr.letter = sequence[static_cast<size_t>(i)];
    tr.t_letter_cue_s = t;
    t += 0.8;
    t += blank_dist(timing_rng);
    tr.t_fixation_s = t;
    tr.t_onset_s = tr.t_fixation_s + jitter_dist(timing_rng);
    t += 1.0;
    t += 0.5;
    truth.trials.push_back(tr);
  }
  const double duration = t + 2.0;
  const long n = static_cast<long>(std::llround(duration * fs));

  // --- EEG: spatially correlated pink noise plus a white floor ---
  SynthSession out;
  out.eeg.name = "synthetic-eeg";
  out.eeg.clock_domain = "amp";
  out.eeg.sample_rate_hz = fs;
  out.eeg.start_time_s = 0.0;
  out.eeg.channel_names = montage.channel_names();
  out.eeg.channel_names.push_back("PD_MONITOR");
  out.eeg.channel_names.push_back("PD_TABLET");
  out.eeg.samples = Eigen::MatrixXf::Zero(n_eeg + 2, n);

  Rng noise_rng(derive_seed(spec.seed, "noise"));
  Eigen::MatrixXd mix = Eigen::MatrixXd::Identity(n_eeg, n_eeg);
  {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd g(n_eeg, n_eeg);
    for (int r = 0; r < n_eeg; ++r)
      for (int c = 0; c < n_eeg; ++c) g(r, c) = gauss(noise_rng);
    mix = 0.75 * mix + 0.25 / std::sqrt(static_cast<double>(n_eeg)) * g;
  }
  const double noise_scale = 10.0;  // microvolt-ish
  {
    std::vector<detail::PinkNoise> pink;
    for (int c = 0; c < n_eeg; ++c) pink.emplace_back(derive_seed(spec.seed, "pink-" + std::to_string(c)));
    std::normal_distribution<double> white(0.0, 1.0);
    const long block = 65536;
    Eigen::MatrixXd raw(n_eeg, block);
    for (long start = 0; start < n; start += block) {
      const long len = std::min(block, n - start);
      for (int c = 0; c < n_eeg; ++c)
        for (long i = 0; i < len; ++i) raw(c, i) = pink[static_cast<size_t>(c)].next();
      const Eigen::MatrixXd mixed = mix * raw.leftCols(len);
      for (int c = 0; c < n_eeg; ++c)
        for (long i = 0; i < len; ++i)
          out.eeg.samples(c, start + i) = static_cast<float>(
              noise_scale * (mixed(c, i) + 0.1 * white(noise_rng)));  // -20 dB white floor
    }
  }

  // noise RMS per channel before any injection
  Eigen::VectorXd noise_rms(n_eeg);
  for (int c = 0; c < n_eeg; ++c)
    noise_rms(c) = std::sqrt(out.eeg.samples.row(c).cast<double>().squaredNorm() / static_cast<double>(n));

  // --- letter templates: band-limited 2-12 Hz, one fixed realization per
  // letter per seed, midline-weighted spatial pattern ---
  const int tmpl_len = static_cast<int>(std::lround(0.6 * fs));  // <= the ~600 ms writing duration
  truth.template_spatial = detail::midline_spatial_pattern(montage);
  Eigen::Index loaded_ch = 0;
  truth.template_spatial.maxCoeff(&loaded_ch);
  Rng tmpl_rng(derive_seed(spec.seed, "templates"));
  std::vector<Eigen::VectorXd> letter_tc;
  for (size_t l = 0; l < letter_alphabet().size(); ++l)
    letter_tc.push_back(detail::bandlimited_waveform(tmpl_len, fs, 2.0, 12.0, tmpl_rng));

  const double tmpl_amp = spec.snr * noise_rms(loaded_ch);
  for (const auto& tr : truth.trials) {
    const long onset_idx = static_cast<long>(std::llround(tr.t_onset_s * fs));
    const Eigen::VectorXd& tc = letter_tc[static_cast<size_t>(letter_class_index(tr.letter))];
    for (int c = 0; c < n_eeg; ++c) {
      const double wamp = tmpl_amp * truth.template_spatial(c);
      if (wamp == 0.0) continue;
      for (int i = 0; i < tmpl_len; ++i)
        out.eeg.samples(c, onset_idx + i) += static_cast<float>(wamp * tc(i));
    }
  }
  truth.noise_rms_at_loaded = noise_rms(loaded_ch);
  {
    const Eigen::VectorXd& tc0 = letter_tc[0];
    truth.template_rms_at_loaded = tmpl_amp * std::sqrt(tc0.squaredNorm() / tmpl_len);
  }

  // --- optional frontal eye-artifact component, cue-locked ---
  truth.artifact_spatial = detail::frontal_spatial_pattern(montage);
  truth.artifact_timecourse.name = "artifact";
  truth.artifact_timecourse.clock_domain = "amp";
  truth.artifact_timecourse.sample_rate_hz = fs;
  truth.artifact_timecourse.start_time_s = 0.0;
  truth.artifact_timecourse.channel_names = {"artifact"};
  truth.artifact_timecourse.samples = Eigen::MatrixXf::Zero(1, n);
  if (spec.artifact.enabled) {
    const int art_len = static_cast<int>(std::lround(0.8 * fs));
    Rng art_rng(derive_seed(spec.seed, "artifact"));
    std::vector<Eigen::VectorXd> art_tc;
    const size_t n_waveforms = spec.artifact.class_correlated ? letter_alphabet().size() : 1;
    for (size_t l = 0; l < n_waveforms; ++l)
      // slow ocular band, spectrally disjoint from the 2-12 Hz motor templates
      art_tc.push_back(detail::bandlimited_waveform(art_len, fs, 0.3, 2.0, art_rng));
    if (spec.artifact.class_correlated) {
      // the artifact co-occurs with the same letter's motor template every
      // trial, which would make the two sources correlated and therefore not
      // separable by any linear decomposition; projecting out the
      // jitter-averaged shifted template zeroes the expected correlation
      const long j_lo = static_cast<long>(std::llround(spec.jitter_lo_s * fs));
      const long j_hi = static_cast<long>(std::llround(spec.jitter_hi_s * fs));
      for (size_t l = 0; l < art_tc.size(); ++l) {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(art_len);
        for (long j = j_lo; j <= j_hi; ++j)
          for (int i = 0; i < tmpl_len && j + i < art_len; ++i)
            m(j + i) += letter_tc[l](i);
        m /= static_cast<double>(j_hi - j_lo + 1);
        const double mm = m.squaredNorm();
        if (mm > 0) art_tc[l] -= (art_tc[l].dot(m) / mm) * m;
        // Gram-Schmidt against the earlier letters' waveforms so the four
        // per-letter shapes are mutually orthogonal (maximally distinct)
        for (size_t p = 0; p < l; ++p)
          art_tc[l] -= (art_tc[l].dot(art_tc[p]) / art_tc[p].squaredNorm()) *
                       art_tc[p];
        const double rms = std::sqrt(art_tc[l].squaredNorm() / art_len);
        if (rms > 0) art_tc[l] /= rms;
      }
    }
    const int fp1 = out.eeg.channel_index("Fp1");
    const double art_amp = spec.artifact.amplitude * noise_rms(fp1);
    for (const auto& tr : truth.trials) {
      const long idx = static_cast<long>(std::llround(tr.t_fixation_s * fs));
      const Eigen::VectorXd& tc =
          art_tc[spec.artifact.class_correlated
                     ? static_cast<size_t>(letter_class_index(tr.letter))
                     : 0];
      for (int i = 0; i < art_len; ++i)
        truth.artifact_timecourse.samples(0, idx + i) += static_cast<float>(art_amp * tc(i));
    }
    for (int c = 0; c < n_eeg; ++c) {
      const double w = truth.artifact_spatial(c);
      if (w == 0.0) continue;
      for (long i = 0; i < n; ++i)
        out.eeg.samples(c, i) += static_cast<float>(w * truth.artifact_timecourse.samples(0, i));
    }
  }

  // --- photodiode channels: flashes at every cue and at pen-down ---
  const int pd_monitor = n_eeg, pd_tablet = n_eeg + 1;
  auto pulse = [&](int ch, double t0) {
    const long a = static_cast<long>(std::llround(t0 * fs));
    const long b = std::min(n, a + static_cast<long>(std::llround(0.1 * fs)));
    for (long i = a; i < b; ++i) out.eeg.samples(ch, i) = 1.0f;
  };
  for (const auto& tr : truth.trials) {
    pulse(pd_monitor, tr.t_letter_cue_s);
    pulse(pd_monitor, tr.t_fixation_s);
    pulse(pd_tablet, tr.t_onset_s);
  }

  // --- pen trajectory at 200 Hz ---
  out.pen.name = "synthetic-pen";
  out.pen.clock_domain = "amp";
  out.pen.sample_rate_hz = spec.pen_rate_hz;
  out.pen.start_time_s = 0.0;
  out.pen.channel_names = {"x", "y"};
  const long pn = static_cast<long>(std::llround(duration * spec.pen_rate_hz));
  out.pen.samples = Eigen::MatrixXf::Zero(2, pn);
  Rng pen_rng(derive_seed(spec.seed, "pen"));
  std::normal_distribution<double> pen_noise(0.0, 0.01);
  {
    const double write_dur = 0.6, glide_dur = 0.4;
    size_t trial = 0;
    double hold_x = 0.0, hold_y = 0.0;
    for (long i = 0; i < pn; ++i) {
      const double ti = static_cast<double>(i) / spec.pen_rate_hz;
      while (trial + 1 < truth.trials.size() &&
             ti >= truth.trials[trial + 1].t_letter_cue_s)
        ++trial;
      const auto& tr = truth.trials[trial];
      double x = hold_x, y = hold_y;
      const double glide_start = tr.t_fixation_s + 1.0 + 0.05;
      if (ti >= tr.t_onset_s && ti < tr.t_onset_s + write_dur) {
        // short velocity ramp at stroke start keeps the threshold crossing
        // tight after the 100 Hz resample
        const double ramp = 0.06;
        const double tw = ti - tr.t_onset_s;
        const double u = (tw < ramp ? tw * tw / (2.0 * ramp) : tw - ramp / 2.0) /
                         (write_dur - ramp / 2.0);
        auto [px, py] = detail::letter_path(tr.letter, u);
        x = px;
        y = py;
        hold_x = px;
        hold_y = py;
      } else if (ti >= glide_start && ti < glide_start + glide_dur) {
        const double s = (ti - glide_start) / glide_dur;
        auto [ex, ey] = detail::letter_path(tr.letter, 1.0);
        x = ex * (1.0 - s);
        y = ey * (1.0 - s);
        hold_x = x;
        hold_y = y;
      } else if (ti >= glide_start + glide_dur) {
        hold_x = 0.0;
        hold_y = 0.0;
        x = 0.0;
        y = 0.0;
      }
      out.pen.samples(0, i) = static_cast<float>(x + pen_noise(pen_rng));
      out.pen.samples(1, i) = static_cast<float>(y + pen_noise(pen_rng));
    }
  }

  // --- task events, corrupted by per-event network latency ---
  out.events.clock_domain = "lsl";
  Rng lat_rng(derive_seed(spec.seed, "latency"));
  std::uniform_real_distribution<double> lat(0.0, spec.max_latency_s);
  for (const auto& tr : truth.trials) {
    out.events.events.push_back({tr.t_letter_cue_s + lat(lat_rng), EventKind::letter_cue, tr.letter});
    out.events.events.push_back({tr.t_fixation_s + lat(lat_rng), EventKind::fixation_cue, 0});
  }
  out.events.sort_stable();
  out.truth = std::move(truth);
  return out;
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar persistence.
// ---------------------------------------------------------------------------

inline void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  using json = nlohmann::json;
  json j;
  j["trials"] = json::array();
  for (const auto& tr : truth.trials)
    j["trials"].push_back({{"letter", std::string(1, tr.letter)},
                           {"t_letter_cue_s", tr.t_letter_cue_s},
                           {"t_fixation_s", tr.t_fixation_s},
                           {"t_onset_s", tr.t_onset_s}});
  j["template_spatial"] = std::vector<double>(
      truth.template_spatial.data(), truth.template_spatial.data() + truth.template_spatial.size());
  j["artifact_spatial"] = std::vector<double>(
      truth.artifact_spatial.data(), truth.artifact_spatial.data() + truth.artifact_spatial.size());
  j["noise_rms_at_loaded"] = truth.noise_rms_at_loaded;
  j["template_rms_at_loaded"] = truth.template_rms_at_loaded;
  std::ofstream f(dir / "truth.json");
  if (!f) throw PipelineError("cannot write ground truth to '" + (dir / "truth.json").string() + "'");
  f << j.dump(2) << "\n";
  dataio::write_recording(truth.artifact_timecourse, dir / "artifact.rec");
}

// ---------------------------------------------------------------------------
// Standard offline pipeline on a generated session: photodiode sync, notch,
// band-pass, 100 Hz resample, epoching.
// ---------------------------------------------------------------------------

struct PipelineResult {
  EpochDataset dataset;
  epoching::BuildReport build_report;
  Recording eeg_100hz;          // preprocessed 32-channel recording
  EventStream aligned_events;   // amplifier clock
  Recording pen_100hz;
};

inline PipelineResult run_session_pipeline(const SynthSession& session, EpochSetting setting,
                                           const epoching::OnsetDetectorConfig& onset_cfg = {}) {
  const Montage montage = dataio::montage_paper32();
  PipelineResult out;

  const Recording pd = session.eeg.select_channels({"PD_MONITOR"});
  const auto spikes = synchro::detect_spikes(pd, 0.5, 0.05);
  auto [aligned, report] = synchro::align_events(session.events, spikes);
  out.aligned_events = std::move(aligned);

  Recording eeg = session.eeg.select_channels(montage.channel_names());
  eeg = sigproc::notch(eeg, 60.0);
  eeg = sigproc::bandpass(eeg, 0.3, 70.0);
  out.eeg_100hz = sigproc::resample(eeg, 100.0);

  const Recording* pen_ptr = nullptr;
  if (setting == EpochSetting::me_movement) {
    out.pen_100hz = sigproc::resample(session.pen, 100.0);
    pen_ptr = &out.pen_100hz;
  }
  auto [ds, br] = epoching::build_dataset(out.eeg_100hz, pen_ptr, out.aligned_events, setting,
                                          onset_cfg, "synthetic");
  out.dataset = std::move(ds);
  out.build_report = br;
  return out;
}

// ---------------------------------------------------------------------------
// SNR calibration: bisection until a freshly trained decoder's k-fold CV
// accuracy lands in the target band.
// ---------------------------------------------------------------------------

struct CalibrationResult {
  double snr = 0.0;
  double accuracy = 0.0;
};

inline CalibrationResult calibrate_snr(const SynthSpec& spec_template,
                                       std::pair<double, double> target_band, EpochSetting setting,
                                       const decoder::EEGNetConfig& net,
                                       const decoder::TrainConfig& tc, int max_iter = 20,
                                       int n_threads = 1) {
  const auto [lo_acc, hi_acc] = target_band;
  if (!(lo_acc < hi_acc)) throw PipelineError("calibrate_snr: invalid band");
  if (lo_acc >= 1.0 || hi_acc <= 0.0)
    throw PipelineError("calibrate_snr: band (" + std::to_string(lo_acc) + ", " +
                        std::to_string(hi_acc) + ") unreachable: accuracy lies in [0, 1]");

  auto accuracy_at = [&](double snr) {
    SynthSpec spec = spec_template;
    spec.snr = snr;
    const SynthSession session = generate_session(spec);
    const PipelineResult pr = run_session_pipeline(session, setting);
    const auto factory = evalharness::eegnet_factory(net, tc);
    return evalharness::kfold_cv(pr.dataset, 5, factory, tc.seed,
                                 evalharness::fingerprint(net, tc, "calibrate"), n_threads)
        .pooled.accuracy;
  };

  double log_lo = -3.0, log_hi = 3.0;  // snr bounds 1e-3 .. 1e3
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (log_lo + log_hi);
    const double snr = std::pow(10.0, mid);
    const double acc = accuracy_at(snr);
    if (acc < lo_acc) log_lo = mid;
    else if (acc > hi_acc) log_hi = mid;
    else return {snr, acc};
  }
  throw PipelineError("calibrate_snr: band (" + std::to_string(lo_acc) + ", " +
                      std::to_string(hi_acc) + ") unreachable within snr bounds [1e-3, 1e3]");
}

}  // namespace hwbci::synthgen
