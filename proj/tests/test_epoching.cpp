#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hwbci/epoching.hpp"

using namespace hwbci;

namespace {

Recording counting_eeg(double fs = 100.0, long n = 2000, int n_ch = 2) {
  Recording r;
  r.name = "eeg";
  r.clock_domain = "amp";
  r.sample_rate_hz = fs;
  for (int c = 0; c < n_ch; ++c) r.channel_names.push_back("ch" + std::to_string(c));
  r.samples.resize(n_ch, n);
  for (int c = 0; c < n_ch; ++c)
    for (long i = 0; i < n; ++i) r.samples(c, i) = static_cast<float>(i + 1000 * c);
  return r;
}

// Pen at rest, constant-velocity motion on [t_move, t_stop), frozen after.
Recording ramp_pen(double t_move, double speed_mm_s, double fs = 100.0, double dur = 20.0,
                   double t_stop = 1e9) {
  Recording r;
  r.name = "pen";
  r.clock_domain = "amp";
  r.sample_rate_hz = fs;
  r.channel_names = {"x", "y"};
  const long n = static_cast<long>(dur * fs);
  r.samples = Eigen::MatrixXf::Zero(2, n);
  for (long i = 0; i < n; ++i) {
    const double t = std::min(i / fs, t_stop);
    if (t >= t_move) r.samples(0, i) = static_cast<float>(speed_mm_s * (t - t_move));
  }
  return r;
}

}  // namespace

TEST_CASE("movement onset is localized on a constructed ramp") {
  const double t_move = 0.36;
  const Recording pen = ramp_pen(t_move, 50.0);
  const auto onset = epoching::detect_movement_onset(pen, 0.0, 2.0);
  REQUIRE(onset.has_value());
  // central differences smear the step by one sample on either side
  REQUIRE(*onset >= 0.34);
  REQUIRE(*onset <= 0.38);
}

TEST_CASE("onset detector ignores sub-threshold drift and brief blips") {
  const Recording slow = ramp_pen(0.5, 5.0);  // below the 10 mm/s default
  REQUIRE_FALSE(epoching::detect_movement_onset(slow, 0.0, 2.0).has_value());

  Recording blip = ramp_pen(100.0, 0.0);  // flat
  blip.samples(0, 50) = 5.0f;             // single-sample spike, not sustained
  REQUIRE_FALSE(epoching::detect_movement_onset(blip, 0.0, 2.0).has_value());
}

TEST_CASE("onset detector validates inputs") {
  const Recording pen = ramp_pen(0.5, 50.0);
  REQUIRE_THROWS_AS(epoching::detect_movement_onset(pen, -1.0, 2.0), PipelineError);
  REQUIRE_THROWS_AS(epoching::detect_movement_onset(pen, 0.0, 100.0), PipelineError);
  REQUIRE_THROWS_AS(epoching::detect_movement_onset(pen, 2.0, 1.0), PipelineError);
  REQUIRE_THROWS_AS(epoching::detect_movement_onset(pen, 0.0, 1.0, {0.0, 30.0}), PipelineError);
  Recording three = pen;
  three.channel_names.push_back("p");
  three.samples.conservativeResize(3, pen.n_samples());
  three.samples.row(2).setZero();
  REQUIRE_THROWS_AS(epoching::detect_movement_onset(three, 0.0, 1.0), PipelineError);
}

TEST_CASE("epoch windows use exact index arithmetic") {
  const Recording eeg = counting_eeg();  // samples(0, i) == i at 100 Hz

  SECTION("movement rule: [-200 ms, +800 ms]") {
    const Epoch e = epoching::extract_epoch(eeg, epoching::CenterRule::movement, 5.0, 'L',
                                            EpochSetting::me_movement);
    REQUIRE(e.data.cols() == 100);
    REQUIRE(e.data(0, 0) == 480.0f);   // (5.0 - 0.2) * 100
    REQUIRE(e.data(0, 99) == 579.0f);  // 100 samples later
    REQUIRE(e.data(1, 0) == 1480.0f);
  }
  SECTION("cue rule: [0, 1000 ms]") {
    const Epoch e =
        epoching::extract_epoch(eeg, epoching::CenterRule::cue, 5.0, 'V', EpochSetting::me_cue);
    REQUIRE(e.data.cols() == 100);
    REQUIRE(e.data(0, 0) == 500.0f);
    REQUIRE(e.data(0, 99) == 599.0f);
  }
  SECTION("out-of-bounds windows throw") {
    REQUIRE_THROWS_AS(epoching::extract_epoch(eeg, epoching::CenterRule::movement, 0.1, 'L',
                                              EpochSetting::me_movement),
                      PipelineError);
    REQUIRE_THROWS_AS(
        epoching::extract_epoch(eeg, epoching::CenterRule::cue, 19.5, 'L', EpochSetting::me_cue),
        PipelineError);
  }
}

TEST_CASE("build_dataset pairs letter cues with fixations") {
  const Recording eeg = counting_eeg(100.0, 3000);
  const Recording pen = ramp_pen(5.2, 50.0, 100.0, 30.0, 6.0);  // still by trial two
  EventStream ev;
  ev.clock_domain = "amp";
  ev.events.push_back({4.0, EventKind::letter_cue, 'O'});
  ev.events.push_back({5.0, EventKind::fixation_cue, 0});
  ev.events.push_back({8.0, EventKind::letter_cue, 'W'});
  ev.events.push_back({9.0, EventKind::fixation_cue, 0});

  SECTION("me-movement anchors on the detected onset") {
    auto [ds, report] = epoching::build_dataset(eeg, &pen, ev, EpochSetting::me_movement);
    REQUIRE(report.n_trials == 2);
    REQUIRE(report.n_epochs == 1);           // second trial has no pen movement
    REQUIRE(report.n_dropped_no_onset == 1);
    REQUIRE(ds.size() == 1);
    REQUIRE(ds.epochs[0].label == 'O');
    REQUIRE(ds.epochs[0].onset_time_s == Catch::Approx(5.2).margin(0.02));
  }
  SECTION("cue settings anchor on the fixation cross") {
    auto [ds, report] = epoching::build_dataset(eeg, nullptr, ev, EpochSetting::mi_cue);
    REQUIRE(report.n_epochs == 2);
    REQUIRE(ds.epochs[0].onset_time_s == 5.0);
    REQUIRE(ds.epochs[0].setting == EpochSetting::mi_cue);
    REQUIRE(ds.epochs[0].data(0, 0) == 500.0f);
    REQUIRE(ds.epochs[1].label == 'W');
  }
  SECTION("me-movement requires a pen stream") {
    REQUIRE_THROWS_AS(epoching::build_dataset(eeg, nullptr, ev, EpochSetting::me_movement),
                      PipelineError);
  }
  SECTION("fixation without a preceding letter cue is an error") {
    EventStream bad;
    bad.clock_domain = "amp";
    bad.events.push_back({5.0, EventKind::fixation_cue, 0});
    REQUIRE_THROWS_AS(epoching::build_dataset(eeg, nullptr, bad, EpochSetting::me_cue),
                      PipelineError);
  }
}

TEST_CASE("build_dataset counts out-of-bounds drops") {
  const Recording eeg = counting_eeg(100.0, 700);  // 7 s of data
  EventStream ev;
  ev.clock_domain = "amp";
  ev.events.push_back({4.0, EventKind::letter_cue, 'L'});
  ev.events.push_back({5.0, EventKind::fixation_cue, 0});
  ev.events.push_back({6.0, EventKind::letter_cue, 'V'});
  ev.events.push_back({6.5, EventKind::fixation_cue, 0});  // window ends at 7.5 s: out of bounds
  auto [ds, report] = epoching::build_dataset(eeg, nullptr, ev, EpochSetting::me_cue);
  REQUIRE(report.n_trials == 2);
  REQUIRE(report.n_epochs == 1);
  REQUIRE(report.n_dropped_out_of_bounds == 1);
}
