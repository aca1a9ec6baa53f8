#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "hwbci/sigproc.hpp"

using namespace hwbci;

namespace {

Recording sine_recording(double f_hz, double fs, double dur_s, double amp = 1.0, int n_ch = 1) {
  Recording r;
  r.name = "sine";
  r.clock_domain = "amp";
  r.sample_rate_hz = fs;
  for (int c = 0; c < n_ch; ++c) r.channel_names.push_back("ch" + std::to_string(c));
  const long n = static_cast<long>(dur_s * fs);
  r.samples.resize(n_ch, n);
  for (int c = 0; c < n_ch; ++c)
    for (long i = 0; i < n; ++i)
      r.samples(c, i) = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * f_hz * i / fs));
  return r;
}

// RMS over the interior (skips edge transients of the reflection padding)
double interior_rms(const Recording& r, int ch = 0, double skip_fraction = 0.1) {
  const long n = r.n_samples();
  const long a = static_cast<long>(skip_fraction * n);
  double acc = 0;
  for (long i = a; i < n - a; ++i) acc += static_cast<double>(r.samples(ch, i)) * r.samples(ch, i);
  return std::sqrt(acc / static_cast<double>(n - 2 * a));
}

}  // namespace

TEST_CASE("notch attenuates the line frequency by at least 20 dB") {
  const Recording in = sine_recording(60.0, 1000.0, 10.0);
  const Recording out = sigproc::notch(in, 60.0);
  const double gain = interior_rms(out) / interior_rms(in);
  REQUIRE(20.0 * std::log10(gain) <= -20.0);
}

TEST_CASE("notch leaves neighbouring frequencies nearly untouched") {
  const Recording in = sine_recording(10.0, 1000.0, 10.0);
  const Recording out = sigproc::notch(in, 60.0);
  const double gain = interior_rms(out) / interior_rms(in);
  REQUIRE(std::abs(20.0 * std::log10(gain)) < 0.2);
}

TEST_CASE("band-pass passes 10 Hz within 1 dB and kills DC") {
  const Recording mid = sine_recording(10.0, 1000.0, 10.0);
  const Recording mid_f = sigproc::bandpass(mid, 0.3, 70.0);
  const double gain = interior_rms(mid_f) / interior_rms(mid);
  REQUIRE(std::abs(20.0 * std::log10(gain)) <= 1.0);

  Recording dc = mid;
  dc.samples.setConstant(1.0f);
  const Recording dc_f = sigproc::bandpass(dc, 0.3, 70.0);
  REQUIRE(interior_rms(dc_f) <= 0.05);  // <= 5% of the unit DC level
}

TEST_CASE("band-pass suppresses out-of-band highs") {
  // the 0.3 Hz high-pass leaves a slow edge transient, so measure the
  // remaining 200 Hz content by projection rather than total RMS
  const double f0 = 200.0, fs = 1000.0;
  const Recording hi = sine_recording(f0, fs, 5.0);
  const Recording out = sigproc::bandpass(hi, 0.3, 70.0);
  const long n = out.n_samples();
  double cs = 0, sn = 0;
  for (long i = n / 10; i < n - n / 10; ++i) {
    const double ph = 2.0 * std::numbers::pi * f0 * i / fs;
    cs += out.samples(0, i) * std::cos(ph);
    sn += out.samples(0, i) * std::sin(ph);
  }
  const double amp = 2.0 * std::hypot(cs, sn) / static_cast<double>(n - 2 * (n / 10));
  REQUIRE(amp < 0.01);  // unit-amplitude tone in
}

TEST_CASE("zero-phase filtering is linear") {
  Rng rng(5);
  std::normal_distribution<float> g(0.f, 1.f);
  Recording a = sine_recording(10.0, 500.0, 2.0);
  Recording b = a;
  for (long i = 0; i < a.n_samples(); ++i) {
    a.samples(0, i) = g(rng);
    b.samples(0, i) = g(rng);
  }
  Recording sum = a;
  sum.samples = a.samples + b.samples;
  const Recording fa = sigproc::bandpass(a, 1.0, 40.0);
  const Recording fb = sigproc::bandpass(b, 1.0, 40.0);
  const Recording fs = sigproc::bandpass(sum, 1.0, 40.0);
  // float storage: compare in double with a tight absolute bound
  for (long i = 0; i < a.n_samples(); ++i)
    REQUIRE(std::abs(static_cast<double>(fs.samples(0, i)) - (static_cast<double>(fa.samples(0, i)) +
                                                              fb.samples(0, i))) < 1e-5);
}

TEST_CASE("forward-backward filtering has zero lag") {
  const double fs = 1000.0, f0 = 10.0;
  const Recording in = sine_recording(f0, fs, 10.0);
  const Recording out = sigproc::bandpass(in, 0.3, 70.0);
  // cross-correlate in a +-10 sample window; the peak must sit at lag 0
  const long n = in.n_samples();
  double best = -1;
  long best_lag = -100;
  for (long lag = -10; lag <= 10; ++lag) {
    double acc = 0;
    for (long i = 1000; i < n - 1000; ++i)
      acc += static_cast<double>(in.samples(0, i)) * out.samples(0, i + lag);
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  REQUIRE(best_lag == 0);
}

TEST_CASE("resample length arithmetic") {
  const Recording in = sine_recording(5.0, 1000.0, 3.6004);  // 3600 samples + remainder
  const Recording out = sigproc::resample(in, 100.0);
  REQUIRE(out.sample_rate_hz == 100.0);
  REQUIRE(out.n_samples() == std::lround(in.n_samples() * 100.0 / 1000.0));
  REQUIRE(out.n_channels() == in.n_channels());
}

TEST_CASE("decimation preserves an in-band tone") {
  const double f0 = 35.0;  // inside the 45 Hz guard band of 1000 -> 100 Hz
  const Recording in = sine_recording(f0, 1000.0, 10.0);
  const Recording out = sigproc::resample(in, 100.0);
  // correlate the interior with the analytic tone at the new rate
  const long n = out.n_samples();
  double num = 0, den_a = 0, den_b = 0;
  for (long i = n / 10; i < n - n / 10; ++i) {
    const double ref = std::sin(2.0 * std::numbers::pi * f0 * i / 100.0);
    num += ref * out.samples(0, i);
    den_a += ref * ref;
    den_b += static_cast<double>(out.samples(0, i)) * out.samples(0, i);
  }
  REQUIRE(num / std::sqrt(den_a * den_b) > 0.99);
  // amplitude preserved too
  REQUIRE(interior_rms(out) == Catch::Approx(1.0 / std::sqrt(2.0)).margin(0.02));
}

TEST_CASE("decimation rejects content beyond the new Nyquist") {
  const Recording in = sine_recording(80.0, 1000.0, 10.0);  // would alias to 20 Hz
  const Recording out = sigproc::resample(in, 100.0);
  REQUIRE(interior_rms(out) < 0.02);
}

TEST_CASE("rational resampling 200 -> 100 Hz halves the sample count") {
  const Recording in = sine_recording(10.0, 200.0, 5.0);
  const Recording out = sigproc::resample(in, 100.0);
  REQUIRE(out.n_samples() == in.n_samples() / 2);
}

TEST_CASE("resample error paths") {
  const Recording in = sine_recording(10.0, 1000.0, 2.0);
  REQUIRE_THROWS_AS(sigproc::resample(in, 0.0), PipelineError);
  Recording frac = in;
  frac.sample_rate_hz = 1000.5;
  REQUIRE_THROWS_AS(sigproc::resample(frac, 100.0), PipelineError);
  // non-integer upsampling ratio (1000 -> 1500 means up 3 / down 2)
  REQUIRE_THROWS_AS(sigproc::resample(in, 1500.0), PipelineError);
  // same rate is the identity
  const Recording same = sigproc::resample(in, 1000.0);
  REQUIRE(same.samples == in.samples);
}

TEST_CASE("filter error paths") {
  const Recording in = sine_recording(10.0, 100.0, 2.0);
  REQUIRE_THROWS_AS(sigproc::notch(in, 60.0), PipelineError);   // >= Nyquist at 100 Hz
  REQUIRE_THROWS_AS(sigproc::bandpass(in, 0.3, 70.0), PipelineError);
  REQUIRE_THROWS_AS(sigproc::bandpass(in, 30.0, 10.0), PipelineError);
}
