#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "hwbci/recording.hpp"

namespace hwbci::sigproc {

// ---------------------------------------------------------------------------
// Second-order sections, forward-backward (zero-phase) application.
// ---------------------------------------------------------------------------

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;  // normalized, a0 == 1
  double a1 = 0, a2 = 0;
};

inline Biquad butter_lowpass_section(double f_hz, double fs_hz, double q) {
  const double w0 = 2.0 * std::numbers::pi * f_hz / fs_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1 - c) / 2 / a0, (1 - c) / a0, (1 - c) / 2 / a0, -2 * c / a0, (1 - alpha) / a0};
}

inline Biquad butter_highpass_section(double f_hz, double fs_hz, double q) {
  const double w0 = 2.0 * std::numbers::pi * f_hz / fs_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1 + c) / 2 / a0, -(1 + c) / a0, (1 + c) / 2 / a0, -2 * c / a0, (1 - alpha) / a0};
}

inline Biquad notch_section(double f_hz, double fs_hz, double q) {
  const double w0 = 2.0 * std::numbers::pi * f_hz / fs_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {1 / a0, -2 * c / a0, 1 / a0, -2 * c / a0, (1 - alpha) / a0};
}

// Butterworth pole-pair Q values for a 4th-order cascade.
inline std::vector<double> butterworth4_q() { return {0.54119610014619701, 1.3065629648763764}; }

struct SosCascade {
  std::vector<Biquad> sections;

  // Run one direction with initial conditions set for a step of amplitude
  // x[0]; kills the DC start-up transient.
  void filter_inplace(std::vector<double>& x) const {
    for (const auto& s : sections) {
      const double dc_den = 1.0 + s.a1 + s.a2;
      const double gain = (s.b0 + s.b1 + s.b2) / dc_den;
      const double x0 = x.empty() ? 0.0 : x.front();
      const double y0 = gain * x0;
      double z1 = y0 - s.b0 * x0;
      double z2 = s.b2 * x0 - s.a2 * y0;
      for (double& v : x) {
        const double y = s.b0 * v + z1;
        z1 = s.b1 * v - s.a1 * y + z2;
        z2 = s.b2 * v - s.a2 * y;
        v = y;
      }
    }
  }
};

// Odd-reflection padding, forward pass, backward pass, crop.
inline void filtfilt_inplace(const SosCascade& cascade, std::vector<double>& x, long pad_len = 300) {
  const long n = static_cast<long>(x.size());
  if (n < 2) return;
  const long pad = std::min<long>(pad_len, n - 1);
  std::vector<double> ext;
  ext.reserve(static_cast<size_t>(n + 2 * pad));
  for (long i = pad; i >= 1; --i) ext.push_back(2 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (long i = 1; i <= pad; ++i) ext.push_back(2 * x[n - 1] - x[n - 1 - i]);

  cascade.filter_inplace(ext);
  std::reverse(ext.begin(), ext.end());
  cascade.filter_inplace(ext);
  std::reverse(ext.begin(), ext.end());
  std::copy(ext.begin() + pad, ext.begin() + pad + n, x.begin());
}

inline Recording apply_zero_phase(const Recording& rec, const SosCascade& cascade) {
  Recording out = rec;
  std::vector<double> buf(static_cast<size_t>(rec.n_samples()));
  for (int c = 0; c < rec.n_channels(); ++c) {
    for (long s = 0; s < rec.n_samples(); ++s) buf[s] = rec.samples(c, s);
    filtfilt_inplace(cascade, buf);
    for (long s = 0; s < rec.n_samples(); ++s) out.samples(c, s) = static_cast<float>(buf[s]);
  }
  return out;
}

// Second-order notch (Q = 30), forward-backward.
inline Recording notch(const Recording& rec, double f0_hz = 60.0, double q = 30.0) {
  if (f0_hz >= rec.sample_rate_hz / 2.0)
    throw PipelineError("notch: frequency " + std::to_string(f0_hz) + " Hz >= Nyquist");
  SosCascade c{{notch_section(f0_hz, rec.sample_rate_hz, q)}};
  return apply_zero_phase(rec, c);
}

// 4th-order Butterworth high-pass at low_hz cascaded with 4th-order
// low-pass at high_hz (two second-order sections per edge), forward-backward.
inline Recording bandpass(const Recording& rec, double low_hz = 0.3, double high_hz = 70.0) {
  if (!(0 < low_hz && low_hz < high_hz && high_hz < rec.sample_rate_hz / 2.0))
    throw PipelineError("bandpass: invalid band [" + std::to_string(low_hz) + ", " +
                        std::to_string(high_hz) + "] for sample rate " +
                        std::to_string(rec.sample_rate_hz));
  SosCascade c;
  for (double q : butterworth4_q()) c.sections.push_back(butter_highpass_section(low_hz, rec.sample_rate_hz, q));
  for (double q : butterworth4_q()) c.sections.push_back(butter_lowpass_section(high_hz, rec.sample_rate_hz, q));
  return apply_zero_phase(rec, c);
}

// ---------------------------------------------------------------------------
// Rational-ratio polyphase resampling with a symmetric windowed-sinc
// low-pass.  Zero-phase by group-delay compensation.
// ---------------------------------------------------------------------------

inline std::vector<double> windowed_sinc_lowpass(double cutoff_hz, double fs_hz, long numtaps) {
  if (numtaps % 2 == 0) ++numtaps;
  std::vector<double> h(static_cast<size_t>(numtaps));
  const double fc = cutoff_hz / fs_hz;  // cycles per sample
  const long mid = (numtaps - 1) / 2;
  double sum = 0.0;
  for (long i = 0; i < numtaps; ++i) {
    const double m = static_cast<double>(i - mid);
    const double sinc = (m == 0) ? 2 * fc
                                 : std::sin(2 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    // Blackman window
    const double w = 0.42 - 0.5 * std::cos(2 * std::numbers::pi * i / (numtaps - 1)) +
                     0.08 * std::cos(4 * std::numbers::pi * i / (numtaps - 1));
    h[static_cast<size_t>(i)] = sinc * w;
    sum += h[static_cast<size_t>(i)];
  }
  for (double& v : h) v /= sum;  // unit DC gain
  return h;
}

inline Recording resample(const Recording& rec, double target_hz) {
  if (target_hz <= 0) throw PipelineError("resample: target rate must be > 0");
  const double source_hz = rec.sample_rate_hz;
  if (std::abs(target_hz - source_hz) < 1e-9 * source_hz) return rec;

  auto near_int = [](double v) { return std::abs(v - std::round(v)) < 1e-6; };
  if (!near_int(target_hz) || !near_int(source_hz))
    throw PipelineError("resample: only integer sample rates supported");
  const long ti = static_cast<long>(std::llround(target_hz));
  const long si = static_cast<long>(std::llround(source_hz));
  const long g = std::gcd(ti, si);
  const long up = ti / g;    // P
  const long down = si / g;  // Q
  if (target_hz > source_hz && down != 1)
    throw PipelineError("resample: non-integer upsampling ratio unsupported (" +
                        std::to_string(source_hz) + " -> " + std::to_string(target_hz) + ")");

  // Anti-alias / anti-image guard at 0.45 x the lower of the two rates.  For
  // the 1000 -> 100 Hz EEG decimation this is the 45 Hz guard that reconciles
  // the 70 Hz band edge with the new 50 Hz Nyquist.
  const double fs_up = source_hz * up;
  const double cutoff_hz = 0.45 * std::min(source_hz, target_hz);
  const double transition_hz = 0.2 * cutoff_hz;
  long numtaps = 2 * static_cast<long>(std::ceil(2.75 * fs_up / transition_hz)) + 1;

  const std::vector<double> h = windowed_sinc_lowpass(cutoff_hz, fs_up, numtaps);
  numtaps = static_cast<long>(h.size());
  const long mid = (numtaps - 1) / 2;
  const long n_in = rec.n_samples();
  const long n_out = static_cast<long>(std::llround(static_cast<double>(n_in) * target_hz / source_hz));

  Recording out = rec;
  out.sample_rate_hz = target_hz;
  out.samples.resize(rec.n_channels(), n_out);

  // x[i] for i outside [0, n_in): odd reflection about the end points.
  auto sample_at = [&](const Eigen::MatrixXf& m, int ch, long i) -> double {
    if (i < 0) return 2.0 * m(ch, 0) - m(ch, std::min(-i, n_in - 1));
    if (i >= n_in) return 2.0 * m(ch, n_in - 1) - m(ch, std::max<long>(0, 2 * (n_in - 1) - i));
    return m(ch, i);
  };

  for (int c = 0; c < rec.n_channels(); ++c) {
    for (long m = 0; m < n_out; ++m) {
      // y[m] = up * sum_i h[m*down + mid - i*up] * x[i]
      const long center = m * down + mid;
      long i_lo = (center - (numtaps - 1));
      // smallest i with i*up >= i_lo, i.e. tap index <= numtaps-1
      long i0 = static_cast<long>(std::ceil(static_cast<double>(i_lo) / up));
      double acc = 0.0;
      for (long i = i0; i * up <= center; ++i) {
        const long tap = center - i * up;
        acc += h[static_cast<size_t>(tap)] * sample_at(rec.samples, c, i);
      }
      out.samples(c, m) = static_cast<float>(acc * up);
    }
  }
  return out;
}

}  // namespace hwbci::sigproc
