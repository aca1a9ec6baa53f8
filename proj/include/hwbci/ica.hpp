#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "hwbci/recording.hpp"

namespace hwbci::ica {

struct IcaModel {
  Eigen::MatrixXd whitening;  // k x n_channels
  Eigen::MatrixXd unmixing;   // k x k, rows orthonormal in whitened space
  Eigen::MatrixXd mixing;     // n_channels x k
  Eigen::VectorXd channel_means;
  int n_components = 0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline Eigen::MatrixXd symmetric_decorrelate(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
  const Eigen::VectorXd d = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose() * w;
}

}  // namespace detail

// Fixed-point negentropy-maximizing ICA with tanh contrast and symmetric
// decorrelation; deterministic given the seed.  Components are ordered by
// explained variance in channel space.
inline IcaModel fit_ica(const Recording& rec, int k, std::uint64_t seed, double tol = 1e-6,
                        int max_iter = 500) {
  const int n = rec.n_channels();
  const long m = rec.n_samples();
  if (k < 1 || k > n) throw PipelineError("fit_ica: k must be in [1, n_channels]");
  if (m < 10L * n)
    throw PipelineError("fit_ica: need at least 10 x n_channels samples, got " + std::to_string(m));

  Eigen::MatrixXd x = rec.samples.cast<double>();
  Eigen::VectorXd means = x.rowwise().mean();
  x.colwise() -= means;

  const Eigen::MatrixXd cov = x * x.transpose() / static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd evals = es.eigenvalues();  // ascending
  const double max_ev = evals(n - 1);
  // only the top-k directions are whitened; deeper null directions are fine
  for (int i = n - k; i < n; ++i) {
    if (evals(i) < 1e-12 * max_ev) {
      // name the channels loading on the null direction
      std::string names;
      const Eigen::VectorXd v = es.eigenvectors().col(i).cwiseAbs();
      for (int c = 0; c < n; ++c)
        if (v(c) > 0.5 * v.maxCoeff()) names += (names.empty() ? "" : ", ") + rec.channel_names[c];
      throw PipelineError("fit_ica: rank-deficient data (null space involves channels: " + names + ")");
    }
  }

  IcaModel model;
  model.n_components = k;
  model.channel_means = means;
  // top-k eigenvectors (eigenvalues ascending -> take from the back)
  Eigen::MatrixXd e_top(n, k);
  Eigen::VectorXd d_top(k);
  for (int i = 0; i < k; ++i) {
    e_top.col(i) = es.eigenvectors().col(n - 1 - i);
    d_top(i) = evals(n - 1 - i);
  }
  model.whitening = d_top.cwiseSqrt().cwiseInverse().asDiagonal() * e_top.transpose();

  const Eigen::MatrixXd z = model.whitening * x;  // k x m, identity covariance

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd w(k, k);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) w(r, c) = gauss(rng);
  w = detail::symmetric_decorrelate(w);

  const double inv_m = 1.0 / static_cast<double>(m);
  for (model.iterations = 1; model.iterations <= max_iter; ++model.iterations) {
    const Eigen::MatrixXd wz = w * z;                       // k x m
    const Eigen::MatrixXd g = wz.array().tanh().matrix();   // tanh contrast
    const Eigen::VectorXd g_prime_mean =
        (1.0 - g.array().square()).rowwise().mean().matrix();
    Eigen::MatrixXd w_new = g * z.transpose() * inv_m - g_prime_mean.asDiagonal() * w;
    w_new = detail::symmetric_decorrelate(w_new);
    const double delta =
        ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    w = w_new;
    if (delta < tol) {
      model.converged = true;
      break;
    }
  }
  if (model.iterations > max_iter) model.iterations = max_iter;

  // order by explained variance: source variance is 1 in whitened space, so
  // rank by the channel-space energy of each mixing column
  Eigen::MatrixXd mixing = e_top * d_top.cwiseSqrt().asDiagonal() * w.transpose();  // n x k
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return mixing.col(a).squaredNorm() > mixing.col(b).squaredNorm();
  });
  model.unmixing.resize(k, k);
  model.mixing.resize(n, k);
  for (int i = 0; i < k; ++i) {
    model.unmixing.row(i) = w.row(order[static_cast<size_t>(i)]);
    model.mixing.col(i) = mixing.col(order[static_cast<size_t>(i)]);
  }
  return model;
}

// Component time-courses: unmixing * whitening * (data - means).
inline Recording sources(const IcaModel& model, const Recording& rec) {
  if (rec.n_channels() != model.whitening.cols())
    throw PipelineError("sources: channel count does not match model");
  Eigen::MatrixXd x = rec.samples.cast<double>();
  x.colwise() -= model.channel_means;
  const Eigen::MatrixXd s = model.unmixing * (model.whitening * x);
  Recording out;
  out.name = rec.name + ".sources";
  out.clock_domain = rec.clock_domain;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.start_time_s = rec.start_time_s;
  for (int i = 0; i < model.n_components; ++i) out.channel_names.push_back("IC" + std::to_string(i));
  out.samples = s.cast<float>();
  return out;
}

// Channel-space signal rebuilt from only the kept components plus means.
inline Recording reconstruct(const IcaModel& model, const Recording& rec,
                             const std::set<int>& keep) {
  for (int idx : keep)
    if (idx < 0 || idx >= model.n_components)
      throw PipelineError("reconstruct: component index " + std::to_string(idx) + " out of range");
  Eigen::MatrixXd x = rec.samples.cast<double>();
  x.colwise() -= model.channel_means;
  const Eigen::MatrixXd s = model.unmixing * (model.whitening * x);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(rec.n_channels(), rec.n_samples());
  for (int idx : keep) y += model.mixing.col(idx) * s.row(idx);
  y.colwise() += model.channel_means;
  Recording out = rec;
  out.samples = y.cast<float>();
  return out;
}

inline double abs_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  const double denom = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
  if (denom == 0) return 0.0;
  return std::abs(ac.dot(bc)) / denom;
}

// Components ordered by |correlation| of their time-course with the template,
// descending; ties keep index order.  Automates artifact identification when
// the artifact truth is known (synthetic data).
inline std::vector<int> rank_components_by_template(const IcaModel& model, const Recording& rec,
                                                    const Eigen::VectorXd& template_tc) {
  if (template_tc.size() != rec.n_samples())
    throw PipelineError("rank_components_by_template: template length != recording length");
  if ((template_tc.array() - template_tc.mean()).abs().maxCoeff() == 0.0)
    throw PipelineError("rank_components_by_template: degenerate template");
  const Recording s = sources(model, rec);
  std::vector<double> corr(static_cast<size_t>(model.n_components));
  for (int i = 0; i < model.n_components; ++i)
    corr[static_cast<size_t>(i)] =
        abs_correlation(s.samples.row(i).transpose().cast<double>(), template_tc);
  std::vector<int> order(static_cast<size_t>(model.n_components));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return corr[static_cast<size_t>(a)] > corr[static_cast<size_t>(b)]; });
  return order;
}

// ---------------------------------------------------------------------------
// Model persistence (binary, exact round-trip).
// ---------------------------------------------------------------------------

inline void write_model(const IcaModel& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PipelineError("cannot open '" + path.string() + "' for writing");
  auto put_u64 = [&](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  auto put_mat = [&](const Eigen::MatrixXd& mat) {
    put_u64(static_cast<std::uint64_t>(mat.rows()));
    put_u64(static_cast<std::uint64_t>(mat.cols()));
    f.write(reinterpret_cast<const char*>(mat.data()),
            static_cast<std::streamsize>(sizeof(double) * mat.size()));
  };
  f.write("HWICA1\n", 7);
  put_u64(static_cast<std::uint64_t>(m.n_components));
  put_u64(m.converged ? 1 : 0);
  put_u64(static_cast<std::uint64_t>(m.iterations));
  put_mat(m.whitening);
  put_mat(m.unmixing);
  put_mat(m.mixing);
  put_mat(m.channel_means);
}

inline IcaModel read_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PipelineError("cannot open '" + path.string() + "'");
  char magic[7];
  f.read(magic, 7);
  if (std::string(magic, 7) != "HWICA1\n") throw PipelineError("'" + path.string() + "': bad magic");
  auto get_u64 = [&]() {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto get_mat = [&]() {
    const auto rows = static_cast<long>(get_u64());
    const auto cols = static_cast<long>(get_u64());
    Eigen::MatrixXd mat(rows, cols);
    f.read(reinterpret_cast<char*>(mat.data()),
           static_cast<std::streamsize>(sizeof(double) * mat.size()));
    return mat;
  };
  IcaModel m;
  m.n_components = static_cast<int>(get_u64());
  m.converged = get_u64() != 0;
  m.iterations = static_cast<int>(get_u64());
  m.whitening = get_mat();
  m.unmixing = get_mat();
  m.mixing = get_mat();
  m.channel_means = get_mat();
  if (!f) throw PipelineError("'" + path.string() + "': truncated model file");
  return m;
}

}  // namespace hwbci::ica
