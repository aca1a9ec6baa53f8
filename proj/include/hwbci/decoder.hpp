#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "hwbci/common.hpp"
#include "hwbci/recording.hpp"

namespace hwbci::decoder {

// ---------------------------------------------------------------------------
// Compact convolutional net: temporal conv -> depthwise spatial conv over all
// channels -> separable conv -> dense head, with batch normalization, ELU,
// average pooling and dropout between blocks.
// ---------------------------------------------------------------------------

struct EEGNetConfig {
  int n_channels = 32;
  int n_samples = 100;
  int n_classes = 4;
  int temporal_filters = 8;    // F1
  int depth_multiplier = 2;    // D
  int temporal_kernel_len = 50;
  int separable_kernel_len = 16;
  int pool1 = 4;
  int pool2 = 8;
  double dropout_p1 = 0.25;
  double dropout_p2 = 0.25;
  bool zscore_channels = true;

  int f2() const { return temporal_filters * depth_multiplier; }
  int t1() const { return n_samples / pool1; }
  int t2() const { return t1() / pool2; }

  void validate() const {
    if (temporal_kernel_len > n_samples)
      throw PipelineError("EEGNetConfig: temporal kernel longer than input");
    if (t1() < 1 || t2() < 1) throw PipelineError("EEGNetConfig: pooled temporal length < 1");
    if (n_classes < 2 || n_channels < 1 || temporal_filters < 1 || depth_multiplier < 1)
      throw PipelineError("EEGNetConfig: invalid counts");
  }

  // closed-form trainable parameter count; catches shape drift
  long param_count() const {
    const long F1 = temporal_filters, F2 = f2(), C = n_channels;
    return F1 * temporal_kernel_len + 2 * F1         // conv1 + bn1
           + F2 * C + 2 * F2                         // depthwise spatial + bn2
           + F2 * separable_kernel_len + F2 * F2 + 2 * F2  // separable + bn3
           + static_cast<long>(n_classes) * F2 * t2() + n_classes;  // dense
  }

  std::string fingerprint_text() const {
    std::ostringstream os;
    os << "net:C=" << n_channels << ";T=" << n_samples << ";cls=" << n_classes
       << ";F1=" << temporal_filters << ";D=" << depth_multiplier
       << ";K1=" << temporal_kernel_len << ";K3=" << separable_kernel_len
       << ";p1=" << pool1 << ";p2=" << pool2 << ";do1=" << dropout_p1 << ";do2=" << dropout_p2
       << ";z=" << zscore_channels;
    return os.str();
  }
};

// Offsets of each tensor inside the flat parameter vector.
struct ParamLayout {
  long w1, g1, b1;       // temporal conv, bn1 gamma/beta
  long w2, g2, b2;       // depthwise spatial, bn2
  long w3, w4, g3, b3;   // separable (depthwise temporal + pointwise), bn3
  long wd, bd;           // dense
  long total;

  explicit ParamLayout(const EEGNetConfig& c) {
    const long F1 = c.temporal_filters, F2 = c.f2();
    long off = 0;
    w1 = off; off += F1 * c.temporal_kernel_len;
    g1 = off; off += F1;
    b1 = off; off += F1;
    w2 = off; off += F2 * c.n_channels;
    g2 = off; off += F2;
    b2 = off; off += F2;
    w3 = off; off += F2 * c.separable_kernel_len;
    w4 = off; off += F2 * F2;
    g3 = off; off += F2;
    b3 = off; off += F2;
    wd = off; off += static_cast<long>(c.n_classes) * F2 * c.t2();
    bd = off; off += c.n_classes;
    total = off;
  }
};

struct ModelWeights {
  EEGNetConfig config;
  std::vector<double> params;        // trainable, ParamLayout order
  std::vector<double> running_mean;  // bn1(F1) ++ bn2(F2) ++ bn3(F2)
  std::vector<double> running_var;
  Eigen::VectorXd zscore_mean;  // per-channel, from the training set
  Eigen::VectorXd zscore_std;

  void validate() const {
    config.validate();
    const ParamLayout L(config);
    if (static_cast<long>(params.size()) != L.total)
      throw PipelineError("ModelWeights: parameter vector size != layout");
    for (double v : params)
      if (!std::isfinite(v)) throw PipelineError("ModelWeights: non-finite parameter");
  }
};

struct TrainConfig {
  std::uint64_t seed = 0;
  int batch_size = 64;
  int max_epochs = 300;
  int patience = 50;
  double learning_rate = 1e-3;
  double validation_fraction = 0.2;
  int max_shift_samples = 0;  // 0 disables random_shift augmentation

  void validate() const {
    if (!(validation_fraction > 0 && validation_fraction < 0.5))
      throw PipelineError("TrainConfig: validation_fraction must be in (0, 0.5)");
    if (batch_size < 1 || max_epochs < 1 || learning_rate <= 0)
      throw PipelineError("TrainConfig: invalid values");
  }

  std::string fingerprint_text() const {
    std::ostringstream os;
    os << "train:seed=" << seed << ";bs=" << batch_size << ";ep=" << max_epochs
       << ";pat=" << patience << ";lr=" << learning_rate << ";vf=" << validation_fraction
       << ";shift=" << max_shift_samples;
    return os.str();
  }
};

struct EpochStats {
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};
using TrainHistory = std::vector<EpochStats>;

namespace detail {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// All per-batch activations kept for the backward pass.
struct BatchCache {
  int B = 0;
  // layout helpers: x[b*C*T + c*T + t], a1[((b*F1+f)*C+c)*T+t], a2[(b*F2+f)*T+t]
  std::vector<double> x;
  std::vector<double> a1, a1n;            // conv1 out, bn1 normalized
  std::vector<double> mu1, var1;          // per F1
  std::vector<double> a2, a2n, e2;        // spatial conv, bn2 normalized, elu
  std::vector<double> mu2, var2;
  std::vector<double> p1, m1;             // pool1 out, dropout1 mask (scale factors)
  std::vector<double> a3, a4, a4n, e3;    // depthwise temporal, pointwise, bn3 norm, elu
  std::vector<double> mu3, var3;
  std::vector<double> p2, m2;
  std::vector<double> logits, probs;
};

inline double elu(double v) { return v > 0 ? v : std::expm1(v); }
inline double elu_grad(double v, double fv) { return v > 0 ? 1.0 : fv + 1.0; }

// Batchnorm over a set of (group -> element list) with per-feature gamma/beta.
// Caller supplies contiguous strided access through lambdas kept simple by
// operating on raw arrays below.

class Network {
public:
  explicit Network(const EEGNetConfig& cfg) : cfg_(cfg), L_(cfg) { cfg_.validate(); }

  const ParamLayout& layout() const { return L_; }

  // Forward for a batch.  training=true uses batch statistics (updating the
  // running ones) and dropout; inference uses running statistics, no dropout.
  void forward(const std::vector<double>& params, std::vector<double>& running_mean,
               std::vector<double>& running_var, BatchCache& cc, bool training,
               Rng* dropout_rng) const {
    const int B = cc.B, C = cfg_.n_channels, T = cfg_.n_samples;
    const int F1 = cfg_.temporal_filters, F2 = cfg_.f2(), D = cfg_.depth_multiplier;
    const int K1 = cfg_.temporal_kernel_len, K3 = cfg_.separable_kernel_len;
    const int T1 = cfg_.t1(), T2 = cfg_.t2();
    const int pad1 = K1 / 2, pad3 = K3 / 2;
    const double* P = params.data();

    // --- block 1: temporal convolution (same padding), per example dgemm ---
    cc.a1.assign(static_cast<size_t>(B) * F1 * C * T, 0.0);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        w1(P + L_.w1, F1, K1);
    {
      Eigen::MatrixXd xcol(K1, static_cast<long>(C) * T);
      for (int b = 0; b < B; ++b) {
        const double* xb = cc.x.data() + static_cast<size_t>(b) * C * T;
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t)
            for (int k = 0; k < K1; ++k) {
              const int src = t + k - pad1;
              xcol(k, static_cast<long>(c) * T + t) =
                  (src >= 0 && src < T) ? xb[static_cast<size_t>(c) * T + src] : 0.0;
            }
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> out(
            cc.a1.data() + static_cast<size_t>(b) * F1 * C * T, F1, static_cast<long>(C) * T);
        out.noalias() = w1 * xcol;
      }
    }

    // --- bn1 over (B, C, T) per temporal filter ---
    batchnorm_forward(cc.a1, cc.a1n, cc.mu1, cc.var1, params, running_mean, running_var, L_.g1,
                      L_.b1, 0, F1, static_cast<long>(B), static_cast<long>(C) * T, training);

    // --- depthwise spatial convolution: collapses the channel axis ---
    cc.a2.assign(static_cast<size_t>(B) * F2 * T, 0.0);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F2; ++f) {
        const int f1 = f / D;
        const double* w = P + L_.w2 + static_cast<size_t>(f) * C;
        double* out = cc.a2.data() + (static_cast<size_t>(b) * F2 + f) * T;
        const double* in = cc.a1n.data() + ((static_cast<size_t>(b) * F1 + f1) * C) * T;
        for (int c = 0; c < C; ++c) {
          const double wc = w[c];
          const double* row = in + static_cast<size_t>(c) * T;
          for (int t = 0; t < T; ++t) out[t] += wc * row[t];
        }
      }

    batchnorm_forward(cc.a2, cc.a2n, cc.mu2, cc.var2, params, running_mean, running_var, L_.g2,
                      L_.b2, F1, F2, static_cast<long>(B), T, training);

    cc.e2.resize(cc.a2n.size());
    for (size_t i = 0; i < cc.a2n.size(); ++i) cc.e2[i] = elu(cc.a2n[i]);

    avgpool_forward(cc.e2, cc.p1, B, F2, T, cfg_.pool1);
    dropout_forward(cc.p1, cc.m1, cfg_.dropout_p1, training, dropout_rng);

    // --- block 2: separable convolution (depthwise temporal + pointwise) ---
    cc.a3.assign(static_cast<size_t>(B) * F2 * T1, 0.0);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F2; ++f) {
        const double* w = P + L_.w3 + static_cast<size_t>(f) * K3;
        const double* in = cc.p1.data() + (static_cast<size_t>(b) * F2 + f) * T1;
        double* out = cc.a3.data() + (static_cast<size_t>(b) * F2 + f) * T1;
        for (int t = 0; t < T1; ++t) {
          double acc = 0;
          for (int k = 0; k < K3; ++k) {
            const int src = t + k - pad3;
            if (src >= 0 && src < T1) acc += w[k] * in[src];
          }
          out[t] = acc;
        }
      }
    cc.a4.assign(static_cast<size_t>(B) * F2 * T1, 0.0);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        w4(P + L_.w4, F2, F2);
    for (int b = 0; b < B; ++b) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          in(cc.a3.data() + static_cast<size_t>(b) * F2 * T1, F2, T1);
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> out(
          cc.a4.data() + static_cast<size_t>(b) * F2 * T1, F2, T1);
      out.noalias() = w4 * in;
    }

    batchnorm_forward(cc.a4, cc.a4n, cc.mu3, cc.var3, params, running_mean, running_var, L_.g3,
                      L_.b3, F1 + F2, F2, static_cast<long>(B), T1, training);

    cc.e3.resize(cc.a4n.size());
    for (size_t i = 0; i < cc.a4n.size(); ++i) cc.e3[i] = elu(cc.a4n[i]);

    avgpool_forward(cc.e3, cc.p2, B, F2, T1, cfg_.pool2);
    dropout_forward(cc.p2, cc.m2, cfg_.dropout_p2, training, dropout_rng);

    // --- dense + softmax ---
    const int ncls = cfg_.n_classes;
    const long feat = static_cast<long>(F2) * T2;
    cc.logits.assign(static_cast<size_t>(B) * ncls, 0.0);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        wd(P + L_.wd, ncls, feat);
    for (int b = 0; b < B; ++b) {
      Eigen::Map<const Eigen::VectorXd> fvec(cc.p2.data() + static_cast<size_t>(b) * feat, feat);
      Eigen::Map<Eigen::VectorXd> lg(cc.logits.data() + static_cast<size_t>(b) * ncls, ncls);
      lg.noalias() = wd * fvec;
      for (int k = 0; k < ncls; ++k) lg(k) += P[L_.bd + k];
    }
    cc.probs.resize(cc.logits.size());
    for (int b = 0; b < B; ++b) {
      const double* lg = cc.logits.data() + static_cast<size_t>(b) * ncls;
      double* pr = cc.probs.data() + static_cast<size_t>(b) * ncls;
      const double mx = *std::max_element(lg, lg + ncls);
      double sum = 0;
      for (int k = 0; k < ncls; ++k) sum += (pr[k] = std::exp(lg[k] - mx));
      for (int k = 0; k < ncls; ++k) pr[k] /= sum;
    }
  }

  // Mean cross-entropy over the batch; fills grad (same layout as params).
  double backward(const std::vector<double>& params, const BatchCache& cc,
                  const std::vector<int>& labels, std::vector<double>& grad) const {
    const int B = cc.B, C = cfg_.n_channels, T = cfg_.n_samples;
    const int F1 = cfg_.temporal_filters, F2 = cfg_.f2(), D = cfg_.depth_multiplier;
    const int K1 = cfg_.temporal_kernel_len, K3 = cfg_.separable_kernel_len;
    const int T1 = cfg_.t1(), T2 = cfg_.t2();
    const int pad1 = K1 / 2, pad3 = K3 / 2;
    const int ncls = cfg_.n_classes;
    const long feat = static_cast<long>(F2) * T2;
    const double* P = params.data();
    grad.assign(params.size(), 0.0);
    double* G = grad.data();

    double loss = 0;
    std::vector<double> dlogits(static_cast<size_t>(B) * ncls);
    for (int b = 0; b < B; ++b) {
      const double* pr = cc.probs.data() + static_cast<size_t>(b) * ncls;
      loss -= std::log(std::max(pr[labels[static_cast<size_t>(b)]], 1e-300));
      for (int k = 0; k < ncls; ++k)
        dlogits[static_cast<size_t>(b) * ncls + k] =
            (pr[k] - (k == labels[static_cast<size_t>(b)] ? 1.0 : 0.0)) / B;
    }
    loss /= B;
    if (!std::isfinite(loss)) throw PipelineError("training diverged: non-finite loss");

    // dense
    std::vector<double> dp2(static_cast<size_t>(B) * feat, 0.0);
    {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          wd(P + L_.wd, ncls, feat);
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gwd(
          G + L_.wd, ncls, feat);
      for (int b = 0; b < B; ++b) {
        Eigen::Map<const Eigen::VectorXd> dl(dlogits.data() + static_cast<size_t>(b) * ncls, ncls);
        Eigen::Map<const Eigen::VectorXd> fvec(cc.p2.data() + static_cast<size_t>(b) * feat, feat);
        Eigen::Map<Eigen::VectorXd> dfv(dp2.data() + static_cast<size_t>(b) * feat, feat);
        gwd.noalias() += dl * fvec.transpose();
        dfv.noalias() = wd.transpose() * dl;
        for (int k = 0; k < ncls; ++k) G[L_.bd + k] += dl(k);
      }
    }

    dropout_backward(dp2, cc.m2);
    std::vector<double> de3;
    avgpool_backward(dp2, de3, B, F2, T1, cfg_.pool2);
    for (size_t i = 0; i < de3.size(); ++i) de3[i] *= elu_grad(cc.a4n[i], cc.e3[i]);

    std::vector<double> da4;
    batchnorm_backward(de3, cc.a4n, cc.var3, params, L_.g3, L_.b3, F1 + F2, F2,
                       static_cast<long>(B), T1, G, da4);

    // pointwise
    std::vector<double> da3(static_cast<size_t>(B) * F2 * T1, 0.0);
    {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          w4(P + L_.w4, F2, F2);
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw4(
          G + L_.w4, F2, F2);
      for (int b = 0; b < B; ++b) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            in(cc.a3.data() + static_cast<size_t>(b) * F2 * T1, F2, T1);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            dout(da4.data() + static_cast<size_t>(b) * F2 * T1, F2, T1);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> din(
            da3.data() + static_cast<size_t>(b) * F2 * T1, F2, T1);
        gw4.noalias() += dout * in.transpose();
        din.noalias() = w4.transpose() * dout;
      }
    }

    // depthwise temporal
    std::vector<double> dp1(static_cast<size_t>(B) * F2 * T1, 0.0);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F2; ++f) {
        const double* w = P + L_.w3 + static_cast<size_t>(f) * K3;
        double* gw = G + L_.w3 + static_cast<size_t>(f) * K3;
        const double* in = cc.p1.data() + (static_cast<size_t>(b) * F2 + f) * T1;
        const double* dout = da3.data() + (static_cast<size_t>(b) * F2 + f) * T1;
        double* din = dp1.data() + (static_cast<size_t>(b) * F2 + f) * T1;
        for (int t = 0; t < T1; ++t)
          for (int k = 0; k < K3; ++k) {
            const int src = t + k - pad3;
            if (src >= 0 && src < T1) {
              gw[k] += dout[t] * in[src];
              din[src] += dout[t] * w[k];
            }
          }
      }

    dropout_backward(dp1, cc.m1);
    std::vector<double> de2;
    avgpool_backward(dp1, de2, B, F2, T, cfg_.pool1);
    for (size_t i = 0; i < de2.size(); ++i) de2[i] *= elu_grad(cc.a2n[i], cc.e2[i]);

    std::vector<double> da2;
    batchnorm_backward(de2, cc.a2n, cc.var2, params, L_.g2, L_.b2, F1, F2, static_cast<long>(B), T,
                       G, da2);

    // depthwise spatial: accumulate over channels
    std::vector<double> da1n(static_cast<size_t>(B) * F1 * C * T, 0.0);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F2; ++f) {
        const int f1 = f / D;
        const double* w = P + L_.w2 + static_cast<size_t>(f) * C;
        double* gw = G + L_.w2 + static_cast<size_t>(f) * C;
        const double* dout = da2.data() + (static_cast<size_t>(b) * F2 + f) * T;
        const double* in = cc.a1n.data() + ((static_cast<size_t>(b) * F1 + f1) * C) * T;
        double* din = da1n.data() + ((static_cast<size_t>(b) * F1 + f1) * C) * T;
        for (int c = 0; c < C; ++c) {
          const double* row = in + static_cast<size_t>(c) * T;
          double* drow = din + static_cast<size_t>(c) * T;
          double acc = 0;
          const double wc = w[c];
          for (int t = 0; t < T; ++t) {
            acc += dout[t] * row[t];
            drow[t] += wc * dout[t];
          }
          gw[c] += acc;
        }
      }

    std::vector<double> da1;
    batchnorm_backward(da1n, cc.a1n, cc.var1, params, L_.g1, L_.b1, 0, F1, static_cast<long>(B),
                       static_cast<long>(C) * T, G, da1);

    // temporal conv weight gradient (input gradient not needed)
    {
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw1(
          G + L_.w1, F1, K1);
      Eigen::MatrixXd xcol(K1, static_cast<long>(C) * T);
      for (int b = 0; b < B; ++b) {
        const double* xb = cc.x.data() + static_cast<size_t>(b) * C * T;
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T; ++t)
            for (int k = 0; k < K1; ++k) {
              const int src = t + k - pad1;
              xcol(k, static_cast<long>(c) * T + t) =
                  (src >= 0 && src < T) ? xb[static_cast<size_t>(c) * T + src] : 0.0;
            }
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            dout(da1.data() + static_cast<size_t>(b) * F1 * C * T, F1, static_cast<long>(C) * T);
        gw1.noalias() += dout * xcol.transpose();
      }
    }
    return loss;
  }

private:
  EEGNetConfig cfg_;
  ParamLayout L_;

  // feature index f in [0, n_feat); running-stat slot = run_offset + f.
  // Values laid out as [group][feature][inner] with group = batch example.
  void batchnorm_forward(const std::vector<double>& in, std::vector<double>& out_norm,
                         std::vector<double>& mu, std::vector<double>& var,
                         const std::vector<double>& params, std::vector<double>& running_mean,
                         std::vector<double>& running_var, long gamma_off, long beta_off,
                         long run_offset, int n_feat, long n_groups, long inner,
                         bool training) const {
    out_norm.resize(in.size());
    mu.assign(static_cast<size_t>(n_feat), 0.0);
    var.assign(static_cast<size_t>(n_feat), 0.0);
    const double n_elems = static_cast<double>(n_groups * inner);
    for (int f = 0; f < n_feat; ++f) {
      double m = 0, v = 0;
      if (training) {
        for (long g = 0; g < n_groups; ++g) {
          const double* p = in.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
          for (long i = 0; i < inner; ++i) m += p[i];
        }
        m /= n_elems;
        for (long g = 0; g < n_groups; ++g) {
          const double* p = in.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
          for (long i = 0; i < inner; ++i) v += (p[i] - m) * (p[i] - m);
        }
        v /= n_elems;
        running_mean[static_cast<size_t>(run_offset + f)] =
            (1 - kBnMomentum) * running_mean[static_cast<size_t>(run_offset + f)] + kBnMomentum * m;
        running_var[static_cast<size_t>(run_offset + f)] =
            (1 - kBnMomentum) * running_var[static_cast<size_t>(run_offset + f)] + kBnMomentum * v;
      } else {
        m = running_mean[static_cast<size_t>(run_offset + f)];
        v = running_var[static_cast<size_t>(run_offset + f)];
      }
      mu[static_cast<size_t>(f)] = m;
      var[static_cast<size_t>(f)] = v;
      const double inv_std = 1.0 / std::sqrt(v + kBnEps);
      const double gamma = params[static_cast<size_t>(gamma_off + f)];
      const double beta = params[static_cast<size_t>(beta_off + f)];
      for (long g = 0; g < n_groups; ++g) {
        const double* p = in.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
        double* q = out_norm.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
        for (long i = 0; i < inner; ++i) q[i] = gamma * ((p[i] - m) * inv_std) + beta;
      }
    }
  }

  // dout is d(loss)/d(bn output); computes gamma/beta gradients and
  // d(loss)/d(bn input) using batch statistics.
  void batchnorm_backward(const std::vector<double>& dout, const std::vector<double>& out_norm,
                          const std::vector<double>& var, const std::vector<double>& params,
                          long gamma_off, long beta_off, long /*run_offset*/, int n_feat,
                          long n_groups, long inner, double* grad, std::vector<double>& din) const {
    din.resize(dout.size());
    const double n_elems = static_cast<double>(n_groups * inner);
    for (int f = 0; f < n_feat; ++f) {
      const double gamma = params[static_cast<size_t>(gamma_off + f)];
      const double beta = params[static_cast<size_t>(beta_off + f)];
      const double inv_std = 1.0 / std::sqrt(var[static_cast<size_t>(f)] + kBnEps);
      double sum_dy = 0, sum_dy_xhat = 0;
      for (long g = 0; g < n_groups; ++g) {
        const double* dy = dout.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
        const double* yn = out_norm.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
        for (long i = 0; i < inner; ++i) {
          const double xhat = (yn[i] - beta) / gamma;
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * xhat;
        }
      }
      grad[gamma_off + f] += sum_dy_xhat;
      grad[beta_off + f] += sum_dy;
      const double mean_dy = sum_dy / n_elems;
      const double mean_dy_xhat = sum_dy_xhat / n_elems;
      for (long g = 0; g < n_groups; ++g) {
        const double* dy = dout.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
        const double* yn = out_norm.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
        double* dx = din.data() + (static_cast<size_t>(g) * n_feat + f) * inner;
        for (long i = 0; i < inner; ++i) {
          const double xhat = (yn[i] - beta) / gamma;
          dx[i] = gamma * inv_std * (dy[i] - mean_dy - xhat * mean_dy_xhat);
        }
      }
    }
  }

  static void avgpool_forward(const std::vector<double>& in, std::vector<double>& out, int B,
                              int F, int T, int pool) {
    const int To = T / pool;
    out.assign(static_cast<size_t>(B) * F * To, 0.0);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F; ++f) {
        const double* p = in.data() + (static_cast<size_t>(b) * F + f) * T;
        double* q = out.data() + (static_cast<size_t>(b) * F + f) * To;
        for (int t = 0; t < To; ++t) {
          double acc = 0;
          for (int k = 0; k < pool; ++k) acc += p[t * pool + k];
          q[t] = acc / pool;
        }
      }
  }

  static void avgpool_backward(const std::vector<double>& dout, std::vector<double>& din, int B,
                               int F, int T, int pool) {
    const int To = T / pool;
    din.assign(static_cast<size_t>(B) * F * T, 0.0);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F; ++f) {
        const double* dq = dout.data() + (static_cast<size_t>(b) * F + f) * To;
        double* dp = din.data() + (static_cast<size_t>(b) * F + f) * T;
        for (int t = 0; t < To; ++t)
          for (int k = 0; k < pool; ++k) dp[t * pool + k] = dq[t] / pool;
      }
  }

  // Inverted dropout; mask holds the applied scale so backward reuses it.
  static void dropout_forward(std::vector<double>& x, std::vector<double>& mask, double p,
                              bool training, Rng* rng) {
    mask.assign(x.size(), 1.0);
    if (!training || p <= 0.0 || rng == nullptr) return;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < x.size(); ++i) {
      mask[i] = (uni(*rng) < p) ? 0.0 : scale;
      x[i] *= mask[i];
    }
  }

  static void dropout_backward(std::vector<double>& dx, const std::vector<double>& mask) {
    for (size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  }
};

inline void fill_batch_input(const EEGNetConfig& cfg, const ModelWeights& w,
                             const std::vector<const Eigen::MatrixXf*>& batch, BatchCache& cc,
                             const std::vector<int>* shifts = nullptr) {
  const int C = cfg.n_channels, T = cfg.n_samples;
  cc.B = static_cast<int>(batch.size());
  cc.x.assign(static_cast<size_t>(cc.B) * C * T, 0.0);
  for (int b = 0; b < cc.B; ++b) {
    const Eigen::MatrixXf& m = *batch[static_cast<size_t>(b)];
    if (m.rows() != C || m.cols() != T)
      throw PipelineError("decoder: epoch shape " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + " does not match net config");
    const int shift = shifts ? (*shifts)[static_cast<size_t>(b)] : 0;
    for (int c = 0; c < C; ++c) {
      const double mean = cfg.zscore_channels ? w.zscore_mean(c) : 0.0;
      const double inv = cfg.zscore_channels ? 1.0 / w.zscore_std(c) : 1.0;
      for (int t = 0; t < T; ++t) {
        int src = t - shift;
        if (src < 0) src = -src;                      // edge reflection
        if (src >= T) src = 2 * (T - 1) - src;
        cc.x[(static_cast<size_t>(b) * C + c) * T + t] = (m(c, src) - mean) * inv;
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

inline Eigen::VectorXd forward(const ModelWeights& weights, const Eigen::MatrixXf& epoch_data) {
  weights.validate();
  detail::Network net(weights.config);
  detail::BatchCache cc;
  detail::fill_batch_input(weights.config, weights, {&epoch_data}, cc);
  std::vector<double> rm = weights.running_mean, rv = weights.running_var;
  net.forward(weights.params, rm, rv, cc, /*training=*/false, nullptr);
  Eigen::VectorXd probs(weights.config.n_classes);
  for (int k = 0; k < weights.config.n_classes; ++k) probs(k) = cc.probs[static_cast<size_t>(k)];
  return probs;
}

inline std::vector<Eigen::VectorXd> forward_batch(const ModelWeights& weights,
                                                  const std::vector<const Eigen::MatrixXf*>& data) {
  weights.validate();
  detail::Network net(weights.config);
  std::vector<Eigen::VectorXd> out;
  out.reserve(data.size());
  std::vector<double> rm = weights.running_mean, rv = weights.running_var;
  const size_t chunk = 256;
  for (size_t start = 0; start < data.size(); start += chunk) {
    const size_t end = std::min(data.size(), start + chunk);
    std::vector<const Eigen::MatrixXf*> slice(data.begin() + static_cast<long>(start),
                                              data.begin() + static_cast<long>(end));
    detail::BatchCache cc;
    detail::fill_batch_input(weights.config, weights, slice, cc);
    net.forward(weights.params, rm, rv, cc, false, nullptr);
    for (size_t b = 0; b < slice.size(); ++b) {
      Eigen::VectorXd p(weights.config.n_classes);
      for (int k = 0; k < weights.config.n_classes; ++k)
        p(k) = cc.probs[b * static_cast<size_t>(weights.config.n_classes) + static_cast<size_t>(k)];
      out.push_back(std::move(p));
    }
  }
  return out;
}

// Elementwise mean of the raw epochs first, then a single forward pass.
inline Eigen::VectorXd predict_averaged(const ModelWeights& weights,
                                        const std::vector<const Eigen::MatrixXf*>& epochs) {
  if (epochs.empty()) throw PipelineError("predict_averaged: need at least one epoch");
  Eigen::MatrixXf mean = *epochs.front();
  for (size_t i = 1; i < epochs.size(); ++i) {
    if (epochs[i]->rows() != mean.rows() || epochs[i]->cols() != mean.cols())
      throw PipelineError("predict_averaged: mixed epoch shapes");
    mean += *epochs[i];
  }
  mean /= static_cast<float>(epochs.size());
  return forward(weights, mean);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

inline void init_weights(ModelWeights& w, Rng& rng) {
  const EEGNetConfig& c = w.config;
  const ParamLayout L(c);
  w.params.assign(static_cast<size_t>(L.total), 0.0);
  w.running_mean.assign(static_cast<size_t>(c.temporal_filters + 2 * c.f2()), 0.0);
  w.running_var.assign(static_cast<size_t>(c.temporal_filters + 2 * c.f2()), 1.0);

  auto glorot = [&](long off, long count, long fan_in, long fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    for (long i = 0; i < count; ++i) w.params[static_cast<size_t>(off + i)] = uni(rng);
  };
  const long F1 = c.temporal_filters, F2 = c.f2();
  glorot(L.w1, F1 * c.temporal_kernel_len, c.temporal_kernel_len, c.temporal_kernel_len);
  glorot(L.w2, F2 * c.n_channels, c.n_channels, 1);
  glorot(L.w3, F2 * c.separable_kernel_len, c.separable_kernel_len, c.separable_kernel_len);
  glorot(L.w4, F2 * F2, F2, F2);
  glorot(L.wd, static_cast<long>(c.n_classes) * F2 * c.t2(), F2 * c.t2(), c.n_classes);
  for (long i = 0; i < F1; ++i) w.params[static_cast<size_t>(L.g1 + i)] = 1.0;
  for (long i = 0; i < F2; ++i) w.params[static_cast<size_t>(L.g2 + i)] = 1.0;
  for (long i = 0; i < F2; ++i) w.params[static_cast<size_t>(L.g3 + i)] = 1.0;
}

struct Adam {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;

  explicit Adam(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

}  // namespace detail

inline std::pair<ModelWeights, TrainHistory> train(const EpochDataset& train_set,
                                                   const TrainConfig& tc, const EEGNetConfig& net_cfg) {
  tc.validate();
  net_cfg.validate();
  train_set.validate();
  const int ncls = net_cfg.n_classes;
  const auto counts = train_set.class_counts();
  for (int k = 0; k < ncls; ++k)
    if (counts[static_cast<size_t>(k)] < 2)
      throw PipelineError("train: need at least 2 examples of class " +
                          std::string(1, letter_alphabet()[static_cast<size_t>(k)]));

  Rng rng(derive_seed(tc.seed, "train"));

  // stratified train / validation split
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(ncls));
  for (size_t i = 0; i < train_set.size(); ++i)
    by_class[static_cast<size_t>(letter_class_index(train_set.epochs[i].label))].push_back(i);
  std::vector<size_t> train_idx, val_idx;
  for (auto& idxs : by_class) {
    std::shuffle(idxs.begin(), idxs.end(), rng);
    size_t n_val = std::max<size_t>(1, static_cast<size_t>(std::floor(
                                            static_cast<double>(idxs.size()) * tc.validation_fraction)));
    n_val = std::min(n_val, idxs.size() - 1);
    val_idx.insert(val_idx.end(), idxs.begin(), idxs.begin() + static_cast<long>(n_val));
    train_idx.insert(train_idx.end(), idxs.begin() + static_cast<long>(n_val), idxs.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  ModelWeights w;
  w.config = net_cfg;
  detail::init_weights(w, rng);

  // per-channel z-score statistics from the training split
  w.zscore_mean = Eigen::VectorXd::Zero(net_cfg.n_channels);
  w.zscore_std = Eigen::VectorXd::Ones(net_cfg.n_channels);
  if (net_cfg.zscore_channels) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(net_cfg.n_channels);
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(net_cfg.n_channels);
    long n = 0;
    for (size_t i : train_idx) {
      const auto m = train_set.epochs[i].data.cast<double>();
      sum += m.rowwise().sum();
      sumsq += m.array().square().matrix().rowwise().sum();
      n += m.cols();
    }
    w.zscore_mean = sum / static_cast<double>(n);
    const Eigen::VectorXd var =
        (sumsq / static_cast<double>(n) - w.zscore_mean.array().square().matrix()).cwiseMax(0.0);
    w.zscore_std = (var.array().sqrt() + 1e-12).matrix();
  }

  detail::Network net(net_cfg);
  detail::Adam adam(w.params.size());
  Rng dropout_rng(derive_seed(tc.seed, "dropout"));
  Rng shuffle_rng(derive_seed(tc.seed, "shuffle"));
  Rng shift_rng(derive_seed(tc.seed, "shift"));

  TrainHistory history;
  ModelWeights best = w;
  double best_val_acc = -1.0;
  int epochs_since_best = 0;

  std::vector<double> grad;
  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    double epoch_loss = 0;
    long correct = 0, seen = 0;
    for (size_t start = 0; start < train_idx.size(); start += static_cast<size_t>(tc.batch_size)) {
      const size_t end = std::min(train_idx.size(), start + static_cast<size_t>(tc.batch_size));
      std::vector<const Eigen::MatrixXf*> batch;
      std::vector<int> labels, shifts;
      for (size_t i = start; i < end; ++i) {
        batch.push_back(&train_set.epochs[train_idx[i]].data);
        labels.push_back(letter_class_index(train_set.epochs[train_idx[i]].label));
        if (tc.max_shift_samples > 0) {
          std::uniform_int_distribution<int> d(-tc.max_shift_samples, tc.max_shift_samples);
          shifts.push_back(d(shift_rng));
        }
      }
      detail::BatchCache cc;
      detail::fill_batch_input(net_cfg, w, batch, cc, shifts.empty() ? nullptr : &shifts);
      net.forward(w.params, w.running_mean, w.running_var, cc, /*training=*/true, &dropout_rng);
      const double loss = net.backward(w.params, cc, labels, grad);
      adam.step(w.params, grad, tc.learning_rate);
      epoch_loss += loss * static_cast<double>(end - start);
      for (size_t b = 0; b < batch.size(); ++b) {
        const double* pr = cc.probs.data() + b * static_cast<size_t>(ncls);
        const int pred = static_cast<int>(std::max_element(pr, pr + ncls) - pr);
        if (pred == labels[b]) ++correct;
        ++seen;
      }
    }

    EpochStats st;
    st.train_loss = epoch_loss / static_cast<double>(seen);
    st.train_acc = static_cast<double>(correct) / static_cast<double>(seen);

    // validation in inference mode
    {
      std::vector<const Eigen::MatrixXf*> vdata;
      for (size_t i : val_idx) vdata.push_back(&train_set.epochs[i].data);
      const auto probs = forward_batch(w, vdata);
      long vc = 0;
      double vl = 0;
      for (size_t i = 0; i < val_idx.size(); ++i) {
        const int y = letter_class_index(train_set.epochs[val_idx[i]].label);
        Eigen::Index pred;
        probs[i].maxCoeff(&pred);
        if (static_cast<int>(pred) == y) ++vc;
        vl -= std::log(std::max(probs[i](y), 1e-300));
      }
      st.val_acc = static_cast<double>(vc) / static_cast<double>(val_idx.size());
      st.val_loss = vl / static_cast<double>(val_idx.size());
    }
    history.push_back(st);

    if (st.val_acc > best_val_acc) {
      best_val_acc = st.val_acc;
      best = w;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= tc.patience) {
      break;
    }
  }
  return {std::move(best), std::move(history)};
}

// ---------------------------------------------------------------------------
// Weight persistence: versioned binary with the config embedded.
// ---------------------------------------------------------------------------

inline void write_weights(const ModelWeights& w, const std::filesystem::path& path) {
  w.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PipelineError("cannot open '" + path.string() + "' for writing");
  f.write("HWNET1\n", 7);
  auto put_i64 = [&](std::int64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  auto put_f64 = [&](double v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  auto put_vec = [&](const std::vector<double>& v) {
    put_i64(static_cast<std::int64_t>(v.size()));
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  const auto& c = w.config;
  for (int v : {c.n_channels, c.n_samples, c.n_classes, c.temporal_filters, c.depth_multiplier,
                c.temporal_kernel_len, c.separable_kernel_len, c.pool1, c.pool2,
                c.zscore_channels ? 1 : 0})
    put_i64(v);
  put_f64(c.dropout_p1);
  put_f64(c.dropout_p2);
  put_vec(w.params);
  put_vec(w.running_mean);
  put_vec(w.running_var);
  put_i64(w.zscore_mean.size());
  f.write(reinterpret_cast<const char*>(w.zscore_mean.data()),
          static_cast<std::streamsize>(sizeof(double) * w.zscore_mean.size()));
  f.write(reinterpret_cast<const char*>(w.zscore_std.data()),
          static_cast<std::streamsize>(sizeof(double) * w.zscore_std.size()));
}

inline ModelWeights read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PipelineError("cannot open '" + path.string() + "'");
  char magic[7];
  f.read(magic, 7);
  if (std::string(magic, 7) != "HWNET1\n") throw PipelineError("'" + path.string() + "': bad magic");
  auto get_i64 = [&]() {
    std::int64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto get_f64 = [&]() {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto get_vec = [&]() {
    std::vector<double> v(static_cast<size_t>(get_i64()));
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
    return v;
  };
  ModelWeights w;
  auto& c = w.config;
  c.n_channels = static_cast<int>(get_i64());
  c.n_samples = static_cast<int>(get_i64());
  c.n_classes = static_cast<int>(get_i64());
  c.temporal_filters = static_cast<int>(get_i64());
  c.depth_multiplier = static_cast<int>(get_i64());
  c.temporal_kernel_len = static_cast<int>(get_i64());
  c.separable_kernel_len = static_cast<int>(get_i64());
  c.pool1 = static_cast<int>(get_i64());
  c.pool2 = static_cast<int>(get_i64());
  c.zscore_channels = get_i64() != 0;
  c.dropout_p1 = get_f64();
  c.dropout_p2 = get_f64();
  w.params = get_vec();
  w.running_mean = get_vec();
  w.running_var = get_vec();
  const long nz = static_cast<long>(get_i64());
  w.zscore_mean.resize(nz);
  w.zscore_std.resize(nz);
  f.read(reinterpret_cast<char*>(w.zscore_mean.data()),
         static_cast<std::streamsize>(sizeof(double) * nz));
  f.read(reinterpret_cast<char*>(w.zscore_std.data()),
         static_cast<std::streamsize>(sizeof(double) * nz));
  if (!f) throw PipelineError("'" + path.string() + "': truncated weights file");
  w.validate();
  return w;
}

}  // namespace hwbci::decoder
