#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "hwbci/decoder.hpp"

using namespace hwbci;
using decoder::EEGNetConfig;
using decoder::ModelWeights;
using decoder::ParamLayout;
using decoder::TrainConfig;

namespace {

EEGNetConfig tiny_config() {
  EEGNetConfig c;
  c.n_channels = 4;
  c.n_samples = 20;
  c.temporal_filters = 2;
  c.depth_multiplier = 1;
  c.temporal_kernel_len = 5;
  c.separable_kernel_len = 4;
  c.pool1 = 2;
  c.pool2 = 2;
  c.dropout_p1 = c.dropout_p2 = 0.0;  // deterministic loss for gradient checking
  c.zscore_channels = false;
  return c;
}

ModelWeights random_weights(const EEGNetConfig& cfg, std::uint64_t seed) {
  ModelWeights w;
  w.config = cfg;
  Rng rng(seed);
  decoder::detail::init_weights(w, rng);
  w.zscore_mean = Eigen::VectorXd::Zero(cfg.n_channels);
  w.zscore_std = Eigen::VectorXd::Ones(cfg.n_channels);
  return w;
}

// Four-class toy problem: class k puts a distinct sinusoid on channel k.
EpochDataset toy_dataset(const EEGNetConfig& cfg, int per_class, std::uint64_t seed,
                         double noise = 0.3) {
  EpochDataset ds;
  ds.sample_rate_hz = 100.0;
  for (int c = 0; c < cfg.n_channels; ++c) ds.channel_names.push_back("ch" + std::to_string(c));
  Rng rng(seed);
  std::normal_distribution<float> g(0.f, static_cast<float>(noise));
  const double freqs[4] = {3.0, 7.0, 13.0, 21.0};
  for (int i = 0; i < per_class * 4; ++i) {
    const int cls = i % 4;
    Epoch e;
    e.label = letter_alphabet()[static_cast<size_t>(cls)];
    e.data.resize(cfg.n_channels, cfg.n_samples);
    for (int c = 0; c < cfg.n_channels; ++c)
      for (int t = 0; t < cfg.n_samples; ++t) {
        const double s = (c == cls % cfg.n_channels)
                             ? std::sin(2.0 * std::numbers::pi * freqs[cls] * t / 100.0)
                             : 0.0;
        e.data(c, t) = static_cast<float>(s) + g(rng);
      }
    e.onset_time_s = i;
    ds.epochs.push_back(std::move(e));
  }
  return ds;
}

}  // namespace

TEST_CASE("closed-form parameter count matches the layout") {
  for (const EEGNetConfig& c : {EEGNetConfig{}, tiny_config()}) {
    const ParamLayout L(c);
    REQUIRE(c.param_count() == L.total);
  }
  // default config, by-hand arithmetic:
  // conv1 8*50 + bn 16, spatial 16*32 + bn 32, separable 16*16 + 256 + bn 32,
  // dense 4*(16*3) + 4
  EEGNetConfig def;
  REQUIRE(def.param_count() == 400 + 16 + 512 + 32 + 256 + 256 + 32 + 192 + 4);
}

TEST_CASE("config validation") {
  EEGNetConfig c = tiny_config();
  c.temporal_kernel_len = 25;  // longer than input
  REQUIRE_THROWS_AS(c.validate(), PipelineError);
  c = tiny_config();
  c.pool1 = 30;
  REQUIRE_THROWS_AS(c.validate(), PipelineError);
  TrainConfig t;
  t.validation_fraction = 0.7;
  REQUIRE_THROWS_AS(t.validate(), PipelineError);
}

TEST_CASE("zeroed head yields the uniform distribution") {
  const EEGNetConfig cfg = tiny_config();
  ModelWeights w = random_weights(cfg, 0);
  const ParamLayout L(cfg);
  for (long i = L.wd; i < L.total; ++i) w.params[static_cast<size_t>(i)] = 0.0;
  const Eigen::MatrixXf x = Eigen::MatrixXf::Random(cfg.n_channels, cfg.n_samples);
  const Eigen::VectorXd p = decoder::forward(w, x);
  REQUIRE(p.size() == 4);
  for (int k = 0; k < 4; ++k) REQUIRE(p(k) == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("probabilities sum to one") {
  const EEGNetConfig cfg = tiny_config();
  const ModelWeights w = random_weights(cfg, 3);
  Rng rng(4);
  std::normal_distribution<float> g(0.f, 1.f);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXf x(cfg.n_channels, cfg.n_samples);
    for (long i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    const Eigen::VectorXd p = decoder::forward(w, x);
    REQUIRE(p.sum() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(p.minCoeff() > 0.0);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  // oracle: loss(theta +- h e_i) both recomputed with batch statistics
  const EEGNetConfig cfg = tiny_config();
  ModelWeights w = random_weights(cfg, 17);
  const ParamLayout L(cfg);
  decoder::detail::Network net(cfg);

  const int B = 3;
  Rng rng(18);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::MatrixXf> data(B);
  std::vector<const Eigen::MatrixXf*> batch;
  std::vector<int> labels = {0, 2, 3};
  for (int b = 0; b < B; ++b) {
    data[static_cast<size_t>(b)].resize(cfg.n_channels, cfg.n_samples);
    for (long i = 0; i < data[static_cast<size_t>(b)].size(); ++i)
      data[static_cast<size_t>(b)].data()[i] = static_cast<float>(g(rng));
    batch.push_back(&data[static_cast<size_t>(b)]);
  }

  auto loss_at = [&](const std::vector<double>& params) {
    decoder::detail::BatchCache cc;
    decoder::detail::fill_batch_input(cfg, w, batch, cc);
    std::vector<double> rm = w.running_mean, rv = w.running_var;
    net.forward(params, rm, rv, cc, /*training=*/true, nullptr);
    double loss = 0;
    for (int b = 0; b < B; ++b)
      loss -= std::log(cc.probs[static_cast<size_t>(b) * 4 +
                                static_cast<size_t>(labels[static_cast<size_t>(b)])]);
    return loss / B;
  };

  decoder::detail::BatchCache cc;
  decoder::detail::fill_batch_input(cfg, w, batch, cc);
  std::vector<double> rm = w.running_mean, rv = w.running_var;
  net.forward(w.params, rm, rv, cc, true, nullptr);
  std::vector<double> grad;
  net.backward(w.params, cc, labels, grad);

  struct Tensor {
    const char* name;
    long off, count;
  };
  const std::vector<Tensor> tensors = {
      {"w1", L.w1, L.g1 - L.w1}, {"g1", L.g1, L.b1 - L.g1}, {"b1", L.b1, L.w2 - L.b1},
      {"w2", L.w2, L.g2 - L.w2}, {"g2", L.g2, L.b2 - L.g2}, {"b2", L.b2, L.w3 - L.b2},
      {"w3", L.w3, L.w4 - L.w3}, {"w4", L.w4, L.g3 - L.w4}, {"g3", L.g3, L.b3 - L.g3},
      {"b3", L.b3, L.wd - L.b3}, {"wd", L.wd, L.bd - L.wd}, {"bd", L.bd, L.total - L.bd}};
  const double h = 1e-5;
  for (const auto& tensor : tensors) {
    double num_norm = 0, diff_norm = 0;
    for (long i = tensor.off; i < tensor.off + tensor.count; ++i) {
      std::vector<double> p = w.params;
      p[static_cast<size_t>(i)] += h;
      const double lp = loss_at(p);
      p[static_cast<size_t>(i)] -= 2 * h;
      const double lm = loss_at(p);
      const double numeric = (lp - lm) / (2 * h);
      num_norm += numeric * numeric;
      const double d = numeric - grad[static_cast<size_t>(i)];
      diff_norm += d * d;
    }
    INFO("tensor " << tensor.name);
    // bn1's beta is exactly cancelled by bn2's batch mean, so both gradients
    // are zero there; accept a tiny absolute difference in that case
    const double abs_diff = std::sqrt(diff_norm);
    const double rel = abs_diff / std::max(std::sqrt(num_norm), 1e-12);
    REQUIRE((abs_diff < 1e-7 || rel < 1e-4));
  }
}

TEST_CASE("training separates an easy four-class problem") {
  EEGNetConfig cfg = tiny_config();
  cfg.zscore_channels = true;
  const EpochDataset train_set = toy_dataset(cfg, 30, 1, 0.15);
  const EpochDataset test_set = toy_dataset(cfg, 10, 2, 0.15);
  TrainConfig tc;
  tc.max_epochs = 150;
  tc.patience = 150;
  tc.batch_size = 16;
  auto [w, history] = decoder::train(train_set, tc, cfg);
  long correct = 0;
  for (const auto& e : test_set.epochs) {
    Eigen::Index k;
    decoder::forward(w, e.data).maxCoeff(&k);
    if (letter_alphabet()[static_cast<size_t>(k)] == e.label) ++correct;
  }
  REQUIRE(static_cast<double>(correct) / static_cast<double>(test_set.size()) >= 0.95);
  REQUIRE_FALSE(history.empty());
}

TEST_CASE("label shuffling destroys generalization") {
  EEGNetConfig cfg = tiny_config();
  cfg.zscore_channels = true;
  EpochDataset train_set = toy_dataset(cfg, 20, 5);
  Rng rng(6);
  std::vector<char> labels;
  for (const auto& e : train_set.epochs) labels.push_back(e.label);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (size_t i = 0; i < labels.size(); ++i) train_set.epochs[i].label = labels[i];

  const EpochDataset test_set = toy_dataset(cfg, 25, 7);
  TrainConfig tc;
  tc.max_epochs = 40;
  tc.patience = 40;
  auto [w, history] = decoder::train(train_set, tc, cfg);
  long correct = 0;
  for (const auto& e : test_set.epochs) {
    Eigen::Index k;
    decoder::forward(w, e.data).maxCoeff(&k);
    if (letter_alphabet()[static_cast<size_t>(k)] == e.label) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(test_set.size());
  REQUIRE(acc < 0.45);  // chance is 0.25; allow sampling noise on 100 trials
}

TEST_CASE("training is bit-deterministic in the seed") {
  const EEGNetConfig cfg = tiny_config();
  const EpochDataset ds = toy_dataset(cfg, 8, 9);
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.patience = 5;
  tc.seed = 42;
  auto [w1, h1] = decoder::train(ds, tc, cfg);
  auto [w2, h2] = decoder::train(ds, tc, cfg);
  REQUIRE(w1.params == w2.params);
  REQUIRE(w1.running_mean == w2.running_mean);
  REQUIRE(h1.size() == h2.size());
  for (size_t i = 0; i < h1.size(); ++i) REQUIRE(h1[i].train_loss == h2[i].train_loss);

  tc.seed = 43;
  auto [w3, h3] = decoder::train(ds, tc, cfg);
  REQUIRE(w1.params != w3.params);
}

TEST_CASE("dropout is inference-silent") {
  EEGNetConfig cfg = tiny_config();
  cfg.dropout_p1 = cfg.dropout_p2 = 0.5;
  const ModelWeights w = random_weights(cfg, 11);
  const Eigen::MatrixXf x = Eigen::MatrixXf::Random(cfg.n_channels, cfg.n_samples);
  const Eigen::VectorXd p1 = decoder::forward(w, x);
  const Eigen::VectorXd p2 = decoder::forward(w, x);
  REQUIRE(p1 == p2);
}

TEST_CASE("predict_averaged of identical epochs equals a single forward") {
  const EEGNetConfig cfg = tiny_config();
  const ModelWeights w = random_weights(cfg, 13);
  const Eigen::MatrixXf x = Eigen::MatrixXf::Random(cfg.n_channels, cfg.n_samples);
  const Eigen::VectorXd single = decoder::forward(w, x);
  const Eigen::VectorXd avg = decoder::predict_averaged(w, {&x, &x, &x, &x});
  for (int k = 0; k < 4; ++k) REQUIRE(avg(k) == Catch::Approx(single(k)).margin(1e-12));
  REQUIRE_THROWS_AS(decoder::predict_averaged(w, {}), PipelineError);
  const Eigen::MatrixXf y = Eigen::MatrixXf::Random(cfg.n_channels, cfg.n_samples + 1);
  REQUIRE_THROWS_AS(decoder::predict_averaged(w, {&x, &y}), PipelineError);
}

TEST_CASE("weights round trip preserves behaviour bit-exactly") {
  const EEGNetConfig cfg = tiny_config();
  const EpochDataset ds = toy_dataset(cfg, 8, 15);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 3;
  auto [w, history] = decoder::train(ds, tc, cfg);
  const auto path = std::filesystem::temp_directory_path() / "hwbci_decoder_test.net";
  decoder::write_weights(w, path);
  const ModelWeights back = decoder::read_weights(path);
  REQUIRE(back.params == w.params);
  REQUIRE(back.running_mean == w.running_mean);
  REQUIRE(back.running_var == w.running_var);
  REQUIRE(back.zscore_mean == w.zscore_mean);
  REQUIRE(back.config.fingerprint_text() == w.config.fingerprint_text());
  const Eigen::MatrixXf x = Eigen::MatrixXf::Random(cfg.n_channels, cfg.n_samples);
  REQUIRE(decoder::forward(back, x) == decoder::forward(w, x));
}

TEST_CASE("epoch shape mismatches are rejected") {
  const EEGNetConfig cfg = tiny_config();
  const ModelWeights w = random_weights(cfg, 19);
  const Eigen::MatrixXf bad = Eigen::MatrixXf::Random(cfg.n_channels + 1, cfg.n_samples);
  REQUIRE_THROWS_AS(decoder::forward(w, bad), PipelineError);
}

TEST_CASE("train validates the dataset") {
  const EEGNetConfig cfg = tiny_config();
  EpochDataset ds = toy_dataset(cfg, 2, 21);
  ds.epochs.resize(5);  // class W now has a single example
  TrainConfig tc;
  REQUIRE_THROWS_AS(decoder::train(ds, tc, cfg), PipelineError);
}
