#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hwbci/dataio.hpp"
#include "hwbci/decoder.hpp"
#include "hwbci/epoching.hpp"
#include "hwbci/ica.hpp"
#include "hwbci/recording.hpp"

namespace hwbci::evalharness {

struct EvalReport {
  double accuracy = 0.0;
  Eigen::Matrix4i confusion = Eigen::Matrix4i::Zero();  // row = true, col = predicted
  long n_test = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_fingerprint = 0;
  long n_dropped = 0;  // trials dropped by group partitioning (averaged eval)

  void validate() const {
    long total = 0, diag = 0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        total += confusion(r, c);
        if (r == c) diag += confusion(r, c);
      }
    if (total != n_test) throw PipelineError("EvalReport: confusion counts != n_test");
    if (n_test > 0 && std::abs(accuracy - static_cast<double>(diag) / total) > 1e-12)
      throw PipelineError("EvalReport: accuracy != trace/total");
  }
};

struct SweepPoint {
  double train_fraction = 0.0;
  long n_train = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

struct SweepCurve {
  std::vector<SweepPoint> points;  // fractions strictly increasing
  std::vector<std::uint64_t> seeds;
};

// A trained predictor: epoch data -> class index.  Tests substitute oracle or
// constant classifiers here; the default is the EEGNet decoder.
using Predictor = std::function<int(const Epoch&)>;
using ClassifierFactory = std::function<Predictor(const EpochDataset& train, std::uint64_t seed)>;

inline std::uint64_t fingerprint(const decoder::EEGNetConfig& net, const decoder::TrainConfig& tc,
                                 const std::string& extra = "") {
  return fnv1a(net.fingerprint_text() + "|" + tc.fingerprint_text() + "|" + extra);
}

inline ClassifierFactory eegnet_factory(const decoder::EEGNetConfig& net,
                                        const decoder::TrainConfig& tc) {
  return [net, tc](const EpochDataset& train_set, std::uint64_t seed) -> Predictor {
    decoder::TrainConfig job_tc = tc;
    job_tc.seed = seed;
    decoder::EEGNetConfig job_net = net;
    job_net.n_channels = static_cast<int>(train_set.channel_names.size());
    if (!train_set.epochs.empty())
      job_net.n_samples = static_cast<int>(train_set.epochs.front().data.cols());
    auto [weights, history] = decoder::train(train_set, job_tc, job_net);
    auto shared = std::make_shared<decoder::ModelWeights>(std::move(weights));
    return [shared](const Epoch& e) {
      const Eigen::VectorXd p = decoder::forward(*shared, e.data);
      Eigen::Index k;
      p.maxCoeff(&k);
      return static_cast<int>(k);
    };
  };
}

inline EvalReport evaluate(const Predictor& predict, const EpochDataset& test,
                           std::uint64_t seed = 0, std::uint64_t fp = 0) {
  EvalReport r;
  r.seed = seed;
  r.config_fingerprint = fp;
  r.n_test = static_cast<long>(test.size());
  for (const auto& e : test.epochs) {
    const int y = letter_class_index(e.label);
    const int p = predict(e);
    r.confusion(y, p)++;
  }
  long diag = 0;
  for (int k = 0; k < 4; ++k) diag += r.confusion(k, k);
  r.accuracy = r.n_test > 0 ? static_cast<double>(diag) / static_cast<double>(r.n_test) : 0.0;
  return r;
}

// Runs jobs [0, n) on up to n_threads workers; results are merged by index so
// the outcome is independent of scheduling.
inline void run_jobs(long n, const std::function<void(long)>& job, int n_threads) {
  if (n_threads <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  const int workers = std::min<long>(n_threads, n);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (long i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Stratified k-fold cross-validation.  Fold assignment is a pure function of
// (dataset order, k, seed).
// ---------------------------------------------------------------------------

inline std::vector<int> stratified_fold_assignment(const EpochDataset& ds, int k,
                                                   std::uint64_t seed) {
  const int ncls = static_cast<int>(letter_alphabet().size());
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(ncls));
  for (size_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<size_t>(letter_class_index(ds.epochs[i].label))].push_back(i);
  for (int c = 0; c < ncls; ++c)
    if (static_cast<int>(by_class[static_cast<size_t>(c)].size()) < k)
      throw PipelineError("kfold_cv: class " + std::string(1, letter_alphabet()[static_cast<size_t>(c)]) +
                          " has fewer than k=" + std::to_string(k) + " examples");
  std::vector<int> fold(ds.size(), -1);
  for (int c = 0; c < ncls; ++c) {
    auto idxs = by_class[static_cast<size_t>(c)];
    Rng rng(derive_seed(seed, "kfold-class-" + std::to_string(c)));
    std::shuffle(idxs.begin(), idxs.end(), rng);
    for (size_t j = 0; j < idxs.size(); ++j) fold[idxs[j]] = static_cast<int>(j % static_cast<size_t>(k));
  }
  return fold;
}

struct CvResult {
  std::vector<EvalReport> folds;
  EvalReport pooled;
};

inline CvResult kfold_cv(const EpochDataset& ds, int k, const ClassifierFactory& factory,
                         std::uint64_t seed = 0, std::uint64_t fp = 0, int n_threads = 1) {
  if (static_cast<int>(ds.size()) < k) throw PipelineError("kfold_cv: dataset smaller than k");
  const auto fold = stratified_fold_assignment(ds, k, seed);
  CvResult result;
  result.folds.resize(static_cast<size_t>(k));

  run_jobs(k, [&](long fi) {
    EpochDataset train, test;
    train.sample_rate_hz = test.sample_rate_hz = ds.sample_rate_hz;
    train.channel_names = test.channel_names = ds.channel_names;
    for (size_t i = 0; i < ds.size(); ++i)
      (fold[i] == static_cast<int>(fi) ? test : train).epochs.push_back(ds.epochs[i]);
    const std::uint64_t job_seed = derive_seed(seed, "fold-" + std::to_string(fi));
    const Predictor predict = factory(train, job_seed);
    result.folds[static_cast<size_t>(fi)] = evaluate(predict, test, job_seed, fp);
  }, n_threads);

  result.pooled.seed = seed;
  result.pooled.config_fingerprint = fp;
  for (const auto& r : result.folds) {
    result.pooled.confusion += r.confusion;
    result.pooled.n_test += r.n_test;
  }
  long diag = 0;
  for (int i = 0; i < 4; ++i) diag += result.pooled.confusion(i, i);
  result.pooled.accuracy = static_cast<double>(diag) / static_cast<double>(result.pooled.n_test);
  return result;
}

// ---------------------------------------------------------------------------
// Sample-complexity sweep on a fixed final-n_test split.
// ---------------------------------------------------------------------------

inline EpochDataset stratified_subsample(const EpochDataset& superset, double fraction,
                                         std::uint64_t seed) {
  const int ncls = static_cast<int>(letter_alphabet().size());
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(ncls));
  for (size_t i = 0; i < superset.size(); ++i)
    by_class[static_cast<size_t>(letter_class_index(superset.epochs[i].label))].push_back(i);
  const long per_class = static_cast<long>(
      std::llround(fraction * static_cast<double>(superset.size()) / ncls));
  std::vector<size_t> chosen;
  for (int c = 0; c < ncls; ++c) {
    auto idxs = by_class[static_cast<size_t>(c)];
    if (static_cast<long>(idxs.size()) < per_class || per_class < 2)
      throw PipelineError("sweep: fraction " + std::to_string(fraction) +
                          " yields fewer than 2 examples of class " +
                          std::string(1, letter_alphabet()[static_cast<size_t>(c)]));
    Rng rng(derive_seed(seed, "subsample-class-" + std::to_string(c)));
    std::shuffle(idxs.begin(), idxs.end(), rng);
    chosen.insert(chosen.end(), idxs.begin(), idxs.begin() + per_class);
  }
  std::sort(chosen.begin(), chosen.end());  // keep chronological order
  EpochDataset out;
  out.sample_rate_hz = superset.sample_rate_hz;
  out.channel_names = superset.channel_names;
  for (size_t i : chosen) out.epochs.push_back(superset.epochs[i]);
  return out;
}

struct SweepCell {
  double fraction = 0;
  std::uint64_t seed = 0;
  long n_train = 0;
  double accuracy = 0;
};

inline std::pair<SweepCurve, std::vector<SweepCell>> sample_complexity_sweep(
    const EpochDataset& ds, long n_test, const std::vector<double>& fractions,
    const std::vector<std::uint64_t>& seeds, const ClassifierFactory& factory,
    std::uint64_t fp = 0, int n_threads = 1) {
  for (size_t i = 1; i < fractions.size(); ++i)
    if (fractions[i] <= fractions[i - 1])
      throw PipelineError("sweep: fractions must be strictly increasing");
  auto [superset, test] = dataio::split_fixed_test(ds, static_cast<size_t>(n_test));

  const long n_cells = static_cast<long>(fractions.size() * seeds.size());
  std::vector<SweepCell> cells(static_cast<size_t>(n_cells));
  run_jobs(n_cells, [&](long idx) {
    const size_t fi = static_cast<size_t>(idx) / seeds.size();
    const size_t si = static_cast<size_t>(idx) % seeds.size();
    SweepCell cell;
    cell.fraction = fractions[fi];
    cell.seed = seeds[si];
    const EpochDataset sub = stratified_subsample(superset, cell.fraction, cell.seed);
    cell.n_train = static_cast<long>(sub.size());
    const std::uint64_t job_seed =
        derive_seed(cell.seed, "sweep-f" + std::to_string(cell.fraction));
    const Predictor predict = factory(sub, job_seed);
    cell.accuracy = evaluate(predict, test, job_seed, fp).accuracy;
    cells[static_cast<size_t>(idx)] = cell;
  }, n_threads);

  SweepCurve curve;
  curve.seeds = seeds;
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    SweepPoint pt;
    pt.train_fraction = fractions[fi];
    double sum = 0, sumsq = 0;
    for (size_t si = 0; si < seeds.size(); ++si) {
      const auto& cell = cells[fi * seeds.size() + si];
      sum += cell.accuracy;
      sumsq += cell.accuracy * cell.accuracy;
      pt.n_train = cell.n_train;
    }
    const double n = static_cast<double>(seeds.size());
    pt.mean_accuracy = sum / n;
    pt.std_accuracy = std::sqrt(std::max(0.0, sumsq / n - pt.mean_accuracy * pt.mean_accuracy));
    curve.points.push_back(pt);
  }
  return {std::move(curve), std::move(cells)};
}

// ---------------------------------------------------------------------------
// SNR-boosted evaluation: disjoint chronological groups of k same-label test
// trials, each scored with predict_averaged.
// ---------------------------------------------------------------------------

inline std::vector<std::pair<int, EvalReport>> snr_boosted_eval(
    const decoder::ModelWeights& weights, const EpochDataset& test,
    const std::vector<int>& k_values, std::uint64_t seed = 0, std::uint64_t fp = 0) {
  const int ncls = static_cast<int>(letter_alphabet().size());
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(ncls));
  for (size_t i = 0; i < test.size(); ++i)
    by_class[static_cast<size_t>(letter_class_index(test.epochs[i].label))].push_back(i);
  size_t min_count = test.size();
  for (const auto& v : by_class) min_count = std::min(min_count, v.size());

  std::vector<std::pair<int, EvalReport>> out;
  for (int k : k_values) {
    if (k < 1 || static_cast<size_t>(k) > min_count)
      throw PipelineError("snr_boosted_eval: k=" + std::to_string(k) +
                          " exceeds smallest per-class test count (" + std::to_string(min_count) + ")");
    EvalReport r;
    r.seed = seed;
    r.config_fingerprint = fp;
    for (int c = 0; c < ncls; ++c) {
      const auto& idxs = by_class[static_cast<size_t>(c)];
      const size_t n_groups = idxs.size() / static_cast<size_t>(k);
      r.n_dropped += static_cast<long>(idxs.size() - n_groups * static_cast<size_t>(k));
      for (size_t g = 0; g < n_groups; ++g) {
        std::vector<const Eigen::MatrixXf*> group;
        for (int j = 0; j < k; ++j)
          group.push_back(&test.epochs[idxs[g * static_cast<size_t>(k) + static_cast<size_t>(j)]].data);
        const Eigen::VectorXd p = decoder::predict_averaged(weights, group);
        Eigen::Index pred;
        p.maxCoeff(&pred);
        r.confusion(c, static_cast<int>(pred))++;
        r.n_test++;
      }
    }
    long diag = 0;
    for (int i = 0; i < 4; ++i) diag += r.confusion(i, i);
    r.accuracy = r.n_test > 0 ? static_cast<double>(diag) / static_cast<double>(r.n_test) : 0.0;
    out.emplace_back(k, r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confound probes.
// ---------------------------------------------------------------------------

// Rebuilds the recording from one independent component and re-runs the
// standard epoching + 5-fold CV on the result.
inline EvalReport confound_probe_single_ic(const Recording& rec, const EventStream& events,
                                           const ica::IcaModel& model, int component_index,
                                           EpochSetting setting, const ClassifierFactory& factory,
                                           std::uint64_t seed = 0, std::uint64_t fp = 0,
                                           const Recording* pen = nullptr, int n_threads = 1) {
  const Recording only_ic = ica::reconstruct(model, rec, {component_index});
  auto [ds, report] = epoching::build_dataset(only_ic, pen, events, setting);
  return kfold_cv(ds, 5, factory, seed, fp, n_threads).pooled;
}

// Zeroes every channel outside the subset (input shape preserved) and runs
// 5-fold CV.
inline EvalReport confound_probe_channels(const EpochDataset& ds,
                                          const std::vector<std::string>& channels,
                                          const ClassifierFactory& factory, std::uint64_t seed = 0,
                                          std::uint64_t fp = 0, int n_threads = 1) {
  std::vector<bool> keep(ds.channel_names.size(), false);
  for (const auto& name : channels) {
    auto it = std::find(ds.channel_names.begin(), ds.channel_names.end(), name);
    if (it == ds.channel_names.end())
      throw PipelineError("confound_probe_channels: unknown channel '" + name + "'");
    keep[static_cast<size_t>(it - ds.channel_names.begin())] = true;
  }
  EpochDataset masked = ds;
  for (auto& e : masked.epochs)
    for (size_t c = 0; c < keep.size(); ++c)
      if (!keep[c]) e.data.row(static_cast<long>(c)).setZero();
  return kfold_cv(masked, 5, factory, seed, fp, n_threads).pooled;
}

// ---------------------------------------------------------------------------
// Report output: human table + flat tabular file.
// ---------------------------------------------------------------------------

inline std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  os << "accuracy\t" << r.accuracy << "\n";
  os << "n_test\t" << r.n_test << "\n";
  os << "n_dropped\t" << r.n_dropped << "\n";
  os << "seed\t" << r.seed << "\n";
  os << "fingerprint\t" << r.config_fingerprint << "\n";
  os << "confusion (rows true L,V,O,W; cols predicted)\n";
  for (int i = 0; i < 4; ++i) {
    os << letter_alphabet()[static_cast<size_t>(i)];
    for (int j = 0; j < 4; ++j) os << "\t" << r.confusion(i, j);
    os << "\n";
  }
  return os.str();
}

inline std::string sweep_table(const SweepCurve& curve, const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "fraction\tseed\tn_train\taccuracy\n";
  for (const auto& c : cells)
    os << c.fraction << "\t" << c.seed << "\t" << c.n_train << "\t" << c.accuracy << "\n";
  os << "\nfraction\tn_train\tmean_accuracy\tstd_accuracy\n";
  for (const auto& p : curve.points)
    os << p.train_fraction << "\t" << p.n_train << "\t" << p.mean_accuracy << "\t"
       << p.std_accuracy << "\n";
  return os.str();
}

}  // namespace hwbci::evalharness
