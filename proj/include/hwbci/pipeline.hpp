#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "hwbci/common.hpp"
#include "hwbci/decoder.hpp"
#include "hwbci/epoching.hpp"
#include "hwbci/synthgen.hpp"

namespace hwbci::pipeline {

// Declarative run description.  Every default equals the standard value
// used throughout the pipeline; unknown keys are rejected.
struct PipelineConfig {
  // synth
  int synth_trials = 400;
  std::uint64_t synth_seed = 0;
  double synth_snr = 0.5;
  double synth_jitter_lo_s = 0.05;
  double synth_jitter_hi_s = 0.35;
  std::string synth_artifact = "none";  // none | shared | class
  double synth_artifact_amplitude = 3.0;
  // filters
  double notch_hz = 60.0;
  double band_low_hz = 0.3;
  double band_high_hz = 70.0;
  double resample_hz = 100.0;
  // sync
  std::string pd_channel = "PD_MONITOR";
  double pd_threshold = 0.5;
  double pd_debounce_s = 0.05;
  double sync_max_dist_s = 0.2;
  // ica
  int ica_k = 0;  // 0 = n_channels
  std::uint64_t ica_seed = 0;
  // epoching
  std::string epoch_setting = "me-movement";
  double onset_speed_threshold_mm_per_s = 10.0;
  double onset_sustain_ms = 30.0;
  // net
  int net_temporal_filters = 8;
  int net_depth_multiplier = 2;
  int net_temporal_kernel_len = 50;
  int net_separable_kernel_len = 16;
  int net_pool1 = 4;
  int net_pool2 = 8;
  double net_dropout = 0.25;
  bool net_zscore = true;
  // train
  std::uint64_t train_seed = 0;
  int train_batch_size = 64;
  int train_max_epochs = 300;
  int train_patience = 50;
  double train_learning_rate = 1e-3;
  double train_validation_fraction = 0.2;
  int train_max_shift_samples = 0;
  // eval
  int eval_folds = 5;
  long eval_test_size = 160;
  std::vector<double> eval_fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<std::uint64_t> eval_seeds = {0, 1, 2};
  std::vector<int> eval_avg_k = {1, 2, 4, 8};
  int jobs = 1;

  decoder::EEGNetConfig net_config(int n_channels = 32, int n_samples = 100) const {
    decoder::EEGNetConfig c;
    c.n_channels = n_channels;
    c.n_samples = n_samples;
    c.temporal_filters = net_temporal_filters;
    c.depth_multiplier = net_depth_multiplier;
    c.temporal_kernel_len = net_temporal_kernel_len;
    c.separable_kernel_len = net_separable_kernel_len;
    c.pool1 = net_pool1;
    c.pool2 = net_pool2;
    c.dropout_p1 = c.dropout_p2 = net_dropout;
    c.zscore_channels = net_zscore;
    return c;
  }

  decoder::TrainConfig train_config() const {
    decoder::TrainConfig t;
    t.seed = train_seed;
    t.batch_size = train_batch_size;
    t.max_epochs = train_max_epochs;
    t.patience = train_patience;
    t.learning_rate = train_learning_rate;
    t.validation_fraction = train_validation_fraction;
    t.max_shift_samples = train_max_shift_samples;
    return t;
  }

  synthgen::SynthSpec synth_spec() const {
    synthgen::SynthSpec s;
    s.n_trials = synth_trials;
    s.seed = synth_seed;
    s.snr = synth_snr;
    s.jitter_lo_s = synth_jitter_lo_s;
    s.jitter_hi_s = synth_jitter_hi_s;
    if (synth_artifact == "shared") s.artifact = {true, false, synth_artifact_amplitude};
    else if (synth_artifact == "class") s.artifact = {true, true, synth_artifact_amplitude};
    else if (synth_artifact != "none")
      throw PipelineError("config: synth.artifact must be none|shared|class");
    return s;
  }

  epoching::OnsetDetectorConfig onset_config() const {
    return {onset_speed_threshold_mm_per_s, onset_sustain_ms};
  }

  std::string serialize() const;
  void set(const std::string& key, const std::string& value);

  std::uint64_t fingerprint() const { return fnv1a(serialize()); }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, sep)) out.push_back(item);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace detail

inline std::string PipelineConfig::serialize() const {
  std::ostringstream os;
  os << "synth.trials=" << synth_trials << "\n";
  os << "synth.seed=" << synth_seed << "\n";
  os << "synth.snr=" << synth_snr << "\n";
  os << "synth.jitter_lo_s=" << synth_jitter_lo_s << "\n";
  os << "synth.jitter_hi_s=" << synth_jitter_hi_s << "\n";
  os << "synth.artifact=" << synth_artifact << "\n";
  os << "synth.artifact_amplitude=" << synth_artifact_amplitude << "\n";
  os << "filter.notch_hz=" << notch_hz << "\n";
  os << "filter.band_low_hz=" << band_low_hz << "\n";
  os << "filter.band_high_hz=" << band_high_hz << "\n";
  os << "filter.resample_hz=" << resample_hz << "\n";
  os << "sync.pd_channel=" << pd_channel << "\n";
  os << "sync.pd_threshold=" << pd_threshold << "\n";
  os << "sync.pd_debounce_s=" << pd_debounce_s << "\n";
  os << "sync.max_dist_s=" << sync_max_dist_s << "\n";
  os << "ica.k=" << ica_k << "\n";
  os << "ica.seed=" << ica_seed << "\n";
  os << "epoch.setting=" << epoch_setting << "\n";
  os << "epoch.onset_speed_threshold=" << onset_speed_threshold_mm_per_s << "\n";
  os << "epoch.onset_sustain_ms=" << onset_sustain_ms << "\n";
  os << "net.temporal_filters=" << net_temporal_filters << "\n";
  os << "net.depth_multiplier=" << net_depth_multiplier << "\n";
  os << "net.temporal_kernel_len=" << net_temporal_kernel_len << "\n";
  os << "net.separable_kernel_len=" << net_separable_kernel_len << "\n";
  os << "net.pool1=" << net_pool1 << "\n";
  os << "net.pool2=" << net_pool2 << "\n";
  os << "net.dropout=" << net_dropout << "\n";
  os << "net.zscore=" << (net_zscore ? 1 : 0) << "\n";
  os << "train.seed=" << train_seed << "\n";
  os << "train.batch_size=" << train_batch_size << "\n";
  os << "train.max_epochs=" << train_max_epochs << "\n";
  os << "train.patience=" << train_patience << "\n";
  os << "train.learning_rate=" << train_learning_rate << "\n";
  os << "train.validation_fraction=" << train_validation_fraction << "\n";
  os << "train.max_shift_samples=" << train_max_shift_samples << "\n";
  os << "eval.folds=" << eval_folds << "\n";
  os << "eval.test_size=" << eval_test_size << "\n";
  os << "eval.fractions=" << detail::join(eval_fractions) << "\n";
  os << "eval.seeds=" << detail::join(eval_seeds) << "\n";
  os << "eval.avg_k=" << detail::join(eval_avg_k) << "\n";
  os << "jobs=" << jobs << "\n";
  return os.str();
}

inline void PipelineConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "synth.trials") synth_trials = std::stoi(value);
    else if (key == "synth.seed") synth_seed = std::stoull(value);
    else if (key == "synth.snr") synth_snr = std::stod(value);
    else if (key == "synth.jitter_lo_s") synth_jitter_lo_s = std::stod(value);
    else if (key == "synth.jitter_hi_s") synth_jitter_hi_s = std::stod(value);
    else if (key == "synth.artifact") synth_artifact = value;
    else if (key == "synth.artifact_amplitude") synth_artifact_amplitude = std::stod(value);
    else if (key == "filter.notch_hz") notch_hz = std::stod(value);
    else if (key == "filter.band_low_hz") band_low_hz = std::stod(value);
    else if (key == "filter.band_high_hz") band_high_hz = std::stod(value);
    else if (key == "filter.resample_hz") resample_hz = std::stod(value);
    else if (key == "sync.pd_channel") pd_channel = value;
    else if (key == "sync.pd_threshold") pd_threshold = std::stod(value);
    else if (key == "sync.pd_debounce_s") pd_debounce_s = std::stod(value);
    else if (key == "sync.max_dist_s") sync_max_dist_s = std::stod(value);
    else if (key == "ica.k") ica_k = std::stoi(value);
    else if (key == "ica.seed") ica_seed = std::stoull(value);
    else if (key == "epoch.setting") epoch_setting = value;
    else if (key == "epoch.onset_speed_threshold") onset_speed_threshold_mm_per_s = std::stod(value);
    else if (key == "epoch.onset_sustain_ms") onset_sustain_ms = std::stod(value);
    else if (key == "net.temporal_filters") net_temporal_filters = std::stoi(value);
    else if (key == "net.depth_multiplier") net_depth_multiplier = std::stoi(value);
    else if (key == "net.temporal_kernel_len") net_temporal_kernel_len = std::stoi(value);
    else if (key == "net.separable_kernel_len") net_separable_kernel_len = std::stoi(value);
    else if (key == "net.pool1") net_pool1 = std::stoi(value);
    else if (key == "net.pool2") net_pool2 = std::stoi(value);
    else if (key == "net.dropout") net_dropout = std::stod(value);
    else if (key == "net.zscore") net_zscore = std::stoi(value) != 0;
    else if (key == "train.seed") train_seed = std::stoull(value);
    else if (key == "train.batch_size") train_batch_size = std::stoi(value);
    else if (key == "train.max_epochs") train_max_epochs = std::stoi(value);
    else if (key == "train.patience") train_patience = std::stoi(value);
    else if (key == "train.learning_rate") train_learning_rate = std::stod(value);
    else if (key == "train.validation_fraction") train_validation_fraction = std::stod(value);
    else if (key == "train.max_shift_samples") train_max_shift_samples = std::stoi(value);
    else if (key == "eval.folds") eval_folds = std::stoi(value);
    else if (key == "eval.test_size") eval_test_size = std::stol(value);
    else if (key == "eval.fractions") {
      eval_fractions.clear();
      for (const auto& s : detail::split(value, ',')) eval_fractions.push_back(std::stod(s));
    } else if (key == "eval.seeds") {
      eval_seeds.clear();
      for (const auto& s : detail::split(value, ',')) eval_seeds.push_back(std::stoull(s));
    } else if (key == "eval.avg_k") {
      eval_avg_k.clear();
      for (const auto& s : detail::split(value, ',')) eval_avg_k.push_back(std::stoi(s));
    } else if (key == "jobs") jobs = std::stoi(value);
    else throw PipelineError("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw PipelineError("config: invalid value '" + value + "' for key '" + key + "'");
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw PipelineError("cannot open config '" + path.string() + "'");
  PipelineConfig cfg;
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw PipelineError("config: malformed line '" + line + "' (expected key=value)");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

// Run manifest written next to outputs; timestamps live here and only here.
inline void write_manifest(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                           const std::string& subcommand, double elapsed_s) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["config_fingerprint"] = cfg.fingerprint();
  j["format_versions"] = {{"rec", "HWREC1"}, {"net", "HWNET1"}, {"ica", "HWICA1"}};
  j["seeds"] = {{"synth", cfg.synth_seed}, {"train", cfg.train_seed}, {"ica", cfg.ica_seed}};
  j["elapsed_s"] = elapsed_s;
  const auto now = std::chrono::system_clock::now();
  j["completed_unix_time"] =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  std::ofstream f(out_dir / "run_manifest.json");
  if (f) f << j.dump(2) << "\n";
}

}  // namespace hwbci::pipeline
