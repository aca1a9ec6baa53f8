// hwbci: offline EEG handwriting-decoding pipeline driver.
//
// Subcommands mirror the pipeline stages and communicate through on-disk
// artifacts only: synth -> sync -> preprocess -> ica -> epoch -> train ->
// predict / eval, plus a one-shot `reproduce`.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hwbci/dataio.hpp"
#include "hwbci/decoder.hpp"
#include "hwbci/epoching.hpp"
#include "hwbci/evalharness.hpp"
#include "hwbci/ica.hpp"
#include "hwbci/pipeline.hpp"
#include "hwbci/sigproc.hpp"
#include "hwbci/synchro.hpp"
#include "hwbci/synthgen.hpp"

namespace fs = std::filesystem;
using namespace hwbci;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double elapsed_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

pipeline::PipelineConfig make_config(const std::string& config_path,
                                     const std::vector<std::string>& overrides) {
  pipeline::PipelineConfig cfg;
  if (!config_path.empty()) cfg = pipeline::load_config(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw PipelineError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw PipelineError("cannot open '" + path.string() + "' for writing");
  f << text;
}

// Preferred EEG input inside a session dir: cleaned > preprocessed.
fs::path find_eeg(const fs::path& session) {
  if (fs::exists(session / "eeg_clean.rec")) return session / "eeg_clean.rec";
  if (fs::exists(session / "eeg_proc.rec")) return session / "eeg_proc.rec";
  throw PipelineError("no preprocessed recording in '" + session.string() +
                      "' (run `preprocess` first)");
}

evalharness::ClassifierFactory factory_for(const pipeline::PipelineConfig& cfg) {
  return evalharness::eegnet_factory(cfg.net_config(), cfg.train_config());
}

// --- stage implementations, shared between subcommands and `reproduce` ---

void do_synth(const pipeline::PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const synthgen::SynthSession session = synthgen::generate_session(cfg.synth_spec());
  dataio::write_recording(session.eeg, out / "eeg.rec");
  dataio::write_recording(session.pen, out / "pen.rec");
  dataio::write_events(session.events, out / "task.evt");
  synthgen::write_ground_truth(session.truth, out);
}

void do_sync(const pipeline::PipelineConfig& cfg, const fs::path& session) {
  const Recording eeg = dataio::read_recording(session / "eeg.rec");
  const Recording pd = eeg.select_channels({cfg.pd_channel});
  const auto spikes = synchro::detect_spikes(pd, cfg.pd_threshold, cfg.pd_debounce_s);
  const EventStream events = dataio::read_events(session / "task.evt");
  auto [aligned, report] = synchro::align_events(events, spikes, cfg.sync_max_dist_s);
  dataio::write_events(aligned, session / "aligned.evt");
  std::ostringstream os;
  os << "events\t" << report.corrections.size() << "\n";
  os << "max_abs_offset_s\t" << report.max_abs_offset_s << "\n";
  os << "original_t\tmatched_spike_t\toffset_s\n";
  for (const auto& c : report.corrections)
    os << c.original_t << "\t" << c.matched_spike_t << "\t" << c.offset_s << "\n";
  write_text(session / "sync_report.txt", os.str());
}

void do_preprocess(const pipeline::PipelineConfig& cfg, const fs::path& session) {
  const Montage montage = dataio::montage_paper32();
  Recording eeg = dataio::read_recording(session / "eeg.rec").select_channels(montage.channel_names());
  eeg = sigproc::notch(eeg, cfg.notch_hz);
  eeg = sigproc::bandpass(eeg, cfg.band_low_hz, cfg.band_high_hz);
  eeg = sigproc::resample(eeg, cfg.resample_hz);
  dataio::write_recording(eeg, session / "eeg_proc.rec");
  if (fs::exists(session / "pen.rec")) {
    Recording pen = sigproc::resample(dataio::read_recording(session / "pen.rec"), cfg.resample_hz);
    dataio::write_recording(pen, session / "pen_proc.rec");
  }
}

void do_epoch(const pipeline::PipelineConfig& cfg, const fs::path& session) {
  const EpochSetting setting = epoch_setting_from_string(cfg.epoch_setting);
  const Recording eeg = dataio::read_recording(find_eeg(session));
  const EventStream events = dataio::read_events(session / "aligned.evt");
  Recording pen;
  const Recording* pen_ptr = nullptr;
  if (setting == EpochSetting::me_movement) {
    pen = dataio::read_recording(session / "pen_proc.rec");
    pen_ptr = &pen;
  }
  auto [ds, report] = epoching::build_dataset(eeg, pen_ptr, events, setting, cfg.onset_config(),
                                              session.filename().string());
  dataio::write_epoch_dataset(ds, session / ("epochs_" + cfg.epoch_setting + ".rec"));
  std::ostringstream os;
  os << "setting\t" << cfg.epoch_setting << "\n"
     << "n_trials\t" << report.n_trials << "\n"
     << "n_epochs\t" << report.n_epochs << "\n"
     << "n_dropped_no_onset\t" << report.n_dropped_no_onset << "\n"
     << "n_dropped_out_of_bounds\t" << report.n_dropped_out_of_bounds << "\n";
  write_text(session / ("epoch_report_" + cfg.epoch_setting + ".txt"), os.str());
}

void do_train(const pipeline::PipelineConfig& cfg, const fs::path& epochs_path,
              const fs::path& model_path) {
  const EpochDataset ds = dataio::read_epoch_dataset(epochs_path);
  decoder::EEGNetConfig net = cfg.net_config(static_cast<int>(ds.channel_names.size()),
                                             static_cast<int>(ds.epochs.front().data.cols()));
  auto [weights, history] = decoder::train(ds, cfg.train_config(), net);
  decoder::write_weights(weights, model_path);
  std::ostringstream os;
  os << "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n";
  for (size_t i = 0; i < history.size(); ++i)
    os << i << "\t" << history[i].train_loss << "\t" << history[i].train_acc << "\t"
       << history[i].val_loss << "\t" << history[i].val_acc << "\n";
  fs::path hist = model_path;
  hist.replace_extension(".history.tsv");
  write_text(hist, os.str());
}

void do_predict(const fs::path& model_path, const fs::path& epochs_path, const fs::path& out) {
  const decoder::ModelWeights w = decoder::read_weights(model_path);
  const EpochDataset ds = dataio::read_epoch_dataset(epochs_path);
  std::vector<const Eigen::MatrixXf*> data;
  for (const auto& e : ds.epochs) data.push_back(&e.data);
  const auto probs = decoder::forward_batch(w, data);
  std::ostringstream os;
  os << "index\ttrue\tpredicted\tp_L\tp_V\tp_O\tp_W\n";
  long correct = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    Eigen::Index k;
    probs[i].maxCoeff(&k);
    const char pred = letter_alphabet()[static_cast<size_t>(k)];
    if (pred == ds.epochs[i].label) ++correct;
    os << i << "\t" << ds.epochs[i].label << "\t" << pred;
    for (int c = 0; c < 4; ++c) os << "\t" << probs[i](c);
    os << "\n";
  }
  os << "# accuracy\t" << static_cast<double>(correct) / static_cast<double>(probs.size()) << "\n";
  write_text(out, os.str());
}

void do_eval_cv(const pipeline::PipelineConfig& cfg, const fs::path& epochs_path,
                const fs::path& out) {
  const EpochDataset ds = dataio::read_epoch_dataset(epochs_path);
  const auto fp = evalharness::fingerprint(cfg.net_config(), cfg.train_config(), "cv");
  const auto result = evalharness::kfold_cv(ds, cfg.eval_folds, factory_for(cfg), cfg.train_seed,
                                            fp, cfg.jobs);
  std::ostringstream os;
  os << "== pooled (" << cfg.eval_folds << "-fold cv) ==\n"
     << evalharness::report_table(result.pooled);
  for (size_t i = 0; i < result.folds.size(); ++i)
    os << "\n== fold " << i << " ==\n" << evalharness::report_table(result.folds[i]);
  write_text(out, os.str());
  fs::path flat = out;
  flat.replace_extension(".tsv");
  std::ostringstream ft;
  ft << "fold\taccuracy\tn_test\n";
  for (size_t i = 0; i < result.folds.size(); ++i)
    ft << i << "\t" << result.folds[i].accuracy << "\t" << result.folds[i].n_test << "\n";
  ft << "pooled\t" << result.pooled.accuracy << "\t" << result.pooled.n_test << "\n";
  write_text(flat, ft.str());
}

void do_eval_sweep(const pipeline::PipelineConfig& cfg, const fs::path& epochs_path,
                   const fs::path& out) {
  const EpochDataset ds = dataio::read_epoch_dataset(epochs_path);
  const auto fp = evalharness::fingerprint(cfg.net_config(), cfg.train_config(), "sweep");
  auto [curve, cells] = evalharness::sample_complexity_sweep(
      ds, cfg.eval_test_size, cfg.eval_fractions, cfg.eval_seeds, factory_for(cfg), fp, cfg.jobs);
  write_text(out, evalharness::sweep_table(curve, cells));
}

void do_eval_avg(const pipeline::PipelineConfig& cfg, const fs::path& epochs_path,
                 const fs::path& out) {
  const EpochDataset ds = dataio::read_epoch_dataset(epochs_path);
  auto [train_set, test_set] = dataio::split_fixed_test(ds, static_cast<size_t>(cfg.eval_test_size));
  decoder::EEGNetConfig net = cfg.net_config(static_cast<int>(ds.channel_names.size()),
                                             static_cast<int>(ds.epochs.front().data.cols()));
  auto [weights, history] = decoder::train(train_set, cfg.train_config(), net);
  const auto fp = evalharness::fingerprint(net, cfg.train_config(), "avg");
  const auto reports =
      evalharness::snr_boosted_eval(weights, test_set, cfg.eval_avg_k, cfg.train_seed, fp);
  std::ostringstream os;
  std::ostringstream flat;
  flat << "k\taccuracy\tn_groups\tn_dropped\n";
  for (const auto& [k, r] : reports) {
    os << "== k = " << k << " ==\n" << evalharness::report_table(r) << "\n";
    flat << k << "\t" << r.accuracy << "\t" << r.n_test << "\t" << r.n_dropped << "\n";
  }
  write_text(out, os.str());
  fs::path ftsv = out;
  ftsv.replace_extension(".tsv");
  write_text(ftsv, flat.str());
}

void do_reproduce(const pipeline::PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const fs::path session = out / ("session_" + std::to_string(cfg.synth_seed));
  do_synth(cfg, session);
  do_sync(cfg, session);
  do_preprocess(cfg, session);
  do_epoch(cfg, session);
  const fs::path epochs = session / ("epochs_" + cfg.epoch_setting + ".rec");
  do_eval_cv(cfg, epochs, out / "cv_report.txt");
  do_eval_sweep(cfg, epochs, out / "sweep_report.txt");
  do_eval_avg(cfg, epochs, out / "avg_report.txt");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offline EEG handwriting-decoding pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // accept global --config/--set/--jobs after the subcommand too

  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--set", overrides, "override a config key (key=value, repeatable)");
  auto* jobs_opt = app.add_option("-j,--jobs", jobs, "worker threads for eval jobs");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic session directory");
  std::string synth_out;
  int synth_trials = -1;
  std::int64_t synth_seed = -1;
  double synth_snr = -1;
  std::string synth_artifact;
  double synth_artifact_amp = -1;
  synth->add_option("--out", synth_out, "session directory to create")->required();
  synth->add_option("--trials", synth_trials, "number of trials (multiple of 4)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--snr", synth_snr, "template SNR at the most-loaded channel");
  synth->add_option("--artifact", synth_artifact, "none | shared | class");
  synth->add_option("--artifact-amp", synth_artifact_amp, "artifact amplitude (x noise RMS)");

  // sync
  auto* sync = app.add_subcommand("sync", "align task events to photodiode spikes");
  std::string sync_session, sync_pd;
  sync->add_option("--session", sync_session, "session directory")->required();
  sync->add_option("--pd-channel", sync_pd, "photodiode channel name");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "notch + band-pass + resample");
  std::string prep_session;
  double prep_notch = -1, prep_resample = -1;
  std::vector<double> prep_band;
  prep->add_option("--session", prep_session, "session directory")->required();
  prep->add_option("--notch", prep_notch, "notch frequency (Hz)");
  prep->add_option("--band", prep_band, "band-pass edges low high (Hz)")->expected(2);
  prep->add_option("--resample", prep_resample, "target rate (Hz)");

  // ica fit|apply|probe
  auto* ica_cmd = app.add_subcommand("ica", "independent component analysis");
  ica_cmd->require_subcommand(1);
  auto* ica_fit = ica_cmd->add_subcommand("fit", "fit an ICA model on the preprocessed recording");
  std::string icaf_session;
  int icaf_k = -1;
  std::int64_t icaf_seed = -1;
  ica_fit->add_option("--session", icaf_session, "session directory")->required();
  ica_fit->add_option("--k", icaf_k, "number of components (default: n_channels)");
  ica_fit->add_option("--seed", icaf_seed, "initialization seed");
  auto* ica_apply = ica_cmd->add_subcommand("apply", "reconstruct without rejected components");
  std::string icaa_session;
  std::vector<int> icaa_reject;
  ica_apply->add_option("--session", icaa_session, "session directory")->required();
  ica_apply->add_option("--reject", icaa_reject, "component indices to remove")->delimiter(',');
  auto* ica_probe = ica_cmd->add_subcommand("probe", "rank components against a template recording");
  std::string icap_session, icap_template;
  ica_probe->add_option("--session", icap_session, "session directory")->required();
  ica_probe->add_option("--template", icap_template, "single-channel template .rec")->required();

  // epoch
  auto* epoch = app.add_subcommand("epoch", "cut labeled epochs");
  std::string epoch_session, epoch_setting;
  epoch->add_option("--session", epoch_session, "session directory")->required();
  epoch->add_option("--setting", epoch_setting, "me-movement | me-cue | mi-cue");

  // train
  auto* train = app.add_subcommand("train", "train the decoder on an epoch bundle");
  std::string train_epochs, train_out;
  std::int64_t train_seed = -1;
  train->add_option("--epochs", train_epochs, "epoch bundle .rec")->required();
  train->add_option("--out", train_out, "output weights file")->required();
  train->add_option("--seed", train_seed, "training seed");

  // predict
  auto* predict = app.add_subcommand("predict", "classify an epoch bundle with saved weights");
  std::string pred_model, pred_epochs, pred_out;
  predict->add_option("--model", pred_model, "weights file")->required();
  predict->add_option("--epochs", pred_epochs, "epoch bundle .rec")->required();
  predict->add_option("--out", pred_out, "predictions file")->required();

  // eval cv|sweep|avg|probe-ic|probe-channels
  auto* eval = app.add_subcommand("eval", "evaluation protocols");
  eval->require_subcommand(1);
  auto* ev_cv = eval->add_subcommand("cv", "stratified k-fold cross-validation");
  std::string evcv_epochs, evcv_out = "cv_report.txt";
  int evcv_folds = -1;
  ev_cv->add_option("--epochs", evcv_epochs, "epoch bundle .rec")->required();
  ev_cv->add_option("--out", evcv_out, "report path");
  ev_cv->add_option("--folds", evcv_folds, "number of folds");
  auto* ev_sweep = eval->add_subcommand("sweep", "sample-complexity sweep (fixed final test set)");
  std::string evsw_epochs, evsw_out = "sweep_report.txt";
  long evsw_test = -1;
  ev_sweep->add_option("--epochs", evsw_epochs, "epoch bundle .rec")->required();
  ev_sweep->add_option("--out", evsw_out, "report path");
  ev_sweep->add_option("--test-size", evsw_test, "held-out final-trial count");
  auto* ev_avg = eval->add_subcommand("avg", "trial-averaged (SNR-boosted) evaluation");
  std::string evav_epochs, evav_out = "avg_report.txt";
  long evav_test = -1;
  ev_avg->add_option("--epochs", evav_epochs, "epoch bundle .rec")->required();
  ev_avg->add_option("--out", evav_out, "report path");
  ev_avg->add_option("--test-size", evav_test, "held-out final-trial count");
  auto* ev_pic = eval->add_subcommand("probe-ic", "decode from a single independent component");
  std::string evpi_session, evpi_out = "probe_ic_report.txt";
  int evpi_component = -1;
  ev_pic->add_option("--session", evpi_session, "session directory")->required();
  ev_pic->add_option("--component", evpi_component, "component index")->required();
  ev_pic->add_option("--out", evpi_out, "report path");
  auto* ev_pch = eval->add_subcommand("probe-channels", "decode from a channel subset");
  std::string evpc_epochs, evpc_out = "probe_channels_report.txt";
  std::vector<std::string> evpc_channels;
  ev_pch->add_option("--epochs", evpc_epochs, "epoch bundle .rec")->required();
  ev_pch->add_option("--channels", evpc_channels, "channel names to keep")
      ->required()
      ->delimiter(',');
  ev_pch->add_option("--out", evpc_out, "report path");

  // reproduce
  auto* repro = app.add_subcommand("reproduce", "run the full protocol end to end");
  std::string repro_out;
  std::int64_t repro_seed = -1;
  repro->add_option("--out", repro_out, "output directory")->required();
  repro->add_option("--seed", repro_seed, "master seed (synth + train)");

  CLI11_PARSE(app, argc, argv);

  try {
    pipeline::PipelineConfig cfg = make_config(config_path, overrides);
    if (jobs_opt->count()) cfg.jobs = jobs;
    Timer timer;
    fs::path manifest_dir;
    std::string sub;

    if (*synth) {
      sub = "synth";
      if (synth_trials >= 0) cfg.synth_trials = synth_trials;
      if (synth_seed >= 0) cfg.synth_seed = static_cast<std::uint64_t>(synth_seed);
      if (synth_snr > 0) cfg.synth_snr = synth_snr;
      if (!synth_artifact.empty()) cfg.synth_artifact = synth_artifact;
      if (synth_artifact_amp > 0) cfg.synth_artifact_amplitude = synth_artifact_amp;
      do_synth(cfg, synth_out);
      manifest_dir = synth_out;
    } else if (*sync) {
      sub = "sync";
      if (!sync_pd.empty()) cfg.pd_channel = sync_pd;
      do_sync(cfg, sync_session);
      manifest_dir = sync_session;
    } else if (*prep) {
      sub = "preprocess";
      if (prep_notch > 0) cfg.notch_hz = prep_notch;
      if (prep_band.size() == 2) {
        cfg.band_low_hz = prep_band[0];
        cfg.band_high_hz = prep_band[1];
      }
      if (prep_resample > 0) cfg.resample_hz = prep_resample;
      do_preprocess(cfg, prep_session);
      manifest_dir = prep_session;
    } else if (*ica_fit) {
      sub = "ica fit";
      if (icaf_k > 0) cfg.ica_k = icaf_k;
      if (icaf_seed >= 0) cfg.ica_seed = static_cast<std::uint64_t>(icaf_seed);
      const Recording eeg = dataio::read_recording(fs::path(icaf_session) / "eeg_proc.rec");
      const int k = cfg.ica_k > 0 ? cfg.ica_k : eeg.n_channels();
      const ica::IcaModel model = ica::fit_ica(eeg, k, cfg.ica_seed);
      ica::write_model(model, fs::path(icaf_session) / "ica.model");
      std::cout << "components\t" << model.n_components << "\nconverged\t" << model.converged
                << "\niterations\t" << model.iterations << "\n";
      manifest_dir = icaf_session;
    } else if (*ica_apply) {
      sub = "ica apply";
      const fs::path dir(icaa_session);
      const Recording eeg = dataio::read_recording(dir / "eeg_proc.rec");
      const ica::IcaModel model = ica::read_model(dir / "ica.model");
      std::set<int> keep;
      for (int i = 0; i < model.n_components; ++i) keep.insert(i);
      for (int r : icaa_reject)
        if (!keep.erase(r))
          throw PipelineError("ica apply: rejected component " + std::to_string(r) +
                              " out of range");
      dataio::write_recording(ica::reconstruct(model, eeg, keep), dir / "eeg_clean.rec");
      manifest_dir = dir;
    } else if (*ica_probe) {
      sub = "ica probe";
      const fs::path dir(icap_session);
      const Recording eeg = dataio::read_recording(dir / "eeg_proc.rec");
      const ica::IcaModel model = ica::read_model(dir / "ica.model");
      Recording tmpl = dataio::read_recording(icap_template);
      if (std::abs(tmpl.sample_rate_hz - eeg.sample_rate_hz) > 1e-9)
        tmpl = sigproc::resample(tmpl, eeg.sample_rate_hz);
      const auto order = ica::rank_components_by_template(
          model, eeg, tmpl.samples.row(0).transpose().cast<double>());
      const Recording src = ica::sources(model, eeg);
      std::cout << "rank\tcomponent\tabs_correlation\n";
      for (size_t r = 0; r < order.size(); ++r)
        std::cout << r << "\t" << order[r] << "\t"
                  << ica::abs_correlation(
                         src.samples.row(order[r]).transpose().cast<double>(),
                         tmpl.samples.row(0).transpose().cast<double>())
                  << "\n";
      manifest_dir = dir;
    } else if (*epoch) {
      sub = "epoch";
      if (!epoch_setting.empty()) cfg.epoch_setting = epoch_setting;
      do_epoch(cfg, epoch_session);
      manifest_dir = epoch_session;
    } else if (*train) {
      sub = "train";
      if (train_seed >= 0) cfg.train_seed = static_cast<std::uint64_t>(train_seed);
      do_train(cfg, train_epochs, train_out);
      manifest_dir = fs::path(train_out).parent_path();
    } else if (*predict) {
      sub = "predict";
      do_predict(pred_model, pred_epochs, pred_out);
      manifest_dir = fs::path(pred_out).parent_path();
    } else if (*ev_cv) {
      sub = "eval cv";
      if (evcv_folds > 0) cfg.eval_folds = evcv_folds;
      do_eval_cv(cfg, evcv_epochs, evcv_out);
      manifest_dir = fs::path(evcv_out).parent_path();
    } else if (*ev_sweep) {
      sub = "eval sweep";
      if (evsw_test > 0) cfg.eval_test_size = evsw_test;
      do_eval_sweep(cfg, evsw_epochs, evsw_out);
      manifest_dir = fs::path(evsw_out).parent_path();
    } else if (*ev_avg) {
      sub = "eval avg";
      if (evav_test > 0) cfg.eval_test_size = evav_test;
      do_eval_avg(cfg, evav_epochs, evav_out);
      manifest_dir = fs::path(evav_out).parent_path();
    } else if (*ev_pic) {
      sub = "eval probe-ic";
      const fs::path dir(evpi_session);
      const Recording eeg = dataio::read_recording(dir / "eeg_proc.rec");
      const EventStream events = dataio::read_events(dir / "aligned.evt");
      const ica::IcaModel model = ica::read_model(dir / "ica.model");
      const EpochSetting setting = epoch_setting_from_string(cfg.epoch_setting);
      Recording pen;
      const Recording* pen_ptr = nullptr;
      if (setting == EpochSetting::me_movement) {
        pen = dataio::read_recording(dir / "pen_proc.rec");
        pen_ptr = &pen;
      }
      const auto fp = evalharness::fingerprint(cfg.net_config(), cfg.train_config(), "probe-ic");
      const auto report = evalharness::confound_probe_single_ic(
          eeg, events, model, evpi_component, setting, factory_for(cfg), cfg.train_seed, fp,
          pen_ptr, cfg.jobs);
      write_text(evpi_out, "== single-IC probe, component " + std::to_string(evpi_component) +
                               " ==\n" + evalharness::report_table(report));
      manifest_dir = fs::path(evpi_out).parent_path();
    } else if (*ev_pch) {
      sub = "eval probe-channels";
      const EpochDataset ds = dataio::read_epoch_dataset(evpc_epochs);
      const auto fp =
          evalharness::fingerprint(cfg.net_config(), cfg.train_config(), "probe-channels");
      const auto report = evalharness::confound_probe_channels(ds, evpc_channels, factory_for(cfg),
                                                               cfg.train_seed, fp, cfg.jobs);
      std::string names;
      for (const auto& n : evpc_channels) names += (names.empty() ? "" : ",") + n;
      write_text(evpc_out,
                 "== channel probe {" + names + "} ==\n" + evalharness::report_table(report));
      manifest_dir = fs::path(evpc_out).parent_path();
    } else if (*repro) {
      sub = "reproduce";
      if (repro_seed >= 0) {
        cfg.synth_seed = static_cast<std::uint64_t>(repro_seed);
        cfg.train_seed = static_cast<std::uint64_t>(repro_seed);
      }
      do_reproduce(cfg, repro_out);
      manifest_dir = repro_out;
    }

    if (manifest_dir.empty()) manifest_dir = ".";
    pipeline::write_manifest(cfg, manifest_dir, sub, timer.elapsed_s());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
