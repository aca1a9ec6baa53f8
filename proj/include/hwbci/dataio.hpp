#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "hwbci/recording.hpp"

namespace hwbci::dataio {

using json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// .rec format: "HWREC1 <header_bytes>\n", then key=value header lines, then
// raw little-endian float32 samples in frame-major order (all channels of
// sample 0, then sample 1, ...).
// ---------------------------------------------------------------------------

inline void write_recording(const Recording& rec, const std::filesystem::path& path) {
  rec.validate();
  std::ostringstream hdr;
  hdr << "name=" << rec.name << "\n";
  hdr << "clock_domain=" << rec.clock_domain << "\n";
  hdr << "sample_rate_hz=" << format_double(rec.sample_rate_hz) << "\n";
  hdr << "start_time_s=" << format_double(rec.start_time_s) << "\n";
  hdr << "n_channels=" << rec.n_channels() << "\n";
  hdr << "n_samples=" << rec.n_samples() << "\n";
  hdr << "channels=";
  for (int c = 0; c < rec.n_channels(); ++c) {
    if (c) hdr << ",";
    hdr << rec.channel_names[c];
  }
  hdr << "\n";
  const std::string header = hdr.str();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw PipelineError("cannot open '" + path.string() + "' for writing");
  f << "HWREC1 " << header.size() << "\n" << header;

  // frame-major payload
  std::vector<float> frame(rec.n_channels());
  for (long s = 0; s < rec.n_samples(); ++s) {
    for (int c = 0; c < rec.n_channels(); ++c) frame[c] = rec.samples(c, s);
    f.write(reinterpret_cast<const char*>(frame.data()),
            static_cast<std::streamsize>(frame.size() * sizeof(float)));
  }
  if (!f) throw PipelineError("write failed for '" + path.string() + "'");
}

inline Recording read_recording(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PipelineError("cannot open '" + path.string() + "'");
  std::string magic;
  size_t header_len = 0;
  f >> magic >> header_len;
  if (magic != "HWREC1") throw PipelineError("'" + path.string() + "': malformed header (bad magic)");
  f.get();  // newline after length
  std::string header(header_len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw PipelineError("'" + path.string() + "': truncated header");

  Recording rec;
  long n_channels = -1, n_samples = -1;
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw PipelineError("'" + path.string() + "': malformed header line");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "name") rec.name = val;
    else if (key == "clock_domain") rec.clock_domain = val;
    else if (key == "sample_rate_hz") rec.sample_rate_hz = std::stod(val);
    else if (key == "start_time_s") rec.start_time_s = std::stod(val);
    else if (key == "n_channels") n_channels = std::stol(val);
    else if (key == "n_samples") n_samples = std::stol(val);
    else if (key == "channels") {
      std::istringstream cs(val);
      std::string ch;
      while (std::getline(cs, ch, ',')) rec.channel_names.push_back(ch);
    } else throw PipelineError("'" + path.string() + "': unknown header key '" + key + "'");
  }
  if (n_channels < 1 || n_samples < 1)
    throw PipelineError("'" + path.string() + "': malformed header (missing dimensions)");
  if (static_cast<long>(rec.channel_names.size()) != n_channels)
    throw PipelineError("'" + path.string() + "': channel list length != n_channels");

  std::vector<float> payload(static_cast<size_t>(n_channels) * n_samples);
  f.read(reinterpret_cast<char*>(payload.data()),
         static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(payload.size() * sizeof(float)))
    throw PipelineError("'" + path.string() + "': payload length mismatch with header");
  f.peek();
  if (!f.eof()) throw PipelineError("'" + path.string() + "': payload length mismatch with header");

  rec.samples.resize(n_channels, n_samples);
  for (long s = 0; s < n_samples; ++s)
    for (long c = 0; c < n_channels; ++c)
      rec.samples(c, s) = payload[static_cast<size_t>(s) * n_channels + c];
  rec.validate();
  return rec;
}

// ---------------------------------------------------------------------------
// .evt format: one JSON object per line, fields t, kind, label.
// Events are re-sorted by timestamp on read (stable for ties).
// ---------------------------------------------------------------------------

inline void write_events(const EventStream& stream, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw PipelineError("cannot open '" + path.string() + "' for writing");
  f << json{{"clock_domain", stream.clock_domain}}.dump() << "\n";
  for (const auto& e : stream.events) {
    json j{{"t", e.t_s}, {"kind", to_string(e.kind)}};
    if (e.label) j["label"] = std::string(1, e.label);
    f << j.dump() << "\n";
  }
}

inline EventStream read_events(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw PipelineError("cannot open '" + path.string() + "'");
  EventStream stream;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (first) {
      first = false;
      if (j.contains("clock_domain")) {
        stream.clock_domain = j["clock_domain"].get<std::string>();
        continue;
      }
    }
    Event e;
    e.t_s = j.at("t").get<double>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("label")) {
      const auto s = j["label"].get<std::string>();
      if (s.size() != 1) throw PipelineError("'" + path.string() + "': bad label '" + s + "'");
      e.label = s[0];
    }
    if (e.kind == EventKind::letter_cue) letter_class_index(e.label);
    stream.events.push_back(e);
  }
  stream.sort_stable();
  return stream;
}

// ---------------------------------------------------------------------------
// Epoch bundles: <name>.rec holds the epochs concatenated along time; a
// sidecar <name>.labels.jsonl holds one record per epoch.
// ---------------------------------------------------------------------------

inline void write_epoch_dataset(const EpochDataset& ds, const std::filesystem::path& rec_path) {
  ds.validate();
  if (ds.epochs.empty()) throw PipelineError("refusing to write empty epoch dataset");
  const int n_ch = static_cast<int>(ds.epochs.front().data.rows());
  const long win = ds.epochs.front().data.cols();
  Recording bundle;
  bundle.name = rec_path.stem().string();
  bundle.clock_domain = "epochs";
  bundle.sample_rate_hz = ds.sample_rate_hz;
  bundle.channel_names = ds.channel_names;
  bundle.samples.resize(n_ch, win * static_cast<long>(ds.epochs.size()));
  for (size_t i = 0; i < ds.epochs.size(); ++i)
    bundle.samples.middleCols(static_cast<long>(i) * win, win) = ds.epochs[i].data;
  write_recording(bundle, rec_path);

  auto sidecar = rec_path;
  sidecar.replace_extension(".labels.jsonl");
  std::ofstream f(sidecar);
  if (!f) throw PipelineError("cannot open '" + sidecar.string() + "' for writing");
  f << json{{"n_epochs", ds.epochs.size()}, {"window_samples", win}}.dump() << "\n";
  for (const auto& e : ds.epochs) {
    f << json{{"label", std::string(1, e.label)},
              {"setting", to_string(e.setting)},
              {"onset_time_s", e.onset_time_s},
              {"session_id", e.session_id}}
             .dump()
      << "\n";
  }
}

inline EpochDataset read_epoch_dataset(const std::filesystem::path& rec_path) {
  const Recording bundle = read_recording(rec_path);
  auto sidecar = rec_path;
  sidecar.replace_extension(".labels.jsonl");
  std::ifstream f(sidecar);
  if (!f) throw PipelineError("cannot open '" + sidecar.string() + "'");
  std::string line;
  if (!std::getline(f, line)) throw PipelineError("'" + sidecar.string() + "': empty sidecar");
  json meta = json::parse(line);
  const size_t n_epochs = meta.at("n_epochs").get<size_t>();
  const long win = meta.at("window_samples").get<long>();
  if (bundle.n_samples() != win * static_cast<long>(n_epochs))
    throw PipelineError("'" + rec_path.string() + "': bundle length != n_epochs * window");

  EpochDataset ds;
  ds.sample_rate_hz = bundle.sample_rate_hz;
  ds.channel_names = bundle.channel_names;
  for (size_t i = 0; i < n_epochs; ++i) {
    if (!std::getline(f, line)) throw PipelineError("'" + sidecar.string() + "': truncated sidecar");
    json j = json::parse(line);
    Epoch e;
    e.data = bundle.samples.middleCols(static_cast<long>(i) * win, win);
    e.label = j.at("label").get<std::string>().at(0);
    e.setting = epoch_setting_from_string(j.at("setting").get<std::string>());
    e.onset_time_s = j.at("onset_time_s").get<double>();
    e.session_id = j.at("session_id").get<std::string>();
    ds.epochs.push_back(std::move(e));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Fixed-test split: test set is the final n_test epochs in chronological
// order, the training super-set is everything before them.
// ---------------------------------------------------------------------------

inline std::pair<EpochDataset, EpochDataset> split_fixed_test(const EpochDataset& ds, size_t n_test) {
  if (n_test >= ds.size())
    throw PipelineError("split_fixed_test: n_test (" + std::to_string(n_test) +
                        ") must be smaller than dataset size (" + std::to_string(ds.size()) + ")");
  EpochDataset train, test;
  train.sample_rate_hz = test.sample_rate_hz = ds.sample_rate_hz;
  train.channel_names = test.channel_names = ds.channel_names;
  const size_t n_train = ds.size() - n_test;
  train.epochs.assign(ds.epochs.begin(), ds.epochs.begin() + static_cast<long>(n_train));
  test.epochs.assign(ds.epochs.begin() + static_cast<long>(n_train), ds.epochs.end());
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Montage preset.  The published montage is an image only; these schematic
// coordinates are plausible midline-dense placements.  Decoding consumes
// channel names, never coordinates.
// ---------------------------------------------------------------------------

inline Montage montage_paper32() {
  Montage m;
  m.reference = "Cz";
  const std::vector<Montage::Position> pos = {
      {"Fp1", -0.25, 0.95}, {"Fp2", 0.25, 0.95},  {"AFz", 0.0, 0.85},
      {"F7", -0.75, 0.60},  {"F3", -0.40, 0.60},  {"Fz", 0.0, 0.60},
      {"F4", 0.40, 0.60},   {"F8", 0.75, 0.60},   {"FC5", -0.60, 0.30},
      {"FC3", -0.40, 0.30}, {"FC1", -0.20, 0.30}, {"FCz", 0.0, 0.30},
      {"FC2", 0.20, 0.30},  {"FC4", 0.40, 0.30},  {"FC6", 0.60, 0.30},
      {"T7", -0.95, 0.0},   {"C5", -0.60, 0.0},   {"C3", -0.40, 0.0},
      {"C1", -0.20, 0.0},   {"C2", 0.20, 0.0},    {"C4", 0.40, 0.0},
      {"C6", 0.60, 0.0},    {"T8", 0.95, 0.0},    {"CP5", -0.60, -0.30},
      {"CP3", -0.40, -0.30},{"CP1", -0.20, -0.30},{"CPz", 0.0, -0.30},
      {"CP2", 0.20, -0.30}, {"CP4", 0.40, -0.30}, {"CP6", 0.60, -0.30},
      {"TP10", 0.90, -0.45},{"P8", 0.70, -0.60}};
  m.channels = pos;
  return m;
}

}  // namespace hwbci::dataio
