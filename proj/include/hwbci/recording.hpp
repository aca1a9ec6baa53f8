#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hwbci/common.hpp"

namespace hwbci {

// Samples are stored as float32 so on-disk round trips are bit exact.
// EEG channels are microvolts, pen channels millimeters.
struct Recording {
  std::string name;
  std::string clock_domain;
  double sample_rate_hz = 0.0;
  double start_time_s = 0.0;
  std::vector<std::string> channel_names;
  Eigen::MatrixXf samples;  // n_channels x n_samples

  int n_channels() const { return static_cast<int>(samples.rows()); }
  long n_samples() const { return static_cast<long>(samples.cols()); }
  double duration_s() const { return n_samples() / sample_rate_hz; }
  double end_time_s() const { return start_time_s + duration_s(); }

  void validate() const {
    if (static_cast<int>(channel_names.size()) != n_channels())
      throw PipelineError("recording '" + name + "': channel name count != channel count");
    if (n_samples() < 1) throw PipelineError("recording '" + name + "': no samples");
    if (sample_rate_hz <= 0) throw PipelineError("recording '" + name + "': sample_rate_hz must be > 0");
    if (!samples.allFinite()) throw PipelineError("recording '" + name + "': non-finite sample values");
  }

  int channel_index(const std::string& ch) const {
    auto it = std::find(channel_names.begin(), channel_names.end(), ch);
    if (it == channel_names.end())
      throw PipelineError("recording '" + name + "': unknown channel '" + ch + "'");
    return static_cast<int>(it - channel_names.begin());
  }

  Recording select_channels(const std::vector<std::string>& names) const {
    Recording out;
    out.name = name;
    out.clock_domain = clock_domain;
    out.sample_rate_hz = sample_rate_hz;
    out.start_time_s = start_time_s;
    out.channel_names = names;
    out.samples.resize(static_cast<int>(names.size()), n_samples());
    for (size_t i = 0; i < names.size(); ++i)
      out.samples.row(static_cast<int>(i)) = samples.row(channel_index(names[i]));
    return out;
  }
};

enum class EventKind { letter_cue, fixation_cue, blank, pen_sample, photodiode_flash };

inline std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::letter_cue: return "letter_cue";
    case EventKind::fixation_cue: return "fixation_cue";
    case EventKind::blank: return "blank";
    case EventKind::pen_sample: return "pen_sample";
    case EventKind::photodiode_flash: return "photodiode_flash";
  }
  throw PipelineError("invalid event kind");
}

inline EventKind event_kind_from_string(const std::string& s) {
  if (s == "letter_cue") return EventKind::letter_cue;
  if (s == "fixation_cue") return EventKind::fixation_cue;
  if (s == "blank") return EventKind::blank;
  if (s == "pen_sample") return EventKind::pen_sample;
  if (s == "photodiode_flash") return EventKind::photodiode_flash;
  throw PipelineError("unknown event kind '" + s + "'");
}

inline const std::vector<char>& letter_alphabet() {
  static const std::vector<char> letters = {'L', 'V', 'O', 'W'};
  return letters;
}

inline int letter_class_index(char letter) {
  const auto& ab = letter_alphabet();
  auto it = std::find(ab.begin(), ab.end(), letter);
  if (it == ab.end()) throw PipelineError(std::string("invalid letter '") + letter + "'");
  return static_cast<int>(it - ab.begin());
}

struct Event {
  double t_s = 0.0;
  EventKind kind = EventKind::blank;
  char label = 0;  // letter for letter_cue, 0 otherwise
};

struct EventStream {
  std::string clock_domain;
  std::vector<Event> events;  // non-decreasing in t_s

  void sort_stable() {
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t_s < b.t_s; });
  }

  void validate() const {
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& e : events) {
      if (e.t_s < prev) throw PipelineError("event stream not sorted by timestamp");
      prev = e.t_s;
      if (e.kind == EventKind::letter_cue) letter_class_index(e.label);
    }
  }
};

enum class EpochSetting { me_movement, me_cue, mi_cue };

inline std::string to_string(EpochSetting s) {
  switch (s) {
    case EpochSetting::me_movement: return "me-movement";
    case EpochSetting::me_cue: return "me-cue";
    case EpochSetting::mi_cue: return "mi-cue";
  }
  throw PipelineError("invalid epoch setting");
}

inline EpochSetting epoch_setting_from_string(const std::string& s) {
  if (s == "me-movement" || s == "me_movement") return EpochSetting::me_movement;
  if (s == "me-cue" || s == "me_cue") return EpochSetting::me_cue;
  if (s == "mi-cue" || s == "mi_cue") return EpochSetting::mi_cue;
  throw PipelineError("unknown epoch setting '" + s + "'");
}

struct Epoch {
  Eigen::MatrixXf data;  // n_channels x n_window_samples
  char label = 0;
  EpochSetting setting = EpochSetting::me_cue;
  double onset_time_s = 0.0;
  std::string session_id;
};

// Chronological within a session, sessions in collection order.  The final-N
// test-set split relies on this ordering being preserved everywhere.
struct EpochDataset {
  std::vector<Epoch> epochs;
  double sample_rate_hz = 0.0;
  std::vector<std::string> channel_names;

  size_t size() const { return epochs.size(); }

  void validate() const {
    if (epochs.empty()) return;
    const auto rows = epochs.front().data.rows();
    const auto cols = epochs.front().data.cols();
    for (const auto& e : epochs) {
      if (e.data.rows() != rows || e.data.cols() != cols)
        throw PipelineError("epoch dataset: inconsistent epoch shapes");
      if (!e.data.allFinite()) throw PipelineError("epoch dataset: non-finite epoch values");
      letter_class_index(e.label);
    }
    if (static_cast<int>(channel_names.size()) != rows)
      throw PipelineError("epoch dataset: channel name count != epoch rows");
  }

  std::vector<int> class_counts() const {
    std::vector<int> counts(letter_alphabet().size(), 0);
    for (const auto& e : epochs) counts[letter_class_index(e.label)]++;
    return counts;
  }
};

struct Montage {
  struct Position {
    std::string name;
    double x = 0.0;  // schematic head coordinates, nose up
    double y = 0.0;
  };
  std::vector<Position> channels;
  std::string reference;

  std::vector<std::string> channel_names() const {
    std::vector<std::string> names;
    names.reserve(channels.size());
    for (const auto& c : channels) names.push_back(c.name);
    return names;
  }
};

}  // namespace hwbci
