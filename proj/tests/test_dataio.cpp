#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "hwbci/dataio.hpp"

using namespace hwbci;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  const fs::path d = fs::temp_directory_path() / "hwbci_dataio_test";
  fs::create_directories(d);
  return d;
}

Recording make_recording(int n_ch, long n_samp, std::uint64_t seed = 7) {
  Recording r;
  r.name = "probe";
  r.clock_domain = "amp";
  r.sample_rate_hz = 1000.0;
  r.start_time_s = 0.25;
  for (int c = 0; c < n_ch; ++c) r.channel_names.push_back("ch" + std::to_string(c));
  r.samples.resize(n_ch, n_samp);
  Rng rng(seed);
  std::normal_distribution<float> g(0.f, 1.f);
  for (int c = 0; c < n_ch; ++c)
    for (long s = 0; s < n_samp; ++s) r.samples(c, s) = g(rng);
  return r;
}

}  // namespace

TEST_CASE("recording round trip is bit exact") {
  const Recording r = make_recording(2, 10);
  const fs::path p = tmp_dir() / "rt.rec";
  dataio::write_recording(r, p);
  const Recording q = dataio::read_recording(p);
  REQUIRE(q.name == r.name);
  REQUIRE(q.clock_domain == r.clock_domain);
  REQUIRE(q.sample_rate_hz == r.sample_rate_hz);
  REQUIRE(q.start_time_s == r.start_time_s);
  REQUIRE(q.channel_names == r.channel_names);
  REQUIRE(q.samples.rows() == r.samples.rows());
  REQUIRE(q.samples.cols() == r.samples.cols());
  // float payload must survive without any rounding
  REQUIRE(std::memcmp(q.samples.data(), r.samples.data(),
                      sizeof(float) * static_cast<size_t>(r.samples.size())) == 0);
}

TEST_CASE("recording payload size arithmetic") {
  // oracle: file size == header preamble + header + 4 bytes per sample value
  const int n_ch = 32;
  const long n_samp = 6000;
  const Recording r = make_recording(n_ch, n_samp);
  const fs::path p = tmp_dir() / "size.rec";
  dataio::write_recording(r, p);

  std::ifstream f(p, std::ios::binary);
  std::string magic;
  size_t header_len = 0;
  f >> magic >> header_len;
  REQUIRE(magic == "HWREC1");
  const auto preamble = static_cast<long>(f.tellg()) + 1;  // + newline
  REQUIRE(static_cast<long>(fs::file_size(p)) ==
          preamble + static_cast<long>(header_len) + n_ch * n_samp * 4);
}

TEST_CASE("recording read rejects malformed files") {
  const fs::path d = tmp_dir();
  const Recording r = make_recording(3, 50);
  const fs::path p = d / "mal.rec";
  dataio::write_recording(r, p);

  SECTION("bad magic") {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.write("NOPE", 4);
    f.close();
    REQUIRE_THROWS_AS(dataio::read_recording(p), PipelineError);
  }
  SECTION("truncated payload") {
    fs::resize_file(p, fs::file_size(p) - 4);
    REQUIRE_THROWS_AS(dataio::read_recording(p), PipelineError);
  }
  SECTION("trailing bytes") {
    std::ofstream f(p, std::ios::binary | std::ios::app);
    f.write("xx", 2);
    f.close();
    REQUIRE_THROWS_AS(dataio::read_recording(p), PipelineError);
  }
  SECTION("unknown header key") {
    // craft a minimal file with a bogus key
    const std::string hdr =
        "name=x\nclock_domain=c\nsample_rate_hz=10\nstart_time_s=0\n"
        "n_channels=1\nn_samples=1\nchannels=a\nbogus=1\n";
    std::ofstream f(d / "bogus.rec", std::ios::binary);
    f << "HWREC1 " << hdr.size() << "\n" << hdr;
    const float v = 1.0f;
    f.write(reinterpret_cast<const char*>(&v), 4);
    f.close();
    REQUIRE_THROWS_WITH(dataio::read_recording(d / "bogus.rec"),
                        Catch::Matchers::ContainsSubstring("bogus"));
  }
  SECTION("missing file") { REQUIRE_THROWS_AS(dataio::read_recording(d / "nope.rec"), PipelineError); }
}

TEST_CASE("non-finite samples are rejected on write") {
  Recording r = make_recording(1, 4);
  r.samples(0, 2) = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_THROWS_AS(dataio::write_recording(r, tmp_dir() / "nan.rec"), PipelineError);
}

TEST_CASE("event stream round trip and sorting") {
  EventStream s;
  s.clock_domain = "lsl";
  s.events.push_back({2.5, EventKind::fixation_cue, 0});
  s.events.push_back({1.0, EventKind::letter_cue, 'W'});
  s.events.push_back({3.0, EventKind::letter_cue, 'L'});
  const fs::path p = tmp_dir() / "rt.evt";
  dataio::write_events(s, p);
  const EventStream q = dataio::read_events(p);
  REQUIRE(q.clock_domain == "lsl");
  REQUIRE(q.events.size() == 3);
  // re-sorted on read
  REQUIRE(q.events[0].t_s == 1.0);
  REQUIRE(q.events[0].label == 'W');
  REQUIRE(q.events[1].kind == EventKind::fixation_cue);
  REQUIRE(q.events[2].label == 'L');
}

TEST_CASE("event stream rejects invalid letters") {
  const fs::path p = tmp_dir() / "badletter.evt";
  std::ofstream f(p);
  f << R"({"clock_domain":"lsl"})" << "\n";
  f << R"({"t":1.0,"kind":"letter_cue","label":"Z"})" << "\n";
  f.close();
  REQUIRE_THROWS_AS(dataio::read_events(p), PipelineError);
}

TEST_CASE("epoch dataset round trip") {
  EpochDataset ds;
  ds.sample_rate_hz = 100.0;
  ds.channel_names = {"a", "b"};
  Rng rng(3);
  std::normal_distribution<float> g(0.f, 1.f);
  const char letters[4] = {'L', 'V', 'O', 'W'};
  for (int i = 0; i < 8; ++i) {
    Epoch e;
    e.data.resize(2, 100);
    for (long j = 0; j < e.data.size(); ++j) e.data.data()[j] = g(rng);
    e.label = letters[i % 4];
    e.setting = EpochSetting::me_movement;
    e.onset_time_s = 1.0 + i;
    e.session_id = "s0";
    ds.epochs.push_back(e);
  }
  const fs::path p = tmp_dir() / "ds.rec";
  dataio::write_epoch_dataset(ds, p);
  const EpochDataset q = dataio::read_epoch_dataset(p);
  REQUIRE(q.size() == ds.size());
  REQUIRE(q.channel_names == ds.channel_names);
  for (size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(q.epochs[i].label == ds.epochs[i].label);
    REQUIRE(q.epochs[i].setting == ds.epochs[i].setting);
    REQUIRE(q.epochs[i].onset_time_s == ds.epochs[i].onset_time_s);
    REQUIRE(q.epochs[i].session_id == "s0");
    REQUIRE(q.epochs[i].data == ds.epochs[i].data);
  }
  REQUIRE(q.class_counts() == std::vector<int>{2, 2, 2, 2});
}

TEST_CASE("fixed test split takes the final n_test epochs") {
  EpochDataset ds;
  ds.sample_rate_hz = 100.0;
  ds.channel_names = {"a"};
  for (int i = 0; i < 10; ++i) {
    Epoch e;
    e.data = Eigen::MatrixXf::Constant(1, 5, static_cast<float>(i));
    e.label = "LVOW"[i % 4];
    e.onset_time_s = i;
    ds.epochs.push_back(e);
  }
  auto [train, test] = dataio::split_fixed_test(ds, 3);
  REQUIRE(train.size() == 7);
  REQUIRE(test.size() == 3);
  REQUIRE(test.epochs[0].data(0, 0) == 7.0f);
  REQUIRE(test.epochs[2].data(0, 0) == 9.0f);
  REQUIRE(train.epochs[6].data(0, 0) == 6.0f);
  REQUIRE_THROWS_AS(dataio::split_fixed_test(ds, 10), PipelineError);
  REQUIRE_THROWS_AS(dataio::split_fixed_test(ds, 11), PipelineError);
}

TEST_CASE("built-in paper-32 montage preset") {
  const Montage m = dataio::montage_paper32();
  REQUIRE(m.channels.size() == 32);
  REQUIRE(m.reference == "Cz");
  std::set<std::string> names;
  for (const auto& c : m.channels) names.insert(c.name);
  REQUIRE(names.size() == 32);  // unique
  // midline-dense claim: more channels near |x| <= 0.4 than outside
  int inner = 0;
  for (const auto& c : m.channels)
    if (std::abs(c.x) <= 0.4) ++inner;
  REQUIRE(inner > 16);
}
