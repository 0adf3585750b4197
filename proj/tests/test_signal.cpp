/*
 * Copyright 2026 The fogwear Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fogwear/error.hpp"
#include "fogwear/signal.hpp"

using namespace fogwear;
using namespace fogwear::signal;
namespace fs = std::filesystem;

namespace {

Recording ramp_recording(const std::string& id, double duration, std::vector<Interval> fog = {}) {
  Recording r;
  r.subject_id = id;
  r.duration_s = duration;
  r.fog_intervals = std::move(fog);
  auto add = [&](Modality m, const std::string& ch, double rate) {
    Stream s{m, ch, rate, {}};
    const auto n = static_cast<std::size_t>(duration * rate);
    for (std::size_t i = 0; i < n; ++i) s.samples.push_back(static_cast<double>(i) / rate);
    r.streams.push_back(std::move(s));
  };
  add(Modality::kEEG, "Fz", 100.0);
  add(Modality::kEEG, "Cz", 100.0);
  add(Modality::kEMG, "TA_L", 200.0);
  add(Modality::kACC, "L_x", 50.0);
  return r;
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fogwear_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("modality names and units") {
  CHECK(parse_modality("eeg") == Modality::kEEG);
  CHECK(to_string(Modality::kACC) == "ACC");
  CHECK_THROWS_AS(parse_modality("ECG"), DataError);
  CHECK(unit_factor(Modality::kEMG, "mV") == 1000.0);
  CHECK(unit_factor(Modality::kACC, "mg") == 1e-3);
  CHECK_THROWS_AS(unit_factor(Modality::kACC, "uV"), DataError);
}

TEST_CASE("recording validation") {
  Recording r = ramp_recording("S1", 10.0);
  CHECK_NOTHROW(r.validate());
  r.streams[1].sample_rate_hz = 128.0;
  CHECK_THROWS_AS(r.validate(), DataError);
  r = ramp_recording("S1", 10.0, {{4.0, 6.0}, {5.0, 7.0}});
  CHECK_THROWS_AS(r.validate(), DataError);
  r = ramp_recording("S1", 10.0, {{8.0, 12.0}});
  CHECK_THROWS_AS(r.validate(), DataError);
}

TEST_CASE("window counts and geometry") {
  CHECK(window_count(10.0, 3.0, 1.5) == 5);
  CHECK(window_count(3.0, 3.0, 1.5) == 1);
  CHECK(window_count(2.9, 3.0, 1.5) == 0);
  const Recording r = ramp_recording("S1", 10.0);
  const auto ws = segment_windows(r, 3.0, 1.5);
  REQUIRE(ws.size() == 5);
  const ModalityBlock* eeg = ws[2].block(Modality::kEEG);
  REQUIRE(eeg != nullptr);
  CHECK(eeg->samples == 300);
  CHECK(eeg->channels.size() == 2);
  // Samples come from [start, start + length).
  CHECK(eeg->channel(0)[0] == doctest::Approx(3.0));
  CHECK(ws[2].block(Modality::kEMG)->samples == 600);
  CHECK(ws[2].block(Modality::kACC)->samples == 150);
}

TEST_CASE("labelling by overlap fraction") {
  const std::vector<Interval> fog{{3.0, 4.0}};
  Window w;
  w.start_s = 1.5;
  w.length_s = 3.0;
  const Window a = assign_label(w, fog, 0.25);
  CHECK(a.label_overlap_fraction == doctest::Approx(1.0 / 3.0));
  CHECK(*a.label == 1);
  CHECK(*assign_label(w, fog, 0.5).label == 0);
  // Exactly at the threshold counts as FoG.
  w.start_s = 0.0;
  w.length_s = 4.0;
  CHECK(*assign_label(w, fog, 0.25).label == 1);
}

TEST_CASE("channel selection keeps request order") {
  const Recording r = ramp_recording("S1", 5.0);
  const std::vector<ChannelRef> pick{{Modality::kEEG, "Cz"}, {Modality::kACC, "L_x"}};
  const Recording s = select_channels(r, pick);
  REQUIRE(s.streams.size() == 2);
  CHECK(s.streams[0].channel == "Cz");
  const std::vector<ChannelRef> bad{{Modality::kEEG, "Pz"}};
  CHECK_THROWS_AS(select_channels(r, bad), DataError);
}

TEST_CASE("dataset round trip is exact") {
  const fs::path dir = temp_dir("dataset");
  std::vector<Recording> cohort{ramp_recording("S1", 6.0, {{1.0, 2.5}}), ramp_recording("S2", 4.5)};
  cohort[0].streams[0].samples[3] = 0.1 + 0.2;  // not exactly representable in short decimal
  const fs::path manifest = save_dataset(cohort, dir, "test");
  const auto back = load_dataset(manifest);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == cohort[0]);
  CHECK(back[1] == cohort[1]);
}

TEST_CASE("corrupt manifest errors name the file") {
  const fs::path dir = temp_dir("corrupt");
  const fs::path m = dir / "manifest.json";
  std::ofstream(m) << "{ not json";
  try {
    load_dataset(m);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("manifest.json") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(dir / "missing.json"), DataError);
}
