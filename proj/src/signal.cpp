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

#include "fogwear/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fogwear/error.hpp"
#include "fogwear/textio.hpp"
#include "json.hpp"

namespace fogwear::signal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTimeEps = 1e-9;

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string where(const fs::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kEEG: return "EEG";
    case Modality::kEMG: return "EMG";
    case Modality::kACC: return "ACC";
  }
  return "?";
}

Modality parse_modality(std::string_view text) {
  const std::string t = lower(text);
  if (t == "eeg") return Modality::kEEG;
  if (t == "emg") return Modality::kEMG;
  if (t == "acc") return Modality::kACC;
  throw DataError("unknown modality tag '" + std::string(text) + "'");
}

std::string_view canonical_unit(Modality m) {
  return m == Modality::kACC ? "g" : "uV";
}

double unit_factor(Modality m, std::string_view unit) {
  const std::string u = lower(unit);
  if (m == Modality::kACC) {
    if (u == "g") return 1.0;
    if (u == "mg") return 1e-3;
    if (u == "m/s^2" || u == "m/s2") return 1.0 / 9.80665;
  } else {
    if (u == "uv") return 1.0;
    if (u == "nv") return 1e-3;
    if (u == "mv") return 1e3;
    if (u == "v") return 1e6;
  }
  throw DataError("unit '" + std::string(unit) + "' is not valid for " +
                  std::string(to_string(m)));
}

// ---------------------------------------------------------------------------

void validate_intervals(std::span<const Interval> intervals, double duration_s) {
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const Interval& iv = intervals[i];
    if (!(iv.start_s >= 0.0) || !(iv.end_s > iv.start_s) ||
        iv.end_s > duration_s + kTimeEps) {
      throw DataError("annotation interval [" + format_real(iv.start_s) + ", " +
                      format_real(iv.end_s) + ") out of range [0, " +
                      format_real(duration_s) + ")");
    }
    if (i > 0) {
      const Interval& prev = intervals[i - 1];
      if (iv.start_s < prev.start_s) throw DataError("annotation intervals not sorted");
      if (iv.start_s < prev.end_s) {
        throw DataError("overlapping intervals [" + format_real(prev.start_s) + ", " +
                        format_real(prev.end_s) + ") and [" + format_real(iv.start_s) +
                        ", " + format_real(iv.end_s) + ")");
      }
    }
  }
}

void Recording::validate() const {
  if (subject_id.empty()) throw DataError("recording without subject id");
  if (!(duration_s > 0.0)) throw DataError(subject_id + ": duration must be positive");
  std::map<Modality, double> rates;
  std::set<std::pair<Modality, std::string>> names;
  for (const Stream& s : streams) {
    if (!(s.sample_rate_hz > 0.0)) {
      throw DataError(subject_id + "/" + s.channel + ": sample rate must be positive");
    }
    auto [it, inserted] = rates.emplace(s.modality, s.sample_rate_hz);
    if (!inserted && it->second != s.sample_rate_hz) {
      throw DataError(subject_id + ": " + std::string(to_string(s.modality)) +
                      " streams disagree on sample rate");
    }
    if (!names.emplace(s.modality, s.channel).second) {
      throw DataError(subject_id + ": duplicate channel " + s.channel);
    }
    const double span = static_cast<double>(s.samples.size()) / s.sample_rate_hz;
    if (std::abs(span - duration_s) > 1.0 / s.sample_rate_hz + kTimeEps) {
      throw DataError(subject_id + "/" + s.channel + ": " +
                      std::to_string(s.samples.size()) + " samples at " +
                      format_real(s.sample_rate_hz) + " Hz inconsistent with duration " +
                      format_real(duration_s) + " s");
    }
  }
  validate_intervals(fog_intervals, duration_s);
}

const Stream* Recording::find(Modality m, std::string_view channel) const {
  for (const Stream& s : streams) {
    if (s.modality == m && s.channel == channel) return &s;
  }
  return nullptr;
}

std::vector<const Stream*> Recording::streams_of(Modality m) const {
  std::vector<const Stream*> out;
  for (const Stream& s : streams) {
    if (s.modality == m) out.push_back(&s);
  }
  return out;
}

std::vector<ChannelRef> default_channel_set() {
  return {
      {Modality::kEEG, "Fz"},      {Modality::kEEG, "Cz"},      {Modality::kEEG, "C3"},
      {Modality::kEEG, "C4"},      {Modality::kEMG, "TA_L"},    {Modality::kEMG, "TA_R"},
      {Modality::kACC, "L_x"},     {Modality::kACC, "L_y"},     {Modality::kACC, "L_z"},
      {Modality::kACC, "R_x"},     {Modality::kACC, "R_y"},     {Modality::kACC, "R_z"},
  };
}

// ---------------------------------------------------------------------------

const ModalityBlock* Window::block(Modality m) const {
  for (const ModalityBlock& b : blocks) {
    if (b.modality == m) return &b;
  }
  return nullptr;
}

ModalityBlock* Window::block(Modality m) {
  for (ModalityBlock& b : blocks) {
    if (b.modality == m) return &b;
  }
  return nullptr;
}

std::size_t window_count(double duration_s, double window_length_s, double stride_s) {
  if (duration_s + kTimeEps < window_length_s) return 0;
  return static_cast<std::size_t>(
             std::floor((duration_s - window_length_s) / stride_s + kTimeEps)) +
         1;
}

std::vector<Window> segment_windows(const Recording& rec, double window_length_s,
                                    double stride_s) {
  if (!(window_length_s > 0.0)) throw ConfigError("window length must be positive");
  if (!(stride_s > 0.0)) throw ConfigError("stride must be positive");
  if (window_length_s > rec.duration_s + kTimeEps) {
    throw DataError(rec.subject_id + ": window of " + format_real(window_length_s) +
                    " s longer than recording of " + format_real(rec.duration_s) + " s");
  }
  const std::size_t count = window_count(rec.duration_s, window_length_s, stride_s);
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Window w;
    w.subject_id = rec.subject_id;
    w.start_s = static_cast<double>(k) * stride_s;
    w.length_s = window_length_s;
    for (Modality m : kAllModalities) {
      const auto streams = rec.streams_of(m);
      if (streams.empty()) continue;
      ModalityBlock b;
      b.modality = m;
      b.sample_rate_hz = streams.front()->sample_rate_hz;
      b.samples = static_cast<std::size_t>(std::llround(b.sample_rate_hz * window_length_s));
      const auto first =
          static_cast<std::size_t>(std::llround(b.sample_rate_hz * w.start_s));
      b.data.reserve(b.samples * streams.size());
      for (const Stream* s : streams) {
        b.channels.push_back(s->channel);
        if (s->samples.empty()) throw DataError(rec.subject_id + "/" + s->channel + ": empty stream");
        for (std::size_t i = 0; i < b.samples; ++i) {
          const std::size_t idx = std::min(first + i, s->samples.size() - 1);
          b.data.push_back(s->samples[idx]);
        }
      }
      w.blocks.push_back(std::move(b));
    }
    out.push_back(std::move(w));
  }
  return out;
}

double overlap_fraction(double start_s, double length_s,
                        std::span<const Interval> intervals) {
  const double end_s = start_s + length_s;
  double covered = 0.0;
  for (const Interval& iv : intervals) {
    const double lo = std::max(start_s, iv.start_s);
    const double hi = std::min(end_s, iv.end_s);
    if (hi > lo) covered += hi - lo;
  }
  return std::clamp(covered / length_s, 0.0, 1.0);
}

Window assign_label(Window w, std::span<const Interval> fog_intervals,
                    double overlap_threshold) {
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0)) {
    throw ConfigError("label threshold must lie in (0, 1]");
  }
  w.label_overlap_fraction = overlap_fraction(w.start_s, w.length_s, fog_intervals);
  w.label = w.label_overlap_fraction >= overlap_threshold ? 1 : 0;
  return w;
}

Recording select_channels(const Recording& rec, std::span<const ChannelRef> channels) {
  Recording out;
  out.subject_id = rec.subject_id;
  out.fog_intervals = rec.fog_intervals;
  out.duration_s = rec.duration_s;
  for (const ChannelRef& ref : channels) {
    const Stream* s = rec.find(ref.modality, ref.channel);
    if (s == nullptr) {
      throw DataError(rec.subject_id + ": unknown channel " +
                      std::string(to_string(ref.modality)) + "/" + ref.channel);
    }
    out.streams.push_back(*s);
  }
  return out;
}

std::vector<Window> make_windows(std::span<const Recording> cohort, double window_length_s,
                                 double stride_s, double overlap_threshold) {
  std::vector<Window> out;
  for (const Recording& rec : cohort) {
    for (Window& w : segment_windows(rec, window_length_s, stride_s)) {
      out.push_back(assign_label(std::move(w), rec.fog_intervals, overlap_threshold));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files.

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const SubjectEntry& e : subjects) {
    if (!ids.insert(e.subject_id).second) {
      throw DataError("duplicate subject id '" + e.subject_id + "' in manifest");
    }
    for (const StreamFileRef& s : e.streams) {
      if (!fs::exists(root / s.file)) throw DataError("missing file " + (root / s.file).string());
    }
    if (!e.annotations.empty() && !fs::exists(root / e.annotations)) {
      throw DataError("missing file " + (root / e.annotations).string());
    }
  }
}

DatasetManifest read_manifest(const fs::path& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw DataError("missing file " + manifest_file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(manifest_file.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = manifest_file.parent_path();
  try {
    if (doc.value("schema", std::string()) != kManifestSchema) {
      throw DataError(manifest_file.string() + ": unsupported schema '" +
                      doc.value("schema", std::string()) + "'");
    }
    m.description = doc.value("description", std::string());
    for (const json& s : doc.at("subjects")) {
      SubjectEntry e;
      e.subject_id = s.at("subject_id").get<std::string>();
      if (s.contains("duration_s")) e.duration_s = s.at("duration_s").get<double>();
      for (const json& st : s.at("streams")) {
        e.streams.push_back({st.at("file").get<std::string>(), st.value("unit", std::string())});
      }
      e.annotations = s.value("annotations", std::string());
      m.subjects.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(manifest_file.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& manifest_file) {
  json doc;
  doc["schema"] = kManifestSchema;
  doc["description"] = manifest.description;
  json subjects = json::array();
  for (const SubjectEntry& e : manifest.subjects) {
    json s;
    s["subject_id"] = e.subject_id;
    if (e.duration_s) s["duration_s"] = *e.duration_s;
    json streams = json::array();
    for (const StreamFileRef& r : e.streams) {
      streams.push_back({{"file", r.file.generic_string()}, {"unit", r.unit}});
    }
    s["streams"] = std::move(streams);
    s["annotations"] = e.annotations.generic_string();
    subjects.push_back(std::move(s));
  }
  doc["subjects"] = std::move(subjects);
  write_text_file(manifest_file, doc.dump(2) + "\n");
}

// Header grammar:  #fogwear-stream modality=<EEG|EMG|ACC> channel=<name>
//                  rate_hz=<positive real> unit=<unit>
// followed by one sample per line.
Stream read_stream_file(const fs::path& file, std::string_view declared_unit) {
  std::ifstream in(file);
  if (!in) throw DataError("missing file " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(where(file, 1) + ": empty stream file");
  std::istringstream header(line);
  std::string tok;
  header >> tok;
  if (tok != kStreamMagic) throw DataError(where(file, 1) + ": missing stream header");
  std::map<std::string, std::string> kv;
  while (header >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw DataError(where(file, 1) + ": malformed header field '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"modality", "channel", "rate_hz", "unit"}) {
    if (!kv.count(key)) throw DataError(where(file, 1) + ": header lacks '" + key + "'");
  }
  Stream s;
  s.modality = parse_modality(kv["modality"]);
  s.channel = kv["channel"];
  const auto rate = parse_real(kv["rate_hz"]);
  if (!rate || !(*rate > 0.0)) throw DataError(where(file, 1) + ": sample rate must be positive");
  s.sample_rate_hz = *rate;
  const std::string& unit = kv["unit"];
  if (!declared_unit.empty() && lower(declared_unit) != lower(unit)) {
    throw DataError(where(file, 1) + ": header unit '" + unit +
                    "' disagrees with manifest unit '" + std::string(declared_unit) + "'");
  }
  const double factor = unit_factor(s.modality, unit);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view v = trim(line);
    if (v.empty()) continue;
    const auto x = parse_real(v);
    if (!x) throw DataError(where(file, lineno) + ": malformed row '" + std::string(v) + "'");
    s.samples.push_back(factor == 1.0 ? *x : *x * factor);
  }
  return s;
}

void write_stream_file(const Stream& stream, const fs::path& file) {
  std::string text;
  text.reserve(stream.samples.size() * 12 + 96);
  text += std::string(kStreamMagic) + " modality=" + std::string(to_string(stream.modality)) +
          " channel=" + stream.channel + " rate_hz=" + format_real(stream.sample_rate_hz) +
          " unit=" + std::string(canonical_unit(stream.modality)) + "\n";
  for (double x : stream.samples) {
    text += format_real(x);
    text += '\n';
  }
  write_text_file(file, text);
}

std::vector<Interval> read_annotations(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("missing file " + file.string());
  std::vector<Interval> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    const auto tab = v.find_first_of("\t ");
    if (tab == std::string_view::npos) {
      throw DataError(where(file, lineno) + ": expected start<TAB>end");
    }
    const auto a = parse_real(trim(v.substr(0, tab)));
    const auto b = parse_real(trim(v.substr(tab + 1)));
    if (!a || !b) throw DataError(where(file, lineno) + ": malformed row '" + std::string(v) + "'");
    out.push_back({*a, *b});
  }
  return out;
}

void write_annotations(std::span<const Interval> intervals, const fs::path& file) {
  std::string text = "# start_s\tend_s\n";
  for (const Interval& iv : intervals) {
    text += format_real(iv.start_s) + "\t" + format_real(iv.end_s) + "\n";
  }
  write_text_file(file, text);
}

Recording load_recording(const DatasetManifest& manifest, const SubjectEntry& entry) {
  Recording rec;
  rec.subject_id = entry.subject_id;
  for (const StreamFileRef& ref : entry.streams) {
    rec.streams.push_back(read_stream_file(manifest.root / ref.file, ref.unit));
  }
  if (entry.duration_s) {
    rec.duration_s = *entry.duration_s;
  } else {
    for (const Stream& s : rec.streams) {
      rec.duration_s = std::max(rec.duration_s,
                                static_cast<double>(s.samples.size()) / s.sample_rate_hz);
    }
  }
  if (!entry.annotations.empty()) {
    rec.fog_intervals = read_annotations(manifest.root / entry.annotations);
  }
  try {
    rec.validate();
  } catch (const DataError& e) {
    throw DataError(entry.subject_id + " (" + manifest.root.string() + "): " + e.what());
  }
  return rec;
}

std::vector<Recording> load_dataset(const fs::path& manifest_file) {
  const DatasetManifest manifest = read_manifest(manifest_file);
  std::vector<Recording> out;
  out.reserve(manifest.subjects.size());
  for (const SubjectEntry& e : manifest.subjects) out.push_back(load_recording(manifest, e));
  return out;
}

fs::path save_dataset(std::span<const Recording> cohort, const fs::path& root,
                      std::string_view description) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create " + root.string() + ": " + ec.message());
  DatasetManifest manifest;
  manifest.root = root;
  manifest.description = std::string(description);
  for (const Recording& rec : cohort) {
    rec.validate();
    SubjectEntry e;
    e.subject_id = rec.subject_id;
    e.duration_s = rec.duration_s;
    const fs::path dir = rec.subject_id;
    fs::create_directories(root / dir, ec);
    if (ec) throw DataError("cannot create " + (root / dir).string() + ": " + ec.message());
    for (const Stream& s : rec.streams) {
      const fs::path file = dir / (std::string(to_string(s.modality)) + "_" + s.channel + ".txt");
      write_stream_file(s, root / file);
      e.streams.push_back({file, std::string(canonical_unit(s.modality))});
    }
    e.annotations = dir / "fog.tsv";
    write_annotations(rec.fog_intervals, root / e.annotations);
    manifest.subjects.push_back(std::move(e));
  }
  const fs::path manifest_file = root / "manifest.json";
  write_manifest(manifest, manifest_file);
  return manifest_file;
}

}  // namespace fogwear::signal
