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

#pragma once

// Multi-modal recordings, on-disk dataset layout, windowing and labeling.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fogwear::signal {

enum class Modality : std::uint8_t { kEEG = 0, kEMG = 1, kACC = 2 };

inline constexpr Modality kAllModalities[] = {Modality::kEEG, Modality::kEMG,
                                              Modality::kACC};

std::string_view to_string(Modality m);
// Accepts "EEG", "EMG", "ACC" (case-insensitive). Throws DataError otherwise.
Modality parse_modality(std::string_view text);

// Canonical unit per modality: microvolts for EEG/EMG, g for ACC.
std::string_view canonical_unit(Modality m);
// Multiplier converting `unit` into the canonical unit of `m`.
double unit_factor(Modality m, std::string_view unit);

struct Stream {
  Modality modality = Modality::kEEG;
  std::string channel;
  double sample_rate_hz = 0.0;
  std::vector<double> samples;

  bool operator==(const Stream&) const = default;
};

// Half-open [start_s, end_s).
struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const { return end_s - start_s; }
  bool operator==(const Interval&) const = default;
};

struct ChannelRef {
  Modality modality;
  std::string channel;
};

struct Recording {
  std::string subject_id;
  std::vector<Stream> streams;
  std::vector<Interval> fog_intervals;
  double duration_s = 0.0;

  // Throws DataError on a violated invariant.
  void validate() const;

  const Stream* find(Modality m, std::string_view channel) const;
  std::vector<const Stream*> streams_of(Modality m) const;
  bool has(Modality m) const { return !streams_of(m).empty(); }

  bool operator==(const Recording&) const = default;
};

// Validates ordering, overlap and containment in [0, duration_s).
void validate_intervals(std::span<const Interval> intervals, double duration_s);

// The default model input complement: 4 EEG, 2 EMG (tibialis anterior) and
// 6 ACC (3 axes on each leg).
std::vector<ChannelRef> default_channel_set();

// One modality's slice of a window, channels x samples row-major.
struct ModalityBlock {
  Modality modality = Modality::kEEG;
  double sample_rate_hz = 0.0;
  std::vector<std::string> channels;
  std::size_t samples = 0;
  std::vector<double> data;

  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data).subspan(c * samples, samples);
  }
  bool operator==(const ModalityBlock&) const = default;
};

struct Window {
  std::string subject_id;
  double start_s = 0.0;
  double length_s = 0.0;
  std::vector<ModalityBlock> blocks;  // ordered by modality
  std::optional<int> label;
  double label_overlap_fraction = 0.0;

  const ModalityBlock* block(Modality m) const;
  ModalityBlock* block(Modality m);
};

inline constexpr double kDefaultWindowLengthS = 3.0;
inline constexpr double kDefaultStrideS = 1.5;
inline constexpr double kDefaultLabelThreshold = 0.25;

// Sliding windows starting at 0, stride, 2*stride, ... while the window fits.
// Labels are left unset. A stream that is short by at most one sample at the
// very end (allowed by load_recording) is padded by holding its last value.
std::vector<Window> segment_windows(const Recording& rec,
                                    double window_length_s = kDefaultWindowLengthS,
                                    double stride_s = kDefaultStrideS);

// Expected window count for the given geometry.
std::size_t window_count(double duration_s, double window_length_s, double stride_s);

// Fraction of the window covered by FoG, and label = fraction >= threshold.
Window assign_label(Window w, std::span<const Interval> fog_intervals,
                    double overlap_threshold = kDefaultLabelThreshold);

double overlap_fraction(double start_s, double length_s,
                        std::span<const Interval> intervals);

// Restricts the recording to the requested channels, in request order.
Recording select_channels(const Recording& rec, std::span<const ChannelRef> channels);

// Convenience: segment + label every recording.
std::vector<Window> make_windows(std::span<const Recording> cohort,
                                 double window_length_s, double stride_s,
                                 double overlap_threshold);

// ---------------------------------------------------------------------------
// On-disk dataset.

struct StreamFileRef {
  std::filesystem::path file;  // relative to the manifest root
  std::string unit;            // declared source unit, empty = take header unit
};

struct SubjectEntry {
  std::string subject_id;
  std::optional<double> duration_s;
  std::vector<StreamFileRef> streams;
  std::filesystem::path annotations;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<SubjectEntry> subjects;
  std::string description;

  // Throws DataError for duplicate subject ids or missing files.
  void validate() const;
};

inline constexpr std::string_view kManifestSchema = "fogwear.manifest/1";
inline constexpr std::string_view kStreamMagic = "#fogwear-stream";

DatasetManifest read_manifest(const std::filesystem::path& manifest_file);
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& manifest_file);

Stream read_stream_file(const std::filesystem::path& file,
                        std::string_view declared_unit = {});
void write_stream_file(const Stream& stream, const std::filesystem::path& file);

std::vector<Interval> read_annotations(const std::filesystem::path& file);
void write_annotations(std::span<const Interval> intervals,
                       const std::filesystem::path& file);

Recording load_recording(const DatasetManifest& manifest, const SubjectEntry& entry);
std::vector<Recording> load_dataset(const std::filesystem::path& manifest_file);

// Writes one directory per subject plus manifest.json under `root`; returns
// the manifest path.
std::filesystem::path save_dataset(std::span<const Recording> cohort,
                                   const std::filesystem::path& root,
                                   std::string_view description = {});

}  // namespace fogwear::signal
