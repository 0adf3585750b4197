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

// Discrete-event model of the body-area network: patch nodes stream 12-bit
// EMG/ACC samples over a TDMA schedule through a bit-flipping channel with
// five-pulse majority decoding; the central node demultiplexes, assembles
// 3 s windows, runs inference and raises alerts.
//
// Time is kept in integer nanoseconds. Events at the same instant are ordered
// by node id (patch nodes first, then the central node), then by kind in the
// order of EventKind, then by insertion order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fogwear/rng.hpp"
#include "fogwear/signal.hpp"
#include "json.hpp"

namespace fogwear::netsim {

// ---------------------------------------------------------------------------
// Channel.

// P(majority of n pulses wrong) = sum_{k > n/2} C(n,k) p^k (1-p)^(n-k).
// Throws ConfigError for even n or p outside [0, 1].
double ber_majority(double p_pulse, int n_pulses = 5);

// Inverse of ber_majority on [0, 0.5] by bisection.
double solve_pulse_error_for_ber(double target_ber, int n_pulses = 5);

struct ChannelModel {
  double p_pulse = 0.0;
  int pulses_per_bit = 5;

  double bit_error_rate() const { return ber_majority(p_pulse, pulses_per_bit); }
};

// CRC-16/CCITT: polynomial 0x1021, initial value 0xFFFF, MSB first, no final
// xor. Works on an arbitrary number of bits.
std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bits);
std::uint16_t crc16_ccitt_bytes(std::span<const std::uint8_t> bytes);

struct Transmission {
  std::vector<std::uint8_t> bits;      // as received
  std::vector<std::size_t> error_positions;
};

// Flips each bit independently with the channel's post-majority BER.
// Error positions are drawn by geometric gaps, so the cost is proportional to
// the number of errors.
Transmission transmit_frame(std::span<const std::uint8_t> bits, const ChannelModel& ch, Rng& rng);

// ---------------------------------------------------------------------------
// Nodes and schedule.

struct NodeConfig {
  int node_id = 0;
  std::string name;
  signal::Modality modality = signal::Modality::kEMG;
  std::vector<std::string> channels;
  int sample_rate_hz = 250;
  int sample_bits = 12;
  int id_bits = 8;
  int seq_bits = 16;
  int crc_bits = 16;

  double payload_rate_bps() const {
    return static_cast<double>(channels.size()) * sample_rate_hz * sample_bits;
  }
  int header_bits() const { return id_bits + seq_bits + crc_bits; }
};

// EMG_L, EMG_R (tibialis anterior) and ACC_L, ACC_R (three axes each).
std::vector<NodeConfig> default_nodes(int emg_rate_hz = 250, int acc_rate_hz = 64);

struct TdmaSchedule {
  double slot_duration_s = 1e-3;
  std::vector<int> superframe;  // node id per slot
  double link_rate_bps = 40e6;
  double guard_time_s = 50e-6;
  int max_payload_bits = 1024;

  double superframe_period_s() const { return slot_duration_s * static_cast<double>(superframe.size()); }
  // Bits a slot can carry between its guard intervals.
  double slot_capacity_bits() const;
};

struct ScheduleReport {
  TdmaSchedule schedule;
  // Per node, in superframe order.
  std::vector<double> payload_rate_bps;
  std::vector<double> capacity_bps;  // max payload per frame / superframe period
  std::vector<int> payload_bits_per_frame;  // worst case
  double utilization = 0.0;  // on-air bits incl. headers / link rate
};

// Round-robin schedule, node i in slot i. Throws ConfigError for duplicate
// ids, a node whose rate exceeds its share, a frame that does not fit its slot
// or utilization above the bound.
ScheduleReport build_schedule(std::span<const NodeConfig> nodes, double slot_duration_s = 1e-3,
                              double link_rate_bps = 40e6, double guard_time_s = 50e-6,
                              double utilization_bound = 0.8, int max_payload_bits = 1024);

// ---------------------------------------------------------------------------
// Simulation.

enum class EventKind : std::uint8_t {
  kSlotStart,
  kFrameTx,
  kFrameRx,
  kFrameCrcFail,
  kWindowReady,
  kInferenceStart,
  kInferenceDone,
  kAlert,
};

std::string_view to_string(EventKind k);

inline constexpr int kCentralNode = 255;

struct SimEvent {
  std::int64_t t_ns = 0;
  EventKind kind = EventKind::kSlotStart;
  int node = 0;
  std::uint64_t seq = 0;  // frame sequence or window index
  // frame_tx: airtime end; window events: window end time.
  std::int64_t aux_ns = 0;
  // frame events: bits; window_ready: backlog after enqueue; alert and
  // inference_done: probability.
  double value = 0.0;
  bool degraded = false;  // window events
};

struct EventLog {
  std::vector<SimEvent> events;  // time-ordered
  // Complete counters, kept even when frame-level events are not recorded.
  std::uint64_t frames_tx = 0;
  std::uint64_t frames_rx = 0;
  std::uint64_t frames_crc_fail = 0;
  std::uint64_t frames_in_flight = 0;
  std::uint64_t bits_tx = 0;
  std::uint64_t bit_errors = 0;
  std::uint64_t superframes = 0;
  std::uint64_t collisions = 0;
  double max_clock_offset_s = 0.0;
  double sim_duration_s = 0.0;
  double inference_time_s = 0.0;
  double window_s = 0.0;
  double superframe_s = 0.0;
};

enum class LossPolicy : std::uint8_t { kZeroFill, kHoldLast };

struct SimConfig {
  std::vector<NodeConfig> nodes = default_nodes();
  double slot_duration_s = 1e-3;
  double link_rate_bps = 40e6;
  double guard_time_s = 50e-6;
  double utilization_bound = 0.8;
  int max_payload_bits = 1024;
  ChannelModel channel;
  double drift_ppm = 20.0;
  double resync_interval_s = 1.0;
  double inference_time_s = 2.3;
  double window_s = 3.0;
  double sim_duration_s = 600.0;
  double decision_threshold = 0.5;
  LossPolicy loss_policy = LossPolicy::kZeroFill;
  std::uint64_t seed = 11;
  // Frame-level events (slot_start, frame_tx, frame_rx, frame_crc_fail) are
  // numerous; counters are kept regardless.
  bool record_frame_events = true;
  // No inference completing for this long while work is queued aborts the run.
  double watchdog_s = 60.0;
  std::string eeg_preset = "eeg";

  void validate() const;
};

nlohmann::json to_json(const SimConfig& c);
SimConfig sim_config_from_json(const nlohmann::json& j);

// Per-node code streams (channels interleaved per sample instant).
struct NodeStream {
  int node_id = 0;
  std::size_t channels = 0;
  std::vector<std::int16_t> codes;  // sample-major
  std::vector<std::uint8_t> received;  // per sample instant; central side only
};

using Predictor = std::function<double(const signal::Window&)>;

struct SimResult {
  EventLog log;
  ScheduleReport schedule;
  std::vector<NodeStream> sent;
  std::vector<NodeStream> reconstructed;
  std::vector<std::string> diagnostics;
  bool saturated = false;
};

// Streams `source` (looped if shorter than the simulated span) from the patch
// nodes; EEG is sampled locally at the central node. The predictor scores
// each assembled window; an alert fires when the score reaches the decision
// threshold. Throws ConfigError for an infeasible schedule and RuntimeError
// when the watchdog trips.
SimResult run_simulation(const signal::Recording& source, const SimConfig& cfg,
                         const Predictor& predictor);

struct LatencyReport {
  std::uint64_t windows = 0;
  std::uint64_t windows_degraded = 0;
  std::uint64_t inferences = 0;
  std::uint64_t alerts = 0;
  double mean_alert_latency_s = 0.0;
  double max_alert_latency_s = 0.0;
  // Inference completion relative to window end, for every window.
  double mean_decision_latency_s = 0.0;
  double max_decision_latency_s = 0.0;
  std::uint64_t backlog_high_water = 0;
  std::uint64_t frames_tx = 0;
  std::uint64_t frames_rx = 0;
  std::uint64_t frames_lost = 0;
  std::uint64_t bits_tx = 0;
  std::uint64_t bit_errors = 0;
  std::uint64_t collisions = 0;
  double energy_tx_j = 0.0;
  double energy_rx_j = 0.0;
  bool saturated = false;

  bool operator==(const LatencyReport&) const = default;
};

inline constexpr double kTxEnergyPerBitJ = 3.4e-12;
inline constexpr double kRxEnergyPerBitJ = 110.7e-12;

LatencyReport latency_report(const EventLog& log);

// Exhaustive pairwise check of frame_tx intervals from different nodes.
std::uint64_t count_collisions(const EventLog& log);

std::string events_jsonl(const EventLog& log);
nlohmann::json to_json(const LatencyReport& r);
std::string summary_csv(const LatencyReport& r);

}  // namespace fogwear::netsim
