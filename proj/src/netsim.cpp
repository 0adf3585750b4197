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

#include "fogwear/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "fogwear/error.hpp"
#include "fogwear/frontend.hpp"
#include "fogwear/textio.hpp"

namespace fogwear::netsim {

using nlohmann::json;
using signal::Modality;

// ---------------------------------------------------------------------------
// Channel.

double ber_majority(double p, int n) {
  if (n < 1 || n % 2 == 0) throw ConfigError("pulses per bit must be a positive odd number");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("pulse error probability must lie in [0, 1]");
  double sum = 0.0;
  double binom = 1.0;  // C(n, k)
  for (int k = 0; k <= n; ++k) {
    if (k > 0) binom = binom * static_cast<double>(n - k + 1) / static_cast<double>(k);
    if (2 * k > n) sum += binom * std::pow(p, k) * std::pow(1.0 - p, n - k);
  }
  return sum;
}

double solve_pulse_error_for_ber(double target, int n) {
  if (!(target >= 0.0 && target <= 0.5)) throw ConfigError("target BER must lie in [0, 0.5]");
  if (target == 0.0) return 0.0;
  if (target == 0.5) return 0.5;
  double lo = 0.0, hi = 0.5;
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (ber_majority(mid, n) < target ? lo : hi) = mid;
  }
  return std::abs(ber_majority(lo, n) - target) <= std::abs(ber_majority(hi, n) - target) ? lo : hi;
}

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bits) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : bits) {
    const bool top = (crc & 0x8000) != 0;
    crc = static_cast<std::uint16_t>(crc << 1);
    if (top != (b != 0)) crc ^= 0x1021;
  }
  return crc;
}

std::uint16_t crc16_ccitt_bytes(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> bits;
  bits.reserve(bytes.size() * 8);
  for (std::uint8_t byte : bytes) {
    for (int i = 7; i >= 0; --i) bits.push_back((byte >> i) & 1);
  }
  return crc16_ccitt(bits);
}

Transmission transmit_frame(std::span<const std::uint8_t> bits, const ChannelModel& ch, Rng& rng) {
  Transmission out;
  out.bits.assign(bits.begin(), bits.end());
  const double q = ch.bit_error_rate();
  if (q <= 0.0 || bits.empty()) return out;
  if (q >= 1.0) {
    for (std::size_t i = 0; i < out.bits.size(); ++i) {
      out.bits[i] ^= 1;
      out.error_positions.push_back(i);
    }
    return out;
  }
  const double log_keep = std::log1p(-q);
  std::size_t pos = 0;
  bool first = true;
  while (true) {
    const double gap = std::floor(std::log1p(-rng.uniform()) / log_keep);
    if (gap >= static_cast<double>(out.bits.size())) break;
    pos = first ? static_cast<std::size_t>(gap) : pos + 1 + static_cast<std::size_t>(gap);
    first = false;
    if (pos >= out.bits.size()) break;
    out.bits[pos] ^= 1;
    out.error_positions.push_back(pos);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schedule.

std::vector<NodeConfig> default_nodes(int emg_rate_hz, int acc_rate_hz) {
  std::vector<NodeConfig> nodes(4);
  nodes[0] = {0, "EMG_L", Modality::kEMG, {"TA_L"}, emg_rate_hz};
  nodes[1] = {1, "EMG_R", Modality::kEMG, {"TA_R"}, emg_rate_hz};
  nodes[2] = {2, "ACC_L", Modality::kACC, {"L_x", "L_y", "L_z"}, acc_rate_hz};
  nodes[3] = {3, "ACC_R", Modality::kACC, {"R_x", "R_y", "R_z"}, acc_rate_hz};
  return nodes;
}

double TdmaSchedule::slot_capacity_bits() const {
  return std::max(0.0, (slot_duration_s - 2.0 * guard_time_s) * link_rate_bps);
}

namespace {

constexpr std::int64_t kNsPerS = 1'000'000'000;

std::int64_t to_ns(double s) { return std::llround(s * 1e9); }

// Samples with timestamp j / rate < t.
std::int64_t samples_before(std::int64_t t_ns, int rate) {
  if (t_ns <= 0) return 0;
  return (t_ns * rate + kNsPerS - 1) / kNsPerS;
}

int worst_payload_bits(const NodeConfig& n, std::int64_t period_ns) {
  const std::int64_t per_frame = (period_ns * n.sample_rate_hz + kNsPerS - 1) / kNsPerS;
  return static_cast<int>(per_frame * static_cast<std::int64_t>(n.channels.size()) * n.sample_bits);
}

}  // namespace

ScheduleReport build_schedule(std::span<const NodeConfig> nodes, double slot_duration_s,
                              double link_rate_bps, double guard_time_s, double utilization_bound,
                              int max_payload_bits) {
  if (nodes.empty()) throw ConfigError("schedule needs at least one node");
  if (!(slot_duration_s > 0.0 && link_rate_bps > 0.0 && guard_time_s >= 0.0)) {
    throw ConfigError("slot duration and link rate must be positive, guard time >= 0");
  }
  ScheduleReport r;
  r.schedule.slot_duration_s = slot_duration_s;
  r.schedule.link_rate_bps = link_rate_bps;
  r.schedule.guard_time_s = guard_time_s;
  r.schedule.max_payload_bits = max_payload_bits;
  std::set<int> ids;
  for (const NodeConfig& n : nodes) {
    if (!ids.insert(n.node_id).second) throw ConfigError("duplicate node id " + std::to_string(n.node_id));
    if (n.node_id < 0 || n.node_id >= (1 << n.id_bits) || n.node_id == kCentralNode) {
      throw ConfigError("node id " + std::to_string(n.node_id) + " does not fit the id field");
    }
    if (n.channels.empty() || n.sample_rate_hz <= 0 || n.sample_bits < 1 || n.sample_bits > 16) {
      throw ConfigError("node " + n.name + ": needs channels, a positive rate and 1-16 bit samples");
    }
    r.schedule.superframe.push_back(n.node_id);
  }
  const double period = r.schedule.superframe_period_s();
  const std::int64_t period_ns = to_ns(period);
  double on_air_bps = 0.0;
  for (const NodeConfig& n : nodes) {
    const int payload = worst_payload_bits(n, period_ns);
    const double frame_bits = static_cast<double>(payload + n.header_bits());
    const double capacity_bps = std::min<double>(max_payload_bits,
                                                 r.schedule.slot_capacity_bits() - n.header_bits()) /
                                period;
    r.payload_rate_bps.push_back(n.payload_rate_bps());
    r.capacity_bps.push_back(capacity_bps);
    r.payload_bits_per_frame.push_back(payload);
    if (n.payload_rate_bps() > capacity_bps) {
      throw ConfigError("node " + n.name + " needs " + format_real(n.payload_rate_bps()) +
                        " bps but its slot carries at most " + format_real(capacity_bps) + " bps");
    }
    if (payload > max_payload_bits) {
      throw ConfigError("node " + n.name + ": " + std::to_string(payload) +
                        " payload bits per frame exceed the " + std::to_string(max_payload_bits) +
                        "-bit limit");
    }
    if (frame_bits > r.schedule.slot_capacity_bits()) {
      throw ConfigError("node " + n.name + ": frame airtime does not fit the slot and guard times");
    }
    on_air_bps += n.payload_rate_bps() + n.header_bits() / period;
  }
  r.utilization = on_air_bps / link_rate_bps;
  if (r.utilization > utilization_bound) {
    throw ConfigError("link utilization " + format_real(r.utilization) + " exceeds the bound " +
                      format_real(utilization_bound));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Config.

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kSlotStart: return "slot_start";
    case EventKind::kFrameTx: return "frame_tx";
    case EventKind::kFrameRx: return "frame_rx";
    case EventKind::kFrameCrcFail: return "frame_crc_fail";
    case EventKind::kWindowReady: return "window_ready";
    case EventKind::kInferenceStart: return "inference_start";
    case EventKind::kInferenceDone: return "inference_done";
    case EventKind::kAlert: return "alert";
  }
  return "?";
}

void SimConfig::validate() const {
  build_schedule(nodes, slot_duration_s, link_rate_bps, guard_time_s, utilization_bound,
                 max_payload_bits);
  ber_majority(channel.p_pulse, channel.pulses_per_bit);
  if (!(drift_ppm >= 0.0)) throw ConfigError("clock drift must be >= 0 ppm");
  if (!(resync_interval_s > 0.0)) throw ConfigError("resync interval must be positive");
  if (drift_ppm * 1e-6 * resync_interval_s > guard_time_s) {
    throw ConfigError("clock drift of " + format_real(drift_ppm) + " ppm over a " +
                      format_real(resync_interval_s) + " s resync interval exceeds the " +
                      format_real(guard_time_s) + " s guard time");
  }
  if (!(inference_time_s > 0.0)) throw ConfigError("inference time must be positive");
  if (!(window_s > 0.0)) throw ConfigError("window length must be positive");
  if (!(sim_duration_s > 0.0)) throw ConfigError("simulated duration must be positive");
  if (!(watchdog_s > 0.0)) throw ConfigError("watchdog must be positive");
  frontend::FrontEndConfig::preset(eeg_preset);
}

json to_json(const SimConfig& c) {
  json nodes = json::array();
  for (const NodeConfig& n : c.nodes) {
    nodes.push_back({{"node_id", n.node_id},
                     {"name", n.name},
                     {"modality", std::string(signal::to_string(n.modality))},
                     {"channels", n.channels},
                     {"sample_rate_hz", n.sample_rate_hz},
                     {"sample_bits", n.sample_bits},
                     {"id_bits", n.id_bits},
                     {"seq_bits", n.seq_bits},
                     {"crc_bits", n.crc_bits}});
  }
  return {{"nodes", nodes},
          {"slot_duration_s", c.slot_duration_s},
          {"link_rate_bps", c.link_rate_bps},
          {"guard_time_s", c.guard_time_s},
          {"utilization_bound", c.utilization_bound},
          {"max_payload_bits", c.max_payload_bits},
          {"p_pulse", c.channel.p_pulse},
          {"pulses_per_bit", c.channel.pulses_per_bit},
          {"drift_ppm", c.drift_ppm},
          {"resync_interval_s", c.resync_interval_s},
          {"inference_time_s", c.inference_time_s},
          {"window_s", c.window_s},
          {"sim_duration_s", c.sim_duration_s},
          {"decision_threshold", c.decision_threshold},
          {"loss_policy", c.loss_policy == LossPolicy::kZeroFill ? "zero_fill" : "hold_last"},
          {"seed", c.seed},
          {"record_frame_events", c.record_frame_events},
          {"watchdog_s", c.watchdog_s},
          {"eeg_preset", c.eeg_preset}};
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  if (j.contains("nodes")) {
    c.nodes.clear();
    for (const json& n : j["nodes"]) {
      NodeConfig nc;
      nc.node_id = n.at("node_id").get<int>();
      nc.name = n.value("name", "node" + std::to_string(nc.node_id));
      nc.modality = signal::parse_modality(n.at("modality").get<std::string>());
      nc.channels = n.at("channels").get<std::vector<std::string>>();
      nc.sample_rate_hz = n.at("sample_rate_hz").get<int>();
      nc.sample_bits = n.value("sample_bits", nc.sample_bits);
      nc.id_bits = n.value("id_bits", nc.id_bits);
      nc.seq_bits = n.value("seq_bits", nc.seq_bits);
      nc.crc_bits = n.value("crc_bits", nc.crc_bits);
      if (nc.modality == Modality::kEEG) throw ConfigError("EEG is sampled at the central node");
      if (nc.crc_bits != 16) throw ConfigError("only the 16-bit CRC is supported");
      c.nodes.push_back(std::move(nc));
    }
  }
  c.slot_duration_s = j.value("slot_duration_s", c.slot_duration_s);
  c.link_rate_bps = j.value("link_rate_bps", c.link_rate_bps);
  c.guard_time_s = j.value("guard_time_s", c.guard_time_s);
  c.utilization_bound = j.value("utilization_bound", c.utilization_bound);
  c.max_payload_bits = j.value("max_payload_bits", c.max_payload_bits);
  c.channel.p_pulse = j.value("p_pulse", c.channel.p_pulse);
  c.channel.pulses_per_bit = j.value("pulses_per_bit", c.channel.pulses_per_bit);
  if (j.contains("target_ber")) {
    c.channel.p_pulse = solve_pulse_error_for_ber(j["target_ber"].get<double>(), c.channel.pulses_per_bit);
  }
  c.drift_ppm = j.value("drift_ppm", c.drift_ppm);
  c.resync_interval_s = j.value("resync_interval_s", c.resync_interval_s);
  c.inference_time_s = j.value("inference_time_s", c.inference_time_s);
  c.window_s = j.value("window_s", c.window_s);
  c.sim_duration_s = j.value("sim_duration_s", c.sim_duration_s);
  c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
  const std::string policy = j.value("loss_policy", std::string("zero_fill"));
  if (policy == "zero_fill") {
    c.loss_policy = LossPolicy::kZeroFill;
  } else if (policy == "hold_last") {
    c.loss_policy = LossPolicy::kHoldLast;
  } else {
    throw ConfigError("loss_policy must be zero_fill or hold_last");
  }
  c.seed = j.value("seed", c.seed);
  c.record_frame_events = j.value("record_frame_events", c.record_frame_events);
  c.watchdog_s = j.value("watchdog_s", c.watchdog_s);
  c.eeg_preset = j.value("eeg_preset", c.eeg_preset);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Simulation.

namespace {

constexpr double kAccMvPerG = 600.0 / 4.0;

struct Pending {
  std::int64_t t;
  int node;
  EventKind kind;
  std::uint64_t order;
  std::uint64_t seq;
  std::uint64_t ref;  // frame slot or window index

  bool operator>(const Pending& o) const {
    if (t != o.t) return t > o.t;
    if (node != o.node) return node > o.node;
    if (kind != o.kind) return kind > o.kind;
    return order > o.order;
  }
};

struct Frame {
  std::int64_t first_sample = 0;
  std::int64_t end_sample = 0;
  std::vector<std::uint8_t> bits;
  std::int64_t end_ns = 0;
};

void push_bits(std::vector<std::uint8_t>& bits, std::uint64_t v, int width) {
  for (int i = width - 1; i >= 0; --i) bits.push_back(static_cast<std::uint8_t>((v >> i) & 1));
}

std::uint64_t read_bits(std::span<const std::uint8_t> bits, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 1) | bits[at + i];
  return v;
}

struct NodeState {
  const NodeConfig* cfg = nullptr;
  std::size_t slot = 0;
  double drift = 0.0;          // fractional clock error
  std::int64_t covered = 0;    // samples the central has accounted for
  std::vector<double> source;  // per channel, looped
  std::vector<std::vector<double>> channels;
  double emg_gain = 50.0;
};

class Simulator {
 public:
  Simulator(const signal::Recording& src, const SimConfig& cfg, const Predictor& predictor)
      : src_(src), cfg_(cfg), predictor_(predictor) {}

  SimResult run();

 private:
  void schedule(std::int64_t t, int node, EventKind kind, std::uint64_t seq, std::uint64_t ref) {
    queue_.push({t, node, kind, order_++, seq, ref});
  }
  void record(const SimEvent& e, bool frame_level) {
    if (!frame_level || cfg_.record_frame_events) result_.log.events.push_back(e);
  }
  std::int16_t source_code(const NodeState& n, std::size_t ch, std::int64_t j) const;
  void on_slot(const Pending& p);
  void on_tx(const Pending& p);
  void on_rx(const Pending& p);
  void check_windows(std::int64_t now);
  signal::Window assemble(std::uint64_t w, bool& degraded) const;

  const signal::Recording& src_;
  const SimConfig& cfg_;
  const Predictor& predictor_;
  SimResult result_;
  std::vector<NodeState> nodes_;
  std::map<int, std::size_t> index_of_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t order_ = 0;
  std::map<std::uint64_t, Frame> frames_;
  std::uint64_t next_frame_ = 0;
  std::int64_t slot_ns_ = 0, period_ns_ = 0, guard_ns_ = 0, resync_ns_ = 0, horizon_ns_ = 0;
  std::int64_t window_ns_ = 0, inference_ns_ = 0;
  std::int64_t last_tx_end_ = -1;
  int last_tx_node_ = -1;
  std::uint64_t next_window_ = 0;
  std::uint64_t windows_total_ = 0;
  std::deque<std::uint64_t> backlog_;
  std::map<std::uint64_t, std::pair<signal::Window, bool>> assembled_;
  bool busy_ = false;
  std::int64_t last_progress_ = 0;
  Rng channel_rng_{0};
};

std::int16_t Simulator::source_code(const NodeState& n, std::size_t ch, std::int64_t j) const {
  const std::vector<double>& s = n.channels[ch];
  const double v = s[static_cast<std::size_t>(j % static_cast<std::int64_t>(s.size()))];
  const double mv = n.cfg->modality == Modality::kEMG ? v * n.emg_gain / 1000.0 : v * kAccMvPerG;
  return static_cast<std::int16_t>(frontend::adc_code(mv, n.cfg->sample_bits));
}

void Simulator::on_slot(const Pending& p) {
  NodeState& n = nodes_[p.ref];
  record({p.t, EventKind::kSlotStart, p.node, p.seq, p.t + slot_ns_, 0.0, false}, true);
  const std::int64_t since_sync = p.t % resync_ns_;
  const auto offset = static_cast<std::int64_t>(std::llround(n.drift * static_cast<double>(since_sync)));
  result_.log.max_clock_offset_s =
      std::max(result_.log.max_clock_offset_s, std::abs(static_cast<double>(offset)) / 1e9);
  schedule(p.t + guard_ns_ + offset, p.node, EventKind::kFrameTx, p.seq, p.ref);
  const std::int64_t next = p.t + period_ns_;
  if (next < horizon_ns_) schedule(next, p.node, EventKind::kSlotStart, p.seq + 1, p.ref);
}

void Simulator::on_tx(const Pending& p) {
  NodeState& n = nodes_[p.ref];
  const NodeConfig& nc = *n.cfg;
  const std::int64_t slot_start = static_cast<std::int64_t>(p.seq) * period_ns_ +
                                  static_cast<std::int64_t>(n.slot) * slot_ns_;
  Frame f;
  f.first_sample = samples_before(slot_start - period_ns_, nc.sample_rate_hz);
  f.end_sample = samples_before(slot_start, nc.sample_rate_hz);
  std::vector<std::uint8_t> bits;
  push_bits(bits, static_cast<std::uint64_t>(nc.node_id), nc.id_bits);
  push_bits(bits, p.seq & ((1ULL << nc.seq_bits) - 1), nc.seq_bits);
  NodeStream& sent = result_.sent[p.ref];
  for (std::int64_t j = f.first_sample; j < f.end_sample; ++j) {
    for (std::size_t c = 0; c < nc.channels.size(); ++c) {
      const std::int16_t code = source_code(n, c, j);
      sent.codes.push_back(code);
      push_bits(bits, static_cast<std::uint16_t>(code), nc.sample_bits);
    }
  }
  push_bits(bits, crc16_ccitt(bits), 16);
  const auto airtime = static_cast<std::int64_t>(
      std::llround(static_cast<double>(bits.size()) * 1e9 / cfg_.link_rate_bps));
  f.end_ns = p.t + airtime;
  if (last_tx_node_ >= 0 && last_tx_node_ != p.node && p.t < last_tx_end_) ++result_.log.collisions;
  if (f.end_ns > last_tx_end_) {
    last_tx_end_ = f.end_ns;
    last_tx_node_ = p.node;
  }
  ++result_.log.frames_tx;
  result_.log.bits_tx += bits.size();
  record({p.t, EventKind::kFrameTx, p.node, p.seq, f.end_ns, static_cast<double>(bits.size()), false},
         true);
  Transmission tx = transmit_frame(bits, cfg_.channel, channel_rng_);
  result_.log.bit_errors += tx.error_positions.size();
  f.bits = std::move(tx.bits);
  const std::uint64_t id = next_frame_++;
  frames_.emplace(id, std::move(f));
  ++result_.log.frames_in_flight;
  schedule(frames_.at(id).end_ns, p.node, EventKind::kFrameRx, p.seq, id);
}

void Simulator::on_rx(const Pending& p) {
  Frame f = std::move(frames_.at(p.ref));
  frames_.erase(p.ref);
  --result_.log.frames_in_flight;
  // The central node knows the slot timing, hence which node and superframe
  // it is listening to; the header must agree.
  const std::size_t ni = index_of_.at(p.node);
  NodeState& n = nodes_[ni];
  const NodeConfig& nc = *n.cfg;
  const std::size_t payload_bits =
      static_cast<std::size_t>(f.end_sample - f.first_sample) * nc.channels.size() * nc.sample_bits;
  bool ok = f.bits.size() == nc.id_bits + nc.seq_bits + payload_bits + 16;
  if (ok) {
    const std::size_t body = f.bits.size() - 16;
    ok = crc16_ccitt(std::span(f.bits).first(body)) == read_bits(f.bits, body, 16) &&
         read_bits(f.bits, 0, nc.id_bits) == static_cast<std::uint64_t>(nc.node_id) &&
         read_bits(f.bits, nc.id_bits, nc.seq_bits) == (p.seq & ((1ULL << nc.seq_bits) - 1));
  }
  NodeStream& rs = result_.reconstructed[ni];
  const std::size_t ch = nc.channels.size();
  rs.codes.resize(static_cast<std::size_t>(f.end_sample) * ch, 0);
  rs.received.resize(static_cast<std::size_t>(f.end_sample), 0);
  if (ok) {
    std::size_t at = static_cast<std::size_t>(nc.id_bits + nc.seq_bits);
    for (std::int64_t j = f.first_sample; j < f.end_sample; ++j) {
      for (std::size_t c = 0; c < ch; ++c) {
        rs.codes[static_cast<std::size_t>(j) * ch + c] =
            static_cast<std::int16_t>(read_bits(f.bits, at, nc.sample_bits));
        at += static_cast<std::size_t>(nc.sample_bits);
      }
      rs.received[static_cast<std::size_t>(j)] = 1;
    }
    ++result_.log.frames_rx;
  } else {
    ++result_.log.frames_crc_fail;
  }
  record({p.t, ok ? EventKind::kFrameRx : EventKind::kFrameCrcFail, p.node, p.seq, 0,
          static_cast<double>(f.bits.size()), false},
         true);
  n.covered = f.end_sample;
  check_windows(p.t);
}

void Simulator::check_windows(std::int64_t now) {
  while (next_window_ < windows_total_) {
    const std::int64_t end = static_cast<std::int64_t>(next_window_ + 1) * window_ns_;
    for (const NodeState& n : nodes_) {
      if (n.covered < samples_before(end, n.cfg->sample_rate_hz)) return;
    }
    schedule(now, kCentralNode, EventKind::kWindowReady, next_window_, next_window_);
    ++next_window_;
  }
}

signal::Window Simulator::assemble(std::uint64_t w, bool& degraded) const {
  degraded = false;
  signal::Window win;
  win.subject_id = src_.subject_id;
  win.start_s = static_cast<double>(w) * cfg_.window_s;
  win.length_s = cfg_.window_s;
  const std::int64_t start_ns = static_cast<std::int64_t>(w) * window_ns_;

  // EEG never crosses the radio.
  const auto eeg = src_.streams_of(Modality::kEEG);
  if (!eeg.empty()) {
    signal::ModalityBlock b;
    b.modality = Modality::kEEG;
    b.sample_rate_hz = eeg[0]->sample_rate_hz;
    b.samples = static_cast<std::size_t>(std::llround(b.sample_rate_hz * cfg_.window_s));
    const auto first = static_cast<std::int64_t>(std::llround(b.sample_rate_hz * win.start_s));
    for (const signal::Stream* s : eeg) {
      b.channels.push_back(s->channel);
      const auto n = static_cast<std::int64_t>(s->samples.size());
      for (std::size_t i = 0; i < b.samples; ++i) {
        b.data.push_back(s->samples[static_cast<std::size_t>((first + static_cast<std::int64_t>(i)) % n)]);
      }
    }
    win.blocks.push_back(std::move(b));
  }
  for (Modality m : {Modality::kEMG, Modality::kACC}) {
    signal::ModalityBlock b;
    b.modality = m;
    std::vector<std::vector<double>> rows;
    for (std::size_t ni = 0; ni < nodes_.size(); ++ni) {
      const NodeConfig& nc = *nodes_[ni].cfg;
      if (nc.modality != m) continue;
      b.sample_rate_hz = nc.sample_rate_hz;
      b.samples = static_cast<std::size_t>(std::llround(nc.sample_rate_hz * cfg_.window_s));
      const std::int64_t first = samples_before(start_ns, nc.sample_rate_hz);
      const NodeStream& rs = result_.reconstructed[ni];
      const std::size_t ch = nc.channels.size();
      for (std::size_t c = 0; c < ch; ++c) {
        b.channels.push_back(nc.channels[c]);
        std::vector<double> row(b.samples, 0.0);
        double held = 0.0;
        bool have = false;
        for (std::size_t i = 0; i < b.samples; ++i) {
          const auto j = static_cast<std::size_t>(first) + i;
          const bool got = j < rs.received.size() && rs.received[j];
          if (got) {
            const int code = rs.codes[j * ch + c];
            held = m == Modality::kEMG
                       ? frontend::adc_value(code, nc.sample_bits) * 1000.0 / nodes_[ni].emg_gain
                       : frontend::adc_value(code, nc.sample_bits) / kAccMvPerG;
            have = true;
            row[i] = held;
          } else {
            degraded = true;
            row[i] = cfg_.loss_policy == LossPolicy::kHoldLast && have ? held : 0.0;
          }
        }
        rows.push_back(std::move(row));
      }
    }
    if (rows.empty()) continue;
    for (const auto& r : rows) b.data.insert(b.data.end(), r.begin(), r.end());
    win.blocks.push_back(std::move(b));
  }
  win = signal::assign_label(std::move(win), src_.fog_intervals);
  return win;
}

SimResult Simulator::run() {
  cfg_.validate();
  result_.schedule = build_schedule(cfg_.nodes, cfg_.slot_duration_s, cfg_.link_rate_bps,
                                    cfg_.guard_time_s, cfg_.utilization_bound,
                                    cfg_.max_payload_bits);
  slot_ns_ = to_ns(cfg_.slot_duration_s);
  period_ns_ = slot_ns_ * static_cast<std::int64_t>(cfg_.nodes.size());
  guard_ns_ = to_ns(cfg_.guard_time_s);
  resync_ns_ = std::max<std::int64_t>(1, to_ns(cfg_.resync_interval_s));
  horizon_ns_ = to_ns(cfg_.sim_duration_s);
  window_ns_ = to_ns(cfg_.window_s);
  inference_ns_ = to_ns(cfg_.inference_time_s);
  windows_total_ = static_cast<std::uint64_t>(horizon_ns_ / window_ns_);
  channel_rng_ = Rng(cfg_.seed).fork(1);

  const frontend::FrontEndConfig emg = frontend::FrontEndConfig::emg();
  for (std::size_t i = 0; i < cfg_.nodes.size(); ++i) {
    const NodeConfig& nc = cfg_.nodes[i];
    NodeState n;
    n.cfg = &nc;
    n.slot = i;
    n.drift = (i % 2 == 0 ? 1.0 : -1.0) * cfg_.drift_ppm * 1e-6;
    n.emg_gain = emg.gain;
    for (const std::string& ch : nc.channels) {
      const signal::Stream* s = src_.find(nc.modality, ch);
      if (s == nullptr) {
        throw DataError("source recording lacks " + std::string(signal::to_string(nc.modality)) +
                        "/" + ch + " for node " + nc.name);
      }
      if (s->sample_rate_hz != static_cast<double>(nc.sample_rate_hz)) {
        throw ConfigError("node " + nc.name + " samples at " + std::to_string(nc.sample_rate_hz) +
                          " Hz but the source stream is at " + format_real(s->sample_rate_hz) + " Hz");
      }
      if (s->samples.empty()) throw DataError("empty source stream " + ch);
      n.channels.push_back(s->samples);
    }
    index_of_[nc.node_id] = i;
    nodes_.push_back(std::move(n));
    result_.sent.push_back({nc.node_id, nc.channels.size(), {}, {}});
    result_.reconstructed.push_back({nc.node_id, nc.channels.size(), {}, {}});
    schedule(static_cast<std::int64_t>(i) * slot_ns_, nc.node_id, EventKind::kSlotStart, 0, i);
  }

  result_.log.sim_duration_s = cfg_.sim_duration_s;
  result_.log.inference_time_s = cfg_.inference_time_s;
  result_.log.window_s = cfg_.window_s;
  result_.log.superframe_s = result_.schedule.schedule.superframe_period_s();
  std::uint64_t high_water = 0;

  while (!queue_.empty()) {
    const Pending p = queue_.top();
    queue_.pop();
    if ((busy_ || !backlog_.empty()) && p.t - last_progress_ > to_ns(cfg_.watchdog_s)) {
      throw RuntimeError("watchdog: no inference completed for " + format_real(cfg_.watchdog_s) +
                         " s of simulated time at t = " + format_real(static_cast<double>(p.t) / 1e9) + " s");
    }
    switch (p.kind) {
      case EventKind::kSlotStart:
        if (p.ref == 0) ++result_.log.superframes;
        on_slot(p);
        break;
      case EventKind::kFrameTx:
        on_tx(p);
        break;
      case EventKind::kFrameRx:
        on_rx(p);
        break;
      case EventKind::kFrameCrcFail:
        break;
      case EventKind::kWindowReady: {
        bool degraded = false;
        signal::Window w = assemble(p.ref, degraded);
        assembled_[p.ref] = {std::move(w), degraded};
        if (!busy_ && backlog_.empty()) last_progress_ = p.t;
        backlog_.push_back(p.ref);
        const std::uint64_t backlog = backlog_.size() + (busy_ ? 1 : 0);
        high_water = std::max(high_water, backlog);
        const std::int64_t end = static_cast<std::int64_t>(p.ref + 1) * window_ns_;
        record({p.t, EventKind::kWindowReady, kCentralNode, p.ref, end, static_cast<double>(backlog),
                degraded},
               false);
        if (!busy_) schedule(p.t, kCentralNode, EventKind::kInferenceStart, p.ref, 0);
        break;
      }
      case EventKind::kInferenceStart: {
        if (busy_ || backlog_.empty()) break;
        const std::uint64_t w = backlog_.front();
        backlog_.pop_front();
        busy_ = true;
        const auto& [win, degraded] = assembled_.at(w);
        const double prob = predictor_(win);
        const std::int64_t end = static_cast<std::int64_t>(w + 1) * window_ns_;
        record({p.t, EventKind::kInferenceStart, kCentralNode, w, end, 0.0, degraded}, false);
        queue_.push({p.t + inference_ns_, kCentralNode, EventKind::kInferenceDone, order_++, w,
                     static_cast<std::uint64_t>(std::bit_cast<std::uint64_t>(prob))});
        break;
      }
      case EventKind::kInferenceDone: {
        const double prob = std::bit_cast<double>(p.ref);
        const std::uint64_t w = p.seq;
        const bool degraded = assembled_.at(w).second;
        assembled_.erase(w);
        const std::int64_t end = static_cast<std::int64_t>(w + 1) * window_ns_;
        record({p.t, EventKind::kInferenceDone, kCentralNode, w, end, prob, degraded}, false);
        if (prob >= cfg_.decision_threshold) {
          record({p.t, EventKind::kAlert, kCentralNode, w, end, prob, degraded}, false);
        }
        busy_ = false;
        last_progress_ = p.t;
        if (!backlog_.empty()) schedule(p.t, kCentralNode, EventKind::kInferenceStart, backlog_.front(), 0);
        break;
      }
      case EventKind::kAlert:
        break;
    }
  }

  if (cfg_.inference_time_s >= cfg_.window_s) {
    result_.diagnostics.push_back("inference time " + format_real(cfg_.inference_time_s) +
                                  " s is not below the " + format_real(cfg_.window_s) +
                                  " s window: the central node cannot keep up");
  }
  if (high_water > 1) {
    result_.saturated = true;
    result_.diagnostics.push_back("saturation: inference backlog reached " +
                                  std::to_string(high_water) + " windows");
  }
  if (result_.log.collisions > 0) {
    result_.diagnostics.push_back(std::to_string(result_.log.collisions) + " slot collisions");
  }
  return std::move(result_);
}

}  // namespace

SimResult run_simulation(const signal::Recording& source, const SimConfig& cfg,
                         const Predictor& predictor) {
  if (!predictor) throw ConfigError("simulation needs a predictor");
  Simulator sim(source, cfg, predictor);
  return sim.run();
}

// ---------------------------------------------------------------------------
// Reports.

std::uint64_t count_collisions(const EventLog& log) {
  std::vector<const SimEvent*> tx;
  for (const SimEvent& e : log.events) {
    if (e.kind == EventKind::kFrameTx) tx.push_back(&e);
  }
  std::stable_sort(tx.begin(), tx.end(),
                   [](const SimEvent* a, const SimEvent* b) { return a->t_ns < b->t_ns; });
  // Every frame is compared against all earlier frames still on air.
  std::uint64_t collisions = 0;
  std::vector<const SimEvent*> active;
  for (const SimEvent* e : tx) {
    std::erase_if(active, [&](const SimEvent* a) { return a->aux_ns <= e->t_ns; });
    for (const SimEvent* a : active) collisions += a->node != e->node;
    active.push_back(e);
  }
  return collisions;
}

LatencyReport latency_report(const EventLog& log) {
  LatencyReport r;
  double alert_sum = 0.0, decision_sum = 0.0;
  for (const SimEvent& e : log.events) {
    const double latency = static_cast<double>(e.t_ns - e.aux_ns) / 1e9;
    switch (e.kind) {
      case EventKind::kWindowReady:
        ++r.windows;
        r.windows_degraded += e.degraded;
        r.backlog_high_water = std::max(r.backlog_high_water, static_cast<std::uint64_t>(e.value));
        break;
      case EventKind::kInferenceDone:
        ++r.inferences;
        decision_sum += latency;
        r.max_decision_latency_s = std::max(r.max_decision_latency_s, latency);
        break;
      case EventKind::kAlert:
        ++r.alerts;
        alert_sum += latency;
        r.max_alert_latency_s = std::max(r.max_alert_latency_s, latency);
        break;
      default:
        break;
    }
  }
  if (r.alerts > 0) r.mean_alert_latency_s = alert_sum / static_cast<double>(r.alerts);
  if (r.inferences > 0) r.mean_decision_latency_s = decision_sum / static_cast<double>(r.inferences);
  r.frames_tx = log.frames_tx;
  r.frames_rx = log.frames_rx;
  r.frames_lost = log.frames_crc_fail;
  r.bits_tx = log.bits_tx;
  r.bit_errors = log.bit_errors;
  r.collisions = log.collisions;
  r.energy_tx_j = static_cast<double>(log.bits_tx) * kTxEnergyPerBitJ;
  r.energy_rx_j = static_cast<double>(log.bits_tx) * kRxEnergyPerBitJ;
  r.saturated = r.backlog_high_water > 1;
  return r;
}

std::string events_jsonl(const EventLog& log) {
  std::string out;
  for (const SimEvent& e : log.events) {
    json j = {{"t_s", static_cast<double>(e.t_ns) / 1e9},
              {"t_ns", e.t_ns},
              {"kind", std::string(to_string(e.kind))},
              {"node", e.node},
              {"seq", e.seq}};
    switch (e.kind) {
      case EventKind::kFrameTx:
        j["end_ns"] = e.aux_ns;
        j["bits"] = static_cast<std::uint64_t>(e.value);
        break;
      case EventKind::kFrameRx:
      case EventKind::kFrameCrcFail:
        j["bits"] = static_cast<std::uint64_t>(e.value);
        break;
      case EventKind::kWindowReady:
        j["window_end_ns"] = e.aux_ns;
        j["backlog"] = static_cast<std::uint64_t>(e.value);
        j["degraded"] = e.degraded;
        break;
      case EventKind::kInferenceStart:
        j["window_end_ns"] = e.aux_ns;
        break;
      case EventKind::kInferenceDone:
      case EventKind::kAlert:
        j["window_end_ns"] = e.aux_ns;
        j["probability"] = e.value;
        j["latency_s"] = static_cast<double>(e.t_ns - e.aux_ns) / 1e9;
        break;
      case EventKind::kSlotStart:
        break;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

json to_json(const LatencyReport& r) {
  return {{"windows", r.windows},
          {"windows_degraded", r.windows_degraded},
          {"inferences", r.inferences},
          {"alerts", r.alerts},
          {"mean_alert_latency_s", r.mean_alert_latency_s},
          {"max_alert_latency_s", r.max_alert_latency_s},
          {"mean_decision_latency_s", r.mean_decision_latency_s},
          {"max_decision_latency_s", r.max_decision_latency_s},
          {"backlog_high_water", r.backlog_high_water},
          {"frames_tx", r.frames_tx},
          {"frames_rx", r.frames_rx},
          {"frames_lost", r.frames_lost},
          {"bits_tx", r.bits_tx},
          {"bit_errors", r.bit_errors},
          {"collisions", r.collisions},
          {"energy_tx_j", r.energy_tx_j},
          {"energy_rx_j", r.energy_rx_j},
          {"saturated", r.saturated}};
}

std::string summary_csv(const LatencyReport& r) {
  std::ostringstream out;
  out << "metric,value\n";
  const json j = to_json(r);
  for (const auto& [k, v] : j.items()) {
    out << k << ',';
    if (v.is_boolean()) {
      out << (v.get<bool>() ? "true" : "false");
    } else if (v.is_number_float()) {
      out << format_real(v.get<double>());
    } else {
      out << v.dump();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fogwear::netsim
