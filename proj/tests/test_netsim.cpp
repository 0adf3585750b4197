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

#include <cmath>
#include <set>

#include "doctest.h"
#include "fogwear/cohort.hpp"
#include "fogwear/error.hpp"
#include "fogwear/netsim.hpp"
#include "oracles.hpp"

using namespace fogwear;
using namespace fogwear::netsim;

namespace {

signal::Recording source() {
  cohort::CohortConfig c;
  c.n_subjects = 2;
  c.windows_per_subject = 12;
  return cohort::generate_synthetic_cohort(c)[0];
}

SimConfig short_run(double seconds) {
  SimConfig c;
  c.sim_duration_s = seconds;
  return c;
}

}  // namespace

TEST_CASE("majority-vote bit error rate") {
  CHECK(ber_majority(0.0) == 0.0);
  CHECK(ber_majority(0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ber_majority(1.0) == 1.0);
  CHECK(ber_majority(0.1) == doctest::Approx(0.00856).epsilon(1e-12));
  for (double p : {0.01, 0.2, 0.37}) {
    CHECK(ber_majority(p, 5) == doctest::Approx(oracle::majority_error_enumerated(p, 5)).epsilon(1e-13));
    CHECK(ber_majority(p, 3) == doctest::Approx(oracle::majority_error_enumerated(p, 3)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(ber_majority(0.1, 4), ConfigError);
  CHECK_THROWS_AS(ber_majority(-0.1), ConfigError);
  for (double target : {1e-9, 1e-6, 1e-3, 0.1}) {
    const double p = solve_pulse_error_for_ber(target);
    CHECK(std::abs(ber_majority(p) - target) <= 1e-12 * std::max(1.0, target));
  }
  CHECK(solve_pulse_error_for_ber(0.0) == 0.0);
}

TEST_CASE("CRC-16/CCITT") {
  const std::string s = "123456789";
  const std::vector<std::uint8_t> bytes(s.begin(), s.end());
  CHECK(crc16_ccitt_bytes(bytes) == 0x29B1);
  CHECK(oracle::crc16_ccitt_false(bytes) == 0x29B1);
  std::vector<std::uint8_t> bits;
  for (std::uint8_t b : bytes) {
    for (int i = 7; i >= 0; --i) bits.push_back((b >> i) & 1u);
  }
  CHECK(crc16_ccitt(bits) == 0x29B1);
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::uint8_t> d(1 + rng.index(40));
    for (auto& b : d) b = static_cast<std::uint8_t>(rng.index(256));
    CHECK(crc16_ccitt_bytes(d) == oracle::crc16_ccitt_false(d));
  }
}

TEST_CASE("channel flips bits at the decoded rate") {
  std::vector<std::uint8_t> frame(1000, 0);
  Rng rng(4);
  Transmission t = transmit_frame(frame, ChannelModel{0.0, 5}, rng);
  CHECK(t.bits == frame);
  CHECK(t.error_positions.empty());
  const ChannelModel ch{0.1, 5};
  std::size_t errors = 0;
  const int reps = 2000;
  for (int i = 0; i < reps; ++i) {
    t = transmit_frame(frame, ch, rng);
    errors += t.error_positions.size();
    for (std::size_t p : t.error_positions) CHECK(t.bits[p] == 1);
  }
  const double n = 1000.0 * reps;
  const double ber = ch.bit_error_rate();
  CHECK(std::abs(static_cast<double>(errors) / n - ber) <= 4 * std::sqrt(ber * (1 - ber) / n));
}

TEST_CASE("schedule") {
  const auto nodes = default_nodes();
  const ScheduleReport r = build_schedule(nodes);
  CHECK(r.schedule.superframe_period_s() == doctest::Approx(4e-3));
  CHECK(r.schedule.superframe == std::vector<int>{nodes[0].node_id, nodes[1].node_id, nodes[2].node_id,
                                                  nodes[3].node_id});
  for (std::size_t i = 0; i < nodes.size(); ++i) CHECK(r.capacity_bps[i] >= r.payload_rate_bps[i]);
  CHECK(r.utilization < 0.8);
  auto dup = nodes;
  dup[1].node_id = dup[0].node_id;
  CHECK_THROWS_AS(build_schedule(dup), ConfigError);
  auto fast = nodes;
  fast[0].sample_rate_hz = 100000;
  CHECK_THROWS_AS(build_schedule(fast), ConfigError);
  CHECK_THROWS_AS(build_schedule(nodes, 1e-3, 40e6, 50e-6, 1e-4), ConfigError);

  // Four nodes of four 12-bit channels at 1 kHz (one EMG plus three ACC axes).
  std::vector<NodeConfig> four;
  for (int i = 0; i < 4; ++i) {
    NodeConfig n;
    n.node_id = i;
    n.name = "n" + std::to_string(i);
    n.channels = {"e", "x", "y", "z"};
    n.sample_rate_hz = 1000;
    four.push_back(n);
  }
  const ScheduleReport m = build_schedule(four);
  CHECK(m.payload_rate_bps[0] == 48000.0);
  CHECK(m.utilization < 0.01);
}

TEST_CASE("sim config JSON") {
  SimConfig c;
  c.channel.p_pulse = 0.01;
  c.loss_policy = LossPolicy::kHoldLast;
  const SimConfig back = sim_config_from_json(to_json(c));
  CHECK(back.channel.p_pulse == 0.01);
  CHECK(back.loss_policy == LossPolicy::kHoldLast);
  CHECK(back.nodes.size() == 4);
  auto j = to_json(SimConfig{});
  j["target_ber"] = 1e-6;
  CHECK(std::abs(ber_majority(sim_config_from_json(j).channel.p_pulse) - 1e-6) < 1e-15);
  c = SimConfig{};
  c.drift_ppm = 1000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("clean simulation") {
  const auto rec = source();
  const SimResult r = run_simulation(rec, short_run(12.0), [](const signal::Window&) { return 0.7; });
  const LatencyReport lr = latency_report(r.log);
  CHECK(lr.collisions == 0);
  CHECK(count_collisions(r.log) == 0);
  CHECK(lr.frames_tx == lr.frames_rx + r.log.frames_in_flight);
  CHECK(lr.frames_lost == 0);
  CHECK(lr.windows >= 3);
  CHECK(lr.alerts == lr.inferences);
  CHECK(lr.backlog_high_water <= 1);
  CHECK(lr.max_decision_latency_s <= 2.3 + 0.01);
  CHECK_FALSE(lr.saturated);
  CHECK(lr.energy_tx_j == doctest::Approx(static_cast<double>(lr.bits_tx) * kTxEnergyPerBitJ));
  for (std::size_t i = 0; i < r.sent.size(); ++i) {
    const auto& s = r.sent[i];
    const auto& c = r.reconstructed[i];
    CHECK(s.node_id == c.node_id);
    REQUIRE(c.codes.size() >= s.codes.size());
    CHECK(std::equal(s.codes.begin(), s.codes.end(), c.codes.begin()));
  }
  // Purity and deterministic reruns.
  CHECK(latency_report(r.log) == lr);
  const SimResult again = run_simulation(rec, short_run(12.0), [](const signal::Window&) { return 0.7; });
  CHECK(events_jsonl(again.log) == events_jsonl(r.log));
  CHECK(summary_csv(lr).rfind("metric,value", 0) == 0);
}

TEST_CASE("lossy channel degrades windows but conserves frames") {
  SimConfig c = short_run(9.0);
  c.channel.p_pulse = 0.2;
  const SimResult r = run_simulation(source(), c, [](const signal::Window&) { return 0.1; });
  const LatencyReport lr = latency_report(r.log);
  CHECK(lr.frames_lost > 0);
  CHECK(lr.frames_rx + lr.frames_lost + r.log.frames_in_flight == lr.frames_tx);
  CHECK(lr.windows_degraded > 0);
  CHECK(lr.alerts == 0);
}

TEST_CASE("slow inference saturates") {
  SimConfig c = short_run(30.0);
  c.inference_time_s = 3.5;
  const SimResult r = run_simulation(source(), c, [](const signal::Window&) { return 0.1; });
  CHECK(r.saturated);
  CHECK(latency_report(r.log).backlog_high_water > 1);
  bool found = false;
  for (const auto& d : r.diagnostics) found = found || d.find("saturation") != std::string::npos;
  CHECK(found);
}

TEST_CASE("latency report of an empty log") {
  const LatencyReport lr = latency_report(EventLog{});
  CHECK(lr.windows == 0);
  CHECK(lr.mean_alert_latency_s == 0.0);
  CHECK(lr.energy_rx_j == 0.0);
}
