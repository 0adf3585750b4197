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

// Acceptance checks. Prints one line per criterion:
//
//   [PASS|FAIL|SKIP] <n> <title>: <measurements>
//
// Usage: fogwear_acceptance [--only 1,2,...] [--workdir DIR]
// Exit status is 0 when no criterion failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fogwear/commands.hpp"
#include "fogwear/compression.hpp"
#include "fogwear/config.hpp"
#include "fogwear/container.hpp"
#include "fogwear/evaluation.hpp"
#include "fogwear/frontend.hpp"
#include "fogwear/hash.hpp"
#include "fogwear/metrics.hpp"
#include "fogwear/netsim.hpp"
#include "fogwear/nn.hpp"
#include "fogwear/rng.hpp"
#include "oracles.hpp"

using namespace fogwear;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Shared between criteria 4, 5, 6 and 10.
struct DefaultCohortRun {
  config::ExperimentConfig cfg;
  std::vector<signal::Window> windows;
  nn::ModelSpec spec;
  eval::LooOptions opts;
  eval::LooResult loo;
  double seconds = 0.0;
};

std::optional<DefaultCohortRun> g_default;

const DefaultCohortRun& default_run() {
  if (g_default) return *g_default;
  DefaultCohortRun r;
  r.cfg.output_dir = "unused";
  const auto t0 = std::chrono::steady_clock::now();
  const auto cohort = commands::load_cohort(r.cfg);
  r.windows = commands::cohort_windows(r.cfg, cohort);
  r.spec = nn::make_model_spec(nn::geometry_of(r.windows.front()), r.cfg.architecture);
  r.opts.train = r.cfg.train;
  r.opts.eval = r.cfg.eval;
  r.opts.compression = r.cfg.compression;
  r.loo = eval::loo_evaluate(r.windows, r.spec, r.opts);
  r.seconds = seconds_since(t0);
  g_default = std::move(r);
  return *g_default;
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const oracle::TinyCase tc = oracle::tiny_case(1000 + seed, 4);
    const double pw = 1.0 + 0.5 * static_cast<double>(seed % 3);
    const nn::LossAndGradients lg = nn::backward(tc.spec, tc.params, tc.windows, pw);
    nn::Parameters p = tc.params;
    for (auto& [key, t] : p) {
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        const double keep = t.data[i];
        t.data[i] = keep + 1e-5;
        const double up = nn::batch_loss(tc.spec, p, tc.windows, pw);
        t.data[i] = keep - 1e-5;
        const double down = nn::batch_loss(tc.spec, p, tc.windows, pw);
        t.data[i] = keep;
        const double numeric = (up - down) / 2e-5;
        const double analytic = lg.gradients.at(key).data[i];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
        ++checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 60.0,
          std::to_string(checked) + " parameters, max rel err " + fmt("%.3g", worst) + ", " +
              fmt("%.1f", secs) + " s"};
}

Outcome forward_oracle() {
  const oracle::TinyCase tc = oracle::tiny_case(77, 100);
  double worst = 0.0;
  for (const auto& w : tc.windows) {
    worst = std::max(worst, std::abs(nn::forward(tc.spec, tc.params, w) - oracle::forward(tc.spec, tc.params, w)));
  }
  return {worst <= 1e-12, "100 windows, max abs diff " + fmt("%.3g", worst)};
}

Outcome adc_arithmetic() {
  const frontend::FrontEndConfig eeg = frontend::FrontEndConfig::eeg();
  const frontend::FrontEndConfig emg = frontend::FrontEndConfig::emg();
  const double lsb = eeg.lsb_mv();
  const double r200 = eeg.input_referred_resolution_uv();
  const double r50 = emg.input_referred_resolution_uv();
  const auto round4 = [](double v) { return std::round(v * 1e4) / 1e4; };
  // In range: every value whose nearest code is not clamped.
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    const double v = rng.uniform(-600.0, 600.0 - lsb / 2);
    worst = std::max(worst, std::abs(frontend::adc_value(frontend::adc_code(v)) - v));
  }
  const bool ok = lsb == 0.29296875 && eeg.gain == 200.0 && emg.gain == 50.0 &&
                  std::abs(round4(r200) - 0.7324) < 1e-12 && std::abs(round4(r50) - 2.9297) < 1e-12 &&
                  worst <= lsb / 2;
  return {ok, "LSB " + fmt("%.8f", lsb) + " mV, half-LSB " + fmt("%.6f", r200) + " uV @200, " +
                  fmt("%.6f", r50) + " uV @50, round-trip max " + fmt("%.6f", worst) + " mV"};
}

Outcome quantization_fidelity() {
  const DefaultCohortRun& r = default_run();
  const auto& f = r.loo.float_report.pooled;
  const auto& q = r.loo.compressed_report->pooled;
  const double d_f1 = std::abs(*f.f1 - *q.f1);
  const double d_auc = std::abs(*f.auc - *q.auc);
  const double agree = *r.loo.agreement_at_half;
  return {d_f1 < 0.01 && d_auc < 0.01 && agree >= 0.99 && r.seconds < 900.0,
          "F1 " + fmt("%.6f", *f.f1) + " vs " + fmt("%.6f", *q.f1) + ", AUC " + fmt("%.6f", *f.auc) + " vs " +
              fmt("%.6f", *q.auc) + ", agreement@0.5 " + fmt("%.4f", agree) + ", agreement@threshold " +
              fmt("%.4f", *r.loo.agreement_at_threshold) + ", " +
              fmt("%.0f", r.seconds) + " s"};
}

Outcome size_budget(const fs::path& dir) {
  const DefaultCohortRun& r = default_run();
  const eval::FoldOutput& fold = r.loo.folds.front();
  std::vector<signal::Window> training;
  for (const auto& w : r.windows) {
    if (w.subject_id != fold.subject_id) training.push_back(w);
  }
  compress::CompressionConfig cc;
  cc.sparsity = 0.5;
  cc.quantize = true;
  const compress::Compressed c = compress::compress_model(fold.spec, fold.params, training, cc, r.cfg.train);
  fs::create_directories(dir);
  const fs::path float_file = dir / "float.fwm";
  const fs::path comp_file = dir / "compressed.fwm";
  container::save_parameters(float_file, &fold.spec, fold.params, false);
  compress::save_quantized(comp_file, *c.quantized, cc.sparse_encoding);
  const auto fb = fs::file_size(float_file);
  const auto cb = fs::file_size(comp_file);
  const double ratio = static_cast<double>(cb) / static_cast<double>(fb);
  return {ratio <= 0.405, std::to_string(cb) + " / " + std::to_string(fb) + " bytes = " + fmt("%.4f", ratio)};
}

Outcome multimodal_dominance() {
  const DefaultCohortRun& r = default_run();
  eval::LooOptions opts = r.opts;
  opts.compression.reset();
  eval::AblationSpec abl;
  abl.subsets = {{signal::Modality::kEEG}, {signal::Modality::kEMG}, {signal::Modality::kACC}};
  const auto rows = eval::ablation(r.windows, r.spec, abl, opts, &r.loo);
  const double full = *r.loo.float_report.pooled.auc;
  double best = 0.0;
  std::string parts;
  for (const auto& row : rows) {
    const double a = *row.result.float_report.pooled.auc;
    best = std::max(best, a);
    parts += row.subset + " " + fmt("%.4f", a) + ", ";
  }
  return {full >= best && full - best >= 0.03,
          "profile " + std::string(cohort::to_string(r.cfg.dataset.synthetic.profile)) + ": " + parts +
              "all " + fmt("%.4f", full) + ", advantage " + fmt("%.4f", full - best)};
}

Outcome auc_oracle() {
  Rng rng(7);
  double worst = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 2 + rng.index(199);
    const bool ties = inst % 2 == 0;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = ties ? static_cast<double>(rng.index(10)) : rng.normal();
      y[i] = static_cast<int>(rng.index(2));
    }
    y[0] = 0;
    y[1] = 1;
    worst = std::max(worst, std::abs(metrics::roc_auc(s, y) - oracle::pair_count_auc(s, y)));
  }
  return {worst <= 1e-12, "1000 instances, max abs diff " + fmt("%.3g", worst)};
}

Outcome channel_model() {
  bool ok = true;
  std::string detail;
  for (double p : {0.0, 0.1, 0.5}) {
    // Exact binomial sum: C(5,k) p^k (1-p)^(5-k) for k = 3..5.
    const double q = 1.0 - p;
    const double exact = 10 * p * p * p * q * q + 5 * p * p * p * p * q + p * p * p * p * p;
    const double got = netsim::ber_majority(p, 5);
    ok = ok && std::abs(got - exact) <= 1e-15 &&
         std::abs(got - oracle::majority_error_enumerated(p, 5)) <= 1e-15;
    detail += "p=" + fmt("%.1f", p) + " " + fmt("%.6g", got) + ", ";
  }
  const double p = 0.1;
  const double ber = netsim::ber_majority(p, 5);
  Rng rng(99);
  const std::uint64_t trials = 10000000;
  std::uint64_t wrong = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    int bad = 0;
    for (int k = 0; k < 5; ++k) bad += rng.uniform() < p;
    wrong += bad >= 3;
  }
  const double freq = static_cast<double>(wrong) / static_cast<double>(trials);
  const double sigma = std::sqrt(ber * (1 - ber) / static_cast<double>(trials));
  const bool mc_ok = std::abs(freq - ber) <= 3 * sigma;
  const double solved = netsim::solve_pulse_error_for_ber(1e-6);
  const double back = netsim::ber_majority(solved, 5);
  const bool solve_ok = std::abs(back - 1e-6) <= 1e-12;
  detail += "MC " + fmt("%.6f", freq) + " (" + fmt("%.2f", std::abs(freq - ber) / sigma) + " sigma), solve(1e-6) p=" +
            fmt("%.6g", solved) + " -> " + fmt("%.6g", back);
  return {ok && mc_ok && solve_ok, detail};
}

signal::Recording netsim_source(const config::ExperimentConfig& cfg) {
  cohort::CohortConfig cc = cfg.dataset.synthetic;
  cc.n_subjects = 2;
  cc.windows_per_subject = 40;
  return cohort::generate_synthetic_cohort(cc).front();
}

Outcome tdma_invariants() {
  const config::ExperimentConfig cfg;
  const signal::Recording rec = netsim_source(cfg);
  const auto predictor = [](const signal::Window&) { return 0.2; };
  bool ok = true;
  std::string detail;
  for (double p : {0.0, 0.05}) {
    netsim::SimConfig sc = cfg.netsim;
    sc.channel.p_pulse = p;
    sc.sim_duration_s = 1e5 * 4e-3;
    const netsim::SimResult r = netsim::run_simulation(rec, sc, predictor);
    const auto& log = r.log;
    const std::uint64_t pairwise = netsim::count_collisions(log);
    const bool conserved = log.frames_tx == log.frames_rx + log.frames_crc_fail + log.frames_in_flight;
    ok = ok && log.superframes >= 100000 && log.collisions == 0 && pairwise == 0 && conserved &&
         r.schedule.schedule.superframe.size() == 4;
    detail += "p=" + fmt("%.2f", p) + ": " + std::to_string(log.superframes) + " superframes, " +
              std::to_string(log.frames_tx) + " tx = " + std::to_string(log.frames_rx) + " rx + " +
              std::to_string(log.frames_crc_fail) + " lost + " + std::to_string(log.frames_in_flight) +
              " in flight, collisions " + std::to_string(pairwise) + "; ";
    if (p == 0.0) {
      bool identical = log.frames_crc_fail == 0;
      std::size_t samples = 0;
      for (std::size_t i = 0; i < r.sent.size(); ++i) {
        const auto& s = r.sent[i];
        const auto& c = r.reconstructed[i];
        identical = identical && s.node_id == c.node_id && c.codes.size() >= s.codes.size() &&
                    std::equal(s.codes.begin(), s.codes.end(), c.codes.begin());
        const std::size_t instants = s.codes.size() / std::max<std::size_t>(s.channels, 1);
        for (std::size_t k = 0; k < instants; ++k) identical = identical && c.received.at(k) == 1;
        samples += s.codes.size();
      }
      ok = ok && identical;
      detail += std::string(identical ? "streams identical" : "streams differ") + " (" +
                std::to_string(samples) + " codes); ";
    }
  }
  return {ok, detail};
}

Outcome latency_budget() {
  const DefaultCohortRun& d = default_run();
  const eval::FoldOutput& fold = d.loo.folds.front();
  signal::Recording rec;
  for (const auto& r : commands::load_cohort(d.cfg)) {
    if (r.subject_id == d.cfg.netsim_subject) rec = r;
  }
  const auto predictor = [&](const signal::Window& w) { return nn::forward(fold.spec, fold.params, w); };
  const netsim::SimResult base = netsim::run_simulation(rec, d.cfg.netsim, predictor);
  const netsim::LatencyReport lr = netsim::latency_report(base.log);
  const double window = d.cfg.netsim.window_s;
  const bool base_ok = lr.backlog_high_water <= 1 && !base.saturated && lr.inferences == lr.windows &&
                       lr.max_alert_latency_s < window && lr.max_decision_latency_s < window;
  netsim::SimConfig slow = d.cfg.netsim;
  slow.inference_time_s = 3.5;
  const netsim::SimResult s = netsim::run_simulation(rec, slow, predictor);
  bool diag = false;
  for (const auto& m : s.diagnostics) diag = diag || m.find("saturation") != std::string::npos;
  return {base_ok && s.saturated && diag,
          "2.3 s: high-water " + std::to_string(lr.backlog_high_water) + ", " + std::to_string(lr.alerts) +
              " alerts, max alert latency " + fmt("%.3f", lr.max_alert_latency_s) + " s, max decision latency " +
              fmt("%.3f", lr.max_decision_latency_s) + " s; 3.5 s: high-water " +
              std::to_string(netsim::latency_report(s.log).backlog_high_water) +
              (diag ? ", saturation diagnostic raised" : ", no saturation diagnostic")};
}

// Hash of every file below `root`, keyed by relative path.
std::map<std::string, std::string> tree_hashes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = file_hash(e.path());
  }
  return out;
}

Outcome determinism(const fs::path& dir) {
  fs::remove_all(dir);
  nlohmann::json doc = {{"schema", std::string(config::kConfigSchema)}};
  config::apply_override(doc, "dataset.synthetic.n_subjects=4");
  config::apply_override(doc, "dataset.synthetic.windows_per_subject=30");
  config::apply_override(doc, "train.epochs=4");
  config::apply_override(doc, "compression.finetune_epochs=2");
  config::apply_override(doc, "eval.bootstrap_resamples=200");
  config::apply_override(doc, "netsim.sim_duration_s=60");
  doc["output_dir"] = dir.generic_string();
  const config::ExperimentConfig cfg = config::experiment_config_from_json(doc);
  std::ostringstream log;
  const auto pipeline = [&] {
    commands::cmd_datagen(cfg, log);
    commands::cmd_train(cfg, log);
    commands::cmd_compress(cfg, std::nullopt, log);
    commands::cmd_evaluate(cfg, log);
    commands::cmd_simulate(cfg, std::nullopt, log);
  };
  pipeline();
  const auto first = tree_hashes(dir);
  pipeline();
  const auto second = tree_hashes(dir);
  std::size_t differing = 0;
  std::string names;
  for (const auto& [k, h] : first) {
    const auto it = second.find(k);
    if (it == second.end() || it->second != h) {
      ++differing;
      names += " " + k;
    }
  }
  const bool same_set = first.size() == second.size();
  return {differing == 0 && same_set && first.size() > 10,
          std::to_string(first.size()) + " files hashed twice, " + std::to_string(differing) + " differ" + names};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fogwear acceptance checks"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "fogwear_acceptance").string();
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--workdir", workdir, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(workdir);
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient check", gradient_check},
      {2, "forward oracle", forward_oracle},
      {3, "ADC arithmetic", adc_arithmetic},
      {4, "quantization fidelity", quantization_fidelity},
      {5, "size budget", [&] { return size_budget(work / "size"); }},
      {6, "multi-modal dominance", multimodal_dominance},
      {7, "AUC oracle", auc_oracle},
      {8, "channel model", channel_model},
      {9, "TDMA invariants", tdma_invariants},
      {10, "latency budget", latency_budget},
      {11, "determinism", [&] { return determinism(work / "determinism"); }},
  };
  const std::set<int> wanted(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str());
    std::fflush(stdout);
  }
  if (wanted.empty() || wanted.contains(12)) {
    std::printf("[SKIP] 12 public dataset: not available offline; the manifest loader accepts a converted copy\n");
  }
  return failures == 0 ? 0 : 1;
}
