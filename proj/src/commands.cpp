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

#include "fogwear/commands.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fogwear/cohort.hpp"
#include "fogwear/compression.hpp"
#include "fogwear/container.hpp"
#include "fogwear/error.hpp"
#include "fogwear/evaluation.hpp"
#include "fogwear/hash.hpp"
#include "fogwear/metrics.hpp"
#include "fogwear/netsim.hpp"
#include "fogwear/nn.hpp"
#include "fogwear/textio.hpp"

namespace fogwear::commands {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using nlohmann::json;

namespace {

// Output directory of one command; tracks what it writes.
class Stage {
 public:
  Stage(const ExperimentConfig& cfg, const std::string& name) : dir_(cfg.output_dir / name) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) {
      throw RuntimeError("cannot create output directory " + dir_.string());
    }
    text("config.resolved.json", config::to_json(cfg).dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }

  fs::path text(const std::string& name, std::string_view content) {
    const fs::path file = dir_ / name;
    fs::create_directories(file.parent_path());
    write_text_file(file, content);
    return add(file);
  }
  fs::path json_file(const std::string& name, const json& j) { return text(name, j.dump(2) + "\n"); }
  fs::path add(const fs::path& file) {
    files_.push_back(file);
    return file;
  }

  Files finish() {
    json artifacts = json::object();
    for (const fs::path& f : files_) {
      artifacts[fs::relative(f, dir_).generic_string()] = {{"fnv1a", file_hash(f)},
                                                           {"bytes", fs::file_size(f)}};
    }
    write_text_file(dir_ / "artifacts.json", artifacts.dump(2) + "\n");
    files_.push_back(dir_ / "artifacts.json");
    return files_;
  }

 private:
  fs::path dir_;
  Files files_;
};

std::string csv_real(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

nn::ModelSpec spec_for(const ExperimentConfig& cfg, std::span<const signal::Window> windows) {
  if (windows.empty()) throw DataError("dataset yields no windows");
  nn::ModelSpec spec = nn::make_model_spec(nn::geometry_of(windows.front()), cfg.architecture);
  spec.validate();
  return spec;
}

std::vector<int> labels_of(std::span<const signal::Window> windows) {
  std::vector<int> y;
  y.reserve(windows.size());
  for (const auto& w : windows) {
    if (!w.label) throw DataError("window of " + w.subject_id + " has no label");
    y.push_back(*w.label);
  }
  return y;
}

struct LoadedModel {
  bool quantized = false;
  nn::ModelSpec spec;
  nn::Parameters params;
  std::optional<compress::QuantizedModel> qm;
};

LoadedModel load_model(const fs::path& file) {
  const std::vector<std::uint8_t> bytes = container::read_file_bytes(file);
  container::ByteReader r(bytes);
  const container::Header h = container::read_header(r);
  LoadedModel m;
  if (h.kind == container::Kind::kQuantized) {
    m.quantized = true;
    m.qm = compress::decode_quantized(bytes);
    m.spec = m.qm->spec;
  } else {
    container::FloatModel fm = container::decode_parameters(bytes);
    if (!fm.spec) throw DataError(file.string() + ": model container carries no model spec");
    m.spec = *fm.spec;
    m.params = std::move(fm.params);
  }
  return m;
}

json size_json(const compress::SizeReport& s) {
  return {{"float_bytes", s.float_bytes},
          {"pruned_sparse_float_bytes", s.pruned_sparse_float_bytes},
          {"int8_dense_bytes", s.int8_dense_bytes},
          {"int8_sparse_bytes", s.int8_sparse_bytes},
          {"compressed_bytes", s.compressed_bytes},
          {"ratio", s.ratio()},
          {"total_weights", s.total_weights},
          {"nonzero_weights", s.nonzero_weights}};
}

json report_with_config(const eval::MetricReport& r, const ExperimentConfig& cfg) {
  json j = eval::to_json(r);
  j["config"] = config::to_json(cfg);
  return j;
}

std::string file_stem_for(const std::string& subset) {
  std::string out;
  for (char c : subset) out += c == '+' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<signal::Recording> load_cohort(const ExperimentConfig& cfg) {
  std::vector<signal::Recording> raw = cfg.dataset.manifest
                                           ? signal::load_dataset(*cfg.dataset.manifest)
                                           : cohort::generate_synthetic_cohort(cfg.dataset.synthetic);
  if (raw.size() < 2) throw DataError("leave-one-subject-out needs at least 2 subjects");
  std::vector<signal::Recording> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(signal::select_channels(r, cfg.channels));
  return out;
}

std::vector<signal::Window> cohort_windows(const ExperimentConfig& cfg,
                                           std::span<const signal::Recording> cohort) {
  return signal::make_windows(cohort, cfg.eval.window_length_s, cfg.eval.stride_s,
                              cfg.eval.label_threshold);
}

Files cmd_datagen(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.dataset.synthetic.validate();
  const std::vector<signal::Recording> cohort = cohort::generate_synthetic_cohort(cfg.dataset.synthetic);
  const fs::path manifest =
      signal::save_dataset(cohort, cfg.output_dir / "dataset",
                           "synthetic cohort, profile " +
                               std::string(cohort::to_string(cfg.dataset.synthetic.profile)));

  Stage stage(cfg, "datagen");
  std::vector<signal::Recording> selected;
  for (const auto& r : cohort) selected.push_back(signal::select_channels(r, cfg.channels));
  const std::vector<signal::Window> windows = cohort_windows(cfg, selected);
  const cohort::FeatureBaseline fb = cohort::feature_baseline_loo(windows);
  // Within 0.1 of 0.5 counts as no separable effect.
  const bool chance = std::abs(fb.pooled_auc - 0.5) <= 0.1;
  json subjects = json::array();
  for (const auto& r : cohort) {
    double fog = 0.0;
    for (const auto& iv : r.fog_intervals) fog += iv.end_s - iv.start_s;
    subjects.push_back({{"subject_id", r.subject_id},
                        {"duration_s", r.duration_s},
                        {"streams", r.streams.size()},
                        {"fog_episodes", r.fog_intervals.size()},
                        {"fog_fraction", fog / r.duration_s}});
  }
  stage.json_file("summary.json",
                  {{"manifest", manifest.generic_string()},
                   {"manifest_fnv1a", file_hash(manifest)},
                   {"subjects", subjects},
                   {"windows", fb.windows},
                   {"positives", fb.positives},
                   {"self_check",
                    {{"method", "band-power logistic regression, leave-one-subject-out"},
                     {"pooled_auc", fb.pooled_auc},
                     {"separability", chance ? "chance" : "separable"}}}});
  log << "datagen: " << cohort.size() << " subjects, " << fb.windows << " windows ("
      << fb.positives << " FoG) -> " << manifest.generic_string() << "\n"
      << "self-check: feature AUC " << format_real(std::round(fb.pooled_auc * 1e4) / 1e4) << " ("
      << (chance ? "chance level" : "separable") << ")\n";
  return stage.finish();
}

Files cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  const std::vector<signal::Recording> cohort = load_cohort(cfg);
  const std::vector<signal::Window> windows = cohort_windows(cfg, cohort);
  nn::ModelSpec spec = spec_for(cfg, windows);
  nn::fit_input_scales(spec, windows);
  const nn::TrainResult tr = nn::train(spec, windows, cfg.train);

  std::vector<double> scores;
  scores.reserve(windows.size());
  for (const auto& w : windows) scores.push_back(nn::forward(spec, tr.params, w));
  const std::vector<int> labels = labels_of(windows);
  const double threshold = cfg.eval.fixed_threshold ? *cfg.eval.fixed_threshold
                                                    : metrics::youden_threshold(scores, labels);

  Stage stage(cfg, "train");
  const fs::path model = stage.dir() / "model.fwm";
  container::save_parameters(model, &spec, tr.params, false);
  stage.add(model);
  std::ostringstream csv;
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e) {
    csv << e + 1 << ',' << format_real(tr.epoch_loss[e]) << '\n';
  }
  stage.text("epochs.csv", csv.str());
  std::vector<const signal::Window*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  stage.json_file("summary.json",
                  {{"windows", windows.size()},
                   {"positives", std::count(labels.begin(), labels.end(), 1)},
                   {"parameters", nn::parameter_count(tr.params)},
                   {"first_epoch_loss", tr.epoch_loss.front()},
                   {"final_epoch_loss", tr.epoch_loss.back()},
                   {"positive_weight", tr.positive_weight},
                   {"training_threshold", threshold},
                   {"training_auc", metrics::roc_auc(scores, labels)},
                   {"train_manifest_hash", eval::training_manifest_hash(ptrs)},
                   {"model_fnv1a", file_hash(model)}});
  log << "train: " << windows.size() << " windows, " << nn::parameter_count(tr.params)
      << " parameters, loss " << format_real(tr.epoch_loss.front()) << " -> "
      << format_real(tr.epoch_loss.back()) << "\n"
      << "model: " << model.generic_string() << "\n";
  return stage.finish();
}

Files cmd_compress(const ExperimentConfig& cfg, const std::optional<fs::path>& model_path,
                   std::ostream& log) {
  const fs::path input = model_path.value_or(cfg.output_dir / "train" / "model.fwm");
  const LoadedModel m = load_model(input);
  if (m.quantized) throw DataError(input.string() + " is already quantized");
  const std::vector<signal::Recording> cohort = load_cohort(cfg);
  const std::vector<signal::Window> windows = cohort_windows(cfg, cohort);
  const compress::Compressed c =
      compress::compress_model(m.spec, m.params, windows, cfg.compression, cfg.train);

  Stage stage(cfg, "compress");
  const fs::path out = stage.dir() / "model.fwm";
  if (c.quantized) {
    compress::save_quantized(out, *c.quantized, cfg.compression.sparse_encoding);
  } else {
    container::save_parameters(out, &m.spec, c.pruned, cfg.compression.use_sparse_encoding());
  }
  stage.add(out);
  const std::size_t out_bytes = fs::file_size(out);
  const std::size_t in_bytes = fs::file_size(input);
  if (out_bytes != c.sizes.compressed_bytes) {
    throw RuntimeError("size accounting mismatch: " + std::to_string(c.sizes.compressed_bytes) +
                       " bytes reported, " + std::to_string(out_bytes) + " on disk");
  }
  std::ostringstream csv;
  csv << "stage,bytes,ratio_to_float\n";
  const auto row = [&](const char* name, std::size_t bytes) {
    if (bytes == 0) return;
    csv << name << ',' << bytes << ','
        << format_real(static_cast<double>(bytes) / static_cast<double>(c.sizes.float_bytes)) << '\n';
  };
  row("float", c.sizes.float_bytes);
  row("pruned_sparse_float", c.sizes.pruned_sparse_float_bytes);
  row("int8_dense", c.sizes.int8_dense_bytes);
  row("int8_sparse", c.sizes.int8_sparse_bytes);
  row("compressed", c.sizes.compressed_bytes);
  stage.text("sizes.csv", csv.str());

  double mean_diff = 0.0, max_diff = 0.0;
  std::size_t agree = 0;
  for (const auto& w : windows) {
    const double a = nn::forward(m.spec, m.params, w);
    const double b = c.quantized ? compress::quantized_forward(*c.quantized, w)
                                 : nn::forward(m.spec, c.pruned, w);
    mean_diff += std::abs(a - b);
    max_diff = std::max(max_diff, std::abs(a - b));
    agree += (a >= 0.5) == (b >= 0.5);
  }
  const double n = static_cast<double>(windows.size());
  stage.json_file("summary.json",
                  {{"input", input.generic_string()},
                   {"input_fnv1a", file_hash(input)},
                   {"sizes", size_json(c.sizes)},
                   {"file_bytes", {{"input", in_bytes}, {"output", out_bytes}}},
                   {"fidelity",
                    {{"windows", windows.size()},
                     {"mean_abs_probability_diff", mean_diff / n},
                     {"max_abs_probability_diff", max_diff},
                     {"agreement_at_0_5", static_cast<double>(agree) / n}}},
                   {"model_fnv1a", file_hash(out)}});
  log << "compress: " << c.sizes.float_bytes << " -> " << c.sizes.compressed_bytes << " bytes (ratio "
      << format_real(std::round(c.sizes.ratio() * 1e4) / 1e4) << "), " << c.sizes.nonzero_weights
      << "/" << c.sizes.total_weights << " weights kept\n"
      << "model: " << out.generic_string() << "\n";
  return stage.finish();
}

Files cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
  const std::vector<signal::Recording> cohort = load_cohort(cfg);
  const std::vector<signal::Window> windows = cohort_windows(cfg, cohort);
  const nn::ModelSpec spec = spec_for(cfg, windows);
  eval::LooOptions opts;
  opts.train = cfg.train;
  opts.eval = cfg.eval;
  if (cfg.evaluate_compressed) opts.compression = cfg.compression;
  const eval::LooResult full = eval::loo_evaluate(windows, spec, opts);

  Stage stage(cfg, "evaluate");
  std::vector<eval::MetricReport> reports{full.float_report};
  stage.json_file("float.json", report_with_config(full.float_report, cfg));
  if (full.compressed_report) {
    reports.push_back(*full.compressed_report);
    stage.json_file("compressed.json", report_with_config(*full.compressed_report, cfg));
  }
  std::ostringstream folds;
  folds << "subject,windows,positives,n_train,train_manifest_hash,float_threshold,"
           "compressed_threshold,compressed_ratio\n";
  for (const auto& f : full.folds) {
    folds << f.subject_id << ',' << f.labels.size() << ','
          << std::count(f.labels.begin(), f.labels.end(), 1) << ',' << f.n_train << ','
          << f.train_manifest_hash << ',' << format_real(f.float_model.threshold) << ','
          << (f.compressed_model ? format_real(f.compressed_model->threshold) : "") << ','
          << (f.sizes ? format_real(f.sizes->ratio()) : "") << '\n';
  }
  stage.text("folds.csv", folds.str());

  json ablation_json = json::array();
  if (cfg.run_ablation) {
    const std::vector<eval::AblationRow> rows = eval::ablation(windows, spec, cfg.ablation, opts, &full);
    for (const auto& row : rows) {
      const std::string stem = file_stem_for(row.subset);
      if (row.subset != full.float_report.subset) {
        reports.push_back(row.result.float_report);
        if (row.result.compressed_report) reports.push_back(*row.result.compressed_report);
      }
      stage.json_file("ablation/" + stem + "_float.json", report_with_config(row.result.float_report, cfg));
      if (row.result.compressed_report) {
        stage.json_file("ablation/" + stem + "_compressed.json",
                        report_with_config(*row.result.compressed_report, cfg));
      }
      ablation_json.push_back({{"subset", row.subset},
                               {"float_auc", row.result.float_report.pooled.auc.value_or(0.0)},
                               {"float_f1", row.result.float_report.pooled.f1.value_or(0.0)}});
    }
  }
  stage.text("metrics.csv", eval::reports_csv(reports));

  json summary = {{"windows", full.float_report.windows},
                  {"positives", full.float_report.positives},
                  {"subjects", full.folds.size()},
                  {"float", {{"auc", full.float_report.pooled.auc.value_or(0.0)},
                             {"f1", full.float_report.pooled.f1.value_or(0.0)}}},
                  {"ablation", ablation_json}};
  if (full.compressed_report) {
    summary["compressed"] = {{"auc", full.compressed_report->pooled.auc.value_or(0.0)},
                             {"f1", full.compressed_report->pooled.f1.value_or(0.0)}};
    summary["agreement_at_0_5"] = full.agreement_at_half.value_or(0.0);
    summary["agreement_at_threshold"] = full.agreement_at_threshold.value_or(0.0);
    summary["size_ratio"] = full.folds.front().sizes->ratio();
  }
  stage.json_file("summary.json", summary);

  log << "evaluate: " << full.folds.size() << " folds, " << full.float_report.windows
      << " windows\n";
  for (const auto& r : reports) {
    log << "  " << r.model << " " << r.subset << ": AUC " << csv_real(r.pooled.auc) << ", F1 "
        << csv_real(r.pooled.f1) << "\n";
  }
  return stage.finish();
}

Files cmd_simulate(const ExperimentConfig& cfg, const std::optional<fs::path>& model_path,
                   std::ostream& log) {
  cfg.netsim.validate();  // infeasible schedules fail before any work
  fs::path model_file;
  if (model_path) {
    model_file = *model_path;
  } else if (fs::exists(cfg.output_dir / "compress" / "model.fwm")) {
    model_file = cfg.output_dir / "compress" / "model.fwm";
  } else if (fs::exists(cfg.output_dir / "train" / "model.fwm")) {
    model_file = cfg.output_dir / "train" / "model.fwm";
  } else {
    throw ConfigError("no model found under " + cfg.output_dir.string() +
                      "; run train (and optionally compress) first or pass --model");
  }
  const LoadedModel m = load_model(model_file);
  const std::vector<signal::Recording> cohort = load_cohort(cfg);
  const auto it = std::find_if(cohort.begin(), cohort.end(), [&](const signal::Recording& r) {
    return r.subject_id == cfg.netsim_subject;
  });
  if (it == cohort.end()) throw DataError("subject " + cfg.netsim_subject + " is not in the dataset");

  netsim::Predictor predictor;
  if (m.quantized) {
    predictor = [&](const signal::Window& w) { return compress::quantized_forward(*m.qm, w); };
  } else {
    predictor = [&](const signal::Window& w) { return nn::forward(m.spec, m.params, w); };
  }
  const netsim::SimResult sim = netsim::run_simulation(*it, cfg.netsim, predictor);
  const netsim::LatencyReport lr = netsim::latency_report(sim.log);

  Stage stage(cfg, "simulate");
  stage.text("events.jsonl", netsim::events_jsonl(sim.log));
  stage.text("summary.csv", netsim::summary_csv(lr));
  json nodes = json::array();
  for (std::size_t i = 0; i < cfg.netsim.nodes.size(); ++i) {
    nodes.push_back({{"node", cfg.netsim.nodes[i].name},
                     {"payload_rate_bps", sim.schedule.payload_rate_bps[i]},
                     {"capacity_bps", sim.schedule.capacity_bps[i]},
                     {"payload_bits_per_frame", sim.schedule.payload_bits_per_frame[i]}});
  }
  const double ber = cfg.netsim.channel.bit_error_rate();
  stage.json_file("report.json",
                  {{"model", model_file.generic_string()},
                   {"model_fnv1a", file_hash(model_file)},
                   {"subject", cfg.netsim_subject},
                   {"latency", netsim::to_json(lr)},
                   {"schedule",
                    {{"superframe_s", sim.schedule.schedule.superframe_period_s()},
                     {"utilization", sim.schedule.utilization},
                     {"nodes", nodes}}},
                   {"channel", {{"p_pulse", cfg.netsim.channel.p_pulse}, {"bit_error_rate", ber}}},
                   {"superframes", sim.log.superframes},
                   {"max_clock_offset_s", sim.log.max_clock_offset_s},
                   {"saturated", sim.saturated},
                   {"diagnostics", sim.diagnostics}});
  log << "simulate: " << format_real(cfg.netsim.sim_duration_s) << " s, " << lr.windows
      << " windows, " << lr.alerts << " alerts, " << lr.frames_tx << " frames (" << lr.frames_lost
      << " lost), " << lr.collisions << " collisions, backlog high-water " << lr.backlog_high_water
      << "\n";
  for (const std::string& d : sim.diagnostics) log << "diagnostic: " << d << "\n";
  return stage.finish();
}

Files cmd_report(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path root = cfg.output_dir;
  const fs::path metrics_csv = root / "evaluate" / "metrics.csv";
  const bool have_eval = fs::exists(metrics_csv);
  const bool have_compress = fs::exists(root / "compress" / "summary.json");
  const bool have_sim = fs::exists(root / "simulate" / "report.json");
  if (!have_eval && !have_compress && !have_sim) {
    throw DataError("nothing to report under " + root.string() + "; run evaluate, compress or simulate first");
  }
  Stage stage(cfg, "report");
  std::ostringstream md;
  md << "# fogwear run summary\n\n";

  if (have_eval) {
    // Pooled rows only, in long form for bar charts per modality subset.
    std::istringstream in(read_text_file(metrics_csv));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
      std::istringstream h(line);
      std::string cell;
      while (std::getline(h, cell, ',')) header.push_back(cell);
    }
    std::ostringstream fig;
    fig << "model,subset,metric,value,lo,hi\n";
    md << "## Pooled leave-one-subject-out metrics\n\n| model | subset | sensitivity | specificity | F1 | AUC |\n|---|---|---|---|---|---|\n";
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::istringstream row(line);
      std::string cell;
      while (std::getline(row, cell, ',')) cells.push_back(cell);
      cells.resize(header.size());
      if (cells[2] != "pooled") continue;
      auto col = [&](const std::string& name) {
        const auto pos = std::find(header.begin(), header.end(), name);
        return pos == header.end() ? std::string() : cells[static_cast<std::size_t>(pos - header.begin())];
      };
      for (const char* metric : eval::kMetricNames) {
        fig << cells[0] << ',' << cells[1] << ',' << metric << ',' << col(metric) << ','
            << col(std::string(metric) + "_lo") << ',' << col(std::string(metric) + "_hi") << '\n';
      }
      md << "| " << cells[0] << " | " << cells[1] << " | " << col("sensitivity") << " | "
         << col("specificity") << " | " << col("f1") << " | " << col("auc") << " |\n";
    }
    md << "\n";
    stage.text("modalities.csv", fig.str());
  }
  if (have_compress) {
    const json s = json::parse(read_text_file(root / "compress" / "summary.json"));
    md << "## Model size\n\n| stage | bytes |\n|---|---|\n";
    for (const char* k : {"float_bytes", "pruned_sparse_float_bytes", "int8_dense_bytes",
                          "int8_sparse_bytes", "compressed_bytes"}) {
      md << "| " << k << " | " << s["sizes"][k].dump() << " |\n";
    }
    md << "\nratio: " << s["sizes"]["ratio"].dump() << "\n\n";
  }
  if (have_sim) {
    const json s = json::parse(read_text_file(root / "simulate" / "report.json"));
    md << "## Network simulation\n\n| metric | value |\n|---|---|\n";
    for (const auto& [k, v] : s["latency"].items()) md << "| " << k << " | " << v.dump() << " |\n";
    md << "\n";
    for (const auto& d : s["diagnostics"]) md << "- " << d.get<std::string>() << "\n";
    md << "\n";
  }
  stage.text("summary.md", md.str());

  // Hashes of everything produced so far.
  json all = json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root);
    if (*rel.begin() == "report") continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    all[fs::relative(f, root).generic_string()] = {{"fnv1a", file_hash(f)}, {"bytes", fs::file_size(f)}};
  }
  stage.json_file("all_artifacts.json", all);
  log << "report: " << (stage.dir() / "summary.md").generic_string() << "\n";
  return stage.finish();
}

}  // namespace fogwear::commands
