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

#include "fogwear/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "fogwear/error.hpp"
#include "fogwear/frontend.hpp"
#include "fogwear/metrics.hpp"
#include "fogwear/rng.hpp"

namespace fogwear::cohort {

using nlohmann::json;
using signal::Interval;
using signal::Modality;
using signal::Recording;
using signal::Stream;

std::string_view to_string(EffectProfile p) {
  switch (p) {
    case EffectProfile::kNull: return "null";
    case EffectProfile::kStrong: return "strong";
    case EffectProfile::kComplementary: return "complementary";
    case EffectProfile::kEegOnly: return "eeg_only";
  }
  return "?";
}

EffectProfile parse_effect_profile(std::string_view text) {
  for (EffectProfile p : {EffectProfile::kNull, EffectProfile::kStrong,
                          EffectProfile::kComplementary, EffectProfile::kEegOnly}) {
    if (text == to_string(p)) return p;
  }
  throw ConfigError("unknown effect profile '" + std::string(text) +
                    "' (expected null, strong, complementary or eeg_only)");
}

void CohortConfig::validate() const {
  if (n_subjects < 2) throw ConfigError("a cohort needs at least 2 subjects for leave-one-out");
  if (windows_per_subject < 1) throw ConfigError("windows_per_subject must be at least 1");
  if (!(eeg_rate_hz > 0 && emg_rate_hz > 0 && acc_rate_hz > 0)) {
    throw ConfigError("sampling rates must be positive");
  }
  if (acc_rate_hz < 20.0) throw ConfigError("ACC rate must be at least 20 Hz for the tremor band");
  if (eeg_rate_hz < 80.0) throw ConfigError("EEG rate must be at least 80 Hz");
  if (emg_rate_hz < 100.0) throw ConfigError("EMG rate must be at least 100 Hz");
  if (!(fog_fraction > 0.0 && fog_fraction < 1.0)) throw ConfigError("fog_fraction must lie in (0, 1)");
  if (!(strong_effect >= 0.0 && faint_effect >= 0.0)) throw ConfigError("effect sizes must be >= 0");
  frontend::FrontEndConfig::preset(eeg_preset);
}

double CohortConfig::duration_s() const {
  return signal::kDefaultWindowLengthS +
         static_cast<double>(windows_per_subject - 1) * signal::kDefaultStrideS;
}

json to_json(const CohortConfig& c) {
  return {{"n_subjects", c.n_subjects},
          {"windows_per_subject", c.windows_per_subject},
          {"profile", std::string(to_string(c.profile))},
          {"seed", c.seed},
          {"eeg_rate_hz", c.eeg_rate_hz},
          {"emg_rate_hz", c.emg_rate_hz},
          {"acc_rate_hz", c.acc_rate_hz},
          {"strong_effect", c.strong_effect},
          {"faint_effect", c.faint_effect},
          {"fog_fraction", c.fog_fraction},
          {"eeg_preset", c.eeg_preset}};
}

CohortConfig cohort_config_from_json(const json& j) {
  CohortConfig c;
  c.n_subjects = j.value("n_subjects", c.n_subjects);
  c.windows_per_subject = j.value("windows_per_subject", c.windows_per_subject);
  if (j.contains("profile")) c.profile = parse_effect_profile(j["profile"].get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.eeg_rate_hz = j.value("eeg_rate_hz", c.eeg_rate_hz);
  c.emg_rate_hz = j.value("emg_rate_hz", c.emg_rate_hz);
  c.acc_rate_hz = j.value("acc_rate_hz", c.acc_rate_hz);
  c.strong_effect = j.value("strong_effect", c.strong_effect);
  c.faint_effect = j.value("faint_effect", c.faint_effect);
  c.fog_fraction = j.value("fog_fraction", c.fog_fraction);
  c.eeg_preset = j.value("eeg_preset", c.eeg_preset);
  c.validate();
  return c;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kAccRangeG = 4.0;
constexpr double kRampS = 0.5;

struct Episode {
  Interval span;
  double eeg = 0.0;
  double emg = 0.0;
  double acc = 0.0;
  double tremor_hz = 5.0;
};

struct SubjectTraits {
  double eeg_scale, emg_scale, acc_scale;  // background amplitude
  double eeg_gain, emg_gain, acc_gain;     // effect jitter
  double alpha_hz;
  double step_hz;
};

std::vector<double> white(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void normalize_rms(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double rms = std::sqrt(s / static_cast<double>(std::max<std::size_t>(1, v.size())));
  if (rms > 0.0) {
    for (double& x : v) x /= rms;
  }
}

// Unit-RMS noise band-limited to [lo, hi].
std::vector<double> band_noise(std::size_t n, double lo, double hi, double rate, Rng& rng) {
  std::vector<double> v = frontend::bandpass(white(n, rng), lo, hi, rate);
  normalize_rms(v);
  return v;
}

// Raised-cosine edges over kRampS at both ends of each episode.
double ramp(double t, const Interval& iv) {
  if (t < iv.start_s || t >= iv.end_s) return 0.0;
  const double edge = std::min({t - iv.start_s, iv.end_s - t, kRampS});
  return edge >= kRampS ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * edge / kRampS);
}

std::vector<double> envelope(const std::vector<Episode>& eps, double Episode::*amp,
                             std::size_t n, double rate) {
  std::vector<double> env(n, 0.0);
  for (const Episode& e : eps) {
    if (e.*amp == 0.0) continue;
    const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor(e.span.start_s * rate)));
    const auto i1 = std::min(n, static_cast<std::size_t>(std::ceil(e.span.end_s * rate)) + 1);
    for (std::size_t i = i0; i < i1; ++i) {
      env[i] += e.*amp * ramp(static_cast<double>(i) / rate, e.span);
    }
  }
  return env;
}

std::vector<Episode> plant_episodes(const CohortConfig& cfg, double duration, Rng& rng) {
  constexpr double kMeanEpisode = 6.0;
  const double mean_gap = kMeanEpisode * (1.0 - cfg.fog_fraction) / cfg.fog_fraction;
  std::vector<Episode> out;
  double t = rng.uniform(0.5, 1.0) * mean_gap;
  while (true) {
    const double len = rng.uniform(3.0, 9.0);
    if (t + len > duration - 0.5) break;
    Episode e;
    e.span = {t, t + len};
    e.tremor_hz = rng.uniform(4.0, 7.0);
    const double s = cfg.strong_effect;
    const double f = cfg.faint_effect;
    switch (cfg.profile) {
      case EffectProfile::kNull:
        break;
      case EffectProfile::kStrong:
        e.eeg = e.emg = e.acc = s;
        break;
      case EffectProfile::kEegOnly:
        e.eeg = s;
        break;
      case EffectProfile::kComplementary: {
        const std::size_t dominant = rng.index(3);
        e.eeg = dominant == 0 ? s : f;
        e.emg = dominant == 1 ? s : f;
        e.acc = dominant == 2 ? s : f;
        break;
      }
    }
    out.push_back(e);
    t += len + rng.uniform(0.5, 1.5) * mean_gap;
  }
  return out;
}

double clamp_hi(double hi, double rate) { return std::min(hi, 0.45 * rate); }

std::vector<double> digitize(const std::vector<double>& uv, frontend::FrontEndConfig fe,
                             double rate, std::uint64_t seed) {
  fe.band_hi_hz = clamp_hi(fe.band_hi_hz, rate);
  return frontend::front_end_pipeline(uv, fe, rate, seed).uv;
}

std::vector<double> digitize_acc(const std::vector<double>& g) {
  // The accelerometer's own 12-bit converter over +/-4 g.
  const double mv_per_g = 600.0 / kAccRangeG;
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i] = frontend::adc_value(frontend::adc_code(g[i] * mv_per_g)) / mv_per_g;
  }
  return out;
}

Recording make_subject(const CohortConfig& cfg, std::size_t index, Rng rng) {
  Recording rec;
  char name[16];
  std::snprintf(name, sizeof name, "S%02zu", index + 1);
  rec.subject_id = name;
  rec.duration_s = cfg.duration_s();

  Rng trait_rng = rng.fork(1);
  SubjectTraits tr{};
  tr.eeg_scale = trait_rng.uniform(0.6, 1.6);
  tr.emg_scale = trait_rng.uniform(0.6, 1.6);
  tr.acc_scale = trait_rng.uniform(0.6, 1.6);
  tr.eeg_gain = trait_rng.uniform(0.6, 1.4);
  tr.emg_gain = trait_rng.uniform(0.6, 1.4);
  tr.acc_gain = trait_rng.uniform(0.6, 1.4);
  tr.alpha_hz = trait_rng.uniform(8.5, 11.5);
  tr.step_hz = trait_rng.uniform(0.8, 1.1);

  Rng ep_rng = rng.fork(2);
  const std::vector<Episode> episodes = plant_episodes(cfg, rec.duration_s, ep_rng);
  for (const Episode& e : episodes) rec.fog_intervals.push_back(e.span);

  const auto channels = signal::default_channel_set();
  const auto eeg_fe = frontend::FrontEndConfig::preset(cfg.eeg_preset);
  const auto emg_fe = frontend::FrontEndConfig::emg();

  // EEG: a shared cortical background plus per-electrode noise and an alpha
  // rhythm; FoG adds theta-band power.
  const double eeg_rate = cfg.eeg_rate_hz;
  const auto n_eeg = static_cast<std::size_t>(std::llround(rec.duration_s * eeg_rate));
  Rng eeg_rng = rng.fork(10);
  const std::vector<double> common = band_noise(n_eeg, 1.0, 30.0, eeg_rate, eeg_rng);
  const std::vector<double> eeg_env = envelope(episodes, &Episode::eeg, n_eeg, eeg_rate);

  // EMG: gait-locked bursts of band-limited noise; FoG adds trembling bursts.
  const double emg_rate = cfg.emg_rate_hz;
  const auto n_emg = static_cast<std::size_t>(std::llround(rec.duration_s * emg_rate));
  const std::vector<double> emg_env = envelope(episodes, &Episode::emg, n_emg, emg_rate);
  std::vector<double> emg_tremor(n_emg, 0.0);
  for (const Episode& e : episodes) {
    for (std::size_t i = 0; i < n_emg; ++i) {
      const double t = static_cast<double>(i) / emg_rate;
      if (t >= e.span.start_s && t < e.span.end_s) {
        emg_tremor[i] = 0.5 + 0.5 * std::sin(kTwoPi * e.tremor_hz * t);
      }
    }
  }

  // ACC: stepping oscillation plus gravity; FoG adds a 4-7 Hz tremor.
  const double acc_rate = cfg.acc_rate_hz;
  const auto n_acc = static_cast<std::size_t>(std::llround(rec.duration_s * acc_rate));
  const std::vector<double> acc_env = envelope(episodes, &Episode::acc, n_acc, acc_rate);
  std::vector<double> acc_tremor(n_acc, 0.0);
  for (const Episode& e : episodes) {
    for (std::size_t i = 0; i < n_acc; ++i) {
      const double t = static_cast<double>(i) / acc_rate;
      if (t >= e.span.start_s && t < e.span.end_s) acc_tremor[i] = std::sin(kTwoPi * e.tremor_hz * t);
    }
  }

  std::uint64_t stream_id = 100;
  for (const signal::ChannelRef& ch : channels) {
    Rng srng = rng.fork(stream_id++);
    Stream s;
    s.modality = ch.modality;
    s.channel = ch.channel;
    switch (ch.modality) {
      case Modality::kEEG: {
        constexpr double kBackgroundUv = 12.0;
        const double amp = kBackgroundUv * tr.eeg_scale;
        const std::vector<double> own = band_noise(n_eeg, 1.0, 30.0, eeg_rate, srng);
        const std::vector<double> theta = band_noise(n_eeg, 4.0, 8.0, eeg_rate, srng);
        const double alpha_phase = srng.uniform(0.0, kTwoPi);
        std::vector<double> uv(n_eeg);
        for (std::size_t i = 0; i < n_eeg; ++i) {
          const double t = static_cast<double>(i) / eeg_rate;
          uv[i] = amp * (0.6 * common[i] + 0.8 * own[i] +
                         0.5 * std::sin(kTwoPi * tr.alpha_hz * t + alpha_phase) +
                         tr.eeg_gain * eeg_env[i] * theta[i] * 1.5);
        }
        s.sample_rate_hz = eeg_rate;
        s.samples = digitize(uv, eeg_fe, eeg_rate, srng.next());
        break;
      }
      case Modality::kEMG: {
        constexpr double kBackgroundUv = 30.0;
        const double amp = kBackgroundUv * tr.emg_scale;
        const double hi = clamp_hi(200.0, emg_rate);
        const std::vector<double> base = band_noise(n_emg, 20.0, hi, emg_rate, srng);
        const std::vector<double> burst = band_noise(n_emg, 20.0, hi, emg_rate, srng);
        const double phase = srng.uniform(0.0, kTwoPi);
        std::vector<double> uv(n_emg);
        for (std::size_t i = 0; i < n_emg; ++i) {
          const double t = static_cast<double>(i) / emg_rate;
          const double gait = 0.5 + 0.5 * std::max(0.0, std::sin(kTwoPi * tr.step_hz * t + phase));
          uv[i] = amp * (gait * base[i] + 2.0 * tr.emg_gain * emg_env[i] * emg_tremor[i] * burst[i]);
        }
        s.sample_rate_hz = emg_rate;
        s.samples = digitize(uv, emg_fe, emg_rate, srng.next());
        break;
      }
      case Modality::kACC: {
        constexpr double kStepG = 0.25;
        constexpr double kTremorG = 0.3;
        constexpr double kSwayG = 0.05;
        const double amp = kStepG * tr.acc_scale;
        const bool vertical = ch.channel.back() == 'z';
        const double phase = srng.uniform(0.0, kTwoPi);
        const double tremor_gain = srng.uniform(0.5, 1.0);
        const std::vector<double> noise = white(n_acc, srng);
        // Body sway in the tremor band, with slowly varying strength.
        const std::vector<double> sway = band_noise(n_acc, 3.0, 8.0, acc_rate, srng);
        const std::vector<double> drift = band_noise(n_acc, 0.05, 0.3, acc_rate, srng);
        std::vector<double> g(n_acc);
        for (std::size_t i = 0; i < n_acc; ++i) {
          const double t = static_cast<double>(i) / acc_rate;
          const double w = kTwoPi * tr.step_hz * t + phase;
          g[i] = (vertical ? 1.0 : 0.0) + amp * (std::sin(w) + 0.3 * std::sin(2.0 * w)) +
                 0.02 * noise[i] + kSwayG * tr.acc_scale * std::exp(0.5 * drift[i]) * sway[i] +
                 kTremorG * tr.acc_scale * tr.acc_gain * tremor_gain * acc_env[i] * acc_tremor[i];
        }
        s.sample_rate_hz = acc_rate;
        s.samples = digitize_acc(g);
        break;
      }
    }
    rec.streams.push_back(std::move(s));
  }
  rec.validate();
  return rec;
}

}  // namespace

std::vector<Recording> generate_synthetic_cohort(const CohortConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  std::vector<Recording> out;
  out.reserve(cfg.n_subjects);
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) out.push_back(make_subject(cfg, s, root.fork(s + 1)));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double log_power(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::log(s / static_cast<double>(std::max<std::size_t>(1, x.size())) + 1e-12);
}

double band_log_power(std::span<const double> x, double lo, double hi, double rate) {
  hi = std::min(hi, 0.45 * rate);
  if (!(lo < hi)) return 0.0;
  return log_power(frontend::bandpass(x, lo, hi, rate));
}

}  // namespace

std::vector<double> band_power_features(const signal::Window& w) {
  std::vector<double> f;
  for (const signal::ModalityBlock& b : w.blocks) {
    std::vector<std::pair<double, double>> bands;
    switch (b.modality) {
      case Modality::kEEG: bands = {{4.0, 8.0}, {8.0, 13.0}, {13.0, 30.0}}; break;
      case Modality::kEMG: bands = {{10.0, 1000.0}}; break;
      case Modality::kACC: bands = {{0.5, 3.0}, {3.0, 8.0}}; break;
    }
    const std::size_t base = f.size();
    const std::size_t n_feat = bands.size() + (b.modality == Modality::kEMG ? 1 : 0);
    f.resize(base + n_feat, 0.0);
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, b.channels.size()));
    for (std::size_t c = 0; c < b.channels.size(); ++c) {
      const auto x = b.channel(c);
      for (std::size_t k = 0; k < bands.size(); ++k) {
        f[base + k] += inv * band_log_power(x, bands[k].first, bands[k].second, b.sample_rate_hz);
      }
      if (b.modality == Modality::kEMG) {
        std::vector<double> rect(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) rect[i] = std::abs(x[i]);
        f[base + bands.size()] += inv * band_log_power(rect, 3.0, 8.0, b.sample_rate_hz);
      }
    }
  }
  return f;
}

double LogisticModel::predict(std::span<const double> x) const {
  double z = weights.back();
  for (std::size_t i = 0; i < x.size(); ++i) z += weights[i] * (x[i] - mean[i]) / stdev[i];
  return 1.0 / (1.0 + std::exp(-z));
}

LogisticModel fit_logistic(std::span<const std::vector<double>> x, std::span<const int> y,
                           std::size_t iterations, double lr, double l2) {
  if (x.empty() || x.size() != y.size()) throw DataError("logistic fit needs matching x and y");
  const std::size_t d = x[0].size();
  const auto n = static_cast<double>(x.size());
  LogisticModel m;
  m.mean.assign(d, 0.0);
  m.stdev.assign(d, 0.0);
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += r[j] / n;
  }
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) m.stdev[j] += (r[j] - m.mean[j]) * (r[j] - m.mean[j]) / n;
  }
  for (double& s : m.stdev) s = s > 0.0 ? std::sqrt(s) : 1.0;
  m.weights.assign(d + 1, 0.0);
  std::vector<double> grad(d + 1);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double err = m.predict(x[i]) - y[i];
      for (std::size_t j = 0; j < d; ++j) grad[j] += err * (x[i][j] - m.mean[j]) / m.stdev[j];
      grad[d] += err;
    }
    for (std::size_t j = 0; j <= d; ++j) {
      const double reg = j < d ? l2 * m.weights[j] : 0.0;
      m.weights[j] -= lr * (grad[j] / n + reg);
    }
  }
  return m;
}

FeatureBaseline feature_baseline_loo(std::span<const signal::Window> windows) {
  std::map<std::string, std::vector<std::size_t>> by_subject;
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!windows[i].label) throw DataError("feature baseline needs labelled windows");
    by_subject[windows[i].subject_id].push_back(i);
    feats.push_back(band_power_features(windows[i]));
    labels.push_back(*windows[i].label);
  }
  if (by_subject.size() < 2) throw DataError("feature baseline needs at least 2 subjects");
  FeatureBaseline out;
  out.windows = windows.size();
  out.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  std::vector<double> scores;
  std::vector<int> truth;
  for (const auto& [subject, test] : by_subject) {
    std::vector<std::vector<double>> tx;
    std::vector<int> ty;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      if (windows[i].subject_id == subject) continue;
      tx.push_back(feats[i]);
      ty.push_back(labels[i]);
    }
    const LogisticModel m = fit_logistic(tx, ty);
    for (std::size_t i : test) {
      scores.push_back(m.predict(feats[i]));
      truth.push_back(labels[i]);
    }
  }
  const auto pos = std::count(truth.begin(), truth.end(), 1);
  if (pos > 0 && pos < static_cast<long>(truth.size())) out.pooled_auc = metrics::roc_auc(scores, truth);
  return out;
}

}  // namespace fogwear::cohort
