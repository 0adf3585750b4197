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

#include "fogwear/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fogwear/error.hpp"
#include "fogwear/rng.hpp"
#include "fogwear/textio.hpp"

namespace fogwear::frontend {

FrontEndConfig FrontEndConfig::eeg() { return {}; }

FrontEndConfig FrontEndConfig::eeg_wide() {
  FrontEndConfig c;
  c.name = "eeg_wide";
  c.band_hi_hz = 200.0;
  return c;
}

FrontEndConfig FrontEndConfig::emg() {
  FrontEndConfig c;
  c.name = "emg";
  c.gain = 50.0;
  c.band_lo_hz = 1.0;
  c.band_hi_hz = 1000.0;
  c.noise_rms_uv = 4.3;
  return c;
}

FrontEndConfig FrontEndConfig::preset(const std::string& name) {
  if (name == "eeg") return eeg();
  if (name == "eeg_wide") return eeg_wide();
  if (name == "emg") return emg();
  throw ConfigError("unknown front-end preset '" + name + "'");
}

void FrontEndConfig::validate(double sample_rate_hz) const {
  if (!(gain > 0.0)) throw ConfigError("front-end gain must be positive");
  if (!(band_lo_hz > 0.0 && band_lo_hz < band_hi_hz && band_hi_hz < sample_rate_hz / 2.0)) {
    throw ConfigError("front-end band " + format_real(band_lo_hz) + "-" +
                      format_real(band_hi_hz) + " Hz invalid at " +
                      format_real(sample_rate_hz) + " Hz sampling");
  }
  if (!(noise_rms_uv >= 0.0)) throw ConfigError("noise RMS must be non-negative");
  if (adc_bits < 2 || adc_bits > 16) throw ConfigError("ADC bits must lie in 2..16");
  if (!(adc_range_mv > 0.0)) throw ConfigError("ADC range must be positive");
}

bool FrontEndConfig::clips(double input_pp_uv) const {
  return gain * input_pp_uv / 1000.0 > 2.0 * adc_range_mv;
}

double FrontEndConfig::lsb_mv() const {
  return 2.0 * adc_range_mv / std::ldexp(1.0, adc_bits);
}

double FrontEndConfig::input_referred_resolution_uv() const {
  return lsb_mv() / 2.0 / gain * 1000.0;
}

double FrontEndConfig::input_range_uv() const { return adc_range_mv / gain * 1000.0; }

Amplified amplify(std::span<const double> signal_uv, double gain, double range_mv) {
  if (!(gain > 0.0)) throw ConfigError("gain must be positive");
  Amplified out;
  out.mv.reserve(signal_uv.size());
  for (double x : signal_uv) {
    double v = x * gain / 1000.0;
    if (v > range_mv) {
      v = range_mv;
      ++out.clipped;
    } else if (v < -range_mv) {
      v = -range_mv;
      ++out.clipped;
    }
    out.mv.push_back(v);
  }
  return out;
}

Biquad Biquad::lowpass(double fc_hz, double sample_rate_hz) {
  const double w0 = 2.0 * std::numbers::pi * fc_hz / sample_rate_hz;
  const double c = std::cos(w0);
  const double alpha = std::sin(w0) / std::numbers::sqrt2;  // sin / (2Q)
  const double a0 = 1.0 + alpha;
  Biquad q;
  q.b0_ = (1.0 - c) / 2.0 / a0;
  q.b1_ = (1.0 - c) / a0;
  q.b2_ = q.b0_;
  q.a1_ = -2.0 * c / a0;
  q.a2_ = (1.0 - alpha) / a0;
  return q;
}

Biquad Biquad::highpass(double fc_hz, double sample_rate_hz) {
  const double w0 = 2.0 * std::numbers::pi * fc_hz / sample_rate_hz;
  const double c = std::cos(w0);
  const double alpha = std::sin(w0) / std::numbers::sqrt2;
  const double a0 = 1.0 + alpha;
  Biquad q;
  q.b0_ = (1.0 + c) / 2.0 / a0;
  q.b1_ = -(1.0 + c) / a0;
  q.b2_ = q.b0_;
  q.a1_ = -2.0 * c / a0;
  q.a2_ = (1.0 - alpha) / a0;
  return q;
}

std::vector<double> bandpass(std::span<const double> signal, double lo_hz, double hi_hz,
                             double sample_rate_hz) {
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < sample_rate_hz / 2.0)) {
    throw ConfigError("bandpass requires 0 < lo < hi < rate/2 (got " + format_real(lo_hz) +
                      ", " + format_real(hi_hz) + ", " + format_real(sample_rate_hz) + ")");
  }
  Biquad hp = Biquad::highpass(lo_hz, sample_rate_hz);
  Biquad lp = Biquad::lowpass(hi_hz, sample_rate_hz);
  std::vector<double> out;
  out.reserve(signal.size());
  for (double x : signal) out.push_back(lp.step(hp.step(x)));
  return out;
}

std::vector<double> add_input_noise(std::span<const double> signal_uv, double noise_rms_uv,
                                    std::uint64_t seed) {
  if (!(noise_rms_uv >= 0.0)) throw ConfigError("noise RMS must be non-negative");
  std::vector<double> out(signal_uv.begin(), signal_uv.end());
  if (noise_rms_uv == 0.0) return out;
  Rng rng(seed);
  for (double& x : out) x += noise_rms_uv * rng.normal();
  return out;
}

int adc_code(double v_mv, int bits, double range_mv) {
  const double lsb = 2.0 * range_mv / std::ldexp(1.0, bits);
  const long mid = 1L << (bits - 1);
  const long top = (1L << bits) - 1;
  const double steps = std::round(v_mv / lsb);
  if (steps >= static_cast<double>(top - mid)) return static_cast<int>(top);
  if (steps <= static_cast<double>(-mid)) return 0;
  return static_cast<int>(static_cast<long>(steps) + mid);
}

double adc_value(int code, int bits, double range_mv) {
  const double lsb = 2.0 * range_mv / std::ldexp(1.0, bits);
  return static_cast<double>(code - (1 << (bits - 1))) * lsb;
}

std::vector<int> adc_quantize(std::span<const double> signal_mv, int bits, double range_mv) {
  if (bits < 2 || bits > 16) throw ConfigError("ADC bits must lie in 2..16");
  std::vector<int> out;
  out.reserve(signal_mv.size());
  for (double v : signal_mv) out.push_back(adc_code(v, bits, range_mv));
  return out;
}

std::vector<double> adc_dequantize(std::span<const int> codes, int bits, double range_mv) {
  std::vector<double> out;
  out.reserve(codes.size());
  for (int c : codes) out.push_back(adc_value(c, bits, range_mv));
  return out;
}

Digitized front_end_pipeline(std::span<const double> signal_uv, const FrontEndConfig& cfg,
                             double sample_rate_hz, std::uint64_t seed) {
  cfg.validate(sample_rate_hz);
  const std::vector<double> noisy = add_input_noise(signal_uv, cfg.noise_rms_uv, seed);
  const std::vector<double> filtered =
      bandpass(noisy, cfg.band_lo_hz, cfg.band_hi_hz, sample_rate_hz);
  Amplified amp = amplify(filtered, cfg.gain, cfg.adc_range_mv);
  Digitized out;
  out.clipped = amp.clipped;
  out.codes = adc_quantize(amp.mv, cfg.adc_bits, cfg.adc_range_mv);
  out.uv.reserve(out.codes.size());
  for (int c : out.codes) {
    out.uv.push_back(adc_value(c, cfg.adc_bits, cfg.adc_range_mv) * 1000.0 / cfg.gain);
  }
  return out;
}

}  // namespace fogwear::frontend
