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

// Behavioral model of the analog recording chain: input-referred noise,
// band limiting, programmable gain and a mid-tread SAR ADC.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fogwear::frontend {

struct FrontEndConfig {
  std::string name = "eeg";
  double gain = 200.0;
  double band_lo_hz = 0.5;
  double band_hi_hz = 60.0;
  double noise_rms_uv = 1.9;
  int adc_bits = 12;
  double adc_range_mv = 600.0;  // +/- range

  // EEG recording chain: gain 200, 0.5-60 Hz, 1.9 uV with chopping.
  static FrontEndConfig eeg();
  // EEG amplifier test setting: 0.5-200 Hz.
  static FrontEndConfig eeg_wide();
  // EMG recording chain: gain 50, 1 Hz-1 kHz, 4.3 uV without chopping.
  static FrontEndConfig emg();
  // Looks up one of the presets above by name; throws ConfigError.
  static FrontEndConfig preset(const std::string& name);

  // Throws ConfigError unless lo < hi < rate / 2 and the ADC is sane.
  void validate(double sample_rate_hz) const;

  // True when a peak-to-peak input swing of `input_pp_uv` would exceed the
  // ADC span after gain.
  bool clips(double input_pp_uv) const;

  double lsb_mv() const;
  // Half an LSB referred to the electrode, in microvolts.
  double input_referred_resolution_uv() const;
  // Largest input amplitude before the ADC rails, in microvolts.
  double input_range_uv() const;
};

struct Amplified {
  std::vector<double> mv;
  std::size_t clipped = 0;
};

// out = clamp(in_uv * gain / 1000, +/- range_mv).
Amplified amplify(std::span<const double> signal_uv, double gain, double range_mv = 600.0);

// Transposed direct-form II second-order section.
class Biquad {
 public:
  // Butterworth (Q = 1/sqrt(2)) sections, bilinear with prewarping at fc.
  static Biquad lowpass(double fc_hz, double sample_rate_hz);
  static Biquad highpass(double fc_hz, double sample_rate_hz);

  double step(double x) {
    const double y = b0_ * x + z1_;
    z1_ = b1_ * x - a1_ * y + z2_;
    z2_ = b2_ * x - a2_ * y;
    return y;
  }
  void reset() { z1_ = z2_ = 0.0; }

 private:
  double b0_ = 1, b1_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
  double z1_ = 0, z2_ = 0;
};

// High-pass at lo cascaded with low-pass at hi. Output length = input length.
std::vector<double> bandpass(std::span<const double> signal, double lo_hz, double hi_hz,
                             double sample_rate_hz);

// Adds white Gaussian noise of the given RMS; deterministic per seed.
std::vector<double> add_input_noise(std::span<const double> signal_uv, double noise_rms_uv,
                                    std::uint64_t seed);

// Mid-tread: code = clamp(round(v / lsb) + 2^(bits-1), 0, 2^bits - 1),
// lsb = 2 * range / 2^bits. Rounds half away from zero.
int adc_code(double v_mv, int bits = 12, double range_mv = 600.0);
double adc_value(int code, int bits = 12, double range_mv = 600.0);
std::vector<int> adc_quantize(std::span<const double> signal_mv, int bits = 12,
                              double range_mv = 600.0);
std::vector<double> adc_dequantize(std::span<const int> codes, int bits = 12,
                                   double range_mv = 600.0);

struct Digitized {
  std::vector<double> uv;   // input-referred reconstruction
  std::vector<int> codes;   // raw ADC codes
  std::size_t clipped = 0;  // samples clamped at the amplifier output
};

// noise -> bandpass -> amplify -> ADC -> dequantize -> divide by gain.
Digitized front_end_pipeline(std::span<const double> signal_uv, const FrontEndConfig& cfg,
                             double sample_rate_hz, std::uint64_t seed);

}  // namespace fogwear::frontend
