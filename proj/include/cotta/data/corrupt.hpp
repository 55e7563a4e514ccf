// Copyright (c) the cotta project authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COTTA_DATA_CORRUPT_HPP_
#define COTTA_DATA_CORRUPT_HPP_

#include <array>
#include <string>

#include "cotta/core/rng.hpp"
#include "cotta/core/tensor.hpp"

namespace cotta {

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  DefocusBlur,
  GlassBlur,
  MotionBlur,
  Contrast,
  Brightness,
  Fog,
  Pixelate,
};

inline constexpr int kNumCorruptionKinds = 10;

const std::array<CorruptionKind, kNumCorruptionKinds>& all_corruption_kinds();
std::string to_string(CorruptionKind kind);
CorruptionKind corruption_kind_from_string(const std::string& name);

// Severity parameter tables, indexed 0..5. Index 0 is the neutral
// (identity) extrapolation; severities 1..5 are monotone in distortion
// strength (validated by Monte-Carlo MSE ordering in the test suite).
struct SeverityTables {
  static float gaussian_sigma(int s);
  static float shot_rate(int s);  // photon count scale; 0 means identity
  static float impulse_fraction(int s);
  static float defocus_radius(int s);
  static int glass_displacement(int s);
  static int glass_iterations(int s);
  static int motion_length(int s);
  static float contrast_factor(int s);
  static float brightness_delta(int s);
  static float fog_amount(int s);
  static int pixelate_factor(int s);
};

// Applies `kind` at `severity` in {1..5} to a [1,H,W] image with values in
// [0,1]; the result is clipped back to [0,1]. Severity outside 1..5 is a
// ConfigError.
Tensor<float> corrupt(const Tensor<float>& img, CorruptionKind kind,
                      int severity, Rng& rng);

}  // namespace cotta

#endif  // COTTA_DATA_CORRUPT_HPP_
