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

#include "cotta/data/corrupt.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cotta/core/error.hpp"

namespace cotta {

namespace {

constexpr float kGaussianSigma[6] = {0.0f, 0.04f, 0.08f, 0.12f, 0.18f, 0.26f};
constexpr float kShotRate[6] = {0.0f, 60.0f, 25.0f, 12.0f, 5.0f, 3.0f};
constexpr float kImpulseFraction[6] = {0.0f, 0.02f, 0.04f, 0.07f, 0.11f, 0.17f};
constexpr float kDefocusRadius[6] = {0.0f, 1.0f, 1.5f, 2.0f, 2.6f, 3.2f};
constexpr int kGlassDisplacement[6] = {0, 1, 1, 2, 2, 3};
constexpr int kGlassIterations[6] = {0, 1, 2, 2, 3, 3};
constexpr int kMotionLength[6] = {1, 3, 5, 7, 9, 11};
constexpr float kContrastFactor[6] = {1.0f, 0.65f, 0.5f, 0.38f, 0.26f, 0.14f};
constexpr float kBrightnessDelta[6] = {0.0f, 0.1f, 0.18f, 0.28f, 0.4f, 0.55f};
constexpr float kFogAmount[6] = {0.0f, 0.15f, 0.25f, 0.35f, 0.47f, 0.6f};
constexpr int kPixelateFactor[6] = {1, 2, 2, 4, 4, 8};

int check_table_index(int s) {
  if (s < 0 || s > 5) {
    throw ConfigError("severity table index out of range: " + std::to_string(s));
  }
  return s;
}

inline float clip01(float v) { return std::clamp(v, 0.0f, 1.0f); }

inline float at_clamped(const float* img, int h, int w, int y, int x) {
  y = std::clamp(y, 0, h - 1);
  x = std::clamp(x, 0, w - 1);
  return img[y * w + x];
}

float sample_bilinear(const float* img, int h, int w, float fy, float fx) {
  const int y0 = static_cast<int>(std::floor(fy));
  const int x0 = static_cast<int>(std::floor(fx));
  const float ay = fy - static_cast<float>(y0);
  const float ax = fx - static_cast<float>(x0);
  const float v00 = at_clamped(img, h, w, y0, x0);
  const float v01 = at_clamped(img, h, w, y0, x0 + 1);
  const float v10 = at_clamped(img, h, w, y0 + 1, x0);
  const float v11 = at_clamped(img, h, w, y0 + 1, x0 + 1);
  return (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
}

void convolve_clamped(const float* src, float* dst, int h, int w,
                      const std::vector<float>& kernel, int kh, int kw) {
  const int cy = kh / 2, cx = kw / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          acc += kernel[static_cast<size_t>(ky * kw + kx)] *
                 at_clamped(src, h, w, y + ky - cy, x + kx - cx);
      dst[y * w + x] = acc;
    }
  }
}

void apply_gaussian_noise(float* v, int n, float sigma, Rng& rng) {
  for (int i = 0; i < n; ++i)
    v[i] = clip01(v[i] + sigma * static_cast<float>(rng.normal()));
}

void apply_shot_noise(float* v, int n, float rate, Rng& rng) {
  for (int i = 0; i < n; ++i) {
    const int k = rng.poisson(static_cast<double>(v[i]) * rate);
    v[i] = clip01(static_cast<float>(k) / rate);
  }
}

void apply_impulse_noise(float* v, int n, float fraction, Rng& rng) {
  for (int i = 0; i < n; ++i) {
    if (rng.bernoulli(fraction)) v[i] = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  }
}

void apply_defocus(float* v, int h, int w, float radius) {
  const int half = static_cast<int>(std::ceil(radius));
  const int k = 2 * half + 1;
  std::vector<float> kernel(static_cast<size_t>(k * k));
  float total = 0.0f;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const float dy = static_cast<float>(y - half);
      const float dx = static_cast<float>(x - half);
      const float d = std::sqrt(dy * dy + dx * dx);
      const float wgt = std::clamp(radius - d + 0.5f, 0.0f, 1.0f);
      kernel[static_cast<size_t>(y * k + x)] = wgt;
      total += wgt;
    }
  for (auto& wgt : kernel) wgt /= total;
  std::vector<float> out(static_cast<size_t>(h * w));
  convolve_clamped(v, out.data(), h, w, kernel, k, k);
  for (int i = 0; i < h * w; ++i) v[i] = clip01(out[i]);
}

void apply_glass(float* v, int h, int w, int disp, int iters, Rng& rng) {
  for (int it = 0; it < iters; ++it) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int dy = rng.uniform_int(-disp, disp);
        const int dx = rng.uniform_int(-disp, disp);
        const int sy = std::clamp(y + dy, 0, h - 1);
        const int sx = std::clamp(x + dx, 0, w - 1);
        std::swap(v[y * w + x], v[sy * w + sx]);
      }
    }
  }
  const std::vector<float> box(9, 1.0f / 9.0f);
  std::vector<float> out(static_cast<size_t>(h * w));
  convolve_clamped(v, out.data(), h, w, box, 3, 3);
  for (int i = 0; i < h * w; ++i) v[i] = clip01(out[i]);
}

void apply_motion(float* v, int h, int w, int length, Rng& rng) {
  const double theta = rng.uniform(0.0, M_PI);
  const float cy = static_cast<float>(std::sin(theta));
  const float cx = static_cast<float>(std::cos(theta));
  std::vector<float> out(static_cast<size_t>(h * w));
  const float mid = static_cast<float>(length - 1) * 0.5f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int t = 0; t < length; ++t) {
        const float off = static_cast<float>(t) - mid;
        acc += sample_bilinear(v, h, w, static_cast<float>(y) + off * cy,
                               static_cast<float>(x) + off * cx);
      }
      out[y * w + x] = acc / static_cast<float>(length);
    }
  }
  for (int i = 0; i < h * w; ++i) v[i] = clip01(out[i]);
}

void apply_contrast(float* v, int n, float factor) {
  float m = 0.0f;
  for (int i = 0; i < n; ++i) m += v[i];
  m /= static_cast<float>(n);
  for (int i = 0; i < n; ++i) v[i] = clip01(m + (v[i] - m) * factor);
}

void apply_brightness(float* v, int n, float delta) {
  for (int i = 0; i < n; ++i) v[i] = clip01(v[i] + delta);
}

void apply_fog(float* v, int h, int w, float amount, Rng& rng) {
  // Two random low-frequency plane waves give a smooth haze field in [0,1].
  const float fy1 = static_cast<float>(rng.uniform(0.5, 1.5));
  const float fx1 = static_cast<float>(rng.uniform(0.5, 1.5));
  const float ph1 = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
  const float fy2 = static_cast<float>(rng.uniform(0.5, 1.5));
  const float fx2 = static_cast<float>(rng.uniform(0.5, 1.5));
  const float ph2 = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
  const float tau = static_cast<float>(2.0 * M_PI);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float u = static_cast<float>(x) / static_cast<float>(w);
      const float t = static_cast<float>(y) / static_cast<float>(h);
      const float haze = 0.5f + 0.25f * std::sin(tau * (fx1 * u + fy1 * t) + ph1) +
                         0.25f * std::sin(tau * (fx2 * u + fy2 * t) + ph2);
      v[y * w + x] = clip01(v[y * w + x] + amount * haze);
    }
  }
}

void apply_pixelate(float* v, int h, int w, int factor) {
  if (factor <= 1) return;
  const int bh = h / factor, bw = w / factor;
  std::vector<float> small(static_cast<size_t>(bh * bw), 0.0f);
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      float acc = 0.0f;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          acc += v[(y * factor + dy) * w + (x * factor + dx)];
      small[static_cast<size_t>(y * bw + x)] =
          acc / static_cast<float>(factor * factor);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      v[y * w + x] = clip01(small[static_cast<size_t>((y / factor) * bw + x / factor)]);
}

}  // namespace

const std::array<CorruptionKind, kNumCorruptionKinds>& all_corruption_kinds() {
  static const std::array<CorruptionKind, kNumCorruptionKinds> kinds = {
      CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise,
      CorruptionKind::ImpulseNoise,  CorruptionKind::DefocusBlur,
      CorruptionKind::GlassBlur,     CorruptionKind::MotionBlur,
      CorruptionKind::Contrast,      CorruptionKind::Brightness,
      CorruptionKind::Fog,           CorruptionKind::Pixelate,
  };
  return kinds;
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::ShotNoise: return "shot_noise";
    case CorruptionKind::ImpulseNoise: return "impulse_noise";
    case CorruptionKind::DefocusBlur: return "defocus_blur";
    case CorruptionKind::GlassBlur: return "glass_blur";
    case CorruptionKind::MotionBlur: return "motion_blur";
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::Fog: return "fog";
    case CorruptionKind::Pixelate: return "pixelate";
  }
  return "unknown";
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
  for (CorruptionKind k : all_corruption_kinds()) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown corruption kind: '" + name + "'");
}

float SeverityTables::gaussian_sigma(int s) { return kGaussianSigma[check_table_index(s)]; }
float SeverityTables::shot_rate(int s) { return kShotRate[check_table_index(s)]; }
float SeverityTables::impulse_fraction(int s) { return kImpulseFraction[check_table_index(s)]; }
float SeverityTables::defocus_radius(int s) { return kDefocusRadius[check_table_index(s)]; }
int SeverityTables::glass_displacement(int s) { return kGlassDisplacement[check_table_index(s)]; }
int SeverityTables::glass_iterations(int s) { return kGlassIterations[check_table_index(s)]; }
int SeverityTables::motion_length(int s) { return kMotionLength[check_table_index(s)]; }
float SeverityTables::contrast_factor(int s) { return kContrastFactor[check_table_index(s)]; }
float SeverityTables::brightness_delta(int s) { return kBrightnessDelta[check_table_index(s)]; }
float SeverityTables::fog_amount(int s) { return kFogAmount[check_table_index(s)]; }
int SeverityTables::pixelate_factor(int s) { return kPixelateFactor[check_table_index(s)]; }

Tensor<float> corrupt(const Tensor<float>& img, CorruptionKind kind,
                      int severity, Rng& rng) {
  if (img.ndim() != 3 || img.dim(0) != 1) {
    throw ShapeError("corrupt: expected [1,H,W] image, got " +
                     shape_to_string(img.shape()));
  }
  if (severity < 1 || severity > 5) {
    throw ConfigError("corrupt: severity must be in 1..5, got " +
                      std::to_string(severity));
  }
  const int h = img.dim(1), w = img.dim(2);
  Tensor<float> out = img.detach();
  float* v = out.data();
  const int n = h * w;
  switch (kind) {
    case CorruptionKind::GaussianNoise:
      apply_gaussian_noise(v, n, kGaussianSigma[severity], rng);
      break;
    case CorruptionKind::ShotNoise:
      apply_shot_noise(v, n, kShotRate[severity], rng);
      break;
    case CorruptionKind::ImpulseNoise:
      apply_impulse_noise(v, n, kImpulseFraction[severity], rng);
      break;
    case CorruptionKind::DefocusBlur:
      apply_defocus(v, h, w, kDefocusRadius[severity]);
      break;
    case CorruptionKind::GlassBlur:
      apply_glass(v, h, w, kGlassDisplacement[severity],
                  kGlassIterations[severity], rng);
      break;
    case CorruptionKind::MotionBlur:
      apply_motion(v, h, w, kMotionLength[severity], rng);
      break;
    case CorruptionKind::Contrast:
      apply_contrast(v, n, kContrastFactor[severity]);
      break;
    case CorruptionKind::Brightness:
      apply_brightness(v, n, kBrightnessDelta[severity]);
      break;
    case CorruptionKind::Fog:
      apply_fog(v, h, w, kFogAmount[severity], rng);
      break;
    case CorruptionKind::Pixelate:
      apply_pixelate(v, h, w, kPixelateFactor[severity]);
      break;
  }
  return out;
}

}  // namespace cotta
