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

#include "cotta/data/glyphs.hpp"

#include <algorithm>
#include <cmath>

#include "cotta/core/error.hpp"

namespace cotta {

namespace {

constexpr int kN = kGlyphSize;

struct Frame {
  float cx, cy;     // jittered center
  float scale;      // geometry scale
  float rot;        // rotation in radians
  float fg, bg;     // foreground / background intensity
};

inline float bar_sdf(float x, float y, float half_len, float half_w) {
  const float dx = std::fabs(x) - half_len;
  const float dy = std::fabs(y) - half_w;
  const float ox = std::max(dx, 0.0f), oy = std::max(dy, 0.0f);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0f);
}

// Signed distance to the class shape at centered coordinates (x, y); the
// shape interior is negative. Shapes are sized for a 16x16 canvas.
float shape_sdf(int cls, float x, float y) {
  switch (cls) {
    case 0: {  // filled disk
      return std::sqrt(x * x + y * y) - 4.4f;
    }
    case 1: {  // ring
      return std::fabs(std::sqrt(x * x + y * y) - 4.4f) - 1.4f;
    }
    case 2: {  // filled square
      return std::max(std::fabs(x), std::fabs(y)) - 3.9f;
    }
    case 3: {  // square outline
      return std::fabs(std::max(std::fabs(x), std::fabs(y)) - 4.1f) - 1.2f;
    }
    case 4: {  // plus
      return std::min(bar_sdf(x, y, 5.0f, 1.3f), bar_sdf(y, x, 5.0f, 1.3f));
    }
    case 5: {  // diagonal cross
      const float c = 0.70710678f;
      const float u = c * (x + y), v = c * (x - y);
      return std::min(bar_sdf(u, v, 5.6f, 1.3f), bar_sdf(v, u, 5.6f, 1.3f));
    }
    case 6: {  // two horizontal bars
      return std::min(bar_sdf(x, y - 2.8f, 4.9f, 1.1f),
                      bar_sdf(x, y + 2.8f, 4.9f, 1.1f));
    }
    case 7: {  // two vertical bars
      return std::min(bar_sdf(x - 2.8f, y, 1.1f, 4.9f),
                      bar_sdf(x + 2.8f, y, 1.1f, 4.9f));
    }
    case 8: {  // filled triangle, apex up
      const float r = 5.2f;
      const float d1 = -y - r * 0.5f;                        // below base
      const float d2 = 0.866f * x + 0.5f * y - r * 0.5f;     // right edge
      const float d3 = -0.866f * x + 0.5f * y - r * 0.5f;    // left edge
      return std::max(std::max(-d1, d2), d3);
    }
    default: {  // single thick diagonal bar
      const float c = 0.70710678f;
      const float u = c * (x + y), v = c * (x - y);
      return bar_sdf(u, v, 6.0f, 1.6f);
    }
  }
}

}  // namespace

void render_glyph(int cls, Rng& rng, float* out, float pixel_noise) {
  if (cls < 0 || cls >= kMaxGlyphClasses) {
    throw ContractError("render_glyph: class out of range: " + std::to_string(cls));
  }
  Frame f;
  f.cx = static_cast<float>(rng.uniform(-1.5, 1.5));
  f.cy = static_cast<float>(rng.uniform(-1.5, 1.5));
  f.scale = static_cast<float>(rng.uniform(0.85, 1.15));
  f.rot = static_cast<float>(rng.uniform(-0.18, 0.18));
  f.fg = static_cast<float>(rng.uniform(0.75, 1.0));
  f.bg = static_cast<float>(rng.uniform(0.0, 0.15));

  const float cr = std::cos(f.rot), sr = std::sin(f.rot);
  const float mid = (kN - 1) * 0.5f;
  const float edge = 1.1f;  // soft edge width in pixels

  for (int y = 0; y < kN; ++y) {
    for (int x = 0; x < kN; ++x) {
      const float px = (static_cast<float>(x) - mid - f.cx) / f.scale;
      const float py = (static_cast<float>(y) - mid - f.cy) / f.scale;
      const float rx = cr * px + sr * py;
      const float ry = -sr * px + cr * py;
      const float sd = shape_sdf(cls, rx, ry) * f.scale;
      const float cov = std::clamp(0.5f - sd / edge, 0.0f, 1.0f);
      out[y * kN + x] = f.bg + (f.fg - f.bg) * cov;
    }
  }
  if (pixel_noise > 0.0f) {
    for (int i = 0; i < kN * kN; ++i) {
      out[i] = std::clamp(
          out[i] + static_cast<float>(rng.normal(0.0, pixel_noise)), 0.0f, 1.0f);
    }
  } else {
    for (int i = 0; i < kN * kN; ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
  }
}

GlyphDataset make_glyph_dataset(int n, int num_classes, uint64_t seed,
                                float pixel_noise) {
  if (n < 1) throw ConfigError("make_glyph_dataset: empty dataset requested");
  if (num_classes < 2 || num_classes > kMaxGlyphClasses) {
    throw ConfigError("make_glyph_dataset: num_classes must be in [2," +
                      std::to_string(kMaxGlyphClasses) + "], got " +
                      std::to_string(num_classes));
  }
  GlyphDataset ds;
  ds.num_classes = num_classes;
  ds.seed = seed;
  ds.labels.resize(static_cast<size_t>(n));
  ArrayX<float> data(static_cast<int64_t>(n) * kN * kN);
  for (int i = 0; i < n; ++i) {
    const int cls = i % num_classes;
    ds.labels[static_cast<size_t>(i)] = cls;
    Rng rng(mix_seed(seed, 0x676c797068ULL, static_cast<uint64_t>(i)));
    render_glyph(cls, rng, data.data() + static_cast<int64_t>(i) * kN * kN,
                 pixel_noise);
  }
  ds.images = Tensor<float>({n, 1, kN, kN}, std::move(data));
  return ds;
}

Tensor<float> GlyphDataset::image(int i) const {
  ArrayX<float> a(kN * kN);
  const float* src = images.data() + static_cast<int64_t>(i) * kN * kN;
  for (int k = 0; k < kN * kN; ++k) a[k] = src[k];
  return Tensor<float>({1, kN, kN}, std::move(a));
}

}  // namespace cotta
