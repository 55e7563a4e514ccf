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

#ifndef COTTA_DATA_GLYPHS_HPP_
#define COTTA_DATA_GLYPHS_HPP_

#include <cstdint>
#include <vector>

#include "cotta/core/rng.hpp"
#include "cotta/core/tensor.hpp"

namespace cotta {

inline constexpr int kGlyphSize = 16;
inline constexpr int kMaxGlyphClasses = 10;

// Procedurally generated 16x16 grayscale glyphs in [0,1]: one parametric
// shape per class, rendered from signed distance fields with jittered
// center, scale, rotation, contrast and mild pixel noise.
struct GlyphDataset {
  Tensor<float> images;  // [N,1,16,16]
  std::vector<int> labels;
  int num_classes = 0;
  uint64_t seed = 0;

  int size() const { return static_cast<int>(labels.size()); }

  // View of item i as a fresh [1,16,16] tensor.
  Tensor<float> image(int i) const;
};

// Renders one glyph into out[256]. Consumes a fixed number of rng draws of
// geometry first, then one noise draw per pixel.
void render_glyph(int cls, Rng& rng, float* out, float pixel_noise);

// Class-balanced dataset (label = index mod num_classes), deterministic in
// the seed.
GlyphDataset make_glyph_dataset(int n, int num_classes, uint64_t seed,
                                float pixel_noise = 0.02f);

}  // namespace cotta

#endif  // COTTA_DATA_GLYPHS_HPP_
