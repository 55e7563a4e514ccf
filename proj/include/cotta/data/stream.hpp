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

#ifndef COTTA_DATA_STREAM_HPP_
#define COTTA_DATA_STREAM_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "cotta/data/corrupt.hpp"
#include "cotta/data/glyphs.hpp"

namespace cotta {

// One contiguous stretch of a target stream: a corruption kind with a
// severity schedule. num_batches must divide evenly over the schedule
// entries (constant schedule for abrupt shifts, a ramp for gradual ones).
// Severity 0 in a schedule means the clean, uncorrupted distribution.
struct SegmentSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  std::vector<int> severity_schedule;
  int num_batches = 0;
  int batch_size = 0;
};

// Declarative description of a continual target stream. With
// per_round_reseed (the default), every round presents bitwise-identical
// batches, so round-over-round deltas measure forgetting alone.
struct StreamSpec {
  std::vector<SegmentSpec> segments;
  int rounds = 1;
  uint64_t seed = 0;
  bool per_round_reseed = true;
  int num_classes = 8;
  float glyph_noise = 0.02f;

  int64_t total_batches() const;
  void validate() const;
};

// One constant-severity segment per kind, in the given order.
StreamSpec standard_sequence(const std::vector<CorruptionKind>& kinds,
                             int severity, int batches_per_kind, int batch_size,
                             uint64_t seed);

// Per kind, severity walks 1-2-3-4-5-4-3-2-1 with batches_per_step batches
// at each step; consecutive kinds therefore join at the lowest severity.
StreamSpec gradual_sequence(const std::vector<CorruptionKind>& kinds,
                            int batches_per_step, int batch_size, uint64_t seed);

struct SegmentMeta {
  int64_t step = 0;      // global batch index over the full stream
  int round = 0;         // 0-based
  int segment_index = 0; // within the round
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 0;
  bool segment_changed = false;  // true on the first batch of each segment
};

struct LabeledBatch {
  Tensor<float> images;  // [B,1,16,16]
  std::vector<int> labels;
  SegmentMeta meta;
};

// The label-free view that adaptation methods receive. Labels never cross
// this boundary; segment_changed is the domain-change oracle bit that only
// the reset TENT variant is allowed to use.
struct AdaptInput {
  const Tensor<float>& images;
  bool segment_changed = false;
};

class StreamIterator {
 public:
  explicit StreamIterator(StreamSpec spec);

  std::optional<LabeledBatch> next();
  int64_t total_batches() const { return spec_.total_batches(); }
  const StreamSpec& spec() const { return spec_; }

 private:
  StreamSpec spec_;
  int round_ = 0;
  size_t segment_ = 0;
  int batch_in_segment_ = 0;
  int64_t step_ = 0;
};

// Materializes one batch of a stream; pure in (spec, round, segment, batch).
LabeledBatch make_stream_batch(const StreamSpec& spec, int round, int segment,
                               int batch_in_segment);

}  // namespace cotta

#endif  // COTTA_DATA_STREAM_HPP_
