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

#include "cotta/data/stream.hpp"

#include <algorithm>

#include "cotta/core/error.hpp"

namespace cotta {

namespace {

constexpr uint64_t kLabelStream = 0x6c61626572ULL;
constexpr uint64_t kImageStream = 0x696d616765ULL;

uint64_t round_seed(const StreamSpec& spec, int round) {
  return spec.per_round_reseed
             ? spec.seed
             : mix_seed(spec.seed, 0x726f756e64ULL, static_cast<uint64_t>(round));
}

}  // namespace

int64_t StreamSpec::total_batches() const {
  int64_t per_round = 0;
  for (const auto& seg : segments) per_round += seg.num_batches;
  return per_round * rounds;
}

void StreamSpec::validate() const {
  if (segments.empty()) throw ConfigError("stream: no segments");
  if (rounds < 1) throw ConfigError("stream: rounds must be >= 1");
  if (num_classes < 2 || num_classes > kMaxGlyphClasses) {
    throw ConfigError("stream: num_classes must be in [2," +
                      std::to_string(kMaxGlyphClasses) + "]");
  }
  for (const auto& seg : segments) {
    if (seg.num_batches < 1) throw ConfigError("stream: segment needs >= 1 batch");
    if (seg.batch_size < 1) throw ConfigError("stream: batch_size must be >= 1");
    if (seg.severity_schedule.empty()) {
      throw ConfigError("stream: empty severity schedule");
    }
    if (seg.num_batches % static_cast<int>(seg.severity_schedule.size()) != 0) {
      throw ConfigError(
          "stream: num_batches (" + std::to_string(seg.num_batches) +
          ") must divide evenly over the severity schedule of length " +
          std::to_string(seg.severity_schedule.size()));
    }
    for (int s : seg.severity_schedule) {
      if (s < 0 || s > 5) {
        throw ConfigError("stream: severity must be in 0..5, got " +
                          std::to_string(s));
      }
    }
  }
}

StreamSpec standard_sequence(const std::vector<CorruptionKind>& kinds,
                             int severity, int batches_per_kind, int batch_size,
                             uint64_t seed) {
  if (kinds.empty()) throw ConfigError("standard_sequence: no corruption kinds");
  StreamSpec spec;
  spec.seed = seed;
  for (CorruptionKind k : kinds) {
    spec.segments.push_back(SegmentSpec{k, {severity}, batches_per_kind, batch_size});
  }
  spec.validate();
  return spec;
}

StreamSpec gradual_sequence(const std::vector<CorruptionKind>& kinds,
                            int batches_per_step, int batch_size,
                            uint64_t seed) {
  if (kinds.empty()) throw ConfigError("gradual_sequence: no corruption kinds");
  const std::vector<int> walk = {1, 2, 3, 4, 5, 4, 3, 2, 1};
  StreamSpec spec;
  spec.seed = seed;
  for (CorruptionKind k : kinds) {
    spec.segments.push_back(SegmentSpec{
        k, walk, static_cast<int>(walk.size()) * batches_per_step, batch_size});
  }
  spec.validate();
  return spec;
}

LabeledBatch make_stream_batch(const StreamSpec& spec, int round, int segment,
                               int batch_in_segment) {
  const SegmentSpec& seg = spec.segments[static_cast<size_t>(segment)];
  const int B = seg.batch_size;
  const int steps = static_cast<int>(seg.severity_schedule.size());
  const int batches_per_step = seg.num_batches / steps;
  const int severity =
      seg.severity_schedule[static_cast<size_t>(batch_in_segment / batches_per_step)];
  const uint64_t rseed = round_seed(spec, round);

  LabeledBatch out;
  out.meta.round = round;
  out.meta.segment_index = segment;
  out.meta.kind = seg.kind;
  out.meta.severity = severity;
  out.meta.segment_changed = (batch_in_segment == 0);

  // Balanced labels, shuffled with a batch-local stream.
  out.labels.resize(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) out.labels[static_cast<size_t>(i)] = i % spec.num_classes;
  {
    Rng lrng(mix_seed(rseed, kLabelStream, static_cast<uint64_t>(segment),
                      static_cast<uint64_t>(batch_in_segment)));
    for (int i = B - 1; i > 0; --i) {
      std::swap(out.labels[static_cast<size_t>(i)],
                out.labels[static_cast<size_t>(lrng.uniform_int(0, i))]);
    }
  }

  ArrayX<float> data(static_cast<int64_t>(B) * kGlyphSize * kGlyphSize);
  for (int i = 0; i < B; ++i) {
    const uint64_t iseed =
        mix_seed(mix_seed(rseed, kImageStream, static_cast<uint64_t>(segment)),
                 static_cast<uint64_t>(batch_in_segment), static_cast<uint64_t>(i));
    Rng rng(iseed);
    Tensor<float> img = Tensor<float>::zeros({1, kGlyphSize, kGlyphSize});
    render_glyph(out.labels[static_cast<size_t>(i)], rng, img.data(),
                 spec.glyph_noise);
    if (severity >= 1) img = corrupt(img, seg.kind, severity, rng);
    const float* src = img.data();
    float* dst = data.data() + static_cast<int64_t>(i) * kGlyphSize * kGlyphSize;
    std::copy(src, src + kGlyphSize * kGlyphSize, dst);
  }
  out.images = Tensor<float>({B, 1, kGlyphSize, kGlyphSize}, std::move(data));
  return out;
}

StreamIterator::StreamIterator(StreamSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

std::optional<LabeledBatch> StreamIterator::next() {
  if (round_ >= spec_.rounds) return std::nullopt;
  LabeledBatch batch = make_stream_batch(spec_, round_, static_cast<int>(segment_),
                                         batch_in_segment_);
  batch.meta.step = step_++;
  ++batch_in_segment_;
  if (batch_in_segment_ >= spec_.segments[segment_].num_batches) {
    batch_in_segment_ = 0;
    ++segment_;
    if (segment_ >= spec_.segments.size()) {
      segment_ = 0;
      ++round_;
    }
  }
  return batch;
}

}  // namespace cotta
