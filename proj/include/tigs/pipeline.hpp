#pragma once

#include <cstdint>
#include <vector>

#include "tigs/config.hpp"
#include "tigs/mask.hpp"
#include "tigs/screening.hpp"
#include "tigs/tensor.hpp"

namespace tigs {

struct StageTimings {
    std::uint64_t stage1_ns = 0;  // softmax + collapse screening
    std::uint64_t stage2_ns = 0;  // gates, shrinkage, content anchoring
    std::uint64_t stage3_ns = 0;  // full-row write-back
};

struct DefendedOutput {
    AttentionTensor attention_out;  // probabilities, post write-back
    ScreeningReport report;
    std::vector<double> hidden;  // row-major [rows x cols], toy mode only
    std::int64_t hidden_rows = 0;
    std::int64_t hidden_cols = 0;
    StageTimings timing;
    // Full-row softmax evaluations on defended layers. Screening, smoothing
    // and write-back all reuse that single evaluation.
    std::uint64_t softmax_evals = 0;
};

/// Row eligibility under the configured phase. prefill_len is the number of
/// leading prompt rows; rows at or past it count as decode.
bool apply_phase(const TigsConfig& cfg, std::int64_t row_index, std::int64_t prefill_len);

/// Full three-stage pass over a logits tensor: per defended layer, softmax
/// each row once, screen in the content domain, derive per-row strengths,
/// smooth content logits, and write the reconstructed rows back. Undefended
/// layers pass their softmax output through untouched. Deterministic.
/// prefill_len < 0 means every row is prefill.
DefendedOutput tigs_transform(const AttentionTensor& logits, const ContentMask& mask,
                              const TigsConfig& cfg, std::int64_t prefill_len = -1);

namespace detail {

struct PipelineCounters {
    std::uint64_t softmax_evals = 0;
};

/// Shared per-layer worker: logits and probs are [heads x queries x keys]
/// row-major buffers. Returns the layer's screening evidence with lambda
/// zeroed on phase-ineligible rows.
LayerScreen defend_layer(const double* logits, double* probs, std::int64_t heads,
                         std::int64_t queries, std::int64_t keys, bool causal,
                         const ContentMask& mask, const TigsConfig& cfg, std::int64_t prefill_len,
                         PipelineCounters& counters, StageTimings& timing);

}  // namespace detail

}  // namespace tigs
