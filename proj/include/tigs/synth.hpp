#pragma once

#include <cstdint>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "tigs/mask.hpp"
#include "tigs/tensor.hpp"
#include "tigs/toy_model.hpp"

namespace tigs {

/// Parameters of a constructed trigger-collapse instance.
struct SynthSpec {
    std::int64_t seq_len = 32;
    double delta = 8.0;  // trigger logit gap
    std::int64_t trigger_index = 1;
    double noise_scale = 0.0;
    std::int64_t n_collapsed_heads = 1;
    bool structural_sink = false;  // benign heads concentrate on masked token 0
    std::uint64_t seed = 0;
};

/// Sink logit advantage given to token 0 in benign heads when
/// structural_sink is set.
constexpr double kSinkGap = 12.0;

struct SuiteLabels {
    std::vector<std::pair<std::int64_t, std::int64_t>> triggered;  // (layer, head)
};

/// Logits where the trigger beats the runner-up by exactly delta: non-trigger
/// entries are seeded noise in [-noise_scale, 0] with the maximum pinned to 0,
/// so the gap is an equality rather than a lower bound.
std::vector<double> make_collapsed_row(const SynthSpec& spec);

/// (n-1) * exp(-delta) * (delta+1), valid in the trigger-dominant regime
/// delta >= 1; smaller deltas throw DomainError.
double entropy_bound(std::int64_t n, double delta);

/// Non-causal logits tensor of benign plus triggered heads. Exactly
/// `triggered_heads` (layer, head) slots carry collapsed rows at the
/// trigger position; the rest are near-uniform over content, optionally
/// with a structural sink on masked token 0. The mask marks token 0 as
/// non-content and everything else as content.
std::tuple<AttentionTensor, ContentMask, SuiteLabels> make_attention_suite(
    std::int64_t benign_heads, std::int64_t triggered_heads, const SynthSpec& spec,
    std::int64_t layers);

/// Copy of the model whose (layer, head) key projection gets a rank-one
/// update such that, on the reference embeddings, the trigger token's
/// attention logit beats the runner-up by at least delta in every row that
/// can see it. delta = 0 returns the model unchanged.
ToyModel implant_trigger_weights(const ToyModel& model, std::int64_t layer, std::int64_t head,
                                 std::int64_t trigger_index, double delta,
                                 std::int64_t seq_len = kReferenceSeqLen);

/// max(scores) / (mean(scores) + epsilon).
double dispersion_penalty(std::span<const double> collapse_scores, double epsilon);

/// Splits the dominance budget evenly: `heads` heads each carry gap
/// total_gap / heads at the trigger position, inside a tensor of
/// max(8, heads) heads total.
std::pair<AttentionTensor, ContentMask> make_distributed_suite(double total_gap,
                                                               std::int64_t heads,
                                                               const SynthSpec& spec);

}  // namespace tigs
