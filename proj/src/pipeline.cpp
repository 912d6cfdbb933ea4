#include "tigs/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "tigs/errors.hpp"
#include "tigs/smoothing.hpp"
#include "tigs/writeback.hpp"

namespace tigs {

namespace {

std::uint64_t now_ns() {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                          std::chrono::steady_clock::now().time_since_epoch())
                                          .count());
}

}  // namespace

bool apply_phase(const TigsConfig& cfg, std::int64_t row_index, std::int64_t prefill_len) {
    switch (cfg.phase) {
        case Phase::PrefillOnly: return row_index < prefill_len;
        case Phase::DecodeOnly: return row_index >= prefill_len;
        case Phase::Full: return true;
    }
    return true;
}

namespace detail {

LayerScreen defend_layer(const double* logits, double* probs, std::int64_t heads,
                         std::int64_t queries, std::int64_t keys, bool causal,
                         const ContentMask& mask, const TigsConfig& cfg, std::int64_t prefill_len,
                         PipelineCounters& counters, StageTimings& timing) {
    const std::size_t row_len = static_cast<std::size_t>(keys);
    const std::size_t layer_len = static_cast<std::size_t>(heads * queries) * row_len;

    // Stage 1: one softmax per row, then content-domain screening.
    std::uint64_t t0 = now_ns();
    AttentionTensor layer = make_tensor(1, heads, queries, keys, TensorKind::Probabilities, causal);
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < queries; ++i) {
            std::size_t off = static_cast<std::size_t>(h * queries + i) * row_len;
            softmax_row({logits + off, row_len}, layer.row(0, h, i));
            ++counters.softmax_evals;
        }
    }
    ScreeningReport screened = screen_tensor(layer, mask, cfg);
    LayerScreen result = std::move(screened.layer_stats[0]);
    std::uint64_t t1 = now_ns();
    timing.stage1_ns += t1 - t0;

    // Regions mirror the ones screening used.
    std::vector<std::vector<std::int64_t>> regions(static_cast<std::size_t>(queries));
    std::vector<std::int64_t> full_region;
    if (!causal && keys > 0) full_region = content_region(mask, 0, false);
    for (std::int64_t i = 0; i < queries; ++i) {
        auto& reg = regions[static_cast<std::size_t>(i)];
        reg = causal ? content_region(mask, i, true) : full_region;
        if (cfg.exclude_self) reg.erase(std::remove(reg.begin(), reg.end(), i), reg.end());
    }

    // Stage 2: shrinkage pair and content anchoring per eligible row.
    struct RowPlan {
        std::vector<double> q;
        double alpha_r = 1.0;
    };
    std::vector<RowPlan> plans(static_cast<std::size_t>(heads * queries));
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < queries; ++i) {
            RowScreen& rs = result.heads[static_cast<std::size_t>(h)].rows[static_cast<std::size_t>(i)];
            if (!apply_phase(cfg, i, prefill_len)) {
                rs.lambda = 0.0;
                continue;
            }
            if (rs.content_size == 0 || rs.lambda == 0.0) continue;
            const auto& region = regions[static_cast<std::size_t>(i)];
            ShrinkPair alphas = shrink_factors(rs.lambda, cfg.gamma_c, cfg.gamma_r);
            std::vector<double> content_logits;
            content_logits.reserve(region.size());
            std::size_t off = static_cast<std::size_t>(h * queries + i) * row_len;
            for (auto j : region) content_logits.push_back(logits[off + static_cast<std::size_t>(j)]);
            RowPlan& plan = plans[static_cast<std::size_t>(h * queries + i)];
            plan.q = anchor_smooth_logits(content_logits, alphas.alpha_c);
            plan.alpha_r = alphas.alpha_r;
        }
    }
    std::uint64_t t2 = now_ns();
    timing.stage2_ns += t2 - t1;

    // Stage 3: controlled write-back of the planned rows.
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < queries; ++i) {
            RowPlan& plan = plans[static_cast<std::size_t>(h * queries + i)];
            if (plan.q.empty()) continue;
            const auto& region = regions[static_cast<std::size_t>(i)];
            auto row = layer.row(0, h, i);
            RowRewrite rw = write_back(row, plan.q, region, plan.alpha_r);
            std::copy(rw.row_out.begin(), rw.row_out.end(), row.begin());
        }
    }
    std::memcpy(probs, layer.data.data(), layer_len * sizeof(double));
    timing.stage3_ns += now_ns() - t2;
    return result;
}

}  // namespace detail

DefendedOutput tigs_transform(const AttentionTensor& logits, const ContentMask& mask,
                              const TigsConfig& cfg, std::int64_t prefill_len) {
    if (logits.kind != TensorKind::Logits) {
        throw ValueError("tigs_transform expects a logits tensor");
    }
    if (mask.size() != logits.keys) {
        throw ShapeError("mask length does not match key extent");
    }
    if (logits.data.size() != static_cast<std::size_t>(logits.size())) {
        throw ShapeError("tensor data length does not match shape");
    }
    cfg.validate();
    if (prefill_len < 0) prefill_len = logits.queries;
    if (prefill_len > logits.queries) {
        throw ShapeError("prefill_len exceeds query extent");
    }

    DefendedOutput out;
    out.attention_out = make_tensor(logits.layers, logits.heads, logits.queries, logits.keys,
                                    TensorKind::Probabilities, logits.causal);
    out.report.layer_stats.resize(static_cast<std::size_t>(logits.layers));

    detail::PipelineCounters counters;
    const std::size_t layer_len =
        static_cast<std::size_t>(logits.heads * logits.queries * logits.keys);
    for (std::int64_t l = 0; l < logits.layers; ++l) {
        const double* in = logits.data.data() + static_cast<std::size_t>(l) * layer_len;
        double* probs = out.attention_out.data.data() + static_cast<std::size_t>(l) * layer_len;
        LayerScreen& layer_out = out.report.layer_stats[static_cast<std::size_t>(l)];
        if (cfg.defends_layer(l)) {
            layer_out = detail::defend_layer(in, probs, logits.heads, logits.queries, logits.keys,
                                             logits.causal, mask, cfg, prefill_len, counters,
                                             out.timing);
        } else {
            // Pass-through: plain softmax, no screening evidence recorded.
            for (std::int64_t h = 0; h < logits.heads; ++h) {
                for (std::int64_t i = 0; i < logits.queries; ++i) {
                    std::size_t off = static_cast<std::size_t>(h * logits.queries + i) *
                                      static_cast<std::size_t>(logits.keys);
                    softmax_row({in + off, static_cast<std::size_t>(logits.keys)},
                                {probs + off, static_cast<std::size_t>(logits.keys)});
                }
            }
            layer_out.heads.assign(static_cast<std::size_t>(logits.heads), HeadScreen{});
            for (auto& head : layer_out.heads) {
                head.rows.assign(static_cast<std::size_t>(logits.queries), RowScreen{});
            }
        }
    }
    out.softmax_evals = counters.softmax_evals;
    return out;
}

}  // namespace tigs
