#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tigs/errors.hpp"
#include "tigs/pipeline.hpp"
#include "tigs/screening.hpp"
#include "tigs/synth.hpp"
#include "tigs/tensor.hpp"
#include "tigs/toy_model.hpp"
#include "test_util.hpp"

using namespace tigs;

namespace {

double max_row_tv(const AttentionTensor& a, const AttentionTensor& b) {
    double worst = 0.0;
    for (std::int64_t l = 0; l < a.layers; ++l) {
        for (std::int64_t h = 0; h < a.heads; ++h) {
            for (std::int64_t i = 0; i < a.queries; ++i) {
                auto ra = a.row(l, h, i);
                auto rb = b.row(l, h, i);
                double tv = 0.0;
                for (std::int64_t j = 0; j < a.keys; ++j) {
                    tv += std::abs(ra[static_cast<std::size_t>(j)] -
                                   rb[static_cast<std::size_t>(j)]);
                }
                worst = std::max(worst, 0.5 * tv);
            }
        }
    }
    return worst;
}

double content_entropy_of_row(std::span<const double> row,
                              const std::vector<std::int64_t>& region) {
    auto p = content_renormalize(row, region, 1e-10);
    return content_entropy(p, 1e-10);
}

}  // namespace

TEST_CASE("apply_phase gates rows by position") {
    TigsConfig cfg;
    cfg.phase = Phase::PrefillOnly;
    CHECK(apply_phase(cfg, 0, 10));
    CHECK(apply_phase(cfg, 9, 10));
    CHECK(!apply_phase(cfg, 10, 10));

    cfg.phase = Phase::DecodeOnly;
    CHECK(!apply_phase(cfg, 0, 10));
    CHECK(apply_phase(cfg, 10, 10));

    cfg.phase = Phase::Full;
    CHECK(apply_phase(cfg, 0, 10));
    CHECK(apply_phase(cfg, 999, 10));
}

TEST_CASE("beta zero reduces the transform to plain softmax") {
    Rng rng(61);
    TigsConfig cfg;
    cfg.beta = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto logits = testutil::random_logits(rng, 2, 2, 6, 6);
        auto mask = testutil::all_true_mask(6);
        auto out = tigs_transform(logits, mask, cfg);
        auto plain = softmax_tensor(logits);
        for (std::size_t j = 0; j < plain.data.size(); ++j) {
            CHECK(std::abs(out.attention_out.data[j] - plain.data[j]) <= 1e-12);
        }
    }
}

TEST_CASE("the trigger row leaves the transform with more content entropy") {
    SynthSpec s;
    s.seq_len = 32;
    s.delta = 8.0;
    s.trigger_index = 5;
    s.noise_scale = 0.0;
    s.seed = 62;
    auto [logits, mask, labels] = make_attention_suite(6, 2, s, 1);
    TigsConfig cfg;  // all-layer defense, prefill covers everything
    auto out = tigs_transform(logits, mask, cfg);
    auto before = softmax_tensor(logits);
    auto region = content_region(mask, s.seq_len - 1, false);
    for (auto [l, h] : labels.triggered) {
        for (std::int64_t i = 0; i < s.seq_len; ++i) {
            double h_in = content_entropy_of_row(before.row(l, h, i), region);
            double h_out = content_entropy_of_row(out.attention_out.row(l, h, i), region);
            CHECK(h_out > h_in);
        }
    }
}

TEST_CASE("uniform attention passes the transform almost untouched") {
    TigsConfig cfg;
    auto logits = make_tensor(2, 4, 12, 12, TensorKind::Logits);
    // constant logits: softmax is uniform in every row
    for (double& v : logits.data) v = 0.7;
    auto mask = testutil::all_true_mask(12);
    auto out = tigs_transform(logits, mask, cfg);
    auto plain = softmax_tensor(logits);
    CHECK(max_row_tv(out.attention_out, plain) < 0.01);
}

TEST_CASE("transform output is always a valid probability tensor") {
    Rng rng(63);
    TigsConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        bool causal = trial % 2 == 0;
        auto logits = testutil::random_logits(rng, 2, 3, 8, 8, causal);
        ContentMask mask;
        for (std::int64_t j = 0; j < 8; ++j) mask.mask.push_back(j != 0);
        auto out = tigs_transform(logits, mask, cfg);
        CHECK_NOTHROW(validate_tensor(out.attention_out));
        CHECK(out.attention_out.causal == causal);
    }
}

TEST_CASE("identical inputs produce bit-identical outputs and reports") {
    Rng rng(64);
    auto logits = testutil::random_logits(rng, 3, 4, 10, 10);
    ContentMask mask;
    for (std::int64_t j = 0; j < 10; ++j) mask.mask.push_back(j % 4 != 0);
    TigsConfig cfg;
    auto a = tigs_transform(logits, mask, cfg);
    auto b = tigs_transform(logits, mask, cfg);
    CHECK(a.attention_out.data == b.attention_out.data);
    CHECK(report_to_json(a.report) == report_to_json(b.report));
}

TEST_CASE("defended layers perform exactly one softmax per row") {
    Rng rng(65);
    auto logits = testutil::random_logits(rng, 4, 3, 6, 6);
    auto mask = testutil::all_true_mask(6);

    TigsConfig cfg;  // all layers
    auto full = tigs_transform(logits, mask, cfg);
    CHECK(full.softmax_evals == 4u * 3u * 6u);

    cfg.layers = std::set<std::int64_t>{1, 3};
    auto partial = tigs_transform(logits, mask, cfg);
    CHECK(partial.softmax_evals == 2u * 3u * 6u);
}

TEST_CASE("undefended layers are bit-identical pass-throughs") {
    Rng rng(66);
    auto logits = testutil::random_logits(rng, 3, 2, 8, 8);
    ContentMask mask;
    for (std::int64_t j = 0; j < 8; ++j) mask.mask.push_back(j != 0);
    TigsConfig cfg;
    cfg.layers = std::set<std::int64_t>{0};
    auto out = tigs_transform(logits, mask, cfg);
    auto plain = softmax_tensor(logits);
    for (std::int64_t l = 1; l < 3; ++l) {
        for (std::int64_t h = 0; h < 2; ++h) {
            for (std::int64_t i = 0; i < 8; ++i) {
                auto got = out.attention_out.row(l, h, i);
                auto want = plain.row(l, h, i);
                CHECK(std::equal(got.begin(), got.end(), want.begin()));
            }
        }
        for (const auto& head : out.report.layer_stats[static_cast<std::size_t>(l)].heads) {
            for (const auto& row : head.rows) CHECK(row.lambda == 0.0);
        }
    }
}

TEST_CASE("prefill-only mode leaves decode rows untouched with lambda zero") {
    SynthSpec s;
    s.seq_len = 16;
    s.delta = 8.0;
    s.trigger_index = 3;
    s.noise_scale = 0.0;
    s.seed = 67;
    auto [logits, mask, labels] = make_attention_suite(3, 1, s, 1);
    TigsConfig cfg;
    cfg.phase = Phase::PrefillOnly;
    const std::int64_t prefill = 10;
    auto out = tigs_transform(logits, mask, cfg, prefill);
    auto plain = softmax_tensor(logits);
    for (std::int64_t h = 0; h < logits.heads; ++h) {
        const auto& rows = out.report.layer_stats[0].heads[static_cast<std::size_t>(h)].rows;
        for (std::int64_t i = prefill; i < 16; ++i) {
            CHECK(rows[static_cast<std::size_t>(i)].lambda == 0.0);
            auto got = out.attention_out.row(0, h, i);
            auto want = plain.row(0, h, i);
            CHECK(std::equal(got.begin(), got.end(), want.begin()));
        }
    }
    // the triggered head still gets smoothed inside the prefill window
    auto [tl, th] = labels.triggered[0];
    bool smoothed = false;
    for (std::int64_t i = 0; i < prefill; ++i) {
        if (out.report.layer_stats[0].heads[static_cast<std::size_t>(th)].rows[static_cast<std::size_t>(i)]
                .lambda > 1.0) {
            smoothed = true;
        }
    }
    CHECK(smoothed);
}

TEST_CASE("layer statistics form a barrier: one head shifts every z-score") {
    Rng rng(68);
    auto base = testutil::random_probabilities(rng, 1, 4, 8, 8);
    ContentMask mask;
    for (std::int64_t j = 0; j < 8; ++j) mask.mask.push_back(j != 0);
    auto before = screen_tensor(base, mask, TigsConfig{});

    auto spiked = base;
    for (std::int64_t i = 0; i < 8; ++i) {
        auto row = spiked.row(0, 2, i);
        std::fill(row.begin(), row.end(), 0.0);
        row[5] = 1.0;
    }
    auto after = screen_tensor(spiked, mask, TigsConfig{});
    for (std::int64_t h = 0; h < 4; ++h) {
        if (h == 2) continue;
        CHECK(before.layer_stats[0].heads[static_cast<std::size_t>(h)].zscore !=
              after.layer_stats[0].heads[static_cast<std::size_t>(h)].zscore);
    }
    CHECK(before.layer_stats[0].mu != after.layer_stats[0].mu);
}

TEST_CASE("toy model construction is deterministic and shape-consistent") {
    ToyDims dims;
    auto m1 = make_toy_model(dims, 123);
    auto m2 = make_toy_model(dims, 123);
    CHECK(m1 == m2);
    auto m3 = make_toy_model(dims, 124);
    CHECK(!(m1 == m3));

    ToyDims bad;
    bad.d_model = 60;  // not heads * d_head
    CHECK_THROWS_AS(make_toy_model(bad, 1), ShapeError);

    for (const auto& layer : m1.layer_weights) {
        for (const auto& w : layer.wq) {
            for (double v : w.data) {
                CHECK(std::isfinite(v));
                CHECK(std::abs(v) <= 0.1);
            }
        }
    }
}

TEST_CASE("toy_forward is deterministic and defense-off matches beta zero") {
    auto model = make_toy_model(ToyDims{}, 321);
    auto input = reference_embeddings(model, 24);
    auto mask = testutil::all_true_mask(24);

    TigsConfig cfg;
    auto a = toy_forward(model, input, mask, cfg, true);
    auto b = toy_forward(model, input, mask, cfg, true);
    CHECK(a.hidden == b.hidden);
    CHECK(a.attention_out.data == b.attention_out.data);

    TigsConfig off;
    off.beta = 0.0;
    auto undefended = toy_forward(model, input, mask, cfg, false);
    auto beta0 = toy_forward(model, input, mask, off, true);
    REQUIRE(undefended.hidden.size() == beta0.hidden.size());
    for (std::size_t j = 0; j < undefended.hidden.size(); ++j) {
        CHECK(std::abs(undefended.hidden[j] - beta0.hidden[j]) < 1e-10);
    }
}

TEST_CASE("toy_forward rejects inconsistent shapes") {
    auto model = make_toy_model(ToyDims{}, 5);
    auto input = reference_embeddings(model, 16);
    CHECK_THROWS_AS(toy_forward(model, input, testutil::all_true_mask(12), TigsConfig{}, false),
                    ShapeError);
    Matrix narrow(16, 32);
    CHECK_THROWS_AS(toy_forward(model, narrow, testutil::all_true_mask(16), TigsConfig{}, false),
                    ShapeError);
}

TEST_CASE("implanted trigger weights dominate every visible reference row") {
    auto model = make_toy_model(ToyDims{}, 987);
    const std::int64_t layer = 2, head = 3, trigger = 4;
    const double delta = 8.0;
    auto rigged = implant_trigger_weights(model, layer, head, trigger, delta);

    // untouched everywhere else
    for (std::int64_t l = 0; l < model.dims.layers; ++l) {
        for (std::int64_t h = 0; h < model.dims.heads; ++h) {
            bool same_wk = rigged.layer_weights[static_cast<std::size_t>(l)]
                               .wk[static_cast<std::size_t>(h)] ==
                           model.layer_weights[static_cast<std::size_t>(l)]
                               .wk[static_cast<std::size_t>(h)];
            CHECK(same_wk == !(l == layer && h == head));
        }
    }

    auto x = reference_embeddings(model, kReferenceSeqLen);
    const auto& lw = rigged.layer_weights[static_cast<std::size_t>(layer)];
    Matrix q = matmul(x, model.layer_weights[static_cast<std::size_t>(layer)]
                             .wq[static_cast<std::size_t>(head)]);
    Matrix k = matmul(x, lw.wk[static_cast<std::size_t>(head)]);
    double scale = 1.0 / std::sqrt(static_cast<double>(model.dims.d_head));
    for (std::int64_t i = trigger; i < kReferenceSeqLen; ++i) {
        double trig = 0.0, best = -1e300;
        for (std::int64_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::int64_t c = 0; c < model.dims.d_head; ++c) s += q.at(i, c) * k.at(j, c);
            s *= scale;
            if (j == trigger) {
                trig = s;
            } else {
                best = std::max(best, s);
            }
        }
        CHECK(trig - best >= delta);
    }
}

TEST_CASE("implant edge cases: zero delta, determinism, out of range") {
    auto model = make_toy_model(ToyDims{}, 654);
    auto same = implant_trigger_weights(model, 1, 1, 3, 0.0);
    CHECK(same == model);

    auto a = implant_trigger_weights(model, 1, 1, 3, 7.0);
    auto b = implant_trigger_weights(model, 1, 1, 3, 7.0);
    CHECK(a == b);

    CHECK_THROWS_AS(implant_trigger_weights(model, 9, 0, 3, 1.0), IndexError);
    CHECK_THROWS_AS(implant_trigger_weights(model, 0, 9, 3, 1.0), IndexError);
    CHECK_THROWS_AS(implant_trigger_weights(model, 0, 0, 99, 1.0), IndexError);
    CHECK_THROWS_AS(implant_trigger_weights(model, 0, 0, 3, 1e308), ValueError);
}

TEST_CASE("end to end: the rigged head lights up, the rest stay quiet") {
    auto model = make_toy_model(ToyDims{}, 2024);
    const std::int64_t layer = 2, head = 3, trigger = 4;
    auto rigged = implant_trigger_weights(model, layer, head, trigger, 8.0);
    auto input = reference_embeddings(model, kReferenceSeqLen);
    ContentMask mask = testutil::all_true_mask(kReferenceSeqLen);
    mask.mask[0] = false;

    TigsConfig cfg;
    auto out = toy_forward(rigged, input, mask, cfg, true);

    double rigged_lambda = 0.0;
    std::int64_t above = 0, quiet = 0, total_unrigged = 0;
    for (std::int64_t l = 0; l < model.dims.layers; ++l) {
        for (std::int64_t h = 0; h < model.dims.heads; ++h) {
            double mx = 0.0;
            const auto& rows =
                out.report.layer_stats[static_cast<std::size_t>(l)].heads[static_cast<std::size_t>(h)].rows;
            for (const auto& row : rows) mx = std::max(mx, row.lambda);
            if (l == layer && h == head) {
                rigged_lambda = mx;
            } else {
                ++total_unrigged;
                if (mx > cfg.lambda_act) {
                    ++above;
                } else {
                    ++quiet;
                }
            }
        }
    }
    CHECK(rigged_lambda > cfg.lambda_act);
    // at least 90% of unrigged heads stay below the activation threshold
    CHECK(static_cast<double>(quiet) >= 0.9 * static_cast<double>(total_unrigged));

    // and the rigged head carries the global lambda maximum
    double best_other = 0.0;
    for (std::int64_t l = 0; l < model.dims.layers; ++l) {
        for (std::int64_t h = 0; h < model.dims.heads; ++h) {
            if (l == layer && h == head) continue;
            const auto& rows =
                out.report.layer_stats[static_cast<std::size_t>(l)].heads[static_cast<std::size_t>(h)].rows;
            for (const auto& row : rows) best_other = std::max(best_other, row.lambda);
        }
    }
    CHECK(rigged_lambda > best_other);
}

TEST_CASE("bench records exactly the requested number of samples per arm") {
    ToyDims dims;
    dims.layers = 2;
    dims.heads = 8;
    auto model = make_toy_model(dims, 5);
    TigsConfig cfg;
    auto summary = bench(model, cfg, 5, 1);
    CHECK(summary.defended_ns.size() == 5);
    CHECK(summary.undefended_ns.size() == 5);
    for (auto v : summary.defended_ns) CHECK(v > 0);
    CHECK(std::isfinite(summary.overhead_pct()));
    CHECK_THROWS_AS(bench(model, cfg, 0, 0), ValueError);
}

TEST_CASE("stage timings accumulate on defended layers") {
    Rng rng(70);
    auto logits = testutil::random_logits(rng, 2, 2, 8, 8);
    auto out = tigs_transform(logits, testutil::all_true_mask(8), TigsConfig{});
    CHECK(out.timing.stage1_ns > 0);
}
