#pragma once

#include <cstdint>
#include <vector>

#include "tigs/config.hpp"
#include "tigs/mask.hpp"
#include "tigs/pipeline.hpp"

namespace tigs {

/// Row-major dense matrix, just enough linear algebra for the toy forward.
struct Matrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::int64_t r, std::int64_t c)
        : rows(r), cols(c), data(static_cast<std::size_t>(r * c), 0.0) {}

    double& at(std::int64_t r, std::int64_t c) {
        return data[static_cast<std::size_t>(r * cols + c)];
    }
    double at(std::int64_t r, std::int64_t c) const {
        return data[static_cast<std::size_t>(r * cols + c)];
    }

    bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);

struct ToyDims {
    std::int64_t d_model = 64;
    std::int64_t d_head = 8;
    std::int64_t layers = 4;
    std::int64_t heads = 8;

    bool operator==(const ToyDims&) const = default;
};

/// Deterministic multi-head transformer stub: per-head Q/K/V projections, an
/// output projection and a two-layer ReLU feed-forward block per layer, all
/// seeded uniform(-0.1, 0.1). Attention is causal.
struct ToyModel {
    ToyDims dims;
    std::int64_t d_ff = 0;
    std::uint64_t seed = 0;
    struct Layer {
        std::vector<Matrix> wq, wk, wv;  // [heads] of d_model x d_head
        Matrix wo;                       // (heads*d_head) x d_model
        Matrix w1, w2;                   // d_model x d_ff, d_ff x d_model
        std::vector<double> b1, b2;
        bool operator==(const Layer&) const = default;
    };
    std::vector<Layer> layer_weights;

    bool operator==(const ToyModel&) const = default;
};

ToyModel make_toy_model(const ToyDims& dims, std::uint64_t seed);

/// Canonical input for a model: token vectors sharing a seeded base direction
/// plus small per-position noise. Used by the weight implant and the bench.
Matrix reference_embeddings(const ToyModel& model, std::int64_t seq_len);

constexpr std::int64_t kReferenceSeqLen = 32;

/// Scaled dot-product attention with optional per-layer defense, value
/// aggregation, output projection, feed-forward and residual, layer by layer.
/// Returns the final representation in `hidden` plus the (possibly defended)
/// attention tensor and screening evidence.
DefendedOutput toy_forward(const ToyModel& model, const Matrix& input_embeddings,
                           const ContentMask& mask, const TigsConfig& cfg, bool defended,
                           std::int64_t prefill_len = -1);

struct BenchSummary {
    std::vector<std::uint64_t> defended_ns;
    std::vector<std::uint64_t> undefended_ns;

    static double mean_of(const std::vector<std::uint64_t>& v);
    static double median_of(std::vector<std::uint64_t> v);
    static double p95_of(std::vector<std::uint64_t> v);
    double overhead_pct() const;
};

/// Times defended vs undefended toy_forward: `warmup` unrecorded runs per
/// arm, then exactly `repeats` timed samples per arm, single-threaded.
BenchSummary bench(const ToyModel& model, const TigsConfig& cfg, std::int64_t repeats,
                   std::int64_t warmup);

}  // namespace tigs
