#include "tigs/toy_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tigs/errors.hpp"
#include "tigs/rng.hpp"
#include "tigs/tensor.hpp"

namespace tigs {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (std::int64_t i = 0; i < a.rows; ++i) {
        for (std::int64_t k = 0; k < a.cols; ++k) {
            double av = a.at(i, k);
            if (av == 0.0) continue;
            for (std::int64_t j = 0; j < b.cols; ++j) {
                c.at(i, j) += av * b.at(k, j);
            }
        }
    }
    return c;
}

namespace {

Matrix random_matrix(Rng& rng, std::int64_t rows, std::int64_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

}  // namespace

ToyModel make_toy_model(const ToyDims& dims, std::uint64_t seed) {
    if (dims.d_model != dims.heads * dims.d_head) {
        throw ShapeError("d_model must equal heads * d_head");
    }
    ToyModel model;
    model.dims = dims;
    model.d_ff = 2 * dims.d_model;
    model.seed = seed;
    Rng rng(seed);
    model.layer_weights.resize(static_cast<std::size_t>(dims.layers));
    for (auto& layer : model.layer_weights) {
        for (std::int64_t h = 0; h < dims.heads; ++h) {
            layer.wq.push_back(random_matrix(rng, dims.d_model, dims.d_head, -0.1, 0.1));
            layer.wk.push_back(random_matrix(rng, dims.d_model, dims.d_head, -0.1, 0.1));
            layer.wv.push_back(random_matrix(rng, dims.d_model, dims.d_head, -0.1, 0.1));
        }
        layer.wo = random_matrix(rng, dims.heads * dims.d_head, dims.d_model, -0.1, 0.1);
        layer.w1 = random_matrix(rng, dims.d_model, model.d_ff, -0.1, 0.1);
        layer.w2 = random_matrix(rng, model.d_ff, dims.d_model, -0.1, 0.1);
        layer.b1.resize(static_cast<std::size_t>(model.d_ff));
        for (double& v : layer.b1) v = rng.uniform(-0.1, 0.1);
        layer.b2.resize(static_cast<std::size_t>(dims.d_model));
        for (double& v : layer.b2) v = rng.uniform(-0.1, 0.1);
    }
    return model;
}

Matrix reference_embeddings(const ToyModel& model, std::int64_t seq_len) {
    // A distinct stream from the weights; the shared base direction keeps all
    // query vectors inside one half-space, which the weight implant relies on.
    Rng rng(model.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> base(static_cast<std::size_t>(model.dims.d_model));
    for (double& v : base) v = rng.uniform(0.25, 0.75);
    Matrix x(seq_len, model.dims.d_model);
    for (std::int64_t i = 0; i < seq_len; ++i) {
        for (std::int64_t c = 0; c < model.dims.d_model; ++c) {
            x.at(i, c) = base[static_cast<std::size_t>(c)] + rng.uniform(-0.05, 0.05);
        }
    }
    return x;
}

DefendedOutput toy_forward(const ToyModel& model, const Matrix& input_embeddings,
                           const ContentMask& mask, const TigsConfig& cfg, bool defended,
                           std::int64_t prefill_len) {
    const std::int64_t n = input_embeddings.rows;
    const std::int64_t d = model.dims.d_model;
    const std::int64_t dh = model.dims.d_head;
    const std::int64_t heads = model.dims.heads;
    if (input_embeddings.cols != d) throw ShapeError("embedding width does not match d_model");
    if (mask.size() != n) throw ShapeError("mask length does not match sequence length");
    cfg.validate();
    if (prefill_len < 0) prefill_len = n;
    if (prefill_len > n) throw ShapeError("prefill_len exceeds sequence length");

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double sentinel = causal_sentinel();

    DefendedOutput out;
    out.attention_out =
        make_tensor(model.dims.layers, heads, n, n, TensorKind::Probabilities, true);
    out.report.layer_stats.resize(static_cast<std::size_t>(model.dims.layers));

    detail::PipelineCounters counters;
    Matrix x = input_embeddings;
    std::vector<double> layer_logits(static_cast<std::size_t>(heads * n * n));
    for (std::int64_t l = 0; l < model.dims.layers; ++l) {
        const auto& lw = model.layer_weights[static_cast<std::size_t>(l)];
        std::vector<Matrix> values;
        values.reserve(static_cast<std::size_t>(heads));
        for (std::int64_t h = 0; h < heads; ++h) {
            Matrix q = matmul(x, lw.wq[static_cast<std::size_t>(h)]);
            Matrix k = matmul(x, lw.wk[static_cast<std::size_t>(h)]);
            values.push_back(matmul(x, lw.wv[static_cast<std::size_t>(h)]));
            for (std::int64_t i = 0; i < n; ++i) {
                for (std::int64_t j = 0; j < n; ++j) {
                    double s;
                    if (j > i) {
                        s = sentinel;
                    } else {
                        s = 0.0;
                        for (std::int64_t c = 0; c < dh; ++c) s += q.at(i, c) * k.at(j, c);
                        s *= scale;
                    }
                    layer_logits[static_cast<std::size_t>((h * n + i) * n + j)] = s;
                }
            }
        }

        double* probs =
            out.attention_out.data.data() + static_cast<std::size_t>(l * heads * n * n);
        LayerScreen& layer_out = out.report.layer_stats[static_cast<std::size_t>(l)];
        if (defended && cfg.defends_layer(l)) {
            layer_out = detail::defend_layer(layer_logits.data(), probs, heads, n, n, true, mask,
                                             cfg, prefill_len, counters, out.timing);
        } else {
            for (std::int64_t h = 0; h < heads; ++h) {
                for (std::int64_t i = 0; i < n; ++i) {
                    std::size_t off = static_cast<std::size_t>((h * n + i) * n);
                    softmax_row({layer_logits.data() + off, static_cast<std::size_t>(n)},
                                {probs + off, static_cast<std::size_t>(n)});
                }
            }
            layer_out.heads.assign(static_cast<std::size_t>(heads), HeadScreen{});
            for (auto& head : layer_out.heads) {
                head.rows.assign(static_cast<std::size_t>(n), RowScreen{});
            }
        }

        // O = A V per head, concatenated, projected, fed forward, residual.
        Matrix concat(n, heads * dh);
        for (std::int64_t h = 0; h < heads; ++h) {
            const Matrix& v = values[static_cast<std::size_t>(h)];
            for (std::int64_t i = 0; i < n; ++i) {
                const double* arow = probs + static_cast<std::size_t>((h * n + i) * n);
                for (std::int64_t c = 0; c < dh; ++c) {
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * v.at(j, c);
                    concat.at(i, h * dh + c) = acc;
                }
            }
        }
        Matrix attn_out = matmul(concat, lw.wo);
        Matrix hidden1 = matmul(attn_out, lw.w1);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t c = 0; c < model.d_ff; ++c) {
                hidden1.at(i, c) = std::max(0.0, hidden1.at(i, c) + lw.b1[static_cast<std::size_t>(c)]);
            }
        }
        Matrix ffn = matmul(hidden1, lw.w2);
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t c = 0; c < d; ++c) {
                x.at(i, c) += ffn.at(i, c) + lw.b2[static_cast<std::size_t>(c)];
            }
        }
    }

    out.hidden = std::move(x.data);
    out.hidden_rows = n;
    out.hidden_cols = d;
    out.softmax_evals = counters.softmax_evals;
    return out;
}

double BenchSummary::mean_of(const std::vector<std::uint64_t>& v) {
    double sum = 0.0;
    for (auto x : v) sum += static_cast<double>(x);
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

double BenchSummary::median_of(std::vector<std::uint64_t> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return static_cast<double>(v[(v.size() - 1) / 2]);
}

double BenchSummary::p95_of(std::vector<std::uint64_t> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size()))) - 1;
    return static_cast<double>(v[std::min(idx, v.size() - 1)]);
}

double BenchSummary::overhead_pct() const {
    double u = mean_of(undefended_ns);
    if (u == 0.0) return 0.0;
    return (mean_of(defended_ns) - u) / u * 100.0;
}

BenchSummary bench(const ToyModel& model, const TigsConfig& cfg, std::int64_t repeats,
                   std::int64_t warmup) {
    if (repeats < 1) throw ValueError("repeats must be >= 1");
    Matrix input = reference_embeddings(model, kReferenceSeqLen);
    ContentMask mask;
    mask.mask.assign(static_cast<std::size_t>(kReferenceSeqLen), true);

    auto run_arm = [&](bool defended, std::vector<std::uint64_t>& samples) {
        for (std::int64_t i = 0; i < warmup; ++i) {
            toy_forward(model, input, mask, cfg, defended);
        }
        samples.reserve(static_cast<std::size_t>(repeats));
        for (std::int64_t i = 0; i < repeats; ++i) {
            auto t0 = std::chrono::steady_clock::now();
            toy_forward(model, input, mask, cfg, defended);
            auto t1 = std::chrono::steady_clock::now();
            samples.push_back(static_cast<std::uint64_t>(
                std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
        }
    };

    BenchSummary summary;
    run_arm(false, summary.undefended_ns);
    run_arm(true, summary.defended_ns);
    return summary;
}

}  // namespace tigs
