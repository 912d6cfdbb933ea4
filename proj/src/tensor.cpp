#include "tigs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tigs/errors.hpp"

namespace tigs {

double causal_sentinel() { return std::numeric_limits<double>::lowest(); }

AttentionTensor make_tensor(std::int64_t layers, std::int64_t heads, std::int64_t queries,
                            std::int64_t keys, TensorKind kind, bool causal) {
    if (layers < 0 || heads < 0 || queries < 0 || keys < 0) {
        throw ShapeError("tensor extents must be non-negative");
    }
    AttentionTensor t;
    t.layers = layers;
    t.heads = heads;
    t.queries = queries;
    t.keys = keys;
    t.kind = kind;
    t.causal = causal;
    t.data.assign(static_cast<std::size_t>(t.size()), 0.0);
    return t;
}

void validate_tensor(const AttentionTensor& t) {
    if (t.layers < 0 || t.heads < 0 || t.queries < 0 || t.keys < 0) {
        throw ShapeError("negative tensor extent");
    }
    if (t.data.size() != static_cast<std::size_t>(t.size())) {
        throw ShapeError("data length " + std::to_string(t.data.size()) +
                         " does not match shape product " + std::to_string(t.size()));
    }
    if (t.kind == TensorKind::Probabilities) {
        for (std::int64_t l = 0; l < t.layers; ++l) {
            for (std::int64_t h = 0; h < t.heads; ++h) {
                for (std::int64_t q = 0; q < t.queries; ++q) {
                    auto row = t.row(l, h, q);
                    double sum = 0.0;
                    for (std::int64_t k = 0; k < t.keys; ++k) {
                        double v = row[static_cast<std::size_t>(k)];
                        if (!std::isfinite(v)) {
                            throw ValueError("non-finite probability entry");
                        }
                        if (v < 0.0 || v > 1.0) {
                            throw ValueError("probability entry outside [0,1]");
                        }
                        if (t.causal && k > q && v != 0.0) {
                            throw ValueError("causal probability row has mass above the diagonal");
                        }
                        sum += v;
                    }
                    if (std::abs(sum - 1.0) > 1e-6) {
                        throw ValueError("probability row sums to " + std::to_string(sum));
                    }
                }
            }
        }
    } else if (t.causal) {
        const double sentinel = causal_sentinel();
        for (std::int64_t l = 0; l < t.layers; ++l) {
            for (std::int64_t h = 0; h < t.heads; ++h) {
                for (std::int64_t q = 0; q < t.queries; ++q) {
                    auto row = t.row(l, h, q);
                    for (std::int64_t k = q + 1; k < t.keys; ++k) {
                        if (row[static_cast<std::size_t>(k)] != sentinel) {
                            throw ValueError("causal logits row missing sentinel above the diagonal");
                        }
                    }
                }
            }
        }
    }
}

void softmax_row(std::span<const double> logits, std::span<double> out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        double e = std::exp(logits[j] - mx);
        out[j] = e;
        sum += e;
    }
    for (std::size_t j = 0; j < logits.size(); ++j) out[j] /= sum;
}

AttentionTensor softmax_tensor(const AttentionTensor& logits) {
    AttentionTensor probs = logits;
    probs.kind = TensorKind::Probabilities;
    for (std::int64_t l = 0; l < logits.layers; ++l) {
        for (std::int64_t h = 0; h < logits.heads; ++h) {
            for (std::int64_t q = 0; q < logits.queries; ++q) {
                softmax_row(logits.row(l, h, q), probs.row(l, h, q));
            }
        }
    }
    return probs;
}

}  // namespace tigs
