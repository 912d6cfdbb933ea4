#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tigs {

enum class TensorKind { Logits, Probabilities };

/// Causal positions j > i in a logits tensor carry this sentinel instead of
/// -inf; exp() of it underflows to exactly 0, so softmax assigns zero mass
/// without propagating NaNs.
double causal_sentinel();

/// 4-axis attention tensor [layer, head, query, key], row-major doubles.
struct AttentionTensor {
    std::int64_t layers = 0;
    std::int64_t heads = 0;
    std::int64_t queries = 0;
    std::int64_t keys = 0;
    std::vector<double> data;
    TensorKind kind = TensorKind::Logits;
    bool causal = false;
    // Set when the tensor was loaded from a '<f4' file; save_tensor then
    // writes '<f4' back so the on-disk round trip is bit-exact.
    bool float32_source = false;

    std::int64_t size() const { return layers * heads * queries * keys; }

    std::size_t row_offset(std::int64_t l, std::int64_t h, std::int64_t q) const {
        return static_cast<std::size_t>(((l * heads + h) * queries + q) * keys);
    }
    std::span<double> row(std::int64_t l, std::int64_t h, std::int64_t q) {
        return {data.data() + row_offset(l, h, q), static_cast<std::size_t>(keys)};
    }
    std::span<const double> row(std::int64_t l, std::int64_t h, std::int64_t q) const {
        return {data.data() + row_offset(l, h, q), static_cast<std::size_t>(keys)};
    }
    double& at(std::int64_t l, std::int64_t h, std::int64_t q, std::int64_t k) {
        return data[row_offset(l, h, q) + static_cast<std::size_t>(k)];
    }
    double at(std::int64_t l, std::int64_t h, std::int64_t q, std::int64_t k) const {
        return data[row_offset(l, h, q) + static_cast<std::size_t>(k)];
    }

    bool operator==(const AttentionTensor&) const = default;
};

AttentionTensor make_tensor(std::int64_t layers, std::int64_t heads, std::int64_t queries,
                            std::int64_t keys, TensorKind kind, bool causal = false);

/// Throws ShapeError / ValueError when the tensor violates its invariants
/// (data length, probability range, row sums, causal zeros / sentinels).
void validate_tensor(const AttentionTensor& t);

/// Numerically stable row softmax; `out` may alias `logits`.
void softmax_row(std::span<const double> logits, std::span<double> out);

/// Softmax applied to every row; kind becomes Probabilities.
AttentionTensor softmax_tensor(const AttentionTensor& logits);

}  // namespace tigs
