#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tigs/config.hpp"
#include "tigs/mask.hpp"
#include "tigs/tensor.hpp"

namespace tigs {

/// Per-row screening evidence.
struct RowScreen {
    std::int64_t content_size = 0;  // |C_i|
    double entropy = 0.0;           // H_i, nats
    double collapse = 0.0;          // C_i = log|C_i| - H_i (0 when |C_i| <= 1)
    double row_gate = 0.0;          // g_row = sigmoid(eta_c (C_i - tau_c))
    double lambda = 0.0;            // beta * g_head * g_row, 0 for skipped rows

    bool scoreable() const { return content_size >= 1; }
};

/// Per-head screening evidence.
struct HeadScreen {
    double tail_risk = 0.0;  // R: mean of top-k row collapse scores
    double zscore = 0.0;     // Z: layer-relative anomaly
    double head_gate = 0.0;  // g_head
    bool has_scoreable_rows = false;
    std::vector<RowScreen> rows;
};

struct LayerScreen {
    double mu = 0.0;     // mean of R over heads with scoreable rows
    double sigma = 0.0;  // population std of the same
    std::vector<HeadScreen> heads;
};

struct ScreeningReport {
    std::vector<LayerScreen> layer_stats;

    std::int64_t layer_count() const { return static_cast<std::int64_t>(layer_stats.size()); }
};

double logistic(double x);

/// Restriction of a probability row to `region`, renormalized:
/// p_j = row[j] / (sum over region + epsilon). Throws EmptyRegionError on an
/// empty region (callers skip such rows and set lambda = 0).
std::vector<double> content_renormalize(std::span<const double> row,
                                        std::span<const std::int64_t> region, double epsilon);

/// H = -sum_j p_j * log(p_j + epsilon), nats.
double content_entropy(std::span<const double> p, double epsilon);

/// C = log(n) - H for n >= 2; 0 for n <= 1 (a single-token content region
/// cannot exhibit competition, and the epsilon term must not produce a tiny
/// negative score).
double collapse_score(double entropy, std::int64_t content_size);

/// Mean of the min(k, len) largest scores. Throws EmptyHeadError on empty
/// input; such heads are excluded from the layer statistics.
double tail_risk(std::span<const double> collapse_scores, std::int64_t k);

/// Z_h = (R_h - mu) / (sigma + epsilon), population statistics.
std::vector<double> layer_zscores(std::span<const double> tail_risks, double epsilon);

/// g = 1 - sigmoid(eta_h (tau_h - z)) * sigmoid(eta_R (tau_R - r)).
double head_gate(double z, double r, const TigsConfig& cfg);

/// g = sigmoid(eta_c (C - tau_c)).
double row_gate(double collapse, const TigsConfig& cfg);

/// lambda = beta * g_head * g_row.
double smoothing_strength(double head_gate, double row_gate, double beta);

/// Stage 1 over a full probability tensor. Heads with zero scoreable rows
/// carry tail_risk = 0, are excluded from mu/sigma, and get the Z -> -inf
/// gate limit; rows with empty content region carry lambda = 0.
ScreeningReport screen_tensor(const AttentionTensor& attn, const ContentMask& mask,
                              const TigsConfig& cfg);

/// {"layers":[{"mu":..,"sigma":..,"heads":[{"R":..,"Z":..,"g_head":..,
/// "rows":[{"C":..,"H":..,"g_row":..,"lambda":..,"n_content":..}]}]}]}
std::string report_to_json(const ScreeningReport& report);
ScreeningReport report_from_json(const std::string& text);

}  // namespace tigs
