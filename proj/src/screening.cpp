#include "tigs/screening.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tigs/errors.hpp"

namespace tigs {

double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> content_renormalize(std::span<const double> row,
                                        std::span<const std::int64_t> region, double epsilon) {
    if (region.empty()) throw EmptyRegionError("content region is empty");
    double mass = 0.0;
    for (auto j : region) mass += row[static_cast<std::size_t>(j)];
    std::vector<double> p;
    p.reserve(region.size());
    for (auto j : region) p.push_back(row[static_cast<std::size_t>(j)] / (mass + epsilon));
    return p;
}

double content_entropy(std::span<const double> p, double epsilon) {
    double h = 0.0;
    for (double v : p) h -= v * std::log(v + epsilon);
    return h;
}

double collapse_score(double entropy, std::int64_t content_size) {
    if (content_size <= 1) return 0.0;
    return std::log(static_cast<double>(content_size)) - entropy;
}

double tail_risk(std::span<const double> collapse_scores, std::int64_t k) {
    if (collapse_scores.empty()) throw EmptyHeadError("no scoreable rows in head");
    std::vector<double> sorted(collapse_scores.begin(), collapse_scores.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::size_t take = std::min(static_cast<std::size_t>(k), sorted.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < take; ++i) sum += sorted[i];
    return sum / static_cast<double>(take);
}

std::vector<double> layer_zscores(std::span<const double> tail_risks, double epsilon) {
    double mu = 0.0;
    for (double r : tail_risks) mu += r;
    mu /= static_cast<double>(tail_risks.size());
    double var = 0.0;
    for (double r : tail_risks) var += (r - mu) * (r - mu);
    double sigma = std::sqrt(var / static_cast<double>(tail_risks.size()));
    std::vector<double> z;
    z.reserve(tail_risks.size());
    for (double r : tail_risks) z.push_back((r - mu) / (sigma + epsilon));
    return z;
}

double head_gate(double z, double r, const TigsConfig& cfg) {
    return 1.0 - logistic(cfg.eta_h * (cfg.tau_h - z)) * logistic(cfg.eta_r * (cfg.tau_r - r));
}

double row_gate(double collapse, const TigsConfig& cfg) {
    return logistic(cfg.eta_c * (collapse - cfg.tau_c));
}

double smoothing_strength(double head_gate, double row_gate, double beta) {
    return beta * head_gate * row_gate;
}

ScreeningReport screen_tensor(const AttentionTensor& attn, const ContentMask& mask,
                              const TigsConfig& cfg) {
    if (attn.kind != TensorKind::Probabilities) {
        throw ValueError("screen_tensor expects a probabilities tensor");
    }
    if (mask.size() != attn.keys) {
        throw ShapeError("mask length " + std::to_string(mask.size()) +
                         " does not match key extent " + std::to_string(attn.keys));
    }
    cfg.validate();

    ScreeningReport report;
    report.layer_stats.resize(static_cast<std::size_t>(attn.layers));

    // Content regions depend only on the mask and causality, not on the head.
    // For non-causal tensors every row shares one region.
    std::vector<std::vector<std::int64_t>> regions(static_cast<std::size_t>(attn.queries));
    std::vector<std::int64_t> full_region;
    if (!attn.causal && attn.keys > 0) full_region = content_region(mask, 0, false);
    for (std::int64_t i = 0; i < attn.queries; ++i) {
        auto& reg = regions[static_cast<std::size_t>(i)];
        reg = attn.causal ? content_region(mask, i, true) : full_region;
        if (cfg.exclude_self) {
            reg.erase(std::remove(reg.begin(), reg.end(), i), reg.end());
        }
    }

    for (std::int64_t l = 0; l < attn.layers; ++l) {
        LayerScreen& layer = report.layer_stats[static_cast<std::size_t>(l)];
        layer.heads.resize(static_cast<std::size_t>(attn.heads));

        // First pass: per-row collapse, per-head tail risk.
        for (std::int64_t h = 0; h < attn.heads; ++h) {
            HeadScreen& head = layer.heads[static_cast<std::size_t>(h)];
            head.rows.resize(static_cast<std::size_t>(attn.queries));
            std::vector<double> scores;
            for (std::int64_t i = 0; i < attn.queries; ++i) {
                RowScreen& rs = head.rows[static_cast<std::size_t>(i)];
                const auto& region = regions[static_cast<std::size_t>(i)];
                rs.content_size = static_cast<std::int64_t>(region.size());
                if (region.empty()) continue;
                auto p = content_renormalize(attn.row(l, h, i), region, cfg.epsilon);
                rs.entropy = content_entropy(p, cfg.epsilon);
                rs.collapse = collapse_score(rs.entropy, rs.content_size);
                scores.push_back(rs.collapse);
            }
            head.has_scoreable_rows = !scores.empty();
            head.tail_risk = scores.empty() ? 0.0 : tail_risk(scores, cfg.k);
        }

        // Layer statistics over heads that produced a score.
        std::vector<double> included;
        for (const auto& head : layer.heads) {
            if (head.has_scoreable_rows) included.push_back(head.tail_risk);
        }
        if (!included.empty()) {
            double mu = 0.0;
            for (double r : included) mu += r;
            mu /= static_cast<double>(included.size());
            double var = 0.0;
            for (double r : included) var += (r - mu) * (r - mu);
            layer.mu = mu;
            layer.sigma = std::sqrt(var / static_cast<double>(included.size()));
        }

        // Second pass: gates and per-row strengths.
        for (auto& head : layer.heads) {
            if (head.has_scoreable_rows) {
                head.zscore = (head.tail_risk - layer.mu) / (layer.sigma + cfg.epsilon);
                head.head_gate = head_gate(head.zscore, head.tail_risk, cfg);
            } else {
                // Z -> -inf limit: the relative factor saturates to 1.
                head.zscore = 0.0;
                head.head_gate = 1.0 - logistic(cfg.eta_r * cfg.tau_r);
            }
            for (auto& rs : head.rows) {
                rs.row_gate = row_gate(rs.collapse, cfg);
                rs.lambda = rs.scoreable()
                                ? smoothing_strength(head.head_gate, rs.row_gate, cfg.beta)
                                : 0.0;
            }
        }
    }
    return report;
}

namespace {

nlohmann::json report_json(const ScreeningReport& report) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : report.layer_stats) {
        nlohmann::json heads = nlohmann::json::array();
        for (const auto& head : layer.heads) {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& rs : head.rows) {
                rows.push_back({{"C", rs.collapse},
                                {"H", rs.entropy},
                                {"g_row", rs.row_gate},
                                {"lambda", rs.lambda},
                                {"n_content", rs.content_size}});
            }
            heads.push_back({{"R", head.tail_risk},
                             {"Z", head.zscore},
                             {"g_head", head.head_gate},
                             {"rows", rows}});
        }
        layers.push_back({{"mu", layer.mu}, {"sigma", layer.sigma}, {"heads", heads}});
    }
    return nlohmann::json{{"layers", layers}};
}

}  // namespace

std::string report_to_json(const ScreeningReport& report) { return report_json(report).dump(2); }

ScreeningReport report_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad report json: ") + e.what());
    }
    if (!j.contains("layers")) throw FormatError("report json missing 'layers'");
    ScreeningReport report;
    for (const auto& jl : j["layers"]) {
        LayerScreen layer;
        layer.mu = jl.at("mu").get<double>();
        layer.sigma = jl.at("sigma").get<double>();
        for (const auto& jh : jl.at("heads")) {
            HeadScreen head;
            head.tail_risk = jh.at("R").get<double>();
            head.zscore = jh.at("Z").get<double>();
            head.head_gate = jh.at("g_head").get<double>();
            for (const auto& jr : jh.at("rows")) {
                RowScreen rs;
                rs.collapse = jr.at("C").get<double>();
                rs.entropy = jr.at("H").get<double>();
                rs.row_gate = jr.at("g_row").get<double>();
                rs.lambda = jr.at("lambda").get<double>();
                rs.content_size = jr.value("n_content", std::int64_t{0});
                head.rows.push_back(rs);
            }
            head.has_scoreable_rows =
                std::any_of(head.rows.begin(), head.rows.end(),
                            [](const RowScreen& r) { return r.scoreable(); });
            layer.heads.push_back(std::move(head));
        }
        report.layer_stats.push_back(std::move(layer));
    }
    return report;
}

}  // namespace tigs
