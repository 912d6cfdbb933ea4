#include "tigs/diagnostics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "tigs/errors.hpp"

namespace tigs {

MechanismStats mechanism_stats(const ScreeningReport& report, double lambda_act) {
    if (report.layer_stats.empty()) throw ValueError("empty screening report");
    MechanismStats stats;
    std::int64_t total_heads = 0;
    std::int64_t activated_heads = 0;
    std::int64_t scoreable_rows = 0;
    std::int64_t flagged_rows = 0;
    for (const auto& layer : report.layer_stats) {
        for (const auto& head : layer.heads) {
            ++total_heads;
            stats.r_max = std::max(stats.r_max, head.tail_risk);
            double lambda_max = 0.0;
            for (const auto& row : head.rows) {
                stats.c_max = std::max(stats.c_max, row.collapse);
                lambda_max = std::max(lambda_max, row.lambda);
                if (row.scoreable()) {
                    ++scoreable_rows;
                    if (row.lambda > lambda_act) ++flagged_rows;
                }
            }
            if (lambda_max > lambda_act) ++activated_heads;
        }
    }
    stats.activated_fraction =
        total_heads == 0 ? 0.0
                         : static_cast<double>(activated_heads) / static_cast<double>(total_heads);
    stats.row_fpr = scoreable_rows == 0
                        ? 0.0
                        : static_cast<double>(flagged_rows) / static_cast<double>(scoreable_rows);
    return stats;
}

std::string mechanism_stats_to_json(const MechanismStats& stats) {
    nlohmann::json j;
    j["c_max"] = stats.c_max;
    j["r_max"] = stats.r_max;
    j["activated_fraction"] = stats.activated_fraction;
    j["row_fpr"] = stats.row_fpr;
    return j.dump(2);
}

namespace {

double lower_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

}  // namespace

std::tuple<double, double, double> group_separation(std::span<const MechanismStats> stats_a,
                                                    std::span<const MechanismStats> stats_b) {
    if (stats_a.empty() || stats_b.empty()) throw ValueError("group_separation needs non-empty groups");
    std::vector<double> a, b;
    for (const auto& s : stats_a) a.push_back(s.c_max);
    for (const auto& s : stats_b) b.push_back(s.c_max);
    double ma = lower_median(std::move(a));
    double mb = lower_median(std::move(b));
    return {ma, mb, mb - ma};
}

std::string rank_heatmap_csv(const ScreeningReport& report) {
    std::ostringstream out;
    out << "layer,head,tail_risk,rank\n";
    for (std::size_t l = 0; l < report.layer_stats.size(); ++l) {
        const auto& heads = report.layer_stats[l].heads;
        // Dense descending rank: distinct values get consecutive ranks from 1.
        std::vector<double> distinct;
        for (const auto& h : heads) distinct.push_back(h.tail_risk);
        std::sort(distinct.begin(), distinct.end(), std::greater<>());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        for (std::size_t h = 0; h < heads.size(); ++h) {
            auto it = std::find(distinct.begin(), distinct.end(), heads[h].tail_risk);
            std::size_t rank = static_cast<std::size_t>(it - distinct.begin()) + 1;
            out << l << "," << h << "," << nlohmann::json(heads[h].tail_risk).dump() << ","
                << rank << "\n";
        }
    }
    return out.str();
}

void export_rank_heatmap(const ScreeningReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << rank_heatmap_csv(report);
    if (!out) throw IoError("short write to " + path);
}

}  // namespace tigs
