#pragma once

#include <span>
#include <string>
#include <tuple>

#include "tigs/screening.hpp"

namespace tigs {

/// Mechanism-validation summary of one screening report.
struct MechanismStats {
    double c_max = 0.0;              // peak row collapse
    double r_max = 0.0;              // peak head tail-risk
    double activated_fraction = 0.0; // heads whose max lambda exceeds lambda_act
    double row_fpr = 0.0;            // scoreable rows with lambda above lambda_act
};

MechanismStats mechanism_stats(const ScreeningReport& report, double lambda_act);

std::string mechanism_stats_to_json(const MechanismStats& stats);

/// Lower-median c_max of each group and gap = median_b - median_a.
std::tuple<double, double, double> group_separation(std::span<const MechanismStats> stats_a,
                                                    std::span<const MechanismStats> stats_b);

/// CSV `layer,head,tail_risk,rank`; rank is the descending dense rank of
/// tail_risk within its layer, rows ordered by (layer, head).
void export_rank_heatmap(const ScreeningReport& report, const std::string& path);
std::string rank_heatmap_csv(const ScreeningReport& report);

}  // namespace tigs
