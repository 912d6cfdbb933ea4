#pragma once

#include <span>
#include <vector>

namespace tigs {

/// Dual-scale shrinkage pair derived from one smoothing strength:
/// alpha = 1 / (1 + gamma * lambda), with the row gain the stronger one.
struct ShrinkPair {
    double alpha_c = 1.0;
    double alpha_r = 1.0;
};

ShrinkPair shrink_factors(double lambda, double gamma_c, double gamma_r);

/// q = softmax(alpha_c * content_logits): linear logit shrinkage toward the
/// uniform barycenter of the content simplex.
std::vector<double> anchor_smooth_logits(std::span<const double> content_logits, double alpha_c);

/// q_j = p_j^alpha / sum_k p_k^alpha, computed in log space so small
/// probabilities do not underflow. Exact zeros stay zero (0^alpha := 0).
/// Throws ValueError when p has no positive entry.
std::vector<double> power_smooth(std::span<const double> p, double alpha_c, double epsilon);

}  // namespace tigs
