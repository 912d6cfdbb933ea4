#include "tigs/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tigs/errors.hpp"

namespace tigs {

ShrinkPair shrink_factors(double lambda, double gamma_c, double gamma_r) {
    if (lambda < 0.0) throw ValueError("lambda must be >= 0");
    if (gamma_c <= 0.0 || gamma_r <= 0.0) throw ValueError("gains must be > 0");
    return {1.0 / (1.0 + gamma_c * lambda), 1.0 / (1.0 + gamma_r * lambda)};
}

std::vector<double> anchor_smooth_logits(std::span<const double> content_logits, double alpha_c) {
    if (content_logits.empty()) throw ValueError("empty logit vector");
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : content_logits) {
        if (!std::isfinite(s)) throw ValueError("non-finite logit");
        mx = std::max(mx, s * alpha_c);
    }
    std::vector<double> q(content_logits.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        q[j] = std::exp(content_logits[j] * alpha_c - mx);
        sum += q[j];
    }
    for (double& v : q) v /= sum;
    return q;
}

std::vector<double> power_smooth(std::span<const double> p, double alpha_c, double epsilon) {
    (void)epsilon;  // signature keeps the shared numerical floor; the log-space
                    // path needs no guard beyond the all-zero check below
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : p) {
        if (v > 0.0) mx = std::max(mx, alpha_c * std::log(v));
    }
    if (!std::isfinite(mx)) throw ValueError("power_smooth: no positive mass");
    std::vector<double> q(p.size(), 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        if (p[j] > 0.0) {
            q[j] = std::exp(alpha_c * std::log(p[j]) - mx);
            sum += q[j];
        }
    }
    for (double& v : q) v /= sum;
    return q;
}

}  // namespace tigs
