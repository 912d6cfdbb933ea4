#include "tigs/writeback.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tigs/errors.hpp"

namespace tigs {

double content_mass(std::span<const double> row, std::span<const std::int64_t> region) {
    double m = 0.0;
    for (auto j : region) m += row[static_cast<std::size_t>(j)];
    return m;
}

double rewritten_mass(double alpha_r, double m) {
    if (alpha_r <= 0.0 || alpha_r > 1.0) throw ValueError("alpha_r must be in (0,1]");
    if (m < 0.0 || m > 1.0) throw ValueError("content mass must be in [0,1]");
    return 1.0 - alpha_r * (1.0 - m);
}

RowRewrite write_back(std::span<const double> row, std::span<const double> q,
                      std::span<const std::int64_t> region, double alpha_r) {
    RowRewrite out;
    out.row_out.assign(row.begin(), row.end());
    if (region.empty()) {
        out.skipped = true;
        out.original_mass = 0.0;
        out.rewritten_mass = 0.0;
        return out;
    }
    if (q.size() != region.size()) throw ShapeError("content distribution does not match region");

    double m = std::clamp(content_mass(row, region), 0.0, 1.0);
    out.original_mass = m;
    out.rewritten_mass = m >= 1.0 ? 1.0 : rewritten_mass(alpha_r, m);
    out.content_dist.assign(q.begin(), q.end());

    std::vector<bool> in_region(row.size(), false);
    for (auto j : region) in_region[static_cast<std::size_t>(j)] = true;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (!in_region[j]) out.row_out[j] = alpha_r * row[j];
    }
    for (std::size_t r = 0; r < region.size(); ++r) {
        out.row_out[static_cast<std::size_t>(region[r])] = out.rewritten_mass * q[r];
    }
    return out;
}

double kl_divergence(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("kl_divergence operands differ in length");
    double d = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (x[j] == 0.0) continue;
        if (y[j] == 0.0) throw SupportError("x has mass outside the support of y");
        d += x[j] * std::log(x[j] / y[j]);
    }
    return d;
}

double bernoulli_kl(double rho, double m) {
    double d = 0.0;
    if (rho > 0.0) {
        if (m == 0.0) return std::numeric_limits<double>::infinity();
        d += rho * std::log(rho / m);
    }
    if (rho < 1.0) {
        if (m == 1.0) return std::numeric_limits<double>::infinity();
        d += (1.0 - rho) * std::log((1.0 - rho) / (1.0 - m));
    }
    return d;
}

std::pair<double, double> kl_decomposition_check(std::span<const double> row_out,
                                                 std::span<const double> row_in, double rho,
                                                 double m, std::span<const double> q,
                                                 std::span<const double> p) {
    if (row_out.size() != row_in.size() || q.size() != p.size()) {
        throw ShapeError("kl_decomposition_check operands inconsistent");
    }
    double lhs = kl_divergence(row_out, row_in);
    double rhs = bernoulli_kl(rho, m) + rho * kl_divergence(q, p);
    return {lhs, rhs};
}

}  // namespace tigs
