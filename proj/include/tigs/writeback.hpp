#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace tigs {

/// Result of one controlled full-row reconstruction.
struct RowRewrite {
    double original_mass = 0.0;     // m
    double rewritten_mass = 0.0;    // rho = 1 - alpha_r (1 - m)
    std::vector<double> content_dist;  // q over the region
    std::vector<double> row_out;       // full reconstructed row
    bool skipped = false;              // empty region: row passed through
};

/// m = sum of row over the region (0 for an empty region).
double content_mass(std::span<const double> row, std::span<const std::int64_t> region);

/// rho = 1 - alpha_r * (1 - m); alpha_r = 1 recovers the mass-preserving
/// rewrite, alpha_r -> 0 approaches full content overwrite.
double rewritten_mass(double alpha_r, double m);

/// Minimum-KL full-row reconstruction with content shape q and content mass
/// rho: out[j] = rho * q[j] on the region, alpha_r * row[j] off it. An empty
/// region passes the row through unchanged (skipped = true). When m = 1 the
/// non-content block is vacuous and rho := 1.
RowRewrite write_back(std::span<const double> row, std::span<const double> q,
                      std::span<const std::int64_t> region, double alpha_r);

/// sum x_j log(x_j / y_j) with 0 log 0 = 0; throws SupportError when x has
/// mass where y does not.
double kl_divergence(std::span<const double> x, std::span<const double> y);

/// Bernoulli KL with the 0 log 0 convention; +inf only at unreachable
/// boundary combinations (rho > 0 with m = 0, rho < 1 with m = 1).
double bernoulli_kl(double rho, double m);

/// Returns (lhs, rhs) of the divergence decomposition of one write_back:
/// lhs = KL(row_out || row_in), rhs = KL(Bern(rho) || Bern(m)) + rho KL(q||p).
std::pair<double, double> kl_decomposition_check(std::span<const double> row_out,
                                                 std::span<const double> row_in, double rho,
                                                 double m, std::span<const double> q,
                                                 std::span<const double> p);

}  // namespace tigs
