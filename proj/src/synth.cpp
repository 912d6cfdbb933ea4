#include "tigs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tigs/errors.hpp"
#include "tigs/rng.hpp"

namespace tigs {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    // splitmix64 finalizer over the combined stream id
    std::uint64_t x = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xbf58476d1ce4e5b9ULL) ^
                      (c * 0x94d049bb133111ebULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::vector<double> noise_row(Rng& rng, std::int64_t n, double noise_scale) {
    std::vector<double> row(static_cast<std::size_t>(n));
    for (double& v : row) v = noise_scale > 0.0 ? rng.uniform(-noise_scale, 0.0) : 0.0;
    return row;
}

std::vector<double> collapsed_row_impl(std::int64_t n, double delta, std::int64_t trigger,
                                       double noise_scale, Rng& rng) {
    std::vector<double> row = noise_row(rng, n, noise_scale);
    // Pin the non-trigger maximum to 0 so the gap is exact.
    std::int64_t arg = trigger == 0 ? 1 : 0;
    for (std::int64_t j = 0; j < n; ++j) {
        if (j != trigger && row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(arg)]) {
            arg = j;
        }
    }
    row[static_cast<std::size_t>(arg)] = 0.0;
    row[static_cast<std::size_t>(trigger)] = delta;
    return row;
}

}  // namespace

std::vector<double> make_collapsed_row(const SynthSpec& spec) {
    if (spec.seq_len < 2) throw ValueError("collapsed row needs at least 2 positions");
    if (spec.trigger_index < 0 || spec.trigger_index >= spec.seq_len) {
        throw ValueError("trigger index out of range");
    }
    if (spec.delta < 0.0) throw ValueError("delta must be >= 0");
    Rng rng(spec.seed);
    return collapsed_row_impl(spec.seq_len, spec.delta, spec.trigger_index, spec.noise_scale, rng);
}

double entropy_bound(std::int64_t n, double delta) {
    if (n < 2) throw DomainError("bound requires n >= 2");
    if (delta < 1.0) throw DomainError("bound proved only for delta >= 1");
    return static_cast<double>(n - 1) * std::exp(-delta) * (delta + 1.0);
}

std::tuple<AttentionTensor, ContentMask, SuiteLabels> make_attention_suite(
    std::int64_t benign_heads, std::int64_t triggered_heads, const SynthSpec& spec,
    std::int64_t layers) {
    if (benign_heads < 0 || triggered_heads < 0 || benign_heads + triggered_heads < 1 ||
        layers < 1) {
        throw ValueError("suite needs at least one head and one layer");
    }
    const std::int64_t n = spec.seq_len;
    if (n < 2) throw ValueError("suite needs seq_len >= 2");
    if (spec.trigger_index <= 0 || spec.trigger_index >= n) {
        throw MaskError("trigger index must land on a content position");
    }

    ContentMask mask;
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<std::size_t>(n));
    tokens.push_back("<s>");
    for (std::int64_t j = 1; j < n; ++j) tokens.push_back("tok" + std::to_string(j));
    mask.tokens = tokens;
    mask.mask.assign(static_cast<std::size_t>(n), true);
    mask.mask[0] = false;

    const std::int64_t heads = benign_heads + triggered_heads;
    const std::int64_t slots = layers * heads;
    if (triggered_heads > slots) throw ValueError("more triggered heads than slots");

    // Seeded sample of distinct (layer, head) slots for the triggered heads.
    std::vector<std::int64_t> slot_ids(static_cast<std::size_t>(slots));
    for (std::int64_t s = 0; s < slots; ++s) slot_ids[static_cast<std::size_t>(s)] = s;
    Rng slot_rng(mix_seed(spec.seed, 0x517cc1b7, 0, 0));
    for (std::int64_t s = 0; s < triggered_heads; ++s) {
        std::int64_t pick =
            s + static_cast<std::int64_t>(slot_rng.below(static_cast<std::uint64_t>(slots - s)));
        std::swap(slot_ids[static_cast<std::size_t>(s)], slot_ids[static_cast<std::size_t>(pick)]);
    }
    std::vector<bool> is_triggered(static_cast<std::size_t>(slots), false);
    SuiteLabels labels;
    std::vector<std::int64_t> picked(slot_ids.begin(), slot_ids.begin() + triggered_heads);
    std::sort(picked.begin(), picked.end());
    for (std::int64_t s : picked) {
        is_triggered[static_cast<std::size_t>(s)] = true;
        labels.triggered.emplace_back(s / heads, s % heads);
    }

    AttentionTensor t = make_tensor(layers, heads, n, n, TensorKind::Logits, false);
    for (std::int64_t l = 0; l < layers; ++l) {
        for (std::int64_t h = 0; h < heads; ++h) {
            bool trig = is_triggered[static_cast<std::size_t>(l * heads + h)];
            for (std::int64_t i = 0; i < n; ++i) {
                Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(l + 1),
                                 static_cast<std::uint64_t>(h + 1),
                                 static_cast<std::uint64_t>(i + 1)));
                std::vector<double> row;
                if (trig) {
                    row = collapsed_row_impl(n, spec.delta, spec.trigger_index, spec.noise_scale,
                                             rng);
                } else {
                    row = noise_row(rng, n, spec.noise_scale);
                    if (spec.structural_sink) row[0] = kSinkGap;
                }
                std::copy(row.begin(), row.end(), t.row(l, h, i).begin());
            }
        }
    }
    return {std::move(t), std::move(mask), std::move(labels)};
}

namespace {

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
/// A is n x n row-major. Throws ValueError on a (near-)singular system.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, std::int64_t n) {
    for (std::int64_t col = 0; col < n; ++col) {
        std::int64_t pivot = col;
        for (std::int64_t r = col + 1; r < n; ++r) {
            if (std::abs(a[static_cast<std::size_t>(r * n + col)]) >
                std::abs(a[static_cast<std::size_t>(pivot * n + col)])) {
                pivot = r;
            }
        }
        if (std::abs(a[static_cast<std::size_t>(pivot * n + col)]) < 1e-12) {
            throw ValueError("singular system in implant construction");
        }
        if (pivot != col) {
            for (std::int64_t c = 0; c < n; ++c) {
                std::swap(a[static_cast<std::size_t>(col * n + c)],
                          a[static_cast<std::size_t>(pivot * n + c)]);
            }
            std::swap(b[static_cast<std::size_t>(col)], b[static_cast<std::size_t>(pivot)]);
        }
        double d = a[static_cast<std::size_t>(col * n + col)];
        for (std::int64_t r = col + 1; r < n; ++r) {
            double f = a[static_cast<std::size_t>(r * n + col)] / d;
            if (f == 0.0) continue;
            for (std::int64_t c = col; c < n; ++c) {
                a[static_cast<std::size_t>(r * n + c)] -= f * a[static_cast<std::size_t>(col * n + c)];
            }
            b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
        }
    }
    std::vector<double> x(static_cast<std::size_t>(n));
    for (std::int64_t r = n - 1; r >= 0; --r) {
        double acc = b[static_cast<std::size_t>(r)];
        for (std::int64_t c = r + 1; c < n; ++c) {
            acc -= a[static_cast<std::size_t>(r * n + c)] * x[static_cast<std::size_t>(c)];
        }
        x[static_cast<std::size_t>(r)] = acc / a[static_cast<std::size_t>(r * n + r)];
    }
    return x;
}

}  // namespace

ToyModel implant_trigger_weights(const ToyModel& model, std::int64_t layer, std::int64_t head,
                                 std::int64_t trigger_index, double delta, std::int64_t seq_len) {
    if (layer < 0 || layer >= model.dims.layers || head < 0 || head >= model.dims.heads) {
        throw IndexError("layer/head out of range");
    }
    if (trigger_index < 0 || trigger_index >= seq_len) throw IndexError("trigger index out of range");
    if (delta < 0.0 || !std::isfinite(delta)) throw ValueError("delta must be finite and >= 0");
    ToyModel out = model;
    if (delta == 0.0) return out;
    if (seq_len > model.dims.d_model) {
        throw ValueError("implant needs seq_len <= d_model for an isolated trigger direction");
    }

    const std::int64_t d = model.dims.d_model;
    const std::int64_t dh = model.dims.d_head;
    const std::int64_t n = seq_len;
    const std::int64_t t = trigger_index;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix x = reference_embeddings(model, n);
    const auto& lw = model.layer_weights[static_cast<std::size_t>(layer)];
    Matrix q = matmul(x, lw.wq[static_cast<std::size_t>(head)]);
    Matrix k0 = matmul(x, lw.wk[static_cast<std::size_t>(head)]);

    // Direction u with x_j . u = 0 for j != t and x_t . u = 1: the residual of
    // projecting x_t onto the span of the other embeddings.
    const std::int64_t m = n - 1;
    std::vector<std::int64_t> others;
    for (std::int64_t j = 0; j < n; ++j) {
        if (j != t) others.push_back(j);
    }
    std::vector<double> gram(static_cast<std::size_t>(m * m));
    std::vector<double> rhs(static_cast<std::size_t>(m));
    for (std::int64_t a = 0; a < m; ++a) {
        for (std::int64_t b = 0; b < m; ++b) {
            double dot = 0.0;
            for (std::int64_t c = 0; c < d; ++c) {
                dot += x.at(others[static_cast<std::size_t>(a)], c) *
                       x.at(others[static_cast<std::size_t>(b)], c);
            }
            gram[static_cast<std::size_t>(a * m + b)] = dot;
        }
        double dot = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
            dot += x.at(others[static_cast<std::size_t>(a)], c) * x.at(t, c);
        }
        rhs[static_cast<std::size_t>(a)] = dot;
    }
    std::vector<double> alpha = solve_linear(std::move(gram), std::move(rhs), m);
    std::vector<double> u(static_cast<std::size_t>(d));
    for (std::int64_t c = 0; c < d; ++c) {
        double v = x.at(t, c);
        for (std::int64_t a = 0; a < m; ++a) {
            v -= alpha[static_cast<std::size_t>(a)] * x.at(others[static_cast<std::size_t>(a)], c);
        }
        u[static_cast<std::size_t>(c)] = v;
    }
    double xt_u = 0.0;
    for (std::int64_t c = 0; c < d; ++c) xt_u += x.at(t, c) * u[static_cast<std::size_t>(c)];
    if (xt_u < 1e-9) throw ValueError("trigger embedding lies in the span of the others");
    for (double& v : u) v /= xt_u;

    // Key-space direction every visible query projects onto positively.
    std::vector<double> w(static_cast<std::size_t>(dh), 0.0);
    for (std::int64_t i = t; i < n; ++i) {
        for (std::int64_t c = 0; c < dh; ++c) w[static_cast<std::size_t>(c)] += q.at(i, c);
    }
    double norm = 0.0;
    for (double v : w) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw ValueError("degenerate query directions");
    for (double& v : w) v /= norm;

    // Smallest amplitude that secures the gap in every visible row; a small
    // margin absorbs the round-off of the rank-one construction.
    const double margin = 1e-6;
    double amplitude = 0.0;
    for (std::int64_t i = t; i < n; ++i) {
        double proj = 0.0;
        for (std::int64_t c = 0; c < dh; ++c) proj += q.at(i, c) * w[static_cast<std::size_t>(c)];
        if (proj <= 1e-12) throw ValueError("query outside the implant half-space");
        double base = 0.0;
        for (std::int64_t c = 0; c < dh; ++c) base += q.at(i, c) * k0.at(t, c);
        bool any = false;
        double runner = 0.0;
        for (std::int64_t j = 0; j <= i; ++j) {
            if (j == t) continue;
            double s = 0.0;
            for (std::int64_t c = 0; c < dh; ++c) s += q.at(i, c) * k0.at(j, c);
            if (!any || s > runner) runner = s;
            any = true;
        }
        if (!any) continue;
        double needed = ((delta + margin) / scale + runner - base) / proj;
        amplitude = std::max(amplitude, needed);
    }
    if (!std::isfinite(amplitude) || amplitude > 1e12) {
        throw ValueError("requested delta is beyond numeric range");
    }

    Matrix& wk = out.layer_weights[static_cast<std::size_t>(layer)].wk[static_cast<std::size_t>(head)];
    for (std::int64_t r = 0; r < d; ++r) {
        for (std::int64_t c = 0; c < dh; ++c) {
            wk.at(r, c) += u[static_cast<std::size_t>(r)] * amplitude * w[static_cast<std::size_t>(c)];
        }
    }

    // Post check on the reference inputs.
    Matrix k1 = matmul(x, wk);
    for (std::int64_t i = t; i < n; ++i) {
        double best_other = -std::numeric_limits<double>::infinity();
        double trig = 0.0;
        for (std::int64_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::int64_t c = 0; c < dh; ++c) s += q.at(i, c) * k1.at(j, c);
            s *= scale;
            if (j == t) {
                trig = s;
            } else {
                best_other = std::max(best_other, s);
            }
        }
        if (std::isfinite(best_other) && trig - best_other < delta) {
            throw ValueError("implant verification failed");
        }
    }
    return out;
}

double dispersion_penalty(std::span<const double> collapse_scores, double epsilon) {
    if (collapse_scores.empty()) throw ValueError("dispersion penalty needs at least one score");
    double mx = collapse_scores[0];
    double mean = 0.0;
    for (double v : collapse_scores) {
        mx = std::max(mx, v);
        mean += v;
    }
    mean /= static_cast<double>(collapse_scores.size());
    return mx / (mean + epsilon);
}

std::pair<AttentionTensor, ContentMask> make_distributed_suite(double total_gap,
                                                               std::int64_t heads,
                                                               const SynthSpec& spec) {
    if (heads < 1) throw ValueError("need at least one head");
    SynthSpec split = spec;
    split.delta = total_gap / static_cast<double>(heads);
    split.n_collapsed_heads = heads;
    const std::int64_t total = std::max<std::int64_t>(8, heads);
    auto [tensor, mask, labels] = make_attention_suite(total - heads, heads, split, 1);
    return {std::move(tensor), std::move(mask)};
}

}  // namespace tigs
