#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

namespace tigs {

enum class Phase { PrefillOnly, DecodeOnly, Full };

std::string phase_name(Phase p);
Phase parse_phase(const std::string& name);

/// Defense hyperparameters. Defaults: k=5, thresholds tau_h=tau_R=1.5,
/// tau_c=0.5, slopes 6.0, beta=8.0, gains gamma_c=1.0 / gamma_r=4.0
/// (row-dominant), epsilon=1e-10, all layers defended, prefill phase,
/// lambda_act=0.01*beta.
struct TigsConfig {
    std::int64_t k = 5;
    double beta = 8.0;
    double tau_h = 1.5;
    double tau_r = 1.5;
    double tau_c = 0.5;
    double eta_h = 6.0;
    double eta_r = 6.0;
    double eta_c = 6.0;
    double gamma_c = 1.0;
    double gamma_r = 4.0;
    double epsilon = 1e-10;
    std::optional<std::set<std::int64_t>> layers;  // nullopt = defend all layers
    Phase phase = Phase::PrefillOnly;
    double lambda_act = 0.08;
    bool exclude_self = false;

    bool defends_layer(std::int64_t layer) const {
        return !layers || layers->count(layer) > 0;
    }

    /// Throws ValueError when an invariant is violated (k >= 1, slopes and
    /// gains positive, gamma_r > gamma_c, epsilon > 0, beta >= 0).
    void validate() const;

    bool operator==(const TigsConfig&) const = default;
};

/// Parses a config JSON file; absent fields keep their defaults. When
/// lambda_act is not given it tracks 0.01*beta. `lambda_act_explicit`, when
/// non-null, reports whether the file pinned lambda_act itself.
TigsConfig load_config(const std::string& path, bool* lambda_act_explicit = nullptr);

/// Applies one `key=value` override onto `cfg`. Unknown keys throw
/// ValueError. lambda_act keeps tracking 0.01*beta unless set explicitly
/// (callers pass overrides through apply_overrides to get that behavior).
void apply_override(TigsConfig& cfg, const std::string& key, const std::string& value,
                    bool& lambda_act_explicit);

std::string config_to_json(const TigsConfig& cfg);

}  // namespace tigs
