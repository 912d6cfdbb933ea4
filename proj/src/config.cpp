#include "tigs/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "tigs/errors.hpp"

namespace tigs {

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::PrefillOnly: return "prefill";
        case Phase::DecodeOnly: return "decode";
        case Phase::Full: return "full";
    }
    return "prefill";
}

Phase parse_phase(const std::string& name) {
    if (name == "prefill") return Phase::PrefillOnly;
    if (name == "decode") return Phase::DecodeOnly;
    if (name == "full") return Phase::Full;
    throw ValueError("unknown phase '" + name + "'");
}

void TigsConfig::validate() const {
    if (k < 1) throw ValueError("k must be >= 1");
    if (beta < 0.0) throw ValueError("beta must be >= 0");
    if (eta_h <= 0.0 || eta_r <= 0.0 || eta_c <= 0.0) throw ValueError("gate slopes must be > 0");
    if (gamma_c <= 0.0 || gamma_r <= 0.0) throw ValueError("shrinkage gains must be > 0");
    if (gamma_r <= gamma_c) throw ValueError("gamma_r must exceed gamma_c (row-dominant regime)");
    if (epsilon <= 0.0) throw ValueError("epsilon must be > 0");
    if (lambda_act <= 0.0) throw ValueError("lambda_act must be > 0");
}

namespace {

void assign_from_json(TigsConfig& cfg, const nlohmann::json& j, bool& lambda_act_explicit) {
    static const std::set<std::string> known = {
        "k",       "beta",    "tau_h",   "tau_r",   "tau_c",        "eta_h",
        "eta_r",   "eta_c",   "gamma_c", "gamma_r", "epsilon",      "layers",
        "phase",   "lambda_act", "exclude_self"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ValueError("unknown config field '" + key + "'");
    }
    if (j.contains("k")) cfg.k = j["k"].get<std::int64_t>();
    if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
    if (j.contains("tau_h")) cfg.tau_h = j["tau_h"].get<double>();
    if (j.contains("tau_r")) cfg.tau_r = j["tau_r"].get<double>();
    if (j.contains("tau_c")) cfg.tau_c = j["tau_c"].get<double>();
    if (j.contains("eta_h")) cfg.eta_h = j["eta_h"].get<double>();
    if (j.contains("eta_r")) cfg.eta_r = j["eta_r"].get<double>();
    if (j.contains("eta_c")) cfg.eta_c = j["eta_c"].get<double>();
    if (j.contains("gamma_c")) cfg.gamma_c = j["gamma_c"].get<double>();
    if (j.contains("gamma_r")) cfg.gamma_r = j["gamma_r"].get<double>();
    if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
    if (j.contains("layers")) {
        if (j["layers"].is_null()) {
            cfg.layers.reset();
        } else {
            std::set<std::int64_t> s;
            for (const auto& v : j["layers"]) s.insert(v.get<std::int64_t>());
            cfg.layers = std::move(s);
        }
    }
    if (j.contains("phase")) cfg.phase = parse_phase(j["phase"].get<std::string>());
    if (j.contains("lambda_act")) {
        cfg.lambda_act = j["lambda_act"].get<double>();
        lambda_act_explicit = true;
    }
    if (j.contains("exclude_self")) cfg.exclude_self = j["exclude_self"].get<bool>();
}

}  // namespace

TigsConfig load_config(const std::string& path, bool* lambda_act_explicit) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad config json: ") + e.what());
    }
    TigsConfig cfg;
    bool explicit_here = false;
    assign_from_json(cfg, j, explicit_here);
    if (!explicit_here) cfg.lambda_act = cfg.beta > 0.0 ? 0.01 * cfg.beta : 0.08;
    if (lambda_act_explicit) *lambda_act_explicit = explicit_here;
    cfg.validate();
    return cfg;
}

void apply_override(TigsConfig& cfg, const std::string& key, const std::string& value,
                    bool& lambda_act_explicit) {
    nlohmann::json j;
    if (key == "phase") {
        j[key] = value;
    } else if (key == "exclude_self") {
        j[key] = value == "true" || value == "1";
    } else if (key == "layers") {
        nlohmann::json arr = nlohmann::json::array();
        std::size_t pos = 0;
        while (pos < value.size()) {
            std::size_t comma = value.find(',', pos);
            std::string tok = value.substr(pos, comma == std::string::npos ? comma : comma - pos);
            try {
                arr.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                throw ValueError("bad layer index '" + tok + "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        j[key] = arr;
    } else if (key == "k") {
        try {
            j[key] = std::stoll(value);
        } catch (const std::exception&) {
            throw ValueError("bad integer for k: '" + value + "'");
        }
    } else {
        try {
            std::size_t end = 0;
            double d = std::stod(value, &end);
            if (end != value.size()) throw ValueError("trailing characters");
            j[key] = d;
        } catch (const std::exception&) {
            throw ValueError("bad numeric value '" + value + "' for " + key);
        }
    }
    bool explicit_now = false;
    assign_from_json(cfg, j, explicit_now);
    lambda_act_explicit = lambda_act_explicit || explicit_now;
}

std::string config_to_json(const TigsConfig& cfg) {
    nlohmann::json j;
    j["k"] = cfg.k;
    j["beta"] = cfg.beta;
    j["tau_h"] = cfg.tau_h;
    j["tau_r"] = cfg.tau_r;
    j["tau_c"] = cfg.tau_c;
    j["eta_h"] = cfg.eta_h;
    j["eta_r"] = cfg.eta_r;
    j["eta_c"] = cfg.eta_c;
    j["gamma_c"] = cfg.gamma_c;
    j["gamma_r"] = cfg.gamma_r;
    j["epsilon"] = cfg.epsilon;
    if (cfg.layers) {
        j["layers"] = *cfg.layers;
    } else {
        j["layers"] = nullptr;
    }
    j["phase"] = phase_name(cfg.phase);
    j["lambda_act"] = cfg.lambda_act;
    j["exclude_self"] = cfg.exclude_self;
    return j.dump(2);
}

}  // namespace tigs
