#include <cmath>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tigs/config.hpp"
#include "tigs/diagnostics.hpp"
#include "tigs/errors.hpp"
#include "tigs/mask.hpp"
#include "tigs/npy.hpp"
#include "tigs/pipeline.hpp"
#include "tigs/screening.hpp"
#include "tigs/synth.hpp"
#include "tigs/tensor.hpp"
#include "tigs/toy_model.hpp"

namespace {

// Exit codes: 0 success, 1 usage, 2 format/io, 3 shape, 4 value.
constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitShape = 3;
constexpr int kExitValue = 4;

struct ConfigFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string phase;
    std::string layers;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("--config", flags.config_path, "config JSON file (defaults when absent)");
    cmd->add_option("--override", flags.overrides, "config override key=value (repeatable)");
    cmd->add_option("--phase", flags.phase, "prefill|decode|full")
        ->check(CLI::IsMember({"prefill", "decode", "full"}));
    cmd->add_option("--layers", flags.layers, "comma-separated defended layer indices");
}

tigs::TigsConfig effective_config(const ConfigFlags& flags, bool warn_on_default = false) {
    tigs::TigsConfig cfg;
    bool lambda_explicit = false;
    if (!flags.config_path.empty()) {
        cfg = tigs::load_config(flags.config_path, &lambda_explicit);
    } else if (warn_on_default) {
        std::cerr << "warning: no config given, using built-in defaults\n";
    }
    for (const auto& ov : flags.overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos) {
            throw tigs::ValueError("override must be key=value, got '" + ov + "'");
        }
        tigs::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1), lambda_explicit);
    }
    if (!flags.phase.empty()) cfg.phase = tigs::parse_phase(flags.phase);
    if (!flags.layers.empty()) {
        bool dummy = false;
        tigs::apply_override(cfg, "layers", flags.layers, dummy);
    }
    if (!lambda_explicit) cfg.lambda_act = cfg.beta > 0.0 ? 0.01 * cfg.beta : 0.08;
    cfg.validate();
    return cfg;
}

void write_report_file(const std::string& path, const tigs::TigsConfig& cfg,
                       const tigs::ScreeningReport& report) {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(tigs::config_to_json(cfg));
    j["layers"] = nlohmann::json::parse(tigs::report_to_json(report))["layers"];
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw tigs::IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

tigs::AttentionTensor load_probabilities(const std::string& path, bool force_probabilities) {
    auto t = force_probabilities
                 ? tigs::load_tensor(path, tigs::TensorKind::Probabilities)
                 : tigs::load_tensor(path);
    if (t.kind == tigs::TensorKind::Logits) return tigs::softmax_tensor(t);
    tigs::validate_tensor(t);
    return t;
}

/// Logit reconstruction for probability inputs: log(p + eps), except exact
/// zeros above the diagonal of a causal tensor, which map to the sentinel.
tigs::AttentionTensor to_logits(const tigs::AttentionTensor& t, double epsilon) {
    if (t.kind == tigs::TensorKind::Logits) return t;
    tigs::AttentionTensor logits = t;
    logits.kind = tigs::TensorKind::Logits;
    for (std::int64_t l = 0; l < t.layers; ++l) {
        for (std::int64_t h = 0; h < t.heads; ++h) {
            for (std::int64_t q = 0; q < t.queries; ++q) {
                auto in = t.row(l, h, q);
                auto out = logits.row(l, h, q);
                for (std::int64_t k = 0; k < t.keys; ++k) {
                    if (t.causal && k > q) {
                        out[static_cast<std::size_t>(k)] = tigs::causal_sentinel();
                    } else {
                        out[static_cast<std::size_t>(k)] =
                            std::log(in[static_cast<std::size_t>(k)] + epsilon);
                    }
                }
            }
        }
    }
    return logits;
}

int cmd_screen(const std::string& tensor_path, const std::string& mask_path,
               const ConfigFlags& flags, bool probabilities, const std::string& out_path) {
    tigs::TigsConfig cfg = effective_config(flags, true);
    tigs::AttentionTensor attn = load_probabilities(tensor_path, probabilities);
    tigs::ContentMask mask = tigs::load_mask(mask_path);
    tigs::ScreeningReport report = tigs::screen_tensor(attn, mask, cfg);
    write_report_file(out_path, cfg, report);
    return 0;
}

int cmd_smooth(const std::string& tensor_path, const std::string& mask_path,
               const ConfigFlags& flags, bool probabilities, std::int64_t prefill_len,
               const std::string& out_tensor, const std::string& out_report,
               const std::string& out_timings) {
    tigs::TigsConfig cfg = effective_config(flags, true);
    auto input = probabilities ? tigs::load_tensor(tensor_path, tigs::TensorKind::Probabilities)
                               : tigs::load_tensor(tensor_path);
    if (input.kind == tigs::TensorKind::Probabilities) {
        tigs::validate_tensor(input);
        input = to_logits(input, cfg.epsilon);
    }
    tigs::ContentMask mask = tigs::load_mask(mask_path);
    tigs::DefendedOutput out = tigs::tigs_transform(input, mask, cfg, prefill_len);
    tigs::save_tensor(out.attention_out, out_tensor);
    if (!out_report.empty()) write_report_file(out_report, cfg, out.report);
    if (!out_timings.empty()) {
        std::ofstream csv(out_timings, std::ios::trunc);
        if (!csv) throw tigs::IoError("cannot write " + out_timings);
        csv << "stage,run,nanoseconds\n";
        csv << "screening,0," << out.timing.stage1_ns << "\n";
        csv << "smoothing,0," << out.timing.stage2_ns << "\n";
        csv << "writeback,0," << out.timing.stage3_ns << "\n";
    }
    return 0;
}

int cmd_synth(std::int64_t seq_len, double delta, std::int64_t heads, std::int64_t triggered,
              std::int64_t layer_count, std::int64_t trigger_index, double noise, bool sink,
              std::int64_t split, std::uint64_t seed, const std::string& out_prefix) {
    tigs::SynthSpec spec;
    spec.seq_len = seq_len;
    spec.delta = delta;
    spec.trigger_index = trigger_index;
    spec.noise_scale = noise;
    spec.structural_sink = sink;
    spec.seed = seed;
    if (split > 0) {
        // Distributed-trigger sugar: the gap budget is spread over `split`
        // heads of the same tensor.
        triggered = split;
        spec.delta = delta / static_cast<double>(split);
        heads = std::max(heads, split);
    }
    spec.n_collapsed_heads = triggered;
    if (triggered > heads) throw tigs::ValueError("--triggered exceeds --heads");
    auto [tensor, mask, labels] =
        tigs::make_attention_suite(heads - triggered, triggered, spec, layer_count);
    tigs::save_tensor(tensor, out_prefix + ".npy");
    tigs::save_mask(mask, out_prefix + ".mask.json");
    nlohmann::json jl;
    jl["triggered"] = nlohmann::json::array();
    for (auto [l, h] : labels.triggered) jl["triggered"].push_back({l, h});
    std::ofstream out(out_prefix + ".labels.json", std::ios::trunc);
    if (!out) throw tigs::IoError("cannot write " + out_prefix + ".labels.json");
    out << jl.dump(2) << "\n";
    return 0;
}

int cmd_validate(const std::string& tensor_path) {
    tigs::AttentionTensor t = tigs::load_tensor(tensor_path);
    tigs::validate_tensor(t);
    std::cout << "ok: [" << t.layers << "," << t.heads << "," << t.queries << "," << t.keys
              << "] " << (t.kind == tigs::TensorKind::Logits ? "logits" : "probabilities")
              << (t.causal ? " causal" : "") << "\n";
    return 0;
}

int cmd_bench(const ConfigFlags& flags, std::int64_t repeats, std::int64_t warmup,
              std::uint64_t seed, const std::string& csv_path) {
    tigs::TigsConfig cfg = effective_config(flags);
    tigs::ToyModel model = tigs::make_toy_model(tigs::ToyDims{}, seed);
    tigs::BenchSummary summary = tigs::bench(model, cfg, repeats, warmup);
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) throw tigs::IoError("cannot write " + csv_path);
        csv << "stage,run,nanoseconds\n";
        for (std::size_t i = 0; i < summary.undefended_ns.size(); ++i) {
            csv << "undefended," << i << "," << summary.undefended_ns[i] << "\n";
        }
        for (std::size_t i = 0; i < summary.defended_ns.size(); ++i) {
            csv << "defended," << i << "," << summary.defended_ns[i] << "\n";
        }
    }
    auto print_arm = [](const char* name, const std::vector<std::uint64_t>& v) {
        std::cout << name << ": samples=" << v.size()
                  << " mean_ns=" << tigs::BenchSummary::mean_of(v)
                  << " median_ns=" << tigs::BenchSummary::median_of(v)
                  << " p95_ns=" << tigs::BenchSummary::p95_of(v) << "\n";
    };
    print_arm("undefended", summary.undefended_ns);
    print_arm("defended", summary.defended_ns);
    std::cout << "overhead_pct=" << summary.overhead_pct() << "\n";
    return 0;
}

int cmd_report(const std::string& report_path, double lambda_act_flag,
               const std::string& heatmap_path) {
    std::ifstream in(report_path);
    if (!in) throw tigs::IoError("cannot open " + report_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    tigs::ScreeningReport report = tigs::report_from_json(text);
    double lambda_act = lambda_act_flag;
    if (lambda_act < 0.0) {
        // Fall back to the config echoed in the report, then to the default.
        lambda_act = 0.08;
        auto j = nlohmann::json::parse(text, nullptr, false);
        if (!j.is_discarded() && j.contains("config") && j["config"].contains("lambda_act")) {
            lambda_act = j["config"]["lambda_act"].get<double>();
        }
    }
    tigs::MechanismStats stats = tigs::mechanism_stats(report, lambda_act);
    std::cout << tigs::mechanism_stats_to_json(stats) << "\n";
    if (!heatmap_path.empty()) tigs::export_rank_heatmap(report, heatmap_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"content-domain attention screening, geometric smoothing and write-back"};
    app.require_subcommand(1);

    ConfigFlags screen_flags;
    std::string screen_input, screen_mask, screen_out;
    bool screen_probabilities = false;
    auto* screen = app.add_subcommand("screen", "content-domain collapse screening");
    screen->add_option("--input", screen_input, "attention tensor (.npy)")->required();
    screen->add_option("--mask", screen_mask, "content mask (.json)")->required();
    screen->add_option("--output", screen_out, "screening report (.json)")->required();
    screen->add_flag("--probabilities", screen_probabilities, "input holds probabilities");
    add_config_flags(screen, screen_flags);

    ConfigFlags smooth_flags;
    std::string smooth_input, smooth_mask, smooth_out, smooth_report, smooth_timings;
    bool smooth_probabilities = false;
    std::int64_t smooth_prefill = -1;
    auto* smooth = app.add_subcommand("smooth", "screen, smooth and write back");
    smooth->add_option("--input", smooth_input, "attention logits tensor (.npy)")->required();
    smooth->add_option("--mask", smooth_mask, "content mask (.json)")->required();
    smooth->add_option("--output", smooth_out, "defended tensor (.npy)")->required();
    smooth->add_option("--report", smooth_report, "screening report (.json)");
    smooth->add_option("--timings", smooth_timings, "per-stage timings CSV");
    smooth->add_flag("--probabilities", smooth_probabilities,
                     "input holds probabilities; logits are reconstructed as log(p+eps)");
    smooth->add_option("--prefill-len", smooth_prefill, "rows before this index are prefill");
    add_config_flags(smooth, smooth_flags);

    std::int64_t synth_seq_len = 32, synth_heads = 8, synth_triggered = 1, synth_layers = 1,
                 synth_trigger_index = 3, synth_split = 0;
    double synth_delta = 8.0, synth_noise = 0.0;
    bool synth_sink = false;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "generate a trigger-collapse instance");
    synth->add_option("--seq-len", synth_seq_len, "sequence length");
    synth->add_option("--delta", synth_delta, "trigger logit gap");
    synth->add_option("--heads", synth_heads, "total heads per layer");
    synth->add_option("--triggered", synth_triggered, "number of triggered heads");
    synth->add_option("--layer-count", synth_layers, "number of layers");
    synth->add_option("--trigger-index", synth_trigger_index, "trigger position (content)");
    synth->add_option("--noise", synth_noise, "noise scale on non-trigger logits");
    synth->add_flag("--sink", synth_sink, "benign heads concentrate on masked token 0");
    synth->add_option("--split", synth_split, "spread --delta over this many heads");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output prefix")->required();

    std::string validate_input;
    auto* validate = app.add_subcommand("validate", "check tensor invariants");
    validate->add_option("--input", validate_input, "tensor (.npy)")->required();

    ConfigFlags bench_flags;
    std::int64_t bench_repeats = 100, bench_warmup = 10;
    std::uint64_t bench_seed = 0;
    std::string bench_csv;
    auto* bench_cmd = app.add_subcommand("bench", "defended vs undefended forward-pass timing");
    bench_cmd->add_option("--repeats", bench_repeats, "timed samples per arm");
    bench_cmd->add_option("--warmup", bench_warmup, "unrecorded warmup runs per arm");
    bench_cmd->add_option("--seed", bench_seed, "toy model seed");
    bench_cmd->add_option("--output", bench_csv, "timings CSV (stage,run,nanoseconds)");
    add_config_flags(bench_cmd, bench_flags);

    std::string report_input, report_heatmap;
    double report_lambda_act = -1.0;
    auto* report = app.add_subcommand("report", "mechanism statistics from a report");
    report->add_option("--input", report_input, "screening report (.json)")->required();
    report->add_option("--lambda-act", report_lambda_act, "activation threshold");
    report->add_option("--heatmap", report_heatmap, "write attention-rank heatmap CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*screen) {
            return cmd_screen(screen_input, screen_mask, screen_flags, screen_probabilities,
                              screen_out);
        }
        if (*smooth) {
            return cmd_smooth(smooth_input, smooth_mask, smooth_flags, smooth_probabilities,
                              smooth_prefill, smooth_out, smooth_report, smooth_timings);
        }
        if (*synth) {
            return cmd_synth(synth_seq_len, synth_delta, synth_heads, synth_triggered,
                             synth_layers, synth_trigger_index, synth_noise, synth_sink,
                             synth_split, synth_seed, synth_out);
        }
        if (*validate) return cmd_validate(validate_input);
        if (*bench_cmd) return cmd_bench(bench_flags, bench_repeats, bench_warmup, bench_seed,
                                         bench_csv);
        if (*report) return cmd_report(report_input, report_lambda_act, report_heatmap);
    } catch (const tigs::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const tigs::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const tigs::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitShape;
    } catch (const tigs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValue;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
