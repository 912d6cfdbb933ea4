#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>

#include "tigs/config.hpp"
#include "tigs/errors.hpp"
#include "tigs/mask.hpp"
#include "tigs/npy.hpp"
#include "tigs/rng.hpp"
#include "tigs/tensor.hpp"
#include "test_util.hpp"

using namespace tigs;
using testutil::temp_path;

TEST_CASE("npy round trip for a well-formed [1,2,4,4] tensor") {
    Rng rng(11);
    auto t = testutil::random_logits(rng, 1, 2, 4, 4);
    std::string path = temp_path("roundtrip.npy");
    save_tensor(t, path);
    auto back = load_tensor(path);
    CHECK(back.layers == 1);
    CHECK(back.heads == 2);
    CHECK(back.queries == 4);
    CHECK(back.keys == 4);
    CHECK(back == t);
}

TEST_CASE("round trip preserves kind, causality and payload bit-exactly") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::int64_t q = 1 + static_cast<std::int64_t>(rng.below(6));
        std::int64_t k = q + static_cast<std::int64_t>(rng.below(4));
        bool causal = rng.below(2) == 0 && q == k;
        auto t = causal ? testutil::random_probabilities(rng, 2, 2, q, k, true)
                        : testutil::random_logits(rng, 2, 2, q, k);
        std::string path = temp_path("roundtrip_prop.npy");
        save_tensor(t, path);
        CHECK(load_tensor(path) == t);
    }
}

TEST_CASE("repeated saves are byte-identical") {
    Rng rng(13);
    auto t = testutil::random_logits(rng, 2, 3, 5, 5);
    std::string a = temp_path("det_a.npy");
    std::string b = temp_path("det_b.npy");
    save_tensor(t, a);
    save_tensor(t, b);
    CHECK(testutil::slurp(a) == testutil::slurp(b));
    save_tensor(t, a);
    CHECK(testutil::slurp(a) == testutil::slurp(b));
}

TEST_CASE("written header is 64-byte aligned and newline terminated") {
    Rng rng(14);
    auto t = testutil::random_logits(rng, 1, 1, 3, 3);
    std::string path = temp_path("header.npy");
    save_tensor(t, path);
    std::string bytes = testutil::slurp(path);
    REQUIRE(bytes.size() > 10);
    std::size_t header_len = static_cast<unsigned char>(bytes[8]) |
                             (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    CHECK((10 + header_len) % 64 == 0);
    CHECK(bytes[10 + header_len - 1] == '\n');
    CHECK(bytes.substr(1, 5) == "NUMPY");
}

TEST_CASE("corrupted magic bytes raise FormatError") {
    Rng rng(15);
    auto t = testutil::random_logits(rng, 1, 1, 2, 2);
    std::string path = temp_path("corrupt.npy");
    save_tensor(t, path);
    std::string bytes = testutil::slurp(path);
    bytes[0] = 'X';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
    out.close();
    CHECK_THROWS_AS(load_tensor(path), FormatError);
}

TEST_CASE("rank-2 files are promoted to [1,1,Q,K] with values unchanged") {
    std::vector<double> values(16);
    for (std::size_t i = 0; i < 16; ++i) values[i] = 0.25 * static_cast<double>(i) - 1.0;
    std::string path = temp_path("rank2.npy");
    npy::write_npy(path, {4, 4}, values);
    auto t = load_tensor(path);
    CHECK(t.layers == 1);
    CHECK(t.heads == 1);
    CHECK(t.queries == 4);
    CHECK(t.keys == 4);
    CHECK(t.data == values);
}

TEST_CASE("rank-3 files are rejected with ShapeError") {
    std::vector<double> values(8, 0.0);
    std::string path = temp_path("rank3.npy");
    npy::write_npy(path, {2, 2, 2}, values);
    CHECK_THROWS_AS(load_tensor(path), ShapeError);
}

TEST_CASE("float32 files are up-converted and saved back as float32") {
    std::vector<double> values = {0.5, -1.25, 2.0, 0.0};  // exact in f32
    std::string path = temp_path("f32.npy");
    npy::write_npy(path, {2, 2}, values, npy::Dtype::F32);
    auto t = load_tensor(path);
    CHECK(t.float32_source);
    CHECK(t.data == values);
    std::string out = temp_path("f32_out.npy");
    save_tensor(t, out);
    auto back = load_tensor(out);
    CHECK(back.float32_source);
    CHECK(back.data == values);
}

TEST_CASE("saving an invalid probabilities tensor raises ValueError before write") {
    auto t = make_tensor(1, 1, 1, 2, TensorKind::Probabilities);
    t.data = {0.9, 0.6};  // sums to 1.5
    std::string path = temp_path("invalid_prob.npy");
    std::remove(path.c_str());
    CHECK_THROWS_AS(save_tensor(t, path), ValueError);
    CHECK(!std::filesystem::exists(path));
}

TEST_CASE("probability tensors with non-finite entries are rejected on load") {
    std::vector<double> values = {0.5, std::numeric_limits<double>::quiet_NaN(), 0.25, 0.25};
    std::string path = temp_path("nan_prob.npy");
    npy::write_npy(path, {1, 4}, values);
    CHECK_THROWS_AS(load_tensor(path, TensorKind::Probabilities), ValueError);
    CHECK_NOTHROW(load_tensor(path));  // logits may carry any finite/NaN payload
}

TEST_CASE("build_content_mask applies the token-identity heuristic") {
    auto m = build_content_mask({"<s>", "The", "answer", ",", "is", "42"}, {"<s>"});
    CHECK(m.mask == std::vector<bool>{false, true, true, false, true, true});

    auto ws = build_content_mask({"  ", "..."}, {});
    CHECK(ws.mask == std::vector<bool>{false, false});

    auto sub = build_content_mask({"mn", "##emonics"}, {});
    CHECK(sub.mask == std::vector<bool>{true, true});
}

TEST_CASE("mask heuristic covers unicode punctuation, symbols and whitespace") {
    // em-dash (Pd), math sign (Sm), modifier accent (Sk), ideographic space
    auto m = build_content_mask({"—", "+", "´", "　", "—a"}, {});
    CHECK(m.mask == std::vector<bool>{false, false, false, false, true});

    // Undecodable bytes are opaque content (byte-fallback tokenizer pieces).
    std::string bad = "\xff\xfe";
    auto b = build_content_mask({bad}, {});
    CHECK(b.mask == std::vector<bool>{true});

    CHECK(is_punct_codepoint(0x2014));
    CHECK(is_punct_codepoint('+'));
    CHECK(!is_punct_codepoint('a'));
    CHECK(is_space_codepoint(0x3000));
    CHECK(!is_space_codepoint('x'));
}

TEST_CASE("build_content_mask is pointwise and idempotent") {
    std::vector<std::string> tokens = {"a", ".", "<pad>", "bb", " ", "!!"};
    std::set<std::string> markers = {"<pad>"};
    auto whole = build_content_mask(tokens, markers);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        auto single = build_content_mask({tokens[j]}, markers);
        CHECK(single.mask[0] == whole.mask[j]);
    }
    CHECK(build_content_mask(tokens, markers).mask == whole.mask);
}

TEST_CASE("content_region enumerates the causal content prefix") {
    ContentMask m;
    m.mask = {false, true, true, false};
    CHECK(content_region(m, 3, true) == std::vector<std::int64_t>{1, 2});
    CHECK(content_region(m, 0, true).empty());

    ContentMask all;
    all.mask = {true, true, true, true};
    CHECK(content_region(all, 2, true) == std::vector<std::int64_t>{0, 1, 2});
    CHECK(content_region(m, 0, false) == std::vector<std::int64_t>{1, 2});
    CHECK_THROWS_AS(content_region(m, 4, true), IndexError);
    CHECK_THROWS_AS(content_region(m, -1, true), IndexError);
}

TEST_CASE("causal content regions are nested in the row index") {
    Rng rng(16);
    ContentMask m;
    for (int j = 0; j < 24; ++j) m.mask.push_back(rng.below(2) == 0);
    for (std::int64_t i = 0; i + 1 < 24; ++i) {
        auto a = content_region(m, i, true);
        auto b = content_region(m, i + 1, true);
        CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
}

TEST_CASE("mask json round trip") {
    auto m = build_content_mask({"<s>", "hi", "."}, {"<s>"});
    std::string path = temp_path("mask.json");
    save_mask(m, path);
    auto back = load_mask(path);
    CHECK(back == m);

    ContentMask bare;
    bare.mask = {true, false, true};
    save_mask(bare, path);
    CHECK(load_mask(path).mask == bare.mask);
}

TEST_CASE("tensor validation catches shape and value violations") {
    auto t = make_tensor(1, 1, 2, 2, TensorKind::Probabilities);
    t.data = {1.0, 0.0, 0.5, 0.5};
    CHECK_NOTHROW(validate_tensor(t));
    t.data[0] = 1.2;
    CHECK_THROWS_AS(validate_tensor(t), ValueError);
    t.data = {1.0, 0.0, 0.5};
    CHECK_THROWS_AS(validate_tensor(t), ShapeError);

    auto c = make_tensor(1, 1, 2, 2, TensorKind::Probabilities, true);
    c.data = {1.0, 0.1, 0.45, 0.45};  // mass above the diagonal
    CHECK_THROWS_AS(validate_tensor(c), ValueError);

    auto lg = make_tensor(1, 1, 2, 2, TensorKind::Logits, true);
    lg.data = {0.0, 0.0, 0.0, 0.0};  // missing sentinel
    CHECK_THROWS_AS(validate_tensor(lg), ValueError);
    lg.data[1] = causal_sentinel();
    CHECK_NOTHROW(validate_tensor(lg));
}

TEST_CASE("softmax of a causal sentinel row assigns exact zero above the diagonal") {
    auto lg = make_tensor(1, 1, 3, 3, TensorKind::Logits, true);
    Rng rng(17);
    for (std::int64_t i = 0; i < 3; ++i) {
        auto row = lg.row(0, 0, i);
        for (std::int64_t j = 0; j < 3; ++j) {
            row[static_cast<std::size_t>(j)] = j > i ? causal_sentinel() : rng.uniform(-2.0, 2.0);
        }
    }
    auto probs = softmax_tensor(lg);
    CHECK(probs.at(0, 0, 0, 1) == 0.0);
    CHECK(probs.at(0, 0, 0, 2) == 0.0);
    CHECK(probs.at(0, 0, 1, 2) == 0.0);
    CHECK_NOTHROW(validate_tensor(probs));
}

TEST_CASE("config json parses snake_case fields and tracks lambda_act") {
    std::string path = temp_path("config.json");
    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"k": 7, "beta": 4.0, "tau_c": 0.25, "layers": [0, 2], "phase": "full"})";
    }
    auto cfg = load_config(path);
    CHECK(cfg.k == 7);
    CHECK(cfg.beta == 4.0);
    CHECK(cfg.tau_c == 0.25);
    CHECK(cfg.phase == Phase::Full);
    REQUIRE(cfg.layers.has_value());
    CHECK(cfg.layers->count(0) == 1);
    CHECK(cfg.layers->count(2) == 1);
    CHECK(cfg.lambda_act == doctest::Approx(0.04));  // follows 0.01 * beta
    // untouched fields keep defaults
    CHECK(cfg.tau_h == 1.5);
    CHECK(cfg.gamma_r == 4.0);

    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"lambda_act": 0.5, "beta": 2.0})";
    }
    CHECK(load_config(path).lambda_act == 0.5);  // explicit value wins

    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"betta": 1.0})";
    }
    CHECK_THROWS_AS(load_config(path), ValueError);
    {
        std::ofstream out(path, std::ios::trunc);
        out << "not json";
    }
    CHECK_THROWS_AS(load_config(path), FormatError);
}

TEST_CASE("config validation enforces the row-dominant regime") {
    TigsConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.gamma_r = cfg.gamma_c;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = TigsConfig{};
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = TigsConfig{};
    cfg.eta_c = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = TigsConfig{};
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("overrides mutate exactly the named fields") {
    TigsConfig cfg;
    bool lambda_explicit = false;
    apply_override(cfg, "beta", "2.5", lambda_explicit);
    apply_override(cfg, "phase", "decode", lambda_explicit);
    apply_override(cfg, "layers", "1,3", lambda_explicit);
    apply_override(cfg, "exclude_self", "true", lambda_explicit);
    CHECK(cfg.beta == 2.5);
    CHECK(cfg.phase == Phase::DecodeOnly);
    CHECK(cfg.exclude_self);
    CHECK(!lambda_explicit);
    REQUIRE(cfg.layers.has_value());
    CHECK(cfg.layers->size() == 2);
    TigsConfig fresh;
    CHECK(cfg.k == fresh.k);
    CHECK(cfg.tau_h == fresh.tau_h);

    apply_override(cfg, "lambda_act", "0.3", lambda_explicit);
    CHECK(lambda_explicit);
    CHECK_THROWS_AS(apply_override(cfg, "nope", "1", lambda_explicit), ValueError);
    CHECK_THROWS_AS(apply_override(cfg, "beta", "abc", lambda_explicit), ValueError);

    auto text = config_to_json(cfg);
    CHECK(text.find("\"phase\": \"decode\"") != std::string::npos);
}

TEST_CASE("phase names round trip") {
    for (auto p : {Phase::PrefillOnly, Phase::DecodeOnly, Phase::Full}) {
        CHECK(parse_phase(phase_name(p)) == p);
    }
    CHECK_THROWS_AS(parse_phase("sideways"), ValueError);
}

TEST_CASE("truncated payloads and malformed sidecars are format errors") {
    Rng rng(18);
    auto t = testutil::random_logits(rng, 1, 1, 4, 4);
    std::string path = temp_path("truncated.npy");
    save_tensor(t, path);
    std::string bytes = testutil::slurp(path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes.substr(0, bytes.size() - 16);
    }
    CHECK_THROWS_AS(load_tensor(path), FormatError);

    std::string good = temp_path("good.npy");
    save_tensor(t, good);
    {
        std::ofstream meta(sidecar_path(good), std::ios::trunc);
        meta << "{broken";
    }
    CHECK_THROWS_AS(load_tensor(good), FormatError);
}

TEST_CASE("mask files with token/mask length mismatch are rejected") {
    std::string path = temp_path("bad_mask.json");
    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"tokens": ["a", "b", "c"], "mask": [true, false]})";
    }
    CHECK_THROWS_AS(load_mask(path), ShapeError);
    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"tokens": null})";
    }
    CHECK_THROWS_AS(load_mask(path), FormatError);
}

TEST_CASE("stock defaults match the published operating point") {
    TigsConfig cfg;
    CHECK(cfg.k == 5);
    CHECK(cfg.tau_h == 1.5);
    CHECK(cfg.tau_r == 1.5);
    CHECK(cfg.tau_c == 0.5);
    CHECK(cfg.eta_h == 6.0);
    CHECK(cfg.eta_r == 6.0);
    CHECK(cfg.eta_c == 6.0);
    CHECK(cfg.beta == 8.0);
    CHECK(cfg.gamma_r > cfg.gamma_c);
    CHECK(cfg.epsilon == 1e-10);
    CHECK(cfg.lambda_act == doctest::Approx(0.01 * cfg.beta));
    CHECK(!cfg.layers.has_value());  // every layer defended
    CHECK(cfg.phase == Phase::PrefillOnly);
    CHECK(!cfg.exclude_self);
}
