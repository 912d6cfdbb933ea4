#include "tigs/mask.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tigs/errors.hpp"

namespace tigs {

namespace {

struct CpRange {
    std::uint32_t lo, hi;
};

#include "char_class_tables.inc"

template <std::size_t N>
bool in_ranges(const CpRange (&ranges)[N], std::uint32_t cp) {
    auto it = std::upper_bound(std::begin(ranges), std::end(ranges), cp,
                               [](std::uint32_t v, const CpRange& r) { return v < r.lo; });
    if (it == std::begin(ranges)) return false;
    --it;
    return cp >= it->lo && cp <= it->hi;
}

/// Decodes one UTF-8 codepoint at s[i]. Returns false on malformed input,
/// in which case the caller treats the byte as opaque content.
bool decode_utf8(const std::string& s, std::size_t& i, std::uint32_t& cp) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    if (c < 0x80) {
        cp = c;
        len = 1;
    } else if ((c & 0xE0) == 0xC0) {
        cp = c & 0x1F;
        len = 2;
    } else if ((c & 0xF0) == 0xE0) {
        cp = c & 0x0F;
        len = 3;
    } else if ((c & 0xF8) == 0xF0) {
        cp = c & 0x07;
        len = 4;
    } else {
        return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
        unsigned char cc = static_cast<unsigned char>(s[i + k]);
        if ((cc & 0xC0) != 0x80) return false;
        cp = (cp << 6) | (cc & 0x3F);
    }
    i += len;
    return true;
}

bool is_structural_token(const std::string& tok) {
    if (tok.empty()) return true;
    bool all_space = true;
    bool all_punct = true;
    std::size_t i = 0;
    while (i < tok.size()) {
        std::uint32_t cp;
        if (!decode_utf8(tok, i, cp)) {
            // Undecodable byte: opaque content, keep the token.
            return false;
        }
        if (!is_space_codepoint(cp)) all_space = false;
        if (!is_punct_codepoint(cp)) all_punct = false;
        if (!all_space && !all_punct) return false;
    }
    return all_space || all_punct;
}

}  // namespace

bool is_punct_codepoint(std::uint32_t cp) { return in_ranges(kPunctRanges, cp); }
bool is_space_codepoint(std::uint32_t cp) { return in_ranges(kSpaceRanges, cp); }

ContentMask build_content_mask(const std::vector<std::string>& tokens,
                               const std::set<std::string>& special_markers) {
    ContentMask m;
    m.tokens = tokens;
    m.mask.resize(tokens.size());
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        m.mask[j] = !special_markers.count(tokens[j]) && !is_structural_token(tokens[j]);
    }
    return m;
}

std::vector<std::int64_t> content_region(const ContentMask& mask, std::int64_t row_index,
                                         bool causal) {
    if (row_index < 0 || row_index >= mask.size()) {
        throw IndexError("row index " + std::to_string(row_index) + " out of range for mask of " +
                         std::to_string(mask.size()));
    }
    std::vector<std::int64_t> region;
    std::int64_t limit = causal ? row_index : mask.size() - 1;
    for (std::int64_t j = 0; j <= limit; ++j) {
        if (mask.mask[static_cast<std::size_t>(j)]) region.push_back(j);
    }
    return region;
}

ContentMask load_mask(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad mask json: ") + e.what());
    }
    ContentMask m;
    if (!j.contains("mask") || !j["mask"].is_array()) {
        throw FormatError("mask file missing 'mask' array");
    }
    for (const auto& v : j["mask"]) m.mask.push_back(v.get<bool>());
    if (j.contains("tokens") && !j["tokens"].is_null()) {
        std::vector<std::string> toks;
        for (const auto& v : j["tokens"]) toks.push_back(v.get<std::string>());
        if (toks.size() != m.mask.size()) {
            throw ShapeError("mask file token/mask length mismatch");
        }
        m.tokens = std::move(toks);
    }
    return m;
}

void save_mask(const ContentMask& mask, const std::string& path) {
    nlohmann::json j;
    if (mask.tokens) {
        j["tokens"] = *mask.tokens;
    } else {
        j["tokens"] = nullptr;
    }
    j["mask"] = std::vector<bool>(mask.mask.begin(), mask.mask.end());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace tigs
