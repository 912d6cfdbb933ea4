#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tigs {

/// Per-sequence content mask over key positions; true = semantic content.
struct ContentMask {
    std::optional<std::vector<std::string>> tokens;
    std::vector<bool> mask;

    std::int64_t size() const { return static_cast<std::int64_t>(mask.size()); }

    bool operator==(const ContentMask&) const = default;
};

/// A token is non-content iff it is a special marker, empty, whitespace-only,
/// or consists solely of punctuation/symbol characters (Unicode categories
/// Pc,Pd,Ps,Pe,Pi,Pf,Po,Sm,Sk). Total: every token is classified.
ContentMask build_content_mask(const std::vector<std::string>& tokens,
                               const std::set<std::string>& special_markers);

/// Ascending content indices visible to `row_index`:
/// {j : mask[j] and (!causal or j <= row_index)}.
std::vector<std::int64_t> content_region(const ContentMask& mask, std::int64_t row_index,
                                         bool causal);

ContentMask load_mask(const std::string& path);
void save_mask(const ContentMask& mask, const std::string& path);

// Codepoint classifiers backing the mask heuristic; exposed for tests.
bool is_punct_codepoint(std::uint32_t cp);
bool is_space_codepoint(std::uint32_t cp);

}  // namespace tigs
