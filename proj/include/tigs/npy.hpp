#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tigs/tensor.hpp"

namespace tigs::npy {

enum class Dtype { F32, F64 };

struct Array {
    std::vector<std::int64_t> shape;
    std::vector<double> data;  // always promoted to f64 in memory
    Dtype source_dtype = Dtype::F64;
};

/// Raw NPY v1.0 reader / writer. The writer is deterministic: header dict in
/// fixed key order, space-padded to a 64-byte-aligned total, newline-terminated.
Array read_npy(const std::string& path);
void write_npy(const std::string& path, const std::vector<std::int64_t>& shape,
               const std::vector<double>& data, Dtype dtype = Dtype::F64);

}  // namespace tigs::npy

namespace tigs {

/// Loads an attention tensor. Rank-2 files are promoted to [1,1,Q,K]; any
/// other rank is rejected. Kind/causal come from `<path>.meta.json` when
/// present unless `kind_override` is given; default is Logits, non-causal.
AttentionTensor load_tensor(const std::string& path,
                            std::optional<TensorKind> kind_override = std::nullopt);

/// Validates the tensor, then writes `<path>` plus the `<path>.meta.json`
/// sidecar recording kind and causality. Repeated saves are byte-identical.
void save_tensor(const AttentionTensor& t, const std::string& path);

std::string sidecar_path(const std::string& tensor_path);

}  // namespace tigs
