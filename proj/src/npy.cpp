#include "tigs/npy.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tigs/errors.hpp"

namespace tigs::npy {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n')) ++i;
}

std::string parse_py_string(const std::string& s, std::size_t& i) {
    if (i >= s.size() || (s[i] != '\'' && s[i] != '"')) {
        throw FormatError("npy header: expected quoted string");
    }
    char quote = s[i++];
    std::string out;
    while (i < s.size() && s[i] != quote) out.push_back(s[i++]);
    if (i >= s.size()) throw FormatError("npy header: unterminated string");
    ++i;
    return out;
}

}  // namespace

Array read_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0) {
        throw FormatError("bad npy magic in " + path);
    }
    unsigned char version[2];
    if (!in.read(reinterpret_cast<char*>(version), 2)) throw FormatError("truncated npy version");
    if (version[0] != 1 || version[1] != 0) {
        throw FormatError("unsupported npy version " + std::to_string(version[0]) + "." +
                          std::to_string(version[1]));
    }
    unsigned char len_bytes[2];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 2)) throw FormatError("truncated npy header length");
    std::size_t header_len = static_cast<std::size_t>(len_bytes[0]) |
                             (static_cast<std::size_t>(len_bytes[1]) << 8);
    std::string header(header_len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
        throw FormatError("truncated npy header");
    }

    // Minimal parser for the python dict literal numpy writes.
    std::size_t i = 0;
    skip_ws(header, i);
    if (i >= header.size() || header[i] != '{') throw FormatError("npy header is not a dict");
    ++i;
    std::string descr;
    bool have_descr = false, fortran = false, have_fortran = false;
    std::vector<std::int64_t> shape;
    bool have_shape = false;
    while (true) {
        skip_ws(header, i);
        if (i >= header.size()) throw FormatError("npy header: unterminated dict");
        if (header[i] == '}') break;
        std::string key = parse_py_string(header, i);
        skip_ws(header, i);
        if (i >= header.size() || header[i] != ':') throw FormatError("npy header: expected ':'");
        ++i;
        skip_ws(header, i);
        if (key == "descr") {
            descr = parse_py_string(header, i);
            have_descr = true;
        } else if (key == "fortran_order") {
            if (header.compare(i, 5, "False") == 0) {
                fortran = false;
                i += 5;
            } else if (header.compare(i, 4, "True") == 0) {
                fortran = true;
                i += 4;
            } else {
                throw FormatError("npy header: bad fortran_order");
            }
            have_fortran = true;
        } else if (key == "shape") {
            if (header[i] != '(') throw FormatError("npy header: shape is not a tuple");
            ++i;
            while (true) {
                skip_ws(header, i);
                if (i >= header.size()) throw FormatError("npy header: unterminated shape");
                if (header[i] == ')') {
                    ++i;
                    break;
                }
                std::size_t end = 0;
                long long v = 0;
                try {
                    v = std::stoll(header.substr(i), &end);
                } catch (const std::exception&) {
                    throw FormatError("npy header: bad shape entry");
                }
                if (v < 0) throw FormatError("npy header: negative extent");
                shape.push_back(v);
                i += end;
                skip_ws(header, i);
                if (i < header.size() && header[i] == ',') ++i;
            }
            have_shape = true;
        } else {
            throw FormatError("npy header: unknown key '" + key + "'");
        }
        skip_ws(header, i);
        if (i < header.size() && header[i] == ',') ++i;
    }
    if (!have_descr || !have_fortran || !have_shape) {
        throw FormatError("npy header: missing required keys");
    }
    if (fortran) throw FormatError("fortran_order arrays are not supported");

    Dtype dtype;
    std::size_t item = 0;
    if (descr == "<f8") {
        dtype = Dtype::F64;
        item = 8;
    } else if (descr == "<f4") {
        dtype = Dtype::F32;
        item = 4;
    } else {
        throw FormatError("unsupported descr '" + descr + "'");
    }

    std::size_t count = 1;
    for (auto ext : shape) count *= static_cast<std::size_t>(ext);

    Array arr;
    arr.shape = shape;
    arr.source_dtype = dtype;
    arr.data.resize(count);
    if (dtype == Dtype::F64) {
        if (!in.read(reinterpret_cast<char*>(arr.data.data()),
                     static_cast<std::streamsize>(count * item))) {
            throw FormatError("npy payload shorter than declared shape");
        }
    } else {
        std::vector<float> buf(count);
        if (!in.read(reinterpret_cast<char*>(buf.data()),
                     static_cast<std::streamsize>(count * item))) {
            throw FormatError("npy payload shorter than declared shape");
        }
        for (std::size_t j = 0; j < count; ++j) arr.data[j] = static_cast<double>(buf[j]);
    }
    return arr;
}

void write_npy(const std::string& path, const std::vector<std::int64_t>& shape,
               const std::vector<double>& data, Dtype dtype) {
    std::ostringstream dict;
    dict << "{'descr': '" << (dtype == Dtype::F64 ? "<f8" : "<f4")
         << "', 'fortran_order': False, 'shape': (";
    for (std::size_t j = 0; j < shape.size(); ++j) {
        dict << shape[j];
        if (j + 1 < shape.size() || shape.size() == 1) dict << ",";
        if (j + 1 < shape.size()) dict << " ";
    }
    dict << "), }";
    std::string header = dict.str();
    // magic(6) + version(2) + hlen(2) + header + '\n' aligned to 64 bytes
    std::size_t unpadded = 10 + header.size() + 1;
    std::size_t padding = (64 - unpadded % 64) % 64;
    header.append(padding, ' ');
    header.push_back('\n');
    if (header.size() > 0xFFFF) throw FormatError("npy header too large");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(kMagic, 6);
    unsigned char version[2] = {1, 0};
    out.write(reinterpret_cast<char*>(version), 2);
    unsigned char len_bytes[2] = {static_cast<unsigned char>(header.size() & 0xFF),
                                  static_cast<unsigned char>((header.size() >> 8) & 0xFF)};
    out.write(reinterpret_cast<char*>(len_bytes), 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    if (dtype == Dtype::F64) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    } else {
        std::vector<float> buf(data.size());
        for (std::size_t j = 0; j < data.size(); ++j) buf[j] = static_cast<float>(data[j]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write to " + path);
}

}  // namespace tigs::npy

namespace tigs {

std::string sidecar_path(const std::string& tensor_path) { return tensor_path + ".meta.json"; }

AttentionTensor load_tensor(const std::string& path, std::optional<TensorKind> kind_override) {
    npy::Array arr = npy::read_npy(path);

    AttentionTensor t;
    if (arr.shape.size() == 4) {
        t.layers = arr.shape[0];
        t.heads = arr.shape[1];
        t.queries = arr.shape[2];
        t.keys = arr.shape[3];
    } else if (arr.shape.size() == 2) {
        t.layers = 1;
        t.heads = 1;
        t.queries = arr.shape[0];
        t.keys = arr.shape[1];
    } else {
        throw ShapeError("expected rank 2 or 4, got rank " + std::to_string(arr.shape.size()));
    }
    t.data = std::move(arr.data);
    t.float32_source = arr.source_dtype == npy::Dtype::F32;

    t.kind = TensorKind::Logits;
    t.causal = false;
    std::string meta = sidecar_path(path);
    if (std::filesystem::exists(meta)) {
        std::ifstream in(meta);
        if (!in) throw IoError("cannot open " + meta);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad sidecar " + meta + ": " + e.what());
        }
        if (j.contains("kind")) {
            std::string k = j["kind"].get<std::string>();
            if (k == "logits") {
                t.kind = TensorKind::Logits;
            } else if (k == "probabilities") {
                t.kind = TensorKind::Probabilities;
            } else {
                throw FormatError("bad sidecar kind '" + k + "'");
            }
        }
        if (j.contains("causal")) t.causal = j["causal"].get<bool>();
    }
    if (kind_override) t.kind = *kind_override;

    if (t.kind == TensorKind::Probabilities) {
        for (double v : t.data) {
            if (!std::isfinite(v)) throw ValueError("non-finite value in probabilities tensor");
        }
    }
    return t;
}

void save_tensor(const AttentionTensor& t, const std::string& path) {
    validate_tensor(t);
    npy::write_npy(path, {t.layers, t.heads, t.queries, t.keys}, t.data,
                   t.float32_source ? npy::Dtype::F32 : npy::Dtype::F64);
    nlohmann::json j;
    j["causal"] = t.causal;
    j["kind"] = t.kind == TensorKind::Logits ? "logits" : "probabilities";
    std::ofstream out(sidecar_path(path), std::ios::trunc);
    if (!out) throw IoError("cannot write " + sidecar_path(path));
    out << j.dump(2) << "\n";
}

}  // namespace tigs
