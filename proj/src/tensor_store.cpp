#include "vlmgeo/tensor_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vlmgeo/error.hpp"

namespace vlmgeo {

using nlohmann::json;

std::string_view to_string(Method m) {
    switch (m) {
        case Method::probe: return "probe";
        case Method::pca_probe: return "pca_probe";
        case Method::centroid: return "centroid";
    }
    return "centroid";
}

Method method_from_string(std::string_view s) {
    if (s == "probe") return Method::probe;
    if (s == "pca_probe") return Method::pca_probe;
    if (s == "centroid") return Method::centroid;
    throw Error(Errc::invalid_argument, "unknown extraction method '" + std::string(s) + "'");
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 4);
    std::uint8_t* dst = out.data() + start;
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(dst, values.data(), values.size() * 4);
    } else {
        for (float f : values) {
            const auto bits = std::bit_cast<std::uint32_t>(f);
            for (int i = 0; i < 4; ++i) *dst++ = static_cast<std::uint8_t>(bits >> (8 * i));
        }
    }
}

void get_floats(const std::uint8_t* src, std::span<float> out) {
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), src, out.size() * 4);
    } else {
        for (float& f : out) {
            f = std::bit_cast<float>(get_u32(src));
            src += 4;
        }
    }
}

std::vector<std::uint8_t> frame(std::string_view magic, const json& header,
                                const std::vector<std::uint8_t>& payload) {
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(12 + text.size() + payload.size());
    out.insert(out.end(), magic.begin(), magic.end());
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

struct Framed {
    json header;
    std::span<const std::uint8_t> payload;
};

Framed unframe(std::span<const std::uint8_t> bytes, std::string_view magic) {
    if (bytes.size() < 12) throw Error(Errc::truncated, "file shorter than the 12-byte preamble");
    if (std::memcmp(bytes.data(), magic.data(), 4) != 0) {
        throw Error(Errc::bad_magic, "expected '" + std::string(magic) + "', found '" +
                                         std::string(reinterpret_cast<const char*>(bytes.data()), 4) + "'");
    }
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kFormatVersion) {
        throw Error(Errc::version_mismatch, "format version " + std::to_string(version) + " (supported: " +
                                                std::to_string(kFormatVersion) + ")");
    }
    const std::uint32_t header_len = get_u32(bytes.data() + 8);
    if (bytes.size() - 12 < header_len) throw Error(Errc::truncated, "header extends past end of file");
    Framed f;
    try {
        f.header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
    } catch (const json::exception& e) {
        throw Error(Errc::bad_header, e.what());
    }
    if (!f.header.is_object()) throw Error(Errc::bad_header, "header is not an object");
    f.payload = bytes.subspan(12 + header_len);
    return f;
}

template <typename T>
T require(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) throw Error(Errc::bad_header, std::string("missing key '") + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(Errc::bad_header, std::string("key '") + key + "': " + e.what());
    }
}

// Decodes the framing and payload without checking value invariants, so the
// validator can report on files that read_activation_set would reject.
ActivationSet decode_unchecked(std::span<const std::uint8_t> bytes) {
    const Framed f = unframe(bytes, kActivationMagic);
    ActivationSet set;
    set.model_id = require<std::string>(f.header, "model_id");
    set.dim = require<std::size_t>(f.header, "d");
    const json records = f.header.contains("sequences") ? f.header.at("sequences") : json::array();
    if (!records.is_array()) throw Error(Errc::bad_header, "'sequences' is not an array");

    std::size_t expected_offset = 0;
    for (const auto& rec : records) {
        ActivationSequence seq;
        seq.stimulus_id = require<std::string>(rec, "stimulus_id");
        seq.layer_tag = require<std::string>(rec, "layer_tag");
        seq.length = require<std::size_t>(rec, "L");
        const auto grid = require<std::vector<std::uint32_t>>(rec, "grid");
        if (grid.size() != 2) throw Error(Errc::bad_header, "grid must have two entries");
        seq.grid = {grid[0], grid[1]};
        seq.dim = set.dim;
        seq.model_id = set.model_id;
        if (rec.contains("intervention")) seq.intervention = require<std::string>(rec, "intervention");
        if (rec.contains("objects")) {
            for (const auto& obj : rec.at("objects")) {
                seq.annotations.push_back({require<std::string>(obj, "label"),
                                           require<std::vector<std::uint32_t>>(obj, "tokens")});
            }
        }
        const auto offset = require<std::size_t>(rec, "offset");
        if (offset != expected_offset) {
            throw Error(Errc::length_mismatch, "sequence '" + seq.stimulus_id + "' offset " + std::to_string(offset) +
                                                   " but preceding records end at " + std::to_string(expected_offset));
        }
        const std::size_t nbytes = seq.length * seq.dim * 4;
        if (offset + nbytes > f.payload.size()) {
            throw Error(Errc::truncated, "payload holds " + std::to_string(f.payload.size()) + " bytes, sequence '" +
                                             seq.stimulus_id + "' needs " + std::to_string(offset + nbytes));
        }
        seq.tokens.resize(seq.length * seq.dim);
        get_floats(f.payload.data() + offset, seq.tokens);
        expected_offset = offset + nbytes;
        set.sequences.push_back(std::move(seq));
    }
    if (expected_offset != f.payload.size()) {
        throw Error(Errc::length_mismatch, "header describes " + std::to_string(expected_offset) +
                                               " payload bytes, file holds " + std::to_string(f.payload.size()));
    }
    return set;
}

}  // namespace

bool bit_equal(const ActivationSequence& a, const ActivationSequence& b) {
    return a.length == b.length && a.dim == b.dim && a.stimulus_id == b.stimulus_id && a.model_id == b.model_id &&
           a.layer_tag == b.layer_tag && a.grid == b.grid && a.intervention == b.intervention &&
           a.annotations == b.annotations && a.tokens.size() == b.tokens.size() &&
           std::memcmp(a.tokens.data(), b.tokens.data(), a.tokens.size() * sizeof(float)) == 0;
}

bool bit_equal(const ActivationSet& a, const ActivationSet& b) {
    if (a.dim != b.dim || a.model_id != b.model_id || a.sequences.size() != b.sequences.size()) return false;
    for (std::size_t i = 0; i < a.sequences.size(); ++i) {
        if (!bit_equal(a.sequences[i], b.sequences[i])) return false;
    }
    return true;
}

void validate_sequence(const ActivationSequence& seq) {
    const std::string where = "sequence '" + seq.stimulus_id + "': ";
    if (seq.length < 1 || seq.dim < 1) throw Error(Errc::invariant, where + "L and d must be >= 1");
    if (seq.tokens.size() != seq.length * seq.dim) {
        throw Error(Errc::invariant, where + "token buffer holds " + std::to_string(seq.tokens.size()) +
                                         " values, expected L*d = " + std::to_string(seq.length * seq.dim));
    }
    if (static_cast<std::size_t>(seq.grid.rows) * seq.grid.cols != seq.length) {
        throw Error(Errc::invariant, where + "grid " + std::to_string(seq.grid.rows) + "x" +
                                         std::to_string(seq.grid.cols) + " != L = " + std::to_string(seq.length));
    }
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        if (!std::isfinite(seq.tokens[i])) {
            throw Error(Errc::invariant, where + "non-finite value at token " + std::to_string(i / seq.dim) +
                                             ", component " + std::to_string(i % seq.dim));
        }
    }
    for (const auto& ann : seq.annotations) {
        for (auto t : ann.tokens) {
            if (t >= seq.length) throw Error(Errc::invariant, where + "annotation '" + ann.label + "' token out of range");
        }
    }
}

void validate_set(const ActivationSet& set) {
    if (set.dim < 1) throw Error(Errc::invariant, "set dimension must be >= 1");
    for (const auto& seq : set.sequences) {
        if (seq.dim != set.dim) {
            throw Error(Errc::invariant, "sequence '" + seq.stimulus_id + "' has d = " + std::to_string(seq.dim) +
                                             ", set has d = " + std::to_string(set.dim));
        }
        if (seq.model_id != set.model_id) {
            throw Error(Errc::invariant, "sequence '" + seq.stimulus_id + "' model '" + seq.model_id +
                                             "' differs from set model '" + set.model_id + "'");
        }
        validate_sequence(seq);
    }
}

ConceptVector make_concept_vector(std::span<const double> raw, std::string label, Method method,
                                  std::string model_id, double min_norm) {
    double sq = 0.0;
    for (double x : raw) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm >= min_norm)) {
        throw Error(Errc::degenerate, "concept '" + label + "' has norm " + std::to_string(norm));
    }
    ConceptVector v;
    v.direction.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) v.direction[i] = static_cast<float>(raw[i] / norm);
    v.label = std::move(label);
    v.method = method;
    v.model_id = std::move(model_id);
    return v;
}

std::vector<std::uint8_t> encode_activation_set(const ActivationSet& set) {
    validate_set(set);
    json header;
    header["model_id"] = set.model_id;
    header["d"] = set.dim;
    json records = json::array();
    std::vector<std::uint8_t> payload;
    for (const auto& seq : set.sequences) {
        json rec;
        rec["stimulus_id"] = seq.stimulus_id;
        rec["layer_tag"] = seq.layer_tag;
        rec["L"] = seq.length;
        rec["grid"] = {seq.grid.rows, seq.grid.cols};
        rec["offset"] = payload.size();
        if (!seq.intervention.empty()) rec["intervention"] = seq.intervention;
        if (!seq.annotations.empty()) {
            json objs = json::array();
            for (const auto& ann : seq.annotations) objs.push_back({{"label", ann.label}, {"tokens", ann.tokens}});
            rec["objects"] = objs;
        }
        records.push_back(std::move(rec));
        put_floats(payload, seq.tokens);
    }
    header["sequences"] = records;
    return frame(kActivationMagic, header, payload);
}

ActivationSet decode_activation_set(std::span<const std::uint8_t> bytes) {
    ActivationSet set = decode_unchecked(bytes);
    validate_set(set);
    return set;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(Errc::io, "read failure on '" + path.string() + "'");
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io, "write failure on '" + path.string() + "'");
}

void write_activation_set(const ActivationSet& set, const std::filesystem::path& path) {
    write_file_bytes(path, encode_activation_set(set));
}

ActivationSet read_activation_set(const std::filesystem::path& path) {
    return decode_activation_set(read_file_bytes(path));
}

ValidationReport validate_container_bytes(std::span<const std::uint8_t> bytes) {
    ValidationReport report;
    ActivationSet set;
    try {
        set = decode_unchecked(bytes);
    } catch (const Error& e) {
        report.issues.emplace_back(e.what());
        return report;
    }
    if (set.dim < 1) report.issues.emplace_back("set dimension d must be >= 1");
    for (const auto& seq : set.sequences) {
        SequenceCheck check;
        check.stimulus_id = seq.stimulus_id;
        check.length = seq.length;
        check.dim = seq.dim;
        check.grid = seq.grid;
        if (seq.length < 1) report.issues.push_back("sequence '" + seq.stimulus_id + "': L must be >= 1");
        check.grid_consistent = static_cast<std::size_t>(seq.grid.rows) * seq.grid.cols == seq.length;
        if (!check.grid_consistent) {
            report.issues.push_back("sequence '" + seq.stimulus_id + "': grid " + std::to_string(seq.grid.rows) + "x" +
                                    std::to_string(seq.grid.cols) + " inconsistent with L = " +
                                    std::to_string(seq.length));
        }
        for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
            if (!std::isfinite(seq.tokens[i])) {
                check.finite = false;
                check.first_nonfinite_row = i / seq.dim;
                report.issues.push_back("sequence '" + seq.stimulus_id + "': non-finite value at token " +
                                        std::to_string(i / seq.dim));
                break;
            }
        }
        for (const auto& ann : seq.annotations) {
            for (auto t : ann.tokens) {
                if (t >= seq.length) {
                    report.issues.push_back("sequence '" + seq.stimulus_id + "': annotation '" + ann.label +
                                            "' references token " + std::to_string(t));
                    break;
                }
            }
        }
        report.sequences.push_back(std::move(check));
    }
    report.ok = report.issues.empty();
    return report;
}

ValidationReport validate_container(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const Error& e) {
        ValidationReport report;
        report.issues.emplace_back(e.what());
        return report;
    }
    return validate_container_bytes(bytes);
}

std::vector<std::uint8_t> encode_concept_vectors(std::span<const ConceptVector> vectors) {
    const std::size_t d = vectors.empty() ? 0 : vectors.front().dim();
    json header;
    header["d"] = d;
    header["count"] = vectors.size();
    json records = json::array();
    std::vector<std::uint8_t> payload;
    for (const auto& v : vectors) {
        if (v.dim() != d) throw Error(Errc::dimension_mismatch, "vector '" + v.label + "' has a different d");
        for (float x : v.direction) {
            if (!std::isfinite(x)) throw Error(Errc::invariant, "vector '" + v.label + "' is not finite");
        }
        records.push_back({{"label", v.label}, {"method", std::string(to_string(v.method))}, {"model_id", v.model_id}});
        put_floats(payload, v.direction);
    }
    header["vectors"] = records;
    return frame(kVectorMagic, header, payload);
}

std::vector<ConceptVector> decode_concept_vectors(std::span<const std::uint8_t> bytes) {
    const Framed f = unframe(bytes, kVectorMagic);
    const auto d = require<std::size_t>(f.header, "d");
    const auto count = require<std::size_t>(f.header, "count");
    const json records = require<json>(f.header, "vectors");
    if (!records.is_array() || records.size() != count) {
        throw Error(Errc::bad_header, "'vectors' must list exactly 'count' records");
    }
    if (f.payload.size() < count * d * 4) throw Error(Errc::truncated, "vector payload too short");
    if (f.payload.size() > count * d * 4) throw Error(Errc::length_mismatch, "vector payload too long");
    std::vector<ConceptVector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        ConceptVector v;
        v.label = require<std::string>(records[i], "label");
        v.method = method_from_string(require<std::string>(records[i], "method"));
        v.model_id = require<std::string>(records[i], "model_id");
        v.direction.resize(d);
        get_floats(f.payload.data() + i * d * 4, v.direction);
        out.push_back(std::move(v));
    }
    return out;
}

void write_concept_vectors(std::span<const ConceptVector> vectors, const std::filesystem::path& path) {
    write_file_bytes(path, encode_concept_vectors(vectors));
}

std::vector<ConceptVector> read_concept_vectors(const std::filesystem::path& path) {
    return decode_concept_vectors(read_file_bytes(path));
}

}  // namespace vlmgeo
