#pragma once

// Embedding dataset ingestion and canonical in-memory representation.
//
// A set on disk is two files: an EMBS matrix (binary, little-endian:
// magic "EMBS", version u16=1, dim u32, n_samples u64, then n*dim IEEE-754
// binary32 values row-major) and a manifest (UTF-8 JSON array of
// {"sample_id", "identity", "group"} objects, array order = row order).
// Vectors are L2-normalized at ingestion so that cosine similarity is a
// plain dot product everywhere else. A vector whose norm is already within
// kRenormSkipTol of 1 is stored bit-unchanged, which makes
// ingest(save(set)) the identity.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "faceaudit/error.hpp"
#include "faceaudit/kernel.hpp"
#include "faceaudit/rng.hpp"

namespace faceaudit::embset {

inline constexpr double kZeroNormTol = 1e-12;  // below this, a vector has no direction
inline constexpr double kUnitNormTol = 1e-6;   // |norm - 1| within this validates as unit
// Ingest skips the divide only when the norm is this close to 1. Tighter
// than kUnitNormTol on purpose: a row that is kept bit-unchanged must
// self-score above the duplicate-spike cutoff 1 - 1e-6, and rows produced
// by the divide land well inside this band, so re-ingesting a saved set is
// the identity.
inline constexpr double kRenormSkipTol = 1e-7;

struct SampleMeta {
    std::string sample_id;
    std::string identity;
    std::optional<std::string> group;
};

enum class DefectKind { zero_vector, non_finite, dim_mismatch, duplicate_id, non_unit_norm };

inline const char* to_string(DefectKind k) {
    switch (k) {
        case DefectKind::zero_vector: return "zero-vector";
        case DefectKind::non_finite: return "non-finite";
        case DefectKind::dim_mismatch: return "dim-mismatch";
        case DefectKind::duplicate_id: return "duplicate-id";
        case DefectKind::non_unit_norm: return "non-unit-norm";
    }
    return "?";
}

struct Defect {
    std::string sample_id;
    DefectKind kind;
};

struct ValidationReport {
    std::size_t n_samples = 0;
    std::size_t n_identities = 0;
    std::size_t samples_per_identity_min = 0;
    std::size_t samples_per_identity_max = 0;
    double samples_per_identity_median = 0.0;
    std::vector<Defect> defects;

    bool clean() const { return defects.empty(); }
};

// Immutable after construction; safe to share across threads.
class EmbeddingSet {
public:
    // Structural wrapper over already-prepared storage. Enforces only the
    // shape (matrix size = n * dim); value-level invariants are the business
    // of ingest() and validate(), so tests can build defective sets.
    static EmbeddingSet from_raw(std::uint32_t dim, std::vector<float> matrix,
                                 std::vector<SampleMeta> manifest) {
        if (dim == 0) throw_validation("embedding dim must be positive");
        if (matrix.size() != manifest.size() * static_cast<std::size_t>(dim))
            throw_validation("matrix size does not equal n_samples * dim");
        EmbeddingSet set;
        set.dim_ = dim;
        set.matrix_ = std::move(matrix);
        set.manifest_ = std::move(manifest);
        set.build_index();
        return set;
    }

    std::uint32_t dim() const { return dim_; }
    std::size_t n_samples() const { return manifest_.size(); }
    std::size_t n_identities() const { return identity_labels_.size(); }

    std::span<const float> row(std::size_t i) const {
        return {matrix_.data() + i * dim_, dim_};
    }
    const float* data() const { return matrix_.data(); }
    const std::vector<SampleMeta>& manifest() const { return manifest_; }
    const SampleMeta& meta(std::size_t i) const { return manifest_[i]; }

    // Identities in order of first appearance in the manifest.
    const std::string& identity_label(std::size_t identity) const {
        return identity_labels_[identity];
    }
    const std::vector<std::uint32_t>& identity_samples(std::size_t identity) const {
        return identity_samples_[identity];
    }
    std::uint32_t identity_of(std::size_t sample) const { return sample_identity_[sample]; }

    std::optional<std::uint32_t> find_sample(std::string_view sample_id) const {
        auto it = sample_lookup_.find(std::string(sample_id));
        if (it == sample_lookup_.end()) return std::nullopt;
        return it->second;
    }

private:
    void build_index() {
        std::unordered_map<std::string, std::uint32_t> ident_lookup;
        sample_identity_.resize(manifest_.size());
        for (std::size_t i = 0; i < manifest_.size(); ++i) {
            const auto& m = manifest_[i];
            auto [it, inserted] =
                ident_lookup.emplace(m.identity, static_cast<std::uint32_t>(identity_labels_.size()));
            if (inserted) {
                identity_labels_.push_back(m.identity);
                identity_samples_.emplace_back();
            }
            identity_samples_[it->second].push_back(static_cast<std::uint32_t>(i));
            sample_identity_[i] = it->second;
            sample_lookup_.emplace(m.sample_id, static_cast<std::uint32_t>(i));
        }
    }

    std::uint32_t dim_ = 0;
    std::vector<float> matrix_;
    std::vector<SampleMeta> manifest_;
    std::vector<std::string> identity_labels_;
    std::vector<std::vector<std::uint32_t>> identity_samples_;
    std::vector<std::uint32_t> sample_identity_;
    std::unordered_map<std::string, std::uint32_t> sample_lookup_;
};

// ---------------------------------------------------------------------------
// EMBS binary format
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kMagic[4] = {'E', 'M', 'B', 'S'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 8;

inline void put_le(unsigned char* out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out[i] = static_cast<unsigned char>(v >> (8 * i));
}
inline std::uint64_t get_le(const unsigned char* in, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return v;
}

inline std::uint64_t file_size_of(std::ifstream& f) {
    f.seekg(0, std::ios::end);
    auto end = f.tellg();
    f.seekg(0, std::ios::beg);
    return static_cast<std::uint64_t>(end);
}

// Normalize one row in place. Returns the defect that prevents it, if any.
inline std::optional<DefectKind> normalize_row(float* v, std::uint32_t dim) {
    for (std::uint32_t d = 0; d < dim; ++d)
        if (!std::isfinite(v[d])) return DefectKind::non_finite;
    const double norm = std::sqrt(kernel::dot_ff(v, v, dim));
    if (norm < kZeroNormTol) return DefectKind::zero_vector;
    if (std::abs(norm - 1.0) > kRenormSkipTol) {
        for (std::uint32_t d = 0; d < dim; ++d)
            v[d] = static_cast<float>(static_cast<double>(v[d]) / norm);
    }
    return std::nullopt;
}

}  // namespace detail

struct EmbsHeader {
    std::uint32_t dim = 0;
    std::uint64_t n_samples = 0;
};

// Chunked reader over the matrix part of an EMBS file. Rows come back
// normalized with exactly the rules ingest() applies, so a streamed scan
// sees the same numbers as an in-memory one.
class EmbsReader {
public:
    explicit EmbsReader(const std::string& path) : path_(path), file_(path, std::ios::binary) {
        if (!file_) throw_io("cannot open matrix file: " + path);
        const std::uint64_t size = detail::file_size_of(file_);
        unsigned char hdr[detail::kHeaderSize];
        if (size < detail::kHeaderSize ||
            !file_.read(reinterpret_cast<char*>(hdr), detail::kHeaderSize))
            throw_data("format-violation: " + path + ": truncated EMBS header");
        if (std::memcmp(hdr, detail::kMagic, 4) != 0)
            throw_data("format-violation: " + path + ": bad magic, not an EMBS file");
        const auto version = static_cast<std::uint16_t>(detail::get_le(hdr + 4, 2));
        if (version != detail::kFormatVersion)
            throw_data("format-violation: " + path + ": unsupported EMBS version " +
                       std::to_string(version));
        header_.dim = static_cast<std::uint32_t>(detail::get_le(hdr + 6, 4));
        header_.n_samples = detail::get_le(hdr + 10, 8);
        if (header_.dim == 0)
            throw_data("format-violation: " + path + ": dim must be positive");
        const std::uint64_t expected =
            detail::kHeaderSize + header_.n_samples * static_cast<std::uint64_t>(header_.dim) * 4;
        if (size != expected)
            throw_data("format-violation: " + path + ": file size " + std::to_string(size) +
                       " does not match header (expected " + std::to_string(expected) + ")");
    }

    const EmbsHeader& header() const { return header_; }
    std::uint64_t rows_read() const { return rows_read_; }

    // Reads up to max_rows rows into out (resized to rows*dim). Rows are
    // normalized; a zero or non-finite row aborts with the row index.
    std::size_t read_chunk(std::size_t max_rows, std::vector<float>& out) {
        const std::size_t remaining = static_cast<std::size_t>(header_.n_samples - rows_read_);
        const std::size_t rows = std::min(max_rows, remaining);
        out.resize(rows * header_.dim);
        if (rows == 0) return 0;
        if (!file_.read(reinterpret_cast<char*>(out.data()),
                        static_cast<std::streamsize>(out.size() * sizeof(float))))
            throw_io("read failure on " + path_);
        for (std::size_t r = 0; r < rows; ++r) {
            if (auto defect = detail::normalize_row(out.data() + r * header_.dim, header_.dim))
                throw_data(std::string(to_string(*defect)) + ": " + path_ + " row " +
                           std::to_string(rows_read_ + r));
        }
        rows_read_ += rows;
        return rows;
    }

    void rewind() {
        file_.clear();
        file_.seekg(static_cast<std::streamoff>(detail::kHeaderSize), std::ios::beg);
        rows_read_ = 0;
    }

private:
    std::string path_;
    std::ifstream file_;
    EmbsHeader header_;
    std::uint64_t rows_read_ = 0;
};

inline void write_embs(const std::string& path, std::uint32_t dim,
                       std::span<const float> matrix) {
    if (dim == 0) throw_validation("embedding dim must be positive");
    if (matrix.size() % dim != 0) throw_validation("matrix size is not a multiple of dim");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("cannot open for writing: " + path);
    unsigned char hdr[detail::kHeaderSize];
    std::memcpy(hdr, detail::kMagic, 4);
    detail::put_le(hdr + 4, detail::kFormatVersion, 2);
    detail::put_le(hdr + 6, dim, 4);
    detail::put_le(hdr + 10, matrix.size() / dim, 8);
    f.write(reinterpret_cast<const char*>(hdr), detail::kHeaderSize);
    f.write(reinterpret_cast<const char*>(matrix.data()),
            static_cast<std::streamsize>(matrix.size() * sizeof(float)));
    if (!f) throw_io("write failure on " + path);
}

// ---------------------------------------------------------------------------
// Manifest JSON
// ---------------------------------------------------------------------------

inline std::vector<SampleMeta> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw_io("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw_data("format-violation: " + path + ": " + e.what());
    }
    if (!j.is_array()) throw_data("format-violation: " + path + ": manifest must be a JSON array");
    std::vector<SampleMeta> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& e = j[i];
        if (!e.is_object() || !e.contains("sample_id") || !e["sample_id"].is_string() ||
            !e.contains("identity") || !e["identity"].is_string())
            throw_data("format-violation: " + path + ": entry " + std::to_string(i) +
                       " must be {sample_id: str, identity: str, group: str|null}");
        SampleMeta m;
        m.sample_id = e["sample_id"].get<std::string>();
        m.identity = e["identity"].get<std::string>();
        if (e.contains("group") && !e["group"].is_null()) {
            if (!e["group"].is_string())
                throw_data("format-violation: " + path + ": entry " + std::to_string(i) +
                           ": group must be string or null");
            m.group = e["group"].get<std::string>();
        }
        if (m.identity.empty())
            throw_data("format-violation: " + path + ": entry " + std::to_string(i) + " (" +
                       m.sample_id + "): identity must be non-empty");
        out.push_back(std::move(m));
    }
    return out;
}

inline void write_manifest(const std::string& path, std::span<const SampleMeta> manifest) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : manifest) {
        nlohmann::json e;
        e["sample_id"] = m.sample_id;
        e["identity"] = m.identity;
        e["group"] = m.group ? nlohmann::json(*m.group) : nlohmann::json(nullptr);
        arr.push_back(std::move(e));
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw_io("cannot open for writing: " + path);
    f << arr.dump(2) << '\n';
    if (!f) throw_io("write failure on " + path);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline EmbeddingSet ingest(const std::string& matrix_path, const std::string& manifest_path) {
    EmbsReader reader(matrix_path);
    auto manifest = read_manifest(manifest_path);
    if (manifest.size() != reader.header().n_samples)
        throw_data("count-mismatch: manifest has " + std::to_string(manifest.size()) +
                   " rows, matrix has " + std::to_string(reader.header().n_samples));

    std::unordered_set<std::string> seen;
    seen.reserve(manifest.size());
    for (const auto& m : manifest)
        if (!seen.insert(m.sample_id).second)
            throw_data("duplicate-sample-id: " + m.sample_id);

    const std::uint32_t dim = reader.header().dim;
    std::vector<float> matrix(manifest.size() * static_cast<std::size_t>(dim));
    std::vector<float> chunk;
    std::size_t row = 0;
    while (row < manifest.size()) {
        std::size_t got;
        try {
            got = reader.read_chunk(8192, chunk);
        } catch (const Error& e) {
            // Re-raise row-level defects with the sample_id instead of the row number.
            const std::string what = e.what();
            const auto pos = what.rfind(" row ");
            if (e.kind() == ErrorKind::data_integrity && pos != std::string::npos) {
                const std::size_t bad = std::stoull(what.substr(pos + 5));
                throw_data(what.substr(0, what.find(':')) + ": sample '" +
                           manifest[bad].sample_id + "' (row " + std::to_string(bad) + ")");
            }
            throw;
        }
        std::copy(chunk.begin(), chunk.end(), matrix.begin() + row * dim);
        row += got;
    }
    return EmbeddingSet::from_raw(dim, std::move(matrix), std::move(manifest));
}

// Writes the set as <path> (EMBS matrix) plus <path>.manifest.json.
inline void save_set(const EmbeddingSet& set, const std::string& path) {
    write_embs(path, set.dim(), {set.data(), set.n_samples() * set.dim()});
    write_manifest(path + ".manifest.json", set.manifest());
}

// Loads a set bundle saved by save_set / the ingest CLI.
inline EmbeddingSet load_set(const std::string& path) {
    return ingest(path, path + ".manifest.json");
}

inline ValidationReport validate(const EmbeddingSet& set) {
    ValidationReport rep;
    rep.n_samples = set.n_samples();
    rep.n_identities = set.n_identities();

    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < set.n_samples(); ++i) {
        const auto& id = set.meta(i).sample_id;
        if (!seen.insert(id).second) rep.defects.push_back({id, DefectKind::duplicate_id});
        const auto v = set.row(i);
        bool finite = true;
        for (float x : v)
            if (!std::isfinite(x)) { finite = false; break; }
        if (!finite) {
            rep.defects.push_back({id, DefectKind::non_finite});
            continue;
        }
        const double norm = std::sqrt(kernel::dot_ff(v.data(), v.data(), v.size()));
        if (norm < kZeroNormTol)
            rep.defects.push_back({id, DefectKind::zero_vector});
        else if (std::abs(norm - 1.0) > kUnitNormTol)
            rep.defects.push_back({id, DefectKind::non_unit_norm});
    }

    if (set.n_identities() > 0) {
        std::vector<std::size_t> counts;
        counts.reserve(set.n_identities());
        for (std::size_t k = 0; k < set.n_identities(); ++k)
            counts.push_back(set.identity_samples(k).size());
        std::sort(counts.begin(), counts.end());
        rep.samples_per_identity_min = counts.front();
        rep.samples_per_identity_max = counts.back();
        const std::size_t n = counts.size();
        rep.samples_per_identity_median =
            (n % 2 == 1) ? static_cast<double>(counts[n / 2])
                         : (static_cast<double>(counts[n / 2 - 1]) +
                            static_cast<double>(counts[n / 2])) / 2.0;
    }
    return rep;
}

// Keeps ceil(fraction * n_identities) identities drawn uniformly without
// replacement; sample order of the survivors is preserved.
inline EmbeddingSet subset(const EmbeddingSet& set, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw_validation("identity fraction must be in (0, 1]");
    const std::size_t total = set.n_identities();
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total)));
    if (keep < 2) throw_data("too-few-identities: subset would keep " + std::to_string(keep));

    std::vector<std::uint32_t> ids(total);
    for (std::size_t k = 0; k < total; ++k) ids[k] = static_cast<std::uint32_t>(k);
    Rng rng(seed);
    for (std::size_t k = 0; k < keep; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.below(total - k));
        std::swap(ids[k], ids[j]);
    }
    std::vector<bool> selected(total, false);
    for (std::size_t k = 0; k < keep; ++k) selected[ids[k]] = true;

    std::vector<float> matrix;
    std::vector<SampleMeta> manifest;
    for (std::size_t i = 0; i < set.n_samples(); ++i) {
        if (!selected[set.identity_of(i)]) continue;
        const auto v = set.row(i);
        matrix.insert(matrix.end(), v.begin(), v.end());
        manifest.push_back(set.meta(i));
    }
    return EmbeddingSet::from_raw(set.dim(), std::move(matrix), std::move(manifest));
}

}  // namespace faceaudit::embset
