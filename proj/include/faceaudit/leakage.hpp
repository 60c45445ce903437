#pragma once

// Identity-leakage audit: for every synthetic sample (or identity), how
// close does it get to a reference set of real embeddings?
//
// A single chunked scan feeds all outputs. Any pair in the global top K is
// necessarily in its own query's top K, so per-query lists of depth K are
// enough to reconstruct the global ranking exactly. The long-tail verdict
// is advisory: it flags a distribution whose mode sits below the threshold
// while at least 1% of maxima reach it.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "faceaudit/biomet.hpp"
#include "faceaudit/embset.hpp"
#include "faceaudit/error.hpp"
#include "faceaudit/simkern.hpp"

namespace faceaudit::leakage {

inline constexpr double kDefaultTailThreshold = 0.4;
inline constexpr std::size_t kDefaultTopK = 5;

enum class Mode { per_sample, per_identity };

inline const char* to_string(Mode m) {
    return m == Mode::per_sample ? "per-sample" : "per-identity";
}

struct MaxRecord {
    std::uint32_t query_index = 0;
    std::uint64_t target_index = 0;
    std::string query_id;
    std::string target_id;
    double score = 0.0;
};

struct TopPair {
    std::uint32_t query_index = 0;
    std::uint64_t target_index = 0;
    std::string query_id;
    std::string query_identity;
    std::string target_id;
    std::string target_identity;
    double score = 0.0;
};

struct LeakageSummary {
    double tail_fraction = 0.0;
    double threshold = kDefaultTailThreshold;
    biomet::Histogram histogram;
    bool long_tail = false;
};

struct LeakageReport {
    Mode mode = Mode::per_sample;
    std::vector<MaxRecord> per_query_max;
    std::vector<TopPair> top_pairs;
    LeakageSummary summary;
};

inline LeakageSummary leakage_summary(std::span<const MaxRecord> maxima,
                                      double threshold = kDefaultTailThreshold) {
    if (maxima.empty()) throw_data("empty-input: leakage summary needs at least one record");
    LeakageSummary s;
    s.threshold = threshold;
    std::vector<double> scores;
    scores.reserve(maxima.size());
    std::uint64_t tail = 0;
    for (const auto& r : maxima) {
        scores.push_back(r.score);
        if (r.score >= threshold) ++tail;
    }
    s.tail_fraction = static_cast<double>(tail) / static_cast<double>(maxima.size());
    s.histogram = biomet::histogram(scores);

    std::size_t modal = 0;
    for (std::size_t b = 1; b < s.histogram.counts.size(); ++b)
        if (s.histogram.counts[b] > s.histogram.counts[modal]) modal = b;
    const bool mode_below = s.histogram.bin_edges[modal + 1] <= threshold;
    s.long_tail = s.tail_fraction >= 0.01 && mode_below;
    return s;
}

namespace detail {

// Global pair order: score desc, query asc, target asc.
struct RankedHit {
    double score;
    std::uint32_t query;
    std::uint64_t target;
};

inline bool pair_order(const RankedHit& a, const RankedHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.query != b.query) return a.query < b.query;
    return a.target < b.target;
}

template <typename TargetMeta>
LeakageReport assemble(const embset::EmbeddingSet& synthetic, Mode mode, std::size_t top_k,
                       double threshold, const std::vector<simkern::TopK>& per_query,
                       TargetMeta&& target_meta) {
    LeakageReport rep;
    rep.mode = mode;

    auto make_record = [&](std::uint32_t q, const simkern::Hit& h) {
        MaxRecord r;
        r.query_index = q;
        r.target_index = h.index;
        r.query_id = synthetic.meta(q).sample_id;
        r.target_id = target_meta(h.index).sample_id;
        r.score = h.score;
        return r;
    };

    if (mode == Mode::per_sample) {
        rep.per_query_max.reserve(per_query.size());
        for (std::size_t q = 0; q < per_query.size(); ++q)
            rep.per_query_max.push_back(
                make_record(static_cast<std::uint32_t>(q), per_query[q].hits.front()));
    } else {
        for (std::size_t ident = 0; ident < synthetic.n_identities(); ++ident) {
            const auto& members = synthetic.identity_samples(ident);
            std::uint32_t best_q = members.front();
            simkern::Hit best = per_query[best_q].hits.front();
            for (std::size_t m = 1; m < members.size(); ++m) {
                const auto q = members[m];
                const auto& h = per_query[q].hits.front();
                const RankedHit cand{h.score, q, h.index};
                const RankedHit cur{best.score, best_q, best.index};
                if (pair_order(cand, cur)) {
                    best_q = q;
                    best = h;
                }
            }
            rep.per_query_max.push_back(make_record(best_q, best));
        }
    }

    std::vector<RankedHit> all;
    for (std::size_t q = 0; q < per_query.size(); ++q)
        for (const auto& h : per_query[q].hits)
            all.push_back({h.score, static_cast<std::uint32_t>(q), h.index});
    const std::size_t keep = std::min(top_k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                      pair_order);
    rep.top_pairs.reserve(keep);
    for (std::size_t p = 0; p < keep; ++p) {
        const auto& rh = all[p];
        TopPair tp;
        tp.query_index = rh.query;
        tp.target_index = rh.target;
        tp.query_id = synthetic.meta(rh.query).sample_id;
        tp.query_identity = synthetic.meta(rh.query).identity;
        const auto& tm = target_meta(rh.target);
        tp.target_id = tm.sample_id;
        tp.target_identity = tm.identity;
        tp.score = rh.score;
        rep.top_pairs.push_back(std::move(tp));
    }

    rep.summary = leakage_summary(rep.per_query_max, threshold);
    return rep;
}

}  // namespace detail

// In-memory run; reference manifest comes from the set itself.
inline LeakageReport run_leakage(const embset::EmbeddingSet& synthetic,
                                 const embset::EmbeddingSet& reference,
                                 Mode mode = Mode::per_sample, std::size_t top_k = kDefaultTopK,
                                 double threshold = kDefaultTailThreshold, int workers = 0,
                                 std::size_t chunk_rows = simkern::kDefaultChunkRows) {
    if (synthetic.n_samples() == 0) throw_data("empty-input: synthetic set has no samples");
    if (reference.n_samples() == 0) throw_data("empty-reference: reference set has no samples");
    const auto per_query =
        simkern::cross_topk(synthetic, reference, std::max<std::size_t>(1, top_k), chunk_rows, workers);
    return detail::assemble(synthetic, mode, top_k, threshold, per_query,
                            [&](std::uint64_t t) -> const embset::SampleMeta& {
                                return reference.meta(static_cast<std::size_t>(t));
                            });
}

// Streamed run: the reference matrix never resides in memory, only its
// manifest (needed to name the matched samples).
inline LeakageReport run_leakage(const embset::EmbeddingSet& synthetic,
                                 embset::EmbsReader& reference,
                                 std::span<const embset::SampleMeta> reference_manifest,
                                 Mode mode = Mode::per_sample, std::size_t top_k = kDefaultTopK,
                                 double threshold = kDefaultTailThreshold, int workers = 0,
                                 std::size_t chunk_rows = simkern::kDefaultChunkRows,
                                 const simkern::ProgressFn& progress = {}) {
    if (synthetic.n_samples() == 0) throw_data("empty-input: synthetic set has no samples");
    if (reference.header().n_samples == 0)
        throw_data("empty-reference: reference set has no samples");
    if (reference_manifest.size() != reference.header().n_samples)
        throw_data("count-mismatch: reference manifest has " +
                   std::to_string(reference_manifest.size()) + " rows, matrix has " +
                   std::to_string(reference.header().n_samples));
    const auto per_query = simkern::cross_topk(synthetic, reference,
                                               std::max<std::size_t>(1, top_k), chunk_rows,
                                               workers, progress);
    return detail::assemble(synthetic, mode, top_k, threshold, per_query,
                            [&](std::uint64_t t) -> const embset::SampleMeta& {
                                return reference_manifest[static_cast<std::size_t>(t)];
                            });
}

// Per-sample (or per-identity) closest-reference records without the
// top-pairs ranking; K=1 scan.
inline std::vector<MaxRecord> closest_real(const embset::EmbeddingSet& synthetic,
                                           const embset::EmbeddingSet& reference,
                                           Mode mode = Mode::per_sample, int workers = 0) {
    auto rep = run_leakage(synthetic, reference, mode, 1, kDefaultTailThreshold, workers);
    return std::move(rep.per_query_max);
}

inline std::vector<TopPair> top_pairs(const embset::EmbeddingSet& synthetic,
                                      const embset::EmbeddingSet& reference,
                                      std::size_t k = kDefaultTopK, int workers = 0) {
    auto rep = run_leakage(synthetic, reference, Mode::per_sample, k, kDefaultTailThreshold, workers);
    return std::move(rep.top_pairs);
}

}  // namespace faceaudit::leakage
