#pragma once

// Similarity scoring over embedding sets: single-pair cosine, batch pair
// scoring, and the chunked top-K cross-set scan used by the leakage probe.
//
// Embeddings are unit-normalized at ingestion, so cosine similarity is the
// plain inner product computed by the pinned kernel. Every entry point is
// deterministic: scores are bit-identical regardless of chunk size, worker
// count, or SIMD path, and top-K ties are broken toward the lower reference
// index so results form a total order.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "faceaudit/embset.hpp"
#include "faceaudit/error.hpp"
#include "faceaudit/kernel.hpp"

namespace faceaudit::simkern {

inline constexpr std::size_t kDefaultChunkRows = 2048;

inline double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw_validation("cosine: dimension mismatch");
    return kernel::dot_ff(a.data(), b.data(), a.size());
}

inline double cosine(const embset::EmbeddingSet& set, std::uint32_t i, std::uint32_t j) {
    return cosine(set.row(i), set.row(j));
}

inline int resolve_workers(int workers) {
#ifdef _OPENMP
    if (workers > 0) return workers;
    return omp_get_max_threads();
#else
    (void)workers;
    return 1;
#endif
}

// Scores index pairs within one set. Output slot p holds the score of
// pairs[p]; the loop parallelizes over disjoint slots.
inline std::vector<double> pair_scores(const embset::EmbeddingSet& set,
                                       std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs,
                                       int workers = 0) {
    std::vector<double> scores(pairs.size());
    const auto n = static_cast<std::int64_t>(pairs.size());
    const int nw = resolve_workers(workers);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nw)
#endif
    for (std::int64_t p = 0; p < n; ++p) {
        const auto [i, j] = pairs[static_cast<std::size_t>(p)];
        scores[static_cast<std::size_t>(p)] = cosine(set.row(i), set.row(j));
    }
    (void)nw;
    return scores;
}

struct Hit {
    std::uint64_t index = 0;  // reference row
    double score = 0.0;
};

// Total order on hits: higher score first, lower index on ties.
inline bool better(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
}

struct TopK {
    std::vector<Hit> hits;  // best first
};

namespace detail {

// Bounded selector keeping the k best hits under the better() order.
class HitHeap {
public:
    explicit HitHeap(std::size_t k) : k_(k) { heap_.reserve(k); }

    void offer(const Hit& h) {
        if (heap_.size() < k_) {
            heap_.push_back(h);
            std::push_heap(heap_.begin(), heap_.end(), better);
            return;
        }
        if (better(h, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), better);
            heap_.back() = h;
            std::push_heap(heap_.begin(), heap_.end(), better);
        }
    }

    std::vector<Hit> take_sorted() {
        std::sort(heap_.begin(), heap_.end(), better);
        return std::move(heap_);
    }

private:
    std::size_t k_;
    std::vector<Hit> heap_;
};

// Core scan: queries (pre-converted to double) against reference chunks
// delivered in ascending row order by next_chunk(buffer) -> rows.
//
// Each chunk is widened to double once instead of once per query inside the
// kernel; widening is exact, so the scores are unchanged. Queries are walked
// in blocks small enough to stay cache-resident while a group of four
// reference rows is reused across the whole block, which keeps the scan on
// the fma units instead of the memory bus. Each query's heap is owned by
// exactly one block, and a heap's final content does not depend on offer
// order, so neither the block size nor the worker count can change a byte
// of the output.
template <typename NextChunk>
std::vector<TopK> scan_chunks(const std::vector<double>& queries_d, std::size_t nq,
                              std::uint32_t dim, std::size_t k, NextChunk&& next_chunk,
                              int workers) {
    std::vector<HitHeap> heaps(nq, HitHeap(k));
    std::vector<float> chunk;
    std::vector<double> chunk_d;
    std::uint64_t base = 0;
    const int nw = resolve_workers(workers);
    const std::size_t qblock = std::max<std::size_t>(1, std::size_t{32768} / dim);
    const auto nblocks = static_cast<std::int64_t>((nq + qblock - 1) / qblock);
    for (;;) {
        const std::size_t rows = next_chunk(chunk);
        if (rows == 0) break;
        chunk_d.resize(rows * dim);
        for (std::size_t i = 0; i < rows * dim; ++i)
            chunk_d[i] = static_cast<double>(chunk[i]);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nw)
#endif
        for (std::int64_t bi = 0; bi < nblocks; ++bi) {
            const std::size_t q0 = static_cast<std::size_t>(bi) * qblock;
            const std::size_t q1 = std::min(nq, q0 + qblock);
            std::size_t r = 0;
            double s[4];
            for (; r + 4 <= rows; r += 4) {
                const double* rp = chunk_d.data() + r * dim;
                for (std::size_t q = q0; q < q1; ++q) {
                    kernel::dot_dd4(queries_d.data() + q * dim, rp, rp + dim, rp + 2 * dim,
                                    rp + 3 * dim, dim, s);
                    auto& heap = heaps[q];
                    for (int t = 0; t < 4; ++t) heap.offer({base + r + t, s[t]});
                }
            }
            for (; r < rows; ++r) {
                const double* rp = chunk_d.data() + r * dim;
                for (std::size_t q = q0; q < q1; ++q)
                    heaps[q].offer({base + r, kernel::dot_dd(queries_d.data() + q * dim, rp, dim)});
            }
        }
        (void)nw;
        base += rows;
    }
    std::vector<TopK> out(nq);
    for (std::size_t q = 0; q < nq; ++q) out[q].hits = heaps[q].take_sorted();
    return out;
}

inline std::vector<double> widen(const float* m, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<double>(m[i]);
    return out;
}

}  // namespace detail

// Called after each reference chunk with (rows done, rows total).
using ProgressFn = std::function<void(std::uint64_t, std::uint64_t)>;

// Streams the reference matrix from disk in chunks; peak memory is the query
// set plus one chunk.
inline std::vector<TopK> cross_topk(const embset::EmbeddingSet& queries, embset::EmbsReader& reference,
                                    std::size_t k, std::size_t chunk_rows = kDefaultChunkRows,
                                    int workers = 0, const ProgressFn& progress = {}) {
    if (k == 0) throw_validation("top-k: k must be positive");
    if (chunk_rows == 0) throw_validation("top-k: chunk size must be positive");
    if (reference.header().dim != queries.dim())
        throw_data("count-mismatch: query dim " + std::to_string(queries.dim()) +
                   " != reference dim " + std::to_string(reference.header().dim));
    const auto queries_d = detail::widen(queries.data(), queries.n_samples() * queries.dim());
    const std::uint64_t total = reference.header().n_samples;
    return detail::scan_chunks(
        queries_d, queries.n_samples(), queries.dim(), k,
        [&](std::vector<float>& buf) {
            const std::size_t rows = reference.read_chunk(chunk_rows, buf);
            if (progress && rows > 0) progress(reference.rows_read(), total);
            return rows;
        },
        workers);
}

inline std::vector<TopK> cross_topk(const embset::EmbeddingSet& queries,
                                    const embset::EmbeddingSet& reference, std::size_t k,
                                    std::size_t chunk_rows = kDefaultChunkRows, int workers = 0) {
    if (k == 0) throw_validation("top-k: k must be positive");
    if (chunk_rows == 0) throw_validation("top-k: chunk size must be positive");
    if (reference.dim() != queries.dim())
        throw_data("count-mismatch: query dim " + std::to_string(queries.dim()) +
                   " != reference dim " + std::to_string(reference.dim()));
    const auto queries_d = detail::widen(queries.data(), queries.n_samples() * queries.dim());
    std::size_t next_row = 0;
    auto feeder = [&](std::vector<float>& buf) -> std::size_t {
        const std::size_t rows = std::min(chunk_rows, reference.n_samples() - next_row);
        buf.assign(reference.data() + next_row * reference.dim(),
                   reference.data() + (next_row + rows) * reference.dim());
        next_row += rows;
        return rows;
    };
    return detail::scan_chunks(queries_d, queries.n_samples(), queries.dim(), k, feeder, workers);
}

}  // namespace faceaudit::simkern
