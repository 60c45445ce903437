#pragma once

// Seeded sampling of mated and non-mated comparison pairs.
//
// Mated pairs are uniform over the multiset of all valid unordered
// within-identity pairs (identities weighted by C(n_i, 2)), drawn with
// replacement. Non-mated pairs use a rejection-free two-stage draw: sample i
// uniformly, then j uniformly over samples of other identities. Both kinds
// are emitted with i < j; cosine is symmetric, so the orientation carries no
// information and the canonical order keeps outputs reproducible.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "faceaudit/embset.hpp"
#include "faceaudit/error.hpp"
#include "faceaudit/rng.hpp"

namespace faceaudit::pairsample {

enum class PairKind { mated, nonmated };

inline const char* to_string(PairKind k) {
    return k == PairKind::mated ? "mated" : "nonmated";
}

enum class MatedWeighting { pairs, identities };

struct PairSample {
    PairKind kind = PairKind::mated;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    std::uint64_t seed = 0;
    std::string source_set;
};

namespace detail {

inline std::uint64_t pair_count(std::size_t n) {
    return static_cast<std::uint64_t>(n) * (n - 1) / 2;
}

// Decodes pair index p in [0, C(n,2)) to the p-th unordered pair (a, b),
// a < b, in lexicographic order. start(a) = a*(n-1) - a*(a-1)/2 is the
// offset of the first pair whose low member is a; binary search for the
// largest a with start(a) <= p.
inline std::pair<std::uint32_t, std::uint32_t> decode_pair(std::uint64_t p, std::size_t n) {
    auto start = [n](std::uint64_t a) { return a * (n - 1) - a * (a - 1) / 2; };
    std::uint64_t lo = 0, hi = n - 1;  // a is in [0, n-1)
    while (lo + 1 < hi) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        if (start(mid) <= p)
            lo = mid;
        else
            hi = mid;
    }
    const std::uint64_t a = lo;
    const std::uint64_t b = a + 1 + (p - start(a));
    return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
}

}  // namespace detail

inline std::vector<std::pair<std::uint32_t, std::uint32_t>> enumerate_mated(
    const embset::EmbeddingSet& set) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (std::size_t k = 0; k < set.n_identities(); ++k) {
        const auto& members = set.identity_samples(k);
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b)
                out.emplace_back(members[a], members[b]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::uint64_t total_mated_pairs(const embset::EmbeddingSet& set) {
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < set.n_identities(); ++k)
        total += detail::pair_count(set.identity_samples(k).size());
    return total;
}

inline PairSample sample_mated(const embset::EmbeddingSet& set, std::uint64_t n,
                               std::uint64_t seed,
                               MatedWeighting weighting = MatedWeighting::pairs) {
    // Cumulative pair counts over identities in first-appearance order.
    std::vector<std::uint64_t> cum;
    std::vector<std::uint32_t> eligible;
    cum.reserve(set.n_identities());
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < set.n_identities(); ++k) {
        const std::uint64_t c = detail::pair_count(set.identity_samples(k).size());
        if (c > 0) {
            total += c;
            cum.push_back(total);
            eligible.push_back(static_cast<std::uint32_t>(k));
        }
    }
    if (total == 0) throw_data("no-mated-pairs: no identity has two or more samples");

    PairSample out;
    out.kind = PairKind::mated;
    out.seed = seed;
    out.pairs.reserve(n);
    Rng rng(seed);
    for (std::uint64_t t = 0; t < n; ++t) {
        std::size_t which;
        std::uint64_t within;
        if (weighting == MatedWeighting::pairs) {
            const std::uint64_t r = rng.below(total);
            which = static_cast<std::size_t>(
                std::upper_bound(cum.begin(), cum.end(), r) - cum.begin());
            within = r - (which == 0 ? 0 : cum[which - 1]);
        } else {
            which = static_cast<std::size_t>(rng.below(eligible.size()));
            const auto& m = set.identity_samples(eligible[which]);
            within = rng.below(detail::pair_count(m.size()));
        }
        const auto& members = set.identity_samples(eligible[which]);
        const auto [a, b] = detail::decode_pair(within, members.size());
        out.pairs.emplace_back(members[a], members[b]);
    }
    return out;
}

inline PairSample sample_nonmated(const embset::EmbeddingSet& set, std::uint64_t n,
                                  std::uint64_t seed) {
    if (set.n_identities() < 2)
        throw_data("single-identity-set: non-mated pairs need at least two identities");

    PairSample out;
    out.kind = PairKind::nonmated;
    out.seed = seed;
    out.pairs.reserve(n);
    Rng rng(seed);
    const std::size_t total = set.n_samples();
    for (std::uint64_t t = 0; t < n; ++t) {
        const auto i = static_cast<std::uint32_t>(rng.below(total));
        const auto& exc = set.identity_samples(set.identity_of(i));  // ascending
        auto j = static_cast<std::uint32_t>(rng.below(total - exc.size()));
        for (const std::uint32_t e : exc) {
            if (e <= j)
                ++j;
            else
                break;
        }
        out.pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
    return out;
}

}  // namespace faceaudit::pairsample
