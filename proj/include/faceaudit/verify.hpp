#pragma once

// LFW-style pair-list verification with k-fold cross-validation, plus
// demographic-group aggregation.
//
// Folds are contiguous blocks in file order. For each fold the decision
// threshold is chosen on the other k-1 folds only, by sweeping the distinct
// training scores and keeping the lowest threshold that maximizes training
// accuracy; the held-out fold is then scored with the rule score >= t =>
// mated. Fold std uses the sample (n-1) denominator, like every std in the
// toolkit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "faceaudit/biomet.hpp"
#include "faceaudit/embset.hpp"
#include "faceaudit/error.hpp"
#include "faceaudit/pairsample.hpp"
#include "faceaudit/simkern.hpp"

namespace faceaudit::verify {

struct PairEntry {
    std::string sample_id_a;
    std::string sample_id_b;
    pairsample::PairKind label = pairsample::PairKind::mated;
};

struct PairList {
    std::vector<PairEntry> entries;
    std::size_t fold_count = 10;
};

struct VerificationResult {
    std::vector<double> per_fold_accuracy;
    std::vector<double> per_fold_threshold;
    double mean_accuracy = 0.0;
    double std = 0.0;
};

struct GroupReport {
    std::map<std::string, VerificationResult> per_group;
    double average = 0.0;
};

struct GapResult {
    std::string best_group;
    std::string worst_group;
    double gap = 0.0;
};

// ---------------------------------------------------------------------------
// Pair-list CSV: header sample_id_a,sample_id_b,label; row order significant.
// ---------------------------------------------------------------------------

inline PairList read_pairlist(const std::string& path, std::size_t fold_count = 10) {
    std::ifstream f(path);
    if (!f) throw_io("cannot open pair list: " + path);
    PairList list;
    list.fold_count = fold_count;
    std::string line;
    if (!std::getline(f, line)) throw_data("format-violation: " + path + ": empty pair list");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "sample_id_a,sample_id_b,label")
        throw_data("format-violation: " + path +
                   ": expected header 'sample_id_a,sample_id_b,label'");
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos ||
            line.find(',', c2 + 1) != std::string::npos)
            throw_data("format-violation: " + path + ": line " + std::to_string(lineno) +
                       ": expected 3 comma-separated fields");
        PairEntry e;
        e.sample_id_a = line.substr(0, c1);
        e.sample_id_b = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string label = line.substr(c2 + 1);
        if (label == "mated")
            e.label = pairsample::PairKind::mated;
        else if (label == "nonmated")
            e.label = pairsample::PairKind::nonmated;
        else
            throw_data("format-violation: " + path + ": line " + std::to_string(lineno) +
                       ": label must be 'mated' or 'nonmated'");
        list.entries.push_back(std::move(e));
    }
    return list;
}

inline void write_pairlist(const std::string& path, std::span<const PairEntry> entries) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw_io("cannot open for writing: " + path);
    f << "sample_id_a,sample_id_b,label\n";
    for (const auto& e : entries)
        f << e.sample_id_a << ',' << e.sample_id_b << ',' << pairsample::to_string(e.label)
          << '\n';
    if (!f) throw_io("write failure on " + path);
}

// ---------------------------------------------------------------------------
// k-fold verification
// ---------------------------------------------------------------------------

namespace detail {

struct ScoredPair {
    double score;
    bool mated;
};

// Lowest threshold maximizing accuracy under score >= t => mated, candidates
// being the distinct scores present in the training block.
inline double best_threshold(std::vector<double> mated, std::vector<double> nonmated) {
    std::sort(mated.begin(), mated.end());
    std::sort(nonmated.begin(), nonmated.end());
    std::vector<double> cand;
    cand.reserve(mated.size() + nonmated.size());
    std::merge(mated.begin(), mated.end(), nonmated.begin(), nonmated.end(),
               std::back_inserter(cand));
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    double best_t = cand.front();
    std::size_t best_correct = 0;
    bool first = true;
    for (const double t : cand) {
        const auto mated_below =
            static_cast<std::size_t>(std::lower_bound(mated.begin(), mated.end(), t) -
                                     mated.begin());
        const auto nonmated_below =
            static_cast<std::size_t>(std::lower_bound(nonmated.begin(), nonmated.end(), t) -
                                     nonmated.begin());
        const std::size_t correct = (mated.size() - mated_below) + nonmated_below;
        if (first || correct > best_correct) {
            best_correct = correct;
            best_t = t;
            first = false;
        }
    }
    return best_t;
}

inline std::vector<ScoredPair> score_pairs(const embset::EmbeddingSet& set,
                                           const PairList& pairs, int workers) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> idx;
    idx.reserve(pairs.entries.size());
    for (const auto& e : pairs.entries) {
        const auto a = set.find_sample(e.sample_id_a);
        const auto b = set.find_sample(e.sample_id_b);
        if (!a || !b)
            throw_data("unresolvable-id: pair references unknown sample '" +
                       (!a ? e.sample_id_a : e.sample_id_b) + "'");
        idx.emplace_back(*a, *b);
    }
    const auto scores = simkern::pair_scores(set, idx, workers);
    std::vector<ScoredPair> out(scores.size());
    for (std::size_t p = 0; p < scores.size(); ++p)
        out[p] = {scores[p], pairs.entries[p].label == pairsample::PairKind::mated};
    return out;
}

inline VerificationResult kfold_over_scores(std::span<const ScoredPair> scored, std::size_t k) {
    const std::size_t fold_size = scored.size() / k;
    VerificationResult res;
    res.per_fold_accuracy.reserve(k);
    res.per_fold_threshold.reserve(k);
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t lo = f * fold_size;
        const std::size_t hi = lo + fold_size;
        std::vector<double> train_mated, train_nonmated;
        for (std::size_t p = 0; p < scored.size(); ++p) {
            if (p >= lo && p < hi) continue;
            (scored[p].mated ? train_mated : train_nonmated).push_back(scored[p].score);
        }
        const double t = best_threshold(std::move(train_mated), std::move(train_nonmated));
        std::size_t correct = 0;
        for (std::size_t p = lo; p < hi; ++p) {
            const bool accept = scored[p].score >= t;
            if (accept == scored[p].mated) ++correct;
        }
        res.per_fold_threshold.push_back(t);
        res.per_fold_accuracy.push_back(static_cast<double>(correct) /
                                        static_cast<double>(fold_size));
    }
    const auto st = biomet::score_stats(res.per_fold_accuracy);
    res.mean_accuracy = st.mean;
    res.std = st.stdev;
    return res;
}

}  // namespace detail

inline VerificationResult kfold_accuracy(const embset::EmbeddingSet& set, const PairList& pairs,
                                         int workers = 0) {
    const std::size_t k = pairs.fold_count;
    if (k < 2) throw_validation("fold count must be at least 2");
    if (pairs.entries.empty() || pairs.entries.size() % k != 0)
        throw_data("non-divisible-count: " + std::to_string(pairs.entries.size()) +
                   " pairs cannot split into " + std::to_string(k) + " folds");
    const auto scored = detail::score_pairs(set, pairs, workers);
    return detail::kfold_over_scores(scored, k);
}

// Unweighted mean over groups, the RFW-table "Average" arithmetic.
inline double group_average(std::span<const double> group_means) {
    if (group_means.empty()) throw_validation("group average needs at least one group");
    return biomet::compensated_sum(group_means) / static_cast<double>(group_means.size());
}

inline GroupReport group_accuracy(const embset::EmbeddingSet& set,
                                  const std::map<std::string, PairList>& group_pairlists,
                                  int workers = 0) {
    if (group_pairlists.empty()) throw_validation("group accuracy needs at least one group");
    GroupReport rep;
    std::vector<double> means;
    for (const auto& [group, pairs] : group_pairlists) {
        auto res = kfold_accuracy(set, pairs, workers);
        means.push_back(res.mean_accuracy);
        rep.per_group.emplace(group, std::move(res));
    }
    rep.average = group_average(means);
    return rep;
}

inline GapResult max_gap(const GroupReport& report) {
    if (report.per_group.size() < 2)
        throw_data("too-few-groups: gap needs at least two groups");
    GapResult g;
    double best = -1.0, worst = 2.0;
    // std::map iterates in name order, so strict comparisons keep the
    // lexicographically first group on ties.
    for (const auto& [name, res] : report.per_group) {
        if (res.mean_accuracy > best) {
            best = res.mean_accuracy;
            g.best_group = name;
        }
        if (res.mean_accuracy < worst) {
            worst = res.mean_accuracy;
            g.worst_group = name;
        }
    }
    g.gap = best - worst;
    return g;
}

// Round half-up at the given number of decimals; used when reports quote
// table-style accuracies (e.g. 4-decimal averages).
inline double round_half_up(double x, int decimals) {
    double scale = 1.0;
    for (int i = 0; i < decimals; ++i) scale *= 10.0;
    return std::floor(x * scale + 0.5) / scale;
}

}  // namespace faceaudit::verify
