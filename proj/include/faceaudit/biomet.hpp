#pragma once

// Score-distribution statistics and biometric operating points.
//
// Conventions pinned here, once, for the whole toolkit:
//   - acceptance rule is score >= threshold (higher similarity = same identity)
//   - FMR(t) = share of impostor scores >= t, FNMR(t) = share of genuine < t
//   - the DET sweep enumerates every distinct score as a threshold plus one
//     sentinel above the maximum, so FMR spans [0,1] and FNMR spans [0,1]
//     exactly with no binning
//   - EER is linearly interpolated at the FMR/FNMR crossing; on a tie
//     plateau the lowest crossing threshold wins
//   - FMR100/FMR1000 report FNMR at the smallest threshold whose FMR is at
//     most the target; when only the sentinel qualifies the value saturates
//     at 1 and is flagged
//   - standard deviation uses the sample (n-1) denominator

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "faceaudit/error.hpp"

namespace faceaudit::biomet {

struct ScoreStats {
    std::size_t n = 0;
    double mean = 0.0;
    double stdev = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct DetCurve {
    std::vector<double> thresholds;  // ascending, distinct
    std::vector<double> fmr;
    std::vector<double> fnmr;
};

struct OperatingPoints {
    double eer = 0.0;
    double eer_threshold = 0.0;
    double fmr100 = 0.0;
    double fmr1000 = 0.0;
    bool fmr100_saturated = false;
    bool fmr1000_saturated = false;
};

struct Histogram {
    std::vector<double> bin_edges;      // bins + 1, strictly ascending
    std::vector<std::uint64_t> counts;  // bins
    std::uint64_t n_total = 0;
};

struct SpikeResult {
    double fraction = 0.0;
    bool flagged = false;
};

// Neumaier compensated sum; deterministic for a fixed input order.
inline double compensated_sum(std::span<const double> xs) {
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        const double t = s + x;
        c += (std::abs(s) >= std::abs(x)) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    return s + c;
}

inline ScoreStats score_stats(std::span<const double> scores) {
    if (scores.empty()) throw_data("empty-input: score_stats needs at least one score");
    ScoreStats st;
    st.n = scores.size();
    st.mean = compensated_sum(scores) / static_cast<double>(st.n);
    st.min = *std::min_element(scores.begin(), scores.end());
    st.max = *std::max_element(scores.begin(), scores.end());
    if (st.n >= 2) {
        double s = 0.0, c = 0.0;
        for (double x : scores) {
            const double d = (x - st.mean) * (x - st.mean);
            const double t = s + d;
            c += (std::abs(s) >= std::abs(d)) ? (s - t) + d : (d - t) + s;
            s = t;
        }
        st.stdev = std::sqrt((s + c) / static_cast<double>(st.n - 1));
    }
    return st;
}

inline DetCurve det_sweep(std::span<const double> genuine, std::span<const double> impostor) {
    if (genuine.empty() || impostor.empty())
        throw_data("empty-input: det_sweep needs genuine and impostor scores");

    std::vector<double> gen(genuine.begin(), genuine.end());
    std::vector<double> imp(impostor.begin(), impostor.end());
    std::sort(gen.begin(), gen.end());
    std::sort(imp.begin(), imp.end());

    DetCurve curve;
    curve.thresholds.reserve(gen.size() + imp.size() + 1);
    std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(),
               std::back_inserter(curve.thresholds));
    curve.thresholds.erase(std::unique(curve.thresholds.begin(), curve.thresholds.end()),
                           curve.thresholds.end());
    curve.thresholds.push_back(
        std::nextafter(curve.thresholds.back(), std::numeric_limits<double>::infinity()));

    const auto ng = static_cast<double>(gen.size());
    const auto ni = static_cast<double>(imp.size());
    curve.fmr.reserve(curve.thresholds.size());
    curve.fnmr.reserve(curve.thresholds.size());
    for (const double t : curve.thresholds) {
        const auto imp_below = std::lower_bound(imp.begin(), imp.end(), t) - imp.begin();
        const auto gen_below = std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
        curve.fmr.push_back((ni - static_cast<double>(imp_below)) / ni);
        curve.fnmr.push_back(static_cast<double>(gen_below) / ng);
    }
    return curve;
}

inline OperatingPoints operating_points(const DetCurve& curve) {
    if (curve.thresholds.empty() || curve.thresholds.size() != curve.fmr.size() ||
        curve.thresholds.size() != curve.fnmr.size())
        throw_validation("operating_points: malformed DET curve");

    OperatingPoints op;

    // d = fnmr - fmr is non-decreasing; the sweep pins d < 0 at the lowest
    // threshold and d > 0 at the sentinel, so a crossing always exists.
    std::size_t cross = 0;
    while (cross < curve.thresholds.size() &&
           curve.fnmr[cross] - curve.fmr[cross] < 0.0)
        ++cross;
    if (cross == curve.thresholds.size()) {
        // Degenerate curve (e.g. built by hand); fall back to the last point.
        cross = curve.thresholds.size() - 1;
    }
    const double d1 = curve.fnmr[cross] - curve.fmr[cross];
    if (cross == 0 || d1 == 0.0) {
        op.eer = (curve.fmr[cross] + curve.fnmr[cross]) / 2.0;
        op.eer_threshold = curve.thresholds[cross];
    } else {
        const std::size_t p = cross - 1;
        const double d0 = curve.fnmr[p] - curve.fmr[p];
        const double alpha = -d0 / (d1 - d0);
        const double fmr_c = curve.fmr[p] + alpha * (curve.fmr[cross] - curve.fmr[p]);
        const double fnmr_c = curve.fnmr[p] + alpha * (curve.fnmr[cross] - curve.fnmr[p]);
        op.eer = (fmr_c + fnmr_c) / 2.0;
        op.eer_threshold =
            curve.thresholds[p] + alpha * (curve.thresholds[cross] - curve.thresholds[p]);
    }

    const auto at_fmr_target = [&](double target, bool& saturated) {
        std::size_t i = 0;
        while (i < curve.thresholds.size() && curve.fmr[i] > target) ++i;
        if (i == curve.thresholds.size()) i = curve.thresholds.size() - 1;
        saturated = (i == curve.thresholds.size() - 1);
        return curve.fnmr[i];
    };
    op.fmr100 = at_fmr_target(0.01, op.fmr100_saturated);
    op.fmr1000 = at_fmr_target(0.001, op.fmr1000_saturated);
    return op;
}

inline double fdr(const ScoreStats& genuine, const ScoreStats& impostor) {
    const double var_sum = genuine.stdev * genuine.stdev + impostor.stdev * impostor.stdev;
    if (var_sum <= 0.0)
        throw_data("degenerate-variances: both score distributions have zero variance");
    const double delta = genuine.mean - impostor.mean;
    return delta * delta / var_sum;
}

inline Histogram histogram(std::span<const double> scores, std::size_t bins = 100,
                           double lo = -1.0, double hi = 1.0) {
    if (bins < 1) throw_validation("histogram: bins must be >= 1");
    if (!(lo < hi)) throw_validation("histogram: range must satisfy lo < hi");
    Histogram h;
    h.bin_edges.reserve(bins + 1);
    for (std::size_t k = 0; k <= bins; ++k)
        h.bin_edges.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins));
    h.counts.assign(bins, 0);
    for (const double x : scores) {
        const double pos = (x - lo) / (hi - lo) * static_cast<double>(bins);
        auto idx = static_cast<std::int64_t>(std::floor(pos));
        idx = std::clamp<std::int64_t>(idx, 0, static_cast<std::int64_t>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(idx)];
    }
    h.n_total = scores.size();
    return h;
}

inline SpikeResult duplicate_spike(std::span<const double> mated_scores, double eps = 1e-6) {
    if (mated_scores.empty()) throw_data("empty-input: duplicate_spike needs mated scores");
    std::uint64_t hits = 0;
    for (const double s : mated_scores)
        if (s >= 1.0 - eps) ++hits;
    SpikeResult r;
    r.fraction = static_cast<double>(hits) / static_cast<double>(mated_scores.size());
    r.flagged = r.fraction > 0.001;
    return r;
}

}  // namespace faceaudit::biomet
