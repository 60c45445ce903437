#pragma once

// Benchmark-reliability protocol: Pearson correlation of a synthetic
// benchmark's accuracy column against real benchmarks, and verification
// consistency across identity-subset segments.
//
// Missing matrix entries are handled pairwise-complete: each pairing
// correlates only over models present in both columns and reports that
// count. A pairing that cannot be correlated (fewer than 3 shared models,
// or a zero-variance column) is reported as undefined with the reason
// instead of failing the whole assessment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "faceaudit/biomet.hpp"
#include "faceaudit/embset.hpp"
#include "faceaudit/error.hpp"
#include "faceaudit/rng.hpp"
#include "faceaudit/verify.hpp"

namespace faceaudit::benchrel {

inline double pcc(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw_validation("length-mismatch: pcc inputs must have equal length");
    if (x.size() < 3) throw_data("too-few-points: pcc needs at least 3 points");
    const auto n = static_cast<double>(x.size());
    const double mx = biomet::compensated_sum(x) / n;
    const double my = biomet::compensated_sum(y) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw_data("zero-variance: pcc undefined for a constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Accuracy matrix (model x benchmark, sparse)
// ---------------------------------------------------------------------------

struct AccuracyMatrix {
    std::vector<std::string> models;      // first-appearance order
    std::vector<std::string> benchmarks;  // first-appearance order
    std::vector<std::optional<double>> accuracy;  // dense, models x benchmarks

    std::optional<double> at(std::size_t model, std::size_t benchmark) const {
        return accuracy[model * benchmarks.size() + benchmark];
    }
    std::optional<std::size_t> benchmark_index(const std::string& name) const {
        const auto it = std::find(benchmarks.begin(), benchmarks.end(), name);
        if (it == benchmarks.end()) return std::nullopt;
        return static_cast<std::size_t>(it - benchmarks.begin());
    }
};

// CSV long format, header model,benchmark,accuracy.
inline AccuracyMatrix read_accuracy_matrix(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw_io("cannot open accuracy matrix: " + path);
    std::string line;
    if (!std::getline(f, line)) throw_data("format-violation: " + path + ": empty matrix file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "model,benchmark,accuracy")
        throw_data("format-violation: " + path + ": expected header 'model,benchmark,accuracy'");

    std::vector<std::tuple<std::string, std::string, double>> rows;
    std::map<std::string, std::size_t> model_idx, bench_idx;
    AccuracyMatrix m;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw_data("format-violation: " + path + ": line " + std::to_string(lineno) +
                       ": expected 3 comma-separated fields");
        const std::string model = line.substr(0, c1);
        const std::string bench = line.substr(c1 + 1, c2 - c1 - 1);
        double acc;
        try {
            std::size_t used = 0;
            acc = std::stod(line.substr(c2 + 1), &used);
            if (used != line.size() - c2 - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw_data("format-violation: " + path + ": line " + std::to_string(lineno) +
                       ": accuracy must be a number");
        }
        if (!(acc >= 0.0 && acc <= 1.0))
            throw_validation(path + ": line " + std::to_string(lineno) +
                             ": accuracy must be in [0,1]");
        if (model_idx.emplace(model, m.models.size()).second) m.models.push_back(model);
        if (bench_idx.emplace(bench, m.benchmarks.size()).second) m.benchmarks.push_back(bench);
        rows.emplace_back(model, bench, acc);
    }
    m.accuracy.assign(m.models.size() * m.benchmarks.size(), std::nullopt);
    for (const auto& [model, bench, acc] : rows) {
        auto& cell = m.accuracy[model_idx[model] * m.benchmarks.size() + bench_idx[bench]];
        if (cell)
            throw_data("duplicate-entry: " + path + ": (" + model + ", " + bench +
                       ") appears twice");
        cell = acc;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Benchmark assessment
// ---------------------------------------------------------------------------

struct Pairing {
    std::string benchmark;
    std::size_t n_models = 0;
    std::optional<double> pcc;   // absent when undefined
    std::string undefined_reason;  // set when pcc is absent
};

struct BenchmarkAssessment {
    std::string synthetic_benchmark;
    std::vector<Pairing> pairings;  // one per real benchmark, matrix order
};

inline BenchmarkAssessment assess_benchmark(const AccuracyMatrix& matrix,
                                            const std::string& synthetic_benchmark) {
    const auto syn_col = matrix.benchmark_index(synthetic_benchmark);
    if (!syn_col)
        throw_data("column-missing: benchmark '" + synthetic_benchmark + "' not in matrix");
    std::size_t syn_n = 0;
    for (std::size_t mi = 0; mi < matrix.models.size(); ++mi)
        if (matrix.at(mi, *syn_col)) ++syn_n;
    if (syn_n < 3)
        throw_data("insufficient-overlap: synthetic column has " + std::to_string(syn_n) +
                   " entries, needs 3");

    // Accumulate in model-name order: the correlation must not depend on the
    // row order of the input matrix.
    std::vector<std::size_t> order(matrix.models.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return matrix.models[a] < matrix.models[b];
    });

    BenchmarkAssessment rep;
    rep.synthetic_benchmark = synthetic_benchmark;
    for (std::size_t bi = 0; bi < matrix.benchmarks.size(); ++bi) {
        if (bi == *syn_col) continue;
        Pairing p;
        p.benchmark = matrix.benchmarks[bi];
        std::vector<double> xs, ys;
        for (const std::size_t mi : order) {
            const auto sx = matrix.at(mi, *syn_col);
            const auto ry = matrix.at(mi, bi);
            if (sx && ry) {
                xs.push_back(*sx);
                ys.push_back(*ry);
            }
        }
        p.n_models = xs.size();
        if (xs.size() < 3) {
            p.undefined_reason = "insufficient-overlap";
        } else {
            try {
                p.pcc = pcc(xs, ys);
            } catch (const Error& e) {
                p.undefined_reason =
                    e.kind() == ErrorKind::data_integrity ? "zero-variance" : e.what();
            }
        }
        rep.pairings.push_back(std::move(p));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Consistency across identity-subset segments
// ---------------------------------------------------------------------------

struct ConsistencyReport {
    std::vector<verify::VerificationResult> per_segment;
    std::vector<std::size_t> per_segment_pairs;  // after restriction + truncation
    std::vector<double> segment_means;
    double std = 0.0;
    double fraction = 0.0;
    std::uint64_t seed = 0;
};

// Each segment draws its own identity subset with seed ^ hash64(segment),
// restricts the pair list to pairs whose both samples survive, truncates the
// remainder so the count divides the fold count, and reruns the k-fold
// protocol.
inline ConsistencyReport consistency(const embset::EmbeddingSet& set,
                                     const verify::PairList& pairs, std::size_t segments,
                                     double fraction, std::uint64_t seed, int workers = 0) {
    if (segments < 2) throw_validation("consistency needs at least 2 segments");
    const std::size_t k = pairs.fold_count;
    if (k < 2) throw_validation("fold count must be at least 2");

    ConsistencyReport rep;
    rep.fraction = fraction;
    rep.seed = seed;
    for (std::size_t s = 0; s < segments; ++s) {
        const auto sub = embset::subset(set, fraction, seed ^ hash64(s));
        verify::PairList kept;
        kept.fold_count = k;
        for (const auto& e : pairs.entries)
            if (sub.find_sample(e.sample_id_a) && sub.find_sample(e.sample_id_b))
                kept.entries.push_back(e);
        kept.entries.resize(kept.entries.size() - kept.entries.size() % k);
        if (kept.entries.size() < 10 * k)
            throw_data("segment-too-small: segment " + std::to_string(s) + " retains " +
                       std::to_string(kept.entries.size()) + " pairs, needs " +
                       std::to_string(10 * k));
        auto res = verify::kfold_accuracy(sub, kept, workers);
        rep.per_segment_pairs.push_back(kept.entries.size());
        rep.segment_means.push_back(res.mean_accuracy);
        rep.per_segment.push_back(std::move(res));
    }
    rep.std = biomet::score_stats(rep.segment_means).stdev;
    return rep;
}

}  // namespace faceaudit::benchrel
