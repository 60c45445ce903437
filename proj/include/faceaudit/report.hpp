#pragma once

// Report emission: one canonical JSON document plus CSV and SVG sidecars.
//
// Canonical means byte-identical for identical inputs on any platform:
// keys are sorted (nlohmann's default object is an ordered map), every
// floating-point value is quantized to 6 significant digits before
// insertion, and nothing in the document depends on wall-clock time unless
// SOURCE_DATE_EPOCH pins it. Non-finite numbers are rejected at insertion,
// never silently serialized.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "faceaudit/benchrel.hpp"
#include "faceaudit/biomet.hpp"
#include "faceaudit/error.hpp"
#include "faceaudit/leakage.hpp"
#include "faceaudit/verify.hpp"
#include "faceaudit/version.hpp"

namespace faceaudit::report {

// ---------------------------------------------------------------------------
// Canonical numbers
// ---------------------------------------------------------------------------

// The exact token written for a real value: %.6g, locale-independent digits.
inline std::string fmt6(double x) {
    if (!std::isfinite(x)) throw_validation("finite-value: report numbers must be finite");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

// Quantize to the double nearest the 6-significant-digit decimal token.
inline double quant6(double x) { return std::strtod(fmt6(x).c_str(), nullptr); }

inline nlohmann::json jnum(double x) { return nlohmann::json(quant6(x)); }

inline nlohmann::json jnum_list(std::span<const double> xs) {
    nlohmann::json arr = nlohmann::json::array();
    for (double x : xs) arr.push_back(jnum(x));
    return arr;
}

// ---------------------------------------------------------------------------
// Input digests
// ---------------------------------------------------------------------------

inline std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("cannot open for digest: " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw_io("digest initialization failed");
    }
    std::vector<char> buf(1 << 20);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = f.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

// UTC ISO-8601; SOURCE_DATE_EPOCH (seconds) overrides the clock so that
// archived builds and determinism tests can pin the field.
inline std::string timestamp_utc() {
    std::time_t t;
    if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"))
        t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
    else
        t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Section serializers
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const biomet::ScoreStats& s) {
    nlohmann::json j;
    j["n"] = s.n;
    j["mean"] = jnum(s.mean);
    j["std"] = jnum(s.stdev);
    j["min"] = jnum(s.min);
    j["max"] = jnum(s.max);
    return j;
}

inline nlohmann::json to_json(const biomet::Histogram& h) {
    nlohmann::json j;
    j["bin_edges"] = jnum_list(h.bin_edges);
    j["counts"] = h.counts;
    j["n_total"] = h.n_total;
    return j;
}

inline nlohmann::json to_json(const verify::VerificationResult& r) {
    nlohmann::json j;
    j["per_fold_accuracy"] = jnum_list(r.per_fold_accuracy);
    j["per_fold_threshold"] = jnum_list(r.per_fold_threshold);
    j["mean_accuracy"] = jnum(r.mean_accuracy);
    j["std"] = jnum(r.std);
    j["folds"] = r.per_fold_accuracy.size();
    return j;
}

inline nlohmann::json to_json(const verify::GroupReport& g) {
    nlohmann::json j;
    nlohmann::json per;
    for (const auto& [name, res] : g.per_group) per[name] = to_json(res);
    j["per_group"] = per;
    j["average"] = jnum(g.average);
    j["average_4dp"] = jnum(verify::round_half_up(g.average, 4));
    return j;
}

inline nlohmann::json to_json(const verify::GapResult& g) {
    nlohmann::json j;
    j["best_group"] = g.best_group;
    j["worst_group"] = g.worst_group;
    j["gap"] = jnum(g.gap);
    return j;
}

inline nlohmann::json to_json(const leakage::LeakageReport& r) {
    nlohmann::json j;
    j["mode"] = leakage::to_string(r.mode);
    j["threshold"] = jnum(r.summary.threshold);
    j["tail_fraction"] = jnum(r.summary.tail_fraction);
    j["long_tail"] = r.summary.long_tail;
    j["histogram"] = to_json(r.summary.histogram);
    nlohmann::json maxima = nlohmann::json::array();
    for (const auto& m : r.per_query_max) {
        nlohmann::json e;
        e["query_id"] = m.query_id;
        e["target_id"] = m.target_id;
        e["score"] = jnum(m.score);
        maxima.push_back(std::move(e));
    }
    j["per_query_max"] = std::move(maxima);
    nlohmann::json tops = nlohmann::json::array();
    for (const auto& p : r.top_pairs) {
        nlohmann::json e;
        e["query_id"] = p.query_id;
        e["query_identity"] = p.query_identity;
        e["target_id"] = p.target_id;
        e["target_identity"] = p.target_identity;
        e["score"] = jnum(p.score);
        tops.push_back(std::move(e));
    }
    j["top_pairs"] = std::move(tops);
    return j;
}

inline nlohmann::json to_json(const benchrel::BenchmarkAssessment& a) {
    nlohmann::json j;
    j["synthetic_benchmark"] = a.synthetic_benchmark;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : a.pairings) {
        nlohmann::json e;
        e["benchmark"] = p.benchmark;
        e["n_models"] = p.n_models;
        if (p.pcc)
            e["pcc"] = jnum(*p.pcc);
        else {
            e["pcc"] = nullptr;
            e["undefined_reason"] = p.undefined_reason;
        }
        arr.push_back(std::move(e));
    }
    j["pairings"] = std::move(arr);
    return j;
}

inline nlohmann::json to_json(const benchrel::ConsistencyReport& c) {
    nlohmann::json j;
    j["segments"] = c.per_segment.size();
    j["fraction"] = jnum(c.fraction);
    j["seed"] = c.seed;
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t s = 0; s < c.per_segment.size(); ++s) {
        nlohmann::json e = to_json(c.per_segment[s]);
        e["pairs"] = c.per_segment_pairs[s];
        arr.push_back(std::move(e));
    }
    j["per_segment"] = std::move(arr);
    j["segment_means"] = jnum_list(c.segment_means);
    j["std"] = jnum(c.std);
    return j;
}

// ---------------------------------------------------------------------------
// Histogram CSV sidecar: bin_lo, bin_hi, count_genuine, count_impostor
// ---------------------------------------------------------------------------

inline std::string histogram_csv(const biomet::Histogram& genuine,
                                 const biomet::Histogram& impostor) {
    if (genuine.bin_edges != impostor.bin_edges)
        throw_validation("bin-mismatch: histogram sidecars need identical bin edges");
    std::string out = "bin_lo,bin_hi,count_genuine,count_impostor\n";
    for (std::size_t b = 0; b < genuine.counts.size(); ++b) {
        out += fmt6(genuine.bin_edges[b]);
        out += ',';
        out += fmt6(genuine.bin_edges[b + 1]);
        out += ',';
        out += std::to_string(genuine.counts[b]);
        out += ',';
        out += std::to_string(impostor.counts[b]);
        out += '\n';
    }
    return out;
}

inline biomet::Histogram zero_like(const biomet::Histogram& h) {
    biomet::Histogram z;
    z.bin_edges = h.bin_edges;
    z.counts.assign(h.counts.size(), 0);
    z.n_total = 0;
    return z;
}

// ---------------------------------------------------------------------------
// SVG renderer: overlaid density-normalized histograms, 800x500
// ---------------------------------------------------------------------------

struct Marker {
    std::string label;
    double threshold = 0.0;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

inline std::string fixed2(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

}  // namespace detail

inline std::string render_histograms(const biomet::Histogram& genuine,
                                     const biomet::Histogram& impostor,
                                     std::span<const Marker> markers,
                                     const std::string& genuine_label = "genuine",
                                     const std::string& impostor_label = "impostor") {
    const bool has_g = !genuine.bin_edges.empty();
    const bool has_i = !impostor.bin_edges.empty();
    if (has_g && has_i && genuine.bin_edges != impostor.bin_edges)
        throw_validation("bin-mismatch: overlay needs identical bin edges");
    const std::vector<double>* edges =
        has_g ? &genuine.bin_edges : (has_i ? &impostor.bin_edges : nullptr);
    const double lo = edges ? edges->front() : -1.0;
    const double hi = edges ? edges->back() : 1.0;

    constexpr double W = 800, H = 500;
    constexpr double px = 60, py = 20, pw = 720, ph = 420;  // plot rect
    const auto xmap = [&](double v) { return px + (v - lo) / (hi - lo) * pw; };

    const auto density = [](const biomet::Histogram& h, std::size_t b) {
        if (h.n_total == 0) return 0.0;
        const double width = h.bin_edges[b + 1] - h.bin_edges[b];
        return static_cast<double>(h.counts[b]) / (static_cast<double>(h.n_total) * width);
    };
    double ymax = 0.0;
    if (has_g)
        for (std::size_t b = 0; b < genuine.counts.size(); ++b)
            ymax = std::max(ymax, density(genuine, b));
    if (has_i)
        for (std::size_t b = 0; b < impostor.counts.size(); ++b)
            ymax = std::max(ymax, density(impostor, b));
    if (ymax <= 0.0) ymax = 1.0;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" "
           "width=\"800\" height=\"500\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"#ffffff\"/>\n";

    const auto bars = [&](const biomet::Histogram& h, const char* fill) {
        if (h.n_total == 0) return;
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            if (h.counts[b] == 0) continue;
            const double d = density(h, b);
            const double x0 = xmap(h.bin_edges[b]);
            const double x1 = xmap(h.bin_edges[b + 1]);
            const double bh = d / ymax * ph;
            svg += "<rect x=\"" + detail::fixed2(x0) + "\" y=\"" +
                   detail::fixed2(py + ph - bh) + "\" width=\"" + detail::fixed2(x1 - x0) +
                   "\" height=\"" + detail::fixed2(bh) + "\" fill=\"" + fill +
                   "\" fill-opacity=\"0.55\"/>\n";
        }
    };
    if (has_g) bars(genuine, "#4878a8");
    if (has_i) bars(impostor, "#c0504d");

    // Axes with 5 ticks each.
    svg += "<line x1=\"" + detail::fixed2(px) + "\" y1=\"" + detail::fixed2(py + ph) +
           "\" x2=\"" + detail::fixed2(px + pw) + "\" y2=\"" + detail::fixed2(py + ph) +
           "\" stroke=\"#000000\"/>\n";
    svg += "<line x1=\"" + detail::fixed2(px) + "\" y1=\"" + detail::fixed2(py) + "\" x2=\"" +
           detail::fixed2(px) + "\" y2=\"" + detail::fixed2(py + ph) +
           "\" stroke=\"#000000\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        const double x = xmap(v);
        svg += "<line x1=\"" + detail::fixed2(x) + "\" y1=\"" + detail::fixed2(py + ph) +
               "\" x2=\"" + detail::fixed2(x) + "\" y2=\"" + detail::fixed2(py + ph + 5) +
               "\" stroke=\"#000000\"/>\n";
        svg += "<text x=\"" + detail::fixed2(x) + "\" y=\"" + detail::fixed2(py + ph + 20) +
               "\" text-anchor=\"middle\">" + fmt6(v) + "</text>\n";
        const double yv = ymax * t / 4.0;
        const double y = py + ph - yv / ymax * ph;
        svg += "<line x1=\"" + detail::fixed2(px - 5) + "\" y1=\"" + detail::fixed2(y) +
               "\" x2=\"" + detail::fixed2(px) + "\" y2=\"" + detail::fixed2(y) +
               "\" stroke=\"#000000\"/>\n";
        svg += "<text x=\"" + detail::fixed2(px - 8) + "\" y=\"" + detail::fixed2(y + 4) +
               "\" text-anchor=\"end\">" + fmt6(yv) + "</text>\n";
    }
    svg += "<text x=\"" + detail::fixed2(px + pw / 2) + "\" y=\"" + detail::fixed2(H - 8) +
           "\" text-anchor=\"middle\">cosine similarity</text>\n";

    // Legend, top-right inside the plot.
    double ly = py + 10;
    const auto legend = [&](const biomet::Histogram& h, const char* fill,
                            const std::string& label) {
        if (h.n_total == 0 || label.empty()) return;
        svg += "<rect x=\"" + detail::fixed2(px + pw - 150) + "\" y=\"" + detail::fixed2(ly) +
               "\" width=\"12\" height=\"12\" fill=\"" + fill + "\" fill-opacity=\"0.55\"/>\n";
        svg += "<text x=\"" + detail::fixed2(px + pw - 132) + "\" y=\"" +
               detail::fixed2(ly + 10) + "\">" + detail::xml_escape(label) + "</text>\n";
        ly += 18;
    };
    if (has_g) legend(genuine, "#4878a8", genuine_label);
    if (has_i) legend(impostor, "#c0504d", impostor_label);

    for (const auto& m : markers) {
        const double x = std::clamp(xmap(m.threshold), px, px + pw);
        svg += "<line x1=\"" + detail::fixed2(x) + "\" y1=\"" + detail::fixed2(py) + "\" x2=\"" +
               detail::fixed2(x) + "\" y2=\"" + detail::fixed2(py + ph) +
               "\" stroke=\"#333333\" stroke-dasharray=\"5,4\"/>\n";
        svg += "<text x=\"" + detail::fixed2(x + 4) + "\" y=\"" + detail::fixed2(py + 14) +
               "\">" + detail::xml_escape(m.label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

// ---------------------------------------------------------------------------
// AuditReport
// ---------------------------------------------------------------------------

struct InputDigest {
    std::string role;
    std::string path;
    std::string sha256;
};

struct BiometricSection {
    std::uint64_t n_requested = 0;
    biomet::ScoreStats genuine;
    biomet::ScoreStats impostor;
    biomet::OperatingPoints points;
    double fdr = 0.0;
    biomet::SpikeResult spike;
    biomet::Histogram hist_genuine;
    biomet::Histogram hist_impostor;
};

struct BiasSection {
    verify::GroupReport groups;
    std::optional<verify::GapResult> gap;
};

struct ReliabilitySection {
    std::optional<benchrel::BenchmarkAssessment> assessment;
    std::optional<benchrel::ConsistencyReport> consistency;
};

struct AuditReport {
    std::string dataset;
    std::vector<InputDigest> inputs;
    std::uint64_t seed = 0;
    bool with_timestamp = true;
    std::optional<BiometricSection> biometric;
    std::optional<leakage::LeakageReport> leakage_scan;
    std::optional<verify::VerificationResult> verification;
    std::optional<BiasSection> bias;
    std::optional<ReliabilitySection> reliability;
};

inline nlohmann::json to_json(const BiometricSection& b) {
    nlohmann::json j;
    j["n"] = b.n_requested;
    j["genuine"] = to_json(b.genuine);
    j["impostor"] = to_json(b.impostor);
    j["eer"] = jnum(b.points.eer);
    j["eer_threshold"] = jnum(b.points.eer_threshold);
    j["fmr100"] = jnum(b.points.fmr100);
    j["fmr100_saturated"] = b.points.fmr100_saturated;
    j["fmr1000"] = jnum(b.points.fmr1000);
    j["fmr1000_saturated"] = b.points.fmr1000_saturated;
    j["fdr"] = jnum(b.fdr);
    j["duplicate_fraction"] = jnum(b.spike.fraction);
    j["duplicate_flagged"] = b.spike.flagged;
    j["histograms"]["genuine"] = to_json(b.hist_genuine);
    j["histograms"]["impostor"] = to_json(b.hist_impostor);
    return j;
}

inline nlohmann::json to_json(const AuditReport& r) {
    nlohmann::json j;
    j["schema"] = kReportSchema;
    j["toolkit_version"] = kVersion;
    j["dataset"] = r.dataset;
    j["seed"] = r.seed;
    if (r.with_timestamp) j["generated"] = timestamp_utc();
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& in : r.inputs) {
        nlohmann::json e;
        e["role"] = in.role;
        e["path"] = in.path;
        e["sha256"] = in.sha256;
        inputs.push_back(std::move(e));
    }
    j["inputs"] = std::move(inputs);
    nlohmann::json sections = nlohmann::json::object();
    if (r.biometric) sections["biometric"] = to_json(*r.biometric);
    if (r.leakage_scan) sections["leakage"] = to_json(*r.leakage_scan);
    if (r.verification) sections["verification"] = to_json(*r.verification);
    if (r.bias) {
        sections["bias"] = to_json(r.bias->groups);
        if (r.bias->gap) sections["bias"]["max_gap"] = to_json(*r.bias->gap);
    }
    if (r.reliability) {
        nlohmann::json rel = nlohmann::json::object();
        if (r.reliability->assessment) rel["assessment"] = to_json(*r.reliability->assessment);
        if (r.reliability->consistency) rel["consistency"] = to_json(*r.reliability->consistency);
        sections["reliability"] = std::move(rel);
    }
    j["sections"] = std::move(sections);
    return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw_io("write failure on " + path);
}

// Writes report.json plus per-histogram CSV/SVG sidecars for the requested
// formats; returns the written paths in a fixed order.
inline std::vector<std::string> emit(const AuditReport& report,
                                     const std::set<std::string>& formats,
                                     const std::string& out_dir) {
    for (const auto& f : formats)
        if (f != "json" && f != "csv" && f != "svg")
            throw_validation("unknown report format: " + f);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw_io("cannot create output directory: " + out_dir);
    const auto at = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    std::vector<std::string> written;
    if (formats.count("json")) {
        const auto path = at("report.json");
        write_text_file(path, to_json(report).dump(2) + "\n");
        written.push_back(path);
    }
    if (formats.count("csv")) {
        if (report.biometric) {
            const auto path = at("biometric_histogram.csv");
            write_text_file(path, histogram_csv(report.biometric->hist_genuine,
                                                report.biometric->hist_impostor));
            written.push_back(path);
        }
        if (report.leakage_scan) {
            const auto path = at("leakage_histogram.csv");
            const auto& h = report.leakage_scan->summary.histogram;
            write_text_file(path, histogram_csv(h, zero_like(h)));
            written.push_back(path);
        }
    }
    if (formats.count("svg")) {
        if (report.biometric) {
            const auto path = at("biometric_distributions.svg");
            const std::vector<Marker> markers = {
                {"EER", report.biometric->points.eer_threshold}};
            write_text_file(path,
                            render_histograms(report.biometric->hist_genuine,
                                              report.biometric->hist_impostor, markers,
                                              "mated", "non-mated"));
            written.push_back(path);
        }
        if (report.leakage_scan) {
            const auto path = at("leakage_distribution.svg");
            const auto& h = report.leakage_scan->summary.histogram;
            const std::vector<Marker> markers = {
                {"tail", report.leakage_scan->summary.threshold}};
            write_text_file(path, render_histograms(h, zero_like(h), markers,
                                                    "closest-sample max", ""));
            written.push_back(path);
        }
    }
    return written;
}

}  // namespace faceaudit::report
