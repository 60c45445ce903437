// faceaudit: batch auditing CLI for face-embedding datasets.
//
// One binary, subcommand style. Exit codes: 0 success, 1 validation error,
// 2 data-integrity error, 3 I/O error. Diagnostics and progress go to the
// error stream; results go to files and standard output only.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "faceaudit/faceaudit.hpp"

namespace fa = faceaudit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    int workers = 0;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--workers", c.workers,
                    "Worker threads (0 = available parallelism)")
        ->envname("FACEAUDIT_WORKERS")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_flag("--quiet", c.quiet, "Suppress progress output");
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void note(const Common& c, const std::string& msg) {
    if (!c.quiet) std::cerr << msg << "\n";
}

fa::simkern::ProgressFn chunk_progress(const Common& c, const std::string& label) {
    if (c.quiet) return {};
    return [label](std::uint64_t done, std::uint64_t total) {
        std::cerr << "\r" << label << ": " << done << "/" << total << " reference rows"
                  << std::flush;
        if (done == total) std::cerr << "\n";
    };
}

json inputs_json(const std::vector<fa::report::InputDigest>& inputs) {
    json arr = json::array();
    for (const auto& in : inputs) {
        json e;
        e["role"] = in.role;
        e["path"] = in.path;
        e["sha256"] = in.sha256;
        arr.push_back(std::move(e));
    }
    return arr;
}

fa::report::InputDigest digest(const std::string& role, const std::string& path) {
    return {role, path, fa::report::sha256_file(path)};
}

void write_json_file(const std::string& path, const json& j) {
    fa::report::write_text_file(path, j.dump(2) + "\n");
}

json base_meta(const std::string& command, const std::string& dataset) {
    json j;
    j["schema"] = fa::kReportSchema;
    j["toolkit_version"] = fa::kVersion;
    j["command"] = command;
    j["dataset"] = dataset;
    return j;
}

// Loads the two files of a set bundle (matrix at path, manifest at
// path + ".manifest.json") and records their digests.
fa::embset::EmbeddingSet load_bundle(const std::string& path, const std::string& role,
                                     std::vector<fa::report::InputDigest>& inputs) {
    inputs.push_back(digest(role + "-matrix", path));
    inputs.push_back(digest(role + "-manifest", path + ".manifest.json"));
    return fa::embset::load_set(path);
}

std::map<std::string, fa::verify::PairList> load_group_dir(
    const std::string& dir, std::size_t folds, std::vector<fa::report::InputDigest>& inputs) {
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    if (ec) fa::throw_io("cannot read group directory: " + dir);
    if (files.empty())
        fa::throw_validation("no group pair lists (*.csv) found in " + dir);
    std::sort(files.begin(), files.end());
    std::map<std::string, fa::verify::PairList> groups;
    for (const auto& f : files) {
        const std::string name = f.stem().string();
        inputs.push_back(digest("group:" + name, f.string()));
        groups.emplace(name, fa::verify::read_pairlist(f.string(), folds));
    }
    return groups;
}

fa::biomet::Histogram histogram_from_json(const json& j) {
    fa::biomet::Histogram h;
    h.bin_edges = j.at("bin_edges").get<std::vector<double>>();
    h.counts = j.at("counts").get<std::vector<std::uint64_t>>();
    h.n_total = j.at("n_total").get<std::uint64_t>();
    return h;
}

// ---------------------------------------------------------------------------
// Section runners shared by single-purpose subcommands and `audit`
// ---------------------------------------------------------------------------

fa::report::BiometricSection run_biometric(const fa::embset::EmbeddingSet& set, std::uint64_t n,
                                           std::uint64_t seed, std::size_t bins, bool per_identity,
                                           const Common& c) {
    note(c, "sampling " + std::to_string(n) + " mated and " + std::to_string(n) +
                " non-mated comparisons (seed " + std::to_string(seed) + ")");
    const auto weighting = per_identity ? fa::pairsample::MatedWeighting::identities
                                        : fa::pairsample::MatedWeighting::pairs;
    const auto mated = fa::pairsample::sample_mated(set, n, seed, weighting);
    const auto nonmated = fa::pairsample::sample_nonmated(set, n, seed);
    note(c, "scoring comparisons");
    const auto genuine = fa::simkern::pair_scores(set, mated.pairs, c.workers);
    const auto impostor = fa::simkern::pair_scores(set, nonmated.pairs, c.workers);

    fa::report::BiometricSection b;
    b.n_requested = n;
    b.genuine = fa::biomet::score_stats(genuine);
    b.impostor = fa::biomet::score_stats(impostor);
    const auto curve = fa::biomet::det_sweep(genuine, impostor);
    b.points = fa::biomet::operating_points(curve);
    b.fdr = fa::biomet::fdr(b.genuine, b.impostor);
    b.spike = fa::biomet::duplicate_spike(genuine);
    b.hist_genuine = fa::biomet::histogram(genuine, bins);
    b.hist_impostor = fa::biomet::histogram(impostor, bins);
    return b;
}

fa::leakage::LeakageReport run_leakage_streamed(const fa::embset::EmbeddingSet& synthetic,
                                                const std::string& reference_path,
                                                fa::leakage::Mode mode, std::size_t top_k,
                                                double threshold, std::size_t chunk,
                                                const Common& c) {
    fa::embset::EmbsReader reader(reference_path);
    const auto ref_manifest = fa::embset::read_manifest(reference_path + ".manifest.json");
    return fa::leakage::run_leakage(synthetic, reader, ref_manifest, mode, top_k, threshold,
                                    c.workers, chunk, chunk_progress(c, "leakage scan"));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_ingest(const std::string& matrix, const std::string& manifest, const std::string& out,
                const Common& c) {
    auto set = fa::embset::ingest(matrix, manifest);
    fa::embset::save_set(set, out);
    note(c, "ingested " + std::to_string(set.n_samples()) + " samples -> " + out);
    const auto rep = fa::embset::validate(set);
    json j;
    j["dim"] = set.dim();
    j["n_samples"] = rep.n_samples;
    j["n_identities"] = rep.n_identities;
    j["samples_per_identity_min"] = rep.samples_per_identity_min;
    j["samples_per_identity_median"] = fa::report::jnum(rep.samples_per_identity_median);
    j["samples_per_identity_max"] = rep.samples_per_identity_max;
    std::cout << j.dump() << "\n";
}

void cmd_pairs(const std::string& set_path, const std::string& kind, std::uint64_t n,
               std::uint64_t seed, bool per_identity, const std::string& out, const Common& c) {
    const auto set = fa::embset::load_set(set_path);
    fa::pairsample::PairSample sample;
    if (kind == "mated")
        sample = fa::pairsample::sample_mated(set, n, seed,
                                              per_identity
                                                  ? fa::pairsample::MatedWeighting::identities
                                                  : fa::pairsample::MatedWeighting::pairs);
    else
        sample = fa::pairsample::sample_nonmated(set, n, seed);
    std::string csv = "sample_id_a,sample_id_b\n";
    for (const auto& [i, j] : sample.pairs) {
        csv += set.meta(i).sample_id;
        csv += ',';
        csv += set.meta(j).sample_id;
        csv += '\n';
    }
    fa::report::write_text_file(out, csv);
    note(c, "wrote " + std::to_string(sample.pairs.size()) + " " + kind + " pairs -> " + out);
}

void cmd_dist(const std::string& set_path, std::uint64_t n, std::uint64_t seed, std::size_t bins,
              bool per_identity, const std::string& out, const Common& c) {
    std::vector<fa::report::InputDigest> inputs;
    const auto set = load_bundle(set_path, "set", inputs);
    const auto section = run_biometric(set, n, seed, bins, per_identity, c);
    json j = base_meta("dist", stem_of(set_path));
    j.update(fa::report::to_json(section));
    j["seed"] = seed;
    j["inputs"] = inputs_json(inputs);
    write_json_file(out, j);
    note(c, "wrote " + out);
}

void cmd_leakage(const std::string& syn_path, const std::string& ref_path,
                 const std::string& mode_str, std::size_t top_k, double threshold,
                 std::size_t chunk, const std::string& out, const Common& c) {
    std::vector<fa::report::InputDigest> inputs;
    const auto synthetic = load_bundle(syn_path, "synthetic", inputs);
    inputs.push_back(digest("reference-matrix", ref_path));
    inputs.push_back(digest("reference-manifest", ref_path + ".manifest.json"));
    const auto mode = mode_str == "per-identity" ? fa::leakage::Mode::per_identity
                                                 : fa::leakage::Mode::per_sample;
    const auto rep =
        run_leakage_streamed(synthetic, ref_path, mode, top_k, threshold, chunk, c);
    json j = base_meta("leakage", stem_of(syn_path));
    j.update(fa::report::to_json(rep));
    j["reference"] = stem_of(ref_path);
    j["inputs"] = inputs_json(inputs);
    write_json_file(out, j);
    const auto sidecar =
        (fs::path(out).parent_path() / (fs::path(out).stem().string() + "_hist.csv")).string();
    fa::report::write_text_file(
        sidecar, fa::report::histogram_csv(rep.summary.histogram,
                                           fa::report::zero_like(rep.summary.histogram)));
    note(c, "wrote " + out + " and " + sidecar);
}

void cmd_topk(const std::string& query_path, const std::string& target_path, std::size_t k,
              std::size_t chunk, const std::string& out, const Common& c) {
    std::vector<fa::report::InputDigest> inputs;
    const auto queries = load_bundle(query_path, "query", inputs);
    inputs.push_back(digest("target-matrix", target_path));
    inputs.push_back(digest("target-manifest", target_path + ".manifest.json"));
    const auto rep = run_leakage_streamed(queries, target_path, fa::leakage::Mode::per_sample,
                                          k, fa::leakage::kDefaultTailThreshold, chunk, c);
    json j = base_meta("topk", stem_of(query_path));
    j["target"] = stem_of(target_path);
    j["k"] = k;
    json tops = json::array();
    for (const auto& p : rep.top_pairs) {
        json e;
        e["query_id"] = p.query_id;
        e["query_identity"] = p.query_identity;
        e["target_id"] = p.target_id;
        e["target_identity"] = p.target_identity;
        e["score"] = fa::report::jnum(p.score);
        tops.push_back(std::move(e));
    }
    j["top_pairs"] = std::move(tops);
    j["inputs"] = inputs_json(inputs);
    write_json_file(out, j);
    note(c, "wrote " + out);
}

void cmd_verify(const std::string& set_path, const std::string& pairs_path, std::size_t k,
                std::optional<std::uint64_t> shuffle_seed, const std::string& out,
                const Common& c) {
    std::vector<fa::report::InputDigest> inputs;
    const auto set = load_bundle(set_path, "set", inputs);
    inputs.push_back(digest("pairs", pairs_path));
    auto pairs = fa::verify::read_pairlist(pairs_path, k);
    if (shuffle_seed) {
        fa::Rng rng(*shuffle_seed);
        for (std::size_t i = pairs.entries.size(); i > 1; --i)
            std::swap(pairs.entries[i - 1], pairs.entries[rng.below(i)]);
    }
    const auto res = fa::verify::kfold_accuracy(set, pairs, c.workers);
    json j = base_meta("verify", stem_of(set_path));
    j.update(fa::report::to_json(res));
    j["inputs"] = inputs_json(inputs);
    write_json_file(out, j);
    note(c, "wrote " + out);
}

void cmd_bias(const std::string& set_path, const std::string& groups_dir, std::size_t k,
              const std::string& out, const Common& c) {
    std::vector<fa::report::InputDigest> inputs;
    const auto set = load_bundle(set_path, "set", inputs);
    const auto groups = load_group_dir(groups_dir, k, inputs);
    const auto rep = fa::verify::group_accuracy(set, groups, c.workers);
    json j = base_meta("bias", stem_of(set_path));
    j.update(fa::report::to_json(rep));
    if (rep.per_group.size() >= 2) j["max_gap"] = fa::report::to_json(fa::verify::max_gap(rep));
    j["inputs"] = inputs_json(inputs);
    write_json_file(out, j);
    note(c, "wrote " + out);
}

void cmd_bench_assess(const std::string& matrix_path, const std::string& synthetic_name,
                      const std::string& out, const Common& c) {
    std::vector<fa::report::InputDigest> inputs;
    inputs.push_back(digest("accuracy-matrix", matrix_path));
    const auto matrix = fa::benchrel::read_accuracy_matrix(matrix_path);
    const auto rep = fa::benchrel::assess_benchmark(matrix, synthetic_name);
    json j = base_meta("bench-assess", synthetic_name);
    j.update(fa::report::to_json(rep));
    j["inputs"] = inputs_json(inputs);
    write_json_file(out, j);
    note(c, "wrote " + out);
}

void cmd_consistency(const std::string& set_path, const std::string& pairs_path,
                     std::size_t segments, double fraction, std::uint64_t seed, std::size_t k,
                     const std::string& out, const Common& c) {
    std::vector<fa::report::InputDigest> inputs;
    const auto set = load_bundle(set_path, "set", inputs);
    inputs.push_back(digest("pairs", pairs_path));
    const auto pairs = fa::verify::read_pairlist(pairs_path, k);
    note(c, "running " + std::to_string(segments) + " segments at fraction " +
                fa::report::fmt6(fraction));
    const auto rep = fa::benchrel::consistency(set, pairs, segments, fraction, seed, c.workers);
    json j = base_meta("consistency", stem_of(set_path));
    j.update(fa::report::to_json(rep));
    j["inputs"] = inputs_json(inputs);
    write_json_file(out, j);
    note(c, "wrote " + out);
}

struct AuditOpts {
    std::string synthetic;
    std::string reference;
    std::string pairs;
    std::string groups;
    std::string matrix;
    std::string synthetic_benchmark;
    std::uint64_t n = 1000000;
    std::uint64_t seed = 0;
    std::size_t folds = 10;
    std::size_t top_k = 5;
    double threshold = fa::leakage::kDefaultTailThreshold;
    std::size_t bins = 100;
    std::size_t segments = 10;
    double fraction = 0.5;
    std::string mode = "per-sample";
    std::size_t chunk = fa::simkern::kDefaultChunkRows;
    std::vector<std::string> formats = {"json", "csv", "svg"};
    std::string out_dir;
};

void cmd_audit(const AuditOpts& o, const Common& c) {
    fa::report::AuditReport rep;
    rep.dataset = stem_of(o.synthetic);
    rep.seed = o.seed;

    const auto synthetic = load_bundle(o.synthetic, "synthetic", rep.inputs);
    rep.biometric = run_biometric(synthetic, o.n, o.seed, o.bins, o.mode == "per-identity", c);

    if (!o.reference.empty()) {
        rep.inputs.push_back(digest("reference-matrix", o.reference));
        rep.inputs.push_back(digest("reference-manifest", o.reference + ".manifest.json"));
        const auto mode = o.mode == "per-identity" ? fa::leakage::Mode::per_identity
                                                   : fa::leakage::Mode::per_sample;
        rep.leakage_scan = run_leakage_streamed(synthetic, o.reference, mode, o.top_k,
                                                o.threshold, o.chunk, c);
    }

    if (!o.pairs.empty()) {
        rep.inputs.push_back(digest("pairs", o.pairs));
        const auto pairs = fa::verify::read_pairlist(o.pairs, o.folds);
        note(c, "verification over " + std::to_string(pairs.entries.size()) + " pairs");
        rep.verification = fa::verify::kfold_accuracy(synthetic, pairs, c.workers);
        note(c, "consistency over " + std::to_string(o.segments) + " segments");
        fa::report::ReliabilitySection rel;
        rel.consistency = fa::benchrel::consistency(synthetic, pairs, o.segments, o.fraction,
                                                    o.seed, c.workers);
        rep.reliability = std::move(rel);
    }

    if (!o.groups.empty()) {
        fa::report::BiasSection bias;
        bias.groups = fa::verify::group_accuracy(
            synthetic, load_group_dir(o.groups, o.folds, rep.inputs), c.workers);
        if (bias.groups.per_group.size() >= 2) bias.gap = fa::verify::max_gap(bias.groups);
        rep.bias = std::move(bias);
    }

    if (!o.matrix.empty()) {
        if (o.synthetic_benchmark.empty())
            fa::throw_validation("--matrix requires --synthetic-benchmark NAME");
        rep.inputs.push_back(digest("accuracy-matrix", o.matrix));
        const auto matrix = fa::benchrel::read_accuracy_matrix(o.matrix);
        if (!rep.reliability) rep.reliability = fa::report::ReliabilitySection{};
        rep.reliability->assessment =
            fa::benchrel::assess_benchmark(matrix, o.synthetic_benchmark);
    }

    const std::set<std::string> formats(o.formats.begin(), o.formats.end());
    const auto written = fa::report::emit(rep, formats, o.out_dir);
    for (const auto& path : written) std::cout << path << "\n";
}

void cmd_report(const std::string& in_path, const std::vector<std::string>& formats_list,
                const std::string& out_dir, const Common& c) {
    json doc;
    {
        std::ifstream f(in_path);
        if (!f) fa::throw_io("cannot open report: " + in_path);
        try {
            doc = json::parse(f);
        } catch (const json::parse_error& e) {
            fa::throw_data("format-violation: " + in_path + ": " + std::string(e.what()));
        }
    }
    const std::set<std::string> formats(formats_list.begin(), formats_list.end());
    for (const auto& f : formats)
        if (f != "json" && f != "csv" && f != "svg")
            fa::throw_validation("unknown report format: " + f);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fa::throw_io("cannot create output directory: " + out_dir);
    const auto at = [&](const std::string& name) {
        return (fs::path(out_dir) / name).string();
    };
    std::vector<std::string> written;
    if (formats.count("json")) {
        write_json_file(at("report.json"), doc);
        written.push_back(at("report.json"));
    }
    try {
        const json* sections = doc.contains("sections") ? &doc["sections"] : &doc;
        if (sections->contains("biometric")) {
            const auto& b = (*sections)["biometric"];
            const auto hg = histogram_from_json(b.at("histograms").at("genuine"));
            const auto hi = histogram_from_json(b.at("histograms").at("impostor"));
            if (formats.count("csv")) {
                fa::report::write_text_file(at("biometric_histogram.csv"),
                                            fa::report::histogram_csv(hg, hi));
                written.push_back(at("biometric_histogram.csv"));
            }
            if (formats.count("svg")) {
                const std::vector<fa::report::Marker> markers = {
                    {"EER", b.at("eer_threshold").get<double>()}};
                fa::report::write_text_file(
                    at("biometric_distributions.svg"),
                    fa::report::render_histograms(hg, hi, markers, "mated", "non-mated"));
                written.push_back(at("biometric_distributions.svg"));
            }
        }
        if (sections->contains("leakage")) {
            const auto& l = (*sections)["leakage"];
            const auto h = histogram_from_json(l.at("histogram"));
            if (formats.count("csv")) {
                fa::report::write_text_file(
                    at("leakage_histogram.csv"),
                    fa::report::histogram_csv(h, fa::report::zero_like(h)));
                written.push_back(at("leakage_histogram.csv"));
            }
            if (formats.count("svg")) {
                const std::vector<fa::report::Marker> markers = {
                    {"tail", l.at("threshold").get<double>()}};
                fa::report::write_text_file(
                    at("leakage_distribution.svg"),
                    fa::report::render_histograms(h, fa::report::zero_like(h), markers,
                                                  "closest-sample max", ""));
                written.push_back(at("leakage_distribution.svg"));
            }
        }
    } catch (const json::exception& e) {
        fa::throw_data("format-violation: " + in_path + ": " + std::string(e.what()));
    }
    for (const auto& path : written) std::cout << path << "\n";
    note(c, "re-emitted " + std::to_string(written.size()) + " files");
}

// A malformed FACEAUDIT_WORKERS must fail loudly; the option parser would
// silently fall back to the default instead.
bool workers_env_ok() {
    const char* v = std::getenv("FACEAUDIT_WORKERS");
    if (v == nullptr) return true;
    const std::string s(v);
    return !s.empty() && std::all_of(s.begin(), s.end(),
                                     [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

int main(int argc, char** argv) {
    if (!workers_env_ok()) {
        std::cerr << "error: FACEAUDIT_WORKERS must be a non-negative integer\n";
        return 1;
    }
    CLI::App app{"faceaudit: batch auditing toolkit for face-embedding datasets"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", std::string(fa::kVersion));

    Common common;

    // ingest
    auto* ingest = app.add_subcommand(
        "ingest", "Validate and normalize a raw EMBS matrix + manifest into a set bundle");
    std::string in_matrix, in_manifest, in_out;
    ingest->add_option("--matrix", in_matrix, "EMBS matrix file")->required();
    ingest->add_option("--manifest", in_manifest, "Manifest JSON file")->required();
    ingest->add_option("--out", in_out, "Output set path (manifest lands at <out>.manifest.json)")
        ->required();
    add_common(ingest, common);
    ingest->callback([&] { cmd_ingest(in_matrix, in_manifest, in_out, common); });

    // pairs
    auto* pairs = app.add_subcommand("pairs", "Sample mated or non-mated comparison pairs");
    std::string p_set, p_kind, p_out;
    std::uint64_t p_n = 1000000, p_seed = 0;
    bool p_per_identity = false;
    pairs->add_option("--set", p_set, "Set bundle path")->required();
    pairs->add_option("--kind", p_kind, "Pair kind")
        ->required()
        ->check(CLI::IsMember({"mated", "nonmated"}));
    pairs->add_option("-n", p_n, "Number of pairs to draw (default 1000000 comparisons)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    pairs->add_option("--seed", p_seed, "PRNG seed; fully determines the sample")
        ->capture_default_str();
    pairs->add_flag("--per-identity", p_per_identity,
                    "Weight mated draws uniformly per identity instead of per pair");
    pairs->add_option("--out", p_out, "Output CSV (columns sample_id_a,sample_id_b)")->required();
    add_common(pairs, common);
    pairs->callback([&] { cmd_pairs(p_set, p_kind, p_n, p_seed, p_per_identity, p_out, common); });

    // dist
    auto* dist = app.add_subcommand(
        "dist", "Mated/non-mated score distributions, EER/FMR100/FMR1000, FDR, duplicate spike");
    std::string d_set, d_out;
    std::uint64_t d_n = 1000000, d_seed = 0;
    std::size_t d_bins = 100;
    bool d_per_identity = false;
    dist->add_option("--set", d_set, "Set bundle path")->required();
    dist->add_option("-n", d_n, "Comparisons per kind (default 1000000)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    dist->add_option("--seed", d_seed, "PRNG seed")->capture_default_str();
    dist->add_option("--bins", d_bins, "Histogram bins over [-1,1] (default 100)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    dist->add_flag("--per-identity", d_per_identity,
                   "Weight mated draws uniformly per identity instead of per pair");
    dist->add_option("--out", d_out, "Output report JSON")->required();
    add_common(dist, common);
    dist->callback([&] { cmd_dist(d_set, d_n, d_seed, d_bins, d_per_identity, d_out, common); });

    // leakage
    auto* leak = app.add_subcommand(
        "leakage", "Closest-sample similarity scan of a synthetic set against a reference set");
    std::string l_syn, l_ref, l_mode = "per-sample", l_out;
    std::size_t l_topk = 5, l_chunk = fa::simkern::kDefaultChunkRows;
    double l_threshold = fa::leakage::kDefaultTailThreshold;
    leak->add_option("--synthetic", l_syn, "Synthetic set bundle")->required();
    leak->add_option("--reference", l_ref, "Reference set bundle (streamed in chunks)")
        ->required();
    leak->add_option("--mode", l_mode, "Audit granularity")
        ->check(CLI::IsMember({"per-sample", "per-identity"}))
        ->capture_default_str();
    leak->add_option("--topk", l_topk, "Globally highest pairs to report (default 5)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    leak->add_option("--threshold", l_threshold,
                     "Tail threshold on max scores (default 0.4, the empirical mode boundary)")
        ->capture_default_str();
    leak->add_option("--chunk", l_chunk, "Reference rows per streamed chunk")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    leak->add_option("--out", l_out, "Output report JSON (histogram CSV lands alongside)")
        ->required();
    add_common(leak, common);
    leak->callback(
        [&] { cmd_leakage(l_syn, l_ref, l_mode, l_topk, l_threshold, l_chunk, l_out, common); });

    // topk
    auto* topk = app.add_subcommand("topk", "Globally highest-scoring cross-set pairs");
    std::string t_query, t_target, t_out;
    std::size_t t_k = 5, t_chunk = fa::simkern::kDefaultChunkRows;
    topk->add_option("--query", t_query, "Query set bundle")->required();
    topk->add_option("--target", t_target, "Target set bundle (streamed)")->required();
    topk->add_option("-k", t_k, "Number of pairs (default 5)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    topk->add_option("--chunk", t_chunk, "Target rows per streamed chunk")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    topk->add_option("--out", t_out, "Output JSON")->required();
    add_common(topk, common);
    topk->callback([&] { cmd_topk(t_query, t_target, t_k, t_chunk, t_out, common); });

    // verify
    auto* verify = app.add_subcommand("verify",
                                      "k-fold cross-validated verification accuracy on a pair list");
    std::string v_set, v_pairs, v_out;
    std::size_t v_k = 10;
    std::optional<std::uint64_t> v_shuffle;
    verify->add_option("--set", v_set, "Set bundle path")->required();
    verify->add_option("--pairs", v_pairs, "Pair-list CSV (sample_id_a,sample_id_b,label)")
        ->required();
    verify->add_option("-k", v_k, "Fold count (default 10 cross-validation folds)")
        ->check(CLI::Range(std::size_t(2), std::size_t(1000)))
        ->capture_default_str();
    verify->add_option("--shuffle-folds", v_shuffle,
                       "Shuffle entries with this seed before folding (default off: file order)");
    verify->add_option("--out", v_out, "Output JSON")->required();
    add_common(verify, common);
    verify->callback([&] { cmd_verify(v_set, v_pairs, v_k, v_shuffle, v_out, common); });

    // bias
    auto* bias = app.add_subcommand(
        "bias", "Per-demographic-group verification accuracy with unweighted average");
    std::string b_set, b_groups, b_out;
    std::size_t b_k = 10;
    bias->add_option("--set", b_set, "Set bundle path")->required();
    bias->add_option("--groups", b_groups, "Directory of per-group pair lists (<group>.csv)")
        ->required();
    bias->add_option("-k", b_k, "Fold count (default 10)")
        ->check(CLI::Range(std::size_t(2), std::size_t(1000)))
        ->capture_default_str();
    bias->add_option("--out", b_out, "Output JSON")->required();
    add_common(bias, common);
    bias->callback([&] { cmd_bias(b_set, b_groups, b_k, b_out, common); });

    // bench-assess
    auto* bench = app.add_subcommand(
        "bench-assess", "Pearson correlation of a synthetic benchmark against real benchmarks");
    std::string ba_matrix, ba_name, ba_out;
    bench->add_option("--matrix", ba_matrix, "Accuracy CSV (model,benchmark,accuracy)")
        ->required();
    bench->add_option("--synthetic", ba_name, "Synthetic benchmark column name")->required();
    bench->add_option("--out", ba_out, "Output JSON")->required();
    add_common(bench, common);
    bench->callback([&] { cmd_bench_assess(ba_matrix, ba_name, ba_out, common); });

    // consistency
    auto* cons = app.add_subcommand(
        "consistency", "Verification consistency across seeded identity-subset segments");
    std::string cs_set, cs_pairs, cs_out;
    std::size_t cs_segments = 10, cs_k = 10;
    double cs_fraction = 0.5;
    std::uint64_t cs_seed = 0;
    cons->add_option("--set", cs_set, "Set bundle path")->required();
    cons->add_option("--pairs", cs_pairs, "Pair-list CSV")->required();
    cons->add_option("--segments", cs_segments, "Segment count (default 10)")
        ->check(CLI::Range(std::size_t(2), std::size_t(10000)))
        ->capture_default_str();
    cons->add_option("--fraction", cs_fraction, "Identity fraction per segment (default 0.5)")
        ->check(CLI::Range(1e-9, 1.0))
        ->capture_default_str();
    cons->add_option("--seed", cs_seed, "Base seed; segment s uses seed^hash64(s)")
        ->capture_default_str();
    cons->add_option("-k", cs_k, "Fold count (default 10)")
        ->check(CLI::Range(std::size_t(2), std::size_t(1000)))
        ->capture_default_str();
    cons->add_option("--out", cs_out, "Output JSON")->required();
    add_common(cons, common);
    cons->callback([&] {
        cmd_consistency(cs_set, cs_pairs, cs_segments, cs_fraction, cs_seed, cs_k, cs_out, common);
    });

    // audit
    auto* audit = app.add_subcommand(
        "audit", "Run every applicable section and emit one audit report with sidecars");
    AuditOpts a;
    audit->add_option("--synthetic", a.synthetic, "Synthetic set bundle")->required();
    audit->add_option("--reference", a.reference, "Reference set bundle (enables leakage scan)");
    audit->add_option("--pairs", a.pairs,
                      "Pair-list CSV (enables verification and consistency)");
    audit->add_option("--groups", a.groups, "Group pair-list directory (enables bias section)");
    audit->add_option("--matrix", a.matrix, "Accuracy matrix CSV (enables benchmark assessment)");
    audit->add_option("--synthetic-benchmark", a.synthetic_benchmark,
                      "Synthetic column in --matrix");
    audit->add_option("-n", a.n, "Comparisons per kind (default 1000000)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    audit->add_option("--seed", a.seed, "PRNG seed for every stochastic choice")
        ->capture_default_str();
    audit->add_option("-k", a.folds, "Fold count (default 10)")
        ->check(CLI::Range(std::size_t(2), std::size_t(1000)))
        ->capture_default_str();
    audit->add_option("--topk", a.top_k, "Leakage top pairs (default 5)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    audit->add_option("--threshold", a.threshold, "Leakage tail threshold (default 0.4)")
        ->capture_default_str();
    audit->add_option("--bins", a.bins, "Histogram bins (default 100)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    audit->add_option("--segments", a.segments, "Consistency segments (default 10)")
        ->check(CLI::Range(std::size_t(2), std::size_t(10000)))
        ->capture_default_str();
    audit->add_option("--fraction", a.fraction, "Consistency identity fraction (default 0.5)")
        ->check(CLI::Range(1e-9, 1.0))
        ->capture_default_str();
    audit->add_option("--mode", a.mode, "Leakage granularity")
        ->check(CLI::IsMember({"per-sample", "per-identity"}))
        ->capture_default_str();
    audit->add_option("--chunk", a.chunk, "Streamed reference rows per chunk")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    audit->add_option("--formats", a.formats, "Report formats (json,csv,svg)")
        ->delimiter(',')
        ->check(CLI::IsMember({"json", "csv", "svg"}))
        ->capture_default_str();
    audit->add_option("--out-dir", a.out_dir, "Output directory")->required();
    add_common(audit, common);
    audit->callback([&] { cmd_audit(a, common); });

    // report
    auto* rep = app.add_subcommand("report",
                                   "Re-emit CSV/SVG sidecars from an existing report JSON");
    std::string r_in, r_out_dir;
    std::vector<std::string> r_formats = {"csv", "svg"};
    rep->add_option("--in", r_in, "Existing report JSON")->required();
    rep->add_option("--formats", r_formats, "Formats to emit (json,csv,svg)")
        ->delimiter(',')
        ->check(CLI::IsMember({"json", "csv", "svg"}))
        ->capture_default_str();
    rep->add_option("--out-dir", r_out_dir, "Output directory")->required();
    add_common(rep, common);
    rep->callback([&] { cmd_report(r_in, r_formats, r_out_dir, common); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const fa::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case fa::ErrorKind::validation: return 1;
            case fa::ErrorKind::data_integrity: return 2;
            case fa::ErrorKind::io: return 3;
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
