#include <catch2/catch_amalgamated.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "testsupport.hpp"

namespace fa = faceaudit;

namespace {

// Identity-clustered orthogonal embeddings: samples of identity k are the
// basis vector e_k, so mated scores are exactly 1 and non-mated exactly 0.
fa::embset::EmbeddingSet orthogonal_set(std::size_t identities, std::size_t per_identity) {
    const std::size_t dim = identities;
    std::vector<float> matrix;
    std::vector<fa::embset::SampleMeta> meta;
    matrix.reserve(identities * per_identity * dim);
    for (std::size_t k = 0; k < identities; ++k)
        for (std::size_t j = 0; j < per_identity; ++j) {
            std::vector<float> row(dim, 0.0f);
            row[k] = 1.0f;
            matrix.insert(matrix.end(), row.begin(), row.end());
            meta.push_back({"s" + std::to_string(k) + "_" + std::to_string(j),
                            "id" + std::to_string(k), std::nullopt});
        }
    return fa::embset::EmbeddingSet::from_raw(dim, std::move(matrix), std::move(meta));
}

std::string save_bundle(const ts::TempDir& dir, const std::string& name,
                        const fa::embset::EmbeddingSet& set) {
    const auto path = dir.file(name);
    fa::embset::save_set(set, path);
    return path;
}

// Alternating mated/non-mated entries over an orthogonal_set's sample ids.
std::vector<fa::verify::PairEntry> separable_entries(std::size_t identities, std::size_t count) {
    std::vector<fa::verify::PairEntry> entries;
    entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = (i / 2) % identities;
        if (i % 2 == 0)
            entries.push_back({"s" + std::to_string(k) + "_0", "s" + std::to_string(k) + "_1",
                               fa::pairsample::PairKind::mated});
        else
            entries.push_back({"s" + std::to_string(k) + "_0",
                               "s" + std::to_string((k + 1) % identities) + "_0",
                               fa::pairsample::PairKind::nonmated});
    }
    return entries;
}

std::vector<std::string> stdout_lines(const std::string& out) {
    std::vector<std::string> lines;
    std::istringstream ss(out);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("cli: version flag") {
    ts::TempDir dir;
    const auto r = ts::run_cli({"--version"}, dir);
    REQUIRE(r.code == 0);
    REQUIRE(r.out == std::string(fa::kVersion) + "\n");
}

TEST_CASE("cli: ingest normalizes and prints a summary") {
    ts::TempDir dir;
    // Raw rows deliberately scaled away from unit norm.
    auto set = orthogonal_set(3, 2);
    std::vector<float> raw(set.data(), set.data() + set.n_samples() * set.dim());
    for (auto& x : raw) x *= 2.5f;
    const auto matrix_path = dir.file("raw.embs");
    const auto manifest_path = dir.file("raw.manifest.json");
    fa::embset::write_embs(matrix_path, set.dim(), raw);
    fa::embset::write_manifest(manifest_path, set.manifest());

    const auto out = dir.file("clean.embs");
    const auto r = ts::run_cli(
        {"ingest", "--matrix", matrix_path, "--manifest", manifest_path, "--out", out}, dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    REQUIRE(r.err.find("ingested 6 samples") != std::string::npos);

    const auto j = nlohmann::json::parse(r.out);
    REQUIRE(j["dim"].get<std::size_t>() == 3);
    REQUIRE(j["n_samples"].get<std::size_t>() == 6);
    REQUIRE(j["n_identities"].get<std::size_t>() == 3);
    REQUIRE(j["samples_per_identity_min"].get<std::size_t>() == 2);
    REQUIRE(j["samples_per_identity_max"].get<std::size_t>() == 2);

    REQUIRE(std::filesystem::exists(out));
    REQUIRE(std::filesystem::exists(out + ".manifest.json"));
    const auto loaded = fa::embset::load_set(out);
    REQUIRE(fa::embset::validate(loaded).clean());

    SECTION("--quiet silences the note but keeps the summary") {
        const auto q = ts::run_cli({"ingest", "--matrix", matrix_path, "--manifest",
                                    manifest_path, "--out", dir.file("q.embs"), "--quiet"},
                                   dir);
        REQUIRE(q.code == 0);
        REQUIRE(q.err.empty());
        REQUIRE_FALSE(q.out.empty());
    }
}

TEST_CASE("cli: exit codes follow the error taxonomy") {
    ts::TempDir dir;
    auto set = orthogonal_set(3, 2);
    const auto matrix_path = dir.file("raw.embs");
    const auto manifest_path = dir.file("raw.manifest.json");

    SECTION("defective row is a data-integrity failure (2)") {
        std::vector<float> raw(set.data(), set.data() + set.n_samples() * set.dim());
        for (std::size_t d = 0; d < set.dim(); ++d) raw[2 * set.dim() + d] = 0.0f;
        fa::embset::write_embs(matrix_path, set.dim(), raw);
        fa::embset::write_manifest(manifest_path, set.manifest());
        const auto r = ts::run_cli({"ingest", "--matrix", matrix_path, "--manifest",
                                    manifest_path, "--out", dir.file("x.embs")},
                                   dir);
        REQUIRE(r.code == 2);
        REQUIRE(r.err.find("error:") != std::string::npos);
        REQUIRE(r.err.find("zero-vector") != std::string::npos);
    }
    SECTION("missing input file is an I/O failure (3)") {
        fa::embset::write_manifest(manifest_path, set.manifest());
        const auto r = ts::run_cli({"ingest", "--matrix", dir.file("absent.embs"), "--manifest",
                                    manifest_path, "--out", dir.file("x.embs")},
                                   dir);
        REQUIRE(r.code == 3);
    }
    SECTION("missing required flag is a usage failure (1)") {
        const auto r = ts::run_cli({"ingest", "--matrix", matrix_path}, dir);
        REQUIRE(r.code == 1);
        REQUIRE(r.err.find("--manifest") != std::string::npos);
    }
    SECTION("unknown subcommand fails parse (1)") {
        const auto r = ts::run_cli({"frobnicate"}, dir);
        REQUIRE(r.code == 1);
    }
    SECTION("dimension mismatch between sets is a data-integrity failure (2)") {
        const auto syn = save_bundle(dir, "syn.embs", orthogonal_set(3, 2));
        const auto ref = save_bundle(dir, "ref.embs", orthogonal_set(5, 1));
        const auto r = ts::run_cli({"leakage", "--synthetic", syn, "--reference", ref, "--out",
                                    dir.file("l.json"), "--quiet"},
                                   dir);
        REQUIRE(r.code == 2);
        REQUIRE(r.err.find("dim") != std::string::npos);
    }
}

TEST_CASE("cli: pairs emits deterministic CSV with correct identity structure") {
    ts::TempDir dir;
    const auto set = orthogonal_set(5, 3);
    const auto set_path = save_bundle(dir, "set.embs", set);

    const auto a = dir.file("a.csv");
    const auto b = dir.file("b.csv");
    auto r1 = ts::run_cli({"pairs", "--set", set_path, "--kind", "mated", "-n", "50", "--seed",
                           "7", "--out", a, "--quiet"},
                          dir);
    auto r2 = ts::run_cli({"pairs", "--set", set_path, "--kind", "mated", "-n", "50", "--seed",
                           "7", "--out", b, "--quiet"},
                          dir);
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    REQUIRE(ts::slurp(a) == ts::slurp(b));

    const auto lines = stdout_lines(ts::slurp(a));
    REQUIRE(lines.size() == 51);
    REQUIRE(lines[0] == "sample_id_a,sample_id_b");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto comma = lines[i].find(',');
        const auto ia = set.find_sample(lines[i].substr(0, comma));
        const auto ib = set.find_sample(lines[i].substr(comma + 1));
        REQUIRE(ia.has_value());
        REQUIRE(ib.has_value());
        REQUIRE(set.identity_of(*ia) == set.identity_of(*ib));
    }

    SECTION("nonmated pairs cross identities") {
        const auto c = dir.file("c.csv");
        const auto r = ts::run_cli({"pairs", "--set", set_path, "--kind", "nonmated", "-n", "40",
                                    "--seed", "7", "--out", c, "--quiet"},
                                   dir);
        REQUIRE(r.code == 0);
        const auto nm = stdout_lines(ts::slurp(c));
        REQUIRE(nm.size() == 41);
        for (std::size_t i = 1; i < nm.size(); ++i) {
            const auto comma = nm[i].find(',');
            const auto ia = set.find_sample(nm[i].substr(0, comma));
            const auto ib = set.find_sample(nm[i].substr(comma + 1));
            REQUIRE(set.identity_of(*ia) != set.identity_of(*ib));
        }
    }
    SECTION("a different seed draws a different sample") {
        const auto d = dir.file("d.csv");
        ts::run_cli({"pairs", "--set", set_path, "--kind", "mated", "-n", "50", "--seed", "8",
                     "--out", d, "--quiet"},
                    dir);
        REQUIRE(ts::slurp(a) != ts::slurp(d));
    }
}

TEST_CASE("cli: dist is reproducible and keeps results off stderr") {
    ts::TempDir dir;
    // Clustered rather than orthogonal: score distributions need spread for FDR.
    const auto set_path =
        save_bundle(dir, "set.embs", ts::make_clustered_set(8, 4, 32, 21, 0.08));
    const auto args = [&](const std::string& out) {
        return std::vector<std::string>{"dist", "--set", set_path, "-n",   "200",
                                        "--seed", "3",   "--bins", "40", "--out", out};
    };
    auto a1 = args(dir.file("r1.json"));
    a1.push_back("--quiet");
    auto a2 = args(dir.file("r2.json"));
    a2.push_back("--quiet");
    const auto r1 = ts::run_cli(a1, dir);
    const auto r2 = ts::run_cli(a2, dir);
    INFO(r1.err);
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    REQUIRE(r1.out.empty());
    REQUIRE(ts::slurp(dir.file("r1.json")) == ts::slurp(dir.file("r2.json")));

    const auto j = nlohmann::json::parse(ts::slurp(dir.file("r1.json")));
    REQUIRE(j["schema"].get<std::string>() == fa::kReportSchema);
    REQUIRE(j["command"].get<std::string>() == "dist");
    REQUIRE(j["dataset"].get<std::string>() == "set");
    REQUIRE(j["seed"].get<std::uint64_t>() == 3);
    REQUIRE(j["n"].get<std::uint64_t>() == 200);
    REQUIRE(j["eer"].get<double>() == 0.0);
    REQUIRE(j["fmr100"].get<double>() == 0.0);
    REQUIRE(j["histograms"]["genuine"]["counts"].size() == 40);
    REQUIRE(j["inputs"].size() == 2);
    for (const auto& in : j["inputs"])
        REQUIRE(in["sha256"].get<std::string>().size() == 64);

    SECTION("progress notes go to stderr when not quiet") {
        const auto rv = ts::run_cli(args(dir.file("r3.json")), dir);
        REQUIRE(rv.code == 0);
        REQUIRE(rv.out.empty());
        REQUIRE(rv.err.find("sampling") != std::string::npos);
        REQUIRE(rv.err.find("wrote") != std::string::npos);
    }
}

TEST_CASE("cli: leakage writes a report and a histogram sidecar") {
    ts::TempDir dir;
    const auto synthetic = orthogonal_set(6, 2);
    const auto syn_path = save_bundle(dir, "syn.embs", synthetic);

    // Reference: random rows plus a verbatim copy of synthetic row 0.
    fa::Rng rng(11);
    std::vector<float> matrix;
    std::vector<fa::embset::SampleMeta> meta;
    for (std::size_t i = 0; i < 10; ++i) {
        const auto row = ts::random_unit(6, rng);
        matrix.insert(matrix.end(), row.begin(), row.end());
        meta.push_back({"r" + std::to_string(i), "rid" + std::to_string(i), std::nullopt});
    }
    matrix.insert(matrix.end(), synthetic.row(0).begin(), synthetic.row(0).end());
    meta.push_back({"r10", "rid10", std::nullopt});
    const auto ref_path = save_bundle(
        dir, "ref.embs",
        fa::embset::EmbeddingSet::from_raw(6, std::move(matrix), std::move(meta)));

    const auto out = dir.file("leak.json");
    const auto r = ts::run_cli({"leakage", "--synthetic", syn_path, "--reference", ref_path,
                                "--topk", "3", "--chunk", "4", "--out", out, "--quiet"},
                               dir);
    INFO(r.err);
    REQUIRE(r.code == 0);

    const auto j = nlohmann::json::parse(ts::slurp(out));
    REQUIRE(j["command"].get<std::string>() == "leakage");
    REQUIRE(j["reference"].get<std::string>() == "ref");
    REQUIRE(j["mode"].get<std::string>() == "per-sample");
    REQUIRE(j["per_query_max"].size() == 12);
    REQUIRE(j["top_pairs"].size() == 3);
    REQUIRE(j["top_pairs"][0]["query_id"].get<std::string>() == "s0_0");
    REQUIRE(j["top_pairs"][0]["target_id"].get<std::string>() == "r10");
    REQUIRE(j["top_pairs"][0]["score"].get<double>() >= 0.999999);
    REQUIRE(j["inputs"].size() == 4);

    const auto sidecar = dir.file("leak_hist.csv");
    REQUIRE(std::filesystem::exists(sidecar));
    const auto csv = ts::slurp(sidecar);
    REQUIRE(csv.rfind("bin_lo,bin_hi,count_genuine,count_impostor\n", 0) == 0);

    SECTION("worker count does not change the bytes") {
        const auto out2 = dir.file("leak2.json");
        const auto r2 = ts::run_cli({"leakage", "--synthetic", syn_path, "--reference", ref_path,
                                     "--topk", "3", "--chunk", "4", "--out", out2, "--quiet",
                                     "--workers", "2"},
                                    dir);
        REQUIRE(r2.code == 0);
        REQUIRE(ts::slurp(out) == ts::slurp(out2));
        REQUIRE(ts::slurp(sidecar) == ts::slurp(dir.file("leak2_hist.csv")));
    }
    SECTION("progress stream reports reference rows") {
        const auto r3 = ts::run_cli({"leakage", "--synthetic", syn_path, "--reference", ref_path,
                                     "--out", dir.file("l3.json")},
                                    dir);
        REQUIRE(r3.code == 0);
        REQUIRE(r3.err.find("leakage scan") != std::string::npos);
        REQUIRE(r3.err.find("11/11 reference rows") != std::string::npos);
    }
    SECTION("FACEAUDIT_WORKERS env is accepted and validated") {
        const auto ok = ts::run_cli({"leakage", "--synthetic", syn_path, "--reference", ref_path,
                                     "--topk", "3", "--chunk", "4", "--out", dir.file("e.json"),
                                     "--quiet"},
                                    dir, {{"FACEAUDIT_WORKERS", "2"}});
        REQUIRE(ok.code == 0);
        REQUIRE(ts::slurp(dir.file("e.json")) == ts::slurp(out));
        const auto bad = ts::run_cli({"leakage", "--synthetic", syn_path, "--reference", ref_path,
                                      "--out", dir.file("f.json"), "--quiet"},
                                     dir, {{"FACEAUDIT_WORKERS", "-3"}});
        REQUIRE(bad.code == 1);
    }
}

TEST_CASE("cli: topk lists the globally best cross-set pairs") {
    ts::TempDir dir;
    const auto queries = orthogonal_set(4, 1);
    const auto q_path = save_bundle(dir, "q.embs", queries);
    std::vector<float> matrix(queries.data(), queries.data() + 4 * 4);
    std::vector<fa::embset::SampleMeta> meta;
    for (std::size_t i = 0; i < 4; ++i)
        meta.push_back({"t" + std::to_string(i), "tid" + std::to_string(i), std::nullopt});
    const auto t_path = save_bundle(
        dir, "t.embs", fa::embset::EmbeddingSet::from_raw(4, std::move(matrix), std::move(meta)));

    const auto out = dir.file("topk.json");
    const auto r = ts::run_cli(
        {"topk", "--query", q_path, "--target", t_path, "-k", "2", "--out", out, "--quiet"}, dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(ts::slurp(out));
    REQUIRE(j["command"].get<std::string>() == "topk");
    REQUIRE(j["k"].get<std::size_t>() == 2);
    REQUIRE(j["top_pairs"].size() == 2);
    // Every query matches its own copy at score 1; ties order by query then target.
    REQUIRE(j["top_pairs"][0]["query_id"].get<std::string>() == "s0_0");
    REQUIRE(j["top_pairs"][0]["target_id"].get<std::string>() == "t0");
    REQUIRE(j["top_pairs"][1]["query_id"].get<std::string>() == "s1_0");
    REQUIRE(j["top_pairs"][0]["score"].get<double>() >= 0.999999);
}

TEST_CASE("cli: verify runs k-fold accuracy over a pair list") {
    ts::TempDir dir;
    const auto set_path = save_bundle(dir, "set.embs", orthogonal_set(12, 2));
    const auto pairs_path = dir.file("pairs.csv");
    fa::verify::write_pairlist(pairs_path, separable_entries(12, 600));

    const auto out = dir.file("v.json");
    const auto r = ts::run_cli(
        {"verify", "--set", set_path, "--pairs", pairs_path, "--out", out, "--quiet"}, dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(ts::slurp(out));
    REQUIRE(j["folds"].get<std::size_t>() == 10);
    REQUIRE(j["mean_accuracy"].get<double>() == 1.0);
    REQUIRE(j["std"].get<double>() == 0.0);
    for (const auto& acc : j["per_fold_accuracy"]) REQUIRE(acc.get<double>() == 1.0);

    SECTION("repeat run is byte-identical") {
        const auto out2 = dir.file("v2.json");
        ts::run_cli({"verify", "--set", set_path, "--pairs", pairs_path, "--out", out2, "--quiet"},
                    dir);
        REQUIRE(ts::slurp(out) == ts::slurp(out2));
    }
    SECTION("fold shuffling is seeded and changes the split") {
        // Mislabel the first 60 entries so fold composition is observable.
        auto entries = separable_entries(12, 600);
        for (std::size_t i = 0; i < 60; ++i)
            entries[i].label = entries[i].label == fa::pairsample::PairKind::mated
                                   ? fa::pairsample::PairKind::nonmated
                                   : fa::pairsample::PairKind::mated;
        const auto bad_pairs = dir.file("bad.csv");
        fa::verify::write_pairlist(bad_pairs, entries);

        const auto plain = dir.file("plain.json");
        const auto sh1 = dir.file("sh1.json");
        const auto sh2 = dir.file("sh2.json");
        ts::run_cli({"verify", "--set", set_path, "--pairs", bad_pairs, "--out", plain, "--quiet"},
                    dir);
        ts::run_cli({"verify", "--set", set_path, "--pairs", bad_pairs, "--shuffle-folds", "1",
                     "--out", sh1, "--quiet"},
                    dir);
        ts::run_cli({"verify", "--set", set_path, "--pairs", bad_pairs, "--shuffle-folds", "1",
                     "--out", sh2, "--quiet"},
                    dir);
        REQUIRE(ts::slurp(sh1) == ts::slurp(sh2));
        const auto jp = nlohmann::json::parse(ts::slurp(plain));
        const auto js = nlohmann::json::parse(ts::slurp(sh1));
        REQUIRE(jp["per_fold_accuracy"] != js["per_fold_accuracy"]);
        // File order concentrates the mislabels in fold 0.
        REQUIRE(jp["per_fold_accuracy"][0].get<double>() == 0.0);
    }
    SECTION("a pair count not divisible by k exits 2") {
        auto entries = separable_entries(12, 601);
        const auto odd = dir.file("odd.csv");
        fa::verify::write_pairlist(odd, entries);
        const auto r2 = ts::run_cli(
            {"verify", "--set", set_path, "--pairs", odd, "--out", dir.file("o.json"), "--quiet"},
            dir);
        REQUIRE(r2.code == 2);
        REQUIRE(r2.err.find("non-divisible-count") != std::string::npos);
    }
    SECTION("fold count below 2 is rejected at parse time") {
        const auto r2 = ts::run_cli({"verify", "--set", set_path, "--pairs", pairs_path, "-k",
                                     "1", "--out", dir.file("k.json"), "--quiet"},
                                    dir);
        REQUIRE(r2.code == 1);
    }
}

TEST_CASE("cli: bias aggregates per-group accuracies") {
    ts::TempDir dir;
    const auto set_path = save_bundle(dir, "set.embs", orthogonal_set(12, 2));
    const auto groups = dir.file("groups");
    std::filesystem::create_directories(groups);
    fa::verify::write_pairlist(groups + "/alpha.csv", separable_entries(12, 200));
    fa::verify::write_pairlist(groups + "/beta.csv", separable_entries(12, 400));

    const auto out = dir.file("bias.json");
    const auto r = ts::run_cli(
        {"bias", "--set", set_path, "--groups", groups, "--out", out, "--quiet"}, dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(ts::slurp(out));
    REQUIRE(j["per_group"].size() == 2);
    REQUIRE(j["per_group"].contains("alpha"));
    REQUIRE(j["per_group"].contains("beta"));
    REQUIRE(j["average"].get<double>() == 1.0);
    REQUIRE(j["average_4dp"].get<double>() == 1.0);
    REQUIRE(j["max_gap"]["gap"].get<double>() == 0.0);
    REQUIRE(j["max_gap"]["best_group"].get<std::string>() == "alpha");

    SECTION("an empty group directory is a usage error") {
        const auto empty = dir.file("empty");
        std::filesystem::create_directories(empty);
        const auto r2 = ts::run_cli(
            {"bias", "--set", set_path, "--groups", empty, "--out", dir.file("x.json"), "--quiet"},
            dir);
        REQUIRE(r2.code == 1);
        REQUIRE(r2.err.find("no group pair lists") != std::string::npos);
    }
}

TEST_CASE("cli: bench-assess correlates benchmark columns") {
    ts::TempDir dir;
    const auto matrix = dir.file("acc.csv");
    fa::report::write_text_file(matrix,
                                "model,benchmark,accuracy\n"
                                "m1,synb,0.90\nm1,real1,0.90\nm1,real2,0.70\n"
                                "m2,synb,0.80\nm2,real1,0.80\nm2,real2,0.80\n"
                                "m3,synb,0.70\nm3,real1,0.70\nm3,real2,0.90\n"
                                "m4,synb,0.60\nm4,real1,0.60\nm4,real2,0.95\n");
    const auto out = dir.file("assess.json");
    const auto r = ts::run_cli(
        {"bench-assess", "--matrix", matrix, "--synthetic", "synb", "--out", out, "--quiet"}, dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(ts::slurp(out));
    REQUIRE(j["synthetic_benchmark"].get<std::string>() == "synb");
    REQUIRE(j["pairings"].size() == 2);
    REQUIRE(j["pairings"][0]["benchmark"].get<std::string>() == "real1");
    REQUIRE(j["pairings"][0]["pcc"].get<double>() == 1.0);
    REQUIRE(j["pairings"][0]["n_models"].get<std::size_t>() == 4);
    REQUIRE(j["pairings"][1]["pcc"].get<double>() < 0.0);

    SECTION("an absent synthetic column fails") {
        const auto r2 = ts::run_cli({"bench-assess", "--matrix", matrix, "--synthetic", "ghost",
                                     "--out", dir.file("g.json"), "--quiet"},
                                    dir);
        REQUIRE(r2.code != 0);
        REQUIRE(r2.err.find("ghost") != std::string::npos);
    }
}

TEST_CASE("cli: consistency echoes its sampling parameters") {
    ts::TempDir dir;
    const auto set_path = save_bundle(dir, "set.embs", orthogonal_set(12, 2));
    const auto pairs_path = dir.file("pairs.csv");
    fa::verify::write_pairlist(pairs_path, separable_entries(12, 200));

    const auto out = dir.file("c.json");
    const auto r = ts::run_cli({"consistency", "--set", set_path, "--pairs", pairs_path,
                                "--segments", "3", "--fraction", "1.0", "--seed", "5", "-k", "2",
                                "--out", out, "--quiet"},
                               dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(ts::slurp(out));
    REQUIRE(j["segments"].get<std::size_t>() == 3);
    REQUIRE(j["fraction"].get<double>() == 1.0);
    REQUIRE(j["seed"].get<std::uint64_t>() == 5);
    REQUIRE(j["std"].get<double>() == 0.0);
    REQUIRE(j["segment_means"].size() == 3);
    for (const auto& m : j["segment_means"]) REQUIRE(m.get<double>() == 1.0);

    const auto out2 = dir.file("c2.json");
    ts::run_cli({"consistency", "--set", set_path, "--pairs", pairs_path, "--segments", "3",
                 "--fraction", "1.0", "--seed", "5", "-k", "2", "--out", out2, "--quiet"},
                dir);
    REQUIRE(ts::slurp(out) == ts::slurp(out2));
}

TEST_CASE("cli: audit emits a reproducible bundle across worker counts") {
    ts::TempDir dir;
    // Clustered so every section has non-degenerate score spread, with mated
    // and non-mated scores still cleanly separated at this noise level.
    const auto synthetic = ts::make_clustered_set(24, 4, 24, 17, 0.08);
    const auto syn_path = save_bundle(dir, "syn.embs", synthetic);

    fa::Rng rng(13);
    std::vector<float> matrix;
    std::vector<fa::embset::SampleMeta> meta;
    for (std::size_t i = 0; i < 20; ++i) {
        const auto row = ts::random_unit(24, rng);
        matrix.insert(matrix.end(), row.begin(), row.end());
        meta.push_back({"r" + std::to_string(i), "rid" + std::to_string(i), std::nullopt});
    }
    matrix.insert(matrix.end(), synthetic.row(0).begin(), synthetic.row(0).end());
    meta.push_back({"r20", "rid20", std::nullopt});
    const auto ref_path = save_bundle(
        dir, "ref.embs",
        fa::embset::EmbeddingSet::from_raw(24, std::move(matrix), std::move(meta)));

    const auto pairs_path = dir.file("pairs.csv");
    fa::verify::write_pairlist(pairs_path, separable_entries(24, 1000));
    const auto groups = dir.file("groups");
    std::filesystem::create_directories(groups);
    fa::verify::write_pairlist(groups + "/alpha.csv", separable_entries(24, 200));
    fa::verify::write_pairlist(groups + "/beta.csv", separable_entries(24, 200));
    const auto acc_path = dir.file("acc.csv");
    fa::report::write_text_file(acc_path,
                                "model,benchmark,accuracy\n"
                                "m1,synb,0.90\nm1,real1,0.90\n"
                                "m2,synb,0.80\nm2,real1,0.80\n"
                                "m3,synb,0.70\nm3,real1,0.70\n");

    const auto run = [&](const std::string& out_dir, const std::string& workers) {
        std::vector<std::string> args{
            "audit",     "--synthetic", syn_path,   "--reference", ref_path,
            "--pairs",   pairs_path,    "--groups", groups,        "--matrix",
            acc_path,    "--synthetic-benchmark",   "synb",        "-n",
            "2000",      "--seed",      "9",        "--topk",      "3",
            "--segments", "4",          "--fraction", "0.75",      "--chunk",
            "7",         "--out-dir",   out_dir,    "--quiet"};
        if (!workers.empty()) {
            args.push_back("--workers");
            args.push_back(workers);
        }
        return ts::run_cli(args, dir, {{"SOURCE_DATE_EPOCH", "1700000000"}});
    };

    const auto ra = run(dir.file("outA"), "1");
    INFO(ra.err);
    REQUIRE(ra.code == 0);
    const auto lines = stdout_lines(ra.out);
    REQUIRE(lines.size() == 5);
    const std::vector<std::string> names{"report.json", "biometric_histogram.csv",
                                         "leakage_histogram.csv", "biometric_distributions.svg",
                                         "leakage_distribution.svg"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        REQUIRE(std::filesystem::path(lines[i]).filename() == names[i]);
        REQUIRE(std::filesystem::exists(lines[i]));
    }

    const auto rb = run(dir.file("outB"), "2");
    REQUIRE(rb.code == 0);
    const auto rc = run(dir.file("outC"), "8");
    REQUIRE(rc.code == 0);
    for (const auto& name : names) {
        const auto a = ts::slurp(dir.file("outA") + "/" + name);
        REQUIRE_FALSE(a.empty());
        REQUIRE(a == ts::slurp(dir.file("outB") + "/" + name));
        REQUIRE(a == ts::slurp(dir.file("outC") + "/" + name));
    }

    const auto j = nlohmann::json::parse(ts::slurp(dir.file("outA") + "/report.json"));
    REQUIRE(j["schema"].get<std::string>() == fa::kReportSchema);
    REQUIRE(j["dataset"].get<std::string>() == "syn");
    REQUIRE(j["seed"].get<std::uint64_t>() == 9);
    REQUIRE(j["generated"].get<std::string>() == "2023-11-14T22:13:20Z");
    REQUIRE(j["inputs"].size() == 8);
    REQUIRE(j["sections"].contains("biometric"));
    REQUIRE(j["sections"].contains("leakage"));
    REQUIRE(j["sections"].contains("verification"));
    REQUIRE(j["sections"].contains("bias"));
    REQUIRE(j["sections"].contains("reliability"));
    REQUIRE(j["sections"]["biometric"]["n"].get<std::uint64_t>() == 2000);
    REQUIRE(j["sections"]["verification"]["mean_accuracy"].get<double>() == 1.0);
    REQUIRE(j["sections"]["leakage"]["top_pairs"][0]["query_id"].get<std::string>() == "s0_0");
    REQUIRE(j["sections"]["leakage"]["top_pairs"][0]["score"].get<double>() >= 0.999999);
    REQUIRE(j["sections"]["bias"]["max_gap"]["gap"].get<double>() == 0.0);
    REQUIRE(j["sections"]["reliability"]["assessment"]["pairings"][0]["pcc"].get<double>() == 1.0);
    REQUIRE(j["sections"]["reliability"]["consistency"]["segments"].get<std::size_t>() == 4);

    SECTION("report re-emits matching sidecars from the JSON") {
        const auto rd = dir.file("reemit");
        const auto rr = ts::run_cli(
            {"report", "--in", dir.file("outA") + "/report.json", "--out-dir", rd, "--quiet"},
            dir);
        INFO(rr.err);
        REQUIRE(rr.code == 0);
        REQUIRE(stdout_lines(rr.out).size() == 4);
        REQUIRE(ts::slurp(rd + "/biometric_histogram.csv") ==
                ts::slurp(dir.file("outA") + "/biometric_histogram.csv"));
        REQUIRE(ts::slurp(rd + "/leakage_histogram.csv") ==
                ts::slurp(dir.file("outA") + "/leakage_histogram.csv"));
        REQUIRE(ts::well_formed_xml(ts::slurp(rd + "/biometric_distributions.svg")));
        REQUIRE(ts::well_formed_xml(ts::slurp(rd + "/leakage_distribution.svg")));

        const auto rd2 = dir.file("reemit2");
        ts::run_cli(
            {"report", "--in", dir.file("outA") + "/report.json", "--out-dir", rd2, "--quiet"},
            dir);
        REQUIRE(ts::slurp(rd + "/biometric_distributions.svg") ==
                ts::slurp(rd2 + "/biometric_distributions.svg"));
    }
    SECTION("matrix without a synthetic benchmark name fails validation") {
        const auto r2 = ts::run_cli({"audit", "--synthetic", syn_path, "--matrix", acc_path,
                                     "-n", "50", "--out-dir", dir.file("x"), "--quiet"},
                                    dir);
        REQUIRE(r2.code == 1);
        REQUIRE(r2.err.find("--synthetic-benchmark") != std::string::npos);
    }
    SECTION("malformed report JSON exits 2") {
        const auto broken = dir.file("broken.json");
        fa::report::write_text_file(broken, "{not json");
        const auto r2 = ts::run_cli(
            {"report", "--in", broken, "--out-dir", dir.file("y"), "--quiet"}, dir);
        REQUIRE(r2.code == 2);
        REQUIRE(r2.err.find("format-violation") != std::string::npos);
    }
}
