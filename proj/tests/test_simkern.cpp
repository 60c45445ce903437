#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <vector>

#include "testsupport.hpp"

namespace fa = faceaudit;
using fa::simkern::Hit;
using fa::simkern::TopK;

namespace {

bool same_hits(const std::vector<TopK>& got, const std::vector<std::vector<Hit>>& want) {
    if (got.size() != want.size()) return false;
    for (std::size_t q = 0; q < got.size(); ++q) {
        if (got[q].hits.size() != want[q].size()) return false;
        for (std::size_t h = 0; h < want[q].size(); ++h) {
            if (got[q].hits[h].index != want[q][h].index) return false;
            if (got[q].hits[h].score != want[q][h].score) return false;  // bitwise
        }
    }
    return true;
}

}  // namespace

TEST_CASE("SIMD and scalar kernels are bit-identical") {
    fa::Rng rng(31);
    for (const std::size_t dim : {1ul, 2ul, 5ul, 7ul, 8ul, 9ul, 15ul, 16ul, 17ul, 63ul, 64ul,
                                  65ul, 100ul, 512ul}) {
        std::vector<float> a(dim), b(dim);
        std::vector<double> ad(dim), bd(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            a[d] = static_cast<float>(2.0 * rng.real53() - 1.0);
            b[d] = static_cast<float>(2.0 * rng.real53() - 1.0);
            ad[d] = static_cast<double>(a[d]);
            bd[d] = static_cast<double>(b[d]);
        }
        const double ff = fa::kernel::dot_ff(a.data(), b.data(), dim);
        REQUIRE(ff == fa::kernel::dot_ff_scalar(a.data(), b.data(), dim));
        const double dd = fa::kernel::dot_dd(ad.data(), bd.data(), dim);
        REQUIRE(dd == fa::kernel::dot_dd_scalar(ad.data(), bd.data(), dim));
        REQUIRE(dd == ff);  // pre-widened operands, same lanes

        std::vector<float> t(4 * dim);
        for (auto& x : t) x = static_cast<float>(2.0 * rng.real53() - 1.0);
        std::vector<double> td(t.begin(), t.end());
        double s4[4];
        fa::kernel::dot_dd4(ad.data(), td.data(), td.data() + dim, td.data() + 2 * dim,
                            td.data() + 3 * dim, dim, s4);
        for (int k = 0; k < 4; ++k) {
            REQUIRE(s4[k] == fa::kernel::dot_dd_scalar(ad.data(), td.data() + k * dim, dim));
            REQUIRE(s4[k] == fa::kernel::dot_ff(a.data(), t.data() + k * dim, dim));
        }
    }
}

TEST_CASE("cosine agrees with a plain double dot to rounding error") {
    fa::Rng rng(32);
    for (int rep = 0; rep < 50; ++rep) {
        const auto a = ts::random_unit(48, rng);
        const auto b = ts::random_unit(48, rng);
        double plain = 0.0;
        for (std::size_t d = 0; d < a.size(); ++d)
            plain += static_cast<double>(a[d]) * static_cast<double>(b[d]);
        const double c = fa::simkern::cosine(a, b);
        REQUIRE(std::abs(c - plain) < 1e-12);
        REQUIRE(c == fa::simkern::cosine(b, a));  // symmetric bitwise
        REQUIRE(c >= -1.0 - 1e-9);
        REQUIRE(c <= 1.0 + 1e-9);
    }
}

TEST_CASE("cosine rejects mismatched dimensions") {
    const std::vector<float> a(8, 0.5f), b(9, 0.5f);
    REQUIRE_THROWS_AS(fa::simkern::cosine(std::span<const float>(a), std::span<const float>(b)),
                      fa::Error);
}

TEST_CASE("pair_scores fills slots in pair order, any worker count") {
    const auto set = ts::make_random_set(8, 4, 24, 33);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    fa::Rng rng(34);
    for (int p = 0; p < 200; ++p) {
        const auto i = static_cast<std::uint32_t>(rng.below(set.n_samples()));
        const auto j = static_cast<std::uint32_t>(rng.below(set.n_samples()));
        pairs.emplace_back(i, j);
    }
    const auto base = fa::simkern::pair_scores(set, pairs, 1);
    REQUIRE(base.size() == pairs.size());
    for (std::size_t p = 0; p < pairs.size(); ++p)
        REQUIRE(base[p] == fa::simkern::cosine(set, pairs[p].first, pairs[p].second));
    for (const int workers : {2, 4, 8}) {
        const auto again = fa::simkern::pair_scores(set, pairs, workers);
        REQUIRE(again == base);
    }
}

TEST_CASE("cross_topk matches the full-sort oracle") {
    fa::Rng seeds(35);
    for (int rep = 0; rep < 12; ++rep) {
        const std::size_t nq = 1 + seeds.below(40);
        const std::size_t nr = 1 + seeds.below(60);
        const std::uint32_t dim = static_cast<std::uint32_t>(1 + seeds.below(40));
        const std::size_t k = 1 + seeds.below(8);
        const auto queries = ts::make_random_set(nq, 1, dim, seeds.next_u64());
        const auto reference = ts::make_random_set(nr, 1, dim, seeds.next_u64());
        const auto got = fa::simkern::cross_topk(queries, reference, k);
        REQUIRE(same_hits(got, ts::naive_topk(queries, reference, k)));
    }
}

TEST_CASE("k larger than the reference returns everything, sorted") {
    const auto queries = ts::make_random_set(3, 1, 16, 36);
    const auto reference = ts::make_random_set(5, 1, 16, 37);
    const auto got = fa::simkern::cross_topk(queries, reference, 50);
    REQUIRE(same_hits(got, ts::naive_topk(queries, reference, 50)));
    for (const auto& t : got) REQUIRE(t.hits.size() == reference.n_samples());
}

TEST_CASE("results are invariant to chunk size and worker count") {
    const auto queries = ts::make_random_set(20, 1, 32, 38);
    const auto reference = ts::make_random_set(70, 1, 32, 39);
    const auto base = fa::simkern::cross_topk(queries, reference, 5, 2048, 1);
    for (const std::size_t chunk : {1ul, 3ul, 7ul, 16ul, 64ul, 100ul}) {
        for (const int workers : {1, 2, 4, 8}) {
            const auto got = fa::simkern::cross_topk(queries, reference, 5, chunk, workers);
            REQUIRE(got.size() == base.size());
            for (std::size_t q = 0; q < got.size(); ++q) {
                REQUIRE(got[q].hits.size() == base[q].hits.size());
                for (std::size_t h = 0; h < got[q].hits.size(); ++h) {
                    REQUIRE(got[q].hits[h].index == base[q].hits[h].index);
                    REQUIRE(got[q].hits[h].score == base[q].hits[h].score);
                }
            }
        }
    }
}

TEST_CASE("ties break toward the lower reference index") {
    // Reference rows 1, 3 and 4 are identical, so the query tied against
    // them must list 1 before 3 before 4.
    fa::Rng rng(40);
    const std::uint32_t dim = 12;
    const auto v = ts::random_unit(dim, rng);
    std::vector<float> matrix;
    std::vector<fa::embset::SampleMeta> manifest;
    for (int i = 0; i < 6; ++i) {
        const auto row = (i == 1 || i == 3 || i == 4) ? v : ts::random_unit(dim, rng);
        matrix.insert(matrix.end(), row.begin(), row.end());
        manifest.push_back({"r" + std::to_string(i), "id" + std::to_string(i), {}});
    }
    const auto reference =
        fa::embset::EmbeddingSet::from_raw(dim, std::move(matrix), std::move(manifest));
    const auto queries = fa::embset::EmbeddingSet::from_raw(
        dim, std::vector<float>(v), {fa::embset::SampleMeta{"q", "q", {}}});

    const auto got = fa::simkern::cross_topk(queries, reference, 3);
    REQUIRE(got[0].hits.size() == 3);
    REQUIRE(got[0].hits[0].index == 1);
    REQUIRE(got[0].hits[1].index == 3);
    REQUIRE(got[0].hits[2].index == 4);
    REQUIRE(got[0].hits[0].score == got[0].hits[1].score);
    REQUIRE(got[0].hits[1].score == got[0].hits[2].score);

    // Same outcome at any chunk size, even when the tied rows straddle
    // chunk boundaries.
    for (const std::size_t chunk : {1ul, 2ul, 3ul, 4ul}) {
        const auto again = fa::simkern::cross_topk(queries, reference, 3, chunk);
        REQUIRE(again[0].hits[0].index == 1);
        REQUIRE(again[0].hits[1].index == 3);
        REQUIRE(again[0].hits[2].index == 4);
    }
}

TEST_CASE("streamed scan equals the in-memory scan") {
    ts::TempDir dir;
    const auto queries = ts::make_random_set(15, 1, 20, 41);
    const auto reference = ts::make_random_set(40, 1, 20, 42);
    fa::embset::save_set(reference, dir.file("ref.embs"));

    const auto mem = fa::simkern::cross_topk(queries, reference, 4);
    for (const std::size_t chunk : {1ul, 5ul, 17ul, 4096ul}) {
        fa::embset::EmbsReader reader(dir.file("ref.embs"));
        const auto streamed = fa::simkern::cross_topk(queries, reader, 4, chunk);
        REQUIRE(streamed.size() == mem.size());
        for (std::size_t q = 0; q < mem.size(); ++q)
            for (std::size_t h = 0; h < mem[q].hits.size(); ++h) {
                REQUIRE(streamed[q].hits[h].index == mem[q].hits[h].index);
                REQUIRE(streamed[q].hits[h].score == mem[q].hits[h].score);
            }
    }
}

TEST_CASE("streamed scan reports progress over all rows") {
    ts::TempDir dir;
    const auto queries = ts::make_random_set(2, 1, 8, 43);
    const auto reference = ts::make_random_set(25, 1, 8, 44);
    fa::embset::save_set(reference, dir.file("p.embs"));
    fa::embset::EmbsReader reader(dir.file("p.embs"));
    std::vector<std::uint64_t> seen;
    std::uint64_t total = 0;
    fa::simkern::cross_topk(queries, reader, 1, 10, 1,
                            [&](std::uint64_t done, std::uint64_t all) {
                                seen.push_back(done);
                                total = all;
                            });
    REQUIRE(total == 25);
    REQUIRE(seen == std::vector<std::uint64_t>{10, 20, 25});
}

TEST_CASE("cross_topk validates its arguments") {
    const auto queries = ts::make_random_set(2, 1, 8, 45);
    const auto reference = ts::make_random_set(2, 1, 8, 46);
    const auto other_dim = ts::make_random_set(2, 1, 9, 47);
    REQUIRE_THROWS_AS(fa::simkern::cross_topk(queries, reference, 0), fa::Error);
    REQUIRE_THROWS_AS(fa::simkern::cross_topk(queries, reference, 1, 0), fa::Error);
    try {
        fa::simkern::cross_topk(queries, other_dim, 1);
        FAIL("expected an error");
    } catch (const fa::Error& e) {
        REQUIRE(e.kind() == fa::ErrorKind::data_integrity);
    }
}

TEST_CASE("better is a strict total order on distinct hits") {
    const Hit a{0, 0.5}, b{1, 0.5}, c{0, 0.7};
    REQUIRE(fa::simkern::better(c, a));
    REQUIRE_FALSE(fa::simkern::better(a, c));
    REQUIRE(fa::simkern::better(a, b));   // tie: lower index
    REQUIRE_FALSE(fa::simkern::better(b, a));
    REQUIRE_FALSE(fa::simkern::better(a, a));
}
