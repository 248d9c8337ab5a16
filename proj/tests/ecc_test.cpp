#include "utrr/ecc.hpp"
#include "utrr/presets.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <set>

using namespace utrr;

namespace {

BitFlipReport synthetic(const std::vector<std::pair<std::uint32_t, std::vector<std::uint32_t>>>& rows) {
    BitFlipReport r;
    for (const auto& [row, bits] : rows) {
        std::map<std::uint32_t, std::uint32_t> per_chunk;
        for (std::uint32_t b : bits) ++per_chunk[b / 64];
        for (auto [chunk, n] : per_chunk) r.chunks.push_back({row, chunk, n});
        r.total += bits.size();
        r.rows.push_back({row, bits});
    }
    return r;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorKind::invalid_config;
}

}  // namespace

TEST(Secded, CleanWordsDecodeUntouched) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t data = rng.next();
        const secded::Codeword w = secded::encode(data);
        EXPECT_EQ(w.count() % 2, 0u);
        const secded::Decoded d = secded::decode(w);
        EXPECT_EQ(d.status, secded::Status::clean);
        EXPECT_EQ(d.data, data);
    }
}

TEST(Secded, EverySingleFlipIsCorrected) {
    Rng rng(2);
    for (int i = 0; i < 10'000; ++i) {
        const std::uint64_t data = rng.next();
        const secded::Codeword w = secded::encode(data);
        for (std::uint32_t p = 0; p < 72; ++p) {
            secded::Codeword bad = w;
            bad.flip(p);
            const secded::Decoded d = secded::decode(bad);
            ASSERT_EQ(d.status, secded::Status::corrected) << p;
            ASSERT_EQ(d.data, data) << p;
        }
    }
}

TEST(Secded, DoubleFlipsAreFlagged) {
    Rng rng(3);
    // exhaustive over position pairs for one word, sampled words for the rest
    const secded::Codeword w = secded::encode(0xfeedfacecafebeefULL);
    for (std::uint32_t a = 0; a < 72; ++a)
        for (std::uint32_t b = a + 1; b < 72; ++b) {
            secded::Codeword bad = w;
            bad.flip(a);
            bad.flip(b);
            ASSERT_EQ(secded::decode(bad).status, secded::Status::uncorrectable) << a << ',' << b;
        }
    for (int i = 0; i < 20'000; ++i) {
        const auto a = static_cast<std::uint32_t>(rng.below(72));
        auto b = static_cast<std::uint32_t>(rng.below(71));
        if (b >= a) ++b;
        secded::Codeword bad = secded::encode(rng.next());
        bad.flip(a);
        bad.flip(b);
        ASSERT_EQ(secded::decode(bad).status, secded::Status::uncorrectable);
    }
}

TEST(Secded, ThreeFlipsNeverComeBackCorrect) {
    Rng rng(4);
    std::uint64_t silent = 0, detected = 0;
    for (int i = 0; i < 20'000; ++i) {
        std::set<std::uint32_t> picks;
        while (picks.size() < 3) picks.insert(static_cast<std::uint32_t>(rng.below(72)));
        const std::vector<std::uint32_t> pos(picks.begin(), picks.end());
        const std::uint64_t data = rng.next();
        secded::Codeword bad = secded::encode(data);
        for (std::uint32_t p : pos) bad.flip(p);
        const secded::Decoded d = secded::decode(bad);
        ASSERT_FALSE(d.status != secded::Status::uncorrectable && d.data == data && bad != secded::encode(data));
        const EccOutcome o = classify(CodewordSpec::secded(), pos);
        ASSERT_NE(o, EccOutcome::corrected);
        (o == EccOutcome::silent_or_miscorrected ? silent : detected)++;
    }
    EXPECT_GT(silent, 0u);
    EXPECT_GT(detected, 0u);
}

TEST(Classify, SecdedOneAndTwo) {
    const CodewordSpec s = CodewordSpec::secded();
    EXPECT_EQ(classify(s, std::vector<std::uint32_t>{}), EccOutcome::corrected);
    EXPECT_EQ(classify(s, std::vector<std::uint32_t>{17}), EccOutcome::corrected);
    EXPECT_EQ(classify(s, std::vector<std::uint32_t>{17, 40}), EccOutcome::detected_uncorrectable);
    EXPECT_EQ(kind_of([&] { classify(s, std::vector<std::uint32_t>{72}); }), ErrorKind::out_of_range);
}

TEST(Classify, SymbolCodeCountsChips) {
    // x4 chips, 4-bit symbols: bits 0..3 share chip 0, bit 4 is chip 1
    const CodewordSpec chipkill = CodewordSpec::symbol(4, 1, 2, 4);
    EXPECT_EQ(symbol_of(chipkill, 0), symbol_of(chipkill, 3));
    EXPECT_NE(symbol_of(chipkill, 3), symbol_of(chipkill, 4));
    EXPECT_EQ(classify(chipkill, std::vector<std::uint32_t>{0, 1, 2, 3}), EccOutcome::corrected);
    EXPECT_EQ(classify(chipkill, std::vector<std::uint32_t>{0, 4}), EccOutcome::detected_uncorrectable);
    EXPECT_EQ(classify(chipkill, std::vector<std::uint32_t>{0, 4, 8}), EccOutcome::silent_or_miscorrected);
    EXPECT_EQ(kind_of([&] { classify(chipkill, std::vector<std::uint32_t>{64}); }), ErrorKind::out_of_range);
    EXPECT_EQ(kind_of([] { CodewordSpec::symbol(4, 3, 2, 4); }), ErrorKind::invalid_config);
}

TEST(Classify, ReedSolomonCorrectsHalfDetectsAll) {
    const CodewordSpec rs = CodewordSpec::reed_solomon_code(8, 7, 8);
    std::vector<std::uint32_t> bits;
    for (std::uint32_t byte = 0; byte < 8; ++byte) {
        const EccOutcome o = classify(rs, bits);
        if (byte <= 3) EXPECT_EQ(o, EccOutcome::corrected) << byte;
        else if (byte <= 7) EXPECT_EQ(o, EccOutcome::detected_uncorrectable) << byte;
        bits.push_back(byte * 8 + 1);
    }
    EXPECT_EQ(classify(rs, bits), EccOutcome::silent_or_miscorrected);
}

TEST(RsParity, DetectAllCorrectHalf) {
    EXPECT_EQ(rs_parity_needed(7), 7u);
    EXPECT_EQ(rs_parity_needed(0), 0u);
    EXPECT_EQ(rs_parity_needed(2), 2u);
}

TEST(Histogram, Examples) {
    EXPECT_TRUE(chunk_histogram(BitFlipReport{}).empty());
    const BitFlipReport r = synthetic({{10, {1, 5, 63, 64 + 7}}});
    EXPECT_EQ(chunk_histogram(r), (ChunkHistogram{{3, 1}, {1, 1}}));
}

TEST(Histogram, MatchesARecountOfRealFlips) {
    DeviceConfig c = PresetCatalog::builtin().device("A_TRR1", Scale::desk, 1);
    c.trr = TrrMechanismConfig{};
    const DramDevice base(c);
    for (std::uint32_t victim : {120u, 240u, 360u}) {
        DramDevice device = base;
        const auto site = PatternSite::double_sided(c, 0, victim);
        const BitFlipReport r = execute(device, gen_plain_double_sided(site), 3000);
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> recount;
        for (const RowFlips& row : r.rows)
            for (std::uint32_t bit : row.bits) ++recount[{row.row, bit >> 6}];
        ChunkHistogram expected;
        for (const auto& [key, n] : recount) ++expected[n];
        const ChunkHistogram h = chunk_histogram(r);
        EXPECT_EQ(h, expected);
        std::uint64_t conserved = 0;
        for (auto [flips, chunks] : h) {
            EXPECT_GE(flips, 1u);
            conserved += flips * chunks;
        }
        EXPECT_EQ(conserved, r.total);
    }
}

TEST(Impact, SingleFlipChunksAreAllCorrected) {
    const BitFlipReport r = synthetic({{1, {3, 70, 200}}, {2, {9}}});
    const CodewordSpec specs[] = {CodewordSpec::secded()};
    const EccImpact impact = ecc_impact_report(r, specs);
    EXPECT_EQ(impact.histogram, (ChunkHistogram{{1, 4}}));
    EXPECT_EQ(impact.tallies[0].corrected, 4u);
    EXPECT_EQ(impact.tallies[0].detected + impact.tallies[0].silent, 0u);
    EXPECT_EQ(impact.rs_parity_for_worst_chunk, 1u);
}

TEST(Impact, ThreeFlipChunkSlipsPastSecded) {
    // data bits 0,1,2 sit at positions 3,5,6: the syndromes cancel
    const BitFlipReport r = synthetic({{1, {0, 1, 2}}});
    const CodewordSpec specs[] = {CodewordSpec::secded()};
    const EccImpact impact = ecc_impact_report(r, specs);
    EXPECT_EQ(impact.histogram, (ChunkHistogram{{3, 1}}));
    EXPECT_EQ(impact.tallies[0].silent, 1u);
}

TEST(Impact, TwoChipsUnderChipkillAreDetected) {
    const BitFlipReport r = synthetic({{1, {2, 9}}, {5, {64 + 17, 64 + 60}}});
    const CodewordSpec specs[] = {CodewordSpec::symbol(8, 1, 2, 8), CodewordSpec::secded()};
    const EccImpact impact = ecc_impact_report(r, specs);
    EXPECT_EQ(impact.tallies[0].detected, 2u);
    EXPECT_EQ(impact.tallies[1].detected, 2u);
    EXPECT_EQ(impact.rs_parity_for_worst_chunk, 2u);
    const nlohmann::json doc = to_json(impact);
    EXPECT_EQ(doc["axes"]["y_scale"], "log");
    EXPECT_EQ(histogram_csv(impact.histogram), "flips,chunks\n2,2\n");
}
