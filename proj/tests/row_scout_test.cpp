#include "utrr/row_scout.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace utrr;

namespace {

DeviceConfig small_config(std::uint64_t seed, double vrt_fraction = 0.05) {
    DeviceConfig config;
    config.banks = 1;
    config.rows_per_bank = 512;
    config.row_bits = 1024;
    config.retention.vrt_row_fraction = vrt_fraction;
    config.regular_refresh.full_pass_period_refs = 512;
    config.seed = seed;
    return config;
}

ProfilingConfig profiling(std::string layout, std::uint32_t groups, std::uint32_t checks = 20) {
    ProfilingConfig config;
    config.layout = std::move(layout);
    config.groups_needed = groups;
    config.consistency_checks = checks;
    return config;
}

// Smallest T (on the t_initial/t_step grid) at which `layout` matches rows of uniform retention T - q, no VRT.
Nanos oracle_first_t(const DramDevice& device, const RowGroupLayout& layout, const ProfilingConfig& config) {
    const Nanos q = device.config().retention.retention_quantum;
    const CellTable& cells = device.cells();
    for (Nanos t = config.t_initial; t <= config.t_max; t += config.t_step) {
        for (std::uint32_t a = 0; a + layout.length() <= device.config().rows_per_bank; ++a) {
            bool ok = true;
            for (std::uint32_t o : layout.probe_offsets())
                ok = ok && !cells.is_vrt(0, a + o) && cells.min_retention(0, a + o) == t - q;
            if (ok) return t;
        }
    }
    return Nanos::max();
}

}  // namespace

TEST(Layout, ParsesProbeAndGapPositions) {
    const RowGroupLayout layout("RRR-RRR");
    EXPECT_EQ(layout.probe_offsets(), (std::vector<std::uint32_t>{0, 1, 2, 4, 5, 6}));
    EXPECT_EQ(layout.gap_offsets(), (std::vector<std::uint32_t>{3}));
    EXPECT_THROW(RowGroupLayout("---"), Error);
    EXPECT_THROW(RowGroupLayout("RxR"), Error);
    EXPECT_THROW(RowGroupLayout(std::string(33, 'R')), Error);
}

TEST(Scan, ShortExposureFindsNothing) {
    DramDevice device(small_config(1));
    EXPECT_TRUE(scan_failing_rows(device, 0, 0, 512, device.config().retention.weak_retention_min).empty());
}

TEST(Scan, LongExposureFindsExactlyTheWeakRows) {
    DramDevice device(small_config(2));
    const Nanos t = device.config().retention.base_retention + device.config().retention.retention_quantum;
    std::vector<std::uint32_t> expected;
    for (std::uint32_t p = 0; p < 512; ++p)
        if (!device.cells().weak_cells(0, p).empty()) expected.push_back(p);
    EXPECT_FALSE(expected.empty());
    EXPECT_EQ(scan_failing_rows(device, 0, 0, 512, t), expected);
}

TEST(Scan, MatchesTheRetentionOracleAtEveryStep) {
    DramDevice device(small_config(3, 0.0));
    for (Nanos t = 150ms; t <= 500ms; t += 50ms) {
        std::vector<std::uint32_t> expected;
        for (std::uint32_t p = 0; p < 512; ++p)
            if (device.cells().min_retention(0, p) < t) expected.push_back(p);
        EXPECT_EQ(scan_failing_rows(device, 0, 0, 512, t), expected) << t.count();
    }
}

TEST(Scan, RepeatsWithoutVrt) {
    DramDevice device(small_config(4, 0.0));
    EXPECT_EQ(scan_failing_rows(device, 0, 0, 512, 300ms), scan_failing_rows(device, 0, 0, 512, 300ms));
}

TEST(Scan, RejectsOutOfRange) {
    DramDevice device(small_config(4));
    EXPECT_THROW(scan_failing_rows(device, 0, 0, 513, 300ms), Error);
    EXPECT_THROW(scan_failing_rows(device, 1, 0, 10, 300ms), Error);
}

TEST(Scout, FindsTheFirstMatchingGroupAtTheSmallestT) {
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        DramDevice device(small_config(seed));
        const ProfilingConfig config = profiling("R-R", 1);
        const auto groups = find_row_groups(device, config);
        ASSERT_EQ(groups.size(), 1U);
        const RowGroup& g = groups[0];
        EXPECT_EQ(g.rows, (std::vector<std::uint32_t>{g.anchor, g.anchor + 2}));
        EXPECT_EQ(g.gaps(), (std::vector<std::uint32_t>{g.anchor + 1}));
        EXPECT_EQ(g.retention, oracle_first_t(device, RowGroupLayout("R-R"), config)) << seed;
        for (std::uint32_t row : g.rows) {
            EXPECT_EQ(device.cells().min_retention(0, row), g.retention - 50ms);
            EXPECT_FALSE(device.cells().is_vrt(0, row));
        }
    }
}

TEST(Scout, GroupsAreDisjointAndKeepTheirGeometry) {
    DramDevice device(small_config(21));
    const auto groups = find_row_groups(device, profiling("RR-RR", 3));
    ASSERT_EQ(groups.size(), 3U);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const RowGroup& g = groups[i];
        EXPECT_EQ(g.rows, (std::vector<std::uint32_t>{g.anchor, g.anchor + 1, g.anchor + 3, g.anchor + 4}));
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            const RowGroup& h = groups[j];
            EXPECT_TRUE(g.footprint_end() + 2 <= h.anchor || h.footprint_end() + 2 <= g.anchor);
        }
    }
}

TEST(Scout, ExcludedRowsAreNeverUsed) {
    DramDevice device(small_config(22));
    ProfilingConfig config = profiling("R-R", 4);
    for (std::uint32_t r = 0; r < 256; ++r) config.exclude.push_back(r);
    for (const RowGroup& g : find_row_groups(device, config)) EXPECT_GE(g.anchor, 258U);
}

TEST(Scout, VrtRowsAreFilteredOut) {
    // every weak row toggles retention; none may be returned
    DramDevice device(small_config(5, 1.0));
    EXPECT_THROW(
        {
            try {
                find_row_groups(device, profiling("R", 1, 30));
            } catch (const Error& e) {
                EXPECT_EQ(e.kind(), ErrorKind::insufficient_groups);
                throw;
            }
        },
        Error);
}

TEST(Scout, NoWeakRowsMeansInsufficientGroups) {
    DeviceConfig config = small_config(6);
    config.retention.weak_row_fraction = 0;
    DramDevice device(config);
    try {
        find_row_groups(device, profiling("R-R", 1));
        FAIL() << "expected insufficient-groups";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::insufficient_groups);
        EXPECT_NE(std::string(e.what()).find("found 0 of 1"), std::string::npos);
    }
}

TEST(Scout, ReturnedRowsSurviveFreshRevalidation) {
    for (std::uint64_t seed = 30; seed < 33; ++seed) {
        DramDevice device(small_config(seed));
        const auto groups = find_row_groups(device, profiling("R-R", 5));
        for (const RowGroup& g : groups) EXPECT_TRUE(rows_consistent(device, 0, g.rows, g.retention, 100));
    }
}

TEST(Scout, ConfigIsValidated) {
    ProfilingConfig config = profiling("R-R", 0);
    EXPECT_THROW(config.validate(), Error);
    config = profiling("R-R", 1);
    config.t_step = 0ns;
    EXPECT_THROW(config.validate(), Error);
    config = profiling("R-R", 1);
    config.t_initial = 10ms;
    EXPECT_THROW(config.validate(), Error);
}
