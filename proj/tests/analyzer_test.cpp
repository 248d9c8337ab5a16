#include "utrr/analyzer.hpp"
#include "utrr/presets.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace utrr;

namespace {

DeviceConfig preset_config(std::string_view name, std::uint64_t seed = 1) {
    return PresetCatalog::builtin().device(name, Scale::desk, seed);
}

// Every weak row shares one retention value, so long layouts are easy to find.
DeviceConfig uniform_retention(DeviceConfig config) {
    config.retention.weak_retention_min = 250ms;
    config.retention.weak_retention_max = 250ms;
    config.retention.weak_cells_min = 1;
    config.retention.weak_cells_max = 1;
    return config;
}

std::vector<RowGroup> scout(DramDevice& device, std::string layout, std::uint32_t groups, std::uint32_t lo = 100,
                            std::uint32_t hi = 900, std::uint32_t bank = 0) {
    ProfilingConfig config;
    config.bank = bank;
    config.row_lo = lo;
    config.row_hi = hi;
    config.layout = std::move(layout);
    config.groups_needed = groups;
    config.consistency_checks = 10;
    return find_row_groups(device, config);
}

ExperimentConfig single_aggressor(const RowGroup& group, std::uint32_t aggressor, std::uint64_t hammers) {
    ExperimentConfig config;
    config.groups = {group};
    config.aggressors = {{aggressor, hammers}};
    return config;
}

}  // namespace

TEST(Analyzer, VendorAProbesSurviveOnlyOnTrrCapableIterations) {
    DramDevice device(preset_config("A_TRR1"));
    const RowGroup group = scout(device, "R-R", 1).front();
    const std::uint32_t aggressor = group.anchor + 1;
    std::set<int> trr_iterations;
    for (int it = 1; it <= 18; ++it) {
        const auto result = run_experiment(device, single_aggressor(group, aggressor, 5000));
        if (result.any_trr()) trr_iterations.insert(it);
        // probes never survive without some refresh
        for (const ProbeVerdict& v : result.probes) EXPECT_EQ(v.refreshed, v.attribution != Attribution::none);
    }
    EXPECT_TRUE(trr_iterations.contains(9));
    for (int it : trr_iterations) EXPECT_EQ(it % 9, 0) << it;
}

TEST(Analyzer, WithoutTrrOrRegularRefreshEveryProbeFails) {
    DeviceConfig config = preset_config("A_TRR1");
    config.trr = TrrMechanismConfig{};
    DramDevice device(config);
    const RowGroup group = scout(device, "R-R", 1, 1000, 1900).front();
    ExperimentConfig experiment = single_aggressor(group, group.anchor + 1, 5000);
    experiment.rounds = 4;
    experiment.refs_per_round = 2;
    const auto result = run_experiment(device, experiment);
    for (const ProbeVerdict& v : result.probes) {
        EXPECT_FALSE(v.refreshed);
        EXPECT_GT(v.bit_flips, 0U);
        EXPECT_EQ(v.attribution, Attribution::none);
    }
}

TEST(Analyzer, SixProbeGroupShowsTheFourRefreshedNeighbors) {
    DramDevice device(uniform_retention(preset_config("A_TRR1")));
    const RowGroup group = scout(device, "RRR-RRR", 1).front();
    const std::uint32_t a = group.anchor + 3;
    ExperimentConfig experiment = single_aggressor(group, a, 5000);
    experiment.refs_per_round = 9;
    const auto result = run_experiment(device, experiment);
    EXPECT_EQ(result.rows_with(Attribution::trr), (std::vector<std::uint32_t>{a - 2, a - 1, a + 1, a + 2}));
    EXPECT_EQ(result.rows_with(Attribution::none), (std::vector<std::uint32_t>{a - 3, a + 3}));
}

TEST(Analyzer, SurvivalAndAttributionAgreeWithTheRefreshLog) {
    for (const char* name : {"A_TRR1", "B_TRR1", "C_TRR2", "C_TRR1"}) {
        DramDevice device(preset_config(name, 3));
        device.record_refreshes(true, true);
        const auto groups = scout(device, "R-R", 3, 0, 900);
        Rng rng(5);
        for (int it = 0; it < 40; ++it) {
            ExperimentConfig experiment;
            experiment.groups = groups;
            for (const RowGroup& g : groups) experiment.aggressors.push_back({g.anchor + 1, rng.between(100, 3000)});
            experiment.refs_per_round = static_cast<std::uint32_t>(rng.between(1, 5));
            experiment.mode = rng.chance(0.5) ? HammerMode::cascaded : HammerMode::interleaved;
            device.clear_refresh_log();
            const auto result = run_experiment(device, experiment);
            for (const ProbeVerdict& v : result.probes) {
                bool by_trr = false, by_regular = false;
                for (const RefreshEvent& e : device.refresh_log()) {
                    if (e.bank != v.bank || e.row != v.row) continue;
                    if (e.at < result.hammer_begin || e.at > result.hammer_end) continue;
                    (e.source == RefreshSource::trr ? by_trr : by_regular) = true;
                }
                EXPECT_EQ(v.refreshed, by_trr || by_regular) << name << " row " << v.row;
                if (v.attribution == Attribution::trr) EXPECT_TRUE(by_trr && !by_regular) << name << " row " << v.row;
                if (v.attribution == Attribution::regular) EXPECT_TRUE(by_regular) << name << " row " << v.row;
            }
        }
    }
}

TEST(Analyzer, TrrAttributionMatchesTheTrrLogWhenRegularRefreshIsAbsent) {
    DramDevice device(preset_config("B_TRR1", 4));
    device.record_refreshes(true, false);
    const auto groups = scout(device, "R-R", 2, 100, 900);
    for (int it = 0; it < 30; ++it) {
        ExperimentConfig experiment;
        experiment.groups = groups;
        experiment.aggressors = {{groups[0].anchor + 1, 3000}, {groups[1].anchor + 1, 500}};
        experiment.mode = HammerMode::cascaded;
        device.clear_refresh_log();
        const auto result = run_experiment(device, experiment);
        std::set<std::uint32_t> logged;
        for (const RefreshEvent& e : device.refresh_log()) logged.insert(e.row);
        for (const ProbeVerdict& v : result.probes) {
            if (v.attribution == Attribution::regular) continue;
            EXPECT_EQ(v.attribution == Attribution::trr, logged.contains(v.row));
        }
    }
}

TEST(Analyzer, ResetFlushesACounterEntry) {
    DramDevice device(preset_config("A_TRR1"));
    device.record_refreshes(true, false);
    const RowGroup group = scout(device, "R-R", 1).front();
    const std::uint32_t x = group.anchor + 1;
    device.hammer(0, x, 5000);
    ExperimentConfig config = single_aggressor(group, x, 0);
    config.reset_periods = 1;
    reset_trr_state(device, config);
    device.clear_refresh_log();
    for (int i = 0; i < 32768; ++i) device.refresh();
    for (const RefreshEvent& e : device.refresh_log()) EXPECT_NE(e.aggressor, x);
}

TEST(Analyzer, ResetReplacesTheSampledRow) {
    DramDevice device(preset_config("B_TRR1"));
    const RowGroup group = scout(device, "R-R", 1).front();
    const std::uint32_t x = group.anchor + 1;
    device.hammer(0, x, 5000);
    ASSERT_EQ(device.trr().sampled(0)->row, x);
    ExperimentConfig config = single_aggressor(group, x, 0);
    config.reset_periods = 1;
    reset_trr_state(device, config);
    EXPECT_NE(device.trr().sampled(0)->row, x);
}

TEST(Analyzer, ResetWithoutTrrOnlyAdvancesTheClock) {
    DeviceConfig config = preset_config("A_TRR1");
    config.trr = TrrMechanismConfig{};
    DramDevice device(config);
    device.record_refreshes(true, false);
    const RowGroup group = scout(device, "R-R", 1).front();
    const Nanos before = device.now();
    ExperimentConfig experiment = single_aggressor(group, group.anchor + 1, 0);
    experiment.reset_periods = 1;
    reset_trr_state(device, experiment);
    EXPECT_GT(device.now(), before + 60ms);
    EXPECT_TRUE(device.refresh_log().empty());
}

TEST(Analyzer, DummiesKeepTheirDistance) {
    DramDevice device(preset_config("A_TRR1"));
    const std::vector<std::uint32_t> avoid{1000, 1030, 1100};
    const auto dummies = select_dummy_rows(device, 40, avoid);
    EXPECT_EQ(dummies.size(), 40U);
    for (std::uint32_t d : dummies)
        for (std::uint32_t a : avoid) EXPECT_GE(std::abs(static_cast<int>(d) - static_cast<int>(a)), 100);
    EXPECT_EQ(std::set<std::uint32_t>(dummies.begin(), dummies.end()).size(), dummies.size());
}

TEST(Analyzer, RejectsOverlapsAndOverBudgetPhases) {
    DramDevice device(preset_config("A_TRR1"));
    const RowGroup group = scout(device, "R-R", 1).front();
    auto kind_of = [&](const ExperimentConfig& config) {
        try {
            run_experiment(device, config);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::not_applicable;
    };
    EXPECT_EQ(kind_of(single_aggressor(group, group.rows[0], 10)), ErrorKind::probe_overlap);

    ExperimentConfig near_dummy = single_aggressor(group, group.anchor + 1, 10);
    near_dummy.dummies = {group.anchor + 50};
    EXPECT_EQ(kind_of(near_dummy), ErrorKind::probe_overlap);

    ExperimentConfig synchronized = single_aggressor(group, group.anchor + 1, 150);
    synchronized.ref_synchronized = true;
    EXPECT_EQ(kind_of(synchronized), ErrorKind::budget_exceeded);

    ExperimentConfig slow = single_aggressor(group, group.anchor + 1, 4'000'000);
    EXPECT_EQ(kind_of(slow), ErrorKind::budget_exceeded);
}

TEST(Analyzer, SynchronizedRoundsKeepTheRefCadence) {
    DramDevice device(preset_config("A_TRR1"));
    device.record_refreshes(true, true);
    const RowGroup group = scout(device, "R-R", 1).front();
    ExperimentConfig config = single_aggressor(group, group.anchor + 1, 100);
    config.dummy_rows = 16;
    config.dummy_hammers = 6;
    config.ref_synchronized = true;
    config.phase_jitter = true;
    config.refs_per_round = 2;
    config.rounds = 20;
    const auto result = run_experiment(device, config);
    std::vector<Nanos> ref_times;
    for (const RefreshEvent& e : device.refresh_log())
        if (e.source == RefreshSource::regular && e.bank == 0 &&
            (ref_times.empty() || ref_times.back() != e.at))
            ref_times.push_back(e.at);
    ASSERT_EQ(ref_times.size(), 41U);
    for (std::size_t i = 1; i < ref_times.size(); ++i) EXPECT_EQ(ref_times[i] - ref_times[i - 1], 7800ns);
}

TEST(Adjacency, PhysicalNeighborsFlip) {
    DeviceConfig config = preset_config("A_TRR1");
    config.disturbance.vulnerable_row_fraction = 1.0;
    DramDevice device(config);
    EXPECT_TRUE(verify_adjacency(device, 0, 500, {499, 501}));
    EXPECT_FALSE(verify_adjacency(device, 0, 500, {497}));
}

TEST(Adjacency, RemappedProbeIsNotAdjacent) {
    DeviceConfig config = preset_config("A_TRR1");
    config.disturbance.vulnerable_row_fraction = 1.0;
    config.mapping.spare_rows = 8;
    config.mapping.remapped = {{501, config.rows_per_bank + 3}};
    DramDevice device(config);
    EXPECT_FALSE(verify_adjacency(device, 0, 500, {499, 501}));
    EXPECT_TRUE(verify_adjacency(device, 0, 500, {499}));
}

TEST(Adjacency, PairedRowsOnlyDisturbThePartner) {
    DeviceConfig config = preset_config("C_TRR1");
    config.disturbance.vulnerable_row_fraction = 1.0;
    DramDevice device(config);
    EXPECT_TRUE(verify_adjacency(device, 0, 501, {500}));
    EXPECT_FALSE(verify_adjacency(device, 0, 501, {502}));
}

TEST(RegularRefresh, VendorAPeriodIs3758) {
    DramDevice device(preset_config("A_TRR1"));
    const RowGroup group = scout(device, "R", 1).front();
    EXPECT_EQ(infer_regular_refresh_period(device, group), 3758U);
}

TEST(RegularRefresh, DefaultPeriodIs8192) {
    for (const char* name : {"B_TRR1", "C_TRR1"}) {
        DramDevice device(preset_config(name));
        const RowGroup group = scout(device, "R", 1).front();
        EXPECT_EQ(infer_regular_refresh_period(device, group, {.burst = 64}), 8192U) << name;
    }
}

TEST(RegularRefresh, DoublingRowsPerRefHalvesThePeriod) {
    DeviceConfig config = PresetCatalog::builtin().device("B_TRR1", Scale::paper, 1);
    config.regular_refresh.rows_per_ref = 2 * config.refresh_schedule().first;
    config.regular_refresh.full_pass_period_refs = 0;
    DramDevice device(config);
    const RowGroup group = scout(device, "R", 1).front();
    EXPECT_EQ(infer_regular_refresh_period(device, group), 4096U);
}

TEST(RegularRefresh, OversizedBurstIsInconclusive) {
    DramDevice device(preset_config("B_TRR1"));
    const RowGroup group = scout(device, "R", 1).front();
    EXPECT_THROW(infer_regular_refresh_period(device, group, {.burst = 1'000'000}), Error);
}
