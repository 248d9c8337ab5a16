// Vendor observations reproduced on the shipped presets, checked against the device refresh log.
#include "utrr/device.hpp"
#include "utrr/presets.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

using namespace utrr;

namespace {

DramDevice preset(std::string_view name, std::uint64_t seed = 1) {
    DramDevice device(PresetCatalog::builtin().device(name, Scale::desk, seed));
    device.record_refreshes(true, false);
    return device;
}

std::vector<RefreshEvent> trr_events(const DramDevice& device) {
    std::vector<RefreshEvent> out;
    for (const RefreshEvent& e : device.refresh_log())
        if (e.source == RefreshSource::trr) out.push_back(e);
    return out;
}

// One (ref_index, aggressor) per TRR detection.
std::vector<std::pair<std::uint64_t, std::uint32_t>> detections(const DramDevice& device) {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> out;
    for (const RefreshEvent& e : trr_events(device)) {
        const std::pair<std::uint64_t, std::uint32_t> d{e.ref_index, e.aggressor};
        if (out.empty() || out.back() != d) out.push_back(d);
    }
    return out;
}

std::set<std::uint32_t> rows_refreshed_for(const DramDevice& device, std::uint32_t aggressor) {
    std::set<std::uint32_t> out;
    for (const RefreshEvent& e : trr_events(device))
        if (e.aggressor == aggressor) out.insert(e.row);
    return out;
}

std::set<std::uint64_t> trr_ref_indices(const DramDevice& device) {
    std::set<std::uint64_t> out;
    for (const RefreshEvent& e : trr_events(device)) out.insert(e.ref_index);
    return out;
}

// Iterations of: hammer each aggressor, then one REF.
void iterate(DramDevice& device, std::uint32_t bank, const std::vector<std::pair<std::uint32_t, std::uint64_t>>& aggressors,
             int iterations) {
    for (int i = 0; i < iterations; ++i) {
        for (const auto& [row, count] : aggressors) device.hammer(bank, row, count);
        device.refresh();
    }
}

std::set<std::uint64_t> multiples(std::uint64_t k, std::uint64_t up_to) {
    std::set<std::uint64_t> out;
    for (std::uint64_t n = k; n <= up_to; n += k) out.insert(n);
    return out;
}

}  // namespace

// A1
TEST(VendorA, EveryNinthRefPerformsTrrRefresh) {
    for (const char* name : {"A_TRR1", "A_TRR2"}) {
        DramDevice device = preset(name);
        // fill the table so TREF_b never lands on an empty slot
        for (std::uint32_t i = 0; i < 15; ++i) device.hammer(0, 100 + 8 * i, 20);
        iterate(device, 0, {{700, 5000}}, 90);
        EXPECT_EQ(trr_ref_indices(device), multiples(9, 90)) << name;
    }
}

// A2
TEST(VendorA, FourClosestRowsAreRefreshed) {
    DramDevice device = preset("A_TRR1");
    iterate(device, 0, {{700, 5000}}, 9);
    EXPECT_EQ(rows_refreshed_for(device, 700), (std::set<std::uint32_t>{698, 699, 701, 702}));
}

// A3
TEST(VendorA, TrefAPicksTheMaximumAndTrefBWalksTheTable) {
    DramDevice device = preset("A_TRR1");
    std::vector<std::uint32_t> rows;
    for (std::uint32_t i = 0; i < 16; ++i) {
        rows.push_back(200 + 10 * i);
        device.hammer(0, rows.back(), 100 + 10 * i);
    }
    const std::uint32_t heaviest = rows.back();
    for (int i = 0; i < 9 * 32; ++i) device.refresh();

    std::vector<RefreshEvent> events = trr_events(device);
    ASSERT_FALSE(events.empty());
    EXPECT_EQ(events.front().ref_index, 9U);
    EXPECT_EQ(events.front().detection, DetectionSource::tref_a);
    EXPECT_EQ(events.front().aggressor, heaviest);

    std::vector<DetectionSource> kinds;
    std::set<std::uint32_t> tref_b_rows;
    std::uint64_t last = 0;
    for (const RefreshEvent& e : events) {
        if (e.ref_index == last) continue;
        last = e.ref_index;
        kinds.push_back(e.detection);
        if (e.detection == DetectionSource::tref_b) tref_b_rows.insert(e.aggressor);
    }
    // TREF_a runs dry once every counter is zero; the first 16 capable REFs alternate
    ASSERT_GE(kinds.size(), 16U);
    for (std::size_t i = 0; i < 16; ++i)
        EXPECT_EQ(kinds[i], i % 2 == 0 ? DetectionSource::tref_a : DetectionSource::tref_b);
    // 16 TREF_b instances visit all 16 entries.
    EXPECT_EQ(tref_b_rows, std::set<std::uint32_t>(rows.begin(), rows.end()));
}

// A3: TREF_a picks the highest counter; each detection zeroes it, so the order is by count.
TEST(VendorA, TrefAOrderFollowsCounterValues) {
    DramDevice device = preset("A_TRR1");
    // two light entries occupy the slots the first TREF_b instances visit
    device.hammer(0, 100, 1);
    device.hammer(0, 120, 1);
    const std::vector<std::uint32_t> rows{300, 320, 340, 360};
    const std::vector<std::uint64_t> counts{400, 900, 100, 600};
    for (std::size_t i = 0; i < rows.size(); ++i) device.hammer(0, rows[i], counts[i]);
    for (int i = 0; i < 18 * 4; ++i) device.refresh();
    std::vector<std::uint32_t> order;
    std::uint64_t last = 0;
    for (const RefreshEvent& e : trr_events(device)) {
        if (e.detection != DetectionSource::tref_a || e.ref_index == last) continue;
        last = e.ref_index;
        order.push_back(e.aggressor);
    }
    ASSERT_GE(order.size(), 4U);
    EXPECT_EQ(std::vector<std::uint32_t>(order.begin(), order.begin() + 4), (std::vector<std::uint32_t>{320, 360, 300, 340}));
}

// A4: a 16-entry per-bank table
TEST(VendorA, SixteenAggressorsAreAllDetectedSeventeenAreNot) {
    auto detected = [](std::uint32_t n) {
        DramDevice device = preset("A_TRR1");
        std::vector<std::uint32_t> rows;
        for (std::uint32_t i = 0; i < n; ++i) rows.push_back(100 + 8 * i);
        for (int it = 0; it < 9 * 2 * 40; ++it) {
            device.hammer(0, rows, 1000, HammerMode::cascaded);
            device.refresh();
        }
        std::set<std::uint32_t> seen;
        for (const RefreshEvent& e : trr_events(device)) seen.insert(e.aggressor);
        return seen.size();
    };
    EXPECT_EQ(detected(16), 16U);
    EXPECT_LT(detected(17), 17U);
}

TEST(VendorA, CounterTablesArePerBank) {
    DramDevice device = preset("A_TRR1");
    for (std::uint32_t i = 0; i < 16; ++i) device.hammer(1, 100 + 8 * i, 200);
    device.hammer(0, 900, 50);
    for (int i = 0; i < 9; ++i) device.refresh();
    std::set<std::uint32_t> banks;
    for (const RefreshEvent& e : trr_events(device)) banks.insert(e.bank);
    EXPECT_EQ(banks, (std::set<std::uint32_t>{0, 1}));
    EXPECT_EQ(rows_refreshed_for(device, 900), (std::set<std::uint32_t>{898, 899, 901, 902}));
}

// A5: the 17-group experiment
TEST(VendorA, SmallestCounterIsEvicted) {
    DramDevice device = preset("A_TRR1");
    const std::uint32_t weak_aggressor = 100;
    std::vector<std::uint32_t> others;
    for (std::uint32_t i = 1; i <= 16; ++i) others.push_back(100 + 8 * i);
    for (int it = 0; it < 1000; ++it) {
        device.hammer(0, weak_aggressor, 50);
        device.hammer(0, others, 100, HammerMode::cascaded);
        device.refresh();
    }
    std::set<std::uint32_t> seen;
    for (const RefreshEvent& e : trr_events(device)) seen.insert(e.aggressor);
    EXPECT_FALSE(seen.contains(weak_aggressor));
    EXPECT_EQ(seen.size(), 16U);
}

// A6
TEST(VendorA, DetectionResetsTheDetectedCounter) {
    DramDevice device = preset("A_TRR1");
    device.hammer(0, 400, 2000);
    device.hammer(0, 500, 3000);
    for (int ref = 1; ref <= 9; ++ref) {
        const auto before = device.trr().counter_table(0);
        device.refresh();
        if (ref < 9) continue;
        const auto events = trr_events(device);
        ASSERT_FALSE(events.empty());
        EXPECT_EQ(events.front().aggressor, 500U);
        for (const CounterEntry& entry : device.trr().counter_table(0)) {
            if (entry.row == 500) EXPECT_EQ(entry.count, 0U);
            else
                EXPECT_EQ(entry.count, std::find_if(before.begin(), before.end(), [&](const CounterEntry& b) {
                                           return b.row == entry.row;
                                       })->count);
        }
    }
}

// A6, behaviorally: with reset, a 2K/3K pair alternates TREF_a detections; without it the 3K row always wins.
TEST(VendorA, ResetOnDetectLetsTheSmallerAggressorWin) {
    auto tref_a_winners = [](bool reset) {
        DeviceConfig config = PresetCatalog::builtin().device("A_TRR1", Scale::desk, 1);
        config.trr.counter.reset_on_detect = reset;
        config.trr.counter.trefb_resets = reset;
        DramDevice device(config);
        device.record_refreshes(true, false);
        iterate(device, 0, {{400, 2000}, {500, 3000}}, 9 * 40);
        std::map<std::uint32_t, int> wins;
        std::uint64_t last = 0;
        for (const RefreshEvent& e : trr_events(device)) {
            if (e.detection != DetectionSource::tref_a || e.ref_index == last) continue;
            last = e.ref_index;
            ++wins[e.aggressor];
        }
        return wins;
    };
    const auto with_reset = tref_a_winners(true);
    EXPECT_GT(with_reset.at(400), 5);
    EXPECT_GT(with_reset.at(500), 5);
    const auto without = tref_a_winners(false);
    EXPECT_FALSE(without.contains(400));
}

// A7
TEST(VendorA, EntryStaysInTheTableIndefinitely) {
    DramDevice device = preset("A_TRR1");
    device.hammer(0, 777, 5000);
    for (int i = 0; i < 32768; ++i) device.refresh();
    std::vector<std::uint64_t> tref_b_hits;
    for (const auto& [ref, row] : detections(device)) {
        ASSERT_EQ(row, 777U);
        tref_b_hits.push_back(ref);
    }
    // first is TREF_a at REF 9; afterwards every 16th TREF_b, i.e. every 16 * 18 REFs
    ASSERT_GT(tref_b_hits.size(), 100U);
    EXPECT_EQ(tref_b_hits[0], 9U);
    EXPECT_EQ(tref_b_hits[1], 18U);
    for (std::size_t i = 2; i < tref_b_hits.size(); ++i) EXPECT_EQ(tref_b_hits[i] - tref_b_hits[i - 1], 16U * 18U);
    EXPECT_GT(tref_b_hits.back(), 32768U - 16U * 18U);
}

// A8
TEST(VendorA, RegularRefreshPeriodIsUnderHalfOfSixtyFourMs) {
    DramDevice device = preset("A_TRR1");
    device.record_refreshes(false, true);
    for (int i = 0; i < 3 * 3758; ++i) device.refresh();
    std::vector<std::uint64_t> refs;
    for (const RefreshEvent& e : device.refresh_log())
        if (e.bank == 0 && e.row == 42) refs.push_back(e.ref_index);
    ASSERT_EQ(refs.size(), 3U);
    EXPECT_EQ(refs[1] - refs[0], 3758U);
    EXPECT_EQ(refs[2] - refs[1], 3758U);
    EXPECT_LT(device.config().timing.ref_interval * 3758, 32ms);
}

// B1
TEST(VendorB, TrrRefreshEveryFourthNinthAndSecondRef) {
    const std::vector<std::pair<const char*, std::uint64_t>> cases{{"B_TRR1", 4}, {"B_TRR2", 9}, {"B_TRR3", 2}};
    for (const auto& [name, k] : cases) {
        DramDevice device = preset(name);
        iterate(device, 0, {{700, 5000}}, 72);
        EXPECT_EQ(trr_ref_indices(device), multiples(k, 72)) << name;
    }
}

// B2
TEST(VendorB, TwoAdjacentRowsAreRefreshed) {
    for (const char* name : {"B_TRR1", "B_TRR2", "B_TRR3"}) {
        DramDevice device = preset(name);
        iterate(device, 0, {{700, 5000}}, 9);
        EXPECT_EQ(rows_refreshed_for(device, 700), (std::set<std::uint32_t>{699, 701})) << name;
    }
}

// B3
TEST(VendorB, ShortBurstsAreDetectedOnlySometimes) {
    int detected = 0;
    const int runs = 200;
    for (int seed = 0; seed < runs; ++seed) {
        DramDevice device = preset("B_TRR1", static_cast<std::uint64_t>(seed));
        device.hammer(0, 300, 5000);
        device.hammer(0, 700, 300);
        for (int i = 0; i < 4; ++i) device.refresh();
        detected += !rows_refreshed_for(device, 700).empty();
    }
    EXPECT_GT(detected, 0);
    EXPECT_LT(detected, runs);
}

// B4
TEST(VendorB, SingleSampleSharedAcrossBanks) {
    for (const char* name : {"B_TRR1", "B_TRR2"}) {
        DramDevice device = preset(name);
        device.hammer(0, 300, 5000);
        device.hammer(1, 700, 3000);
        for (int i = 0; i < 36; ++i) device.refresh();
        EXPECT_TRUE(rows_refreshed_for(device, 300).empty()) << name;
        EXPECT_EQ(rows_refreshed_for(device, 700), (std::set<std::uint32_t>{699, 701})) << name;
    }
    DramDevice device = preset("B_TRR3");
    device.hammer(0, 300, 5000);
    device.hammer(1, 700, 3000);
    for (int i = 0; i < 4; ++i) device.refresh();
    EXPECT_FALSE(rows_refreshed_for(device, 300).empty());
    EXPECT_FALSE(rows_refreshed_for(device, 700).empty());
}

TEST(VendorB, SecondAggressorInTheSameBankDisplacesTheFirst) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        DramDevice device = preset("B_TRR1", seed);
        device.hammer(0, 300, 5000);
        device.hammer(0, 700, 3000);
        for (int i = 0; i < 40; ++i) device.refresh();
        EXPECT_TRUE(rows_refreshed_for(device, 300).empty());
        EXPECT_FALSE(rows_refreshed_for(device, 700).empty());
    }
}

// B5
TEST(VendorB, SampleIsNotClearedByTrrRefresh) {
    DramDevice device = preset("B_TRR1");
    device.hammer(0, 700, 5000);
    for (int i = 0; i < 40; ++i) device.refresh();
    const auto found = detections(device);
    ASSERT_EQ(found.size(), 10U);
    for (const auto& [ref, row] : found) EXPECT_EQ(row, 700U);
}

// C1
TEST(VendorC, TrrRefreshEverySeventeenthNinthAndEighthRef) {
    const std::vector<std::pair<const char*, std::uint64_t>> cases{{"C_TRR1", 17}, {"C_TRR2", 9}, {"C_TRR3", 8}};
    for (const auto& [name, k] : cases) {
        DramDevice device = preset(name);
        iterate(device, 0, {{701, 500}}, static_cast<int>(k * 6));
        EXPECT_EQ(trr_ref_indices(device), multiples(k, k * 6)) << name;
    }
}

TEST(VendorC, RefreshIsDeferredWhenNothingWasActivated) {
    DramDevice device = preset("C_TRR1");
    for (int i = 0; i < 20; ++i) device.refresh();
    EXPECT_TRUE(trr_events(device).empty());
    device.hammer(0, 701, 10);
    device.refresh();
    EXPECT_EQ(trr_ref_indices(device), (std::set<std::uint64_t>{21}));
    // the cadence restarts at the deferred refresh
    iterate(device, 0, {{701, 10}}, 34);
    EXPECT_EQ(trr_ref_indices(device), (std::set<std::uint64_t>{21, 38, 55}));
}

// C2
TEST(VendorC, OnlyTheFirstWindowOfActsIsConsidered) {
    const std::vector<std::pair<const char*, std::uint64_t>> cases{{"C_TRR2", 2048}, {"C_TRR3", 1024}};
    for (const auto& [name, window] : cases) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            DramDevice device = preset(name, seed);
            const std::uint32_t k = device.config().trr.trr_ref_period;
            // fill the window with dummies spread over 64 rows, then hammer the aggressor
            for (std::uint64_t i = 0; i < window; ++i) device.hammer(0, static_cast<std::uint32_t>(1000 + (i % 64) * 4), 1);
            device.hammer(0, 301, 5000);
            for (std::uint32_t i = 0; i < k; ++i) device.refresh();
            EXPECT_TRUE(rows_refreshed_for(device, 301).empty()) << name;
            EXPECT_EQ(trr_ref_indices(device).size(), 1U);
        }
    }
}

TEST(VendorC, EarlierActivatedRowsAreMoreLikelyDetected) {
    std::map<std::uint32_t, int> hits;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        DramDevice device = preset("C_TRR2", seed);
        for (std::uint32_t row : {301U, 321U, 341U}) device.hammer(0, row, 20);
        for (int i = 0; i < 9; ++i) device.refresh();
        for (const auto& [ref, row] : detections(device)) ++hits[row];
    }
    EXPECT_GT(hits[301], hits[321]);
    EXPECT_GT(hits[321], hits[341]);
    EXPECT_GT(hits[341], 0);
}

// C3
TEST(VendorC, OnlyThePairPartnerIsRefreshed) {
    DramDevice device = preset("C_TRR1");
    iterate(device, 0, {{701, 100}}, 17);
    EXPECT_EQ(rows_refreshed_for(device, 701), (std::set<std::uint32_t>{700}));
    DramDevice even = preset("C_TRR1");
    iterate(even, 0, {{700, 100}}, 17);
    EXPECT_EQ(rows_refreshed_for(even, 700), (std::set<std::uint32_t>{701}));
}

TEST(VendorC, PairedRowsConfineDisturbanceToThePartner) {
    DramDevice device = preset("C_TRR1");
    device.hammer(0, 701, 1000);
    EXPECT_EQ(device.effective_disturbance(0, 700), 1000.0);
    EXPECT_EQ(device.effective_disturbance(0, 702), 0.0);
    EXPECT_EQ(device.effective_disturbance(0, 699), 0.0);
}
