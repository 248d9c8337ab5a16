// Blind inference against presets and test-built variants; the oracle is the device's own ground truth.
#include "utrr/device.hpp"
#include "utrr/presets.hpp"
#include "utrr/reveng.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace utrr;

namespace {

DeviceConfig desk(std::string_view name, std::uint64_t seed = 1) {
    return PresetCatalog::builtin().device(name, Scale::desk, seed);
}

RevengOptions desk_options() { return RevengOptions::for_scale(PresetCatalog::builtin().scale(Scale::desk)); }

// Owns the device so the session only ever sees the bench.
struct Blind {
    explicit Blind(DeviceConfig config) : device(std::move(config)), bench(device), session(bench, desk_options()) {}
    DramDevice device;
    TestBench bench;
    RevengSession session;
};

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorKind::invalid_config;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Blindness, PipelineSourcesNeverTouchDeviceInternals) {
    for (const char* file : {"/src/reveng.cpp", "/include/utrr/reveng.hpp"}) {
        const std::string text = slurp(std::string(UTRR_SOURCE_DIR) + file);
        ASSERT_FALSE(text.empty()) << file;
        for (const char* banned : {"ground_truth", "DramDevice", ".trr()", "refresh_log", "cells()", "config()", "device.hpp"})
            EXPECT_EQ(text.find(banned), std::string::npos) << file << " mentions " << banned;
    }
}

TEST(Blindness, FieldsStayUnknownUntilTheirTestRuns) {
    Blind b(desk("A_TRR1"));
    const InferredTrrProfile& p = b.session.profile();
    EXPECT_FALSE(p.trr_to_ref_ratio || p.neighbor_span || p.tracker_capacity || p.per_bank_scope || p.evict_policy ||
                 p.reset_on_detect || p.entry_persistence || p.sampling_guarantee || p.window_size ||
                 p.regular_refresh_period_refs);
    EXPECT_EQ(p.detection_kind, DetectionKind::unknown);
    b.session.find_trr_ref_ratio();
    EXPECT_TRUE(p.trr_to_ref_ratio);
    EXPECT_FALSE(p.neighbor_span || p.tracker_capacity);
}

TEST(Ratio, OneLinePerVendor) {
    for (auto [name, k, deferred] : {std::tuple{"A_TRR1", 9u, false}, {"B_TRR1", 4u, false}, {"C_TRR1", 17u, true}}) {
        Blind b(desk(name));
        EXPECT_EQ(b.session.find_trr_ref_ratio(), k) << name;
        EXPECT_EQ(b.session.profile().deferred, deferred) << name;
    }
}

TEST(Ratio, NoTrrVariantReportsNoDetection) {
    DeviceConfig c = desk("A_TRR1");
    c.trr = TrrMechanismConfig{};
    Blind b(c);
    EXPECT_EQ(kind_of([&] { b.session.find_trr_ref_ratio(); }), ErrorKind::no_trr_detected);
    EXPECT_EQ(kind_of([&] { b.session.find_tracker_capacity(); }), ErrorKind::no_trr_detected);
    EXPECT_EQ(b.session.full_profile().detection_kind, DetectionKind::none);
}

TEST(Span, MatchesTheDeviceSpan) {
    for (const char* name : {"A_TRR1", "B_TRR1", "C_TRR1", "C_TRR2"}) {
        Blind b(desk(name));
        EXPECT_EQ(b.session.find_neighbor_span(), b.device.ground_truth().span) << name;
    }
    Blind pair(desk("C_TRR1"));
    EXPECT_TRUE(pair.session.find_neighbor_span().pair);
}

TEST(Kind, OverwriteAndTruncationSeparateTheThreeTrackers) {
    for (auto [name, kind] : {std::pair{"A_TRR2", DetectionKind::counter}, {"B_TRR2", DetectionKind::sampling},
                              {"C_TRR3", DetectionKind::window}}) {
        Blind b(desk(name));
        EXPECT_EQ(b.session.find_detection_kind(), kind) << name;
    }
}

TEST(Capacity, CounterTableHoldsSixteen) {
    Blind b(desk("A_TRR1"));
    EXPECT_EQ(b.session.find_tracker_capacity(), 16u);
}

TEST(Capacity, SamplerHoldsOne) {
    Blind b(desk("B_TRR1"));
    EXPECT_EQ(b.session.find_tracker_capacity(), 1u);
}

TEST(Capacity, FollowsATestBuiltTableSize) {
    DeviceConfig c = desk("A_TRR1");
    c.trr.counter.table_size = 8;
    Blind b(c);
    EXPECT_EQ(b.session.find_tracker_capacity(), 8u);
}

TEST(Eviction, SmallestCounterLeavesFirst) {
    Blind b(desk("A_TRR1"));
    EXPECT_EQ(b.session.test_eviction_policy(), "min-counter");
}

TEST(Eviction, SeventeenSlotVariantIsOther) {
    DeviceConfig c = desk("A_TRR1");
    c.trr.counter.table_size = 17;
    Blind b(c);
    EXPECT_EQ(b.session.test_eviction_policy(), "other");
}

TEST(Eviction, SamplerIsNotApplicable) {
    Blind b(desk("B_TRR1"));
    EXPECT_EQ(kind_of([&] { b.session.test_eviction_policy(); }), ErrorKind::not_applicable);
    EXPECT_EQ(b.session.evidence().back().outcome, "not-applicable");
}

TEST(ResetOnDetect, PresetResetsAndVariantDoesNot) {
    Blind with(desk("A_TRR1"));
    EXPECT_TRUE(with.session.test_reset_on_detect());
    DeviceConfig c = desk("A_TRR1");
    c.trr.counter.reset_on_detect = false;
    Blind without(c);
    EXPECT_FALSE(without.session.test_reset_on_detect());
}

TEST(Persistence, CounterSamplerAndClearingVariant) {
    Blind a(desk("A_TRR1"));
    EXPECT_EQ(a.session.test_entry_persistence(), "indefinite");
    Blind b(desk("B_TRR1"));
    EXPECT_EQ(b.session.test_entry_persistence(), "indefinite-until-resample");
    DeviceConfig c = desk("A_TRR1");
    c.trr.counter.clear_period_refs = 4096;
    Blind cleared(c);
    EXPECT_EQ(cleared.session.test_entry_persistence(), "cleared");
    DeviceConfig s = desk("B_TRR1");
    s.trr.sampling.clear_on_trr = true;
    Blind sampled(s);
    EXPECT_EQ(sampled.session.test_entry_persistence(), "cleared");
}

TEST(Scope, SharedAndPerBank) {
    for (auto [name, per_bank] : {std::pair{"B_TRR1", false}, {"B_TRR2", false}, {"B_TRR3", true}, {"A_TRR1", true},
                                  {"C_TRR2", true}}) {
        Blind b(desk(name));
        EXPECT_EQ(b.session.test_scope(), per_bank) << name;
    }
}

TEST(Scope, PerBankSamplerMadeSharedIsDetectedAsShared) {
    DeviceConfig c = desk("B_TRR3");
    c.trr.sampling.shared_across_banks = true;
    Blind b(c);
    EXPECT_FALSE(b.session.test_scope());
}

TEST(SamplingGuarantee, PresetAndTestBuiltWindow) {
    Blind b(desk("B_TRR1"));
    EXPECT_EQ(b.session.find_sampling_guarantee(), 2048u);
    DeviceConfig c = desk("B_TRR1");
    c.trr.sampling.guarantee_window = 512;
    Blind small(c);
    EXPECT_EQ(small.session.find_sampling_guarantee(), 512u);
}

TEST(SamplingGuarantee, CounterIsNotASampler) {
    Blind b(desk("A_TRR1"));
    EXPECT_EQ(kind_of([&] { b.session.find_sampling_guarantee(); }), ErrorKind::not_applicable);
    EXPECT_EQ(b.session.evidence().back().outcome, "not-a-sampler");
}

TEST(WindowSize, PresetWindows) {
    for (auto [name, size] : {std::pair{"C_TRR1", 2048u}, {"C_TRR2", 2048u}, {"C_TRR3", 1024u}}) {
        Blind b(desk(name));
        EXPECT_EQ(b.session.find_window_size(), size) << name;
    }
}

TEST(WindowSize, TestBuiltWindowAndNonWindowDevice) {
    DeviceConfig c = desk("C_TRR2");
    c.trr.window.window_size = 700;
    Blind b(c);
    EXPECT_EQ(b.session.find_window_size(), 700u);
    Blind a(desk("A_TRR1"));
    EXPECT_EQ(kind_of([&] { a.session.find_window_size(); }), ErrorKind::not_applicable);
    EXPECT_EQ(a.session.evidence().back().outcome, "not-window-based");
}

TEST(RegularRefresh, BlindPeriodMatchesTheSchedule) {
    for (const char* name : {"A_TRR1", "B_TRR1"}) {
        Blind b(desk(name));
        EXPECT_EQ(b.session.find_regular_refresh_period(), b.device.ground_truth().regular_refresh_period_refs) << name;
    }
}

// Table rows A0 and B0 through the full decision tree.
TEST(FullProfile, ModuleRowsA0AndB0) {
    Blind a(desk("A0", 2));
    const InferredTrrProfile pa = a.session.full_profile();
    const TrrProfileGroundTruth ta = a.device.ground_truth();
    EXPECT_EQ(pa.detection_kind, DetectionKind::counter);
    EXPECT_EQ(pa.trr_to_ref_ratio, ta.trr_to_ref_ratio);
    EXPECT_EQ(pa.neighbor_span, ta.span);
    EXPECT_EQ(pa.tracker_capacity, ta.capacity);
    EXPECT_EQ(pa.per_bank_scope, ta.per_bank);
    EXPECT_EQ(pa.regular_refresh_period_refs, ta.regular_refresh_period_refs);
    EXPECT_EQ(pa.evict_policy, "min-counter");
    EXPECT_EQ(pa.reset_on_detect, true);
    EXPECT_EQ(pa.entry_persistence, "indefinite");
    EXPECT_FALSE(pa.window_size || pa.sampling_guarantee);

    Blind b(desk("B0", 2));
    const InferredTrrProfile pb = b.session.full_profile();
    const TrrProfileGroundTruth tb = b.device.ground_truth();
    EXPECT_EQ(pb.detection_kind, DetectionKind::sampling);
    EXPECT_EQ(pb.trr_to_ref_ratio, tb.trr_to_ref_ratio);
    EXPECT_EQ(pb.neighbor_span, tb.span);
    EXPECT_EQ(pb.tracker_capacity, 1u);
    EXPECT_EQ(pb.per_bank_scope, tb.per_bank);
    EXPECT_EQ(pb.sampling_guarantee, tb.sampling_guarantee);
    EXPECT_FALSE(pb.evict_policy || pb.reset_on_detect || pb.window_size);
}

TEST(FullProfile, EvidenceHasOneEntryPerSubTest) {
    Blind b(desk("C_TRR3"));
    b.session.full_profile();
    std::set<std::string> tests;
    for (const Evidence& e : b.session.evidence()) tests.insert(e.test);
    EXPECT_EQ(tests, (std::set<std::string>{"regular_refresh_period", "trr_to_ref_ratio", "neighbor_span", "detection_kind",
                                            "window_size", "per_bank_scope"}));
    const nlohmann::json doc = to_json(b.session.profile());
    EXPECT_EQ(doc["window_size"], 1024);
    EXPECT_TRUE(doc["tracker_capacity"].is_null());
    EXPECT_EQ(doc["detection_kind"], "window");
}

TEST(FullProfile, SameSeedSameProfile) {
    Blind x(desk("B_TRR3", 4));
    Blind y(desk("B_TRR3", 4));
    EXPECT_EQ(to_json(x.session.full_profile()).dump(), to_json(y.session.full_profile()).dump());
}
