#pragma once

#include "utrr/presets.hpp"
#include "utrr/test_bench.hpp"
#include "utrr/trr.hpp"

#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace utrr {

enum class DetectionKind { unknown, none, counter, sampling, window };
std::string_view to_string(DetectionKind kind);

// Every field stays empty (unknown) until its sub-test has run and agreed with itself.
struct InferredTrrProfile {
    std::optional<std::uint32_t> trr_to_ref_ratio;
    std::optional<bool> deferred;
    std::optional<NeighborSpan> neighbor_span;
    DetectionKind detection_kind = DetectionKind::unknown;
    std::optional<std::uint32_t> tracker_capacity;
    std::optional<bool> per_bank_scope;
    std::optional<std::string> evict_policy;
    std::optional<bool> reset_on_detect;
    std::optional<std::string> entry_persistence;
    std::optional<std::uint32_t> sampling_guarantee;
    std::optional<std::uint32_t> window_size;
    std::optional<std::uint32_t> regular_refresh_period_refs;
};

nlohmann::json to_json(const InferredTrrProfile& profile);

struct Evidence {
    std::string test;
    std::string outcome;  // the value found, or the error kind
    std::string detail;
};

struct RevengOptions {
    std::uint32_t bank = 0;
    std::uint32_t second_bank = 1;
    std::uint32_t consistency_checks = 1000;
    std::uint32_t reset_periods = 10;
    std::uint32_t ratio_iterations = 640;
    std::uint32_t max_ratio = 64;
    std::uint32_t capacity_limit = 32;
    std::uint32_t eviction_iterations = 1000;
    std::uint64_t persistence_refs = 32768;
    std::uint32_t guarantee_trials = 24;
    std::uint64_t seed = 0;

    static RevengOptions for_scale(const ScaleProfile& profile);
};

// Runs the sub-tests in dependency order on one bench. Each sub-test runs its prerequisites
// on first use and caches its answer in profile().
class RevengSession {
public:
    RevengSession(TestBench& bench, RevengOptions options = {});

    std::uint32_t find_regular_refresh_period();
    std::uint32_t find_trr_ref_ratio();
    NeighborSpan find_neighbor_span();
    DetectionKind find_detection_kind();
    std::uint32_t find_tracker_capacity();
    std::string test_eviction_policy();
    bool test_reset_on_detect();
    std::string test_entry_persistence();
    bool test_scope();
    std::uint32_t find_sampling_guarantee();
    std::uint32_t find_window_size();

    // Every sub-test that applies to the detected kind; failures leave fields unknown.
    InferredTrrProfile full_profile();

    const InferredTrrProfile& profile() const noexcept { return profile_; }
    const std::vector<Evidence>& evidence() const noexcept { return evidence_; }

private:
    struct Detector {
        RowGroup group;
        std::uint32_t aggressor = 0;
        std::vector<std::uint32_t> signal;  // probes refreshed when the aggressor is detected
    };

    std::vector<RowGroup> groups(const std::string& layout, std::uint32_t count, std::uint32_t bank);
    std::vector<Detector> detectors(std::uint32_t count, std::uint32_t bank);
    ExperimentConfig experiment(const std::vector<Detector>& used) const;
    ExperimentResult run_script(const std::vector<Detector>& used, std::vector<ScriptRound> script);
    void reset(const std::vector<Detector>& used);
    static bool detected(const ExperimentResult& result, const Detector& d);
    static std::map<std::uint32_t, std::uint32_t> count_detections(const ExperimentResult& result,
                                                                   const std::vector<Detector>& used);
    std::vector<std::uint32_t> far_rows(std::uint32_t count, const std::vector<Detector>& used) const;
    bool all_detected(const std::vector<Detector>& used, std::uint64_t hammers, std::uint32_t iterations);
    void note(std::string test, std::string outcome, std::string detail);

    TestBench& bench_;
    RevengOptions options_;
    InferredTrrProfile profile_;
    std::vector<Evidence> evidence_;
    std::map<std::pair<std::string, std::uint32_t>, std::vector<RowGroup>> group_cache_;
};

}  // namespace utrr
