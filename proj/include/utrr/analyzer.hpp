#pragma once

#include "utrr/device.hpp"
#include "utrr/row_scout.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace utrr {

struct AggressorSpec {
    std::uint32_t row = 0;  // physical
    std::uint64_t hammers = 0;
};

struct HammerOp {
    std::uint32_t bank = 0;
    std::vector<std::uint32_t> rows;  // physical
    std::uint64_t count = 0;
    HammerMode mode = HammerMode::interleaved;
};

// One round of a scripted experiment: the ops in order, then `refs` REFs.
struct ScriptRound {
    std::vector<HammerOp> ops;
    std::uint32_t refs = 1;
};

struct ExperimentConfig {
    std::vector<RowGroup> groups;
    std::vector<AggressorSpec> aggressors;
    HammerMode mode = HammerMode::interleaved;
    std::uint32_t dummy_rows = 0;
    std::uint64_t dummy_hammers = 0;
    std::vector<std::uint32_t> dummies;  // explicit physical dummy rows; auto-selected when empty
    std::uint32_t dummy_distance = 100;
    std::uint32_t refs_per_round = 1;
    std::uint32_t rounds = 1;
    bool reset_trr_state = false;
    std::uint32_t reset_periods = 10;  // in 64 ms refresh windows
    std::uint32_t reset_dummy_rows = 128;
    // Hammers are spread over tREFI intervals with a REF exactly every ref_interval.
    bool ref_synchronized = false;
    bool phase_jitter = false;
    std::uint64_t jitter_seed = 0;
    std::uint64_t aggressor_data = 0;  // no effect under the inversion flip model
    std::uint64_t probe_data = ~std::uint64_t{0};
    // When non-empty, replaces aggressors, dummies and rounds (not with ref_synchronized).
    std::vector<ScriptRound> script;
};

enum class Attribution { none, trr, regular };
std::string_view to_string(Attribution attribution);

struct ProbeVerdict {
    std::uint32_t group = 0;  // index into ExperimentConfig::groups
    std::uint32_t bank = 0;
    std::uint32_t row = 0;    // physical
    std::uint32_t bit_flips = 0;
    bool refreshed = false;
    Attribution attribution = Attribution::none;
};

struct ExperimentResult {
    std::vector<ProbeVerdict> probes;
    std::vector<std::vector<std::uint64_t>> round_refs;  // 1-based REF indices issued in each round
    std::vector<std::uint32_t> dummies;
    Nanos written_at{0};
    Nanos hammer_begin{0};
    Nanos hammer_end{0};
    Nanos read_at{0};

    const ProbeVerdict& probe(std::uint32_t row) const;
    bool survived(std::uint32_t row) const { return probe(row).refreshed; }
    std::vector<std::uint32_t> rows_with(Attribution attribution) const;
    bool any_trr() const { return !rows_with(Attribution::trr).empty(); }
};

// Dummy rows walking outward from the bank midpoint, at least `distance` rows from every row in `avoid`.
std::vector<std::uint32_t> select_dummy_rows(const DramDevice& device, std::uint32_t count,
                                             const std::vector<std::uint32_t>& avoid, std::uint32_t distance = 100);

// Flushes tracker state by hammering dummy rows between REFs issued at ref_interval.
void reset_trr_state(DramDevice& device, const ExperimentConfig& config);

ExperimentResult run_experiment(DramDevice& device, const ExperimentConfig& config);

// With refresh withheld, hammers `aggressor` 300K times per probe and reports whether every probe flipped.
// Rows are logical addresses, so a remapped probe shows up as non-adjacent. Probe data is rewritten afterwards.
bool verify_adjacency(DramDevice& device, std::uint32_t bank, std::uint32_t aggressor,
                      const std::vector<std::uint32_t>& probe_rows, std::uint64_t hammers = 300'000);

struct RefreshPeriodOptions {
    std::uint32_t burst = 1;             // REFs per probe experiment
    std::uint64_t max_refs = 4 * 8192;   // give up after this many REFs without two survivals
};

// Per-row regular refresh period in REF commands, from probe survival against REF bursts.
// Uses the group's first row only. Throws inconclusive.
std::uint32_t infer_regular_refresh_period(DramDevice& device, const RowGroup& probe, RefreshPeriodOptions options = {});

}  // namespace utrr
