#pragma once

#include "utrr/device.hpp"

#include <json.hpp>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace utrr {

enum class PatternFamily { counter_evict, sampler_flood, window_preload, plain_single_sided, plain_double_sided };
std::string_view to_string(PatternFamily family);
PatternFamily parse_family(std::string_view text);

// Interleaved ACT+PRE rounds over rows of one bank.
struct HammerRows {
    std::uint32_t bank = 0;
    std::vector<std::uint32_t> rows;  // physical
    std::uint64_t count = 0;
};

// Rounds of simultaneous ACTs, one row per bank (at most four: tFAW).
struct HammerBanks {
    std::vector<BankRow> rows;  // physical rows
    std::uint64_t count = 0;
};

struct SyncToRef {};
// Idle until the previous REF was TRR-capable. The executor reads the phase from the device:
// the attacker is assumed to know it.
struct SyncToTrrRef {};

using PatternOp = std::variant<HammerRows, HammerBanks, SyncToRef, SyncToTrrRef>;

// Where a pattern runs. Rows are physical; a1 == a0 for single-sided patterns.
struct PatternSite {
    std::uint32_t bank = 0;
    std::uint32_t a0 = 0;
    std::uint32_t a1 = 0;
    std::uint32_t banks = 16;
    std::uint32_t rows_per_bank = 0;
    TimingParams timing{};

    static PatternSite double_sided(const DeviceConfig& config, std::uint32_t bank, std::uint32_t victim);
    static PatternSite single_sided(const DeviceConfig& config, std::uint32_t bank, std::uint32_t victim);
};

struct AccessPattern {
    PatternFamily family = PatternFamily::plain_double_sided;
    PatternSite site;
    std::vector<BankRow> dummies;
    nlohmann::json params = nlohmann::json::object();
    // One op list per REF interval; the list repeats for the whole run.
    std::vector<std::vector<PatternOp>> intervals;

    // ACT+PRE slots used in interval i (a lockstep round takes one slot).
    std::uint64_t slots(std::size_t interval) const;
    std::uint64_t acts(std::size_t interval, std::uint32_t bank) const;
    // Throws budget_exceeded when an interval does not fit between two REFs, or a lockstep
    // round needs more banks than tFAW admits.
    void validate() const;
};

AccessPattern gen_counter_evict(const PatternSite& site, std::uint64_t aggr_hammers, std::uint32_t dummies = 16,
                                std::uint64_t dummy_hammers = 6);
// window_refs is the TRR period the flood repeats on.
AccessPattern gen_sampler_flood(const PatternSite& site, std::uint64_t aggr_hammers_per_window,
                                std::uint32_t window_refs = 4);
// trr_refs is the REF count from one TRR refresh to the next; the aggressors fill every slot left after the preload.
AccessPattern gen_window_preload(const PatternSite& site, std::uint64_t preload_dummy_hammers, std::uint32_t trr_refs,
                                 std::uint32_t dummies = 32);
// hammers per aggressor per interval; 0 uses the whole interval.
AccessPattern gen_plain_single_sided(const PatternSite& site, std::uint64_t hammers = 0);
AccessPattern gen_plain_double_sided(const PatternSite& site, std::uint64_t hammers = 0);

// One knob per family, as swept: aggressor hammers (counter_evict, with dummies taking what the
// budget leaves; sampler_flood per window; plain per interval) or the preload (window_preload).
// trr_refs sets the flood window and the preload period.
AccessPattern make_pattern(PatternFamily family, const PatternSite& site, std::uint64_t knob, std::uint32_t trr_refs);

struct RowFlips {
    std::uint32_t row = 0;  // physical
    std::vector<std::uint32_t> bits;
};

struct ChunkFlips {
    std::uint32_t row = 0;  // physical
    std::uint32_t chunk = 0;  // 64-bit word index
    std::uint32_t flips = 0;
};

struct BitFlipReport {
    PatternFamily family = PatternFamily::plain_double_sided;
    nlohmann::json params;
    std::uint32_t bank = 0;
    std::uint64_t duration_refs = 0;
    std::vector<RowFlips> rows;  // every row read back, in physical order
    std::vector<ChunkFlips> chunks;  // nonzero chunks only
    std::uint64_t total = 0;

    std::uint32_t flips_in(std::uint32_t row) const;
};

nlohmann::json to_json(const BitFlipReport& report);

// Flips in rows directly next to an aggressor. Rows two away are left out: TRR spans of one
// row never cover them.
std::uint64_t adjacent_flips(const BitFlipReport& report, const PatternSite& site);

// Writes all-ones around the aggressors, runs the pattern with a REF every tREFI for
// duration_refs REFs, then reads the region back.
BitFlipReport execute(DramDevice& device, const AccessPattern& pattern, std::uint64_t duration_refs);

struct SweepPoint {
    std::uint64_t knob = 0;
    std::vector<std::uint32_t> victim_flips;  // one entry per victim position
    double median = 0;
    double q1 = 0;
    double q3 = 0;
    std::uint32_t max = 0;
};

struct SweepOptions {
    std::uint32_t bank = 0;
    std::vector<std::uint32_t> victims;  // physical
    std::uint64_t duration_refs = 0;     // 0: two regular refresh periods
    std::uint32_t trr_refs = 0;          // 0: the device's TRR period
};

// Runs the family at each knob value on a fresh copy of the device per victim.
std::vector<SweepPoint> sweep_hammers(const DramDevice& device, PatternFamily family,
                                      std::span<const std::uint64_t> knobs, const SweepOptions& options);

// Plot-ready: knob,median,q1,q3,max
std::string sweep_csv(const std::vector<SweepPoint>& curve);

struct ScanOptions {
    std::uint32_t bank = 0;
    std::uint32_t first = 2;  // first victim position (physical)
    std::uint32_t last = 0;   // 0: rows_per_bank - 3
    std::uint32_t stride = 1;
    std::uint64_t duration_refs = 0;
    std::uint32_t trr_refs = 0;
};

struct ScanResult {
    std::uint32_t positions = 0;
    std::uint32_t vulnerable = 0;  // positions whose row flipped in any run
    std::vector<std::uint32_t> flipped_rows;

    double percent() const { return positions ? 100.0 * vulnerable / positions : 0.0; }
};

// Slides the victim position (and with it the aggressor pair) over [first, last].
ScanResult vulnerability_scan(const DramDevice& device, PatternFamily family, std::uint64_t knob,
                              const ScanOptions& options);

}  // namespace utrr
