#pragma once

#include "utrr/common.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace utrr {

enum class TrrKind { none, counter, sampling, window };

// Physical offsets refreshed around a detected aggressor, or its pair partner.
struct NeighborSpan {
    std::vector<int> offsets{-1, 1};
    bool pair = false;

    static NeighborSpan pair_partner() { return NeighborSpan{{}, true}; }
    std::string label() const;
    friend bool operator==(const NeighborSpan&, const NeighborSpan&) = default;
};

enum class EvictPolicy { min_counter, oldest };
enum class InsertPolicy { insert_one, inherit_min };

struct CounterConfig {
    std::uint32_t table_size = 16;
    bool per_bank = true;
    EvictPolicy evict = EvictPolicy::min_counter;
    InsertPolicy insert = InsertPolicy::insert_one;
    bool reset_on_detect = true;
    bool trefb_enabled = true;
    bool trefb_resets = true;
    std::uint64_t clear_period_refs = 0;  // 0: entries are never cleared by time
};

struct SamplingConfig {
    std::uint32_t capacity = 1;
    bool shared_across_banks = true;
    std::uint32_t guarantee_window = 2048;
    bool clear_on_trr = false;
};

enum class EarlyBias { linear_index, first_rank };

struct WindowConfig {
    std::uint32_t window_size = 2048;
    bool defer_when_empty = true;
    EarlyBias bias = EarlyBias::linear_index;
    double rank_decay = 0.5;
    std::uint32_t candidate_min_acts = 1;
};

struct TrrMechanismConfig {
    TrrKind kind = TrrKind::none;
    std::string label = "none";
    std::uint32_t trr_ref_period = 1;
    NeighborSpan span{};
    CounterConfig counter{};
    SamplingConfig sampling{};
    WindowConfig window{};

    void validate() const;
};

enum class DetectionSource { tref_a, tref_b, sample, window };
std::string_view to_string(DetectionSource source);
std::string_view to_string(TrrKind kind);

struct TrrDetection {
    std::uint32_t bank = 0;
    std::uint32_t aggressor = 0;
    DetectionSource source = DetectionSource::tref_a;
    std::vector<std::uint32_t> refreshed;
};

struct TrrAction {
    bool capable = false;
    bool deferred = false;
    std::vector<TrrDetection> detections;
};

struct CounterEntry {
    std::uint32_t bank = 0;
    std::uint32_t row = 0;
    std::uint64_t count = 0;
    std::uint64_t inserted = 0;
    std::uint32_t slot = 0;
};

struct SampledRow {
    std::uint32_t bank = 0;
    std::uint32_t row = 0;
    friend bool operator==(const SampledRow&, const SampledRow&) = default;
};

// Ground-truth TRR state machine. Rows are physical. Owned by one device.
class TrrMechanism {
public:
    TrrMechanism(const TrrMechanismConfig& config, std::uint32_t banks, std::uint32_t physical_rows,
                 std::uint64_t seed);
    TrrMechanism(const TrrMechanism& other);
    TrrMechanism& operator=(const TrrMechanism& other);
    TrrMechanism(TrrMechanism&&) noexcept;
    TrrMechanism& operator=(TrrMechanism&&) noexcept;
    ~TrrMechanism();

    void on_activate(std::uint32_t bank, std::uint32_t row);
    TrrAction on_ref();
    void reset_state();

    const TrrMechanismConfig& config() const noexcept { return config_; }
    std::uint64_t refs_seen() const noexcept;

    // REFs until the next REF that may perform a TRR refresh (0: the next REF).
    std::uint64_t refs_until_capable(std::uint32_t bank) const;

    std::vector<std::uint32_t> neighbors(std::uint32_t row) const;

    // Introspection for tests and oracles.
    std::vector<CounterEntry> counter_table(std::uint32_t bank) const;
    std::uint32_t counter_pointer(std::uint32_t bank) const;
    std::optional<SampledRow> sampled(std::uint32_t bank) const;
    std::size_t window_fill(std::uint32_t bank) const;
    bool window_pending(std::uint32_t bank) const;

    struct Impl;

private:
    TrrMechanismConfig config_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace utrr
