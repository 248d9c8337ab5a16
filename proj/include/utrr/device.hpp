#pragma once

#include "utrr/config.hpp"
#include "utrr/mapping.hpp"
#include "utrr/trr.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace utrr {

// Row contents: a repeated 64-bit fill word plus the bit positions that read inverted.
struct RowData {
    std::uint64_t pattern = 0;
    std::uint32_t bits = 0;
    std::vector<std::uint32_t> flipped;  // sorted

    bool bit(std::uint32_t index) const;
    bool intact() const noexcept { return flipped.empty(); }
    std::size_t flip_count() const noexcept { return flipped.size(); }
};

enum class CommandKind { act, pre, rd, wr, ref, wait };

struct Command {
    CommandKind kind = CommandKind::wait;
    std::uint32_t bank = 0;
    std::uint32_t row = 0;  // logical
    std::uint64_t pattern = 0;
    Nanos duration{0};

    static Command act(std::uint32_t bank, std::uint32_t row) { return {CommandKind::act, bank, row}; }
    static Command pre(std::uint32_t bank) { return {CommandKind::pre, bank}; }
    static Command rd(std::uint32_t bank, std::uint32_t row) { return {CommandKind::rd, bank, row}; }
    static Command wr(std::uint32_t bank, std::uint32_t row, std::uint64_t pattern) {
        return {CommandKind::wr, bank, row, pattern};
    }
    static Command ref() { return {CommandKind::ref}; }
    static Command wait(Nanos d) { return {CommandKind::wait, 0, 0, 0, d}; }
};

struct CommandResult {
    Nanos issued_at{0};
    std::optional<RowData> data;
};

enum class HammerMode { interleaved, cascaded };

struct BankRow {
    std::uint32_t bank = 0;
    std::uint32_t row = 0;
};

struct WeakCell {
    std::uint32_t bit = 0;
    std::array<Nanos, 2> retention{};  // equal unless the row is VRT
};

struct VulnerableCell {
    std::uint32_t bit = 0;
    double threshold = 0;
};

// Immutable per-device special-cell tables, indexed by physical row.
class CellTable {
public:
    CellTable(const DeviceConfig& config);

    std::span<const WeakCell> weak_cells(std::uint32_t bank, std::uint32_t physical) const;
    std::span<const VulnerableCell> vulnerable_cells(std::uint32_t bank, std::uint32_t physical) const;
    bool is_vrt(std::uint32_t bank, std::uint32_t physical) const { return at(bank, physical).vrt; }
    Nanos vrt_offset(std::uint32_t bank, std::uint32_t physical) const { return at(bank, physical).vrt_offset; }

    // Smallest retention over both VRT phases; max() for rows without weak cells.
    Nanos min_retention(std::uint32_t bank, std::uint32_t physical) const { return at(bank, physical).min_retention; }
    double min_threshold(std::uint32_t bank, std::uint32_t physical) const { return at(bank, physical).min_threshold; }

    struct RowCells {
        std::uint32_t weak_begin = 0, weak_end = 0;
        std::uint32_t vuln_begin = 0, vuln_end = 0;
        Nanos min_retention = Nanos::max();
        double min_threshold = std::numeric_limits<double>::infinity();
        Nanos vrt_offset{0};
        bool vrt = false;
    };

    const RowCells& at(std::uint32_t bank, std::uint32_t physical) const { return rows_[bank * physical_rows_ + physical]; }

private:
    std::uint32_t physical_rows_ = 0;
    std::vector<RowCells> rows_;
    std::vector<WeakCell> weak_;
    std::vector<VulnerableCell> vulnerable_;
};

struct TrrProfileGroundTruth {
    TrrKind kind = TrrKind::none;
    std::string label;
    std::uint32_t trr_to_ref_ratio = 0;
    NeighborSpan span;
    std::optional<std::uint32_t> capacity;
    bool per_bank = false;
    std::optional<std::uint32_t> window_size;
    std::optional<std::uint32_t> sampling_guarantee;
    std::uint32_t regular_refresh_period_refs = 0;
    std::uint32_t rows_per_ref = 0;
};

enum class RefreshSource { regular, trr };

struct RefreshEvent {
    std::uint64_t ref_index = 0;  // 1-based index of the REF that caused it
    Nanos at{0};
    std::uint32_t bank = 0;
    std::uint32_t row = 0;  // physical
    RefreshSource source = RefreshSource::regular;
    std::uint32_t aggressor = 0;  // TRR only
    DetectionSource detection = DetectionSource::tref_a;
};

class DramDevice {
public:
    explicit DramDevice(DeviceConfig config);

    const DeviceConfig& config() const noexcept { return config_; }
    Nanos now() const noexcept { return now_; }

    // Issues at the current clock; only WAIT moves time forward.
    CommandResult issue(const Command& command);
    // Waits until the command is legal, then issues it.
    CommandResult issue_asap(const Command& command);
    Nanos earliest_legal(const Command& command) const;

    // Convenience sequences built on issue_asap.
    void write_row(std::uint32_t bank, std::uint32_t row, std::uint64_t pattern);
    RowData read_row(std::uint32_t bank, std::uint32_t row);
    void refresh();
    void wait(Nanos duration);
    void wait_until(Nanos when);

    // count rounds of ACT+PRE over rows (logical), as fast as timing allows.
    void hammer(std::uint32_t bank, std::span<const std::uint32_t> rows, std::uint64_t count, HammerMode mode);
    void hammer(std::uint32_t bank, std::uint32_t row, std::uint64_t count);
    // Simultaneous ACT+PRE on several banks per cycle (tFAW-limited).
    void hammer_lockstep(std::span<const BankRow> targets, std::uint64_t count);

    // When set, an ACT that cannot be precharged before the next tREFI deadline is a timing violation.
    void enforce_ref_cadence(bool on) noexcept { enforce_ref_cadence_ = on; }
    Nanos next_ref_due() const noexcept { return last_ref_at_ + config_.timing.ref_interval; }

    std::uint64_t ref_count() const noexcept { return refs_; }
    std::uint32_t rows_per_ref() const noexcept { return rows_per_ref_; }
    std::uint32_t refresh_period_refs() const noexcept { return period_; }
    // Whether any REF with 1-based index in [first, last] regularly refreshes the physical row.
    bool regular_refresh_covers(std::uint32_t physical, std::uint64_t first, std::uint64_t last) const;

    const RowMapping& mapping() const noexcept { return mapping_; }
    std::uint32_t to_physical(std::uint32_t bank, std::uint32_t logical) const;
    std::optional<std::uint32_t> to_logical(std::uint32_t bank, std::uint32_t physical) const;

    TrrProfileGroundTruth ground_truth() const;
    const CellTable& cells() const noexcept { return *cells_; }
    const TrrMechanism& trr() const noexcept { return trr_; }
    void reset_trr() { trr_.reset_state(); }

    void record_refreshes(bool trr_events, bool regular_events) noexcept {
        log_trr_ = trr_events;
        log_regular_ = regular_events;
    }
    const std::vector<RefreshEvent>& refresh_log() const noexcept { return refresh_log_; }
    void clear_refresh_log() { refresh_log_.clear(); }

    // Test hooks over physical rows.
    double effective_disturbance(std::uint32_t bank, std::uint32_t physical) const;
    Nanos last_restore(std::uint32_t bank, std::uint32_t physical) const;
    const RowData& stored(std::uint32_t bank, std::uint32_t physical) const;
    bool bank_open(std::uint32_t bank) const { return banks_.at(bank).open; }

private:
    struct RowState {
        Nanos last_restore{0};
        double lo = 0;  // disturbance from lower-index aggressors
        double hi = 0;  // disturbance from higher-index aggressors
    };

    struct BankState {
        bool open = false;
        std::uint32_t open_row = 0;  // logical
        Nanos act_at{0};
        Nanos act_ready{0};  // earliest next ACT (tRP after PRE)
    };

    struct Violation {
        ErrorKind kind;
        std::string constraint;
        Nanos earliest;
    };

    std::optional<Violation> check(const Command& command, Nanos at) const;
    CommandResult apply(const Command& command);
    Nanos next_act_time(std::uint32_t bank) const;
    void activate(std::uint32_t bank, std::uint32_t logical);
    void precharge(std::uint32_t bank);
    void do_refresh();
    void restore(std::uint32_t bank, std::uint32_t physical);
    void check_bank(std::uint32_t bank) const;
    RowState& row_state(std::uint32_t bank, std::uint32_t physical) { return rows_[bank * physical_rows_ + physical]; }
    const RowState& row_state(std::uint32_t bank, std::uint32_t physical) const {
        return rows_[bank * physical_rows_ + physical];
    }

    DeviceConfig config_;
    RowMapping mapping_;
    std::shared_ptr<const CellTable> cells_;
    TrrMechanism trr_;
    std::uint32_t physical_rows_ = 0;
    std::uint32_t rows_per_ref_ = 0;
    std::uint32_t period_ = 0;

    Nanos now_{0};
    Nanos ref_busy_until_{0};
    Nanos last_ref_at_{0};
    std::uint64_t refs_ = 0;
    bool enforce_ref_cadence_ = false;
    std::vector<BankState> banks_;
    std::vector<Nanos> faw_;  // ring of recent ACT times
    std::size_t faw_next_ = 0;
    std::vector<RowState> rows_;
    std::vector<RowData> data_;

    bool log_trr_ = false;
    bool log_regular_ = false;
    std::vector<RefreshEvent> refresh_log_;
};

}  // namespace utrr
