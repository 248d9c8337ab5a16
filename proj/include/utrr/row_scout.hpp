#pragma once

#include "utrr/device.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace utrr {

// Group notation over consecutive physical rows: 'R' is a profiled row, '-' a skipped one.
class RowGroupLayout {
public:
    explicit RowGroupLayout(std::string pattern);

    const std::string& pattern() const noexcept { return pattern_; }
    std::uint32_t length() const noexcept { return static_cast<std::uint32_t>(pattern_.size()); }
    const std::vector<std::uint32_t>& probe_offsets() const noexcept { return probes_; }
    const std::vector<std::uint32_t>& gap_offsets() const noexcept { return gaps_; }

private:
    std::string pattern_;
    std::vector<std::uint32_t> probes_;
    std::vector<std::uint32_t> gaps_;
};

struct ProfilingConfig {
    std::uint32_t bank = 0;
    std::uint32_t row_lo = 0;  // physical, inclusive
    std::uint32_t row_hi = 0;  // physical, exclusive; 0 means rows_per_bank
    std::string layout = "R-R";
    std::uint32_t groups_needed = 1;
    Nanos t_initial = 100ms;
    Nanos t_step = 50ms;
    Nanos t_max = 600ms;
    std::uint32_t consistency_checks = 1000;
    std::uint64_t data_pattern = ~std::uint64_t{0};
    std::uint32_t min_gap = 2;  // free rows between the footprints of two groups
    std::vector<std::uint32_t> exclude;  // physical rows no group may touch
    bool require_all = true;  // when false, returns whatever was found by t_max instead of throwing

    void validate() const;
};

struct RowGroup {
    std::uint32_t bank = 0;
    std::uint32_t anchor = 0;          // physical row of layout position 0
    std::vector<std::uint32_t> rows;   // profiled physical rows, ascending
    Nanos retention{0};                // fails at this exposure, retains one quantum below it
    std::string layout;

    // Physical rows at the layout's '-' positions.
    std::vector<std::uint32_t> gaps() const;
    std::uint32_t footprint_end() const { return anchor + static_cast<std::uint32_t>(layout.size()); }
};

// Writes `pattern` to each physical row, then reads each back exactly `exposure` after its own write.
// Returns, per row, whether any bit failed. Issues no REF.
std::vector<bool> expose_rows(DramDevice& device, std::uint32_t bank, std::span<const std::uint32_t> rows, Nanos exposure,
                              std::uint64_t pattern);

// Physical rows in [lo, hi) that fail after `exposure` without refresh, ascending.
std::vector<std::uint32_t> scan_failing_rows(DramDevice& device, std::uint32_t bank, std::uint32_t lo, std::uint32_t hi,
                                             Nanos exposure, std::uint64_t pattern = ~std::uint64_t{0});

// True if every row fails at T + quantum and retains at T - quantum, `checks` times over.
bool rows_consistent(DramDevice& device, std::uint32_t bank, std::span<const std::uint32_t> rows, Nanos retention,
                     std::uint32_t checks, std::uint64_t pattern = ~std::uint64_t{0});

// Stepped retention search. Throws insufficient-groups once t_max is passed.
std::vector<RowGroup> find_row_groups(DramDevice& device, const ProfilingConfig& config);

}  // namespace utrr
