#pragma once

#include "utrr/common.hpp"
#include "utrr/trr.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace utrr {

struct TimingParams {
    Nanos t_act_to_pre = 35ns;  // tRAS
    Nanos t_pre_to_act = 15ns;  // tRP
    Nanos t_ref = 350ns;        // tRFC
    Nanos t_faw_window = 30ns;
    std::uint32_t max_acts_in_window = 4;
    Nanos ref_interval = 7800ns;  // tREFI

    Nanos hammer_cycle() const { return t_act_to_pre + t_pre_to_act; }

    // ACT+PRE pairs that fit between the end of one REF and the next.
    std::uint32_t max_hammers_per_interval() const {
        return static_cast<std::uint32_t>((ref_interval - t_ref) / hammer_cycle());
    }
};

struct RetentionModelConfig {
    Nanos base_retention = 10'000ms;
    double weak_row_fraction = 0.8;
    Nanos weak_retention_min = 200ms;
    Nanos weak_retention_max = 400ms;
    std::uint32_t weak_cells_min = 2;
    std::uint32_t weak_cells_max = 6;
    double vrt_row_fraction = 0.05;
    Nanos vrt_toggle_period = 1'000ms;
    Nanos retention_quantum = 50ms;
};

struct DisturbanceModelConfig {
    double hc_first = 16'000;
    double threshold_spread = 1.6;
    double distance2_factor = 4.0;
    double single_sided_factor = 2.0;
    bool paired_rows = false;
    double vulnerable_row_fraction = 1.0;
    std::uint32_t vulnerable_cells_min = 16;
    std::uint32_t vulnerable_cells_max = 48;
};

enum class MappingScheme { identity, xor_scramble, block_reverse };

struct RowMappingConfig {
    MappingScheme scheme = MappingScheme::identity;
    std::uint32_t xor_mask = 0;
    std::uint32_t block_size = 8;
    std::uint32_t spare_rows = 0;  // physical rows [rows_per_bank, rows_per_bank + spare_rows)
    std::vector<std::pair<std::uint32_t, std::uint32_t>> remapped;  // logical -> spare physical
};

struct RegularRefreshConfig {
    std::uint32_t rows_per_ref = 0;           // 0: derived from the period
    std::uint32_t full_pass_period_refs = 8192;  // 0: derived from rows_per_ref
};

struct DeviceConfig {
    std::string name = "custom";
    std::uint32_t banks = 16;
    std::uint32_t rows_per_bank = 4096;
    std::uint32_t row_bits = 8192;
    std::uint32_t pins = 8;
    TimingParams timing{};
    RetentionModelConfig retention{};
    DisturbanceModelConfig disturbance{};
    RowMappingConfig mapping{};
    RegularRefreshConfig regular_refresh{};
    TrrMechanismConfig trr{};
    std::uint64_t seed = 1;

    std::uint32_t physical_rows() const { return rows_per_bank + mapping.spare_rows; }

    // Resolved (rows_per_ref, period) pair after filling in whichever side is 0.
    std::pair<std::uint32_t, std::uint32_t> refresh_schedule() const;

    void validate() const;
};

}  // namespace utrr
