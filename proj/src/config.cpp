#include "utrr/config.hpp"

#include <bit>
#include <fmt/format.h>
#include <set>

namespace utrr {

namespace {

void require(bool ok, std::string_view field, std::string_view why) {
    if (!ok) fail(ErrorKind::invalid_config, fmt::format("{} {}", field, why));
}

}  // namespace

std::pair<std::uint32_t, std::uint32_t> DeviceConfig::refresh_schedule() const {
    const std::uint32_t rows = physical_rows();
    std::uint32_t per_ref = regular_refresh.rows_per_ref;
    std::uint32_t period = regular_refresh.full_pass_period_refs;
    if (per_ref == 0 && period == 0) return {0, 0};
    if (per_ref == 0) per_ref = (rows + period - 1) / period;
    if (period == 0) period = (rows + per_ref - 1) / per_ref;
    return {per_ref, period};
}

void DeviceConfig::validate() const {
    require(banks >= 1 && banks <= 64, "banks", "must be in [1, 64]");
    require(rows_per_bank >= 64, "rows_per_bank", "must be >= 64");
    require(row_bits >= 64 && row_bits % 64 == 0, "row_bits", "must be a positive multiple of 64");
    require(pins == 4 || pins == 8 || pins == 16, "pins", "must be 4, 8, or 16");

    require(timing.t_act_to_pre > 0ns, "timing.t_act_to_pre", "must be > 0");
    require(timing.t_pre_to_act > 0ns, "timing.t_pre_to_act", "must be > 0");
    require(timing.t_ref > 0ns, "timing.t_ref", "must be > 0");
    require(timing.t_faw_window > 0ns, "timing.t_faw_window", "must be > 0");
    require(timing.max_acts_in_window >= 1, "timing.max_acts_in_window", "must be >= 1");
    require(timing.ref_interval > timing.t_ref, "timing.ref_interval", "must exceed t_ref");

    const auto& ret = retention;
    require(ret.retention_quantum > 0ns, "retention.retention_quantum", "must be > 0");
    require(ret.weak_retention_min >= 2 * ret.retention_quantum, "retention.weak_retention_min",
            "must be >= 2 * retention_quantum");
    require(ret.weak_retention_max >= ret.weak_retention_min, "retention.weak_retention_max",
            "must be >= weak_retention_min");
    require(ret.base_retention > ret.weak_retention_max, "retention.base_retention",
            "must exceed weak_retention_max");
    require(ret.weak_row_fraction >= 0.0 && ret.weak_row_fraction <= 1.0, "retention.weak_row_fraction",
            "must be in [0, 1]");
    require(ret.vrt_row_fraction >= 0.0 && ret.vrt_row_fraction <= 1.0, "retention.vrt_row_fraction",
            "must be in [0, 1]");
    require(ret.vrt_toggle_period > 0ns, "retention.vrt_toggle_period", "must be > 0");
    require(ret.weak_cells_min >= 1 && ret.weak_cells_max >= ret.weak_cells_min, "retention.weak_cells_min",
            "must be >= 1 and <= weak_cells_max");

    const auto& dist = disturbance;
    require(dist.hc_first > 0, "disturbance.hc_first", "must be > 0");
    require(dist.threshold_spread >= 1.0, "disturbance.threshold_spread", "must be >= 1");
    require(dist.distance2_factor >= 4.0, "disturbance.distance2_factor", "must be >= 4");
    require(dist.single_sided_factor >= 2.0, "disturbance.single_sided_factor", "must be >= 2");
    require(dist.vulnerable_row_fraction >= 0.0 && dist.vulnerable_row_fraction <= 1.0,
            "disturbance.vulnerable_row_fraction", "must be in [0, 1]");
    require(dist.vulnerable_cells_max >= dist.vulnerable_cells_min, "disturbance.vulnerable_cells_max",
            "must be >= vulnerable_cells_min");
    require(dist.vulnerable_cells_max + ret.weak_cells_max <= row_bits, "disturbance.vulnerable_cells_max",
            "does not fit in row_bits");

    switch (mapping.scheme) {
    case MappingScheme::identity: break;
    case MappingScheme::xor_scramble: {
        const std::uint32_t span = std::bit_ceil(mapping.xor_mask + 1);
        require(rows_per_bank % span == 0, "mapping.xor_mask", "must keep rows_per_bank closed under xor");
        break;
    }
    case MappingScheme::block_reverse:
        require(mapping.block_size >= 1 && rows_per_bank % mapping.block_size == 0, "mapping.block_size",
                "must divide rows_per_bank");
        break;
    }
    std::set<std::uint32_t> logical_seen;
    std::set<std::uint32_t> spare_seen;
    for (const auto& [logical, spare] : mapping.remapped) {
        require(logical < rows_per_bank, "mapping.remapped", "logical row out of range");
        require(spare >= rows_per_bank && spare < physical_rows(), "mapping.remapped",
                "target must lie in the spare region");
        require(logical_seen.insert(logical).second && spare_seen.insert(spare).second, "mapping.remapped",
                "entries must be distinct");
    }

    require(regular_refresh.rows_per_ref > 0 || regular_refresh.full_pass_period_refs > 0, "regular_refresh",
            "needs rows_per_ref or full_pass_period_refs");
    const auto [per_ref, period] = refresh_schedule();
    require(static_cast<std::uint64_t>(per_ref) * period >= physical_rows(), "regular_refresh.rows_per_ref",
            "times full_pass_period_refs must cover every row");

    trr.validate();
}

}  // namespace utrr
