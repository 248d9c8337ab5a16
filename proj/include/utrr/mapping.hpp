#pragma once

#include "utrr/config.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace utrr {

// Logical <-> physical row translation for one bank geometry. All banks share it.
class RowMapping {
public:
    RowMapping(const RowMappingConfig& config, std::uint32_t rows_per_bank);

    std::uint32_t to_physical(std::uint32_t logical) const;
    std::optional<std::uint32_t> to_logical(std::uint32_t physical) const;

    std::uint32_t logical_rows() const noexcept { return static_cast<std::uint32_t>(forward_.size()); }
    std::uint32_t physical_rows() const noexcept { return static_cast<std::uint32_t>(inverse_.size()); }

private:
    static constexpr std::uint32_t unmapped = ~0U;
    std::vector<std::uint32_t> forward_;
    std::vector<std::uint32_t> inverse_;
};

}  // namespace utrr
