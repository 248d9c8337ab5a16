#include "utrr/mapping.hpp"

#include <fmt/format.h>

namespace utrr {

RowMapping::RowMapping(const RowMappingConfig& config, std::uint32_t rows_per_bank)
    : forward_(rows_per_bank), inverse_(rows_per_bank + config.spare_rows, unmapped) {
    for (std::uint32_t r = 0; r < rows_per_bank; ++r) {
        switch (config.scheme) {
        case MappingScheme::identity: forward_[r] = r; break;
        case MappingScheme::xor_scramble: forward_[r] = r ^ config.xor_mask; break;
        case MappingScheme::block_reverse: {
            const std::uint32_t base = r - r % config.block_size;
            forward_[r] = base + (config.block_size - 1 - r % config.block_size);
            break;
        }
        }
    }
    for (const auto& [logical, spare] : config.remapped) forward_[logical] = spare;
    for (std::uint32_t r = 0; r < rows_per_bank; ++r) inverse_[forward_[r]] = r;
}

std::uint32_t RowMapping::to_physical(std::uint32_t logical) const {
    if (logical >= forward_.size())
        fail(ErrorKind::out_of_range, fmt::format("logical row {} >= {}", logical, forward_.size()));
    return forward_[logical];
}

std::optional<std::uint32_t> RowMapping::to_logical(std::uint32_t physical) const {
    if (physical >= inverse_.size())
        fail(ErrorKind::out_of_range, fmt::format("physical row {} >= {}", physical, inverse_.size()));
    if (inverse_[physical] == unmapped) return std::nullopt;
    return inverse_[physical];
}

}  // namespace utrr
