#pragma once

#include "utrr/analyzer.hpp"
#include "utrr/row_scout.hpp"

#include <cstdint>
#include <vector>

namespace utrr {

class DramDevice;

// What a tester knows about a part without opening it up.
struct Datasheet {
    std::uint32_t banks = 0;
    std::uint32_t rows_per_bank = 0;
    TimingParams timing{};
    Nanos retention_quantum{0};
};

// Command-level access to a device under test. Holds the device privately so that
// code written against the bench has no route to tracker state or the refresh log.
class TestBench {
public:
    explicit TestBench(DramDevice& device);

    const Datasheet& datasheet() const noexcept { return datasheet_; }

    std::vector<RowGroup> find_groups(const ProfilingConfig& config);
    ExperimentResult run(const ExperimentConfig& config);
    void reset_trr_state(const ExperimentConfig& config);
    std::uint32_t regular_refresh_period(const RowGroup& probe, RefreshPeriodOptions options);
    std::vector<std::uint32_t> dummy_rows(std::uint32_t count, const std::vector<std::uint32_t>& avoid,
                                          std::uint32_t distance = 100) const;

    // Bare REFs with no activations in between.
    void refresh(std::uint64_t count);
    std::uint64_t ref_count() const;

private:
    DramDevice& device_;
    Datasheet datasheet_;
};

}  // namespace utrr
