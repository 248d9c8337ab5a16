#include "utrr/row_scout.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <set>

namespace utrr {

RowGroupLayout::RowGroupLayout(std::string pattern) : pattern_(std::move(pattern)) {
    if (pattern_.empty() || pattern_.size() > 32)
        fail(ErrorKind::invalid_config, fmt::format("layout '{}': length must be in 1..32", pattern_));
    for (std::uint32_t i = 0; i < pattern_.size(); ++i) {
        if (pattern_[i] == 'R') probes_.push_back(i);
        else if (pattern_[i] == '-') gaps_.push_back(i);
        else fail(ErrorKind::invalid_config, fmt::format("layout '{}': unexpected '{}'", pattern_, pattern_[i]));
    }
    if (probes_.empty()) fail(ErrorKind::invalid_config, fmt::format("layout '{}': needs at least one R", pattern_));
}

void ProfilingConfig::validate() const {
    RowGroupLayout{layout};
    if (t_step <= 0ns) fail(ErrorKind::invalid_config, "t_step: must be > 0");
    if (t_initial < t_step) fail(ErrorKind::invalid_config, "t_initial: must be >= t_step");
    if (t_max < t_initial) fail(ErrorKind::invalid_config, "t_max: must be >= t_initial");
    if (groups_needed == 0) fail(ErrorKind::invalid_config, "groups_needed: must be >= 1");
    if (consistency_checks == 0) fail(ErrorKind::invalid_config, "consistency_checks: must be >= 1");
}

std::vector<std::uint32_t> RowGroup::gaps() const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < layout.size(); ++i)
        if (layout[i] == '-') out.push_back(anchor + i);
    return out;
}

std::vector<bool> expose_rows(DramDevice& device, std::uint32_t bank, std::span<const std::uint32_t> rows, Nanos exposure,
                              std::uint64_t pattern) {
    std::vector<std::uint32_t> logical(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto l = device.to_logical(bank, rows[i]);
        if (!l) fail(ErrorKind::out_of_range, fmt::format("physical row {} has no logical address", rows[i]));
        logical[i] = *l;
    }
    std::vector<Nanos> written(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        written[i] = device.issue_asap(Command::act(bank, logical[i])).issued_at;
        device.issue(Command::wr(bank, logical[i], pattern));
        device.issue_asap(Command::pre(bank));
    }
    std::vector<bool> failed(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        // The read ACT restores the row, so it must land exactly `exposure` after the write ACT.
        device.wait_until(written[i] + exposure);
        if (device.now() != written[i] + exposure)
            fail(ErrorKind::timing_violation, fmt::format("row {} read {} ns late", rows[i],
                                                          (device.now() - written[i] - exposure).count()));
        device.issue(Command::act(bank, logical[i]));
        const RowData data = *device.issue(Command::rd(bank, logical[i])).data;
        device.issue_asap(Command::pre(bank));
        failed[i] = data.pattern != pattern || !data.intact();
    }
    return failed;
}

std::vector<std::uint32_t> scan_failing_rows(DramDevice& device, std::uint32_t bank, std::uint32_t lo, std::uint32_t hi,
                                             Nanos exposure, std::uint64_t pattern) {
    if (bank >= device.config().banks || lo > hi || hi > device.config().physical_rows())
        fail(ErrorKind::out_of_range, fmt::format("scan range bank {} rows [{}, {})", bank, lo, hi));
    std::vector<std::uint32_t> rows;
    for (std::uint32_t p = lo; p < hi; ++p)
        if (device.to_logical(bank, p)) rows.push_back(p);
    const std::vector<bool> failed = expose_rows(device, bank, rows, exposure, pattern);
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (failed[i]) out.push_back(rows[i]);
    return out;
}

namespace {

// Rows that fail at T + q and retain at T - q on every trial.
std::set<std::uint32_t> consistent_subset(DramDevice& device, std::uint32_t bank, std::vector<std::uint32_t> rows,
                                          Nanos retention, std::uint32_t checks, std::uint64_t pattern) {
    const Nanos q = device.config().retention.retention_quantum;
    for (std::uint32_t trial = 0; trial < checks && !rows.empty(); ++trial) {
        std::vector<bool> failed = expose_rows(device, bank, rows, retention - q, pattern);
        std::vector<std::uint32_t> kept;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!failed[i]) kept.push_back(rows[i]);
        failed = expose_rows(device, bank, kept, retention + q, pattern);
        rows.clear();
        for (std::size_t i = 0; i < kept.size(); ++i)
            if (failed[i]) rows.push_back(kept[i]);
    }
    return {rows.begin(), rows.end()};
}

}  // namespace

bool rows_consistent(DramDevice& device, std::uint32_t bank, std::span<const std::uint32_t> rows, Nanos retention,
                     std::uint32_t checks, std::uint64_t pattern) {
    const auto kept = consistent_subset(device, bank, {rows.begin(), rows.end()}, retention, checks, pattern);
    return kept.size() == std::set<std::uint32_t>(rows.begin(), rows.end()).size();
}

std::vector<RowGroup> find_row_groups(DramDevice& device, const ProfilingConfig& config) {
    config.validate();
    const RowGroupLayout layout(config.layout);
    const std::uint32_t lo = config.row_lo;
    const std::uint32_t hi = config.row_hi == 0 ? device.config().rows_per_bank : config.row_hi;
    if (config.bank >= device.config().banks || lo >= hi || hi > device.config().physical_rows())
        fail(ErrorKind::out_of_range, fmt::format("profiling range bank {} rows [{}, {})", config.bank, lo, hi));

    // Footprints already taken, widened by min_gap; includes excluded rows.
    std::vector<bool> taken(hi, false);
    for (std::uint32_t row : config.exclude)
        if (row < hi) taken[row] = true;
    auto footprint_free = [&](std::uint32_t anchor) {
        const std::uint32_t first = anchor >= config.min_gap ? anchor - config.min_gap : 0;
        const std::uint32_t last = std::min(hi, anchor + layout.length() + config.min_gap);
        for (std::uint32_t r = first; r < last; ++r)
            if (taken[r]) return false;
        return true;
    };
    auto candidate_anchors = [&](const std::set<std::uint32_t>& rows) {
        std::vector<std::uint32_t> anchors;
        for (std::uint32_t a = lo; a + layout.length() <= hi; ++a) {
            const bool all = std::all_of(layout.probe_offsets().begin(), layout.probe_offsets().end(),
                                         [&](std::uint32_t o) { return rows.contains(a + o); });
            if (all && footprint_free(a)) anchors.push_back(a);
        }
        return anchors;
    };

    std::vector<RowGroup> groups;
    for (Nanos t = config.t_initial; t <= config.t_max; t += config.t_step) {
        const auto failing = scan_failing_rows(device, config.bank, lo, hi, t, config.data_pattern);
        const std::set<std::uint32_t> failing_set(failing.begin(), failing.end());
        std::set<std::uint32_t> to_check;
        for (std::uint32_t a : candidate_anchors(failing_set))
            for (std::uint32_t o : layout.probe_offsets()) to_check.insert(a + o);
        if (to_check.empty()) continue;

        const auto consistent = consistent_subset(device, config.bank, {to_check.begin(), to_check.end()}, t,
                                                  config.consistency_checks, config.data_pattern);
        for (std::uint32_t a : candidate_anchors(consistent)) {
            if (!footprint_free(a)) continue;  // an earlier anchor in this pass took it
            RowGroup group{config.bank, a, {}, t, layout.pattern()};
            for (std::uint32_t o : layout.probe_offsets()) group.rows.push_back(a + o);
            for (std::uint32_t r = a; r < a + layout.length(); ++r) taken[r] = true;
            groups.push_back(std::move(group));
            if (groups.size() == config.groups_needed) return groups;
        }
    }
    if (!config.require_all) return groups;
    fail(ErrorKind::insufficient_groups,
         fmt::format("found {} of {} '{}' groups in bank {} by T = {} ms", groups.size(), config.groups_needed,
                     layout.pattern(), config.bank, std::chrono::duration_cast<std::chrono::milliseconds>(config.t_max).count()));
}

}  // namespace utrr
