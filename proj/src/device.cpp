#include "utrr/device.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace utrr {

bool RowData::bit(std::uint32_t index) const {
    const bool stored = (pattern >> (index % 64)) & 1U;
    return std::binary_search(flipped.begin(), flipped.end(), index) ? !stored : stored;
}

namespace {

// Distinct bit positions in [0, bits), in draw order.
std::vector<std::uint32_t> draw_bits(Rng& rng, std::uint32_t n, std::uint32_t bits) {
    std::vector<std::uint32_t> out;
    out.reserve(n);
    while (out.size() < n) {
        const auto b = static_cast<std::uint32_t>(rng.below(bits));
        if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
    }
    return out;
}

Nanos draw_quantized(Rng& rng, Nanos lo, Nanos hi, Nanos quantum) {
    const auto first = (lo + quantum - 1ns) / quantum;
    const auto last = hi / quantum;
    return quantum * static_cast<std::int64_t>(rng.between(static_cast<std::uint64_t>(first),
                                                           static_cast<std::uint64_t>(last)));
}

}  // namespace

CellTable::CellTable(const DeviceConfig& config) : physical_rows_(config.physical_rows()) {
    const auto& ret = config.retention;
    const auto& dist = config.disturbance;
    rows_.resize(static_cast<std::size_t>(config.banks) * physical_rows_);
    for (std::uint32_t b = 0; b < config.banks; ++b) {
        for (std::uint32_t p = 0; p < physical_rows_; ++p) {
            Rng rng(derive_seed(config.seed, b, p));
            RowCells& row = rows_[b * physical_rows_ + p];

            const bool weak = rng.chance(ret.weak_row_fraction);
            const bool vrt = weak && rng.chance(ret.vrt_row_fraction);
            const bool vulnerable = (!dist.paired_rows || p % 2 == 0) && rng.chance(dist.vulnerable_row_fraction);
            const std::uint32_t n_weak = weak ? static_cast<std::uint32_t>(rng.between(ret.weak_cells_min, ret.weak_cells_max)) : 0;
            const std::uint32_t n_vuln =
                vulnerable ? static_cast<std::uint32_t>(rng.between(dist.vulnerable_cells_min, dist.vulnerable_cells_max))
                           : 0;
            const auto bits = draw_bits(rng, n_weak + n_vuln, config.row_bits);

            row.weak_begin = static_cast<std::uint32_t>(weak_.size());
            if (weak) {
                const Nanos q = ret.retention_quantum;
                const Nanos row_retention = draw_quantized(rng, ret.weak_retention_min, ret.weak_retention_max, q);
                const Nanos vrt_delta = q * static_cast<std::int64_t>(rng.between(2, 4));
                row.vrt = vrt;
                row.vrt_offset = Nanos(static_cast<std::int64_t>(rng.below(ret.vrt_toggle_period.count())));
                for (std::uint32_t i = 0; i < n_weak; ++i) {
                    // The first cell sets the row's retention; the rest sit up to 4 quanta above it.
                    const Nanos own = i == 0 ? row_retention : row_retention + q * static_cast<std::int64_t>(rng.between(0, 4));
                    WeakCell cell{bits[i], {own, vrt ? own + vrt_delta : own}};
                    weak_.push_back(cell);
                    row.min_retention = std::min(row.min_retention, own);
                }
            }
            row.weak_end = static_cast<std::uint32_t>(weak_.size());

            row.vuln_begin = static_cast<std::uint32_t>(vulnerable_.size());
            for (std::uint32_t i = 0; i < n_vuln; ++i) {
                const double threshold = dist.hc_first * (1.0 + rng.unit() * (dist.threshold_spread - 1.0));
                vulnerable_.push_back(VulnerableCell{bits[n_weak + i], threshold});
                row.min_threshold = std::min(row.min_threshold, threshold);
            }
            row.vuln_end = static_cast<std::uint32_t>(vulnerable_.size());
        }
    }
}

std::span<const WeakCell> CellTable::weak_cells(std::uint32_t bank, std::uint32_t physical) const {
    const RowCells& row = at(bank, physical);
    return {weak_.data() + row.weak_begin, weak_.data() + row.weak_end};
}

std::span<const VulnerableCell> CellTable::vulnerable_cells(std::uint32_t bank, std::uint32_t physical) const {
    const RowCells& row = at(bank, physical);
    return {vulnerable_.data() + row.vuln_begin, vulnerable_.data() + row.vuln_end};
}

namespace {

DeviceConfig validated(DeviceConfig config) {
    config.validate();
    return config;
}

}  // namespace

DramDevice::DramDevice(DeviceConfig config)
    : config_(validated(std::move(config))),
      mapping_(config_.mapping, config_.rows_per_bank),
      cells_(std::make_shared<const CellTable>(config_)),
      trr_(config_.trr, config_.banks, config_.physical_rows(), derive_seed(config_.seed, 0x7272)),
      physical_rows_(config_.physical_rows()),
      banks_(config_.banks),
      faw_(config_.timing.max_acts_in_window, Nanos::min() / 2),
      rows_(static_cast<std::size_t>(config_.banks) * physical_rows_),
      data_(rows_.size(), RowData{0, config_.row_bits, {}}) {
    std::tie(rows_per_ref_, period_) = config_.refresh_schedule();
}

void DramDevice::check_bank(std::uint32_t bank) const {
    if (bank >= config_.banks) fail(ErrorKind::out_of_range, fmt::format("bank {} >= {}", bank, config_.banks));
}

std::uint32_t DramDevice::to_physical(std::uint32_t bank, std::uint32_t logical) const {
    check_bank(bank);
    return mapping_.to_physical(logical);
}

std::optional<std::uint32_t> DramDevice::to_logical(std::uint32_t bank, std::uint32_t physical) const {
    check_bank(bank);
    return mapping_.to_logical(physical);
}

std::optional<DramDevice::Violation> DramDevice::check(const Command& command, Nanos at) const {
    const TimingParams& timing = config_.timing;
    auto timing_violation = [](std::string constraint, Nanos earliest) {
        return Violation{ErrorKind::timing_violation, std::move(constraint), earliest};
    };
    auto protocol_violation = [](std::string what) {
        return Violation{ErrorKind::protocol_violation, std::move(what), Nanos::max()};
    };

    switch (command.kind) {
    case CommandKind::wait: return std::nullopt;

    case CommandKind::act: {
        check_bank(command.bank);
        mapping_.to_physical(command.row);
        const BankState& bank = banks_[command.bank];
        if (bank.open) return protocol_violation(fmt::format("ACT to bank {} with row {} open", command.bank, bank.open_row));
        if (at < ref_busy_until_) return timing_violation("tRFC", ref_busy_until_);
        if (at < bank.act_ready) return timing_violation("tRP", bank.act_ready);
        const Nanos oldest = faw_[faw_next_];
        if (at - oldest < timing.t_faw_window) return timing_violation("tFAW", oldest + timing.t_faw_window);
        if (enforce_ref_cadence_ && refs_ > 0 && at + timing.hammer_cycle() > next_ref_due())
            return timing_violation("tREFI", next_ref_due() + timing.t_ref);
        return std::nullopt;
    }

    case CommandKind::pre: {
        check_bank(command.bank);
        const BankState& bank = banks_[command.bank];
        if (bank.open && at < bank.act_at + timing.t_act_to_pre)
            return timing_violation("tRAS", bank.act_at + timing.t_act_to_pre);
        return std::nullopt;
    }

    case CommandKind::rd:
    case CommandKind::wr: {
        check_bank(command.bank);
        mapping_.to_physical(command.row);
        const BankState& bank = banks_[command.bank];
        if (!bank.open || bank.open_row != command.row)
            return protocol_violation(fmt::format("{} to bank {} row {} which is not open",
                                                  command.kind == CommandKind::rd ? "RD" : "WR", command.bank,
                                                  command.row));
        return std::nullopt;
    }

    case CommandKind::ref: {
        for (std::uint32_t b = 0; b < config_.banks; ++b)
            if (banks_[b].open) return protocol_violation(fmt::format("REF with bank {} open", b));
        if (at < ref_busy_until_) return timing_violation("tRFC", ref_busy_until_);
        Nanos ready{0};
        for (const BankState& bank : banks_) ready = std::max(ready, bank.act_ready);
        if (at < ready) return timing_violation("tRP", ready);
        return std::nullopt;
    }
    }
    return std::nullopt;
}

Nanos DramDevice::earliest_legal(const Command& command) const {
    Nanos at = now_;
    // Each violation names a later time; iterate until every constraint holds.
    for (int guard = 0; guard < 16; ++guard) {
        const auto violation = check(command, at);
        if (!violation) return at;
        if (violation->kind != ErrorKind::timing_violation) fail(violation->kind, violation->constraint);
        if (violation->constraint == "tREFI")
            fail(ErrorKind::timing_violation,
                 fmt::format("tREFI: ACT at {} ns cannot precharge before the REF due at {} ns", at.count(),
                             next_ref_due().count()));
        at = violation->earliest;
    }
    fail(ErrorKind::timing_violation, "no legal issue time found");
}

CommandResult DramDevice::issue(const Command& command) {
    if (const auto violation = check(command, now_)) {
        if (violation->kind == ErrorKind::timing_violation)
            fail(violation->kind, fmt::format("{} violated at {} ns; earliest legal time {} ns", violation->constraint,
                                              now_.count(), violation->earliest.count()));
        fail(violation->kind, violation->constraint);
    }
    return apply(command);
}

CommandResult DramDevice::issue_asap(const Command& command) {
    now_ = earliest_legal(command);
    return apply(command);
}

CommandResult DramDevice::apply(const Command& command) {
    CommandResult result{now_, std::nullopt};
    switch (command.kind) {
    case CommandKind::wait:
        if (command.duration < 0ns) fail(ErrorKind::out_of_range, "WAIT duration must be >= 0");
        now_ += command.duration;
        break;
    case CommandKind::act: activate(command.bank, command.row); break;
    case CommandKind::pre: precharge(command.bank); break;
    case CommandKind::rd: result.data = data_[command.bank * physical_rows_ + mapping_.to_physical(command.row)]; break;
    case CommandKind::wr: {
        RowData& row = data_[command.bank * physical_rows_ + mapping_.to_physical(command.row)];
        row.pattern = command.pattern;
        row.flipped.clear();
        break;
    }
    case CommandKind::ref: do_refresh(); break;
    }
    return result;
}

void DramDevice::restore(std::uint32_t bank, std::uint32_t physical) {
    RowState& state = row_state(bank, physical);
    const CellTable::RowCells& cells = cells_->at(bank, physical);
    const Nanos elapsed = now_ - state.last_restore;
    RowData* data = nullptr;
    auto flip = [&](std::uint32_t bit) {
        if (!data) data = &data_[bank * physical_rows_ + physical];
        auto it = std::lower_bound(data->flipped.begin(), data->flipped.end(), bit);
        if (it == data->flipped.end() || *it != bit) data->flipped.insert(it, bit);
    };
    if (elapsed > cells.min_retention) {
        const Nanos period = config_.retention.vrt_toggle_period;
        const std::size_t phase = cells.vrt ? static_cast<std::size_t>(((now_ + cells.vrt_offset) / period) % 2) : 0;
        for (const WeakCell& cell : cells_->weak_cells(bank, physical))
            if (elapsed > cell.retention[phase]) flip(cell.bit);
    }
    if (state.lo > 0 || state.hi > 0) {
        const double effective = config_.disturbance.paired_rows
                                     ? state.lo + state.hi
                                     : std::min(state.lo, state.hi) +
                                           std::abs(state.lo - state.hi) / config_.disturbance.single_sided_factor;
        if (effective >= cells.min_threshold)
            for (const VulnerableCell& cell : cells_->vulnerable_cells(bank, physical))
                if (effective >= cell.threshold) flip(cell.bit);
    }
    state.last_restore = now_;
    state.lo = 0;
    state.hi = 0;
}

void DramDevice::activate(std::uint32_t bank, std::uint32_t logical) {
    const std::uint32_t p = mapping_.to_physical(logical);
    BankState& bs = banks_[bank];
    bs.open = true;
    bs.open_row = logical;
    bs.act_at = now_;
    faw_[faw_next_] = now_;
    faw_next_ = (faw_next_ + 1) % faw_.size();

    restore(bank, p);
    RowState* base = &rows_[bank * physical_rows_];
    if (config_.disturbance.paired_rows) {
        const std::uint32_t partner = p ^ 1U;
        if (partner < physical_rows_) base[partner].lo += 1.0;
    } else {
        const double far = 1.0 / config_.disturbance.distance2_factor;
        if (p + 1 < physical_rows_) base[p + 1].lo += 1.0;
        if (p + 2 < physical_rows_) base[p + 2].lo += far;
        if (p >= 1) base[p - 1].hi += 1.0;
        if (p >= 2) base[p - 2].hi += far;
    }
    trr_.on_activate(bank, p);
}

void DramDevice::precharge(std::uint32_t bank) {
    BankState& bs = banks_[bank];
    if (!bs.open) return;
    bs.open = false;
    bs.act_ready = now_ + config_.timing.t_pre_to_act;
}

void DramDevice::do_refresh() {
    ++refs_;
    last_ref_at_ = now_;
    ref_busy_until_ = now_ + config_.timing.t_ref;
    if (period_ > 0) {
        const std::uint64_t slot = (refs_ - 1) % period_;
        const std::uint64_t first = slot * rows_per_ref_;
        const std::uint64_t last = std::min<std::uint64_t>(first + rows_per_ref_, physical_rows_);
        for (std::uint32_t b = 0; b < config_.banks; ++b) {
            for (std::uint64_t p = first; p < last; ++p) {
                restore(b, static_cast<std::uint32_t>(p));
                if (log_regular_)
                    refresh_log_.push_back(RefreshEvent{refs_, now_, b, static_cast<std::uint32_t>(p), RefreshSource::regular});
            }
        }
    }
    const TrrAction action = trr_.on_ref();
    for (const TrrDetection& detection : action.detections) {
        for (std::uint32_t victim : detection.refreshed) {
            restore(detection.bank, victim);
            if (log_trr_)
                refresh_log_.push_back(RefreshEvent{refs_, now_, detection.bank, victim, RefreshSource::trr,
                                                    detection.aggressor, detection.source});
        }
    }
}

bool DramDevice::regular_refresh_covers(std::uint32_t physical, std::uint64_t first, std::uint64_t last) const {
    if (period_ == 0 || first > last || first == 0) return false;
    const std::uint64_t slot = physical / rows_per_ref_;
    if (slot >= period_) return false;
    if (last - first + 1 >= period_) return true;
    // smallest n >= first with (n - 1) % period == slot
    const std::uint64_t start = (first - 1) % period_;
    const std::uint64_t distance = (slot + period_ - start) % period_;
    return first + distance <= last;
}

void DramDevice::write_row(std::uint32_t bank, std::uint32_t row, std::uint64_t pattern) {
    issue_asap(Command::act(bank, row));
    issue(Command::wr(bank, row, pattern));
    issue_asap(Command::pre(bank));
}

RowData DramDevice::read_row(std::uint32_t bank, std::uint32_t row) {
    issue_asap(Command::act(bank, row));
    RowData data = std::move(*issue(Command::rd(bank, row)).data);
    issue_asap(Command::pre(bank));
    return data;
}

void DramDevice::refresh() { issue_asap(Command::ref()); }

void DramDevice::wait(Nanos duration) { issue(Command::wait(duration)); }

void DramDevice::wait_until(Nanos when) {
    if (when > now_) now_ = when;
}

// Earliest ACT time for a closed bank; same rules as check(), without building a Command.
Nanos DramDevice::next_act_time(std::uint32_t bank) const {
    const TimingParams& timing = config_.timing;
    const Nanos at = std::max({now_, ref_busy_until_, banks_[bank].act_ready, faw_[faw_next_] + timing.t_faw_window});
    if (enforce_ref_cadence_ && refs_ > 0 && at + timing.hammer_cycle() > next_ref_due())
        fail(ErrorKind::timing_violation,
             fmt::format("tREFI: ACT at {} ns cannot precharge before the REF due at {} ns", at.count(),
                         next_ref_due().count()));
    return at;
}

void DramDevice::hammer(std::uint32_t bank, std::uint32_t row, std::uint64_t count) {
    const std::uint32_t rows[] = {row};
    hammer(bank, rows, count, HammerMode::interleaved);
}

void DramDevice::hammer(std::uint32_t bank, std::span<const std::uint32_t> rows, std::uint64_t count,
                        HammerMode mode) {
    check_bank(bank);
    for (std::uint32_t row : rows) mapping_.to_physical(row);
    if (banks_[bank].open) issue_asap(Command::pre(bank));
    const Nanos t_ras = config_.timing.t_act_to_pre;
    auto cycle = [&](std::uint32_t row) {
        now_ = next_act_time(bank);
        activate(bank, row);
        now_ += t_ras;
        precharge(bank);
    };
    if (mode == HammerMode::interleaved) {
        for (std::uint64_t i = 0; i < count; ++i)
            for (std::uint32_t row : rows) cycle(row);
    } else {
        for (std::uint32_t row : rows)
            for (std::uint64_t i = 0; i < count; ++i) cycle(row);
    }
}

void DramDevice::hammer_lockstep(std::span<const BankRow> targets, std::uint64_t count) {
    for (const BankRow& target : targets) {
        check_bank(target.bank);
        mapping_.to_physical(target.row);
        if (banks_[target.bank].open) issue_asap(Command::pre(target.bank));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        for (const BankRow& target : targets) {
            if (banks_[target.bank].open)
                fail(ErrorKind::protocol_violation, fmt::format("lockstep targets bank {} twice", target.bank));
            now_ = next_act_time(target.bank);
            activate(target.bank, target.row);
        }
        for (const BankRow& target : targets) {
            now_ = std::max(now_, banks_[target.bank].act_at + config_.timing.t_act_to_pre);
            precharge(target.bank);
        }
    }
}

TrrProfileGroundTruth DramDevice::ground_truth() const {
    const TrrMechanismConfig& trr = config_.trr;
    TrrProfileGroundTruth truth;
    truth.kind = trr.kind;
    truth.label = trr.label;
    truth.trr_to_ref_ratio = trr.kind == TrrKind::none ? 0 : trr.trr_ref_period;
    truth.span = trr.span;
    truth.regular_refresh_period_refs = period_;
    truth.rows_per_ref = rows_per_ref_;
    switch (trr.kind) {
    case TrrKind::none: break;
    case TrrKind::counter:
        truth.capacity = trr.counter.table_size;
        truth.per_bank = trr.counter.per_bank;
        break;
    case TrrKind::sampling:
        truth.capacity = trr.sampling.capacity;
        truth.per_bank = !trr.sampling.shared_across_banks;
        truth.sampling_guarantee = trr.sampling.guarantee_window;
        break;
    case TrrKind::window:
        truth.per_bank = true;
        truth.window_size = trr.window.window_size;
        break;
    }
    return truth;
}

double DramDevice::effective_disturbance(std::uint32_t bank, std::uint32_t physical) const {
    check_bank(bank);
    const RowState& state = row_state(bank, physical);
    if (config_.disturbance.paired_rows) return state.lo + state.hi;
    return std::min(state.lo, state.hi) + std::abs(state.lo - state.hi) / config_.disturbance.single_sided_factor;
}

Nanos DramDevice::last_restore(std::uint32_t bank, std::uint32_t physical) const {
    check_bank(bank);
    return row_state(bank, physical).last_restore;
}

const RowData& DramDevice::stored(std::uint32_t bank, std::uint32_t physical) const {
    check_bank(bank);
    return data_.at(bank * physical_rows_ + physical);
}

}  // namespace utrr
