#include "utrr/trr.hpp"

#include <algorithm>
#include <deque>
#include <fmt/format.h>

namespace utrr {

std::string NeighborSpan::label() const {
    if (pair) return "pair";
    std::vector<int> sorted = offsets;
    std::sort(sorted.begin(), sorted.end());
    std::string out = "{";
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i) out += ",";
        out += fmt::format("{:+d}", sorted[i]);
    }
    return out + "}";
}

std::string_view to_string(DetectionSource source) {
    switch (source) {
    case DetectionSource::tref_a: return "tref-a";
    case DetectionSource::tref_b: return "tref-b";
    case DetectionSource::sample: return "sample";
    case DetectionSource::window: return "window";
    }
    return "unknown";
}

std::string_view to_string(TrrKind kind) {
    switch (kind) {
    case TrrKind::none: return "none";
    case TrrKind::counter: return "counter";
    case TrrKind::sampling: return "sampling";
    case TrrKind::window: return "window";
    }
    return "unknown";
}

void TrrMechanismConfig::validate() const {
    if (trr_ref_period < 1) fail(ErrorKind::invalid_config, "trr.trr_ref_period must be >= 1");
    if (!span.pair) {
        if (span.offsets.empty()) fail(ErrorKind::invalid_config, "trr.span must name at least one offset");
        for (int offset : span.offsets)
            if (offset == 0) fail(ErrorKind::invalid_config, "trr.span offsets must be nonzero");
    }
    if (kind == TrrKind::counter && counter.table_size < 1)
        fail(ErrorKind::invalid_config, "trr.counter.table_size must be >= 1");
    if (kind == TrrKind::sampling) {
        if (sampling.capacity < 1) fail(ErrorKind::invalid_config, "trr.sampling.capacity must be >= 1");
        if (sampling.guarantee_window < 1)
            fail(ErrorKind::invalid_config, "trr.sampling.guarantee_window must be > 0");
    }
    if (kind == TrrKind::window) {
        if (window.window_size < 1) fail(ErrorKind::invalid_config, "trr.window.window_size must be > 0");
        if (!(window.rank_decay > 0.0 && window.rank_decay <= 1.0))
            fail(ErrorKind::invalid_config, "trr.window.rank_decay must be in (0, 1]");
        if (window.candidate_min_acts < 1)
            fail(ErrorKind::invalid_config, "trr.window.candidate_min_acts must be >= 1");
    }
}

namespace {

struct CounterSlot {
    bool used = false;
    std::uint32_t bank = 0;
    std::uint32_t row = 0;
    std::uint64_t count = 0;
    std::uint64_t inserted = 0;
};

struct CounterTable {
    std::vector<CounterSlot> slots;
    std::uint32_t pointer = 0;
};

struct SamplerSlot {
    std::deque<SampledRow> rows;  // newest at the back
    std::uint64_t countdown = 0;
    Rng rng;
};

struct BankWindow {
    std::vector<std::uint32_t> recorded;
    std::vector<std::uint32_t> candidates;  // in the order rows became candidates
    std::vector<std::uint32_t> acts;        // per physical row, cleared through `recorded`
    std::uint64_t refs_since_fire = 0;
    bool pending = false;
    Rng rng;
};

}  // namespace

struct TrrMechanism::Impl {
    std::uint32_t banks = 0;
    std::uint32_t rows = 0;
    std::uint64_t seed = 0;
    std::uint64_t refs = 0;
    std::uint64_t insert_seq = 0;
    bool next_is_tref_b = false;

    std::vector<CounterTable> tables;
    std::vector<SamplerSlot> samplers;
    std::vector<BankWindow> windows;

    void init(const TrrMechanismConfig& cfg) {
        refs = 0;
        insert_seq = 0;
        next_is_tref_b = false;
        tables.clear();
        samplers.clear();
        windows.clear();
        switch (cfg.kind) {
        case TrrKind::counter: {
            const std::uint32_t n = cfg.counter.per_bank ? banks : 1;
            tables.assign(n, CounterTable{std::vector<CounterSlot>(cfg.counter.table_size), 0});
            break;
        }
        case TrrKind::sampling: {
            const std::uint32_t n = cfg.sampling.shared_across_banks ? 1 : banks;
            samplers.resize(n);
            for (std::uint32_t i = 0; i < n; ++i) {
                samplers[i].rng.reseed(derive_seed(seed, 0x5a3b1e, i));
                samplers[i].countdown = samplers[i].rng.between(1, cfg.sampling.guarantee_window);
            }
            break;
        }
        case TrrKind::window:
            windows.resize(banks);
            for (std::uint32_t b = 0; b < banks; ++b) {
                windows[b].acts.assign(rows, 0);
                windows[b].recorded.reserve(cfg.window.window_size);
                windows[b].rng.reseed(derive_seed(seed, 0x3d0f, b));
            }
            break;
        case TrrKind::none: break;
        }
    }
};

TrrMechanism::TrrMechanism(const TrrMechanismConfig& config, std::uint32_t banks, std::uint32_t physical_rows,
                           std::uint64_t seed)
    : config_(config), impl_(std::make_unique<Impl>()) {
    config_.validate();
    impl_->banks = banks;
    impl_->rows = physical_rows;
    impl_->seed = seed;
    impl_->init(config_);
}

TrrMechanism::TrrMechanism(const TrrMechanism& other)
    : config_(other.config_), impl_(std::make_unique<Impl>(*other.impl_)) {}

TrrMechanism& TrrMechanism::operator=(const TrrMechanism& other) {
    if (this != &other) {
        config_ = other.config_;
        impl_ = std::make_unique<Impl>(*other.impl_);
    }
    return *this;
}

TrrMechanism::TrrMechanism(TrrMechanism&&) noexcept = default;
TrrMechanism& TrrMechanism::operator=(TrrMechanism&&) noexcept = default;
TrrMechanism::~TrrMechanism() = default;

void TrrMechanism::reset_state() { impl_->init(config_); }

std::uint64_t TrrMechanism::refs_seen() const noexcept { return impl_->refs; }

std::vector<std::uint32_t> TrrMechanism::neighbors(std::uint32_t row) const {
    std::vector<std::uint32_t> out;
    if (config_.span.pair) {
        const std::uint32_t partner = row ^ 1U;
        if (partner < impl_->rows) out.push_back(partner);
        return out;
    }
    for (int offset : config_.span.offsets) {
        const std::int64_t target = static_cast<std::int64_t>(row) + offset;
        if (target >= 0 && target < static_cast<std::int64_t>(impl_->rows))
            out.push_back(static_cast<std::uint32_t>(target));
    }
    std::sort(out.begin(), out.end());
    return out;
}

void TrrMechanism::on_activate(std::uint32_t bank, std::uint32_t row) {
    Impl& s = *impl_;
    switch (config_.kind) {
    case TrrKind::none: return;

    case TrrKind::counter: {
        const CounterConfig& cc = config_.counter;
        CounterTable& table = s.tables[cc.per_bank ? bank : 0];
        CounterSlot* free_slot = nullptr;
        CounterSlot* victim = nullptr;
        for (CounterSlot& slot : table.slots) {
            if (!slot.used) {
                if (!free_slot) free_slot = &slot;
                continue;
            }
            if (slot.row == row && slot.bank == bank) {
                ++slot.count;
                return;
            }
            if (!victim) {
                victim = &slot;
                continue;
            }
            const bool better = cc.evict == EvictPolicy::oldest
                                    ? slot.inserted < victim->inserted
                                    : (slot.count < victim->count ||
                                       (slot.count == victim->count && slot.inserted < victim->inserted));
            if (better) victim = &slot;
        }
        if (free_slot) {
            *free_slot = CounterSlot{true, bank, row, 1, s.insert_seq++};
        } else {
            const std::uint64_t count = cc.insert == InsertPolicy::inherit_min ? victim->count + 1 : 1;
            *victim = CounterSlot{true, bank, row, count, s.insert_seq++};
        }
        return;
    }

    case TrrKind::sampling: {
        const SamplingConfig& sc = config_.sampling;
        SamplerSlot& sampler = s.samplers[sc.shared_across_banks ? 0 : bank];
        if (--sampler.countdown > 0) return;
        sampler.countdown = sampler.rng.between(1, sc.guarantee_window);
        const SampledRow sampled{bank, row};
        auto& rows = sampler.rows;
        if (auto it = std::find(rows.begin(), rows.end(), sampled); it != rows.end()) rows.erase(it);
        rows.push_back(sampled);
        while (rows.size() > sc.capacity) rows.pop_front();
        return;
    }

    case TrrKind::window: {
        BankWindow& w = s.windows[bank];
        if (w.recorded.size() >= config_.window.window_size) return;
        w.recorded.push_back(row);
        if (++w.acts[row] == config_.window.candidate_min_acts) w.candidates.push_back(row);
        return;
    }
    }
}

namespace {

void clear_window(BankWindow& w) {
    for (std::uint32_t row : w.recorded) w.acts[row] = 0;
    w.recorded.clear();
    w.candidates.clear();
}

std::uint32_t pick_window_row(BankWindow& w, const WindowConfig& wc) {
    if (wc.bias == EarlyBias::first_rank) {
        // weight(rank) = decay^rank
        double total = 0.0;
        double weight = 1.0;
        for (std::size_t i = 0; i < w.candidates.size(); ++i, weight *= wc.rank_decay) total += weight;
        double target = w.rng.unit() * total;
        weight = 1.0;
        for (std::uint32_t row : w.candidates) {
            if (target < weight) return row;
            target -= weight;
            weight *= wc.rank_decay;
        }
        return w.candidates.back();
    }
    // linear_index: ACT i weighs (window_size - i); only candidate rows count.
    double total = 0.0;
    for (std::size_t i = 0; i < w.recorded.size(); ++i)
        if (w.acts[w.recorded[i]] >= wc.candidate_min_acts) total += static_cast<double>(wc.window_size - i);
    double target = w.rng.unit() * total;
    for (std::size_t i = 0; i < w.recorded.size(); ++i) {
        if (w.acts[w.recorded[i]] < wc.candidate_min_acts) continue;
        const double weight = static_cast<double>(wc.window_size - i);
        if (target < weight) return w.recorded[i];
        target -= weight;
    }
    return w.candidates.back();
}

}  // namespace

TrrAction TrrMechanism::on_ref() {
    Impl& s = *impl_;
    ++s.refs;
    TrrAction action;
    const std::uint32_t k = config_.trr_ref_period;

    auto detect = [&](std::uint32_t bank, std::uint32_t row, DetectionSource source) {
        action.detections.push_back(TrrDetection{bank, row, source, neighbors(row)});
    };

    switch (config_.kind) {
    case TrrKind::none: break;

    case TrrKind::counter: {
        const CounterConfig& cc = config_.counter;
        if (cc.clear_period_refs > 0 && s.refs % cc.clear_period_refs == 0)
            for (CounterTable& table : s.tables)
                for (CounterSlot& slot : table.slots) slot = CounterSlot{};
        if (s.refs % k != 0) break;
        action.capable = true;
        const bool tref_b = cc.trefb_enabled && s.next_is_tref_b;
        s.next_is_tref_b = !s.next_is_tref_b;
        for (CounterTable& table : s.tables) {
            CounterSlot* hit = nullptr;
            if (tref_b) {
                CounterSlot& slot = table.slots[table.pointer];
                table.pointer = (table.pointer + 1) % static_cast<std::uint32_t>(table.slots.size());
                if (slot.used) hit = &slot;
            } else {
                for (CounterSlot& slot : table.slots) {
                    if (!slot.used || slot.count == 0) continue;
                    if (!hit || slot.count > hit->count ||
                        (slot.count == hit->count && slot.inserted < hit->inserted))
                        hit = &slot;
                }
            }
            if (!hit) continue;
            if (tref_b ? cc.trefb_resets : cc.reset_on_detect) hit->count = 0;
            detect(hit->bank, hit->row, tref_b ? DetectionSource::tref_b : DetectionSource::tref_a);
        }
        break;
    }

    case TrrKind::sampling: {
        if (s.refs % k != 0) break;
        action.capable = true;
        for (SamplerSlot& sampler : s.samplers) {
            for (const SampledRow& sampled : sampler.rows) detect(sampled.bank, sampled.row, DetectionSource::sample);
            if (config_.sampling.clear_on_trr) sampler.rows.clear();
        }
        break;
    }

    case TrrKind::window: {
        const WindowConfig& wc = config_.window;
        for (std::uint32_t b = 0; b < s.banks; ++b) {
            BankWindow& w = s.windows[b];
            ++w.refs_since_fire;
            if (w.refs_since_fire < k) continue;
            action.capable = true;
            if (w.candidates.empty()) {
                if (wc.defer_when_empty) {
                    w.pending = true;
                    action.deferred = true;
                    // A full window without candidates can never gain one; start recording afresh.
                    if (w.recorded.size() >= wc.window_size) clear_window(w);
                    continue;
                }
                w.refs_since_fire = 0;
                clear_window(w);
                continue;
            }
            detect(b, pick_window_row(w, wc), DetectionSource::window);
            clear_window(w);
            w.refs_since_fire = 0;
            w.pending = false;
        }
        break;
    }
    }
    return action;
}

std::uint64_t TrrMechanism::refs_until_capable(std::uint32_t bank) const {
    const std::uint64_t k = config_.trr_ref_period;
    if (config_.kind == TrrKind::window) {
        const std::uint64_t since = impl_->windows[bank].refs_since_fire;
        return since + 1 >= k ? 0 : k - 1 - since;
    }
    return k - 1 - impl_->refs % k;
}

std::vector<CounterEntry> TrrMechanism::counter_table(std::uint32_t bank) const {
    std::vector<CounterEntry> out;
    if (config_.kind != TrrKind::counter) return out;
    const CounterTable& table = impl_->tables[config_.counter.per_bank ? bank : 0];
    for (std::uint32_t i = 0; i < table.slots.size(); ++i) {
        const CounterSlot& slot = table.slots[i];
        if (slot.used) out.push_back(CounterEntry{slot.bank, slot.row, slot.count, slot.inserted, i});
    }
    return out;
}

std::uint32_t TrrMechanism::counter_pointer(std::uint32_t bank) const {
    if (config_.kind != TrrKind::counter) return 0;
    return impl_->tables[config_.counter.per_bank ? bank : 0].pointer;
}

std::optional<SampledRow> TrrMechanism::sampled(std::uint32_t bank) const {
    if (config_.kind != TrrKind::sampling) return std::nullopt;
    const SamplerSlot& sampler = impl_->samplers[config_.sampling.shared_across_banks ? 0 : bank];
    if (sampler.rows.empty()) return std::nullopt;
    return sampler.rows.back();
}

std::size_t TrrMechanism::window_fill(std::uint32_t bank) const {
    if (config_.kind != TrrKind::window) return 0;
    return impl_->windows[bank].recorded.size();
}

bool TrrMechanism::window_pending(std::uint32_t bank) const {
    if (config_.kind != TrrKind::window) return false;
    return impl_->windows[bank].pending;
}

}  // namespace utrr
