#include "utrr/attack.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <set>

namespace utrr {

std::string_view to_string(PatternFamily family) {
    switch (family) {
    case PatternFamily::counter_evict: return "counter_evict";
    case PatternFamily::sampler_flood: return "sampler_flood";
    case PatternFamily::window_preload: return "window_preload";
    case PatternFamily::plain_single_sided: return "plain_single_sided";
    case PatternFamily::plain_double_sided: return "plain_double_sided";
    }
    return "?";
}

PatternFamily parse_family(std::string_view text) {
    for (PatternFamily f : {PatternFamily::counter_evict, PatternFamily::sampler_flood, PatternFamily::window_preload,
                            PatternFamily::plain_single_sided, PatternFamily::plain_double_sided})
        if (to_string(f) == text) return f;
    fail(ErrorKind::invalid_config, fmt::format("unknown pattern family '{}'", text));
}

PatternSite PatternSite::double_sided(const DeviceConfig& config, std::uint32_t bank, std::uint32_t victim) {
    if (victim < 1 || victim + 1 >= config.rows_per_bank)
        fail(ErrorKind::out_of_range, fmt::format("victim {} has no row on both sides", victim));
    return PatternSite{bank, victim - 1, victim + 1, config.banks, config.rows_per_bank, config.timing};
}

PatternSite PatternSite::single_sided(const DeviceConfig& config, std::uint32_t bank, std::uint32_t victim) {
    if (victim < 1 || victim >= config.rows_per_bank)
        fail(ErrorKind::out_of_range, fmt::format("victim {} has no row below it", victim));
    return PatternSite{bank, victim - 1, victim - 1, config.banks, config.rows_per_bank, config.timing};
}

std::uint64_t AccessPattern::slots(std::size_t interval) const {
    std::uint64_t n = 0;
    for (const PatternOp& op : intervals.at(interval)) {
        if (const auto* h = std::get_if<HammerRows>(&op)) n += h->count * h->rows.size();
        if (const auto* h = std::get_if<HammerBanks>(&op)) n += h->count;
    }
    return n;
}

std::uint64_t AccessPattern::acts(std::size_t interval, std::uint32_t bank) const {
    std::uint64_t n = 0;
    for (const PatternOp& op : intervals.at(interval)) {
        if (const auto* h = std::get_if<HammerRows>(&op); h && h->bank == bank) n += h->count * h->rows.size();
        if (const auto* h = std::get_if<HammerBanks>(&op))
            for (const BankRow& r : h->rows)
                if (r.bank == bank) n += h->count;
    }
    return n;
}

void AccessPattern::validate() const {
    const TimingParams& t = site.timing;
    const std::uint64_t budget = t.max_hammers_per_interval();
    if (intervals.empty()) fail(ErrorKind::invalid_config, "pattern has no intervals");
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        if (slots(i) > budget)
            fail(ErrorKind::budget_exceeded,
                 fmt::format("{} interval {} needs {} ACT slots, {} fit in one tREFI", to_string(family), i, slots(i),
                             budget));
        for (const PatternOp& op : intervals[i]) {
            const auto* h = std::get_if<HammerBanks>(&op);
            if (!h) continue;
            std::set<std::uint32_t> banks;
            for (const BankRow& r : h->rows) banks.insert(r.bank);
            if (banks.size() != h->rows.size())
                fail(ErrorKind::invalid_config, "a multi-bank hammer names one bank twice");
            if (h->rows.size() > t.max_acts_in_window || t.t_faw_window > t.hammer_cycle())
                fail(ErrorKind::budget_exceeded,
                     fmt::format("{} simultaneous ACTs do not fit one tFAW window", h->rows.size()));
        }
    }
}

namespace {

// Lays ops into consecutive intervals, splitting hammer runs at round boundaries.
class Packer {
public:
    explicit Packer(std::uint64_t budget) : budget_(budget) { intervals_.emplace_back(); }

    void sync(PatternOp op) { intervals_.back().push_back(op); }

    // A round that straddles a REF is split: its first rows end one interval, the rest open the next.
    void rows(std::uint32_t bank, const std::vector<std::uint32_t>& rows, std::uint64_t count) {
        if (rows.empty()) return;
        const std::uint64_t width = rows.size();
        while (count > 0) {
            if (used_ == budget_) next();
            const std::uint64_t n = std::min((budget_ - used_) / width, count);
            if (n > 0) {
                intervals_.back().push_back(HammerRows{bank, rows, n});
                used_ += n * width;
                count -= n;
                continue;
            }
            std::size_t head = budget_ - used_;
            intervals_.back().push_back(HammerRows{bank, {rows.begin(), rows.begin() + head}, 1});
            while (head < width) {
                next();
                const std::size_t take = std::min<std::size_t>(width - head, budget_);
                intervals_.back().push_back(HammerRows{bank, {rows.begin() + head, rows.begin() + head + take}, 1});
                used_ = take;
                head += take;
            }
            --count;
        }
    }

    void banks(const std::vector<BankRow>& rows, std::uint64_t count) {
        while (count > 0) {
            if (used_ == budget_) next();
            const std::uint64_t n = std::min(budget_ - used_, count);
            intervals_.back().push_back(HammerBanks{rows, n});
            used_ += n;
            count -= n;
        }
    }

    std::uint64_t left() const { return budget_ - used_; }
    std::size_t count() const { return intervals_.size(); }

    void next() {
        intervals_.emplace_back();
        used_ = 0;
    }

    // Pads with empty intervals so the cycle spans exactly `count` intervals.
    std::vector<std::vector<PatternOp>> finish(std::size_t count, PatternFamily family) {
        if (intervals_.size() > count)
            fail(ErrorKind::budget_exceeded,
                 fmt::format("{} needs {} intervals but the cycle has {}", to_string(family), intervals_.size(), count));
        intervals_.resize(count);
        return std::move(intervals_);
    }

private:
    std::uint64_t budget_;
    std::uint64_t used_ = 0;
    std::vector<std::vector<PatternOp>> intervals_;
};

std::vector<std::uint32_t> far_rows(const PatternSite& site, std::uint32_t count) {
    if (site.rows_per_bank < 8 * count + 8)
        fail(ErrorKind::out_of_range, fmt::format("bank of {} rows cannot hold {} dummy rows", site.rows_per_bank, count));
    std::vector<std::uint32_t> out;
    const std::uint32_t base = site.a0 + site.rows_per_bank / 2;
    for (std::uint32_t i = 0; i < count; ++i) out.push_back((base + 4 * i) % site.rows_per_bank);
    return out;
}

std::uint64_t budget_of(const PatternSite& site) { return site.timing.max_hammers_per_interval(); }

std::vector<std::uint32_t> aggressors(const PatternSite& site) {
    if (site.a0 == site.a1) return {site.a0};
    return {site.a0, site.a1};
}

}  // namespace

AccessPattern gen_counter_evict(const PatternSite& site, std::uint64_t aggr_hammers, std::uint32_t dummies,
                                std::uint64_t dummy_hammers) {
    const std::uint64_t need = 2 * aggr_hammers + std::uint64_t{dummies} * dummy_hammers;
    if (need > budget_of(site))
        fail(ErrorKind::budget_exceeded, fmt::format("counter_evict needs {} ACTs per interval, budget is {}", need,
                                                     budget_of(site)));
    AccessPattern p;
    p.family = PatternFamily::counter_evict;
    p.site = site;
    p.params = {{"aggr_hammers", aggr_hammers}, {"dummies", dummies}, {"dummy_hammers", dummy_hammers}};
    const std::vector<std::uint32_t> rows = far_rows(site, dummies);
    for (std::uint32_t r : rows) p.dummies.push_back({site.bank, r});
    std::vector<PatternOp> ops{SyncToRef{}, HammerRows{site.bank, {site.a0, site.a1}, aggr_hammers}};
    // One dummy at a time: each finishes its hammers before the next enters the table.
    if (dummy_hammers > 0)
        for (std::uint32_t r : rows) ops.push_back(HammerRows{site.bank, {r}, dummy_hammers});
    p.intervals.push_back(std::move(ops));
    p.validate();
    return p;
}

AccessPattern gen_sampler_flood(const PatternSite& site, std::uint64_t aggr_hammers_per_window,
                                std::uint32_t window_refs) {
    if (window_refs == 0) fail(ErrorKind::invalid_config, "window_refs must be > 0");
    const std::uint64_t total = budget_of(site) * window_refs;
    if (2 * aggr_hammers_per_window > total)
        fail(ErrorKind::budget_exceeded, fmt::format("sampler_flood: {} aggressor ACTs exceed the {}-ACT window",
                                                     2 * aggr_hammers_per_window, total));
    AccessPattern p;
    p.family = PatternFamily::sampler_flood;
    p.site = site;
    const std::uint32_t lanes = std::min<std::uint32_t>(site.timing.max_acts_in_window, site.banks);
    const std::uint32_t row = (site.a0 + site.rows_per_bank / 2) % site.rows_per_bank;
    for (std::uint32_t i = 0; i < lanes; ++i) p.dummies.push_back({(site.bank + i) % site.banks, row});
    Packer pack(budget_of(site));
    pack.sync(SyncToTrrRef{});
    pack.rows(site.bank, {site.a0, site.a1}, aggr_hammers_per_window);
    const std::uint64_t dummy_rounds = total - 2 * aggr_hammers_per_window;
    pack.banks(p.dummies, dummy_rounds);
    p.params = {{"aggr_hammers", aggr_hammers_per_window},
                {"window_refs", window_refs},
                {"dummy_hammers", dummy_rounds},
                {"dummy_banks", lanes}};
    p.intervals = pack.finish(window_refs, p.family);
    p.validate();
    return p;
}

AccessPattern gen_window_preload(const PatternSite& site, std::uint64_t preload_dummy_hammers, std::uint32_t trr_refs,
                                 std::uint32_t dummies) {
    if (trr_refs == 0) fail(ErrorKind::invalid_config, "trr_refs must be > 0");
    if (dummies == 0 && preload_dummy_hammers > 0) fail(ErrorKind::invalid_config, "preload needs dummy rows");
    AccessPattern p;
    p.family = PatternFamily::window_preload;
    p.site = site;
    p.params = {{"preload", preload_dummy_hammers}, {"trr_refs", trr_refs}, {"dummies", dummies}};
    const std::vector<std::uint32_t> rows = dummies ? far_rows(site, dummies) : std::vector<std::uint32_t>{};
    for (std::uint32_t r : rows) p.dummies.push_back({site.bank, r});

    Packer pack(budget_of(site));
    pack.sync(SyncToTrrRef{});
    if (dummies > 0) {
        pack.rows(site.bank, rows, preload_dummy_hammers / dummies);
        const std::uint64_t rest = preload_dummy_hammers % dummies;
        pack.rows(site.bank, {rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(rest)}, 1);
    }
    // Aggressors take every remaining slot up to the next TRR-capable REF.
    if (pack.count() <= trr_refs) {
        const std::uint64_t slots = pack.left() + (trr_refs - pack.count()) * budget_of(site);
        pack.rows(site.bank, {site.a0, site.a1}, slots / 2);
    }
    p.intervals = pack.finish(trr_refs, p.family);
    p.validate();
    return p;
}

AccessPattern gen_plain_single_sided(const PatternSite& site, std::uint64_t hammers) {
    AccessPattern p;
    p.family = PatternFamily::plain_single_sided;
    p.site = site;
    p.site.a1 = site.a0;
    const std::uint64_t n = hammers ? hammers : budget_of(site);
    p.params = {{"hammers", n}};
    p.intervals.push_back({SyncToRef{}, HammerRows{site.bank, {site.a0}, n}});
    p.validate();
    return p;
}

AccessPattern gen_plain_double_sided(const PatternSite& site, std::uint64_t hammers) {
    AccessPattern p;
    p.family = PatternFamily::plain_double_sided;
    p.site = site;
    const std::uint64_t n = hammers ? hammers : budget_of(site) / 2;
    p.params = {{"hammers", n}};
    p.intervals.push_back({SyncToRef{}, HammerRows{site.bank, {site.a0, site.a1}, n}});
    p.validate();
    return p;
}

AccessPattern make_pattern(PatternFamily family, const PatternSite& site, std::uint64_t knob, std::uint32_t trr_refs) {
    switch (family) {
    case PatternFamily::counter_evict: {
        const std::uint64_t budget = budget_of(site);
        if (2 * knob > budget)
            fail(ErrorKind::budget_exceeded, fmt::format("counter_evict: {} hammers per aggressor exceed {}", knob, budget));
        return gen_counter_evict(site, knob, 16, (budget - 2 * knob) / 16);
    }
    case PatternFamily::sampler_flood: return gen_sampler_flood(site, knob, trr_refs);
    case PatternFamily::window_preload: return gen_window_preload(site, knob, trr_refs);
    case PatternFamily::plain_single_sided: return gen_plain_single_sided(site, knob);
    case PatternFamily::plain_double_sided: return gen_plain_double_sided(site, knob);
    }
    fail(ErrorKind::invalid_config, "unknown pattern family");
}

std::uint32_t BitFlipReport::flips_in(std::uint32_t row) const {
    for (const RowFlips& r : rows)
        if (r.row == row) return static_cast<std::uint32_t>(r.bits.size());
    return 0;
}

nlohmann::json to_json(const BitFlipReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const RowFlips& r : report.rows)
        if (!r.bits.empty()) rows.push_back({{"row", r.row}, {"flips", r.bits.size()}, {"bits", r.bits}});
    nlohmann::json chunks = nlohmann::json::array();
    for (const ChunkFlips& c : report.chunks) chunks.push_back({{"row", c.row}, {"chunk", c.chunk}, {"flips", c.flips}});
    return {{"family", to_string(report.family)}, {"params", report.params}, {"bank", report.bank},
            {"duration_refs", report.duration_refs}, {"total_flips", report.total}, {"rows", rows},
            {"chunks", chunks}};
}

namespace {

struct CadenceGuard {
    explicit CadenceGuard(DramDevice& d) : device(d) { device.enforce_ref_cadence(true); }
    ~CadenceGuard() { device.enforce_ref_cadence(false); }
    DramDevice& device;
};

std::uint32_t logical(const DramDevice& device, std::uint32_t bank, std::uint32_t physical) {
    const auto row = device.to_logical(bank, physical);
    if (!row) fail(ErrorKind::out_of_range, fmt::format("physical row {} has no logical address", physical));
    return *row;
}

void run_op(DramDevice& device, const PatternOp& op) {
    if (const auto* h = std::get_if<HammerRows>(&op)) {
        std::vector<std::uint32_t> rows;
        for (std::uint32_t r : h->rows) rows.push_back(logical(device, h->bank, r));
        device.hammer(h->bank, rows, h->count, HammerMode::interleaved);
    } else if (const auto* h = std::get_if<HammerBanks>(&op)) {
        std::vector<BankRow> rows;
        for (const BankRow& r : h->rows) rows.push_back({r.bank, logical(device, r.bank, r.row)});
        device.hammer_lockstep(rows, h->count);
    }
}

}  // namespace

BitFlipReport execute(DramDevice& device, const AccessPattern& pattern, std::uint64_t duration_refs) {
    pattern.validate();
    const std::uint32_t bank = pattern.site.bank;
    const std::uint32_t physical_rows = device.config().physical_rows();

    std::set<std::uint32_t> region;
    for (std::uint32_t a : aggressors(pattern.site))
        for (int d = -2; d <= 2; ++d) {
            const std::int64_t r = static_cast<std::int64_t>(a) + d;
            if (r >= 0 && r < physical_rows && device.to_logical(bank, static_cast<std::uint32_t>(r)))
                region.insert(static_cast<std::uint32_t>(r));
        }
    for (std::uint32_t r : region) device.write_row(bank, logical(device, bank, r), ~std::uint64_t{0});

    const std::uint64_t k = std::max<std::uint64_t>(1, device.config().trr.trr_ref_period);
    std::uint64_t issued = 0;
    {
        CadenceGuard guard(device);
        auto ref = [&] {
            if (device.ref_count() > 0) device.wait_until(device.next_ref_due());
            device.refresh();
            ++issued;
        };
        ref();
        for (std::size_t i = 0; issued < duration_refs; i = (i + 1) % pattern.intervals.size()) {
            for (const PatternOp& op : pattern.intervals[i]) {
                if (std::holds_alternative<SyncToTrrRef>(op))
                    for (std::uint64_t idle = 0;
                         idle < 4 * k && issued < duration_refs && device.trr().refs_until_capable(bank) != k - 1; ++idle)
                        ref();
                run_op(device, op);
            }
            ref();
        }
    }

    BitFlipReport report;
    report.family = pattern.family;
    report.params = pattern.params;
    report.bank = bank;
    report.duration_refs = issued;
    for (std::uint32_t r : region) {
        RowData data = device.read_row(bank, logical(device, bank, r));
        std::map<std::uint32_t, std::uint32_t> per_chunk;
        for (std::uint32_t bit : data.flipped) ++per_chunk[bit / 64];
        for (auto [chunk, n] : per_chunk) report.chunks.push_back({r, chunk, n});
        report.total += data.flipped.size();
        report.rows.push_back({r, std::move(data.flipped)});
    }
    return report;
}

std::uint64_t adjacent_flips(const BitFlipReport& report, const PatternSite& site) {
    std::set<std::uint32_t> rows;
    for (std::uint32_t a : {site.a0, site.a1}) {
        if (a > 0) rows.insert(a - 1);
        rows.insert(a + 1);
    }
    std::uint64_t n = 0;
    for (std::uint32_t r : rows) n += report.flips_in(r);
    return n;
}

namespace {

double quantile(const std::vector<std::uint32_t>& sorted, double q) {
    if (sorted.empty()) return 0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (static_cast<double>(sorted[hi]) - sorted[lo]);
}

bool single_sided(PatternFamily family) { return family == PatternFamily::plain_single_sided; }

PatternSite site_for(const DeviceConfig& config, PatternFamily family, std::uint32_t bank, std::uint32_t victim) {
    return single_sided(family) ? PatternSite::single_sided(config, bank, victim)
                                : PatternSite::double_sided(config, bank, victim);
}

std::uint64_t default_duration(const DramDevice& device, std::uint64_t requested) {
    return requested ? requested : 2ULL * device.refresh_period_refs();
}

std::uint32_t default_trr_refs(const DramDevice& device, std::uint32_t requested) {
    return requested ? requested : std::max<std::uint32_t>(1, device.config().trr.trr_ref_period);
}

}  // namespace

std::vector<SweepPoint> sweep_hammers(const DramDevice& device, PatternFamily family,
                                      std::span<const std::uint64_t> knobs, const SweepOptions& options) {
    std::vector<SweepPoint> curve;
    const std::uint64_t duration = default_duration(device, options.duration_refs);
    const std::uint32_t trr_refs = default_trr_refs(device, options.trr_refs);
    for (std::uint64_t knob : knobs) {
        SweepPoint point;
        point.knob = knob;
        for (std::uint32_t victim : options.victims) {
            DramDevice copy = device;
            const AccessPattern p = make_pattern(family, site_for(device.config(), family, options.bank, victim), knob,
                                                 trr_refs);
            point.victim_flips.push_back(execute(copy, p, duration).flips_in(victim));
        }
        std::vector<std::uint32_t> sorted = point.victim_flips;
        std::sort(sorted.begin(), sorted.end());
        point.median = quantile(sorted, 0.5);
        point.q1 = quantile(sorted, 0.25);
        point.q3 = quantile(sorted, 0.75);
        point.max = sorted.empty() ? 0 : sorted.back();
        curve.push_back(std::move(point));
    }
    return curve;
}

std::string sweep_csv(const std::vector<SweepPoint>& curve) {
    std::string out = "hammers,median,q1,q3,max\n";
    for (const SweepPoint& p : curve) out += fmt::format("{},{:.2f},{:.2f},{:.2f},{}\n", p.knob, p.median, p.q1, p.q3, p.max);
    return out;
}

ScanResult vulnerability_scan(const DramDevice& device, PatternFamily family, std::uint64_t knob,
                              const ScanOptions& options) {
    const DeviceConfig& config = device.config();
    const std::uint32_t last = options.last ? options.last : config.rows_per_bank - 3;
    if (options.stride == 0 || options.first > last) fail(ErrorKind::invalid_config, "empty scan range");
    const std::uint64_t duration = default_duration(device, options.duration_refs);
    const std::uint32_t trr_refs = default_trr_refs(device, options.trr_refs);

    ScanResult result;
    std::set<std::uint32_t> flipped;
    std::vector<std::uint32_t> positions;
    for (std::uint32_t v = options.first; v <= last; v += options.stride) positions.push_back(v);
    for (std::uint32_t v : positions) {
        DramDevice copy = device;
        const BitFlipReport report =
            execute(copy, make_pattern(family, site_for(config, family, options.bank, v), knob, trr_refs), duration);
        for (const RowFlips& r : report.rows)
            if (!r.bits.empty()) flipped.insert(r.row);
    }
    result.positions = static_cast<std::uint32_t>(positions.size());
    for (std::uint32_t v : positions)
        if (flipped.count(v)) {
            ++result.vulnerable;
            result.flipped_rows.push_back(v);
        }
    return result;
}

}  // namespace utrr
