#include "utrr/reveng.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <functional>
#include <numeric>
#include <set>

namespace utrr {

std::string_view to_string(DetectionKind kind) {
    switch (kind) {
    case DetectionKind::unknown: return "unknown";
    case DetectionKind::none: return "none";
    case DetectionKind::counter: return "counter";
    case DetectionKind::sampling: return "sampling";
    case DetectionKind::window: return "window";
    }
    return "?";
}

nlohmann::json to_json(const InferredTrrProfile& p) {
    auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json doc;
    doc["trr_to_ref_ratio"] = opt(p.trr_to_ref_ratio);
    doc["deferred"] = opt(p.deferred);
    doc["neighbor_span"] = p.neighbor_span ? nlohmann::json(p.neighbor_span->label()) : nlohmann::json(nullptr);
    doc["detection_kind"] = std::string(to_string(p.detection_kind));
    doc["tracker_capacity"] = opt(p.tracker_capacity);
    doc["per_bank_scope"] = opt(p.per_bank_scope);
    doc["evict_policy"] = opt(p.evict_policy);
    doc["reset_on_detect"] = opt(p.reset_on_detect);
    doc["entry_persistence"] = opt(p.entry_persistence);
    doc["sampling_guarantee"] = opt(p.sampling_guarantee);
    doc["window_size"] = opt(p.window_size);
    doc["regular_refresh_period_refs"] = opt(p.regular_refresh_period_refs);
    return doc;
}

RevengOptions RevengOptions::for_scale(const ScaleProfile& profile) {
    RevengOptions o;
    o.consistency_checks = profile.consistency_checks;
    if (profile.scale == Scale::desk) {
        o.reset_periods = 1;
        o.eviction_iterations = 300;
    }
    return o;
}

namespace {

constexpr std::uint64_t heavy = 5000;  // comfortably above any sampler guarantee and window

HammerOp op(std::uint32_t bank, std::uint32_t row, std::uint64_t count) { return HammerOp{bank, {row}, count}; }

}  // namespace

RevengSession::RevengSession(TestBench& bench, RevengOptions options) : bench_(bench), options_(options) {}

void RevengSession::note(std::string test, std::string outcome, std::string detail) {
    evidence_.push_back(Evidence{std::move(test), std::move(outcome), std::move(detail)});
}

std::vector<RowGroup> RevengSession::groups(const std::string& layout, std::uint32_t count, std::uint32_t bank) {
    auto& cached = group_cache_[{layout, bank}];
    if (cached.size() < count) {
        ProfilingConfig pc;
        pc.bank = bank;
        pc.row_lo = 16;
        pc.row_hi = bench_.datasheet().rows_per_bank / 2;  // upper half is left for dummies
        pc.layout = layout;
        pc.groups_needed = count;
        pc.consistency_checks = options_.consistency_checks;
        pc.require_all = false;
        cached = bench_.find_groups(pc);
        if (cached.size() < count)
            fail(ErrorKind::insufficient_groups,
                 fmt::format("found {} of {} '{}' groups in bank {}", cached.size(), count, layout, bank));
    }
    return {cached.begin(), cached.begin() + count};
}

std::vector<RevengSession::Detector> RevengSession::detectors(std::uint32_t count, std::uint32_t bank) {
    const NeighborSpan span = find_neighbor_span();
    std::vector<Detector> out;
    if (span.pair) {
        for (RowGroup& g : groups("R-R", count, bank)) {
            const std::uint32_t aggressor = g.anchor + 1;
            out.push_back(Detector{std::move(g), aggressor, {aggressor ^ 1u}});
        }
        return out;
    }
    // Probes at the outermost offsets: a probe's own detection never reaches the other probe.
    int reach = 0;
    for (int o : span.offsets) reach = std::max(reach, std::abs(o));
    const std::string layout = "R" + std::string(2 * reach - 1, '-') + "R";
    for (RowGroup& g : groups(layout, count, bank)) {
        const std::uint32_t aggressor = g.anchor + static_cast<std::uint32_t>(reach);
        std::vector<std::uint32_t> signal;
        if (std::find(span.offsets.begin(), span.offsets.end(), -reach) != span.offsets.end()) signal.push_back(g.anchor);
        if (std::find(span.offsets.begin(), span.offsets.end(), reach) != span.offsets.end())
            signal.push_back(aggressor + static_cast<std::uint32_t>(reach));
        out.push_back(Detector{std::move(g), aggressor, std::move(signal)});
    }
    return out;
}

ExperimentConfig RevengSession::experiment(const std::vector<Detector>& used) const {
    ExperimentConfig c;
    for (const Detector& d : used) c.groups.push_back(d.group);
    c.reset_periods = options_.reset_periods;
    return c;
}

ExperimentResult RevengSession::run_script(const std::vector<Detector>& used, std::vector<ScriptRound> script) {
    ExperimentConfig c = experiment(used);
    c.script = std::move(script);
    return bench_.run(c);
}

void RevengSession::reset(const std::vector<Detector>& used) { bench_.reset_trr_state(experiment(used)); }

bool RevengSession::detected(const ExperimentResult& result, const Detector& d) {
    return std::all_of(d.signal.begin(), d.signal.end(),
                       [&](std::uint32_t row) { return result.probe(row).attribution == Attribution::trr; });
}

std::map<std::uint32_t, std::uint32_t> RevengSession::count_detections(const ExperimentResult& result,
                                                                       const std::vector<Detector>& used) {
    std::map<std::uint32_t, std::uint32_t> out;
    for (std::uint32_t i = 0; i < used.size(); ++i)
        if (detected(result, used[i])) ++out[i];
    return out;
}

std::vector<std::uint32_t> RevengSession::far_rows(std::uint32_t count, const std::vector<Detector>& used) const {
    std::vector<std::uint32_t> avoid;
    for (const Detector& d : used) {
        avoid.insert(avoid.end(), d.group.rows.begin(), d.group.rows.end());
        avoid.push_back(d.aggressor);
    }
    return bench_.dummy_rows(count, avoid);
}

std::uint32_t RevengSession::find_regular_refresh_period() {
    if (profile_.regular_refresh_period_refs) return *profile_.regular_refresh_period_refs;
    const RowGroup probe = groups("R", 1, options_.bank).front();
    const std::uint32_t period = bench_.regular_refresh_period(probe, RefreshPeriodOptions{16, 4 * 8192});
    profile_.regular_refresh_period_refs = period;
    note("regular_refresh_period", std::to_string(period), fmt::format("probe row {}", probe.rows.front()));
    return period;
}

std::uint32_t RevengSession::find_trr_ref_ratio() {
    if (profile_.trr_to_ref_ratio) return *profile_.trr_to_ref_ratio;
    if (profile_.detection_kind == DetectionKind::none) fail(ErrorKind::no_trr_detected, "no TRR-attributed survival");
    const RowGroup g = groups("R-R", 1, options_.bank).front();
    const Detector d{g, g.anchor + 1, g.rows};
    const std::vector<ScriptRound> single{ScriptRound{{op(g.bank, d.aggressor, heavy)}, 1}};

    // Keep going until the last experiment saw a TRR refresh, so the quiet stretch below starts right after one.
    std::vector<std::uint64_t> hits;
    bool last_hit = false;
    const std::uint32_t cap = options_.ratio_iterations + 4 * options_.max_ratio;
    for (std::uint32_t i = 0; i < cap && (i < options_.ratio_iterations || (!hits.empty() && !last_hit)); ++i) {
        const ExperimentResult r = run_script({d}, single);
        last_hit = r.any_trr();
        if (last_hit) hits.push_back(r.round_refs.front().front());
    }
    if (hits.empty()) {
        profile_.detection_kind = DetectionKind::none;
        note("trr_to_ref_ratio", "no-trr-detected", fmt::format("{} iterations", options_.ratio_iterations));
        fail(ErrorKind::no_trr_detected,
             fmt::format("no TRR-attributed survival in {} single-REF iterations", options_.ratio_iterations));
    }
    if (hits.size() < 3 || !last_hit)
        fail(ErrorKind::inconclusive, fmt::format("only {} TRR-attributed survivals", hits.size()));
    std::uint64_t k = 0;
    for (std::size_t i = 1; i < hits.size(); ++i) k = std::gcd(k, hits[i] - hits[i - 1]);
    if (k == 0 || k > options_.max_ratio) fail(ErrorKind::inconclusive, fmt::format("survival spacing {} out of range", k));

    // Deferral: go quiet past a capable REF, then hammer again. A deferring tracker acts on the first
    // REF that sees the aggressor; a fixed cadence keeps its phase.
    const std::uint64_t s = hits.back();
    const std::uint64_t h = std::max<std::uint64_t>(1, k / 2);
    std::uint64_t f0 = s + k + h;
    while (f0 <= bench_.ref_count() + 1) f0 += k;
    bench_.refresh(f0 - 1 - bench_.ref_count());
    std::optional<std::uint64_t> first;
    for (std::uint64_t i = 0; i < 4 * k && !first; ++i) {
        const ExperimentResult r = run_script({d}, single);
        if (r.any_trr()) first = r.round_refs.front().front();
    }
    if (!first) fail(ErrorKind::inconclusive, "no TRR survival after the quiet stretch");
    const bool deferred = (*first - s) % k != 0;

    profile_.trr_to_ref_ratio = static_cast<std::uint32_t>(k);
    profile_.deferred = deferred;
    note("trr_to_ref_ratio", deferred ? fmt::format("deferred({})", k) : std::to_string(k),
         fmt::format("{} survivals; first after quiet stretch at +{} REFs", hits.size(), *first - s));
    return static_cast<std::uint32_t>(k);
}

NeighborSpan RevengSession::find_neighbor_span() {
    if (profile_.neighbor_span) return *profile_.neighbor_span;
    const std::uint32_t k = find_trr_ref_ratio();
    const std::uint32_t budget = std::max<std::uint32_t>(48, 8 * k);

    // Most common survival pattern around an aggressor at distance d from both probes:
    // bit 0 is the lower probe, bit 1 the upper one. 0 when nothing ever survived by TRR.
    auto pattern_at = [&](const RowGroup& g, std::uint32_t d) {
        const Detector det{g, g.anchor + d, g.rows};
        reset({det});  // rows hammered by earlier sub-tests may sit next to these probes
        std::map<int, std::uint32_t> seen;
        std::uint32_t events = 0;
        for (std::uint32_t i = 0; i < budget && events < 8; ++i) {
            const ExperimentResult r = run_script({det}, {ScriptRound{{op(g.bank, det.aggressor, heavy)}, 1}});
            const int bits = (r.probe(g.rows[0]).attribution == Attribution::trr ? 1 : 0) |
                             (r.probe(g.rows[1]).attribution == Attribution::trr ? 2 : 0);
            if (bits) {
                ++seen[bits];
                ++events;
            }
        }
        int mode = 0;
        std::uint32_t best = 0;
        for (auto [bits, n] : seen)
            if (n > best) std::tie(mode, best) = std::tie(bits, n);
        return mode;
    };

    std::vector<int> offsets;
    std::string detail;
    for (std::uint32_t d = 1; d <= 3; ++d) {
        const std::string layout = "R" + std::string(2 * d - 1, '-') + "R";
        const RowGroup g = groups(layout, 1, options_.bank).front();
        const int mode = pattern_at(g, d);
        detail += fmt::format("{}:{} ", layout, mode);
        if (mode == 0) {
            if (d == 1) fail(ErrorKind::inconclusive, "no neighbor of a hammered row was ever refreshed by TRR");
            break;
        }
        const int di = static_cast<int>(d);
        if (mode & 1) offsets.push_back(-di);
        if (mode & 2) offsets.push_back(di);

        if (d == 1 && mode != 3) {
            // One-sided: compare against an aggressor of the other parity.
            const std::uint32_t parity = (g.anchor + 1) % 2;
            std::optional<RowGroup> other;
            for (const RowGroup& c : groups("R-R", 8, options_.bank))
                if ((c.anchor + 1) % 2 != parity) {
                    other = c;
                    break;
                }
            if (!other) fail(ErrorKind::insufficient_groups, "no R-R group with an aggressor of the other parity");
            const int other_mode = pattern_at(*other, 1);
            detail += fmt::format("R-R@{}:{} ", other->anchor, other_mode);
            // Partner of an odd row is below it, of an even row above it.
            const auto partner_side = [](std::uint32_t aggressor) { return aggressor % 2 ? 1 : 2; };
            if (mode == partner_side(g.anchor + 1) && other_mode == partner_side(other->anchor + 1)) {
                profile_.neighbor_span = NeighborSpan::pair_partner();
                note("neighbor_span", "pair", detail);
                return *profile_.neighbor_span;
            }
        }
    }
    std::sort(offsets.begin(), offsets.end());
    profile_.neighbor_span = NeighborSpan{offsets, false};
    note("neighbor_span", profile_.neighbor_span->label(), detail);
    return *profile_.neighbor_span;
}

DetectionKind RevengSession::find_detection_kind() {
    const std::uint32_t k = find_trr_ref_ratio();
    if (profile_.detection_kind != DetectionKind::unknown) return profile_.detection_kind;
    const std::uint32_t iterations = std::max<std::uint32_t>(24, 6 * k);
    const auto dets = detectors(2, options_.bank);
    const Detector& x = dets[0];
    const Detector& y = dets[1];

    // Overwrite: X then a lighter Y before every REF. A single-entry sampler only ever sees Y.
    reset(dets);
    std::uint32_t x_over = 0, y_over = 0;
    for (std::uint32_t i = 0; i < iterations; ++i) {
        const auto r = run_script(dets, {ScriptRound{{op(x.group.bank, x.aggressor, heavy),
                                                      op(y.group.bank, y.aggressor, 3000)}, 1}});
        x_over += detected(r, x);
        y_over += detected(r, y);
    }

    // Truncation: 8K ACTs of other rows, then X. A window that fills early never records X.
    const std::vector<std::uint32_t> fill = far_rows(64, {x});
    reset({x});
    std::uint32_t x_trunc = 0;
    for (std::uint32_t i = 0; i < iterations; ++i) {
        const auto r = run_script({x}, {ScriptRound{{HammerOp{x.group.bank, fill, 128, HammerMode::interleaved},
                                                     op(x.group.bank, x.aggressor, heavy)}, 1}});
        x_trunc += detected(r, x);
    }

    DetectionKind kind = DetectionKind::unknown;
    if (x_over == 0 && y_over > 0) kind = DetectionKind::sampling;
    else if (x_over > 0 && x_trunc == 0) kind = DetectionKind::window;
    else if (x_over > 0 && x_trunc > 0) kind = DetectionKind::counter;
    note("detection_kind", std::string(to_string(kind)),
         fmt::format("overwrite X {} Y {}; truncated X {} of {}", x_over, y_over, x_trunc, iterations));
    if (kind == DetectionKind::unknown) fail(ErrorKind::inconclusive, "overwrite and truncation tests disagree");
    profile_.detection_kind = kind;
    return kind;
}

bool RevengSession::all_detected(const std::vector<Detector>& used, std::uint64_t hammers, std::uint32_t iterations) {
    reset(used);
    std::vector<HammerOp> ops;
    for (const Detector& d : used) ops.push_back(op(d.group.bank, d.aggressor, hammers));
    std::set<std::uint32_t> seen;
    for (std::uint32_t i = 0; i < iterations && seen.size() < used.size(); ++i)
        for (auto [index, n] : count_detections(run_script(used, {ScriptRound{ops, 1}}), used)) seen.insert(index);
    return seen.size() == used.size();
}

std::uint32_t RevengSession::find_tracker_capacity() {
    if (profile_.tracker_capacity) return *profile_.tracker_capacity;
    const DetectionKind kind = find_detection_kind();
    if (kind == DetectionKind::sampling) {
        profile_.tracker_capacity = 1;
        note("tracker_capacity", "1", "overwrite test: the earlier of two aggressors is never refreshed");
        return 1;
    }
    if (kind != DetectionKind::counter)
        fail(ErrorKind::not_applicable, fmt::format("capacity is not measured for a {} tracker", to_string(kind)));

    const std::uint32_t k = find_trr_ref_ratio();
    // Long enough for a round-robin pointer to visit every slot of a 32-entry table twice.
    const std::uint32_t iterations = 2 * 2 * options_.capacity_limit * k;
    std::uint32_t limit = options_.capacity_limit;
    try {
        detectors(limit, options_.bank);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::insufficient_groups) throw;
        for (limit = options_.capacity_limit; limit > 1; --limit) {
            try {
                detectors(limit, options_.bank);
                break;
            } catch (const Error&) {
            }
        }
    }
    auto fits = [&](std::uint32_t n) { return all_detected(detectors(n, options_.bank), 1000, iterations); };

    std::uint32_t ok = 0, bad = 0;
    std::string detail;
    for (std::uint32_t n = 1;; n *= 2) {
        const std::uint32_t probe_n = std::min(n, limit);
        const bool pass = fits(probe_n);
        detail += fmt::format("{}:{} ", probe_n, pass ? "all" : "missed");
        if (!pass) {
            bad = probe_n;
            break;
        }
        ok = probe_n;
        if (probe_n == limit)
            fail(ErrorKind::inconclusive, fmt::format("all {} aggressors were detected; capacity is larger", limit));
    }
    if (ok == 0) fail(ErrorKind::inconclusive, "a single aggressor was never detected");
    while (bad - ok > 1) {
        const std::uint32_t mid = ok + (bad - ok) / 2;
        const bool pass = fits(mid);
        detail += fmt::format("{}:{} ", mid, pass ? "all" : "missed");
        (pass ? ok : bad) = mid;
    }
    profile_.tracker_capacity = ok;
    note("tracker_capacity", std::to_string(ok), detail);
    return ok;
}

std::string RevengSession::test_eviction_policy() {
    if (profile_.evict_policy) return *profile_.evict_policy;
    if (find_detection_kind() != DetectionKind::counter) {
        note("evict_policy", "not-applicable", std::string(to_string(profile_.detection_kind)));
        fail(ErrorKind::not_applicable, "eviction policy applies to counter tables only");
    }
    const auto dets = detectors(17, options_.bank);
    std::vector<HammerOp> ops;
    for (std::size_t i = 0; i < dets.size(); ++i) ops.push_back(op(dets[i].group.bank, dets[i].aggressor, i == 0 ? 50 : 100));
    reset(dets);
    std::map<std::uint32_t, std::uint32_t> hits;
    for (std::uint32_t i = 0; i < options_.eviction_iterations; ++i)
        for (auto [index, n] : count_detections(run_script(dets, {ScriptRound{ops, 1}}), dets)) hits[index] += n;
    const std::uint32_t light = hits.contains(0) ? hits[0] : 0;
    if (hits.size() - (light ? 1 : 0) == 0) fail(ErrorKind::inconclusive, "none of the 16 heavier aggressors was detected");
    const std::string policy = light == 0 ? "min-counter" : "other";
    profile_.evict_policy = policy;
    note("evict_policy", policy,
         fmt::format("H0=50 detected {} times; {} of 16 H1=100 aggressors detected over {} iterations", light,
                     hits.size() - (light ? 1 : 0), options_.eviction_iterations));
    return policy;
}

bool RevengSession::test_reset_on_detect() {
    if (profile_.reset_on_detect) return *profile_.reset_on_detect;
    if (find_detection_kind() != DetectionKind::counter) {
        note("reset_on_detect", "not-applicable", std::string(to_string(profile_.detection_kind)));
        fail(ErrorKind::not_applicable, "reset-on-detect applies to counter tables only");
    }
    const std::uint32_t k = find_trr_ref_ratio();
    const auto dets = detectors(2, options_.bank);
    reset(dets);
    std::uint32_t x = 0, y = 0;
    for (std::uint32_t i = 0; i < 40 * k; ++i) {
        const auto r = run_script(dets, {ScriptRound{{op(dets[0].group.bank, dets[0].aggressor, 2000),
                                                      op(dets[1].group.bank, dets[1].aggressor, 3000)}, 1}});
        x += detected(r, dets[0]);
        y += detected(r, dets[1]);
    }
    if (y == 0) fail(ErrorKind::inconclusive, "the heavier aggressor was never detected");
    // With reset the lighter row wins every few TREFs; without it only a slot walk ever reaches it.
    const bool resets = x >= 2 && 4 * x >= y;
    profile_.reset_on_detect = resets;
    note("reset_on_detect", resets ? "true" : "false", fmt::format("H=2K detected {}, H=3K detected {}", x, y));
    return resets;
}

std::string RevengSession::test_entry_persistence() {
    if (profile_.entry_persistence) return *profile_.entry_persistence;
    const DetectionKind kind = find_detection_kind();
    if (kind != DetectionKind::counter && kind != DetectionKind::sampling) {
        note("entry_persistence", "not-applicable", std::string(to_string(kind)));
        fail(ErrorKind::not_applicable, "persistence applies to counter and sampling trackers");
    }
    const std::uint32_t k = find_trr_ref_ratio();
    const std::uint32_t slots = profile_.tracker_capacity.value_or(16);
    const std::uint32_t burst = kind == DetectionKind::counter ? 2 * slots * k + 2 * k : k;
    const auto dets = detectors(1, options_.bank);
    const Detector& x = dets[0];
    reset(dets);
    if (!detected(run_script(dets, {ScriptRound{{op(x.group.bank, x.aggressor, heavy)}, burst}}), x))
        fail(ErrorKind::inconclusive, "the hammered row was not detected right after hammering");
    bench_.refresh(options_.persistence_refs);
    const bool again = detected(run_script(dets, {ScriptRound{{}, burst}}), x);
    const std::string label = !again ? "cleared" : kind == DetectionKind::counter ? "indefinite" : "indefinite-until-resample";
    profile_.entry_persistence = label;
    note("entry_persistence", label, fmt::format("re-detected within {} REFs after {} idle REFs: {}", burst,
                                                 options_.persistence_refs, again));
    return label;
}

bool RevengSession::test_scope() {
    if (profile_.per_bank_scope) return *profile_.per_bank_scope;
    const DetectionKind kind = find_detection_kind();
    const std::uint32_t k = find_trr_ref_ratio();
    const auto dets = detectors(1, options_.bank);
    const Detector& x = dets[0];
    const std::uint32_t rows = bench_.datasheet().rows_per_bank;
    std::vector<HammerOp> load;
    for (std::uint32_t i = 0; i < 32; ++i)
        load.push_back(op(options_.second_bank, (rows / 32) * i + rows / 64, kind == DetectionKind::window ? 200 : 6000));

    // Counters and samplers: does a later load in the other bank displace X?
    // Windows: does an earlier load in the other bank keep X out?
    std::vector<HammerOp> ops;
    if (kind == DetectionKind::window) ops = load;
    ops.push_back(op(x.group.bank, x.aggressor, heavy));
    if (kind != DetectionKind::window) ops.insert(ops.end(), load.begin(), load.end());

    // A window must first act on something harmless so the reset rows are gone from it.
    std::vector<ScriptRound> script;
    if (kind == DetectionKind::window) script.push_back(ScriptRound{{op(x.group.bank, far_rows(1, dets).front(), 64)}, k});
    script.push_back(ScriptRound{ops, 2 * k + 1});
    std::vector<bool> seen;
    for (int trial = 0; trial < 2; ++trial) {
        reset(dets);
        seen.push_back(detected(run_script(dets, script), x));
    }
    if (seen[0] != seen[1]) fail(ErrorKind::inconclusive, "scope trials disagree");
    profile_.per_bank_scope = seen[0];
    note("per_bank_scope", seen[0] ? "per-bank" : "shared",
         fmt::format("bank {} aggressor detected after bank {} load: {}", options_.bank, options_.second_bank, seen[0]));
    return seen[0];
}

std::uint32_t RevengSession::find_sampling_guarantee() {
    if (profile_.sampling_guarantee) return *profile_.sampling_guarantee;
    if (find_detection_kind() != DetectionKind::sampling) {
        note("sampling_guarantee", "not-a-sampler", std::string(to_string(profile_.detection_kind)));
        fail(ErrorKind::not_applicable, "not-a-sampler");
    }
    const std::uint32_t k = find_trr_ref_ratio();
    const auto dets = detectors(1, options_.bank);
    const Detector& x = dets[0];
    const std::uint32_t z = far_rows(1, dets).front();
    Rng rng(derive_seed(options_.seed, 0x5a3));

    // A long run of Z first so that neither the last sample nor the sampler's phase favours X.
    auto always = [&](std::uint64_t n) {
        for (std::uint32_t t = 0; t < options_.guarantee_trials; ++t) {
            const std::uint64_t lead = 4096 + rng.below(4096);
            const auto r = run_script(dets, {ScriptRound{{op(x.group.bank, z, lead), op(x.group.bank, x.aggressor, n)}, k}});
            if (!detected(r, x)) return false;
        }
        return true;
    };
    std::uint32_t lo = 0, hi = 13;  // exponents: 2^hi always works, 2^lo - 1 never does
    if (!always(std::uint64_t{1} << hi)) fail(ErrorKind::inconclusive, "even 8192 consecutive ACTs are not always sampled");
    std::string detail;
    while (lo < hi) {
        const std::uint32_t mid = (lo + hi) / 2;
        const bool ok = always(std::uint64_t{1} << mid);
        detail += fmt::format("{}:{} ", 1u << mid, ok ? "always" : "missed");
        (ok ? hi : lo) = ok ? mid : mid + 1;
    }
    const std::uint32_t guarantee = 1u << hi;
    profile_.sampling_guarantee = guarantee;
    note("sampling_guarantee", std::to_string(guarantee), detail);
    return guarantee;
}

std::uint32_t RevengSession::find_window_size() {
    if (profile_.window_size) return *profile_.window_size;
    if (find_detection_kind() != DetectionKind::window) {
        note("window_size", "not-window-based", std::string(to_string(profile_.detection_kind)));
        fail(ErrorKind::not_applicable, "not-window-based");
    }
    const std::uint32_t k = find_trr_ref_ratio();
    const auto dets = detectors(1, options_.bank);
    const Detector& x = dets[0];
    const std::uint32_t bank = x.group.bank;
    std::vector<std::uint32_t> filler = far_rows(bench_.datasheet().rows_per_bank * 3 / 4, dets);
    const std::uint32_t flush = filler.back();
    filler.pop_back();

    // Round one makes the tracker act on `flush`, so round two starts from an empty window.
    auto detects = [&](std::vector<HammerOp> ops) {
        const auto r = run_script(dets, {ScriptRound{{op(bank, flush, 64)}, k}, ScriptRound{std::move(ops), k}});
        return detected(r, x);
    };

    std::optional<std::uint32_t> min_acts;
    for (std::uint32_t h = 1; h <= 8 && !min_acts; ++h)
        if (detects({op(bank, x.aggressor, h)})) min_acts = h;
    if (!min_acts) fail(ErrorKind::inconclusive, "X was never detected alone in a fresh window");
    const std::uint32_t m = *min_acts;
    if (m < 2) fail(ErrorKind::inconclusive, "every activated row is a candidate; filler cannot stay invisible");

    // Filler rows get m-1 ACTs each, so only X can ever become a candidate.
    auto after = [&](std::uint32_t i) {
        std::vector<HammerOp> ops;
        const std::uint32_t full = i / (m - 1), rest = i % (m - 1);
        if (full > 0) ops.push_back(HammerOp{bank, {filler.begin(), filler.begin() + full}, m - 1, HammerMode::interleaved});
        if (rest > 0) ops.push_back(op(bank, filler[full], rest));
        ops.push_back(op(bank, x.aggressor, m));
        return detects(std::move(ops));
    };
    const std::uint32_t top = static_cast<std::uint32_t>(filler.size() - 1) * (m - 1);
    if (!after(0)) fail(ErrorKind::inconclusive, "X is not detected without filler");
    if (after(top)) fail(ErrorKind::inconclusive, fmt::format("X is still detected after {} filler ACTs", top));
    std::uint32_t lo = 0, hi = top;  // detected at lo, not at hi
    while (hi - lo > 1) {
        const std::uint32_t mid = lo + (hi - lo) / 2;
        (after(mid) ? lo : hi) = mid;
    }
    const std::uint32_t size = lo + m;
    profile_.window_size = size;
    note("window_size", std::to_string(size), fmt::format("last detected start {}; {} ACTs make a candidate", lo, m));
    return size;
}

InferredTrrProfile RevengSession::full_profile() {
    auto attempt = [&](std::string_view test, const std::function<void()>& step) {
        try {
            step();
            return true;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::no_trr_detected) throw;
            note(std::string(test), std::string(to_string(e.kind())), e.what());
            return false;
        }
    };
    attempt("regular_refresh_period", [&] { find_regular_refresh_period(); });
    try {
        find_trr_ref_ratio();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::no_trr_detected) return profile_;
        note("trr_to_ref_ratio", std::string(to_string(e.kind())), e.what());
        return profile_;
    }
    if (!attempt("neighbor_span", [&] { find_neighbor_span(); })) return profile_;
    if (!attempt("detection_kind", [&] { find_detection_kind(); })) return profile_;
    switch (profile_.detection_kind) {
    case DetectionKind::counter:
        attempt("tracker_capacity", [&] { find_tracker_capacity(); });
        attempt("evict_policy", [&] { test_eviction_policy(); });
        attempt("reset_on_detect", [&] { test_reset_on_detect(); });
        attempt("entry_persistence", [&] { test_entry_persistence(); });
        break;
    case DetectionKind::sampling:
        attempt("tracker_capacity", [&] { find_tracker_capacity(); });
        attempt("sampling_guarantee", [&] { find_sampling_guarantee(); });
        attempt("entry_persistence", [&] { test_entry_persistence(); });
        break;
    case DetectionKind::window:
        attempt("window_size", [&] { find_window_size(); });
        break;
    default:
        break;
    }
    attempt("per_bank_scope", [&] { test_scope(); });
    return profile_;
}

}  // namespace utrr
