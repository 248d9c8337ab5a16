#include "utrr/analyzer.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <map>
#include <numeric>
#include <set>

namespace utrr {

std::string_view to_string(Attribution attribution) {
    switch (attribution) {
    case Attribution::none: return "none";
    case Attribution::trr: return "trr";
    case Attribution::regular: return "regular";
    }
    return "?";
}

const ProbeVerdict& ExperimentResult::probe(std::uint32_t row) const {
    for (const ProbeVerdict& v : probes)
        if (v.row == row) return v;
    fail(ErrorKind::out_of_range, fmt::format("row {} is not a probe", row));
}

std::vector<std::uint32_t> ExperimentResult::rows_with(Attribution attribution) const {
    std::vector<std::uint32_t> out;
    for (const ProbeVerdict& v : probes)
        if (v.attribution == attribution) out.push_back(v.row);
    return out;
}

namespace {

std::uint32_t logical_of(const DramDevice& device, std::uint32_t bank, std::uint32_t physical) {
    const auto logical = device.to_logical(bank, physical);
    if (!logical) fail(ErrorKind::out_of_range, fmt::format("physical row {} has no logical address", physical));
    return *logical;
}

std::uint32_t experiment_bank(const ExperimentConfig& config) {
    if (config.groups.empty()) fail(ErrorKind::invalid_config, "experiment needs at least one row group");
    return config.groups.front().bank;
}

std::vector<std::uint32_t> rows_to_avoid(const ExperimentConfig& config) {
    std::vector<std::uint32_t> avoid;
    for (const RowGroup& g : config.groups) {
        avoid.insert(avoid.end(), g.rows.begin(), g.rows.end());
        const auto gaps = g.gaps();
        avoid.insert(avoid.end(), gaps.begin(), gaps.end());
    }
    for (const AggressorSpec& a : config.aggressors) avoid.push_back(a.row);
    for (const ScriptRound& round : config.script)
        for (const HammerOp& op : round.ops)
            if (op.bank == config.groups.front().bank) avoid.insert(avoid.end(), op.rows.begin(), op.rows.end());
    return avoid;
}

struct BankedRow {
    std::uint32_t bank;
    std::uint32_t logical;
};

// One round's ACT stream: aggressors per mode, then dummies interleaved.
std::vector<BankedRow> round_stream(const DramDevice& device, std::uint32_t bank, const ExperimentConfig& config,
                                    const std::vector<std::uint32_t>& dummies) {
    std::vector<BankedRow> stream;
    std::vector<std::uint32_t> logical;
    for (const AggressorSpec& a : config.aggressors) logical.push_back(logical_of(device, bank, a.row));
    if (config.mode == HammerMode::cascaded) {
        for (std::size_t i = 0; i < config.aggressors.size(); ++i)
            for (std::uint64_t n = 0; n < config.aggressors[i].hammers; ++n) stream.push_back({bank, logical[i]});
    } else {
        std::uint64_t most = 0;
        for (const AggressorSpec& a : config.aggressors) most = std::max(most, a.hammers);
        for (std::uint64_t n = 0; n < most; ++n)
            for (std::size_t i = 0; i < config.aggressors.size(); ++i)
                if (n < config.aggressors[i].hammers) stream.push_back({bank, logical[i]});
    }
    for (std::uint64_t n = 0; n < config.dummy_hammers; ++n)
        for (std::uint32_t d : dummies) stream.push_back({bank, logical_of(device, bank, d)});
    return stream;
}

// Same stream as round_stream, issued through the bulk hammer paths.
void hammer_round(DramDevice& device, std::uint32_t bank, const ExperimentConfig& config,
                  const std::vector<std::uint32_t>& dummies) {
    std::vector<std::uint32_t> logical;
    for (const AggressorSpec& a : config.aggressors) logical.push_back(logical_of(device, bank, a.row));
    if (config.mode == HammerMode::cascaded) {
        for (std::size_t i = 0; i < logical.size(); ++i) device.hammer(bank, logical[i], config.aggressors[i].hammers);
    } else {
        // Interleave in stretches where the set of still-active aggressors is constant.
        std::vector<std::uint64_t> levels;
        for (const AggressorSpec& a : config.aggressors) levels.push_back(a.hammers);
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        std::uint64_t done = 0;
        for (std::uint64_t level : levels) {
            std::vector<std::uint32_t> active;
            for (std::size_t i = 0; i < logical.size(); ++i)
                if (config.aggressors[i].hammers >= level) active.push_back(logical[i]);
            device.hammer(bank, active, level - done, HammerMode::interleaved);
            done = level;
        }
    }
    if (config.dummy_hammers > 0 && !dummies.empty()) {
        std::vector<std::uint32_t> logical_dummies;
        for (std::uint32_t d : dummies) logical_dummies.push_back(logical_of(device, bank, d));
        device.hammer(bank, logical_dummies, config.dummy_hammers, HammerMode::interleaved);
    }
}

}  // namespace

std::vector<std::uint32_t> select_dummy_rows(const DramDevice& device, std::uint32_t count,
                                             const std::vector<std::uint32_t>& avoid, std::uint32_t distance) {
    const std::int64_t rows = device.config().rows_per_bank;
    const std::int64_t mid = rows / 2;
    auto clear = [&](std::int64_t r) {
        for (std::uint32_t a : avoid)
            if (std::abs(r - static_cast<std::int64_t>(a)) < distance) return false;
        return true;
    };
    std::vector<std::uint32_t> out;
    for (std::int64_t step = 0; out.size() < count && step <= rows; ++step) {
        for (std::int64_t r : {mid - step, mid + step + 1}) {
            if (out.size() < count && r >= 0 && r < rows && clear(r) && device.to_logical(0, static_cast<std::uint32_t>(r)))
                out.push_back(static_cast<std::uint32_t>(r));
        }
    }
    if (out.size() < count)
        fail(ErrorKind::insufficient_groups,
             fmt::format("only {} of {} dummy rows lie {} rows away from probes and aggressors", out.size(), count, distance));
    return out;
}

void reset_trr_state(DramDevice& device, const ExperimentConfig& config) {
    if (config.reset_periods == 0 || config.reset_dummy_rows == 0) return;
    const std::uint32_t bank = experiment_bank(config);
    const std::vector<std::uint32_t> dummies =
        select_dummy_rows(device, config.reset_dummy_rows, rows_to_avoid(config), config.dummy_distance);
    std::vector<std::uint32_t> logical;
    for (std::uint32_t d : dummies) logical.push_back(logical_of(device, bank, d));

    const TimingParams& timing = device.config().timing;
    const std::uint64_t intervals = static_cast<std::uint64_t>(config.reset_periods) * (64ms / timing.ref_interval);
    const std::uint32_t per_interval = std::min<std::uint32_t>(static_cast<std::uint32_t>(logical.size()),
                                                               timing.max_hammers_per_interval());
    const std::span<const std::uint32_t> rows(logical.data(), per_interval);
    device.refresh();
    for (std::uint64_t i = 0; i < intervals; ++i) {
        device.hammer(bank, rows, 1, HammerMode::interleaved);
        device.wait_until(device.next_ref_due());
        device.refresh();
    }
}

ExperimentResult run_experiment(DramDevice& device, const ExperimentConfig& config) {
    const std::uint32_t bank = experiment_bank(config);
    if (config.refs_per_round == 0 && config.rounds > 0 && config.ref_synchronized)
        fail(ErrorKind::invalid_config, "refs_per_round: synchronized rounds need at least one REF");

    std::set<std::uint32_t> probe_rows;
    for (const RowGroup& g : config.groups) {
        if (g.bank != bank) fail(ErrorKind::invalid_config, "all row groups must share one bank");
        for (std::uint32_t r : g.rows)
            if (!probe_rows.insert(r).second) fail(ErrorKind::probe_overlap, fmt::format("row {} is in two groups", r));
    }
    for (const AggressorSpec& a : config.aggressors)
        if (probe_rows.contains(a.row)) fail(ErrorKind::probe_overlap, fmt::format("aggressor {} is a probe row", a.row));
    if (!config.script.empty() && config.ref_synchronized)
        fail(ErrorKind::invalid_config, "script: scripted rounds cannot be REF-synchronized");
    for (const ScriptRound& round : config.script)
        for (const HammerOp& op : round.ops)
            for (std::uint32_t r : op.rows)
                if (op.bank == bank && probe_rows.contains(r))
                    fail(ErrorKind::probe_overlap, fmt::format("scripted row {} is a probe row", r));

    ExperimentResult result;
    if (!config.dummies.empty()) {
        result.dummies = config.dummies;
        for (std::uint32_t d : result.dummies)
            for (std::uint32_t avoid : rows_to_avoid(config))
                if (std::abs(static_cast<std::int64_t>(d) - avoid) < config.dummy_distance)
                    fail(ErrorKind::probe_overlap, fmt::format("dummy {} is within {} rows of row {}", d,
                                                               config.dummy_distance, avoid));
    } else if (config.dummy_rows > 0) {
        result.dummies = select_dummy_rows(device, config.dummy_rows, rows_to_avoid(config), config.dummy_distance);
    }

    const TimingParams& timing = device.config().timing;
    std::vector<BankedRow> stream;
    if (config.ref_synchronized) {
        stream = round_stream(device, bank, config, result.dummies);
        const std::uint64_t budget = static_cast<std::uint64_t>(config.refs_per_round) * timing.max_hammers_per_interval();
        if (stream.size() > budget)
            fail(ErrorKind::budget_exceeded, fmt::format("{} ACTs per round exceed {} REF intervals ({} ACTs)", stream.size(),
                                                         config.refs_per_round, budget));
    }

    if (config.reset_trr_state) reset_trr_state(device, config);

    // Write each group T/2 before the hammer phase; read it T/2 after.
    std::vector<std::size_t> order(config.groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return config.groups[a].retention > config.groups[b].retention; });
    const Nanos t_max = config.groups[order.front()].retention;
    const Nanos t_min = config.groups[order.back()].retention;
    const Nanos write_slack = Nanos(1000) * static_cast<std::int64_t>(probe_rows.size() + config.aggressors.size() + 1);
    const Nanos begin = device.now() + t_max / 2 + write_slack;
    result.written_at = device.now();
    for (std::size_t g : order) {
        device.wait_until(begin - config.groups[g].retention / 2);
        for (std::uint32_t r : config.groups[g].rows) device.write_row(bank, logical_of(device, bank, r), config.probe_data);
    }
    for (const AggressorSpec& a : config.aggressors) device.write_row(bank, logical_of(device, bank, a.row), config.aggressor_data);
    device.wait_until(begin);
    result.hammer_begin = device.now();

    for (const ScriptRound& round : config.script) {
        std::vector<std::uint64_t> refs;
        for (const HammerOp& op : round.ops) {
            std::vector<std::uint32_t> logical;
            for (std::uint32_t r : op.rows) logical.push_back(logical_of(device, op.bank, r));
            device.hammer(op.bank, logical, op.count, op.mode);
        }
        for (std::uint32_t i = 0; i < round.refs; ++i) {
            device.refresh();
            refs.push_back(device.ref_count());
        }
        result.round_refs.push_back(std::move(refs));
    }

    Rng jitter(config.jitter_seed);
    const std::uint32_t rounds = config.script.empty() ? config.rounds : 0;
    for (std::uint32_t round = 0; round < rounds; ++round) {
        std::vector<std::uint64_t> refs;
        if (!config.ref_synchronized) {
            hammer_round(device, bank, config, result.dummies);
            for (std::uint32_t i = 0; i < config.refs_per_round; ++i) {
                device.refresh();
                refs.push_back(device.ref_count());
            }
        } else {
            // Leading REF anchors the tREFI cadence; every later REF lands exactly on its deadline.
            if (round == 0) {
                device.refresh();
                refs.push_back(device.ref_count());
            }
            device.enforce_ref_cadence(true);
            const std::uint32_t per_interval = timing.max_hammers_per_interval();
            std::size_t next = 0;
            for (std::uint32_t i = 0; i < config.refs_per_round; ++i) {
                const std::size_t end = std::min(stream.size(), next + per_interval);
                if (config.phase_jitter) {
                    const auto acts = static_cast<std::int64_t>(end - next);
                    const Nanos slack = timing.ref_interval - timing.t_ref - timing.hammer_cycle() * acts;
                    if (slack > 0ns) device.wait(Nanos(static_cast<std::int64_t>(jitter.below(slack.count()))));
                }
                for (; next < end; ++next) device.hammer(stream[next].bank, stream[next].logical, 1);
                device.wait_until(device.next_ref_due());
                device.refresh();
                refs.push_back(device.ref_count());
            }
            device.enforce_ref_cadence(false);
        }
        result.round_refs.push_back(std::move(refs));
    }
    result.hammer_end = device.now();

    const Nanos phase = result.hammer_end - result.hammer_begin;
    const Nanos allowed = t_min / 2 - device.config().retention.retention_quantum;
    if (phase > allowed)
        fail(ErrorKind::budget_exceeded, fmt::format("hammer/REF phase took {} ns; probes at T = {} ms allow {} ns",
                                                     phase.count(),
                                                     std::chrono::duration_cast<std::chrono::milliseconds>(t_min).count(),
                                                     allowed.count()));

    std::uint64_t first_ref = 0, last_ref = 0;
    for (const auto& refs : result.round_refs) {
        if (refs.empty()) continue;
        if (first_ref == 0) first_ref = refs.front();
        last_ref = refs.back();
    }

    std::vector<ProbeVerdict> verdicts;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const RowGroup& g = config.groups[*it];
        device.wait_until(result.hammer_end + g.retention / 2);
        for (std::uint32_t r : g.rows) {
            const RowData data = device.read_row(bank, logical_of(device, bank, r));
            ProbeVerdict v{static_cast<std::uint32_t>(*it), bank, r, static_cast<std::uint32_t>(data.flip_count())};
            v.refreshed = data.intact();
            if (v.refreshed)
                v.attribution = first_ref > 0 && device.regular_refresh_covers(r, first_ref, last_ref) ? Attribution::regular
                                                                                                      : Attribution::trr;
            verdicts.push_back(v);
        }
    }
    result.read_at = device.now();
    std::stable_sort(verdicts.begin(), verdicts.end(), [](const ProbeVerdict& a, const ProbeVerdict& b) {
        return a.group != b.group ? a.group < b.group : a.row < b.row;
    });
    result.probes = std::move(verdicts);
    return result;
}

bool verify_adjacency(DramDevice& device, std::uint32_t bank, std::uint32_t aggressor,
                      const std::vector<std::uint32_t>& probe_rows, std::uint64_t hammers) {
    const std::uint64_t pattern = ~std::uint64_t{0};
    bool all = true;
    for (std::uint32_t probe : probe_rows) {
        device.write_row(bank, probe, pattern);
        device.hammer(bank, aggressor, hammers);
        const RowData data = device.read_row(bank, probe);
        all = all && !data.intact();
        device.write_row(bank, probe, pattern);
    }
    return all;
}

namespace {

// Writes the probe, issues `refs` REFs in the middle of its exposure window, reads it back.
bool probe_survives(DramDevice& device, std::uint32_t bank, std::uint32_t logical, Nanos retention, std::uint32_t refs) {
    const std::uint64_t pattern = ~std::uint64_t{0};
    device.write_row(bank, logical, pattern);
    device.wait(retention / 2);
    for (std::uint32_t i = 0; i < refs; ++i) device.refresh();
    device.wait(retention / 2);
    return device.read_row(bank, logical).intact();
}

}  // namespace

std::uint32_t infer_regular_refresh_period(DramDevice& device, const RowGroup& probe, RefreshPeriodOptions options) {
    if (probe.rows.empty()) fail(ErrorKind::invalid_config, "probe group has no rows");
    if (options.burst == 0) fail(ErrorKind::invalid_config, "burst: must be >= 1");
    const std::uint32_t bank = probe.bank;
    const std::uint32_t logical = logical_of(device, bank, probe.rows.front());
    const Nanos allowed = probe.retention / 2 - device.config().retention.retention_quantum;
    if (device.config().timing.t_ref * static_cast<std::int64_t>(options.burst) > allowed)
        fail(ErrorKind::inconclusive, fmt::format("a burst of {} REFs does not fit the probe's {} ms retention",
                                                  options.burst,
                                                  std::chrono::duration_cast<std::chrono::milliseconds>(probe.retention).count()));

    std::uint64_t issued = 0;
    // Index (relative to the first REF issued here) of the first REF of each surviving burst.
    auto next_hit = [&](std::uint32_t burst, std::uint64_t limit) -> std::optional<std::uint64_t> {
        while (issued < limit) {
            const std::uint64_t start = issued;
            const bool survived = probe_survives(device, bank, logical, probe.retention, burst);
            issued += burst;
            if (survived) return start;
        }
        return std::nullopt;
    };
    auto skip_to = [&](std::uint64_t target) {
        while (issued < target) {
            device.refresh();
            ++issued;
        }
    };

    const auto first = next_hit(options.burst, options.max_refs);
    const auto second = first ? next_hit(options.burst, options.max_refs) : std::nullopt;
    if (!second)
        fail(ErrorKind::inconclusive, fmt::format("probe row {} was never regularly refreshed twice in {} REFs",
                                                  probe.rows.front(), options.max_refs));
    if (options.burst == 1) return static_cast<std::uint32_t>(*second - *first);

    // Bursts only bound the period; pin two consecutive hits with single REFs around the estimate.
    const std::uint64_t estimate = *second - *first;
    const std::uint64_t slack = 2ULL * options.burst;
    skip_to(*second + estimate - std::min(estimate, slack));
    const auto exact_a = next_hit(1, *second + estimate + slack);
    if (!exact_a) fail(ErrorKind::inconclusive, "regular refresh drifted away from the burst estimate");
    skip_to(*exact_a + estimate - std::min(estimate, slack));
    const auto exact_b = next_hit(1, *exact_a + estimate + slack);
    if (!exact_b) fail(ErrorKind::inconclusive, "regular refresh drifted away from the burst estimate");
    return static_cast<std::uint32_t>(*exact_b - *exact_a);
}

}  // namespace utrr
