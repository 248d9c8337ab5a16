#include "utrr/acceptance.hpp"

#include "utrr/analyzer.hpp"
#include "utrr/attack.hpp"
#include "utrr/ecc.hpp"
#include "utrr/harness.hpp"
#include "utrr/presets.hpp"
#include "utrr/reveng.hpp"
#include "utrr/row_scout.hpp"
#include "utrr/test_bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

namespace utrr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

CriterionResult criterion(int id, std::string title) {
    CriterionResult r;
    r.id = id;
    r.title = std::move(title);
    return r;
}

constexpr const char* kVariants[] = {"A_TRR1", "A_TRR2", "B_TRR1", "B_TRR2", "B_TRR3", "C_TRR1", "C_TRR2", "C_TRR3"};

DeviceConfig desk(std::string_view name, std::uint64_t seed) {
    return PresetCatalog::builtin().device(name, Scale::desk, seed);
}

struct Expected {
    std::uint32_t ratio;
    std::string span;
    std::optional<std::uint32_t> capacity;
    std::optional<bool> per_bank;
    std::optional<std::uint32_t> window;
};

Expected expected_profile(std::string_view v) {
    const std::string a = "{-2,-1,+1,+2}", one = "{-1,+1}";
    if (v == "A_TRR1") return {9, a, 16, true, {}};
    if (v == "A_TRR2") return {9, a, 16, true, {}};
    if (v == "B_TRR1") return {4, one, 1, false, {}};
    if (v == "B_TRR2") return {9, one, 1, false, {}};
    if (v == "B_TRR3") return {2, one, 1, true, {}};
    if (v == "C_TRR1") return {17, "pair", {}, {}, 2048};
    if (v == "C_TRR2") return {9, one, {}, {}, 2048};
    return {8, one, {}, {}, 1024};
}

template <class T>
std::string show(const std::optional<T>& v) {
    return v ? fmt::format("{}", *v) : "unknown";
}

CriterionResult blind_recovery(const AcceptanceOptions& o, std::ostream& progress) {
    CriterionResult r = criterion(1, "blind recovery of 8 presets x 5 seeds");
    const std::uint32_t seeds = o.quick ? 1 : 5;
    const auto start = Clock::now();
    std::vector<std::string> mismatches;
    std::uint32_t runs = 0;
    for (const char* v : kVariants) {
        const Expected want = expected_profile(v);
        for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
            DramDevice device(desk(v, seed));
            TestBench bench(device);
            RevengOptions options = RevengOptions::for_scale(PresetCatalog::builtin().scale(Scale::desk));
            options.seed = seed;
            RevengSession session(bench, options);
            const InferredTrrProfile p = session.full_profile();
            ++runs;
            std::vector<std::string> bad;
            if (p.trr_to_ref_ratio != want.ratio) bad.push_back("ratio " + show(p.trr_to_ref_ratio));
            const std::string span = p.neighbor_span ? p.neighbor_span->label() : "unknown";
            if (span != want.span) bad.push_back("span " + span);
            if (want.capacity && p.tracker_capacity != want.capacity) bad.push_back("capacity " + show(p.tracker_capacity));
            if (want.per_bank && p.per_bank_scope != want.per_bank) bad.push_back("per_bank " + show(p.per_bank_scope));
            if (want.window && p.window_size != want.window) bad.push_back("window " + show(p.window_size));
            progress << fmt::format("  [1] {} seed {}: {}\n", v, seed, bad.empty() ? "match" : fmt::format("{}", fmt::join(bad, ", ")));
            if (!bad.empty()) mismatches.push_back(fmt::format("{}/{}: {}", v, seed, fmt::join(bad, ", ")));
        }
    }
    const double secs = seconds_since(start);
    r.metrics = {{"runs", runs}, {"mismatches", mismatches}, {"seconds", secs}};
    r.pass = mismatches.empty() && secs < 600;
    r.detail = fmt::format("{} of {} runs exact, {:.0f} s (limit 600 s)", runs - mismatches.size(), runs, secs);
    return r;
}

CriterionResult observation_suite(const AcceptanceOptions& o, std::ostream& progress) {
    CriterionResult r = criterion(2, "observation suite against the TRR action log");
    if (o.observations_binary.empty() || !fs::exists(o.observations_binary)) {
        r.detail = "observation test binary not available";
        return r;
    }
    const fs::path log = fs::path(o.scratch_dir) / "observations.txt";
    fs::create_directories(o.scratch_dir);
    const std::string cmd = fmt::format("\"{}\" > \"{}\" 2>&1", o.observations_binary, log.string());
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::string line, passed_line;
    std::uint32_t ok = 0, failed = 0;
    while (std::getline(in, line)) {
        if (line.rfind("[       OK ]", 0) == 0) ++ok;
        if (line.rfind("[  FAILED  ]", 0) == 0 && line.find(" ms)") != std::string::npos) ++failed;
    }
    progress << fmt::format("  [2] {} observation tests passed, {} failed\n", ok, failed);
    r.metrics = {{"passed", ok}, {"failed", failed}};
    r.pass = status == 0 && ok > 0 && failed == 0;
    r.detail = fmt::format("{} observation tests passed, {} failed", ok, failed);
    return r;
}

CriterionResult refresh_period(std::ostream& progress) {
    CriterionResult r = criterion(3, "regular refresh period inference");
    ProfilingConfig scout;
    scout.layout = "R";
    scout.consistency_checks = PresetCatalog::builtin().scale(Scale::desk).consistency_checks;
    DramDevice a(desk("A_TRR1", 1));
    const std::uint32_t pa = infer_regular_refresh_period(a, find_row_groups(a, scout).front());
    DramDevice b(desk("B_TRR1", 1));
    const std::uint32_t pb = infer_regular_refresh_period(b, find_row_groups(b, scout).front(), {.burst = 64});
    progress << fmt::format("  [3] A_TRR1 {} B_TRR1 {}\n", pa, pb);
    r.metrics = {{"A_TRR1", pa}, {"B_TRR1", pb}};
    r.pass = pa == 3758 && pb == 8192;
    r.detail = fmt::format("vendor A {} (want 3758), default schedule {} (want 8192)", pa, pb);
    return r;
}

// Victim positions with vulnerable cells, spread over the bank.
std::vector<std::uint32_t> victim_sample(const DramDevice& device, std::uint32_t count) {
    std::vector<std::uint32_t> out;
    const std::uint32_t rows = device.config().rows_per_bank;
    for (std::uint32_t v = 24; v + 24 < rows && out.size() < count; v += 43)
        if (!device.cells().vulnerable_cells(0, v).empty()) out.push_back(v);
    return out;
}

CriterionResult evasion(const AcceptanceOptions& o, std::ostream& progress) {
    CriterionResult r = criterion(4, "plain patterns never flip, custom patterns flip");
    const std::uint32_t seeds = o.quick ? 1 : 3;
    const std::uint32_t victims = o.quick ? 6 : 12;
    const std::uint32_t plain_victims = o.quick ? 2 : 4;
    bool pass = true;
    std::vector<std::string> notes;
    for (const char* v : kVariants) {
        // zero side: eight regular refresh periods, flips next to the aggressors
        std::uint64_t plain_flips = 0;
        {
            const DramDevice base(desk(v, 1));
            const std::uint64_t refs = 8 * static_cast<std::uint64_t>(base.refresh_period_refs());
            auto sample = victim_sample(base, plain_victims);
            for (std::uint32_t victim : sample)
                for (PatternFamily f : {PatternFamily::plain_single_sided, PatternFamily::plain_double_sided}) {
                    DramDevice device = base;
                    const PatternSite site = f == PatternFamily::plain_single_sided
                                                 ? PatternSite::single_sided(device.config(), 0, victim)
                                                 : PatternSite::double_sided(device.config(), 0, victim);
                    plain_flips += adjacent_flips(execute(device, make_pattern(f, site, 0, 1), refs), site);
                }
        }
        // positive side
        std::vector<double> rates;
        CustomChoice choice;
        for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
            const DramDevice base(desk(v, seed));
            choice = custom_choice(profile_from_truth(base.ground_truth()), base.config().timing, base.config().banks);
            const std::uint64_t refs = 2 * static_cast<std::uint64_t>(base.refresh_period_refs());
            const auto sample = victim_sample(base, victims);
            std::uint32_t hit = 0;
            for (std::uint32_t victim : sample) {
                DramDevice device = base;
                const PatternSite site = PatternSite::double_sided(device.config(), 0, victim);
                const BitFlipReport rep = execute(device, make_pattern(choice.family, site, choice.knob, choice.trr_refs), refs);
                hit += rep.flips_in(victim) > 0;
            }
            rates.push_back(sample.empty() ? 0.0 : 100.0 * hit / sample.size());
        }
        const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size();
        const double low = *std::min_element(rates.begin(), rates.end());
        const bool ok = plain_flips == 0 && mean >= 95.0 && low >= 90.0;
        pass = pass && ok;
        const std::string line = fmt::format("{} plain {} flips; {}({}) hit {:.0f}% (min {:.0f}%) {}", v, plain_flips,
                                             to_string(choice.family), choice.knob, mean, low, ok ? "ok" : "FAIL");
        progress << "  [4] " << line << '\n';
        notes.push_back(line);
        r.metrics[v] = {{"plain_adjacent_flips", plain_flips}, {"family", to_string(choice.family)},
                        {"knob", choice.knob}, {"hit_percent", rates}};
    }
    r.pass = pass;
    r.detail = fmt::format("{}", fmt::join(notes, "; "));
    return r;
}

CriterionResult sweep_shape(const AcceptanceOptions& o, std::ostream& progress) {
    CriterionResult r = criterion(5, "A-family sweep is unimodal over [8, 60]");
    const DramDevice device(desk("A_TRR1", 1));
    SweepOptions so;
    so.victims = victim_sample(device, o.quick ? 6 : 8);
    so.duration_refs = 2 * static_cast<std::uint64_t>(device.refresh_period_refs());
    std::vector<std::uint64_t> knobs;
    for (std::uint64_t k = 8; k <= 60; k += 4) knobs.push_back(k);
    const auto curve = sweep_hammers(device, PatternFamily::counter_evict, knobs, so);
    std::vector<double> medians;
    for (const SweepPoint& p : curve) medians.push_back(p.median);
    const auto peak = std::max_element(medians.begin(), medians.end());
    const bool interior = peak != medians.begin() && peak != std::prev(medians.end());
    r.pass = interior && medians.front() < *peak && medians.back() < *peak;
    r.metrics = {{"knobs", knobs}, {"medians", medians}};
    r.detail = fmt::format("medians {} ; peak {} at {}", fmt::join(medians, " "), *peak,
                           knobs[static_cast<std::size_t>(peak - medians.begin())]);
    progress << "  [5] " << r.detail << '\n';
    return r;
}

CriterionResult scout_soundness(const AcceptanceOptions& o, std::ostream& progress) {
    CriterionResult r = criterion(6, "row scout soundness over 10 devices");
    const auto start = Clock::now();
    const std::uint64_t devices = o.quick ? 3 : 10;
    std::uint32_t rows = 0, unsound = 0, vrt = 0;
    for (std::uint64_t seed = 1; seed <= devices; ++seed) {
        DramDevice device(desk("A_TRR1", seed));
        ProfilingConfig p;
        p.layout = "R-R";
        p.groups_needed = 4;
        p.consistency_checks = PresetCatalog::builtin().scale(Scale::desk).consistency_checks;
        for (const RowGroup& g : find_row_groups(device, p)) {
            rows += static_cast<std::uint32_t>(g.rows.size());
            for (std::uint32_t row : g.rows) vrt += device.cells().is_vrt(g.bank, row);
            if (!rows_consistent(device, g.bank, g.rows, g.retention, 100)) unsound += 1;
        }
    }
    const double secs = seconds_since(start);
    r.metrics = {{"rows", rows}, {"unsound_groups", unsound}, {"vrt_rows", vrt}, {"seconds", secs}};
    r.pass = rows > 0 && unsound == 0 && vrt == 0 && secs <= 120;
    r.detail = fmt::format("{} rows from {} devices, {} groups failed re-validation, {} VRT rows, {:.0f} s", rows,
                           devices, unsound, vrt, secs);
    progress << "  [6] " << r.detail << '\n';
    return r;
}

CriterionResult ecc(std::ostream& progress) {
    CriterionResult r = criterion(7, "SECDED and Reed-Solomon parity");
    Rng rng(7);
    std::uint64_t singles = 0, singles_ok = 0, doubles = 0, doubles_ok = 0;
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t data = rng.next();
        const secded::Codeword w = secded::encode(data);
        for (std::uint32_t p = 0; p < 72; ++p) {
            secded::Codeword bad = w;
            bad.flip(p);
            const secded::Decoded d = secded::decode(bad);
            ++singles;
            singles_ok += d.status == secded::Status::corrected && d.data == data;
        }
    }
    for (int i = 0; i < 10'000; ++i) {
        const auto a = static_cast<std::uint32_t>(rng.below(72));
        auto b = static_cast<std::uint32_t>(rng.below(71));
        if (b >= a) ++b;
        secded::Codeword bad = secded::encode(rng.next());
        bad.flip(a);
        bad.flip(b);
        ++doubles;
        doubles_ok += secded::decode(bad).status == secded::Status::uncorrectable;
    }
    // seven flips, one per byte, in one chunk
    BitFlipReport seven;
    seven.rows.push_back({100, {1, 9, 17, 25, 33, 41, 49}});
    seven.chunks.push_back({100, 0, 7});
    seven.total = 7;
    std::vector<std::uint32_t> positions;
    for (std::uint32_t b : seven.rows.front().bits) positions.push_back(secded::data_position(b));
    const EccOutcome outcome = classify(CodewordSpec::secded(), positions);
    const std::uint32_t parity = rs_parity_needed(max_symbol_errors(seven, CodewordSpec::reed_solomon_code(8, 0, 8)));
    r.pass = singles_ok == singles && doubles_ok == doubles && outcome != EccOutcome::corrected && parity == 7;
    r.metrics = {{"singles", singles}, {"singles_corrected", singles_ok}, {"doubles", doubles},
                 {"doubles_detected", doubles_ok}, {"seven_flip_outcome", to_string(outcome)}, {"rs_parity", parity}};
    r.detail = fmt::format("singles {}/{}, doubles {}/{}, 7-flip chunk {}, RS parity {}", singles_ok, singles, doubles_ok,
                           doubles, to_string(outcome), parity);
    progress << "  [7] " << r.detail << '\n';
    return r;
}

std::string slurp_dir(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const fs::path& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        all += f.filename().string() + "\n" + ss.str();
    }
    return all;
}

CriterionResult determinism_and_budget(const AcceptanceOptions& o, std::ostream& progress) {
    CriterionResult r = criterion(8, "determinism and ACT budget");
    // identical manifests, byte-identical outputs
    std::vector<std::string> differing;
    for (Verb verb : {Verb::device, Verb::scout, Verb::attack, Verb::ecc_report}) {
        RunManifest m;
        m.verb = verb;
        m.preset = "C_TRR3";
        m.seed = 5;
        m.victims = {300, 600};
        m.duration_refs = 3000;
        std::string outputs[2];
        for (int i = 0; i < 2; ++i) {
            m.output_dir = (fs::path(o.scratch_dir) / fmt::format("det{}", i)).string();
            fs::remove_all(m.output_dir);
            std::ostringstream quiet;
            run(m, quiet);
            outputs[i] = slurp_dir(m.output_dir);
        }
        if (outputs[0] != outputs[1] || outputs[0].empty()) differing.push_back(std::string(to_string(verb)));
    }

    // every generated pattern fits, and runs without a timing violation
    std::uint32_t patterns = 0, refused = 0, over = 0, violations = 0;
    const std::uint64_t knobs[] = {0, 1, 8, 22, 42, 60, 74, 252, 414, 1024, 2048};
    for (const char* v : kVariants) {
        const DeviceConfig c = desk(v, 1);
        const std::uint32_t k = std::max<std::uint32_t>(1, c.trr.trr_ref_period);
        for (PatternFamily f : {PatternFamily::counter_evict, PatternFamily::sampler_flood, PatternFamily::window_preload,
                                PatternFamily::plain_single_sided, PatternFamily::plain_double_sided})
            for (std::uint64_t knob : knobs) {
                AccessPattern p;
                try {
                    p = make_pattern(f, PatternSite::double_sided(c, 0, 401), knob, k);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::budget_exceeded) throw;
                    ++refused;
                    continue;
                }
                ++patterns;
                for (std::size_t i = 0; i < p.intervals.size(); ++i)
                    over += p.slots(i) > c.timing.max_hammers_per_interval();
                DramDevice device(c);
                try {
                    execute(device, p, 2 * k + 2);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::timing_violation) throw;
                    ++violations;
                }
            }
    }
    const std::uint32_t budget = TimingParams{}.max_hammers_per_interval();
    r.pass = differing.empty() && over == 0 && violations == 0 && budget == 149;
    r.metrics = {{"nondeterministic_verbs", differing}, {"patterns", patterns}, {"refused_over_budget", refused},
                 {"intervals_over_budget", over}, {"timing_violations", violations}, {"budget", budget}};
    r.detail = fmt::format("{} verbs differ; {} patterns run, {} refused as over budget, {} intervals over {}, {} "
                           "timing violations",
                           differing.size(), patterns, refused, over, budget, violations);
    progress << "  [8] " << r.detail << '\n';
    return r;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& o, std::ostream& progress) {
    std::vector<CriterionResult> out;
    auto want = [&](int id) { return o.only.empty() || std::find(o.only.begin(), o.only.end(), id) != o.only.end(); };
    auto guarded = [&](int id, const std::string& title, auto&& body) {
        if (!want(id)) return;
        progress << fmt::format("criterion {}: {}\n", id, title);
        progress.flush();
        try {
            out.push_back(body());
        } catch (const std::exception& e) {
            CriterionResult r = criterion(id, title);
            r.detail = fmt::format("error: {}", e.what());
            out.push_back(std::move(r));
        }
    };
    guarded(1, "blind recovery", [&] { return blind_recovery(o, progress); });
    guarded(2, "observations", [&] { return observation_suite(o, progress); });
    guarded(3, "regular refresh", [&] { return refresh_period(progress); });
    guarded(4, "evasion", [&] { return evasion(o, progress); });
    guarded(5, "sweep shape", [&] { return sweep_shape(o, progress); });
    guarded(6, "scout soundness", [&] { return scout_soundness(o, progress); });
    guarded(7, "ecc", [&] { return ecc(progress); });
    guarded(8, "determinism and budget", [&] { return determinism_and_budget(o, progress); });
    return out;
}

}  // namespace utrr
