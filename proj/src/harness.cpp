#include "utrr/harness.hpp"

#include "utrr/acceptance.hpp"
#include "utrr/analyzer.hpp"
#include "utrr/ecc.hpp"
#include "utrr/row_scout.hpp"
#include "utrr/test_bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

namespace utrr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::pair<Verb, std::string_view> kVerbs[] = {
    {Verb::device, "device"}, {Verb::scout, "scout"},           {Verb::analyze, "analyze"},
    {Verb::reveng, "reveng"}, {Verb::attack, "attack"},         {Verb::ecc_report, "ecc-report"},
    {Verb::acceptance, "acceptance"},
};

}  // namespace

std::string_view to_string(Verb verb) {
    for (auto [v, name] : kVerbs)
        if (v == verb) return name;
    return "?";
}

Verb parse_verb(std::string_view text) {
    for (auto [v, name] : kVerbs)
        if (name == text) return v;
    fail(ErrorKind::invalid_config, fmt::format("unknown verb '{}'", text));
}

json to_json(const RunManifest& m) {
    json doc = {{"verb", to_string(m.verb)}, {"seed", m.seed}, {"scale", to_string(m.scale)}, {"bank", m.bank}};
    if (m.config_path.empty()) doc["preset"] = m.preset;
    else doc["config"] = fs::path(m.config_path).filename().string();
    if (!m.catalog_path.empty()) doc["catalog"] = fs::path(m.catalog_path).filename().string();
    switch (m.verb) {
        case Verb::scout: doc["layout"] = m.layout; doc["groups"] = m.groups; break;
        case Verb::analyze:
            doc["aggressor_hammers"] = m.aggressor_hammers;
            doc["iterations"] = m.iterations;
            break;
        case Verb::attack:
        case Verb::ecc_report:
            doc["family"] = m.family.empty() ? "custom" : m.family;
            if (m.knob) doc["knob"] = *m.knob;
            doc["victims"] = m.victims;
            doc["duration_refs"] = m.duration_refs;
            if (!m.sweep.empty()) doc["sweep"] = m.sweep;
            if (m.scan) doc["scan_stride"] = m.scan_stride;
            if (!m.report_path.empty()) doc["report"] = fs::path(m.report_path).filename().string();
            break;
        case Verb::acceptance: doc["quick"] = m.quick; break;
        default: break;
    }
    return doc;
}

DeviceConfig build_device_config(const RunManifest& m) {
    if (!m.config_path.empty()) {
        std::ifstream in(m.config_path);
        if (!in) fail(ErrorKind::config_parse, fmt::format("cannot open {}", m.config_path));
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            fail(ErrorKind::config_parse, fmt::format("{}: {}", m.config_path, e.what()));
        }
        DeviceConfig config = config_from_json(doc);
        config.seed = m.seed;
        return config;
    }
    if (!m.catalog_path.empty()) return PresetCatalog::from_file(m.catalog_path).device(m.preset, m.scale, m.seed);
    return PresetCatalog::builtin().device(m.preset, m.scale, m.seed);
}

CustomChoice custom_choice(const InferredTrrProfile& p, const TimingParams& timing, std::uint32_t banks) {
    const std::uint64_t budget = timing.max_hammers_per_interval();
    const std::uint32_t k = p.trr_to_ref_ratio.value_or(1);
    const std::uint64_t slots = k * budget;
    CustomChoice c;
    c.trr_refs = k;
    switch (p.detection_kind) {
        case DetectionKind::counter:
            c.family = PatternFamily::counter_evict;
            c.knob = 22;
            break;
        case DetectionKind::sampling: {
            c.family = PatternFamily::sampler_flood;
            // the last sample must land on a dummy: end each period with a guarantee's worth of dummy ACTs
            const std::uint64_t guarantee = p.sampling_guarantee.value_or(2048);
            const std::uint64_t lanes = p.per_bank_scope.value_or(false) ? 1 : std::min<std::uint32_t>(4, banks);
            const std::uint64_t rounds = (guarantee + lanes - 1) / lanes;
            c.knob = rounds + 2 <= slots ? (slots - rounds) / 2 : slots / 4;
            break;
        }
        case DetectionKind::window: {
            c.family = PatternFamily::window_preload;
            const std::uint64_t window = p.window_size.value_or(2048);
            // a full-window preload when it fits; otherwise enough early dummies (32 x ~8) to outrank the aggressors
            c.knob = window < slots ? window : 252;
            break;
        }
        default:
            c.family = PatternFamily::plain_double_sided;
            c.knob = 0;
            c.trr_refs = 1;
    }
    return c;
}

InferredTrrProfile profile_from_truth(const TrrProfileGroundTruth& t) {
    InferredTrrProfile p;
    switch (t.kind) {
        case TrrKind::none: p.detection_kind = DetectionKind::none; return p;
        case TrrKind::counter: p.detection_kind = DetectionKind::counter; break;
        case TrrKind::sampling: p.detection_kind = DetectionKind::sampling; break;
        case TrrKind::window: p.detection_kind = DetectionKind::window; break;
    }
    p.trr_to_ref_ratio = t.trr_to_ref_ratio;
    p.neighbor_span = t.span;
    p.tracker_capacity = t.capacity;
    p.per_bank_scope = t.per_bank;
    p.window_size = t.window_size;
    p.sampling_guarantee = t.sampling_guarantee;
    p.regular_refresh_period_refs = t.regular_refresh_period_refs;
    return p;
}

json to_json(const TrrProfileGroundTruth& t) {
    json doc = {{"kind", to_string(t.kind)},
                {"label", t.label},
                {"trr_to_ref_ratio", t.trr_to_ref_ratio},
                {"neighbor_span", t.span.label()},
                {"per_bank", t.per_bank},
                {"regular_refresh_period_refs", t.regular_refresh_period_refs},
                {"rows_per_ref", t.rows_per_ref}};
    doc["capacity"] = t.capacity ? json(*t.capacity) : json(nullptr);
    doc["window_size"] = t.window_size ? json(*t.window_size) : json(nullptr);
    doc["sampling_guarantee"] = t.sampling_guarantee ? json(*t.sampling_guarantee) : json(nullptr);
    return doc;
}

namespace {

struct Sink {
    fs::path dir;
    std::string verb;
    std::vector<std::string> lines;
    std::string summary;
    std::map<std::string, std::string> csv;

    void record(const std::string& kind, json doc) {
        doc["record"] = kind;
        lines.push_back(doc.dump());
    }
    void say(const std::string& line) { summary += line + "\n"; }

    void flush() const {
        fs::create_directories(dir);
        std::ofstream jsonl(dir / (verb + ".jsonl"), std::ios::binary);
        for (const std::string& l : lines) jsonl << l << '\n';
        std::ofstream(dir / "summary.txt", std::ios::binary) << summary;
        for (const auto& [name, text] : csv) std::ofstream(dir / name, std::ios::binary) << text;
    }
};

json group_json(const RowGroup& g) {
    return {{"bank", g.bank},
            {"anchor", g.anchor},
            {"rows", g.rows},
            {"layout", g.layout},
            {"retention_ms", std::chrono::duration_cast<std::chrono::milliseconds>(g.retention).count()}};
}

int verb_device(const RunManifest& m, Sink& out) {
    const DramDevice device(build_device_config(m));
    const TrrProfileGroundTruth truth = device.ground_truth();
    out.record("device", {{"config", config_to_json(device.config())}});
    out.record("ground_truth", to_json(truth));
    out.say(fmt::format("device {}: {} banks x {} rows, TRR {} (1 in {} REFs, span {})", m.preset,
                        device.config().banks, device.config().rows_per_bank, truth.label, truth.trr_to_ref_ratio,
                        truth.span.label()));
    return exit_ok;
}

ScaleProfile scale_profile(const RunManifest& m) {
    if (m.catalog_path.empty()) return PresetCatalog::builtin().scale(m.scale);
    return PresetCatalog::from_file(m.catalog_path).scale(m.scale);
}

ProfilingConfig scout_config(const RunManifest& m, std::string layout, std::uint32_t groups) {
    ProfilingConfig p;
    p.bank = m.bank;
    p.layout = std::move(layout);
    p.groups_needed = groups;
    p.consistency_checks = scale_profile(m).consistency_checks;
    return p;
}

int verb_scout(const RunManifest& m, Sink& out) {
    DramDevice device(build_device_config(m));
    const auto groups = find_row_groups(device, scout_config(m, m.layout, m.groups));
    for (const RowGroup& g : groups) out.record("row_group", group_json(g));
    out.say(fmt::format("scout {}: {} '{}' groups in bank {}", m.preset, groups.size(), m.layout, m.bank));
    for (const RowGroup& g : groups)
        out.say(fmt::format("  anchor {} retention {} ms", g.anchor,
                            std::chrono::duration_cast<std::chrono::milliseconds>(g.retention).count()));
    return exit_ok;
}

int verb_analyze(const RunManifest& m, Sink& out) {
    DramDevice device(build_device_config(m));
    const RowGroup group = find_row_groups(device, scout_config(m, "R-R", 1)).front();
    out.record("row_group", group_json(group));
    ExperimentConfig e;
    e.groups = {group};
    e.aggressors = {{group.anchor + 1, m.aggressor_hammers}};
    std::uint32_t with_trr = 0;
    for (std::uint32_t it = 1; it <= m.iterations; ++it) {
        const ExperimentResult r = run_experiment(device, e);
        json probes = json::array();
        for (const ProbeVerdict& v : r.probes)
            probes.push_back({{"row", v.row},
                              {"bit_flips", v.bit_flips},
                              {"refreshed", v.refreshed},
                              {"attribution", to_string(v.attribution)}});
        out.record("experiment", {{"iteration", it}, {"aggressor", group.anchor + 1}, {"probes", probes},
                                  {"trr", r.any_trr()}});
        if (r.any_trr()) ++with_trr;
    }
    out.say(fmt::format("analyze {}: aggressor {} x{}; TRR refresh seen in {} of {} iterations", m.preset,
                        group.anchor + 1, m.aggressor_hammers, with_trr, m.iterations));
    return exit_ok;
}

int verb_reveng(const RunManifest& m, Sink& out) {
    DramDevice device(build_device_config(m));
    TestBench bench(device);
    RevengOptions options = RevengOptions::for_scale(scale_profile(m));
    options.bank = m.bank;
    options.second_bank = m.bank + 1 < device.config().banks ? m.bank + 1 : 0;
    options.seed = m.seed;
    RevengSession session(bench, options);
    const InferredTrrProfile profile = session.full_profile();
    out.record("profile", to_json(profile));
    for (const Evidence& e : session.evidence())
        out.record("evidence", {{"test", e.test}, {"outcome", e.outcome}, {"detail", e.detail}});
    const json doc = to_json(profile);
    out.say(fmt::format("reveng {} (seed {}):", m.preset, m.seed));
    for (auto it = doc.begin(); it != doc.end(); ++it) out.say(fmt::format("  {}: {}", it.key(), it.value().dump()));
    return profile.detection_kind == DetectionKind::unknown ? exit_inconclusive : exit_ok;
}

std::vector<std::uint32_t> default_victims(const DeviceConfig& config) {
    std::vector<std::uint32_t> v;
    const std::uint32_t rows = config.rows_per_bank;
    // even victims: paired parts only flip in even rows
    for (std::uint32_t i = 1; i <= 8; ++i) v.push_back(rows * i / 9 & ~1U);
    return v;
}

struct AttackSetup {
    PatternFamily family;
    std::uint64_t knob;
    std::uint32_t trr_refs;
    std::vector<std::uint32_t> victims;
    std::uint64_t duration;
};

AttackSetup attack_setup(const RunManifest& m, const DramDevice& device) {
    const CustomChoice custom =
        custom_choice(profile_from_truth(device.ground_truth()), device.config().timing, device.config().banks);
    AttackSetup s;
    s.family = m.family.empty() || m.family == "custom" ? custom.family : parse_family(m.family);
    s.knob = m.knob ? *m.knob : (s.family == custom.family ? custom.knob : 0);
    s.trr_refs = custom.trr_refs;
    s.victims = m.victims.empty() ? default_victims(device.config()) : m.victims;
    s.duration = m.duration_refs ? m.duration_refs : 2 * static_cast<std::uint64_t>(device.refresh_period_refs());
    return s;
}

std::vector<BitFlipReport> run_attacks(const RunManifest& m, const DramDevice& base, const AttackSetup& s, Sink& out) {
    std::vector<BitFlipReport> reports;
    for (std::uint32_t v : s.victims) {
        DramDevice device = base;
        const PatternSite site = s.family == PatternFamily::plain_single_sided
                                     ? PatternSite::single_sided(device.config(), m.bank, v)
                                     : PatternSite::double_sided(device.config(), m.bank, v);
        BitFlipReport r = execute(device, make_pattern(s.family, site, s.knob, s.trr_refs), s.duration);
        out.record("attack", {{"victim", v}, {"victim_flips", r.flips_in(v)}, {"report", to_json(r)}});
        reports.push_back(std::move(r));
    }
    return reports;
}

int verb_attack(const RunManifest& m, Sink& out) {
    const DramDevice base(build_device_config(m));
    const AttackSetup s = attack_setup(m, base);
    out.say(fmt::format("attack {}: {} knob {} over {} REFs", m.preset, to_string(s.family), s.knob, s.duration));

    if (!m.sweep.empty()) {
        SweepOptions o;
        o.bank = m.bank;
        o.victims = s.victims;
        o.duration_refs = s.duration;
        o.trr_refs = s.trr_refs;
        const auto curve = sweep_hammers(base, s.family, m.sweep, o);
        for (const SweepPoint& p : curve)
            out.record("sweep_point", {{"knob", p.knob}, {"victim_flips", p.victim_flips}, {"median", p.median},
                                       {"q1", p.q1}, {"q3", p.q3}, {"max", p.max}});
        out.csv["sweep.csv"] = sweep_csv(curve);
        for (const SweepPoint& p : curve) out.say(fmt::format("  {:>5}: median {}", p.knob, p.median));
        return exit_ok;
    }
    if (m.scan) {
        ScanOptions o;
        o.bank = m.bank;
        o.stride = std::max<std::uint32_t>(1, m.scan_stride);
        o.duration_refs = s.duration;
        o.trr_refs = s.trr_refs;
        const ScanResult r = vulnerability_scan(base, s.family, s.knob, o);
        out.record("scan", {{"positions", r.positions}, {"vulnerable", r.vulnerable}, {"percent", r.percent()},
                            {"flipped_rows", r.flipped_rows}});
        std::string csv = "row,flipped\n";
        std::uint32_t last = o.last ? o.last : base.config().rows_per_bank - 3;
        for (std::uint32_t v = o.first; v <= last; v += o.stride)
            csv += fmt::format("{},{}\n", v,
                               std::binary_search(r.flipped_rows.begin(), r.flipped_rows.end(), v) ? 1 : 0);
        out.csv["scan.csv"] = csv;
        out.say(fmt::format("  {} of {} positions flipped ({:.1f}%)", r.vulnerable, r.positions, r.percent()));
        return exit_ok;
    }
    std::uint32_t hit = 0;
    for (const BitFlipReport& r : run_attacks(m, base, s, out)) hit += r.total > 0;
    out.say(fmt::format("  {} of {} runs produced flips", hit, s.victims.size()));
    return exit_ok;
}

BitFlipReport report_from_json(const json& doc) {
    BitFlipReport r;
    r.family = parse_family(doc.at("family").get<std::string>());
    r.params = doc.value("params", json::object());
    r.bank = doc.value("bank", 0U);
    r.duration_refs = doc.value("duration_refs", std::uint64_t{0});
    for (const json& row : doc.at("rows")) {
        RowFlips f{row.at("row").get<std::uint32_t>(), row.at("bits").get<std::vector<std::uint32_t>>()};
        std::map<std::uint32_t, std::uint32_t> per_chunk;
        for (std::uint32_t b : f.bits) ++per_chunk[b / 64];
        for (auto [chunk, n] : per_chunk) r.chunks.push_back({f.row, chunk, n});
        r.total += f.bits.size();
        r.rows.push_back(std::move(f));
    }
    return r;
}

int verb_ecc(const RunManifest& m, Sink& out) {
    std::vector<BitFlipReport> reports;
    std::uint32_t pins = 8;
    if (!m.report_path.empty()) {
        std::ifstream in(m.report_path);
        if (!in) fail(ErrorKind::config_parse, fmt::format("cannot open {}", m.report_path));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json doc;
            try {
                doc = json::parse(line);
            } catch (const json::exception& e) {
                fail(ErrorKind::config_parse, fmt::format("{}: {}", m.report_path, e.what()));
            }
            if (doc.value("record", "") == "attack") reports.push_back(report_from_json(doc.at("report")));
        }
        if (m.config_path.empty() && m.catalog_path.empty()) pins = build_device_config(m).pins;
    } else {
        const DramDevice base(build_device_config(m));
        pins = base.config().pins;
        Sink scratch;
        reports = run_attacks(m, base, attack_setup(m, base), scratch);
    }
    const CodewordSpec specs[] = {CodewordSpec::secded(), CodewordSpec::symbol(pins, 1, 2, pins),
                                  CodewordSpec::reed_solomon_code(8, 7, pins)};
    const EccImpact impact = ecc_impact_report(reports, specs);
    json doc = to_json(impact);
    doc["runs"] = reports.size();
    out.record("ecc_impact", doc);
    out.csv["ecc_histogram.csv"] = histogram_csv(impact.histogram);
    out.say(fmt::format("ecc-report {}: {} runs, worst chunk needs {} RS parity symbols", m.preset, reports.size(),
                        impact.rs_parity_for_worst_chunk));
    for (const EccTally& t : impact.tallies)
        out.say(fmt::format("  {}: corrected {} detected {} silent {}", t.code, t.corrected, t.detected, t.silent));
    return exit_ok;
}

int verb_acceptance(const RunManifest& m, Sink& out, std::ostream& log) {
    AcceptanceOptions o;
    o.observations_binary = m.observations_binary;
    o.quick = m.quick;
    o.scratch_dir = (out.dir / "scratch").string();
    const auto results = run_acceptance(o, log);
    bool all = true;
    for (const CriterionResult& r : results) {
        out.record("criterion", {{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"detail", r.detail},
                                 {"metrics", r.metrics}});
        out.say(fmt::format("{} {}: {} ({})", r.pass ? "PASS" : "FAIL", r.id, r.title, r.detail));
        all = all && r.pass;
    }
    fs::remove_all(o.scratch_dir);
    return all ? exit_ok : exit_failed;
}

int exit_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::inconclusive:
        case ErrorKind::insufficient_groups:
        case ErrorKind::no_trr_detected: return exit_inconclusive;
        default: return exit_error;
    }
}

}  // namespace

int run(const RunManifest& m, std::ostream& log) {
    Sink out;
    out.dir = m.output_dir;
    out.verb = std::string(to_string(m.verb));
    out.record("manifest", to_json(m));
    int status = exit_ok;
    try {
        switch (m.verb) {
            case Verb::device: status = verb_device(m, out); break;
            case Verb::scout: status = verb_scout(m, out); break;
            case Verb::analyze: status = verb_analyze(m, out); break;
            case Verb::reveng: status = verb_reveng(m, out); break;
            case Verb::attack: status = verb_attack(m, out); break;
            case Verb::ecc_report: status = verb_ecc(m, out); break;
            case Verb::acceptance: status = verb_acceptance(m, out, log); break;
        }
    } catch (const Error& e) {
        out.record("error", {{"kind", to_string(e.kind())}, {"message", e.what()}});
        out.say(fmt::format("error ({}): {}", to_string(e.kind()), e.what()));
        status = exit_for(e.kind());
    }
    out.flush();
    log << out.summary;
    return status;
}

}  // namespace utrr
