// Batch entry point: one verb per invocation, results under the output directory.
#include "utrr/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

#ifndef UTRR_OBSERVATIONS_BINARY
#define UTRR_OBSERVATIONS_BINARY ""
#endif

namespace {

std::vector<std::uint64_t> parse_sweep(const std::string& text) {
    // lo:hi:step or a comma list
    std::vector<std::uint64_t> out;
    if (text.find(':') != std::string::npos) {
        std::uint64_t lo = 0, hi = 0, step = 1;
        char c1 = 0, c2 = 0;
        std::istringstream in(text);
        in >> lo >> c1 >> hi >> c2 >> step;
        if (!in || c1 != ':' || c2 != ':' || step == 0) throw CLI::ValidationError("--sweep", "expected lo:hi:step");
        for (std::uint64_t k = lo; k <= hi; k += step) out.push_back(k);
        return out;
    }
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(std::stoull(item));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace utrr;
    CLI::App app{"DRAM TRR simulator, reverse-engineering pipeline and attack harness"};
    app.require_subcommand(1);

    RunManifest m;
    std::string scale = "desk", out_dir, sweep;
    m.observations_binary = UTRR_OBSERVATIONS_BINARY;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--preset", m.preset, "module (A0..C14) or TRR variant (A_TRR1..C_TRR3)");
        sub->add_option("--config", m.config_path, "device config JSON, instead of a preset");
        sub->add_option("--catalog", m.catalog_path, "preset catalog JSON (default: the shipped one)");
        sub->add_option("--seed", m.seed, "device seed");
        sub->add_option("--out", out_dir, std::string("output directory (env ") + kOutputDirEnv + ", default utrr-out)");
        sub->add_option("--scale", scale, "scale profile")->check(CLI::IsMember({"paper", "desk"}));
        sub->add_option("--bank", m.bank, "bank under test");
    };
    auto attack_flags = [&](CLI::App* sub) {
        sub->add_option("--family", m.family,
                        "counter_evict|sampler_flood|window_preload|plain_single_sided|plain_double_sided|custom");
        sub->add_option("--knob", m.knob, "aggressor hammers, or the preload for window_preload");
        sub->add_option("--victim", m.victims, "victim row (physical); repeatable");
        sub->add_option("--duration-refs", m.duration_refs, "REFs per run (default two refresh periods)");
    };

    struct Entry {
        Verb verb;
        CLI::App* sub;
    };
    std::vector<Entry> verbs;
    auto add = [&](Verb verb, const std::string& help) {
        CLI::App* sub = app.add_subcommand(std::string(to_string(verb)), help);
        common(sub);
        verbs.push_back({verb, sub});
        return sub;
    };
    add(Verb::device, "describe the device and its TRR ground truth");
    CLI::App* scout = add(Verb::scout, "find retention-profiled row groups");
    scout->add_option("--layout", m.layout, "layout such as R-R or RR-RR");
    scout->add_option("--groups", m.groups, "groups to find");
    CLI::App* analyze = add(Verb::analyze, "repeat a single-aggressor TRR experiment");
    analyze->add_option("--hammers", m.aggressor_hammers, "aggressor hammers per iteration");
    analyze->add_option("--iterations", m.iterations, "iterations");
    add(Verb::reveng, "blind TRR profile inference");
    CLI::App* attack = add(Verb::attack, "run an access pattern, a hammer sweep or a vulnerability scan");
    attack_flags(attack);
    attack->add_option("--sweep", sweep, "knob values: lo:hi:step or a comma list");
    attack->add_flag("--scan", m.scan, "slide the victim across the bank");
    attack->add_option("--stride", m.scan_stride, "scan stride in rows");
    CLI::App* ecc = add(Verb::ecc_report, "classify flipped chunks against SECDED, Chipkill and RS codes");
    attack_flags(ecc);
    ecc->add_option("--report", m.report_path, "attack.jsonl to classify instead of running attacks");
    CLI::App* acceptance = add(Verb::acceptance, "criteria 1-8 with PASS/FAIL per criterion");
    acceptance->add_flag("--quick", m.quick, "fewer seeds and victims");
    acceptance->add_option("--observations", m.observations_binary, "observation test binary");

    try {
        app.parse(argc, argv);
        if (!sweep.empty()) m.sweep = parse_sweep(sweep);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return exit_usage;
    }

    for (const Entry& e : verbs)
        if (e.sub->parsed()) m.verb = e.verb;
    try {
        m.scale = parse_scale(scale);
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return exit_usage;
    }
    if (!out_dir.empty()) m.output_dir = out_dir;
    else if (const char* env = std::getenv(kOutputDirEnv); env && *env) m.output_dir = env;

    return run(m, std::cout);
}
