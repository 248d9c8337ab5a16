#pragma once

#include "utrr/attack.hpp"
#include "utrr/presets.hpp"
#include "utrr/reveng.hpp"

#include <json.hpp>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace utrr {

enum class Verb { device, scout, analyze, reveng, attack, ecc_report, acceptance };
std::string_view to_string(Verb verb);
Verb parse_verb(std::string_view text);  // throws invalid_config

enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_inconclusive = 2, exit_failed = 3, exit_usage = 64 };

struct RunManifest {
    Verb verb = Verb::device;
    std::string preset = "A_TRR1";
    std::string config_path;   // device config JSON; replaces the preset
    std::string catalog_path;  // preset catalog JSON; the shipped one when empty
    std::uint64_t seed = 1;
    std::string output_dir = "utrr-out";
    Scale scale = Scale::desk;

    std::uint32_t bank = 0;
    // scout
    std::string layout = "R-R";
    std::uint32_t groups = 4;
    // analyze
    std::uint64_t aggressor_hammers = 5000;
    std::uint32_t iterations = 18;
    // attack / ecc-report
    std::string family;  // empty: the custom pattern for the device's TRR
    std::optional<std::uint64_t> knob;
    std::vector<std::uint32_t> victims;  // physical; empty: a spread over the bank
    std::uint64_t duration_refs = 0;     // 0: two regular refresh periods
    std::vector<std::uint64_t> sweep;    // knob values; non-empty switches attack to a sweep
    bool scan = false;
    std::uint32_t scan_stride = 16;
    std::string report_path;  // ecc-report: an attack.jsonl to read instead of running one
    // acceptance
    std::string observations_binary;
    bool quick = false;
};

nlohmann::json to_json(const RunManifest& manifest);

// The name used for an output dir override.
inline constexpr const char* kOutputDirEnv = "UTRR_OUTPUT_DIR";

DeviceConfig build_device_config(const RunManifest& manifest);

struct CustomChoice {
    PatternFamily family = PatternFamily::plain_double_sided;
    std::uint64_t knob = 0;
    std::uint32_t trr_refs = 1;
};

// The TRR-bypass pattern for a reverse-engineered profile.
CustomChoice custom_choice(const InferredTrrProfile& profile, const TimingParams& timing, std::uint32_t banks);

// The profile a complete reverse-engineering run reports for this device.
InferredTrrProfile profile_from_truth(const TrrProfileGroundTruth& truth);

nlohmann::json to_json(const TrrProfileGroundTruth& truth);

// Runs one verb and writes <output_dir>/<verb>.jsonl, optional CSV and summary.txt.
// Progress goes to `log`; the files depend only on the manifest and the catalog.
int run(const RunManifest& manifest, std::ostream& log);

}  // namespace utrr
