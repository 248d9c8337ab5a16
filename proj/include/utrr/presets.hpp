#pragma once

#include "utrr/config.hpp"

#include <json.hpp>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace utrr {

enum class Scale { paper, desk };

Scale parse_scale(std::string_view text);
std::string_view to_string(Scale scale);

struct ScaleProfile {
    Scale scale = Scale::desk;
    std::uint32_t rows_per_bank = 2048;
    std::uint32_t consistency_checks = 30;
};

// Round-trips DeviceConfig through nested JSON objects. Durations are integer nanoseconds.
nlohmann::json config_to_json(const DeviceConfig& config);
DeviceConfig config_from_json(const nlohmann::json& doc);

struct ModuleEntry {
    std::string name;
    std::string variant;
    std::uint32_t density_gbit = 8;
    std::uint32_t banks = 16;
    std::uint32_t pins = 8;
    double hc_first = 0;
    double vulnerable_fraction = 1.0;
};

// Table-derived module catalog (A0..C14) plus the eight TRR variants.
class PresetCatalog {
public:
    static const PresetCatalog& builtin();
    static PresetCatalog from_json(const nlohmann::json& doc);
    static PresetCatalog from_file(const std::string& path);

    std::vector<std::string> module_names() const;
    std::vector<std::string> variant_names() const;
    bool contains(std::string_view name) const;
    const ModuleEntry& module(std::string_view name) const;
    const std::string& representative(std::string_view variant) const;
    ScaleProfile scale(Scale scale) const;

    // `name` is a module (e.g. "B9") or a variant (e.g. "B_TRR2", resolved to its representative module).
    DeviceConfig device(std::string_view name, Scale scale, std::uint64_t seed) const;

private:
    nlohmann::json variants_;
    std::vector<ModuleEntry> modules_;
    std::map<std::string, std::string, std::less<>> representatives_;
    std::map<Scale, ScaleProfile> scales_;
    double threshold_spread_ = 1.6;
};

}  // namespace utrr
