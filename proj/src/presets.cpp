#include "utrr/presets.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>

namespace utrr {

extern const char* const builtin_catalog_text;

using nlohmann::json;

Scale parse_scale(std::string_view text) {
    if (text == "paper") return Scale::paper;
    if (text == "desk") return Scale::desk;
    fail(ErrorKind::config_parse, fmt::format("scale must be paper or desk, got '{}'", text));
}

std::string_view to_string(Scale scale) { return scale == Scale::paper ? "paper" : "desk"; }

namespace {

std::string_view scheme_name(MappingScheme scheme) {
    switch (scheme) {
    case MappingScheme::identity: return "identity";
    case MappingScheme::xor_scramble: return "xor_scramble";
    case MappingScheme::block_reverse: return "block_reverse";
    }
    return "identity";
}

json span_to_json(const NeighborSpan& span) {
    if (span.pair) return "pair";
    return span.offsets;
}

// Reads doc[key] into out when present; type errors name the dotted path.
template <typename T>
void read(const json& doc, std::string_view path, const char* key, T& out) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::config_parse, fmt::format("{}.{} has the wrong type", path, key));
    }
}

void read_ns(const json& doc, std::string_view path, const char* key, Nanos& out) {
    std::int64_t ns = out.count();
    read(doc, path, key, ns);
    out = Nanos(ns);
}

const json& section(const json& doc, const char* key) {
    static const json empty = json::object();
    if (!doc.contains(key)) return empty;
    if (!doc.at(key).is_object()) fail(ErrorKind::config_parse, fmt::format("{} must be an object", key));
    return doc.at(key);
}

NeighborSpan span_from_json(const json& value) {
    if (value.is_string()) {
        if (value.get<std::string>() != "pair") fail(ErrorKind::config_parse, "trr.span string must be \"pair\"");
        return NeighborSpan::pair_partner();
    }
    if (!value.is_array()) fail(ErrorKind::config_parse, "trr.span must be \"pair\" or a list of offsets");
    NeighborSpan span;
    try {
        span.offsets = value.get<std::vector<int>>();
    } catch (const json::exception&) {
        fail(ErrorKind::config_parse, "trr.span offsets must be integers");
    }
    return span;
}

template <typename E>
E enum_from(const json& doc, std::string_view path, const char* key, E fallback,
            std::initializer_list<std::pair<std::string_view, E>> names) {
    if (!doc.contains(key)) return fallback;
    std::string text;
    read(doc, path, key, text);
    for (const auto& [name, value] : names)
        if (name == text) return value;
    fail(ErrorKind::config_parse, fmt::format("{}.{}: unknown value '{}'", path, key, text));
}

TrrMechanismConfig trr_from_json(const json& doc) {
    TrrMechanismConfig trr;
    trr.kind = enum_from(doc, "trr", "kind", TrrKind::none,
                         {{"none", TrrKind::none},
                          {"counter", TrrKind::counter},
                          {"sampling", TrrKind::sampling},
                          {"window", TrrKind::window}});
    read(doc, "trr", "label", trr.label);
    read(doc, "trr", "trr_ref_period", trr.trr_ref_period);
    if (doc.contains("span")) trr.span = span_from_json(doc.at("span"));

    const json& c = section(doc, "counter");
    read(c, "trr.counter", "table_size", trr.counter.table_size);
    read(c, "trr.counter", "per_bank", trr.counter.per_bank);
    trr.counter.evict = enum_from(c, "trr.counter", "evict", trr.counter.evict,
                                  {{"min_counter", EvictPolicy::min_counter}, {"oldest", EvictPolicy::oldest}});
    trr.counter.insert = enum_from(c, "trr.counter", "insert", trr.counter.insert,
                                   {{"insert_one", InsertPolicy::insert_one}, {"inherit_min", InsertPolicy::inherit_min}});
    read(c, "trr.counter", "reset_on_detect", trr.counter.reset_on_detect);
    read(c, "trr.counter", "trefb_enabled", trr.counter.trefb_enabled);
    read(c, "trr.counter", "trefb_resets", trr.counter.trefb_resets);
    read(c, "trr.counter", "clear_period_refs", trr.counter.clear_period_refs);

    const json& s = section(doc, "sampling");
    read(s, "trr.sampling", "capacity", trr.sampling.capacity);
    read(s, "trr.sampling", "shared_across_banks", trr.sampling.shared_across_banks);
    read(s, "trr.sampling", "guarantee_window", trr.sampling.guarantee_window);
    read(s, "trr.sampling", "clear_on_trr", trr.sampling.clear_on_trr);

    const json& w = section(doc, "window");
    read(w, "trr.window", "window_size", trr.window.window_size);
    read(w, "trr.window", "defer_when_empty", trr.window.defer_when_empty);
    trr.window.bias = enum_from(w, "trr.window", "bias", trr.window.bias,
                                {{"linear_index", EarlyBias::linear_index}, {"first_rank", EarlyBias::first_rank}});
    read(w, "trr.window", "rank_decay", trr.window.rank_decay);
    read(w, "trr.window", "candidate_min_acts", trr.window.candidate_min_acts);
    return trr;
}

json trr_to_json(const TrrMechanismConfig& trr) {
    return json{
        {"kind", to_string(trr.kind)},
        {"label", trr.label},
        {"trr_ref_period", trr.trr_ref_period},
        {"span", span_to_json(trr.span)},
        {"counter",
         {{"table_size", trr.counter.table_size},
          {"per_bank", trr.counter.per_bank},
          {"evict", trr.counter.evict == EvictPolicy::min_counter ? "min_counter" : "oldest"},
          {"insert", trr.counter.insert == InsertPolicy::insert_one ? "insert_one" : "inherit_min"},
          {"reset_on_detect", trr.counter.reset_on_detect},
          {"trefb_enabled", trr.counter.trefb_enabled},
          {"trefb_resets", trr.counter.trefb_resets},
          {"clear_period_refs", trr.counter.clear_period_refs}}},
        {"sampling",
         {{"capacity", trr.sampling.capacity},
          {"shared_across_banks", trr.sampling.shared_across_banks},
          {"guarantee_window", trr.sampling.guarantee_window},
          {"clear_on_trr", trr.sampling.clear_on_trr}}},
        {"window",
         {{"window_size", trr.window.window_size},
          {"defer_when_empty", trr.window.defer_when_empty},
          {"bias", trr.window.bias == EarlyBias::linear_index ? "linear_index" : "first_rank"},
          {"rank_decay", trr.window.rank_decay},
          {"candidate_min_acts", trr.window.candidate_min_acts}}},
    };
}

}  // namespace

json config_to_json(const DeviceConfig& config) {
    const auto& t = config.timing;
    const auto& r = config.retention;
    const auto& d = config.disturbance;
    json remapped = json::array();
    for (const auto& [logical, spare] : config.mapping.remapped) remapped.push_back({logical, spare});
    return json{
        {"name", config.name},
        {"banks", config.banks},
        {"rows_per_bank", config.rows_per_bank},
        {"row_bits", config.row_bits},
        {"pins", config.pins},
        {"seed", config.seed},
        {"timing",
         {{"t_act_to_pre_ns", t.t_act_to_pre.count()},
          {"t_pre_to_act_ns", t.t_pre_to_act.count()},
          {"t_ref_ns", t.t_ref.count()},
          {"t_faw_window_ns", t.t_faw_window.count()},
          {"max_acts_in_window", t.max_acts_in_window},
          {"ref_interval_ns", t.ref_interval.count()}}},
        {"retention",
         {{"base_retention_ns", r.base_retention.count()},
          {"weak_row_fraction", r.weak_row_fraction},
          {"weak_retention_min_ns", r.weak_retention_min.count()},
          {"weak_retention_max_ns", r.weak_retention_max.count()},
          {"weak_cells_min", r.weak_cells_min},
          {"weak_cells_max", r.weak_cells_max},
          {"vrt_row_fraction", r.vrt_row_fraction},
          {"vrt_toggle_period_ns", r.vrt_toggle_period.count()},
          {"retention_quantum_ns", r.retention_quantum.count()}}},
        {"disturbance",
         {{"hc_first", d.hc_first},
          {"threshold_spread", d.threshold_spread},
          {"distance2_factor", d.distance2_factor},
          {"single_sided_factor", d.single_sided_factor},
          {"paired_rows", d.paired_rows},
          {"vulnerable_row_fraction", d.vulnerable_row_fraction},
          {"vulnerable_cells_min", d.vulnerable_cells_min},
          {"vulnerable_cells_max", d.vulnerable_cells_max}}},
        {"mapping",
         {{"scheme", scheme_name(config.mapping.scheme)},
          {"xor_mask", config.mapping.xor_mask},
          {"block_size", config.mapping.block_size},
          {"spare_rows", config.mapping.spare_rows},
          {"remapped", remapped}}},
        {"regular_refresh",
         {{"rows_per_ref", config.regular_refresh.rows_per_ref},
          {"full_pass_period_refs", config.regular_refresh.full_pass_period_refs}}},
        {"trr", trr_to_json(config.trr)},
    };
}

DeviceConfig config_from_json(const json& doc) {
    if (!doc.is_object()) fail(ErrorKind::config_parse, "device config must be an object");
    DeviceConfig config;
    read(doc, "device", "name", config.name);
    read(doc, "device", "banks", config.banks);
    read(doc, "device", "rows_per_bank", config.rows_per_bank);
    read(doc, "device", "row_bits", config.row_bits);
    read(doc, "device", "pins", config.pins);
    read(doc, "device", "seed", config.seed);

    const json& t = section(doc, "timing");
    read_ns(t, "timing", "t_act_to_pre_ns", config.timing.t_act_to_pre);
    read_ns(t, "timing", "t_pre_to_act_ns", config.timing.t_pre_to_act);
    read_ns(t, "timing", "t_ref_ns", config.timing.t_ref);
    read_ns(t, "timing", "t_faw_window_ns", config.timing.t_faw_window);
    read(t, "timing", "max_acts_in_window", config.timing.max_acts_in_window);
    read_ns(t, "timing", "ref_interval_ns", config.timing.ref_interval);

    const json& r = section(doc, "retention");
    read_ns(r, "retention", "base_retention_ns", config.retention.base_retention);
    read(r, "retention", "weak_row_fraction", config.retention.weak_row_fraction);
    read_ns(r, "retention", "weak_retention_min_ns", config.retention.weak_retention_min);
    read_ns(r, "retention", "weak_retention_max_ns", config.retention.weak_retention_max);
    read(r, "retention", "weak_cells_min", config.retention.weak_cells_min);
    read(r, "retention", "weak_cells_max", config.retention.weak_cells_max);
    read(r, "retention", "vrt_row_fraction", config.retention.vrt_row_fraction);
    read_ns(r, "retention", "vrt_toggle_period_ns", config.retention.vrt_toggle_period);
    read_ns(r, "retention", "retention_quantum_ns", config.retention.retention_quantum);

    const json& d = section(doc, "disturbance");
    read(d, "disturbance", "hc_first", config.disturbance.hc_first);
    read(d, "disturbance", "threshold_spread", config.disturbance.threshold_spread);
    read(d, "disturbance", "distance2_factor", config.disturbance.distance2_factor);
    read(d, "disturbance", "single_sided_factor", config.disturbance.single_sided_factor);
    read(d, "disturbance", "paired_rows", config.disturbance.paired_rows);
    read(d, "disturbance", "vulnerable_row_fraction", config.disturbance.vulnerable_row_fraction);
    read(d, "disturbance", "vulnerable_cells_min", config.disturbance.vulnerable_cells_min);
    read(d, "disturbance", "vulnerable_cells_max", config.disturbance.vulnerable_cells_max);

    const json& m = section(doc, "mapping");
    config.mapping.scheme = enum_from(m, "mapping", "scheme", MappingScheme::identity,
                                      {{"identity", MappingScheme::identity},
                                       {"xor_scramble", MappingScheme::xor_scramble},
                                       {"block_reverse", MappingScheme::block_reverse}});
    read(m, "mapping", "xor_mask", config.mapping.xor_mask);
    read(m, "mapping", "block_size", config.mapping.block_size);
    read(m, "mapping", "spare_rows", config.mapping.spare_rows);
    read(m, "mapping", "remapped", config.mapping.remapped);

    const json& rr = section(doc, "regular_refresh");
    read(rr, "regular_refresh", "rows_per_ref", config.regular_refresh.rows_per_ref);
    read(rr, "regular_refresh", "full_pass_period_refs", config.regular_refresh.full_pass_period_refs);

    if (doc.contains("trr")) config.trr = trr_from_json(section(doc, "trr"));
    return config;
}

const PresetCatalog& PresetCatalog::builtin() {
    static const PresetCatalog catalog = from_json(json::parse(builtin_catalog_text));
    return catalog;
}

PresetCatalog PresetCatalog::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config_parse, fmt::format("cannot open catalog '{}'", path));
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config_parse, fmt::format("{}: {}", path, e.what()));
    }
}

PresetCatalog PresetCatalog::from_json(const json& doc) {
    PresetCatalog catalog;
    try {
        catalog.variants_ = doc.at("variants");
        for (const json& entry : doc.at("modules")) {
            const std::string first = entry.at("name").get<std::string>();
            const auto count = entry.value("count", 1U);
            const auto hc = entry.at("hc_first").get<std::vector<double>>();
            const auto vulnerable = entry.at("vulnerable").get<std::vector<double>>();
            // "A1" with count 5 expands to A1..A5; HC_first and vulnerability interpolate across the range.
            const auto digits = first.find_first_of("0123456789");
            const std::string prefix = first.substr(0, digits);
            const unsigned start = static_cast<unsigned>(std::stoul(first.substr(digits)));
            for (unsigned i = 0; i < count; ++i) {
                const double f = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
                ModuleEntry module;
                module.name = prefix + std::to_string(start + i);
                module.variant = entry.at("variant").get<std::string>();
                module.density_gbit = entry.at("density_gbit").get<std::uint32_t>();
                module.banks = entry.at("banks").get<std::uint32_t>();
                module.pins = entry.at("pins").get<std::uint32_t>();
                module.hc_first = std::round((hc.at(0) + f * (hc.at(1) - hc.at(0))) / 100.0) * 100.0;
                module.vulnerable_fraction = vulnerable.at(0) + f * (vulnerable.at(1) - vulnerable.at(0));
                if (!catalog.variants_.contains(module.variant))
                    fail(ErrorKind::config_parse, fmt::format("module {} names unknown variant {}", module.name, module.variant));
                catalog.modules_.push_back(std::move(module));
            }
        }
        catalog.threshold_spread_ = doc.value("threshold_spread", DisturbanceModelConfig{}.threshold_spread);
        for (const auto& [variant, module] : doc.at("representatives").items())
            catalog.representatives_[variant] = module.get<std::string>();
        for (const auto& [name, profile] : doc.at("scales").items()) {
            const Scale scale = parse_scale(name);
            catalog.scales_[scale] = ScaleProfile{scale, profile.at("rows_per_bank").get<std::uint32_t>(),
                                                  profile.at("consistency_checks").get<std::uint32_t>()};
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::config_parse, fmt::format("preset catalog: {}", e.what()));
    }
    return catalog;
}

std::vector<std::string> PresetCatalog::module_names() const {
    std::vector<std::string> names;
    for (const ModuleEntry& module : modules_) names.push_back(module.name);
    return names;
}

std::vector<std::string> PresetCatalog::variant_names() const {
    std::vector<std::string> names;
    for (const auto& [name, _] : variants_.items()) names.push_back(name);
    return names;
}

bool PresetCatalog::contains(std::string_view name) const {
    return representatives_.contains(name) ||
           std::any_of(modules_.begin(), modules_.end(), [&](const ModuleEntry& m) { return m.name == name; });
}

const ModuleEntry& PresetCatalog::module(std::string_view name) const {
    for (const ModuleEntry& module : modules_)
        if (module.name == name) return module;
    fail(ErrorKind::config_parse, fmt::format("unknown preset '{}'", name));
}

const std::string& PresetCatalog::representative(std::string_view variant) const {
    const auto it = representatives_.find(variant);
    if (it == representatives_.end()) fail(ErrorKind::config_parse, fmt::format("unknown TRR variant '{}'", variant));
    return it->second;
}

ScaleProfile PresetCatalog::scale(Scale scale) const {
    const auto it = scales_.find(scale);
    if (it == scales_.end()) fail(ErrorKind::config_parse, fmt::format("catalog has no '{}' scale", to_string(scale)));
    return it->second;
}

DeviceConfig PresetCatalog::device(std::string_view name, Scale scale_kind, std::uint64_t seed) const {
    const bool by_variant = representatives_.contains(name);
    const ModuleEntry& module = this->module(by_variant ? std::string_view(representative(name)) : name);
    const json& variant = variants_.at(module.variant);

    DeviceConfig config;
    config.name = std::string(name);
    config.banks = module.banks;
    config.pins = module.pins;
    config.rows_per_bank = scale(scale_kind).rows_per_bank;
    config.seed = seed;
    config.disturbance.hc_first = module.hc_first;
    config.disturbance.threshold_spread = threshold_spread_;
    config.disturbance.paired_rows = variant.value("paired_rows", false);
    // Paired devices only place vulnerable cells in even rows; keep the module's overall fraction.
    config.disturbance.vulnerable_row_fraction =
        config.disturbance.paired_rows ? std::min(1.0, 2.0 * module.vulnerable_fraction) : module.vulnerable_fraction;
    config.regular_refresh.full_pass_period_refs = variant.at("regular_period_refs").get<std::uint32_t>();
    config.trr = trr_from_json(variant);
    config.trr.label = module.variant;
    config.validate();
    return config;
}

}  // namespace utrr
