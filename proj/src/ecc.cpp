#include "utrr/ecc.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <set>

namespace utrr {

std::string_view to_string(EccOutcome outcome) {
    switch (outcome) {
        case EccOutcome::corrected: return "corrected";
        case EccOutcome::detected_uncorrectable: return "detected_uncorrectable";
        case EccOutcome::silent_or_miscorrected: return "silent_or_miscorrected";
    }
    return "?";
}

CodewordSpec CodewordSpec::secded() { return {}; }

CodewordSpec CodewordSpec::symbol(std::uint32_t symbol_bits, std::uint32_t correct_t, std::uint32_t detect_d,
                                  std::uint32_t pins) {
    CodewordSpec s;
    s.kind = CodeKind::symbol_code;
    s.symbol_bits = symbol_bits;
    s.correct_t = correct_t;
    s.detect_d = detect_d;
    s.pins = pins;
    s.validate();
    return s;
}

CodewordSpec CodewordSpec::reed_solomon_code(std::uint32_t symbol_bits, std::uint32_t parity_symbols,
                                             std::uint32_t pins) {
    CodewordSpec s;
    s.kind = CodeKind::reed_solomon;
    s.symbol_bits = symbol_bits;
    s.parity_symbols = parity_symbols;
    s.pins = pins;
    s.validate();
    return s;
}

std::string CodewordSpec::name() const {
    switch (kind) {
        case CodeKind::secded_72_64: return "secded_72_64";
        case CodeKind::symbol_code: return fmt::format("symbol_{}b_t{}_d{}_x{}", symbol_bits, correct_t, detect_d, pins);
        case CodeKind::reed_solomon: return fmt::format("rs_{}b_p{}_x{}", symbol_bits, parity_symbols, pins);
    }
    return "?";
}

std::uint32_t CodewordSpec::codeword_bits() const { return kind == CodeKind::secded_72_64 ? 72 : 64; }

void CodewordSpec::validate() const {
    if (kind == CodeKind::secded_72_64) return;
    if (symbol_bits == 0 || 64 % symbol_bits != 0)
        fail(ErrorKind::invalid_config, fmt::format("symbol_bits {} must divide 64", symbol_bits));
    if (pins == 0 || 64 % pins != 0) fail(ErrorKind::invalid_config, fmt::format("pins {} must divide 64", pins));
    if (kind == CodeKind::symbol_code && correct_t > detect_d)
        fail(ErrorKind::invalid_config, "symbol code: correct_t > detect_d");
}

namespace secded {

namespace {

constexpr bool power_of_two(std::uint32_t x) { return x && !(x & (x - 1)); }

constexpr std::array<std::uint8_t, 64> make_positions() {
    std::array<std::uint8_t, 64> out{};
    std::uint32_t next = 0;
    for (std::uint32_t p = 1; p < 72; ++p)
        if (!power_of_two(p)) out[next++] = static_cast<std::uint8_t>(p);
    return out;
}

constexpr auto kPositions = make_positions();

}  // namespace

std::uint32_t data_position(std::uint32_t data_bit) { return kPositions.at(data_bit); }

Codeword encode(std::uint64_t data) {
    Codeword w;
    std::uint32_t syndrome = 0;
    for (std::uint32_t b = 0; b < 64; ++b)
        if ((data >> b) & 1) {
            w.set(kPositions[b]);
            syndrome ^= kPositions[b];
        }
    for (std::uint32_t c = 1; c < 72; c <<= 1)
        if (syndrome & c) w.set(c);
    w[0] = w.count() % 2 == 1;
    return w;
}

Decoded decode(const Codeword& word) {
    std::uint32_t syndrome = 0;
    for (std::uint32_t p = 1; p < 72; ++p)
        if (word[p]) syndrome ^= p;
    const bool odd = word.count() % 2 == 1;

    Codeword fixed = word;
    Decoded out;
    if (syndrome == 0 && !odd) {
        out.status = Status::clean;
    } else if (odd) {
        // looks like one error; a syndrome past the last position cannot be one
        if (syndrome >= 72) {
            out.status = Status::uncorrectable;
        } else {
            fixed.flip(syndrome);
            out.status = Status::corrected;
        }
    } else {
        out.status = Status::uncorrectable;
    }
    for (std::uint32_t b = 0; b < 64; ++b)
        if (fixed[kPositions[b]]) out.data |= std::uint64_t{1} << b;
    return out;
}

}  // namespace secded

std::uint32_t symbol_of(const CodewordSpec& spec, std::uint32_t data_bit) {
    const std::uint32_t chips = 64 / spec.pins;
    const std::uint32_t chip = (data_bit / spec.pins) % chips;
    const std::uint32_t lane = data_bit % spec.pins;
    const std::uint32_t per_chip = std::max<std::uint32_t>(1, spec.pins / spec.symbol_bits);
    return chip * per_chip + lane / std::min(spec.symbol_bits, spec.pins);
}

namespace {

std::uint32_t distinct_symbols(const CodewordSpec& spec, std::span<const std::uint32_t> bits) {
    std::set<std::uint32_t> symbols;
    for (std::uint32_t b : bits) symbols.insert(symbol_of(spec, b));
    return static_cast<std::uint32_t>(symbols.size());
}

}  // namespace

EccOutcome classify(const CodewordSpec& spec, std::span<const std::uint32_t> positions) {
    spec.validate();
    for (std::uint32_t p : positions)
        if (p >= spec.codeword_bits())
            fail(ErrorKind::out_of_range, fmt::format("position {} outside a {}-bit codeword", p, spec.codeword_bits()));

    if (spec.kind == CodeKind::secded_72_64) {
        constexpr std::uint64_t data = 0x0123456789abcdefULL;
        secded::Codeword w = secded::encode(data);
        for (std::uint32_t p : positions) w.flip(p);
        const secded::Decoded d = secded::decode(w);
        if (d.status == secded::Status::uncorrectable) return EccOutcome::detected_uncorrectable;
        return d.data == data ? EccOutcome::corrected : EccOutcome::silent_or_miscorrected;
    }

    const std::uint32_t s = distinct_symbols(spec, positions);
    const std::uint32_t t = spec.kind == CodeKind::symbol_code ? spec.correct_t : spec.parity_symbols / 2;
    const std::uint32_t d = spec.kind == CodeKind::symbol_code ? spec.detect_d : spec.parity_symbols;
    if (s <= t) return EccOutcome::corrected;
    if (s <= d) return EccOutcome::detected_uncorrectable;
    return EccOutcome::silent_or_miscorrected;
}

std::uint32_t rs_parity_needed(std::uint32_t max_symbol_errors) { return max_symbol_errors; }

namespace {

// Data bits flipped per (row, chunk), rebuilt from the per-row coordinates.
std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint32_t>> chunk_bits(const BitFlipReport& report) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint32_t>> out;
    for (const RowFlips& row : report.rows)
        for (std::uint32_t bit : row.bits) out[{row.row, bit / 64}].push_back(bit % 64);
    return out;
}

}  // namespace

ChunkHistogram chunk_histogram(const BitFlipReport& report) {
    ChunkHistogram h;
    for (const ChunkFlips& c : report.chunks)
        if (c.flips > 0) ++h[c.flips];
    return h;
}

std::uint32_t max_symbol_errors(const BitFlipReport& report, const CodewordSpec& spec) {
    std::uint32_t worst = 0;
    for (const auto& [key, bits] : chunk_bits(report)) worst = std::max(worst, distinct_symbols(spec, bits));
    return worst;
}

EccImpact ecc_impact_report(const BitFlipReport& report, std::span<const CodewordSpec> specs) {
    EccImpact impact;
    impact.histogram = chunk_histogram(report);
    const auto chunks = chunk_bits(report);
    for (const CodewordSpec& spec : specs) {
        EccTally tally;
        tally.code = spec.name();
        for (const auto& [key, bits] : chunks) {
            std::vector<std::uint32_t> positions = bits;
            if (spec.kind == CodeKind::secded_72_64)
                for (std::uint32_t& p : positions) p = secded::data_position(p);
            switch (classify(spec, positions)) {
                case EccOutcome::corrected: ++tally.corrected; break;
                case EccOutcome::detected_uncorrectable: ++tally.detected; break;
                case EccOutcome::silent_or_miscorrected: ++tally.silent; break;
            }
        }
        impact.tallies.push_back(std::move(tally));
    }
    // byte symbols, one per data byte
    CodewordSpec bytes;
    bytes.kind = CodeKind::reed_solomon;
    bytes.symbol_bits = 8;
    bytes.pins = 8;
    impact.rs_parity_for_worst_chunk = rs_parity_needed(max_symbol_errors(report, bytes));
    return impact;
}

EccImpact ecc_impact_report(std::span<const BitFlipReport> reports, std::span<const CodewordSpec> specs) {
    EccImpact total;
    for (const CodewordSpec& spec : specs) total.tallies.push_back({spec.name()});
    for (const BitFlipReport& report : reports) {
        const EccImpact one = ecc_impact_report(report, specs);
        for (auto [flips, chunks] : one.histogram) total.histogram[flips] += chunks;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            total.tallies[i].corrected += one.tallies[i].corrected;
            total.tallies[i].detected += one.tallies[i].detected;
            total.tallies[i].silent += one.tallies[i].silent;
        }
        total.rs_parity_for_worst_chunk = std::max(total.rs_parity_for_worst_chunk, one.rs_parity_for_worst_chunk);
    }
    return total;
}

nlohmann::json to_json(const EccImpact& impact) {
    nlohmann::json hist = nlohmann::json::array();
    for (auto [flips, chunks] : impact.histogram) hist.push_back({{"flips", flips}, {"chunks", chunks}});
    nlohmann::json tallies = nlohmann::json::array();
    for (const EccTally& t : impact.tallies)
        tallies.push_back({{"code", t.code}, {"corrected", t.corrected}, {"detected", t.detected}, {"silent", t.silent}});
    return {{"histogram", hist},
            {"axes", {{"x", "bit flips per 8-byte chunk"}, {"y", "chunks"}, {"y_scale", "log"}}},
            {"codes", tallies},
            {"rs_parity_for_worst_chunk", impact.rs_parity_for_worst_chunk}};
}

std::string histogram_csv(const ChunkHistogram& histogram) {
    std::string out = "flips,chunks\n";
    for (auto [flips, chunks] : histogram) out += fmt::format("{},{}\n", flips, chunks);
    return out;
}

}  // namespace utrr
