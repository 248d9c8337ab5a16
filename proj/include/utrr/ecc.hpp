#pragma once

#include "utrr/attack.hpp"

#include <json.hpp>
#include <bitset>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace utrr {

enum class EccOutcome { corrected, detected_uncorrectable, silent_or_miscorrected };
std::string_view to_string(EccOutcome outcome);

enum class CodeKind { secded_72_64, symbol_code, reed_solomon };

struct CodewordSpec {
    CodeKind kind = CodeKind::secded_72_64;
    std::uint32_t symbol_bits = 8;
    std::uint32_t correct_t = 1;     // symbol_code
    std::uint32_t detect_d = 2;      // symbol_code
    std::uint32_t parity_symbols = 0;  // reed_solomon
    // Chip width used to stripe chunk bits across chips for symbol codes.
    std::uint32_t pins = 8;

    static CodewordSpec secded();
    static CodewordSpec symbol(std::uint32_t symbol_bits, std::uint32_t correct_t, std::uint32_t detect_d,
                               std::uint32_t pins);
    static CodewordSpec reed_solomon_code(std::uint32_t symbol_bits, std::uint32_t parity_symbols,
                                          std::uint32_t pins);

    std::string name() const;
    // Positions classify() accepts: 72 for SECDED, the 64 data bits otherwise.
    std::uint32_t codeword_bits() const;
    void validate() const;
};

// Extended Hamming(72,64): overall parity at position 0, check bits at the powers of two,
// data in the remaining positions of 1..71.
namespace secded {

using Codeword = std::bitset<72>;

enum class Status { clean, corrected, uncorrectable };

struct Decoded {
    std::uint64_t data = 0;
    Status status = Status::clean;
};

std::uint32_t data_position(std::uint32_t data_bit);
Codeword encode(std::uint64_t data);
Decoded decode(const Codeword& word);

}  // namespace secded

// Symbol index of a data bit under the chip striping: bit b sits on chip (b / pins) % (64 / pins).
std::uint32_t symbol_of(const CodewordSpec& spec, std::uint32_t data_bit);

// Positions are codeword positions (SECDED) or data bits (symbol codes). Throws out_of_range.
EccOutcome classify(const CodewordSpec& spec, std::span<const std::uint32_t> positions);

// Detect-all, correct-half: e symbol errors need e parity symbols.
std::uint32_t rs_parity_needed(std::uint32_t max_symbol_errors);

using ChunkHistogram = std::map<std::uint32_t, std::uint64_t>;  // flips per chunk -> chunks

ChunkHistogram chunk_histogram(const BitFlipReport& report);

// Distinct symbols hit in the worst chunk.
std::uint32_t max_symbol_errors(const BitFlipReport& report, const CodewordSpec& spec);

struct EccTally {
    std::string code;
    std::uint64_t corrected = 0;
    std::uint64_t detected = 0;
    std::uint64_t silent = 0;
};

struct EccImpact {
    ChunkHistogram histogram;
    std::vector<EccTally> tallies;  // one per spec, in order
    std::uint32_t rs_parity_for_worst_chunk = 0;
};

// Classifies every chunk with flips, using the report's own bit coordinates.
EccImpact ecc_impact_report(const BitFlipReport& report, std::span<const CodewordSpec> specs);
// Sums over independent runs; chunks of different runs never merge.
EccImpact ecc_impact_report(std::span<const BitFlipReport> reports, std::span<const CodewordSpec> specs);

nlohmann::json to_json(const EccImpact& impact);
std::string histogram_csv(const ChunkHistogram& histogram);  // flips,chunks

}  // namespace utrr
