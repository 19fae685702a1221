#pragma once

// 8b/10b line code for the QNIC physical layer and the QPHY line-code check.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qnet/error.hpp"

namespace qnet::qnic {

enum class Disparity : std::int8_t { Minus = -1, Plus = 1 };

inline Disparity flip(Disparity d) { return d == Disparity::Minus ? Disparity::Plus : Disparity::Minus; }

/// A 10-bit code group, bit 9 is `a` (sent first) down to bit 0 `j`.
struct Symbol10b {
  std::uint16_t bits = 0;
  Disparity rd_before = Disparity::Minus;
  Disparity rd_after = Disparity::Minus;

  bool operator==(const Symbol10b&) const = default;
};

/// One byte, optionally a control (K) character.
struct Octet {
  std::uint8_t value = 0;
  bool control = false;

  bool operator==(const Octet&) const = default;
};

/// K28.0-K28.7, K23.7, K27.7, K29.7, K30.7.
bool is_valid_control(std::uint8_t value);
inline constexpr std::uint8_t kComma = 0xBC;  // K28.5

/// Throws E_CODE for a control value outside the twelve K characters.
Symbol10b encode_symbol(Octet octet, Disparity rd);
std::vector<Symbol10b> encode_8b10b(std::span<const std::uint8_t> bytes, Disparity initial = Disparity::Minus);
std::vector<Symbol10b> encode_8b10b(std::span<const Octet> octets, Disparity initial = Disparity::Minus);

std::vector<std::uint16_t> code_groups(std::span<const Symbol10b> symbols);
/// "abcdei_fghj".
std::string bit_string(std::uint16_t code);

struct CodeIssue {
  std::size_t index = 0;
  ErrorCode code = ErrorCode::Code;

  bool operator==(const CodeIssue&) const = default;
};

struct DecodeResult {
  std::vector<Octet> octets;
  std::vector<CodeIssue> issues;
  Disparity final_rd = Disparity::Minus;

  bool ok() const { return issues.empty(); }
  /// Data bytes; throws E_CODE or E_DISPARITY naming the first bad index.
  std::vector<std::uint8_t> bytes_or_throw() const;
};

/// Undecodable groups yield E_CODE and decode as 0; groups valid only
/// under the opposite running disparity yield E_DISPARITY. Decoding
/// continues with the disparity implied by each group.
DecodeResult decode_8b10b(std::span<const std::uint16_t> codes, Disparity initial = Disparity::Minus);
DecodeResult decode_8b10b(std::span<const Symbol10b> symbols, Disparity initial = Disparity::Minus);

struct QphyReport {
  int max_run_length = 0;
  bool disparity_ok = true;
  std::vector<std::size_t> invalid_codes;
  std::optional<std::size_t> first_disparity_error;

  bool compliant() const { return max_run_length <= 5 && disparity_ok && invalid_codes.empty(); }
};

/// One pass over the serial bit stream. The starting disparity may be
/// either value.
QphyReport qphy_check(std::span<const std::uint16_t> codes);

/// Cut a raw byte stream into 10-bit groups, MSB first; trailing bits that
/// do not fill a group are dropped.
std::vector<std::uint16_t> groups_from_raw_bytes(std::span<const std::uint8_t> bytes);

}  // namespace qnet::qnic
