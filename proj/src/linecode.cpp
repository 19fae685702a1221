#include "qnet/linecode.hpp"

#include <array>
#include <bit>
#include <unordered_map>

namespace qnet::qnic {

namespace {

// abcdei at RD-; the RD+ form is the complement when unbalanced.
constexpr std::array<std::uint8_t, 32> k6b = {
    0b100111, 0b011101, 0b101101, 0b110001, 0b110101, 0b101001, 0b011001, 0b111000,
    0b111001, 0b100101, 0b010101, 0b110100, 0b001101, 0b101100, 0b011100, 0b010111,
    0b011011, 0b100011, 0b010011, 0b110010, 0b001011, 0b101010, 0b011010, 0b111010,
    0b110011, 0b100110, 0b010110, 0b110110, 0b001110, 0b101110, 0b011110, 0b101011,
};
constexpr std::uint8_t k6bK28 = 0b001111;

// fghj at RD-.
constexpr std::array<std::uint8_t, 8> k4bData = {0b1011, 0b1001, 0b0101, 0b1100, 0b1101, 0b1010, 0b0110, 0b1110};
constexpr std::array<std::uint8_t, 8> k4bControl = {0b1011, 0b0110, 0b1010, 0b1100, 0b1101, 0b0101, 0b1001, 0b0111};
constexpr std::uint8_t k4bA7 = 0b0111;

int ones(unsigned v) { return std::popcount(v); }

std::uint8_t pick(std::uint8_t minus_form, int width, Disparity rd, bool control) {
  const std::uint8_t mask = static_cast<std::uint8_t>((1u << width) - 1);
  if (rd == Disparity::Minus) return minus_form;
  const int balance = 2 * ones(minus_form) - width;
  // Control blocks always alternate; balanced data blocks keep their form
  // except D.07 and D.x.3.
  const bool dependent = control || (width == 6 && minus_form == 0b111000) || (width == 4 && minus_form == 0b1100);
  if (balance == 0 && !dependent) return minus_form;
  return static_cast<std::uint8_t>(~minus_form & mask);
}

Disparity after(std::uint8_t block, int width, Disparity rd) {
  return 2 * ones(block) == width ? rd : flip(rd);
}

struct TableEntry {
  Octet octet;
  bool valid[2] = {false, false};  // under RD-, RD+
};

int rd_index(Disparity d) { return d == Disparity::Minus ? 0 : 1; }

const std::unordered_map<std::uint16_t, TableEntry>& decode_table() {
  static const auto table = [] {
    std::unordered_map<std::uint16_t, TableEntry> t;
    for (int control = 0; control < 2; ++control)
      for (int v = 0; v < 256; ++v) {
        const Octet o{static_cast<std::uint8_t>(v), control == 1};
        if (o.control && !is_valid_control(o.value)) continue;
        for (Disparity rd : {Disparity::Minus, Disparity::Plus}) {
          const auto s = encode_symbol(o, rd);
          auto& e = t[s.bits];
          if (e.valid[0] || e.valid[1]) {
            if (!(e.octet == o)) throw Error(ErrorCode::Code, "8b/10b table collision");
          }
          e.octet = o;
          e.valid[rd_index(rd)] = true;
        }
      }
    return t;
  }();
  return table;
}

Disparity implied_after(std::uint16_t code, Disparity rd) {
  const std::uint8_t six = static_cast<std::uint8_t>(code >> 4);
  const std::uint8_t four = static_cast<std::uint8_t>(code & 0xF);
  return after(four, 4, after(six, 6, rd));
}

}  // namespace

bool is_valid_control(std::uint8_t value) {
  const int x = value & 0x1F;
  const int y = value >> 5;
  if (x == 28) return true;
  return y == 7 && (x == 23 || x == 27 || x == 29 || x == 30);
}

Symbol10b encode_symbol(Octet octet, Disparity rd) {
  const int x = octet.value & 0x1F;
  const int y = octet.value >> 5;
  if (octet.control && !is_valid_control(octet.value))
    throw Error(ErrorCode::Code, "K" + std::to_string(x) + "." + std::to_string(y) + " is not a control character");
  Symbol10b s;
  s.rd_before = rd;
  const bool k28 = octet.control && x == 28;
  const std::uint8_t six = pick(k28 ? k6bK28 : k6b[x], 6, rd, k28);
  const Disparity mid = after(six, 6, rd);
  std::uint8_t four_minus = octet.control ? k4bControl[y] : k4bData[y];
  if (!octet.control && y == 7) {
    const bool alternate = (mid == Disparity::Minus && (x == 17 || x == 18 || x == 20)) ||
                           (mid == Disparity::Plus && (x == 11 || x == 13 || x == 14));
    if (alternate) four_minus = k4bA7;
  }
  const std::uint8_t four = pick(four_minus, 4, mid, octet.control);
  s.bits = static_cast<std::uint16_t>((six << 4) | four);
  s.rd_after = after(four, 4, mid);
  return s;
}

std::vector<Symbol10b> encode_8b10b(std::span<const Octet> octets, Disparity initial) {
  std::vector<Symbol10b> out;
  out.reserve(octets.size());
  Disparity rd = initial;
  for (const auto& o : octets) {
    out.push_back(encode_symbol(o, rd));
    rd = out.back().rd_after;
  }
  return out;
}

std::vector<Symbol10b> encode_8b10b(std::span<const std::uint8_t> bytes, Disparity initial) {
  std::vector<Octet> octets;
  octets.reserve(bytes.size());
  for (auto b : bytes) octets.push_back({b, false});
  return encode_8b10b(octets, initial);
}

std::vector<std::uint16_t> code_groups(std::span<const Symbol10b> symbols) {
  std::vector<std::uint16_t> out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(s.bits);
  return out;
}

std::string bit_string(std::uint16_t code) {
  std::string s;
  for (int i = 9; i >= 0; --i) {
    s.push_back((code >> i) & 1 ? '1' : '0');
    if (i == 4) s.push_back('_');
  }
  return s;
}

std::vector<std::uint8_t> DecodeResult::bytes_or_throw() const {
  if (!issues.empty()) {
    const auto& first = issues.front();
    throw Error(first.code, "invalid code group at symbol " + std::to_string(first.index));
  }
  std::vector<std::uint8_t> out;
  out.reserve(octets.size());
  for (const auto& o : octets) out.push_back(o.value);
  return out;
}

DecodeResult decode_8b10b(std::span<const std::uint16_t> codes, Disparity initial) {
  const auto& table = decode_table();
  DecodeResult r;
  r.octets.reserve(codes.size());
  Disparity rd = initial;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto it = table.find(codes[i]);
    if (it == table.end()) {
      r.octets.push_back({});
      r.issues.push_back({i, ErrorCode::Code});
      rd = implied_after(codes[i] & 0x3FF, rd);
      continue;
    }
    const auto& e = it->second;
    r.octets.push_back(e.octet);
    if (!e.valid[rd_index(rd)]) {
      r.issues.push_back({i, ErrorCode::Disparity});
      rd = flip(rd);
    }
    rd = implied_after(codes[i], rd);
  }
  r.final_rd = rd;
  return r;
}

DecodeResult decode_8b10b(std::span<const Symbol10b> symbols, Disparity initial) {
  const auto codes = code_groups(symbols);
  return decode_8b10b(codes, initial);
}

QphyReport qphy_check(std::span<const std::uint16_t> codes) {
  const auto& table = decode_table();
  QphyReport rep;
  int run = 0;
  int last_bit = -1;
  Disparity rd[2] = {Disparity::Minus, Disparity::Plus};
  std::optional<std::size_t> first_error[2];
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::uint16_t c = codes[i] & 0x3FF;
    for (int b = 9; b >= 0; --b) {
      const int bit = (c >> b) & 1;
      run = bit == last_bit ? run + 1 : 1;
      last_bit = bit;
      rep.max_run_length = std::max(rep.max_run_length, run);
    }
    const auto it = table.find(c);
    if (it == table.end()) rep.invalid_codes.push_back(i);
    for (int k = 0; k < 2; ++k) {
      if (it != table.end() && !it->second.valid[rd_index(rd[k])]) {
        if (!first_error[k]) first_error[k] = i;
        rd[k] = flip(rd[k]);
      }
      rd[k] = implied_after(c, rd[k]);
    }
  }
  if (first_error[0] && first_error[1]) {
    rep.disparity_ok = false;
    rep.first_disparity_error = std::max(*first_error[0], *first_error[1]);
  }
  return rep;
}

std::vector<std::uint16_t> groups_from_raw_bytes(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint16_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (auto b : bytes) {
    acc = (acc << 8) | b;
    bits += 8;
    if (bits >= 10) {
      out.push_back(static_cast<std::uint16_t>((acc >> (bits - 10)) & 0x3FF));
      bits -= 10;
      acc &= (1u << bits) - 1;
    }
  }
  return out;
}

}  // namespace qnet::qnic
