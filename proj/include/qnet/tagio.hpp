#pragma once

// Binary tag records (11 bytes, little endian: u8 node, u8 channel,
// u8 origin, u64 time_ps), a JSON-lines debug form and length-prefixed
// signal frames.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qnet/optics.hpp"

namespace qnet::tagio {

using optics::DetectionEvent;
using optics::EventStream;

inline constexpr std::size_t kRecordBytes = 11;

void append_record(std::vector<std::uint8_t>& out, const DetectionEvent& e);
std::vector<std::uint8_t> encode_tags(std::span<const DetectionEvent> events);
/// Throws E_CORRUPT when the size is not a whole number of records.
EventStream decode_tags(std::span<const std::uint8_t> bytes);
DetectionEvent decode_record(std::span<const std::uint8_t, kRecordBytes> bytes);

std::string to_jsonl(std::span<const DetectionEvent> events);
EventStream from_jsonl(const std::string& text);

/// u32 little-endian length followed by one record.
std::vector<std::uint8_t> encode_signal_frame(const DetectionEvent& e);

void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace qnet::tagio
