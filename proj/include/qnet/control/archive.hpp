#pragma once

// Archive files: a stored (uncompressed) ZIP container holding
// manifest.json, tags.bin, counts.csv and environment.csv. The manifest
// carries a SHA-256 per entry.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qnet/optics.hpp"

namespace qnet::control {

struct ZipEntry {
  std::string name;
  std::string data;
};

std::string write_zip(const std::vector<ZipEntry>& entries);
/// Throws E_CORRUPT on a malformed container or a CRC mismatch.
std::vector<ZipEntry> read_zip(std::string_view bytes);

struct ArchiveContents {
  nlohmann::json manifest;
  optics::EventStream events;
  std::string counts_csv;
  std::string environment_csv;
};

/// `manifest` gains an "entries" object with the digest and size of every
/// other entry.
std::string build_archive(nlohmann::json manifest, const optics::EventStream& events, const std::string& counts_csv,
                          const std::string& environment_csv);
/// Throws E_CORRUPT when an entry is missing or its digest differs.
ArchiveContents parse_archive(std::string_view bytes);
ArchiveContents load_archive(const std::string& path);

enum class ReportFormat { Csv, Json };

/// Per-interval singles and coincidences plus summary totals. Byte stable
/// for a given archive.
std::string archive_report(const ArchiveContents& a, ReportFormat format);

}  // namespace qnet::control
