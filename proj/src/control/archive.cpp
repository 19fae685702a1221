#include "qnet/control/archive.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "qnet/digest.hpp"
#include "qnet/error.hpp"
#include "qnet/tagio.hpp"

namespace qnet::control {

using nlohmann::json;

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
// 1980-01-01 00:00 in DOS format, so archives are byte stable.
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;

[[noreturn]] void corrupt(const std::string& msg) { throw Error(ErrorCode::Corrupt, msg); }

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}
  std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(byte()) << (8 * k);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) corrupt("archive truncated");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void skip(std::size_t n) { take(n); }

 private:
  std::uint32_t byte() {
    if (pos_ >= bytes_.size()) corrupt("archive truncated");
    return static_cast<unsigned char>(bytes_[pos_++]);
  }
  std::string_view bytes_;
  std::size_t pos_;
};

std::uint32_t crc_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

const ZipEntry* find(const std::vector<ZipEntry>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::string write_zip(const std::vector<ZipEntry>& entries) {
  std::string out, central;
  for (const auto& e : entries) {
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto crc = crc_of(e.data);
    const auto size = static_cast<std::uint32_t>(e.data.size());
    const auto name_len = static_cast<std::uint16_t>(e.name.size());
    put32(out, kLocalSig);
    put16(out, 20);
    put16(out, 0);
    put16(out, 0);  // stored
    put16(out, 0);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, name_len);
    put16(out, 0);
    out += e.name;
    out += e.data;

    put32(central, kCentralSig);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, name_len);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central += e.name;
  }
  const auto central_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, central_offset);
  put16(out, 0);
  return out;
}

std::vector<ZipEntry> read_zip(std::string_view bytes) {
  if (bytes.size() < 22) corrupt("archive too short");
  Reader end(bytes, bytes.size() - 22);
  if (end.u32() != kEndSig) corrupt("no end of central directory");
  end.skip(4);
  const std::uint16_t count = end.u16();
  end.skip(2);
  const std::uint32_t central_size = end.u32();
  const std::uint32_t central_offset = end.u32();
  if (static_cast<std::uint64_t>(central_offset) + central_size > bytes.size() - 22) corrupt("central directory out of range");

  std::vector<ZipEntry> out;
  Reader dir(bytes, central_offset);
  for (std::uint16_t i = 0; i < count; ++i) {
    if (dir.u32() != kCentralSig) corrupt("bad central directory entry");
    dir.skip(6);
    if (dir.u16() != 0) corrupt("only stored entries are supported");
    dir.skip(4);
    const std::uint32_t crc = dir.u32();
    const std::uint32_t size = dir.u32();
    if (dir.u32() != size) corrupt("size mismatch");
    const std::uint16_t name_len = dir.u16();
    const std::uint16_t extra_len = dir.u16();
    const std::uint16_t comment_len = dir.u16();
    dir.skip(8);
    const std::uint32_t offset = dir.u32();
    ZipEntry e;
    e.name = std::string(dir.take(name_len));
    dir.skip(extra_len + comment_len);

    Reader local(bytes, offset);
    if (local.u32() != kLocalSig) corrupt("bad local header for " + e.name);
    local.skip(22);
    const std::uint16_t local_name = local.u16();
    const std::uint16_t local_extra = local.u16();
    if (local.take(local_name) != e.name) corrupt("local name mismatch for " + e.name);
    local.skip(local_extra);
    e.data = std::string(local.take(size));
    if (crc_of(e.data) != crc) corrupt("crc mismatch in " + e.name);
    out.push_back(std::move(e));
  }
  return out;
}

std::string build_archive(json manifest, const optics::EventStream& events, const std::string& counts_csv,
                          const std::string& environment_csv) {
  const auto tags = tagio::encode_tags(events);
  std::vector<ZipEntry> entries{{"tags.bin", std::string(tags.begin(), tags.end())},
                                {"counts.csv", counts_csv},
                                {"environment.csv", environment_csv}};
  json index = json::object();
  for (const auto& e : entries) index[e.name] = {{"sha256", sha256_hex(e.data)}, {"bytes", e.data.size()}};
  manifest["entries"] = index;
  entries.insert(entries.begin(), {"manifest.json", manifest.dump(2) + "\n"});
  return write_zip(entries);
}

ArchiveContents parse_archive(std::string_view bytes) {
  const auto entries = read_zip(bytes);
  const auto* m = find(entries, "manifest.json");
  if (!m) corrupt("manifest.json missing");
  ArchiveContents out;
  try {
    out.manifest = json::parse(m->data);
  } catch (const json::exception& e) {
    corrupt(std::string("manifest.json: ") + e.what());
  }
  if (!out.manifest.contains("entries") || !out.manifest["entries"].is_object()) corrupt("manifest lists no entries");
  for (const char* name : {"tags.bin", "counts.csv", "environment.csv"}) {
    const auto* e = find(entries, name);
    if (!e) corrupt(std::string(name) + " missing");
    const auto& meta = out.manifest["entries"];
    if (!meta.contains(name) || meta[name].value("sha256", "") != sha256_hex(e->data))
      corrupt(std::string(name) + " does not match its manifest digest");
  }
  const auto& tags = find(entries, "tags.bin")->data;
  out.events = tagio::decode_tags(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(tags.data()), tags.size()));
  out.counts_csv = find(entries, "counts.csv")->data;
  out.environment_csv = find(entries, "environment.csv")->data;
  return out;
}

ArchiveContents load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_archive(bytes);
}

std::string archive_report(const ArchiveContents& a, ReportFormat format) {
  const auto lines = split_lines(a.counts_csv);
  if (lines.empty()) corrupt("counts.csv is empty");
  const auto header = split_csv(lines.front());
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) rows.push_back(split_csv(lines[i]));
  std::vector<std::uint64_t> totals(header.size(), 0);
  for (const auto& r : rows) {
    if (r.size() != header.size()) corrupt("counts.csv row width differs from header");
    for (std::size_t k = 2; k < r.size(); ++k) totals[k] += std::stoull(r[k]);
  }

  if (format == ReportFormat::Csv) {
    std::string out = lines.front() + "\n";
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < r.size(); ++k) out += (k ? "," : "") + r[k];
      out += "\n";
    }
    out += "total,";
    for (std::size_t k = 2; k < header.size(); ++k) out += "," + std::to_string(totals[k]);
    out += "\n";
    return out;
  }

  json intervals = json::array();
  for (const auto& r : rows) {
    json row = json::object();
    for (std::size_t k = 0; k < r.size(); ++k) row[header[k]] = std::stoll(r[k]);
    intervals.push_back(row);
  }
  json sums = json::object();
  for (std::size_t k = 2; k < header.size(); ++k) sums[header[k]] = totals[k];
  json doc{{"instantiation_id", a.manifest.value("instantiation_id", "")},
           {"request_id", a.manifest.value("request_id", "")},
           {"events", a.events.size()},
           {"intervals", intervals},
           {"totals", sums}};
  return doc.dump(2) + "\n";
}

}  // namespace qnet::control
