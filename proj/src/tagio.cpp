#include "qnet/tagio.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace qnet::tagio {

void append_record(std::vector<std::uint8_t>& out, const DetectionEvent& e) {
  out.push_back(e.node);
  out.push_back(e.channel);
  out.push_back(static_cast<std::uint8_t>(e.origin));
  const auto t = static_cast<std::uint64_t>(e.time_ps);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(t >> (8 * i)));
}

std::vector<std::uint8_t> encode_tags(std::span<const DetectionEvent> events) {
  std::vector<std::uint8_t> out;
  out.reserve(events.size() * kRecordBytes);
  for (const auto& e : events) append_record(out, e);
  return out;
}

DetectionEvent decode_record(std::span<const std::uint8_t, kRecordBytes> b) {
  DetectionEvent e;
  e.node = b[0];
  e.channel = b[1];
  if (b[2] > 1) throw Error(ErrorCode::Corrupt, "tag record has unknown origin");
  e.origin = static_cast<optics::Origin>(b[2]);
  std::uint64_t t = 0;
  for (int i = 0; i < 8; ++i) t |= static_cast<std::uint64_t>(b[3 + i]) << (8 * i);
  e.time_ps = static_cast<optics::TimePs>(t);
  return e;
}

EventStream decode_tags(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kRecordBytes != 0)
    throw Error(ErrorCode::Corrupt, "tag data is not a whole number of 11-byte records");
  EventStream out;
  out.reserve(bytes.size() / kRecordBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kRecordBytes)
    out.push_back(decode_record(bytes.subspan(off).first<kRecordBytes>()));
  return out;
}

std::string to_jsonl(std::span<const DetectionEvent> events) {
  std::ostringstream os;
  for (const auto& e : events) {
    nlohmann::json j = {{"node", e.node},
                        {"channel", e.channel},
                        {"origin", e.origin == optics::Origin::Photon ? "photon" : "dark"},
                        {"time_ps", e.time_ps}};
    os << j.dump() << '\n';
  }
  return os.str();
}

EventStream from_jsonl(const std::string& text) {
  EventStream out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DetectionEvent e;
      e.node = j.at("node").get<std::uint8_t>();
      e.channel = j.at("channel").get<std::uint8_t>();
      e.origin = j.at("origin").get<std::string>() == "dark" ? optics::Origin::Dark : optics::Origin::Photon;
      e.time_ps = j.at("time_ps").get<optics::TimePs>();
      out.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::Corrupt, std::string("bad tag line: ") + ex.what());
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_signal_frame(const DetectionEvent& e) {
  std::vector<std::uint8_t> out;
  const auto n = static_cast<std::uint32_t>(kRecordBytes);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  append_record(out, e);
  return out;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace qnet::tagio
