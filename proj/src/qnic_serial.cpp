#include "qnet/qnic_serial.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <charconv>
#include <sstream>

namespace qnet::qnic {

namespace {

std::vector<std::string> words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::optional<long long> integer(const std::string& s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

bool printable(std::string_view line) {
  for (unsigned char c : line)
    if (c < 0x20 || c > 0x7e) return false;
  return true;
}

}  // namespace

SerialSession::SerialSession(const control::ControlPlane& plane, std::string subscriber_id,
                             std::string instantiation_id, std::uint8_t node_tag)
    : plane_(&plane), subscriber_(std::move(subscriber_id)), instantiation_(std::move(instantiation_id)),
      node_(node_tag) {}

std::string SerialSession::handle(std::string_view line) {
  if (line.size() > kMaxLine || !printable(line)) return kErrSyntax;
  const auto w = words(line);
  if (w.empty()) return kErrSyntax;
  const std::string& cmd = w[0];
  const bool known = (cmd == "SING?" || cmd == "COIN?") ? w.size() == 2 : (cmd == "STAT?" || cmd == "WIN?") && w.size() == 1;
  if (!known) return kErrSyntax;

  control::Snapshot snap;
  timing::CountingPlan plan;
  try {
    snap = plane_->monitor(instantiation_);
    plan = plane_->plan(instantiation_);
  } catch (const Error&) {
    return kErrScope;
  }
  if (snap.subscriber_id != subscriber_) return kErrScope;
  // Never answer from an older interval than the last answer.
  if (snap.latest) last_interval_ = std::max(last_interval_, snap.latest->interval_start_ps);

  if (cmd == "STAT?") return std::string("STAT ") + control::to_string(snap.state);
  if (cmd == "WIN?") return "WIN " + std::to_string(plan.window_ps);
  if (cmd == "SING?") {
    const auto ch = integer(w[1]);
    if (!ch) return kErrSyntax;
    if (*ch < 0 || *ch > 255) return kErrScope;
    const timing::ChannelKey key{node_, static_cast<std::uint8_t>(*ch)};
    if (std::find(plan.channels.begin(), plan.channels.end(), key) == plan.channels.end()) return kErrScope;
    std::uint64_t n = 0;
    if (snap.latest)
      if (const auto it = snap.latest->singles.find(key); it != snap.latest->singles.end()) n = it->second;
    return "SING " + w[1] + " " + std::to_string(n);
  }
  // COIN?: pair index or pair id.
  std::optional<std::size_t> index;
  if (const auto k = integer(w[1])) {
    if (*k >= 0 && static_cast<std::size_t>(*k) < plan.pairs.size()) index = static_cast<std::size_t>(*k);
  } else {
    for (std::size_t i = 0; i < plan.pairs.size(); ++i)
      if (plan.pairs[i].id == w[1]) index = i;
  }
  if (!index) return kErrScope;
  std::uint64_t n = 0;
  if (snap.latest && *index < snap.latest->coincidences.size()) n = snap.latest->coincidences[*index];
  return "COIN " + w[1] + " " + std::to_string(n);
}

SerialServer::SerialServer(const control::ControlPlane& plane) : plane_(&plane) {}

SerialServer::~SerialServer() { stop(); }

void SerialServer::listen(const std::string& host, int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::Bind, "socket() failed");
  int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::Bind, "bad address " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 8) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::Bind, "cannot bind " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void SerialServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard lock(clients_mu_);
    client_fds_.push_back(fd);
    clients_.emplace_back([this, fd] { serve(fd); });
  }
}

void SerialServer::serve(int fd) {
  std::optional<SerialSession> session;
  std::string buffer;
  char chunk[512];
  auto reply = [&](const std::string& text) {
    const std::string out = text + "\r\n";
    return ::send(fd, out.data(), out.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(out.size());
  };
  bool open = true;
  while (open) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    for (auto nl = buffer.find('\n'); nl != std::string::npos && open; nl = buffer.find('\n')) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (session) {
        open = reply(session->handle(line));
        continue;
      }
      const auto w = words(line);
      const auto node = w.size() == 4 ? integer(w[3]) : std::nullopt;
      if (w.size() != 4 || w[0] != "BIND" || !node || *node < 0 || *node > 255) {
        open = reply(kErrSyntax);
        continue;
      }
      session.emplace(*plane_, w[1], w[2], static_cast<std::uint8_t>(*node));
      open = reply("OK");
    }
    if (buffer.size() > kMaxLine) {
      buffer.clear();
      open = reply(kErrSyntax);
    }
  }
  std::lock_guard lock(clients_mu_);
  std::erase(client_fds_, fd);
  ::close(fd);
}

void SerialServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> clients;
  {
    std::lock_guard lock(clients_mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    clients.swap(clients_);
  }
  for (auto& t : clients) t.join();
}

}  // namespace qnet::qnic
