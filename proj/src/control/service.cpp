#include "qnet/control/service.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "qnet/control/compiler.hpp"
#include "qnet/control/validate.hpp"
#include "qnet/digest.hpp"

namespace qnet::control {

using nlohmann::json;

const char* to_string(InstanceState s) {
  switch (s) {
    case InstanceState::Pending: return "PENDING";
    case InstanceState::Active: return "ACTIVE";
    case InstanceState::Completed: return "COMPLETED";
    case InstanceState::Failed: return "FAILED";
  }
  return "?";
}

struct ControlPlane::Instance {
  std::string id;
  std::string request_id;
  std::string subscriber_id;
  CompiledConfig config;
  json design;
  timing::CountingPlan plan;
  std::int64_t window_s = 0;

  mutable std::mutex mu;
  mutable std::condition_variable cv;
  InstanceState state = InstanceState::Pending;
  bool was_active = false;
  std::int64_t started_s = 0;
  std::int64_t stopped_s = 0;
  std::string failure;
  std::vector<timing::CountRecord> records;
  std::optional<RunResult> result;
  std::optional<ArchiveRecord> archive;

  mutable std::mutex snapshot_mu;
  std::shared_ptr<const Snapshot> snapshot;

  std::atomic<bool> stop{false};
  bool released = false;
  std::thread worker;
};

namespace {

bool is_final(InstanceState s) { return s == InstanceState::Completed || s == InstanceState::Failed; }

[[noreturn]] void unknown_handle(const std::string& id) {
  throw Error(ErrorCode::UnknownHandle, "no instantiation '" + id + "'");
}

}  // namespace

json to_json(const timing::CountRecord& r, const timing::CountingPlan& plan) {
  json singles = json::object();
  for (const auto& k : plan.channels) {
    const auto it = r.singles.find(k);
    singles[timing::to_string(k)] = it == r.singles.end() ? 0 : it->second;
  }
  json coinc = json::object();
  for (std::size_t i = 0; i < plan.pairs.size(); ++i)
    coinc[plan.pairs[i].id] = i < r.coincidences.size() ? r.coincidences[i] : 0;
  return {{"interval_start_ps", r.interval_start_ps},
          {"interval_len_ps", r.interval_len_ps},
          {"singles", singles},
          {"coincidences", coinc}};
}

json to_json(const Snapshot& s, const timing::CountingPlan& plan) {
  json apc = json::array();
  for (const auto& a : s.apc) {
    json j{{"endpoint", a.endpoint}, {"signal", a.signal}, {"converged", a.converged}};
    if (!a.skipped.empty()) j["skipped"] = a.skipped;
    apc.push_back(j);
  }
  json doc{{"id", s.id},
           {"request_id", s.request_id},
           {"subscriber_id", s.subscriber_id},
           {"state", to_string(s.state)},
           {"started_s", s.started_s},
           {"stopped_s", s.stopped_s},
           {"intervals", s.intervals},
           {"device_health", s.device_health},
           {"apc", apc},
           {"latest", s.latest ? to_json(*s.latest, plan) : json(nullptr)}};
  if (!s.failure.empty()) doc["failure"] = s.failure;
  return doc;
}

json to_json(const ArchiveRecord& r) {
  return {{"instantiation_id", r.instantiation_id},
          {"request_id", r.request_id},
          {"subscriber_id", r.subscriber_id},
          {"path", r.path},
          {"sha256", r.sha256},
          {"created_s", r.created_s},
          {"retention_deadline_s", r.retention_deadline_s},
          {"events", r.events},
          {"intervals", r.intervals}};
}

ControlPlane::ControlPlane(topology::NetworkTopology t, ServiceOptions options)
    : topology_(std::move(t)), options_(std::move(options)), devices_(topology_) {}

ControlPlane::~ControlPlane() {
  std::vector<std::shared_ptr<Instance>> all;
  {
    std::lock_guard lock(transitions_);
    for (auto& [id, inst] : instances_) all.push_back(inst);
  }
  for (auto& inst : all) {
    {
      std::lock_guard l(inst->mu);
      inst->stop = true;
    }
    inst->cv.notify_all();
    if (inst->worker.joinable()) inst->worker.join();
  }
}

std::int64_t ControlPlane::now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

RequestRecord ControlPlane::submit(const json& design) {
  RequestRecord rec;
  rec.design = design;
  rec.request = design_from_json(design, topology_);
  rec.config = compile_request(rec.request, topology_);
  std::lock_guard lock(transitions_);
  if (requests_.count(rec.request.request_id))
    throw Error(ErrorCode::Conflict, "request id '" + rec.request.request_id + "' already submitted");
  rec.findings = validate_config(rec.config, topology_, &calendar_);
  audit_.append(now(), rec.request.request_id, "", "submitted");
  audit_.append(now(), rec.request.request_id, "", rec.findings.empty() ? "validated" : "validation_failed",
                std::to_string(rec.findings.size()) + " findings");
  requests_[rec.request.request_id] = rec;
  return rec;
}

RequestRecord ControlPlane::request(const std::string& request_id) const {
  std::lock_guard lock(transitions_);
  const auto it = requests_.find(request_id);
  if (it == requests_.end()) throw Error(ErrorCode::UnknownHandle, "no request '" + request_id + "'");
  return it->second;
}

ScheduleWindow ControlPlane::schedule(const std::string& request_id) {
  std::lock_guard lock(transitions_);
  const auto it = requests_.find(request_id);
  if (it == requests_.end()) throw Error(ErrorCode::UnknownHandle, "no request '" + request_id + "'");
  auto& rec = it->second;
  if (!rec.findings.empty()) throw Error(ErrorCode::Precondition, "request has validation findings");
  const auto window = calendar_.schedule_or_throw(rec.config, rec.request.priority);
  rec.window = window;
  audit_.append(now(), request_id, "", "scheduled",
                "[" + std::to_string(window.start_s) + ", " + std::to_string(window.end_s) + ")");
  return window;
}

void ControlPlane::publish(Instance& inst) {
  auto snap = std::make_shared<Snapshot>();
  {
    std::lock_guard lock(inst.mu);
    snap->id = inst.id;
    snap->request_id = inst.request_id;
    snap->subscriber_id = inst.subscriber_id;
    snap->state = inst.state;
    snap->started_s = inst.started_s;
    snap->stopped_s = inst.stopped_s;
    snap->intervals = inst.records.size();
    if (!inst.records.empty()) snap->latest = inst.records.back();
    snap->failure = inst.failure;
    const char* health = inst.state == InstanceState::Failed && !inst.was_active ? "rejected"
                         : inst.state == InstanceState::Active                  ? "ok"
                                                                                : "released";
    for (const auto& [sw, maps] : inst.config.switches) snap->device_health[topology::to_string(sw)] = health;
    for (const auto& s : inst.config.sources)
      snap->device_health["H" + std::to_string(s.hub) + ".source" + std::to_string(s.slot)] = health;
    if (inst.result)
      for (const auto& a : inst.result->apc) {
        ApcStatus st{a.setting.endpoint, a.initial.final_signal, a.initial.converged, a.skipped};
        if (!a.interval_signals.empty()) st.signal = a.interval_signals.back();
        snap->apc.push_back(st);
      }
  }
  std::lock_guard lock(inst.snapshot_mu);
  inst.snapshot = std::move(snap);
}

std::string ControlPlane::instantiate(const std::string& request_id) {
  std::shared_ptr<Instance> inst;
  {
    std::lock_guard lock(transitions_);
    const auto it = requests_.find(request_id);
    if (it == requests_.end()) throw Error(ErrorCode::Precondition, "no request '" + request_id + "'");
    auto& rec = it->second;
    if (!rec.findings.empty()) throw Error(ErrorCode::Precondition, "request has validation findings");
    if (!rec.window) throw Error(ErrorCode::Precondition, "request is not scheduled");
    if (!rec.instantiation_id.empty())
      throw Error(ErrorCode::Precondition, "request already instantiated as " + rec.instantiation_id);
    if (now() < rec.window->start_s) throw Error(ErrorCode::Precondition, "window has not started");
    const auto findings = validate_config(rec.config, topology_, &calendar_);
    if (!findings.empty()) {
      audit_.append(now(), request_id, "", "validation_failed", findings.front().message);
      throw Error(ErrorCode::Precondition, "request no longer validates: " + findings.front().message);
    }
    audit_.append(now(), request_id, "", "validated");

    inst = std::make_shared<Instance>();
    inst->id = "I" + std::to_string(next_instance_++);
    inst->request_id = request_id;
    inst->subscriber_id = rec.request.subscriber_id;
    inst->config = rec.config;
    inst->design = rec.design;
    inst->plan = counting_plan(rec.config, options_.run.duration_s);
    inst->window_s = rec.window->end_s - rec.window->start_s;
    rec.instantiation_id = inst->id;
    instances_[inst->id] = inst;
    audit_.append(now(), request_id, inst->id, "pending");

    try {
      devices_.push(inst->config);
    } catch (const Error& e) {
      {
        std::lock_guard l(inst->mu);
        inst->state = InstanceState::Failed;
        inst->failure = std::string(to_string(e.code())) + ": " + e.what();
        inst->stopped_s = now();
      }
      audit_.append(now(), request_id, inst->id, "failed", inst->failure);
      publish(*inst);
      inst->cv.notify_all();
      return inst->id;
    }
    {
      std::lock_guard l(inst->mu);
      inst->state = InstanceState::Active;
      inst->was_active = true;
      inst->started_s = now();
    }
    audit_.append(now(), request_id, inst->id, "active");
    publish(*inst);
  }
  if (options_.background || options_.hold_runs) inst->worker = std::thread([this, inst] { run(inst); });
  else run(inst);
  return inst->id;
}

void ControlPlane::run(const std::shared_ptr<Instance>& inst) {
  if (options_.hold_runs) {
    std::unique_lock lock(inst->mu);
    inst->cv.wait(lock, [&] { return inst->released || inst->stop.load(); });
  }
  RunObserver observer;
  observer.on_counts = [&](const timing::CountRecord& r) {
    {
      std::lock_guard lock(inst->mu);
      inst->records.push_back(r);
    }
    publish(*inst);
    inst->cv.notify_all();
  };
  observer.on_events = [&](const optics::EventStream& events) { signals_.publish(inst->id, events); };

  std::optional<RunResult> result;
  std::string failure;
  try {
    result = run_config(inst->config, topology_, devices_.switch_states(), options_.run, observer, &inst->stop);
  } catch (const Error& e) {
    failure = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    failure = e.what();
  }
  devices_.release(inst->config);
  signals_.close(inst->id);
  {
    std::lock_guard lock(transitions_);
    {
      std::lock_guard l(inst->mu);
      inst->result = std::move(result);
      inst->state = failure.empty() ? InstanceState::Completed : InstanceState::Failed;
      inst->failure = failure;
      inst->stopped_s = now();
    }
    audit_.append(now(), inst->request_id, inst->id, failure.empty() ? "completed" : "failed", failure);
  }
  publish(*inst);
  inst->cv.notify_all();
}

std::shared_ptr<ControlPlane::Instance> ControlPlane::find(const std::string& id) const {
  std::lock_guard lock(transitions_);
  const auto it = instances_.find(id);
  if (it == instances_.end()) unknown_handle(id);
  return it->second;
}

Snapshot ControlPlane::monitor(const std::string& id) const {
  const auto inst = find(id);
  std::lock_guard lock(inst->snapshot_mu);
  return *inst->snapshot;
}

std::vector<timing::CountRecord> ControlPlane::counts_since(const std::string& id, std::size_t from,
                                                            std::chrono::milliseconds timeout) const {
  const auto inst = find(id);
  std::unique_lock lock(inst->mu);
  inst->cv.wait_for(lock, timeout, [&] { return inst->records.size() > from || is_final(inst->state); });
  if (from >= inst->records.size()) return {};
  return {inst->records.begin() + static_cast<std::ptrdiff_t>(from), inst->records.end()};
}

timing::CountingPlan ControlPlane::plan(const std::string& id) const { return find(id)->plan; }

void ControlPlane::wait(const std::string& id) const {
  const auto inst = find(id);
  std::unique_lock lock(inst->mu);
  inst->cv.wait(lock, [&] { return is_final(inst->state); });
}

void ControlPlane::stop(const std::string& id) {
  const auto inst = find(id);
  {
    std::lock_guard lock(inst->mu);
    inst->stop = true;
  }
  inst->cv.notify_all();
}

void ControlPlane::begin(const std::string& id) {
  const auto inst = find(id);
  {
    std::lock_guard lock(inst->mu);
    inst->released = true;
  }
  inst->cv.notify_all();
}

RunResult ControlPlane::result(const std::string& id) const {
  const auto inst = find(id);
  std::lock_guard lock(inst->mu);
  if (!is_final(inst->state)) throw Error(ErrorCode::NotFinished, id + " is " + to_string(inst->state));
  if (!inst->result) throw Error(ErrorCode::State, id + " produced no result: " + inst->failure);
  return *inst->result;
}

ArchiveRecord ControlPlane::archive(const std::string& id) {
  const auto inst = find(id);
  std::lock_guard lock(transitions_);
  std::lock_guard l(inst->mu);
  if (!is_final(inst->state)) throw Error(ErrorCode::NotFinished, id + " is " + to_string(inst->state));
  if (inst->archive) return *inst->archive;

  const auto created = now();
  json apc = json::array();
  if (inst->result)
    for (const auto& a : inst->result->apc)
      apc.push_back({{"endpoint", a.setting.endpoint},
                     {"hub", a.setting.hub},
                     {"channel", a.setting.channel},
                     {"converged", a.initial.converged},
                     {"iterations", a.initial.iters},
                     {"final_signal", a.initial.final_signal},
                     {"skipped", a.skipped}});
  json manifest{{"schema", "archive.v1"},
                {"instantiation_id", inst->id},
                {"request_id", inst->request_id},
                {"subscriber_id", inst->subscriber_id},
                {"state", to_string(inst->state)},
                {"started_s", inst->started_s},
                {"stopped_s", inst->stopped_s},
                {"created_s", created},
                {"retention_deadline_s", created + options_.retention_s},
                {"run", {{"seed", options_.run.seed}, {"duration_s", options_.run.duration_s}}},
                {"design", inst->design},
                {"settings", to_json(inst->config)},
                {"apc", apc},
                {"failure", inst->failure}};
  std::string counts = timing::counts_csv_header(inst->plan) + "\n";
  for (const auto& r : inst->records) counts += timing::counts_csv_row(inst->plan, r) + "\n";
  const optics::EventStream none;
  const auto& events = inst->result ? inst->result->events : none;
  const std::string env = environment_csv(inst->result ? inst->result->environment : std::vector<EnvironmentSample>{});
  const auto bytes = build_archive(manifest, events, counts, env);

  std::filesystem::create_directories(options_.archive_dir);
  const auto path = (std::filesystem::path(options_.archive_dir) / (inst->id + ".zip")).string();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  }
  ArchiveRecord rec{inst->id,      inst->request_id, inst->subscriber_id,       path, sha256_hex(bytes), created,
                    created + options_.retention_s, events.size(), inst->records.size()};
  inst->archive = rec;

  if (inst->was_active) {
    UsageEntry u;
    u.subscriber_id = inst->subscriber_id;
    u.instantiation_id = inst->id;
    u.request_id = inst->request_id;
    u.duration_h = static_cast<double>(inst->window_s) / 3600.0;
    u.devices = inst->config.device_count();
    const auto mode = options_.fee_modes.find(inst->subscriber_id);
    u.mode = mode == options_.fee_modes.end() ? options_.default_fee_mode : mode->second;
    ledger_.append(u);
  }
  audit_.append(created, inst->request_id, inst->id, "archived", path);
  return rec;
}

std::string ControlPlane::fetch_archive(const std::string& id, const std::string& subscriber_id) const {
  const auto inst = find(id);
  std::optional<ArchiveRecord> rec;
  {
    std::lock_guard lock(inst->mu);
    rec = inst->archive;
  }
  if (!rec) throw Error(ErrorCode::NotFinished, id + " has no archive yet");
  if (rec->subscriber_id != subscriber_id) throw Error(ErrorCode::Scope, "archive belongs to another subscriber");
  if (now() > rec->retention_deadline_s) throw Error(ErrorCode::Expired, "archive retention ended");
  std::ifstream in(rec->path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + rec->path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (sha256_hex(bytes) != rec->sha256) throw Error(ErrorCode::Corrupt, "archive file changed since it was written");
  parse_archive(bytes);
  return bytes;
}

std::shared_ptr<SignalQueue> ControlPlane::subscribe_signal(const std::string& subscriber_id, const std::string& id,
                                                            timing::ChannelKey key) {
  const auto inst = find(id);
  if (inst->subscriber_id != subscriber_id) throw Error(ErrorCode::Scope, "instantiation belongs to another subscriber");
  const auto& ch = inst->plan.channels;
  if (std::find(ch.begin(), ch.end(), key) == ch.end())
    throw Error(ErrorCode::Scope, "channel " + timing::to_string(key) + " is not in this configuration");
  return signals_.subscribe(id, key);
}

std::vector<UsageEntry> ControlPlane::ledger(const std::string& subscriber_id) const {
  return ledger_.entries_for(subscriber_id);
}

std::vector<std::string> ControlPlane::instantiations() const {
  std::lock_guard lock(transitions_);
  std::vector<std::string> out;
  for (const auto& [id, inst] : instances_) out.push_back(id);
  return out;
}

void ControlPlane::shutdown() {
  std::vector<std::shared_ptr<Instance>> all;
  {
    std::lock_guard lock(transitions_);
    for (auto& [id, inst] : instances_) all.push_back(inst);
  }
  for (auto& inst : all) {
    {
      std::lock_guard l(inst->mu);
      inst->stop = true;
    }
    inst->cv.notify_all();
    if (inst->worker.joinable()) inst->worker.join();
  }
  for (auto& inst : all) {
    try {
      archive(inst->id);
    } catch (const Error&) {
      // Never started; nothing to flush.
    }
  }
}

}  // namespace qnet::control
