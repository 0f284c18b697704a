#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hi3/calibration.hpp"
#include "hi3/decision.hpp"
#include "hi3/io.hpp"
#include "hi3/mtd.hpp"
#include "hi3/prior.hpp"

namespace hi3::service {

/// Error carried to the HTTP layer as {code, message, field?}.
class api_error : public std::runtime_error {
 public:
  api_error(int status, std::string code, const std::string& message, std::optional<std::string> field = std::nullopt)
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}

  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::optional<std::string>& field() const noexcept { return field_; }

  json body() const {
    json j{{"code", code_}, {"message", what()}};
    if (field_) j["field"] = *field_;
    return j;
  }

 private:
  int status_;
  std::string code_;
  std::optional<std::string> field_;
};

struct LogEntry {
  std::uint64_t seq = 0;
  std::string time;
  std::size_t dose = 0;  ///< zero-based
  int x = 0;
  int n = 0;
  Decision decision = Decision::Stay;
  std::size_t to = 0;
  double q1 = 0.0;
  double q2 = 0.0;
  double tail = 0.0;
};

struct Session {
  std::string id;
  std::string created;
  std::uint64_t seed = kDefaultSeed;
  DesignParams design;
  HistoricalData history;
  PowerParams omega;
  std::vector<LogEntry> log;
  TrialState state;

  PriorSet priors() const { return transformed_prior(history, omega, design); }
  bool closed() const { return state.terminated || state.total_patients() >= design.max_n; }
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

inline json to_json(const LogEntry& e) {
  return {{"seq", e.seq},   {"time", e.time},   {"dose", e.dose + 1}, {"x", e.x},
          {"n", e.n},       {"decision", symbol(e.decision)},        {"to_dose", e.to + 1},
          {"q1", e.q1},     {"q2", e.q2},       {"tail", e.tail}};
}

inline LogEntry log_entry_from_json(const json& j) {
  LogEntry e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.time = j.at("time").get<std::string>();
  e.dose = j.at("dose").get<std::size_t>() - 1;
  e.x = j.at("x").get<int>();
  e.n = j.at("n").get<int>();
  const auto d = parse_decision(j.at("decision").get<std::string>());
  if (!d) throw std::runtime_error("unknown decision in log");
  e.decision = *d;
  e.to = j.at("to_dose").get<std::size_t>() - 1;
  e.q1 = j.at("q1").get<double>();
  e.q2 = j.at("q2").get<double>();
  e.tail = j.at("tail").get<double>();
  return e;
}

inline json session_document(const Session& s) {
  json log = json::array();
  for (const auto& e : s.log) log.push_back(to_json(e));
  return {{"format", 1},
          {"id", s.id},
          {"created", s.created},
          {"seed", s.seed},
          {"design", to_json(s.design)},
          {"history", to_json(s.history)},
          {"omega", s.omega.omega},
          {"log", log},
          {"state", to_json(s.state)}};
}

/// Fold the log through next_action from a fresh state. Throws when a logged
/// decision differs from the recomputed one.
inline TrialState replay(const Session& s) {
  const PriorSet priors = s.priors();
  TrialState st = TrialState::start(s.history.doses());
  for (const auto& e : s.log) {
    st.record_cohort(e.dose, e.x, e.n);
    const Action act = next_action(st, priors, s.design);
    if (act.decision != e.decision || act.to != e.to)
      throw std::runtime_error("log entry " + std::to_string(e.seq) + " does not replay");
  }
  return st;
}

inline Session session_from_document(const json& j) {
  Session s;
  s.id = j.at("id").get<std::string>();
  s.created = j.at("created").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.design = design_from_json(j.at("design"));
  s.history = history_from_json(j.at("history"));
  s.omega = PowerParams{j.at("omega").get<std::vector<double>>()};
  s.omega.validate();
  for (const auto& e : j.at("log")) s.log.push_back(log_entry_from_json(e));
  s.state = state_from_json(j.at("state"));
  return s;
}

/// MTD preview or final selection; a terminated trial selects no dose.
inline MtdResult session_mtd(const Session& s, MtdRule rule = default_mtd_rule(Design::Hi3)) {
  MtdResult r = select_mtd(s.state, s.priors(), s.design, rule);
  if (s.state.terminated) r.selected.reset();
  return r;
}

inline json tables_json(const Session& s) {
  json out = json::array();
  for (const auto& t : build_tables(s.priors(), s.design)) {
    json j = to_json(t);
    j["csv"] = table_to_csv(t);
    out.push_back(j);
  }
  return out;
}

inline json calibration_json(const Session& s) {
  const PriorSet priors = s.priors();
  json conditions = json::array();
  for (const auto& r : check_conditions(s.history, priors, s.design)) conditions.push_back(to_json(r));
  return {{"seed", s.seed}, {"omega", s.omega.omega}, {"priors", to_json(priors)}, {"conditions", conditions}};
}

inline json snapshot(const Session& s) {
  json log = json::array();
  for (const auto& e : s.log) log.push_back(to_json(e));
  return {{"id", s.id},
          {"created", s.created},
          {"design", to_json(s.design)},
          {"history", to_json(s.history)},
          {"calibration", calibration_json(s)},
          {"state", to_json(s.state)},
          {"closed", s.closed()},
          {"log", log},
          {"tables", tables_json(s)},
          {"mtd", to_json(session_mtd(s))}};
}

namespace detail {

/// flock-based advisory lock on <id>.lock, released on destruction.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw io_error("cannot open lock " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw io_error("cannot lock " + path.string());
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

inline bool valid_id(std::string_view id) {
  if (id.size() != 16) return false;
  for (char c : id)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

}  // namespace detail

/// One JSON document per session under `dir`. Writes to a session are
/// serialised by a per-session lock; reads go straight to the last renamed
/// document.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) { ensure_directory(dir_); }

  const std::filesystem::path& directory() const { return dir_; }

  Session create(const json& body) {
    if (!body.is_object()) throw api_error(422, "validation", "request body must be a JSON object");
    for (const auto& [key, value] : body.items()) {
      if (key != "version" && key != "design" && key != "history" && key != "omega" && key != "doses" &&
          key != "seed")
        throw api_error(422, "validation", "unknown key '" + key + "'", key);
    }
    Session s;
    try {
      const RunConfig cfg = config_from_json(body);
      s.design = cfg.design;
      s.history = cfg.history_or_empty();
      s.seed = cfg.seed.value_or(kDefaultSeed);
      if (cfg.omega) {
        s.omega = *cfg.omega;
      } else {
        s.omega = calibrate_omegas(s.history, s.design, calibration_seed(s.seed)).omega;
      }
      s.state = TrialState::start(s.history.doses());
    } catch (const validation_error& e) {
      throw api_error(422, "validation", e.what(), e.field());
    }
    s.created = utc_now();
    s.id = reserve_id();
    detail::FileLock lock(lock_path(s.id));
    persist(s);
    return s;
  }

  /// Reads the stored document and re-folds its log; a mismatch is reported
  /// as a corrupt session.
  Session load(const std::string& id) const {
    if (!detail::valid_id(id) || !std::filesystem::exists(doc_path(id)))
      throw api_error(404, "not_found", "no session '" + id + "'");
    Session s;
    try {
      s = session_from_document(json::parse(read_file(doc_path(id))));
    } catch (const io_error&) {
      throw api_error(404, "not_found", "no session '" + id + "'");
    } catch (const std::exception& e) {
      throw api_error(500, "corrupt_session", std::string("session document is unreadable: ") + e.what());
    }
    TrialState folded;
    try {
      folded = replay(s);
    } catch (const std::exception& e) {
      throw api_error(500, "corrupt_session", e.what());
    }
    if (!(folded == s.state)) throw api_error(500, "corrupt_session", "stored state differs from the replayed log");
    return s;
  }

  struct CohortResult {
    Session session;
    Action action;
  };

  CohortResult post_cohort(const std::string& id, const json& body) {
    if (!body.is_object()) throw api_error(422, "validation", "request body must be a JSON object");
    for (const auto& [key, value] : body.items()) {
      if (key != "dose" && key != "x" && key != "n") throw api_error(422, "validation", "unknown key '" + key + "'", key);
    }
    auto integer = [&](const char* key) -> std::optional<std::int64_t> {
      if (!body.contains(key)) return std::nullopt;
      try {
        return hi3::detail::as_integer(body.at(key), key);
      } catch (const validation_error& e) {
        throw api_error(422, "validation", e.what(), key);
      }
    };
    const auto dose = integer("dose");
    const auto x = integer("x");
    const auto n_given = integer("n");
    if (!dose) throw api_error(422, "validation", "cohort needs a dose", "dose");
    if (!x) throw api_error(422, "validation", "cohort needs a DLT count x", "x");

    if (!detail::valid_id(id) || !std::filesystem::exists(doc_path(id)))
      throw api_error(404, "not_found", "no session '" + id + "'");
    detail::FileLock lock(lock_path(id));
    Session s = load(id);
    if (s.state.terminated) throw api_error(410, "terminated", "trial was terminated for excessive toxicity");
    if (s.closed()) throw api_error(410, "complete", "trial has reached its maximum sample size");
    if (*dose < 1 || static_cast<std::size_t>(*dose) != s.state.current + 1)
      throw api_error(409, "wrong_dose",
                      "cohort dose " + std::to_string(*dose) + " differs from current dose " +
                          std::to_string(s.state.current + 1),
                      "dose");
    const std::int64_t n = n_given.value_or(s.design.cohort_size);
    const std::int64_t room = s.design.max_n - s.state.total_patients();
    if (n < 1 || n > room)
      throw api_error(422, "validation", "cohort size must lie in 1.." + std::to_string(room), "n");
    if (*x < 0 || *x > n) throw api_error(422, "validation", "DLT count must satisfy 0 <= x <= n", "x");

    s.state.record_cohort(s.state.current, static_cast<int>(*x), static_cast<int>(n));
    const Action act = next_action(s.state, s.priors(), s.design);
    LogEntry e;
    e.seq = s.log.size() + 1;
    e.time = utc_now();
    e.dose = act.from;
    e.x = static_cast<int>(*x);
    e.n = static_cast<int>(n);
    e.decision = act.decision;
    e.to = act.to;
    e.q1 = act.fractions.q1;
    e.q2 = act.fractions.q2;
    e.tail = act.tail;
    s.log.push_back(e);
    persist(s);
    return {std::move(s), act};
  }

  bool remove(const std::string& id) {
    if (!detail::valid_id(id) || !std::filesystem::exists(doc_path(id))) return false;
    {
      detail::FileLock lock(lock_path(id));
      std::error_code ec;
      std::filesystem::remove(doc_path(id), ec);
      if (ec) throw io_error("cannot delete session " + id);
    }
    std::error_code ec;
    std::filesystem::remove(lock_path(id), ec);
    return true;
  }

  std::filesystem::path doc_path(const std::string& id) const { return dir_ / (id + ".json"); }

 private:
  std::filesystem::path lock_path(const std::string& id) const { return dir_ / (id + ".lock"); }

  void persist(const Session& s) { write_file_atomic(doc_path(s.id), session_document(s).dump(2) + "\n"); }

  std::string reserve_id() {
    static thread_local std::mt19937_64 gen{std::random_device{}() ^
                                            static_cast<std::uint64_t>(
                                                std::chrono::steady_clock::now().time_since_epoch().count())};
    for (int attempt = 0; attempt < 64; ++attempt) {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
      const std::string id(buf);
      const int fd = ::open(lock_path(id).c_str(), O_RDWR | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
      if (fd >= 0) {
        ::close(fd);
        return id;
      }
    }
    throw io_error("cannot allocate a session id");
  }

  std::filesystem::path dir_;
};

struct HttpResult {
  int status = 200;
  json body;
};

/// Transport-independent router for the session endpoints.
class Api {
 public:
  explicit Api(SessionStore& store) : store_(store) {}

  HttpResult handle(std::string_view method, std::string_view path, std::string_view body) {
    try {
      return route(method, path, body);
    } catch (const api_error& e) {
      return {e.status(), e.body()};
    } catch (const io_error& e) {
      return {500, {{"code", "io_error"}, {"message", e.what()}}};
    } catch (const std::exception& e) {
      return {500, {{"code", "internal"}, {"message", e.what()}}};
    }
  }

 private:
  static json parse_body(std::string_view body, bool allow_empty) {
    if (body.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      if (allow_empty) return json::object();
      throw api_error(422, "validation", "request body is empty");
    }
    try {
      return json::parse(body);
    } catch (const json::parse_error& e) {
      throw api_error(422, "invalid_json", std::string("malformed JSON: ") + e.what());
    }
  }

  static api_error not_allowed(std::string_view method) {
    return api_error(405, "method_not_allowed", "method " + std::string(method) + " not allowed here");
  }

  HttpResult route(std::string_view method, std::string_view path, std::string_view body) {
    auto parts = split(path, '/');
    if (!parts.empty() && parts.front().empty()) parts.erase(parts.begin());
    if (!parts.empty() && parts.back().empty()) parts.pop_back();
    if (parts.empty() || parts[0] != "sessions") throw api_error(404, "not_found", "no route for " + std::string(path));

    if (parts.size() == 1) {
      if (method != "POST") throw not_allowed(method);
      const Session s = store_.create(parse_body(body, false));
      json out = snapshot(s);
      return {201, out};
    }
    const std::string& id = parts[1];
    if (parts.size() == 2) {
      if (method == "GET") return {200, snapshot(store_.load(id))};
      if (method == "DELETE") {
        if (!store_.remove(id)) throw api_error(404, "not_found", "no session '" + id + "'");
        return {200, {{"id", id}, {"deleted", true}}};
      }
      throw not_allowed(method);
    }
    if (parts.size() == 3) {
      const std::string& leaf = parts[2];
      if (leaf == "cohorts") {
        if (method != "POST") throw not_allowed(method);
        const auto r = store_.post_cohort(id, parse_body(body, false));
        return {200,
                {{"decision", symbol(r.action.decision)},
                 {"action", to_json(r.action)},
                 {"state", to_json(r.session.state)},
                 {"closed", r.session.closed()},
                 {"log_length", r.session.log.size()},
                 {"mtd", to_json(session_mtd(r.session))}}};
      }
      if (leaf == "tables") {
        if (method != "GET") throw not_allowed(method);
        return {200, {{"id", id}, {"tables", tables_json(store_.load(id))}}};
      }
      if (leaf == "select-mtd") {
        if (method != "POST") throw not_allowed(method);
        const json req = parse_body(body, true);
        MtdRule rule = default_mtd_rule(Design::Hi3);
        for (const auto& [key, value] : req.items()) {
          if (key != "rule") throw api_error(422, "validation", "unknown key '" + key + "'", key);
          const auto name = value.is_string() ? value.get<std::string>() : std::string();
          if (name == "not-excluded") {
            rule = MtdRule::NotExcluded;
          } else if (name == "estimate-bound") {
            rule = MtdRule::EstimateBound;
          } else {
            throw api_error(422, "validation", "rule must be not-excluded or estimate-bound", "rule");
          }
        }
        const Session s = store_.load(id);
        json out = to_json(session_mtd(s, rule));
        out["closed"] = s.closed();
        return {200, out};
      }
    }
    throw api_error(404, "not_found", "no route for " + std::string(path));
  }

  SessionStore& store_;
};

}  // namespace hi3::service
