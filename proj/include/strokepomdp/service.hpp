#pragma once

#include <sqlite3.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "agents.hpp"

namespace strokepomdp {

/// Error surfaced to API clients. `status` follows HTTP semantics.
struct ServiceError : std::runtime_error {
  ServiceError(int status, std::string code, std::string path, const std::string& what)
      : std::runtime_error(what), status(status), code(std::move(code)), path(std::move(path)) {}
  int status;
  std::string code;
  std::string path;

  json to_json() const {
    json err{{"code", code}, {"message", what()}};
    if (!path.empty()) err["path"] = path;
    return json{{"error", err}};
  }
};

namespace detail {

inline ServiceError not_found(const std::string& id) {
  return ServiceError(404, "not-found", "", "no session '" + id + "'");
}

inline ServiceError invalid(std::string path, const std::string& what) {
  return ServiceError(422, "validation-error", std::move(path), what);
}

/// Thin RAII wrapper over one SQLite connection. Calls are serialized.
class SqliteStore {
 public:
  explicit SqliteStore(const std::string& path) {
    if (sqlite3_open_v2(path.c_str(), &db_,
                        SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      sqlite3_close(db_);
      throw std::runtime_error("cannot open session store '" + path + "': " + msg);
    }
    exec("CREATE TABLE IF NOT EXISTS sessions (id TEXT PRIMARY KEY, doc TEXT NOT NULL, "
         "updated_at REAL NOT NULL)");
    exec("CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value INTEGER NOT NULL)");
    exec("INSERT OR IGNORE INTO meta(key, value) VALUES ('next_id', 0)");
  }
  ~SqliteStore() { sqlite3_close(db_); }
  SqliteStore(const SqliteStore&) = delete;
  SqliteStore& operator=(const SqliteStore&) = delete;

  std::uint64_t next_counter() {
    std::lock_guard lock(mu_);
    exec("UPDATE meta SET value = value + 1 WHERE key = 'next_id'");
    Stmt st(db_, "SELECT value FROM meta WHERE key = 'next_id'");
    st.step();
    return static_cast<std::uint64_t>(sqlite3_column_int64(st.get(), 0));
  }

  void put(const std::string& id, const json& doc, double updated_at) {
    std::lock_guard lock(mu_);
    Stmt st(db_, "INSERT OR REPLACE INTO sessions(id, doc, updated_at) VALUES (?, ?, ?)");
    const std::string text = doc.dump();
    sqlite3_bind_text(st.get(), 1, id.c_str(), -1, SQLITE_TRANSIENT);
    sqlite3_bind_text(st.get(), 2, text.c_str(), -1, SQLITE_TRANSIENT);
    sqlite3_bind_double(st.get(), 3, updated_at);
    st.step();
  }

  std::optional<json> get(const std::string& id) {
    std::lock_guard lock(mu_);
    Stmt st(db_, "SELECT doc FROM sessions WHERE id = ?");
    sqlite3_bind_text(st.get(), 1, id.c_str(), -1, SQLITE_TRANSIENT);
    if (!st.step()) return std::nullopt;
    const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(st.get(), 0));
    return json::parse(text);
  }

  bool erase(const std::string& id) {
    std::lock_guard lock(mu_);
    Stmt st(db_, "DELETE FROM sessions WHERE id = ?");
    sqlite3_bind_text(st.get(), 1, id.c_str(), -1, SQLITE_TRANSIENT);
    st.step();
    return sqlite3_changes(db_) > 0;
  }

  int erase_older_than(double cutoff) {
    std::lock_guard lock(mu_);
    Stmt st(db_, "DELETE FROM sessions WHERE updated_at < ?");
    sqlite3_bind_double(st.get(), 1, cutoff);
    st.step();
    return sqlite3_changes(db_);
  }

  int count() {
    std::lock_guard lock(mu_);
    Stmt st(db_, "SELECT COUNT(*) FROM sessions");
    st.step();
    return sqlite3_column_int(st.get(), 0);
  }

 private:
  class Stmt {
   public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
      if (sqlite3_prepare_v2(db, sql, -1, &st_, nullptr) != SQLITE_OK)
        throw std::runtime_error(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
    ~Stmt() { sqlite3_finalize(st_); }
    sqlite3_stmt* get() { return st_; }
    // True while a row is available.
    bool step() {
      const int rc = sqlite3_step(st_);
      if (rc == SQLITE_ROW) return true;
      if (rc == SQLITE_DONE) return false;
      throw std::runtime_error(std::string("sqlite step: ") + sqlite3_errmsg(db_));
    }

   private:
    sqlite3* db_;
    sqlite3_stmt* st_ = nullptr;
  };

  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      throw std::runtime_error("sqlite: " + msg);
    }
  }

  sqlite3* db_ = nullptr;
  std::mutex mu_;
};

}  // namespace detail

struct ServiceConfig {
  ModelParams base = ModelParams::defaults();
  std::string db_path = ":memory:";
  double ttl_seconds = 24 * 3600;
  // Session ids are derived from this seed and a persistent counter.
  std::uint64_t id_seed = 0;
  // Seconds since the epoch; replaceable for tests.
  std::function<double()> clock = [] {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
  };
};

struct HistoryEntry {
  Action action = Action::WAIT;
  Observation observation;
  bool degenerate = false;
};

/// Stored session document.
struct Session {
  std::string id;
  json overrides = json::object();
  ExactBelief belief;
  std::vector<HistoryEntry> history;
  bool terminal = false;
  double created_at = 0;
  double updated_at = 0;
};

inline json to_json(const HistoryEntry& h) {
  json j{{"action", to_string(h.action)}, {"observation", to_json(h.observation)}};
  if (h.degenerate) j["warning"] = "degenerate-update";
  return j;
}

inline json to_json(const Session& s) {
  json hist = json::array();
  for (const auto& h : s.history) hist.push_back(to_json(h));
  return json{{"session_id", s.id},     {"config_overrides", s.overrides},
              {"belief", to_json(s.belief)}, {"marginals", to_json(marginals(s.belief))},
              {"history", hist},        {"terminal", s.terminal},
              {"created_at", s.created_at}, {"updated_at", s.updated_at}};
}

inline Session session_from_json(const json& j) {
  Session s;
  s.id = j.at("session_id").get<std::string>();
  s.overrides = j.at("config_overrides");
  s.belief = exact_belief_from_json(j.at("belief"));
  for (const auto& h : j.at("history")) {
    HistoryEntry e;
    e.action = action_from_json(h.at("action"));
    e.observation = observation_from_json(h.at("observation"));
    e.degenerate = h.contains("warning");
    s.history.push_back(e);
  }
  s.terminal = j.at("terminal").get<bool>();
  s.created_at = j.at("created_at").get<double>();
  s.updated_at = j.at("updated_at").get<double>();
  return s;
}

/// Applies one exact-filter step. Sets `degenerate` when the observation had
/// zero likelihood and the prediction was kept instead.
inline ExactBelief session_update(const StrokeModel& model, const ExactBelief& b, Action a,
                                  const Observation& o, bool& degenerate) {
  degenerate = false;
  return exact_update_or_predict(model, b, a, o, &degenerate);
}

/// Rebuilds a belief from the prior by replaying `history`.
inline ExactBelief replay_history(const StrokeModel& model, const std::vector<HistoryEntry>& history) {
  ExactBelief b = initial_belief(model.params().init_mixture);
  for (const auto& h : history) {
    bool degenerate = false;
    b = session_update(model, b, h.action, h.observation, degenerate);
  }
  return b;
}

/// Session store plus the create/step/recommend operations behind /v1.
class SessionService {
 public:
  explicit SessionService(ServiceConfig cfg = {})
      : cfg_(std::move(cfg)), store_(cfg_.db_path) {
    validate(cfg_.base);
  }

  const ServiceConfig& config() const { return cfg_; }

  json create(const json& body) {
    json overrides = json::object();
    if (!body.is_null()) {
      if (!body.is_object()) throw detail::invalid("", "expected an object");
      for (auto it = body.begin(); it != body.end(); ++it)
        if (it.key() != "config_overrides") throw detail::invalid("/" + it.key(), "unknown key");
      if (body.contains("config_overrides")) overrides = body["config_overrides"];
    }
    const StrokeModel model = model_for(overrides, "/config_overrides");
    Session s;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(mix_seed(cfg_.id_seed, store_.next_counter())));
    s.id = buf;
    s.overrides = overrides;
    s.belief = initial_belief(model.params().init_mixture);
    s.created_at = s.updated_at = cfg_.clock();
    store_.put(s.id, to_json(s), s.updated_at);
    return to_json(s);
  }

  json get(const std::string& id) {
    const auto mu = mutex_for(id);
    std::shared_lock lock(*mu);
    return to_json(load(id));
  }

  json step(const std::string& id, const json& body) {
    const auto mu = mutex_for(id);
    std::unique_lock lock(*mu);
    Session s = load(id);
    if (!body.is_object()) throw detail::invalid("", "expected an object");
    for (auto it = body.begin(); it != body.end(); ++it)
      if (it.key() != "action" && it.key() != "observation")
        throw detail::invalid("/" + it.key(), "unknown key");
    if (!body.contains("action")) throw detail::invalid("/action", "missing required key");
    if (!body.contains("observation")) throw detail::invalid("/observation", "missing required key");
    Action a;
    Observation o;
    try {
      a = action_from_json(body["action"]);
      o = observation_from_json(body["observation"]);
    } catch (const ValidationError& e) {
      throw detail::invalid(e.path, e.what());
    }
    if (is_dsa(o) != (a == Action::DSA))
      throw detail::invalid("/observation/type", a == Action::DSA
                                                     ? "DSA produces a dsa report"
                                                     : std::string(to_string(a)) +
                                                           " produces a clinical observation");
    if (s.terminal) throw ServiceError(409, "session-terminal", "", "session has ended");

    const StrokeModel model = model_for(s.overrides, "/config_overrides");
    HistoryEntry h{a, o, false};
    s.belief = session_update(model, s.belief, a, o, h.degenerate);
    s.history.push_back(h);
    s.terminal = a == Action::DISC || s.belief.t >= model.horizon();
    s.updated_at = cfg_.clock();
    store_.put(s.id, to_json(s), s.updated_at);
    return json{{"session_id", s.id},
                {"belief", to_json(s.belief)},
                {"marginals", to_json(marginals(s.belief))},
                {"terminal", s.terminal},
                {"warning", h.degenerate ? json("degenerate-update") : json()}};
  }

  /// Read-only: the stored session is never written.
  json recommend(const std::string& id, const json& body) {
    const auto mu = mutex_for(id);
    std::shared_lock lock(*mu);
    const Session s = load(id);
    json req = body.is_null() ? json::object() : body;
    if (!req.is_object()) throw detail::invalid("", "expected an object");
    for (auto it = req.begin(); it != req.end(); ++it)
      if (it.key() != "policy" && it.key() != "seed" && it.key() != "solver_overrides")
        throw detail::invalid("/" + it.key(), "unknown key");

    std::string name = "despot";
    if (req.contains("policy")) {
      if (!req["policy"].is_string()) throw detail::invalid("/policy", "expected a string");
      name = req["policy"].get<std::string>();
    }
    const auto kind = parse_policy(name);
    if (!kind) throw detail::invalid("/policy", "unknown policy '" + name + "'");
    std::uint64_t seed = 0;
    if (req.contains("seed")) {
      if (!req["seed"].is_number_integer() || req["seed"].get<std::int64_t>() < 0) throw detail::invalid("/seed", "expected a non-negative integer");
      seed = req["seed"].get<std::uint64_t>();
    }

    json overrides = s.overrides;
    if (req.contains("solver_overrides")) {
      if (!req["solver_overrides"].is_object())
        throw detail::invalid("/solver_overrides", "expected an object");
      overrides = merged(overrides, json{{"solver", req["solver_overrides"]}});
    }
    const StrokeModel model = model_for(overrides, "/solver_overrides");

    json out{{"policy", name}, {"seed", seed}};
    switch (*kind) {
      case PolicyKind::Random: {
        RandomStream rng(seed);
        out["action"] = to_string(random_policy(rng));
        break;
      }
      case PolicyKind::ExpertHosp:
      case PolicyKind::ExpertDsa: {
        const auto cfg = expert_config(
            model.params(), *kind == PolicyKind::ExpertDsa ? Action::DSA : Action::HOSP);
        const auto d = expert_decide(cfg, marginals(s.belief));
        out["action"] = to_string(d.action);
        out["branch"] = to_string(d.branch);
        out["diagnostics"] = json{{"branch", to_string(d.branch)}};
        break;
      }
      case PolicyKind::Despot: {
        RandomStream rng(seed);
        const auto particles = sample_particles(s.belief, model.params().n_particles, rng);
        DespotPlanner planner(model, model.params().solver);
        const PlanResult r = planner.plan(particles, rng);
        const json pr = to_json(r);
        out["action"] = pr["action"];
        out["bounds"] = pr["bounds"];
        out["diagnostics"] = pr["diagnostics"];
        break;
      }
    }
    return out;
  }

  void remove(const std::string& id) {
    const auto mu = mutex_for(id);
    std::unique_lock lock(*mu);
    if (!store_.erase(id)) throw detail::not_found(id);
  }

  /// Drops sessions idle for longer than the TTL; returns how many.
  int purge_expired() { return store_.erase_older_than(cfg_.clock() - cfg_.ttl_seconds); }

  int session_count() { return store_.count(); }

  /// True when replaying the stored history reproduces the stored belief bit for bit.
  bool replay_matches(const std::string& id) {
    const auto mu = mutex_for(id);
    std::shared_lock lock(*mu);
    const Session s = load(id);
    const StrokeModel model = model_for(s.overrides, "/config_overrides");
    const ExactBelief b = replay_history(model, s.history);
    return b.t == s.belief.t && b.weights == s.belief.weights;
  }

 private:
  static json merged(json base, const json& patch) {
    base.merge_patch(patch);
    return base;
  }

  StrokeModel model_for(const json& overrides, const std::string& prefix) const {
    try {
      return StrokeModel(apply_overrides(cfg_.base, overrides));
    } catch (const ConfigError& e) {
      std::string path = e.path();
      if (prefix == "/solver_overrides" && path.rfind("/solver", 0) == 0)
        path = prefix + path.substr(7);
      else
        path = prefix + path;
      throw detail::invalid(path, e.what());
    }
  }

  Session load(const std::string& id) {
    auto doc = store_.get(id);
    if (!doc) throw detail::not_found(id);
    Session s = session_from_json(*doc);
    if (cfg_.clock() - s.updated_at > cfg_.ttl_seconds) {
      store_.erase(id);
      throw detail::not_found(id);
    }
    return s;
  }

  std::shared_ptr<std::shared_mutex> mutex_for(const std::string& id) {
    std::lock_guard lock(locks_mu_);
    auto& m = locks_[id];
    if (!m) m = std::make_shared<std::shared_mutex>();
    return m;
  }

  ServiceConfig cfg_;
  detail::SqliteStore store_;
  std::mutex locks_mu_;
  std::unordered_map<std::string, std::shared_ptr<std::shared_mutex>> locks_;
};

}  // namespace strokepomdp
