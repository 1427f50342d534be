#include <gtest/gtest.h>
#include <strokepomdp/http_api.hpp>

#include <filesystem>
#include <thread>

#include "oracles.hpp"

namespace sp = strokepomdp;
using sp::json;

namespace {

json clinical(const char* ct, int score) { return {{"type", "clinical"}, {"ct", ct}, {"siriraj", score}}; }
json dsa(bool a, bool b, bool c) {
  return {{"type", "dsa"}, {"pred_ane", a}, {"pred_avm", b}, {"pred_occ", c}};
}

int status_of(const std::function<void()>& f, std::string* path = nullptr) {
  try {
    f();
  } catch (const sp::ServiceError& e) {
    if (path) *path = e.path;
    return e.status;
  }
  return 200;
}

}  // namespace

TEST(Service, FreshSessionHasPrior) {
  sp::SessionService svc;
  const auto s = svc.create(nullptr);
  EXPECT_NEAR(s["marginals"]["p_stroke_free"].get<double>(), 0.785, 1e-15);
  EXPECT_TRUE(s["history"].empty());
  EXPECT_EQ(s["belief"]["t"], 0);
}

TEST(Service, UniformOverride) {
  sp::SessionService svc;
  const auto s = svc.create(
      {{"config_overrides",
        {{"init_mixture", {{"p_stroke_free", 0.125}, {"p_single", 0.125}, {"p_double", 0.125}, {"p_triple", 0.125}}}}}});
  const auto& m = s["marginals"];
  EXPECT_DOUBLE_EQ(m["p_ane"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(m["p_avm"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(m["p_occ"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(m["p_stroke_free"].get<double>(), 0.125);
}

TEST(Service, InvalidOverrideCarriesPath) {
  sp::SessionService svc;
  std::string path;
  EXPECT_EQ(status_of([&] { svc.create({{"config_overrides", {{"dsa_accuracy", 2}}}}); }, &path), 422);
  EXPECT_EQ(path, "/config_overrides/dsa_accuracy");
  EXPECT_EQ(status_of([&] { svc.create({{"overrides", 1}}); }, &path), 422);
  EXPECT_EQ(path, "/overrides");
}

TEST(Service, SessionsAreIsolated) {
  sp::SessionService svc;
  const auto a = svc.create(nullptr)["session_id"].get<std::string>();
  const auto b = svc.create(nullptr)["session_id"].get<std::string>();
  EXPECT_NE(a, b);
  svc.step(a, {{"action", "DSA"}, {"observation", dsa(true, false, false)}});
  EXPECT_TRUE(svc.get(b)["history"].empty());
  EXPECT_EQ(svc.get(b)["belief"]["t"], 0);
  EXPECT_EQ(svc.get(a)["history"].size(), 1u);
}

TEST(Service, DsaStepMatchesExactFilter) {
  sp::SessionService svc;
  const auto id = svc.create(nullptr)["session_id"].get<std::string>();
  const auto r = svc.step(id, {{"action", "DSA"}, {"observation", dsa(true, false, false)}});
  const auto p = sp::ModelParams::defaults();
  const auto want = oracle::bayes(p, sp::initial_belief(p.init_mixture).weights, 0, sp::Action::DSA,
                                  sp::DsaReport{true, false, false});
  double p_ane = 0;
  for (int i = 0; i < 8; ++i) {
    EXPECT_NEAR(r["belief"]["weights"][i].get<double>(), want[i], 1e-12);
    if (i & 1) p_ane += want[i];
  }
  EXPECT_NEAR(r["marginals"]["p_ane"].get<double>(), p_ane, 1e-12);
  EXPECT_GT(p_ane, 0.6);
  EXPECT_TRUE(r["warning"].is_null());
}

TEST(Service, StepValidation) {
  sp::SessionService svc;
  const auto id = svc.create(nullptr)["session_id"].get<std::string>();
  std::string path;
  EXPECT_EQ(status_of([&] { svc.step(id, {{"action", "WAIT"}, {"observation", dsa(true, false, false)}}); }, &path), 422);
  EXPECT_EQ(path, "/observation/type");
  EXPECT_EQ(status_of([&] { svc.step(id, {{"action", "DSA"}, {"observation", clinical("CT_POSITIVE", 2)}}); }), 422);
  EXPECT_EQ(status_of([&] { svc.step(id, {{"action", "WAIT"}, {"observation", clinical("CT_POSITIVE", 9)}}); }, &path), 422);
  EXPECT_EQ(path, "/observation/siriraj");
  EXPECT_EQ(status_of([&] { svc.step(id, {{"action", "JUMP"}, {"observation", clinical("CT_POSITIVE", 0)}}); }, &path), 422);
  EXPECT_EQ(path, "/action");
  EXPECT_EQ(status_of([&] { svc.step("nope", {{"action", "WAIT"}, {"observation", clinical("CT_POSITIVE", 0)}}); }), 404);
  EXPECT_TRUE(svc.get(id)["history"].empty());
}

TEST(Service, DegenerateUpdateWarns) {
  sp::SessionService svc;
  const auto id = svc.create({{"config_overrides",
                               {{"dsa_accuracy", 1.0},
                                {"init_mixture",
                                 {{"p_stroke_free", 1.0}, {"p_single", 0.0}, {"p_double", 0.0}, {"p_triple", 0.0}}},
                                {"p_ane", 0.0}, {"p_avm", 0.0}, {"p_occ", 0.0}}}})["session_id"].get<std::string>();
  const auto r = svc.step(id, {{"action", "DSA"}, {"observation", dsa(false, true, false)}});
  EXPECT_EQ(r["warning"], "degenerate-update");
  EXPECT_EQ(r["marginals"]["p_stroke_free"], 1.0);
  EXPECT_TRUE(svc.replay_matches(id));
}

TEST(Service, DischargeEndsSession) {
  sp::SessionService svc;
  const auto id = svc.create(nullptr)["session_id"].get<std::string>();
  const auto r = svc.step(id, {{"action", "DISC"}, {"observation", clinical("CT_NEGATIVE", 0)}});
  EXPECT_TRUE(r["terminal"].get<bool>());
  EXPECT_EQ(status_of([&] { svc.step(id, {{"action", "WAIT"}, {"observation", clinical("CT_NEGATIVE", 0)}}); }), 409);
}

TEST(Service, ReplayReproducesStoredBelief) {
  sp::SessionService svc;
  sp::RandomStream rng(17);
  for (int k = 0; k < 50; ++k) {
    const auto id = svc.create(nullptr)["session_id"].get<std::string>();
    const int steps = 1 + static_cast<int>(rng.below(12));
    std::vector<sp::HistoryEntry> hist;
    for (int i = 0; i < steps; ++i) {
      const auto a = sp::kAllActions[rng.below(6)];
      const auto alpha = oracle::alphabet(a);
      const auto o = alpha[rng.below(alpha.size())];
      svc.step(id, {{"action", sp::to_string(a)}, {"observation", sp::to_json(o)}});
      hist.push_back({a, o, false});
    }
    ASSERT_TRUE(svc.replay_matches(id));
    // A second session fed the same history lands on the same belief.
    const auto id2 = svc.create(nullptr)["session_id"].get<std::string>();
    for (const auto& h : hist)
      svc.step(id2, {{"action", sp::to_string(h.action)}, {"observation", sp::to_json(h.observation)}});
    EXPECT_EQ(svc.get(id)["belief"], svc.get(id2)["belief"]);
  }
}

TEST(Service, RecommendExamples) {
  sp::SessionService svc;
  const auto healthy = svc.create({{"config_overrides",
                                    {{"init_mixture",
                                      {{"p_stroke_free", 1.0}, {"p_single", 0.0}, {"p_double", 0.0}, {"p_triple", 0.0}}}}}})
                           ["session_id"].get<std::string>();
  EXPECT_EQ(svc.recommend(healthy, {{"policy", "despot"}, {"seed", 1}})["action"], "DISC");

  // One aneurysm-only DSA read at 0.98 accuracy pushes p_ane past 0.6.
  const auto id = svc.create({{"config_overrides",
                               {{"init_mixture",
                                 {{"p_stroke_free", 0.3}, {"p_single", 0.2}, {"p_double", 0.0}, {"p_triple", 0.1}}}}}})
                      ["session_id"].get<std::string>();
  svc.step(id, {{"action", "DSA"}, {"observation", dsa(true, false, false)}});
  const auto m = svc.get(id)["marginals"];
  ASSERT_GT(m["p_ane"].get<double>(), 0.6);
  ASSERT_LT(m["p_stroke_free"].get<double>(), 0.9);
  const auto r = svc.recommend(id, {{"policy", "expert-hosp"}});
  EXPECT_EQ(r["action"], "COIL");
  EXPECT_EQ(r["branch"], "dominant-condition");
}

TEST(Service, RecommendIsPureAndDeterministic) {
  sp::SessionService svc;
  const auto id = svc.create(nullptr)["session_id"].get<std::string>();
  svc.step(id, {{"action", "HOSP"}, {"observation", clinical("CT_POSITIVE", 3)}});
  const auto before = svc.get(id);
  const json req{{"policy", "despot"}, {"seed", 42}, {"solver_overrides", {{"max_trials", 40}}}};
  const auto a = svc.recommend(id, req);
  const auto b = svc.recommend(id, req);
  EXPECT_EQ(a["action"], b["action"]);
  EXPECT_EQ(a["bounds"], b["bounds"]);
  EXPECT_EQ(a["bounds"].size(), 7u);
  EXPECT_EQ(svc.get(id), before);
  std::string path;
  EXPECT_EQ(status_of([&] { svc.recommend(id, {{"solver_overrides", {{"max_depth", 0}}}}); }, &path), 422);
  EXPECT_EQ(path, "/solver_overrides/max_depth");
  EXPECT_EQ(status_of([&] { svc.recommend(id, {{"policy", "oracle"}}); }, &path), 422);
  EXPECT_EQ(path, "/policy");
}

TEST(Service, TimeoutSurfacesFallback) {
  sp::SessionService svc;
  const auto id = svc.create(nullptr)["session_id"].get<std::string>();
  const auto r = svc.recommend(id, {{"solver_overrides", {{"time_budget_ms", 1e-9}, {"max_trials", 0}}}});
  EXPECT_TRUE(r["diagnostics"]["fallback"].get<bool>());
  EXPECT_EQ(r["action"], "HOSP");
}

TEST(Service, DeleteAndTtl) {
  double now = 1000;
  sp::ServiceConfig cfg;
  cfg.ttl_seconds = 60;
  cfg.clock = [&] { return now; };
  sp::SessionService svc(cfg);
  const auto a = svc.create(nullptr)["session_id"].get<std::string>();
  const auto b = svc.create(nullptr)["session_id"].get<std::string>();
  svc.remove(a);
  EXPECT_EQ(status_of([&] { svc.get(a); }), 404);
  EXPECT_EQ(status_of([&] { svc.remove(a); }), 404);
  now += 61;
  EXPECT_EQ(status_of([&] { svc.get(b); }), 404);
  const auto c = svc.create(nullptr)["session_id"].get<std::string>();
  now += 30;
  svc.step(c, {{"action", "WAIT"}, {"observation", clinical("CT_NEGATIVE", 0)}});
  now += 45;
  EXPECT_EQ(status_of([&] { svc.get(c); }), 200);
  now += 100;
  EXPECT_EQ(svc.purge_expired(), 1);
  EXPECT_EQ(svc.session_count(), 0);
}

TEST(Service, PersistsAcrossRestart) {
  const auto path = std::filesystem::temp_directory_path() / "strokepomdp_test_sessions.sqlite";
  std::filesystem::remove(path);
  sp::ServiceConfig cfg;
  cfg.db_path = path.string();
  std::string id;
  json before;
  {
    sp::SessionService svc(cfg);
    id = svc.create(nullptr)["session_id"].get<std::string>();
    svc.step(id, {{"action", "HOSP"}, {"observation", clinical("CT_POSITIVE", 4)}});
    before = svc.get(id);
  }
  {
    sp::SessionService svc(cfg);
    EXPECT_EQ(svc.get(id), before);
    EXPECT_NE(svc.create(nullptr)["session_id"], id);
  }
  std::filesystem::remove(path);
}

TEST(Service, SameConfigSameIds) {
  sp::SessionService a, b;
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.create(nullptr)["session_id"], b.create(nullptr)["session_id"]);
}

TEST(Service, ConcurrentSessions) {
  sp::SessionService svc;
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(svc.create(nullptr)["session_id"].get<std::string>());
  std::vector<std::thread> pool;
  for (int w = 0; w < 8; ++w)
    pool.emplace_back([&, w] {
      const auto& id = ids[w % 4];
      for (int k = 0; k < 10; ++k) {
        svc.step(id, {{"action", "HOSP"}, {"observation", clinical("CT_NEGATIVE", 0)}});
        svc.recommend(id, {{"policy", "expert-dsa"}});
      }
    });
  for (auto& t : pool) t.join();
  for (const auto& id : ids) {
    EXPECT_EQ(svc.get(id)["history"].size(), 20u);
    EXPECT_TRUE(svc.replay_matches(id));
  }
}

TEST(Http, EndToEnd) {
  sp::SessionService svc;
  httplib::Server server;
  sp::mount_v1(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/v1/sessions", "{}", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  const auto id = json::parse(res->body)["session_id"].get<std::string>();

  res = cli.Post("/v1/sessions/" + id + "/step",
                 json{{"action", "DSA"}, {"observation", dsa(true, false, false)}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = cli.Post("/v1/sessions/" + id + "/step",
                 json{{"action", "WAIT"}, {"observation", dsa(true, false, false)}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  EXPECT_EQ(json::parse(res->body)["error"]["path"], "/observation/type");

  res = cli.Post("/v1/sessions/" + id + "/recommend", R"({"policy":"expert-dsa"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_TRUE(json::parse(res->body).contains("action"));

  res = cli.Post("/v1/sessions/" + id + "/recommend", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = cli.Get("/v1/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["history"].size(), 1u);

  res = cli.Delete("/v1/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  res = cli.Get("/v1/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  server.stop();
  th.join();
}
