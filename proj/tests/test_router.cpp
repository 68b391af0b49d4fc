#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <doctest.h>
#include <httplib.h>

#include "hcma/error.hpp"
#include "hcma/router.hpp"
#include "support.hpp"

using namespace hcma;
using json = nlohmann::json;

namespace {

json completion(const std::vector<std::pair<std::string, double>>& top, const std::string& content = "A") {
  json tl = json::array();
  for (const auto& [t, lp] : top) tl.push_back({{"token", t}, {"logprob", lp}});
  json pos = {{"token", top.empty() ? content : top.front().first},
              {"logprob", top.empty() ? 0.0 : top.front().second},
              {"top_logprobs", tl}};
  return {{"choices", json::array({{{"index", 0},
                                    {"message", {{"role", "assistant"}, {"content", content}}},
                                    {"logprobs", {{"content", json::array({pos})}}}}})},
          {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 1}}}};
}

/// Records which members were called and optionally fails one of them.
class ScriptedBackend : public Backend {
 public:
  ScriptedBackend(std::shared_ptr<Backend> inner, std::string failing) : inner_(std::move(inner)), failing_(std::move(failing)) {}
  HopResult query(const ModelProfile& m, const RouteRequest& r) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      calls.push_back(m.model_id);
    }
    if (m.model_id == failing_) throw ProviderError("upstream timeout");
    return inner_->query(m, r);
  }
  std::vector<std::string> calls;

 private:
  std::mutex mu_;
  std::shared_ptr<Backend> inner_;
  std::string failing_;
};

struct Fixture {
  Dataset ds = generate_synthetic(1000, default_synthetic_models(), kDefaultSyntheticNoiseSd, 99);
  std::vector<ModelProfile> members = test::calibrated_profiles(ds, {0.3, 0.8, 5.0});
  std::shared_ptr<ReplayBackend> replay = std::make_shared<ReplayBackend>(ds);

  RouterConfig config(const std::vector<double>& r, const std::vector<double>& a) const {
    RouterConfig c{test::chain_of(members, r, a), {}, FailurePolicy::fail, MissingChoicePolicy::error, {}};
    return c;
  }
};

/// Server thread that stops and joins on scope exit.
struct Running {
  RouterService& svc;
  std::thread th;
  explicit Running(RouterService& s) : svc(s), th([&] { svc.listen(); }) { svc.wait_until_ready(); }
  ~Running() {
    svc.stop();
    th.join();
  }
};

}  // namespace

TEST_CASE("confidence extraction worked examples") {
  EndpointSpec mc;
  mc.model_id = "m";
  const auto even = extract_confidence(completion({{"Y", -0.7}, {"N", -0.7}}), mc, EndpointMode::free_form_ptrue,
                                       MissingChoicePolicy::error);
  CHECK(even.raw_prob == 0.5);

  // exp(-0.1) / (exp(-0.1) + exp(-3) + exp(-4) + exp(-5)), computed independently.
  const double ea = std::exp(-0.1), rest = std::exp(-3.0) + std::exp(-4.0) + std::exp(-5.0);
  const auto c = extract_confidence(completion({{"A", -0.1}, {"B", -3}, {"C", -4}, {"D", -5}}), mc,
                                    EndpointMode::multiple_choice, MissingChoicePolicy::error);
  CHECK(c.raw_prob == doctest::Approx(ea / (ea + rest)).epsilon(1e-14));
  CHECK(c.raw_prob == doctest::Approx(0.923606).epsilon(1e-6));
  CHECK(c.label == "A");
  CHECK_FALSE(c.warning);

  const auto only = extract_confidence(completion({{"A", -2.0}, {"hello", -0.1}}), mc, EndpointMode::multiple_choice,
                                       MissingChoicePolicy::renormalize);
  CHECK(only.raw_prob == 1.0);
  CHECK(only.warning);
  CHECK_THROWS_AS(extract_confidence(completion({{"A", -2.0}}), mc, EndpointMode::multiple_choice,
                                     MissingChoicePolicy::error),
                  ProviderError);

  json bare = completion({{"A", -0.1}});
  bare["choices"][0].erase("logprobs");
  try {
    extract_confidence(bare, mc, EndpointMode::multiple_choice, MissingChoicePolicy::error);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("provider does not expose logprobs") != std::string::npos);
  }
}

TEST_CASE("choice tokens match after trimming and pool their mass") {
  const std::vector<std::string> labels{"A", "B"};
  const auto c = choice_confidence({{" A", std::log(0.3)}, {"A", std::log(0.3)}, {"B", std::log(0.2)}}, labels,
                                   MissingChoicePolicy::error);
  CHECK(c.raw_prob == doctest::Approx(0.75).epsilon(1e-14));
  const auto y = ptrue_confidence({{" Yes", std::log(0.6)}, {"N", std::log(0.2)}}, {"Y", "Yes"}, {"N", "No"},
                                  MissingChoicePolicy::error);
  CHECK(y.raw_prob == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(y.label == "Y");
}

TEST_CASE("templates") {
  CHECK(render_template("Q: {question} A: {answer} {x}", "why", "because") == "Q: why A: because {x}");
  EndpointSpec s;
  s.model_id = "m";
  s.mode = EndpointMode::free_form_ptrue;
  s.verification_prompt_template.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("replayed routing agrees with the chain simulator") {
  Fixture f;
  const auto g = [&](std::size_t j, double q) {
    std::vector<double> v;
    for (const auto& r : f.ds.records()) v.push_back(f.members[j].p_hat(r.require(f.members[j].model_id).raw_prob));
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
  };
  Router router(f.config({g(0, 0.1), g(1, 0.2), g(2, 0.3)}, {g(0, 0.6), g(1, 0.7)}), f.replay,
                CostAccounting::flat);
  std::size_t answered = 0;
  for (const auto& rec : f.ds.records()) {
    const RouteResponse resp = router.route({"ignored", rec.query_id});
    const ChainTrace t = trace_query(router.config().chain, rec, CostAccounting::flat);
    CHECK(resp.trace.decisions == t.decisions);
    CHECK(resp.trace.p_hat == t.p_hat);
    CHECK(resp.trace.terminal_index == t.terminal_index);
    CHECK(resp.trace.effective_cost == t.effective_cost);
    CHECK(resp.terminal_model_id == f.members[t.terminal_index].model_id);
    CHECK((resp.status == RouteStatus::answered) == (t.decision == Decision::accept));
    answered += resp.status == RouteStatus::answered;
  }
  const auto s = router.stats();
  CHECK(s["requests"] == 1000);
  CHECK(s["answered"] == answered);
  std::int64_t terminal = 0;
  for (const auto& [id, m] : s["models"].items()) terminal += m["terminal"].get<std::int64_t>();
  CHECK(terminal == 1000);
}

TEST_CASE("replay without an id keys on the query text") {
  Fixture f;
  Router router(f.config({0.0, 0.0, 0.0}, {0.0, 0.0}), f.replay, CostAccounting::flat);
  CHECK(router.route({f.ds[3].query_id, std::nullopt}).hops[0].raw_prob == f.ds[3].entries[0].raw_prob);
  CHECK_THROWS_AS(router.route({"unknown question", std::nullopt}), ProviderError);
}

TEST_CASE("threshold extremes") {
  Fixture f;
  std::vector<ModelProfile> one{f.members[0]};
  RouterConfig open{test::chain_of(one, {0.0}, {}), {}, FailurePolicy::fail, MissingChoicePolicy::error, {}};
  Router all(open, f.replay, CostAccounting::flat);
  RouterConfig shut{test::chain_of(one, {1.0}, {}), {}, FailurePolicy::fail, MissingChoicePolicy::error, {}};
  Router none(shut, f.replay, CostAccounting::flat);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto a = all.route({"", f.ds[i].query_id});
    CHECK(a.status == RouteStatus::answered);
    CHECK(a.terminal_model_id == "m1");
    const auto n = none.route({"", f.ds[i].query_id});
    CHECK(n.status == RouteStatus::abstained);
    CHECK(n.answer.empty());
    CHECK(n.hops.size() == 1);
    CHECK(n.effective_cost == doctest::Approx(f.members[0].cost_per_mtok).epsilon(1e-15));
  }
}

TEST_CASE("later members are only called after a delegation") {
  Fixture f;
  auto scripted = std::make_shared<ScriptedBackend>(f.replay, "");
  Router router(f.config({0.0, 0.0, 0.0}, {0.0, 0.0}), scripted, CostAccounting::flat);
  for (std::size_t i = 0; i < 20; ++i) router.route({"", f.ds[i].query_id});
  CHECK(scripted->calls == std::vector<std::string>(20, "m1"));
}

TEST_CASE("provider failures: fail fast or skip") {
  Fixture f;
  auto cfg = f.config({0.0, 0.0, 0.0}, {1.0, 1.0});  // m1 and m2 always delegate
  auto fail_m2 = std::make_shared<ScriptedBackend>(f.replay, "m2");
  Router strict(cfg, fail_m2, CostAccounting::flat);
  CHECK_THROWS_AS(strict.route({"", f.ds[0].query_id}), ProviderError);
  CHECK(strict.stats()["failed"] == 1);
  CHECK(strict.stats()["requests"] == 0);

  cfg.on_failure = FailurePolicy::skip;
  Router lenient(cfg, fail_m2, CostAccounting::flat);
  const auto r = lenient.route({"", f.ds[0].query_id});
  REQUIRE(r.hops.size() == 3);
  CHECK(r.hops[1].skipped);
  CHECK(r.hops[1].decision == Decision::delegate);
  CHECK(r.hops[1].cost_units == 0);
  CHECK(r.terminal_model_id == "m3");
  CHECK(r.status == RouteStatus::answered);

  auto fail_m3 = std::make_shared<ScriptedBackend>(f.replay, "m3");
  Router tail(cfg, fail_m3, CostAccounting::flat);
  const auto x = tail.route({"", f.ds[0].query_id});
  CHECK(x.status == RouteStatus::abstained);
  CHECK(x.trace.exhausted);
  CHECK(x.error.find("upstream timeout") != std::string::npos);
}

TEST_CASE("replay responses are a pure function of the request") {
  Fixture f;
  Router router(f.config({0.1, 0.1, 0.1}, {0.9, 0.9}), f.replay, CostAccounting::flat);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto a = to_json(router.route({"", f.ds[i].query_id}), false).dump();
    const auto b = to_json(router.route({"", f.ds[i].query_id}), false).dump();
    CHECK(a == b);
  }
}

TEST_CASE("router config documents") {
  Fixture f;
  test::TempDir dir("router");
  json doc = to_json(test::chain_of(f.members, {0.1, 0.2, 0.3}, {0.5, 0.6}));
  doc["on_failure"] = "skip";
  doc["missing_choice"] = "renormalize";
  doc["cost_accounting"] = "latency";
  doc["endpoints"] = json::array({{{"model_id", "m1"}, {"base_url", "http://127.0.0.1:1/v1"}, {"api_model", "small-chat"}, {"mode", "multiple_choice"}}});
  const RouterConfig c = router_config_from_json(doc);
  CHECK(c.on_failure == FailurePolicy::skip);
  CHECK(c.missing_choice == MissingChoicePolicy::renormalize);
  CHECK(c.accounting == CostAccounting::latency);
  CHECK(c.chain.size() == 3);
  REQUIRE(c.endpoints.size() == 1);
  CHECK(c.endpoints[0].timeout_ms == 30000);
  CHECK(c.endpoints[0].api_model == "small-chat");
  doc["on_failure"] = "retry";
  CHECK_THROWS_AS(router_config_from_json(doc), ConfigError);
}

TEST_CASE("http service") {
  Fixture f;
  Router router(f.config({0.1, 0.1, 0.1}, {0.8, 0.8}), f.replay, CostAccounting::flat);
  RouterService svc(router);
  const int port = svc.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  Running run(svc);
  httplib::Client cli("127.0.0.1", port);

  auto h = cli.Get("/healthz");
  REQUIRE(h);
  CHECK(h->status == 200);

  auto bad = cli.Post("/v1/route", R"({"query": ""})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(cli.Post("/v1/route", "not json", "application/json")->status == 400);
  CHECK(cli.Post("/v1/route", R"({"query": "x", "query_id": 5})", "application/json")->status == 400);
  CHECK(cli.Post("/v1/route", R"({"query": "x", "query_id": "nope"})", "application/json")->status == 502);

  std::int64_t answered = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    json body = {{"query", "q"}, {"query_id", f.ds[i].query_id}};
    auto r = cli.Post("/v1/route", body.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const json out = json::parse(r->body);
    answered += out["status"] == "ANSWERED";
    CHECK(out["hops"].size() >= 1);
  }
  auto s = cli.Get("/stats");
  REQUIRE(s);
  const json st = json::parse(s->body);
  CHECK(st["requests"] == 100);
  CHECK(st["answered"] == answered);
  CHECK(st["failed"] == 1);
  std::int64_t terminal = 0, accept_reject = 0;
  for (const auto& [id, m] : st["models"].items()) {
    terminal += m["terminal"].get<std::int64_t>();
    accept_reject += m["accept"].get<std::int64_t>() + m["reject"].get<std::int64_t>();
  }
  CHECK(terminal == 100);
  CHECK(accept_reject == 100);
}

TEST_CASE("chat-completions backend against a local mock") {
  httplib::Server mock;
  std::atomic<int> calls{0};
  json last_body;
  std::mutex mu;
  mock.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    const json body = json::parse(req.body);
    {
      std::lock_guard<std::mutex> lock(mu);
      last_body = body;
    }
    if (body["model"] == "broken") {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
      return;
    }
    const std::string prompt = body["messages"][0]["content"];
    json out;
    if (!body.value("logprobs", false))
      out = completion({}, "Paris");
    else if (prompt.rfind("Verify:", 0) == 0)
      out = completion({{"Y", std::log(0.8)}, {"N", std::log(0.2)}}, "Y");
    else
      out = completion({{"A", -0.1}, {"B", -3}, {"C", -4}, {"D", -5}}, "A");
    res.set_content(out.dump(), "application/json");
  });
  const int port = mock.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { mock.listen_after_bind(); });
  mock.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port) + "/v1";

  EndpointSpec mc;
  mc.model_id = "mc";
  mc.base_url = base;
  EndpointSpec ff;
  ff.model_id = "ff";
  ff.base_url = base;
  ff.mode = EndpointMode::free_form_ptrue;
  ff.verification_prompt_template = "Verify: {question} -> {answer}";
  EndpointSpec down;
  down.model_id = "down";
  down.api_model = "broken";
  down.base_url = base;
  OpenAIChatBackend backend({mc, ff, down}, MissingChoicePolicy::error);

  ModelProfile pm{"mc", 1.0, 0.0, std::nullopt};
  const HopResult a = backend.query(pm, {"Capital of France? A) Paris B) Rome", std::nullopt});
  CHECK(a.raw_prob == doctest::Approx(0.923606).epsilon(1e-6));
  CHECK(a.answer == "A");
  CHECK(a.tokens_in == 12);
  CHECK(a.latency_ms.has_value());
  {
    std::lock_guard<std::mutex> lock(mu);
    CHECK(last_body["max_tokens"] == 1);
    CHECK(last_body["top_logprobs"] == 20);
    CHECK(last_body["temperature"] == 0);
  }
  CHECK(calls == 1);

  const HopResult b = backend.query(ModelProfile{"ff", 1.0, 0.0, std::nullopt}, {"Capital of France?", std::nullopt});
  CHECK(calls == 3);
  CHECK(b.answer == "Paris");
  CHECK(b.raw_prob == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(b.tokens_in == 24);
  {
    std::lock_guard<std::mutex> lock(mu);
    CHECK(last_body["messages"][0]["content"] == "Verify: Capital of France? -> Paris");
  }

  CHECK_THROWS_AS(backend.query(ModelProfile{"down", 1.0, 0.0, std::nullopt}, {"q", std::nullopt}), ProviderError);
  CHECK_THROWS_AS(backend.query(ModelProfile{"other", 1.0, 0.0, std::nullopt}, {"q", std::nullopt}), ConfigError);

  EndpointSpec dead = mc;
  dead.model_id = "dead";
  dead.base_url = "http://127.0.0.1:1/v1";
  dead.timeout_ms = 500;
  OpenAIChatBackend unreachable({dead}, MissingChoicePolicy::error);
  CHECK_THROWS_AS(unreachable.query(ModelProfile{"dead", 1.0, 0.0, std::nullopt}, {"q", std::nullopt}), ProviderError);

  mock.stop();
  th.join();
}
