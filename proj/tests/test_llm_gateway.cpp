// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <httplib.h>

#include <random>
#include <thread>

#include "seedforge/common/error.hpp"
#include "seedforge/llm/gateway.hpp"
#include "seedforge/common/util.hpp"
#include "test_support.hpp"

using namespace seedforge;
using namespace seedforge::llm;
using seedforge::testing::make_gateway;
using seedforge::testing::reply;

namespace {

template <typename F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no seedforge::Error thrown";
  return ErrorKind::IoError;
}

Completion completion(std::uint64_t prompt, std::uint64_t out, std::string model = "mock") {
  return Completion{"x", prompt, out, std::move(model)};
}

}  // namespace

TEST(Prompts, FeatureAnalysisMentionsFormat) {
  auto lib = PromptLibrary::builtin();
  auto text = lib.render("feature_analysis", {{"format", "TIFF"}});
  EXPECT_NE(text.find("TIFF"), std::string::npos);
}

TEST(Prompts, UnboundPlaceholderIsMissingBinding) {
  auto lib = PromptLibrary::builtin();
  try {
    lib.render("create_generator", {{"format", "TIFF"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingBinding);
    EXPECT_EQ(e.detail(), "feature");
  }
}

TEST(Prompts, KnownFeaturesEmbeddedVerbatim) {
  auto lib = PromptLibrary::builtin();
  auto text = lib.render("rare_feature_extraction", {{"format", "PDF"}, {"known_features", "1. Encryption\n2. Forms"}});
  EXPECT_NE(text.find("1. Encryption\n2. Forms"), std::string::npos);
}

TEST(Prompts, UnknownTemplateId) {
  auto lib = PromptLibrary::builtin();
  EXPECT_EQ(error_kind_of([&] { lib.render("no_such_prompt", {}); }), ErrorKind::UnknownTemplate);
}

TEST(Prompts, RenderIsPure) {
  auto lib = PromptLibrary::builtin();
  Bindings b{{"format", "PNG"}, {"feature", "interlacing"}};
  EXPECT_EQ(lib.render(PromptKind::CreateGenerator, b), lib.render(PromptKind::CreateGenerator, b));
  EXPECT_EQ(lib.body(PromptKind::CreateGenerator), PromptLibrary::builtin_body(PromptKind::CreateGenerator));
}

TEST(Prompts, ExtraBindingsIgnoredAndEveryPlaceholderDeclared) {
  auto lib = PromptLibrary::builtin();
  for (auto kind : kAllPromptKinds) {
    Bindings b{{"unused", "zzz"}};
    for (const auto& name : PromptLibrary::declared_placeholders(kind)) b[name] = "<" + name + ">";
    auto text = lib.render(kind, b);
    EXPECT_EQ(text.find("{{"), std::string::npos) << to_string(kind);
    EXPECT_EQ(text.find("zzz"), std::string::npos);
  }
}

TEST(Prompts, SetRejectsUndeclaredPlaceholder) {
  auto lib = PromptLibrary::builtin();
  EXPECT_EQ(error_kind_of([&] { lib.set(PromptKind::FeatureAnalysis, "{{format}} {{bogus}}"); }),
            ErrorKind::InvalidTemplate);
  lib.set(PromptKind::FeatureAnalysis, "list {{format}}");
  EXPECT_EQ(lib.render(PromptKind::FeatureAnalysis, {{"format", "GIF"}}), "list GIF");
}

TEST(Prompts, ShippedTemplateFilesMatchBuiltins) {
  auto lib = PromptLibrary::load(SEEDFORGE_SOURCE_DIR "/templates");
  for (auto kind : kAllPromptKinds) {
    EXPECT_EQ(lib.body(kind), PromptLibrary::builtin_body(kind)) << to_string(kind);
  }
}

TEST(Prompts, LoadOverridesSomeTemplates) {
  seedforge::testing::TempDir dir;
  write_file_atomic(dir / "havoc_mutation.txt", "mutate {{generator}} along {{axis}}");
  auto lib = PromptLibrary::load(dir.path());
  EXPECT_EQ(lib.body(PromptKind::HavocMutation), "mutate {{generator}} along {{axis}}");
  EXPECT_EQ(lib.body(PromptKind::CreateGenerator), PromptLibrary::builtin_body(PromptKind::CreateGenerator));
}

TEST(Prompts, LeadingLicenseLineIsNotPromptText) {
  seedforge::testing::TempDir dir;
  write_file_atomic(dir / "feature_analysis.txt", "# SPDX-License-Identifier: Apache-2.0\nlist {{format}}");
  EXPECT_EQ(PromptLibrary::load(dir.path()).body(PromptKind::FeatureAnalysis), "list {{format}}");
}

TEST(Dialogue, RejectsConsecutiveUserTurns) {
  Dialogue d(PromptKind::FeatureAnalysis, "a");
  EXPECT_EQ(error_kind_of([&] { d.add_user(PromptKind::Regenerate, "b"); }), ErrorKind::InvalidDialogue);
  d.add_assistant("r");
  d.add_user(PromptKind::Regenerate, "b");
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.last_user_kind(), PromptKind::Regenerate);
}

TEST(Dialogue, EmptyDialogueCannotBeSubmitted) {
  Dialogue d;
  EXPECT_EQ(error_kind_of([&] { d.validate_for_submit(); }), ErrorKind::InvalidDialogue);
}

TEST(Gateway, ScriptedEcho) {
  auto gw = make_gateway({reply(PromptKind::FeatureAnalysis, "hello")});
  auto c = gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p"));
  EXPECT_EQ(c.text, "hello");
  EXPECT_EQ(gw.completions(), 1u);
}

TEST(Gateway, ExhaustedScriptIsTransportError) {
  auto gw = make_gateway({reply(PromptKind::FeatureAnalysis, "hello")});
  gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p"));
  EXPECT_EQ(error_kind_of([&] { gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p")); }),
            ErrorKind::TransportError);
}

TEST(Gateway, KindMismatchFailsSequentialScript) {
  auto gw = make_gateway({reply(PromptKind::FeatureAnalysis, "hello")});
  EXPECT_EQ(error_kind_of([&] { gw.complete(Dialogue(PromptKind::CreateGenerator, "p")); }),
            ErrorKind::MockScriptMismatch);
}

TEST(Gateway, ByKindModeKeysRepliesByKind) {
  auto gw = make_gateway({reply(PromptKind::CreateGenerator, "g1"), reply(PromptKind::FeatureAnalysis, "f1"),
                          reply(PromptKind::CreateGenerator, "g2")},
                         MockBackend::Mode::ByKind, true);
  EXPECT_EQ(gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p")).text, "f1");
  EXPECT_EQ(gw.complete(Dialogue(PromptKind::CreateGenerator, "p")).text, "g1");
  EXPECT_EQ(gw.complete(Dialogue(PromptKind::CreateGenerator, "p")).text, "g2");
  EXPECT_EQ(gw.complete(Dialogue(PromptKind::CreateGenerator, "p")).text, "g2");  // repeat_last
  EXPECT_EQ(seedforge::testing::mock_of(gw).calls(PromptKind::CreateGenerator), 3u);
}

TEST(Gateway, MockCursorSurvivesSaveAndLoad) {
  std::vector<MockRecord> script{reply(PromptKind::FeatureAnalysis, "a"), reply(PromptKind::FeatureAnalysis, "b")};
  MockBackend first(script);
  first.complete(Dialogue(PromptKind::FeatureAnalysis, "p"), {});
  MockBackend second(script);
  second.load_state(first.save_state());
  EXPECT_EQ(second.complete(Dialogue(PromptKind::FeatureAnalysis, "p"), {}).text, "b");
}

TEST(Gateway, BlankReplyIsEmptyReply) {
  auto gw = make_gateway({reply(PromptKind::FeatureAnalysis, "  \n")});
  EXPECT_EQ(error_kind_of([&] { gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p")); }), ErrorKind::EmptyReply);
}

TEST(Gateway, TokenCapRefusesBeforeDispatch) {
  GatewayConfig config;
  config.token_cap = 1000;
  auto gw = make_gateway({MockRecord{PromptKind::FeatureAnalysis, "x", 900, 90},
                          MockRecord{PromptKind::FeatureAnalysis, "y", 11, 5}},
                         MockBackend::Mode::Sequential, false, config);
  gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p"));
  ASSERT_EQ(gw.ledger().totals().sum(), 990u);
  EXPECT_EQ(error_kind_of([&] { gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p")); }),
            ErrorKind::BudgetExceeded);
  EXPECT_TRUE(gw.budget_exhausted());
  EXPECT_EQ(seedforge::testing::mock_of(gw).calls(), 1u);  // never dispatched
  EXPECT_EQ(gw.ledger().totals().sum(), 990u);
}

TEST(Gateway, TokenCapAdmitsRequestThatFits) {
  GatewayConfig config;
  config.token_cap = 1000;
  auto gw = make_gateway({MockRecord{PromptKind::FeatureAnalysis, "x", 900, 90},
                          MockRecord{PromptKind::FeatureAnalysis, "y", 10, 5}},
                         MockBackend::Mode::Sequential, false, config);
  gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p"));
  EXPECT_NO_THROW(gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p")));
  EXPECT_FALSE(gw.budget_exhausted());
}

TEST(Gateway, CompletionTokensClampedToMaxTokens) {
  GatewayConfig config;
  config.decoding.max_tokens = 50;
  auto gw = make_gateway({MockRecord{PromptKind::FeatureAnalysis, "x", 10, 500}}, MockBackend::Mode::Sequential,
                         false, config);
  EXPECT_EQ(gw.complete(Dialogue(PromptKind::FeatureAnalysis, "p")).completion_tokens, 50u);
}

TEST(Gateway, TranscriptsAreDeterministic) {
  auto run = [] {
    auto gw = make_gateway({reply(PromptKind::FeatureAnalysis, "1. A: a"), reply(PromptKind::CreateGenerator, "g")});
    gw.complete(Dialogue(PromptKind::FeatureAnalysis, gw.render(PromptKind::FeatureAnalysis, {{"format", "X"}})));
    gw.complete(Dialogue(PromptKind::CreateGenerator, "c"));
    return std::make_pair(gw.transcript(), gw.ledger());
  };
  EXPECT_EQ(run(), run());
}

TEST(CodeBlock, SingleFence) { EXPECT_EQ(extract_code_block("here:\n```\nprint(1)\n```"), "print(1)"); }

TEST(CodeBlock, NoFenceFallsBackToText) { EXPECT_EQ(extract_code_block("print(1)"), "print(1)"); }

TEST(CodeBlock, BlankBlockIsEmptyScript) {
  EXPECT_EQ(error_kind_of([] { extract_code_block("```\n```"); }), ErrorKind::EmptyScript);
}

TEST(CodeBlock, FirstBlockWinsAndInfoStringSkipped) {
  EXPECT_EQ(extract_code_block("```python\na = 1\n```\ntext\n```\nb = 2\n```"), "a = 1");
}

TEST(Ledger, Summation) {
  UsageLedger ledger;
  auto prices = seedforge::testing::mock_prices();
  for (int i = 0; i < 3; ++i) ledger = record_usage(ledger, completion(1000, 500), prices);
  EXPECT_EQ(ledger.totals(), (TokenTotals{3000, 1500}));
}

TEST(Ledger, CostFromPriceTable) {
  UsageLedger ledger;
  PriceTable prices{{"mock", Price{1e-6, 2e-6}}};
  for (int i = 0; i < 3; ++i) ledger.record(completion(1000, 500), prices);
  // 3000 x 1e-6 + 1500 x 2e-6
  EXPECT_NEAR(ledger.cost(prices), 0.006, 1e-12);
}

TEST(Ledger, UnpricedModel) {
  UsageLedger ledger;
  EXPECT_EQ(error_kind_of([&] { ledger.record(completion(1, 1, "other"), seedforge::testing::mock_prices()); }),
            ErrorKind::UnknownModel);
  EXPECT_EQ(ledger.totals().sum(), 0u);
}

TEST(Ledger, JsonRoundTrip) {
  UsageLedger ledger;
  PriceTable prices{{"a", Price{1, 1}}, {"b", Price{2, 2}}};
  ledger.record(completion(5, 7, "a"), prices);
  ledger.record(completion(11, 13, "b"), prices);
  EXPECT_EQ(UsageLedger::from_json(ledger.to_json()), ledger);
}

TEST(Ledger, ConservationOverRandomSessions) {
  std::mt19937_64 rng(7);
  for (int session = 0; session < 50; ++session) {
    std::vector<MockRecord> records;
    std::uint64_t prompt = 0, out = 0;
    const int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      auto p = rng() % 3000, c = rng() % 4000;
      records.push_back(MockRecord{PromptKind::HavocMutation, "r", p, c});
    }
    auto gw = make_gateway(records);
    for (int i = 0; i < n; ++i) {
      auto c = gw.complete(Dialogue(PromptKind::HavocMutation, "p"));
      prompt += c.prompt_tokens;
      out += c.completion_tokens;
    }
    EXPECT_EQ(gw.ledger().totals(), (TokenTotals{prompt, out}));
  }
}

TEST(HttpBackend, RequestBodyCarriesDialogueAndDecoding) {
  HttpBackend backend(HttpBackendConfig{"http://127.0.0.1:1", "/v1/chat/completions", "m", "k", std::chrono::seconds(1)});
  Dialogue d(PromptKind::CreateGenerator, "make one");
  d.add_assistant("```\nx\n```");
  d.add_user(PromptKind::Regenerate, "fix it");
  auto body = backend.request_body(d, Decoding{0.2, 77});
  EXPECT_EQ(body["model"], "m");
  EXPECT_EQ(body["max_tokens"], 77);
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
  ASSERT_EQ(body["messages"].size(), 3u);
  EXPECT_EQ(body["messages"][1]["role"], "assistant");
  EXPECT_EQ(body["messages"][2]["content"], "fix it");
}

TEST(HttpBackend, TalksToLocalServer) {
  httplib::Server server;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    res.set_content(
        R"({"model":"local-1","choices":[{"message":{"role":"assistant","content":"pong"}}],)"
        R"("usage":{"prompt_tokens":12,"completion_tokens":3}})",
        "application/json");
  });
  server.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackend backend(HttpBackendConfig{"http://127.0.0.1:" + std::to_string(port), "/v1/chat/completions",
                                        "local-1", "secret", std::chrono::seconds(5)});
  auto c = backend.complete(Dialogue(PromptKind::FeatureAnalysis, "ping"), {});
  EXPECT_EQ(c.text, "pong");
  EXPECT_EQ(c.prompt_tokens, 12u);
  EXPECT_EQ(c.completion_tokens, 3u);
  EXPECT_EQ(c.model_id, "local-1");
  EXPECT_EQ(seen_auth, "Bearer secret");

  HttpBackend failing(HttpBackendConfig{"http://127.0.0.1:" + std::to_string(port), "/fail", "local-1", "",
                                        std::chrono::seconds(5)});
  EXPECT_EQ(error_kind_of([&] { failing.complete(Dialogue(PromptKind::FeatureAnalysis, "ping"), {}); }),
            ErrorKind::TransportError);
  server.stop();
  thread.join();
}

TEST(HttpBackend, MalformedResponseIsTransportError) {
  HttpBackend backend(HttpBackendConfig{});
  EXPECT_EQ(error_kind_of([&] { backend.parse_response("{\"choices\":[]}"); }), ErrorKind::TransportError);
  EXPECT_EQ(error_kind_of([&] { backend.parse_response("not json"); }), ErrorKind::TransportError);
}
