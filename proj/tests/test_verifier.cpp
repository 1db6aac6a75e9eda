// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <future>
#include <random>

#include "proverloop/verifier.hpp"
#include "testutil.hpp"

using namespace proverloop;

namespace {

VerificationResult tactic_ast_result() {
  auto text = testutil::read_fixture("tactic_ast_result.json");
  auto j = parse_json(text);
  REQUIRE(j.ok());
  auto v = verification_result_from_wire(j.value());
  REQUIRE(v.ok());
  return std::move(v).value();
}

VerificationResult line24_failure() {
  VerificationResult v;
  v.passed = false;
  v.diagnostics.push_back(
      {24,
       "application type mismatch\n  Irrational.mul_rat hx hy\nargument\n  hy\nhas type\n"
       "  ↑y ≠ 0 : Prop\nbut is expected to have type\n  y ≠ 0 : Prop",
       Severity::Error});
  return v;
}

}  // namespace

TEST_CASE("goal_count basics", "[verifier]") {
  CHECK(goal_count("no goals").value() == 0);
  CHECK(goal_count("case a ⊢ P\n\ncase b ⊢ Q").value() == 2);
  auto empty = goal_count("");
  REQUIRE_FALSE(empty.ok());
  CHECK(empty.error().code == Errc::UnrecognizedState);
  auto junk = goal_count("not a state");
  REQUIRE_FALSE(junk.ok());
  CHECK(junk.error().code == Errc::UnrecognizedState);
}

TEST_CASE("goal_count on the AST fixture states", "[verifier]") {
  const auto v = tactic_ast_result();
  REQUIRE(v.ast.has_value());
  REQUIRE(v.ast->tactics.size() == 4);
  CHECK(goal_count(v.ast->tactics[0].state_before).value() == 1);
  CHECK(goal_count(v.ast->tactics[3].state_after).value() == 0);
  for (const auto& t : v.ast->tactics) {
    CHECK(goal_count(t.state_before).value() == 1);
  }
}

TEST_CASE("goal_count is additive over concatenated goal blocks", "[verifier][property]") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n_dist(1, 5);
  for (int i = 0; i < 200; ++i) {
    const int a = n_dist(rng);
    const int b = n_dist(rng);
    std::string sa, sb;
    for (int k = 0; k < a; ++k) sa += "case x ⊢ G" + std::to_string(k) + "\n";
    for (int k = 0; k < b; ++k) sb += "case y ⊢ H" + std::to_string(k) + "\n";
    CHECK(goal_count(sa).value() == a);
    CHECK(goal_count(sb).value() == b);
    CHECK(goal_count(sa + sb).value() == a + b);
  }
}

TEST_CASE("render_feedback sentinels", "[verifier]") {
  VerificationResult pass;
  pass.passed = true;
  CHECK(render_feedback(pass) == "Compilation Success!");

  VerificationResult bare_failure;
  bare_failure.passed = false;
  CHECK(render_feedback(bare_failure) == "Compilation failed.");
}

TEST_CASE("render_feedback formats the worked failure exactly", "[verifier]") {
  const std::string expected =
      "Compilation failed.\nFind an error at line 24\napplication type mismatch\n"
      "  Irrational.mul_rat hx hy\nargument\n  hy\nhas type\n  ↑y ≠ 0 : Prop\n"
      "but is expected to have type\n  y ≠ 0 : Prop";
  CHECK(render_feedback(line24_failure()) == expected);
}

TEST_CASE("render_feedback orders diagnostics by line", "[verifier]") {
  VerificationResult v;
  v.passed = false;
  v.diagnostics.push_back({9, "later", Severity::Error});
  v.diagnostics.push_back({2, "earlier", Severity::Warning});
  const std::string out = render_feedback(v);
  CHECK(out == "Compilation failed.\nFind a warning at line 2\nearlier\n"
               "Find an error at line 9\nlater");
}

TEST_CASE("render_feedback respects the byte budget", "[verifier][property]") {
  std::mt19937_64 rng(5150);
  std::uniform_int_distribution<int> diag_dist(0, 12);
  std::uniform_int_distribution<int> line_dist(1, 400);
  std::uniform_int_distribution<std::size_t> budget_dist(64, 600);
  for (int i = 0; i < 300; ++i) {
    VerificationResult v;
    v.passed = false;
    const int n = diag_dist(rng);
    for (int d = 0; d < n; ++d) {
      v.diagnostics.push_back({line_dist(rng), testutil::random_text(rng, 160), Severity::Error});
    }
    FeedbackRenderOptions opt;
    opt.byte_budget = budget_dist(rng);
    const std::string out = render_feedback(v, opt);
    CHECK(out.size() <= opt.byte_budget);
    CHECK(out.rfind("Compilation failed.", 0) == 0);
  }
  VerificationResult pass;
  pass.passed = true;
  CHECK(render_feedback(pass, {64}).rfind("Compilation Success!", 0) == 0);
}

TEST_CASE("render_feedback marks truncation", "[verifier]") {
  VerificationResult v;
  v.passed = false;
  v.diagnostics.push_back({1, std::string(5000, 'x'), Severity::Error});
  const std::string out = render_feedback(v);
  CHECK(out.size() <= 2048);
  const std::string marker = "…[truncated]";
  REQUIRE(out.size() > marker.size());
  CHECK(out.substr(out.size() - marker.size()) == marker);
}

TEST_CASE("mock backend returns scripted verdicts", "[verifier]") {
  const std::string bad_code = testutil::read_code_fixture("correction_failed_proof.lean");
  const std::string good_code = testutil::read_code_fixture("correction_fixed_proof.lean");

  MockVerifierBackend mock;
  mock.script(bad_code, line24_failure());
  VerificationResult pass;
  pass.passed = true;
  mock.script(good_code, pass);

  auto bad = verify(VerificationRequest{bad_code, 60.0}, mock);
  REQUIRE(bad.ok());
  CHECK_FALSE(bad.value().passed);
  REQUIRE(bad.value().diagnostics.size() == 1);
  CHECK(bad.value().diagnostics[0].line == 24);
  CHECK(bad.value().diagnostics[0].message.rfind("application type mismatch", 0) == 0);

  auto good = verify(VerificationRequest{good_code, 60.0}, mock);
  REQUIRE(good.ok());
  CHECK(good.value().passed);

  auto unknown = verify(VerificationRequest{"theorem other : True := trivial", 60.0}, mock);
  REQUIRE(unknown.ok());
  CHECK_FALSE(unknown.value().passed);
}

TEST_CASE("verify rejects empty code", "[verifier]") {
  MockVerifierBackend mock;
  auto r = verify(VerificationRequest{"", 60.0}, mock);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().code == Errc::BadArguments);
}

TEST_CASE("verify demotes error diagnostics on a pass", "[verifier]") {
  MockVerifierBackend mock;
  VerificationResult odd;
  odd.passed = true;
  odd.diagnostics.push_back({3, "linter nit", Severity::Error});
  mock.script("code", odd);
  auto r = verify(VerificationRequest{"code", 60.0}, mock);
  REQUIRE(r.ok());
  CHECK(r.value().passed);
  REQUIRE(r.value().diagnostics.size() == 1);
  CHECK(r.value().diagnostics[0].severity == Severity::Warning);
  CHECK_FALSE(r.value().has_error_diagnostic());
}

TEST_CASE("wire round trip preserves the AST fixture", "[verifier]") {
  const auto v = tactic_ast_result();
  auto round = verification_result_from_wire(verification_result_to_wire(v));
  REQUIRE(round.ok());
  CHECK(round.value().passed == v.passed);
  REQUIRE(round.value().ast.has_value());
  CHECK(round.value().ast->tactics == v.ast->tactics);
  CHECK(round.value().ast->premises == v.ast->premises);
  CHECK(round.value().ast->declarations == v.ast->declarations);
}

TEST_CASE("wire parsing rejects malformed responses", "[verifier]") {
  CHECK(verification_result_from_wire(json::parse("{}")).error().code == Errc::ProtocolError);
  CHECK(verification_result_from_wire(json::parse(R"({"pass":"yes"})")).error().code ==
        Errc::ProtocolError);
  CHECK(verification_result_from_wire(
            json::parse(R"({"pass":false,"errors":[{"line":0,"message":"x"}]})"))
            .error()
            .code == Errc::ProtocolError);
  CHECK(verification_result_from_wire(
            json::parse(R"({"pass":true,"ast":{"tactics":[{"pos":5,"endPos":5}]}})"))
            .error()
            .code == Errc::ProtocolError);
  // type confusion stays a value error, never an exception
  CHECK(verification_result_from_wire(
            json::parse(R"({"pass":true,"ast":{"tactics":[{"pos":"a","endPos":3}]}})"))
            .error()
            .code == Errc::ProtocolError);
  CHECK(verification_result_from_wire(
            json::parse(R"({"pass":true,"ast":{"tactics":[{"pos":-2,"endPos":3}]}})"))
            .error()
            .code == Errc::ProtocolError);
  CHECK(verification_result_from_wire(json::parse(R"({"pass":true,"elapsed":"slow"})"))
            .error()
            .code == Errc::ProtocolError);
}

TEST_CASE("command backend round trips json over pipes", "[verifier]") {
  CommandVerifierBackend backend(
      "cat > /dev/null; printf '{\"pass\": true, \"errors\": []}'", /*grace_s=*/5.0);
  auto r = verify(VerificationRequest{"theorem t : True := trivial", 10.0}, backend);
  REQUIRE(r.ok());
  CHECK(r.value().passed);
}

TEST_CASE("command backend maps missing commands to BackendUnavailable", "[verifier]") {
  CommandVerifierBackend backend("/definitely/not/a/real/verifier", 5.0);
  auto r = verify(VerificationRequest{"x", 10.0}, backend);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().code == Errc::BackendUnavailable);
}

TEST_CASE("command backend surfaces garbage output as ProtocolError", "[verifier]") {
  CommandVerifierBackend backend("cat > /dev/null; echo 'not json'", 5.0);
  auto r = verify(VerificationRequest{"x", 10.0}, backend);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().code == Errc::ProtocolError);
}

TEST_CASE("command backend timeout is a failure value, not an exception", "[verifier]") {
  CommandVerifierBackend backend("sleep 30", /*grace_s=*/0.2);
  auto r = verify(VerificationRequest{"x", 0.1}, backend);
  REQUIRE(r.ok());
  CHECK_FALSE(r.value().passed);
  REQUIRE_FALSE(r.value().diagnostics.empty());
  CHECK(r.value().diagnostics[0].message.rfind("Timeout", 0) == 0);
}

TEST_CASE("gateway multiplexes independent requests", "[verifier]") {
  MockVerifierBackend mock;
  VerificationResult pass;
  pass.passed = true;
  for (int i = 0; i < 32; ++i) mock.script("code " + std::to_string(i), pass);

  VerifierGateway gateway(mock, /*workers=*/8);
  std::vector<std::future<Expected<VerificationResult>>> futures;
  for (int i = 0; i < 32; ++i)
    futures.push_back(gateway.submit(VerificationRequest{"code " + std::to_string(i), 5.0}));
  for (auto& f : futures) {
    auto r = f.get();
    REQUIRE(r.ok());
    CHECK(r.value().passed);
  }
}

TEST_CASE("http backend round trips against a local service", "[verifier]") {
  httplib::Server server;
  server.Post("/verify", [](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    const bool pass = body["cmd"].get<std::string>().find("sorry") == std::string::npos;
    json out{{"pass", pass}, {"errors", json::array()}};
    if (!pass) out["errors"].push_back({{"line", 3}, {"message", "declaration uses sorry"}});
    res.set_content(out.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpVerifierBackend backend("http://127.0.0.1:" + std::to_string(port) + "/verify");
  auto pass = verify(VerificationRequest{"theorem ok : True := trivial", 10.0}, backend);
  auto fail = verify(VerificationRequest{"theorem no : False := sorry", 10.0}, backend);
  server.stop();
  listener.join();

  REQUIRE(pass.ok());
  CHECK(pass.value().passed);
  REQUIRE(fail.ok());
  CHECK_FALSE(fail.value().passed);
  REQUIRE(fail.value().diagnostics.size() == 1);
  CHECK(fail.value().diagnostics[0].line == 3);
}

TEST_CASE("http backend maps unreachable endpoints to BackendUnavailable", "[verifier]") {
  HttpVerifierBackend backend("http://127.0.0.1:1/verify");
  auto r = verify(VerificationRequest{"x", 5.0}, backend);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().code == Errc::BackendUnavailable);
}

TEST_CASE("http backend turns a hung service into a Timeout verdict", "[verifier]") {
  httplib::Server server;
  server.Post("/verify", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(900));
    res.set_content(R"({"pass": true})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpVerifierBackend backend("http://127.0.0.1:" + std::to_string(port) + "/verify",
                              /*grace_s=*/0.1);
  auto r = verify(VerificationRequest{"x", 0.1}, backend);
  server.stop();
  listener.join();

  REQUIRE(r.ok());
  CHECK_FALSE(r.value().passed);
  REQUIRE_FALSE(r.value().diagnostics.empty());
  CHECK(r.value().diagnostics[0].message.rfind("Timeout", 0) == 0);
}

TEST_CASE("mock script file loads", "[verifier]") {
  const auto dir = testutil::make_temp_dir("verifier_script");
  const std::string code = "theorem t : True := trivial";
  json script{
      {sha256_hex(code), {{"pass", false}, {"errors", {{{"line", 2}, {"message", "boom"}}}}}},
      {"*", {{"pass", true}}}};
  REQUIRE(write_file((dir / "script.json").string(), script.dump()).ok());

  auto mock = MockVerifierBackend::from_file((dir / "script.json").string());
  REQUIRE(mock.ok());
  auto scripted = verify(VerificationRequest{code, 5.0}, mock.value());
  REQUIRE(scripted.ok());
  CHECK_FALSE(scripted.value().passed);
  CHECK(scripted.value().diagnostics[0].line == 2);
  auto fallback = verify(VerificationRequest{"anything else", 5.0}, mock.value());
  REQUIRE(fallback.ok());
  CHECK(fallback.value().passed);
}
