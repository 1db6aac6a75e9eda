// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>

#include "proverloop/proverloop.hpp"
#include "testutil.hpp"

using namespace proverloop;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  const auto dir = testutil::make_temp_dir("cli_io");
  const std::string out_path = (dir / "stdout").string();
  const std::string err_path = (dir / "stderr").string();
  const std::string command = std::string("'") + PROVERLOOP_CLI_BINARY + "' " + args + " > '" +
                              out_path + "' 2> '" + err_path + "'";
  const int status = std::system(command.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = read_file(out_path).value_or("");
  result.err = read_file(err_path).value_or("");
  return result;
}

const char* kPassGen = "done\n<code>theorem ok : True := trivial</code>";
const char* kFailGen = "hmm\n<code>theorem no : False := sorry</code>";

// Mock scripts plus a two-statement suite: stmt_pass always solves,
// stmt_mixed alternates between a passing and a failing rollout.
struct ProveSetup {
  std::filesystem::path dir = testutil::make_temp_dir("cli_prove");
  std::string statements = (dir / "statements.jsonl").string();
  std::string model_script = (dir / "model.jsonl").string();
  std::string verifier_script = (dir / "verifier.json").string();

  ProveSetup() {
    const std::string stmt_pass = "prove: the easy one";
    const std::string stmt_mixed = "prove: the mixed one";
    std::string statements_lines;
    statements_lines +=
        json{{"id", "stmt_pass"}, {"statement", stmt_pass}}.dump() + "\n";
    statements_lines +=
        json{{"id", "stmt_mixed"}, {"statement", stmt_mixed}}.dump() + "\n";
    REQUIRE(write_file(statements, statements_lines).ok());

    std::string model_lines;
    model_lines += json{{"prompt_sha256", sha256_hex(stmt_pass)},
                        {"turn", 0},
                        {"text", kPassGen},
                        {"finish_reason", "stop"}}
                       .dump() +
                   "\n";
    model_lines += json{{"prompt_sha256", sha256_hex(stmt_mixed)},
                        {"turn", 0},
                        {"text", kPassGen},
                        {"finish_reason", "stop"}}
                       .dump() +
                   "\n";
    model_lines += json{{"prompt_sha256", sha256_hex(stmt_mixed)},
                        {"turn", 0},
                        {"text", kFailGen},
                        {"finish_reason", "stop"}}
                       .dump() +
                   "\n";
    REQUIRE(write_file(model_script, model_lines).ok());

    const json verifier{
        {sha256_hex("theorem ok : True := trivial"), {{"pass", true}}},
        {sha256_hex("theorem no : False := sorry"),
         {{"pass", false},
          {"errors", {{{"line", 1}, {"message", "declaration uses sorry"}}}}}}};
    REQUIRE(write_file(verifier_script, verifier.dump()).ok());
  }

  std::string prove_args(const std::string& out_dir, const std::string& extra = "") const {
    return "prove --statements '" + statements + "' --model-backend mock:'" + model_script +
           "' --verifier-backend mock:'" + verifier_script + "' --out '" + out_dir + "' " +
           extra;
  }
};

}  // namespace

TEST_CASE("prove runs the mock pipeline end to end", "[cli]") {
  ProveSetup setup;
  const auto out_dir = testutil::make_temp_dir("cli_out");
  auto r = run_cli(setup.prove_args(out_dir.string(),
                                    "--first-round 2 --max-iterations 0 --group-size 2"));
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);

  auto episodes = read_jsonl((out_dir / "episodes.jsonl").string());
  REQUIRE(episodes.ok());
  REQUIRE(episodes.value().size() == 2);
  CHECK(episodes.value()[0]["statement_id"] == "stmt_pass");
  CHECK(episodes.value()[0]["solved"] == true);
  CHECK(episodes.value()[0]["verifier_calls"] == 2);

  // the all-pass statement is dropped, the mixed one trains
  auto groups = read_jsonl((out_dir / "groups.jsonl").string());
  REQUIRE(groups.ok());
  REQUIRE(groups.value().size() == 1);
  const json& g = groups.value()[0];
  CHECK(g["statement_id"] == "stmt_mixed");
  CHECK(g["G"] == 2);
  CHECK(g["objective_dapo"].is_number());
  CHECK(g["objective_grpo"].is_number());

  auto dropped = read_jsonl((out_dir / "dropped.jsonl").string());
  REQUIRE(dropped.ok());
  REQUIRE(dropped.value().size() == 1);
  CHECK(dropped.value()[0]["statement_id"] == "stmt_pass");
  CHECK(dropped.value()[0]["reason"] == "solved-all");
}

TEST_CASE("prove output is byte-identical across runs", "[cli]") {
  ProveSetup setup;
  const auto out_a = testutil::make_temp_dir("cli_det_a");
  const auto out_b = testutil::make_temp_dir("cli_det_b");
  const std::string flags = "--first-round 3 --max-iterations 0 --seed 41";
  REQUIRE(run_cli(setup.prove_args(out_a.string(), flags)).exit_code == 0);
  REQUIRE(run_cli(setup.prove_args(out_b.string(), flags)).exit_code == 0);
  const auto a = read_file((out_a / "episodes.jsonl").string());
  const auto b = read_file((out_b / "episodes.jsonl").string());
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(a.value() == b.value());
  CHECK_FALSE(a.value().empty());
}

TEST_CASE("prove honors the manifest with flags overriding", "[cli]") {
  ProveSetup setup;
  const json manifest{{"first_round", 3}, {"max_iterations", 0}};
  const std::string manifest_path = (setup.dir / "manifest.json").string();
  REQUIRE(write_file(manifest_path, manifest.dump()).ok());

  const auto out_a = testutil::make_temp_dir("cli_manifest_a");
  auto from_manifest =
      run_cli(setup.prove_args(out_a.string(), "--config '" + manifest_path + "'"));
  REQUIRE(from_manifest.exit_code == 0);
  auto episodes = read_jsonl((out_a / "episodes.jsonl").string());
  REQUIRE(episodes.ok());
  CHECK(episodes.value()[0]["transcripts"].size() == 3);

  const auto out_b = testutil::make_temp_dir("cli_manifest_b");
  auto overridden = run_cli(setup.prove_args(
      out_b.string(), "--config '" + manifest_path + "' --first-round 1"));
  REQUIRE(overridden.exit_code == 0);
  episodes = read_jsonl((out_b / "episodes.jsonl").string());
  REQUIRE(episodes.ok());
  CHECK(episodes.value()[0]["transcripts"].size() == 1);
}

TEST_CASE("prove without a model endpoint is a config error", "[cli]") {
  ProveSetup setup;
  ::unsetenv("PROVERLOOP_MODEL_URL");
  const auto out_dir = testutil::make_temp_dir("cli_noenv");
  auto r = run_cli("prove --statements '" + setup.statements +
                   "' --model-backend http --verifier-backend mock:'" +
                   setup.verifier_script + "' --out '" + out_dir.string() + "'");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("PROVERLOOP_MODEL_URL") != std::string::npos);
}

TEST_CASE("config errors exit with 2", "[cli]") {
  CHECK(run_cli("no-such-subcommand").exit_code == 2);
  CHECK(run_cli("prove --bogus-flag 1").exit_code == 2);
  CHECK(run_cli("").exit_code == 2);
  ProveSetup setup;
  const auto out_dir = testutil::make_temp_dir("cli_badcfg");
  // max_iterations above the safety rail
  CHECK(run_cli(setup.prove_args(out_dir.string(), "--max-iterations 9")).exit_code == 2);
  CHECK(run_cli(setup.prove_args(out_dir.string(), "--group-size 1")).exit_code == 2);
}

TEST_CASE("score reports the structured breakdown", "[cli]") {
  const auto dir = testutil::make_temp_dir("cli_score");
  const std::string cfg_path = (dir / "reward.json").string();
  REQUIRE(write_file(cfg_path, json{{"lambda_tc", 1.0}}.dump()).ok());

  auto r = run_cli("score --result '" + testutil::fixture_path("tactic_ast_result.json") +
                   "' --code '" + testutil::fixture_path("tactic_ast_code.lean") + "' --config '" +
                   cfg_path + "'");
  REQUIRE(r.exit_code == 0);
  auto breakdown = parse_json(r.out);
  REQUIRE(breakdown.ok());
  CHECK(breakdown.value()["r_tactic_count"] == 4.0);
  CHECK(breakdown.value()["passed"] == true);
  CHECK(breakdown.value()["final"].get<double>() == Catch::Approx(5.2).margin(1e-12));

  auto no_format = run_cli("score --result '" + testutil::fixture_path("tactic_ast_result.json") +
                           "' --code '" + testutil::fixture_path("tactic_ast_code.lean") +
                           "' --config '" + cfg_path + "' --no-format-ok");
  REQUIRE(no_format.exit_code == 0);
  CHECK(parse_json(no_format.out).value()["final"].get<double>() ==
        Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("score on a failure pays only the format reward", "[cli]") {
  const auto dir = testutil::make_temp_dir("cli_score_fail");
  const std::string result_path = (dir / "failed.json").string();
  REQUIRE(write_file(result_path, json{{"pass", false}}.dump()).ok());
  auto r = run_cli("score --result '" + result_path + "'");
  REQUIRE(r.exit_code == 0);
  CHECK(parse_json(r.out).value()["final"].get<double>() == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("score with default lambdas reduces to the status scheme", "[cli]") {
  const auto dir = testutil::make_temp_dir("cli_score_pass");
  const std::string result_path = (dir / "passed.json").string();
  REQUIRE(write_file(result_path, json{{"pass", true}}.dump()).ok());
  auto r = run_cli("score --result '" + result_path + "'");
  REQUIRE(r.exit_code == 0);
  CHECK(parse_json(r.out).value()["final"].get<double>() == Catch::Approx(1.2).margin(1e-12));
}

TEST_CASE("prove heals the worked correction pair end to end", "[cli]") {
  const auto dir = testutil::make_temp_dir("cli_correction");
  const std::string statement = "prove exercise_1_1b";
  const std::string gen0 = testutil::read_fixture("correction_first_attempt.txt");
  const std::string gen1 = testutil::read_fixture("correction_revision.txt");
  const std::string code_bad = testutil::read_code_fixture("correction_failed_proof.lean");
  const std::string code_good = testutil::read_code_fixture("correction_fixed_proof.lean");

  VerificationResult failure;
  failure.passed = false;
  failure.diagnostics.push_back({24, "application type mismatch", Severity::Error});
  VerificationResult success;
  success.passed = true;

  // the prompt after feedback injection, byte-exact as the orchestrator builds it
  auto parsed = parse_transcript(gen0, statement);
  REQUIRE(parsed.ok());
  auto with_feedback = append_feedback(parsed.value(), failure);
  REQUIRE(with_feedback.ok());
  const std::string prompt1 = statement + with_feedback.value().raw;

  const std::string statements_path = (dir / "statements.jsonl").string();
  REQUIRE(write_file(statements_path,
                     json{{"id", "ex_1_1b"}, {"statement", statement}}.dump() + "\n")
              .ok());
  std::string model_lines;
  model_lines += json{{"prompt_sha256", sha256_hex(statement)}, {"turn", 0}, {"text", gen0}}
                     .dump() +
                 "\n";
  model_lines +=
      json{{"prompt_sha256", sha256_hex(prompt1)}, {"turn", 1}, {"text", gen1}}.dump() + "\n";
  const std::string model_path = (dir / "model.jsonl").string();
  REQUIRE(write_file(model_path, model_lines).ok());
  const json verifier_script{
      {sha256_hex(code_bad), verification_result_to_wire(failure)},
      {sha256_hex(code_good), verification_result_to_wire(success)}};
  const std::string verifier_path = (dir / "verifier.json").string();
  REQUIRE(write_file(verifier_path, verifier_script.dump()).ok());

  const auto out_dir = testutil::make_temp_dir("cli_correction_out");
  auto r = run_cli("prove --statements '" + statements_path + "' --model-backend mock:'" +
                   model_path + "' --verifier-backend mock:'" + verifier_path + "' --out '" +
                   out_dir.string() + "' --first-round 1 --max-iterations 1");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  auto episodes = read_jsonl((out_dir / "episodes.jsonl").string());
  REQUIRE(episodes.ok());
  REQUIRE(episodes.value().size() == 1);
  CHECK(episodes.value()[0]["solved"] == true);
  CHECK(episodes.value()[0]["verifier_calls"] == 2);
  CHECK(episodes.value()[0]["used_verifier_feedback"] == true);
}

TEST_CASE("objective-check reproduces the aggregation contrast", "[cli]") {
  const auto dir = testutil::make_temp_dir("cli_obj");
  const std::string groups_path = (dir / "groups.jsonl").string();
  std::string lines;
  lines += json{{"statement_id", "two_seq"},
                {"G", 2},
                {"rewards", {1.0, 0.0}},
                {"token_counts", {2, 3}},
                {"masked_counts", {0, 0}},
                {"valid_flags", {true, false}}}
               .dump() +
           "\n";
  lines += json{{"statement_id", "clip_high"},
                {"rewards", {2.0, 0.0}},
                {"sequences",
                 {{{"logprob_old", {0.0}}, {"logprob_new", {std::log(2.0)}}},
                  {{"logprob_old", {0.0}}, {"logprob_new", {0.0}}}}}}
               .dump() +
           "\n";
  lines += json{{"statement_id", "clip_low"},
                {"rewards", {0.0, 2.0}},
                {"sequences",
                 {{{"logprob_old", {0.0}}, {"logprob_new", {std::log(0.5)}}},
                  {{"logprob_old", {0.0}}, {"logprob_new", {0.0}}}}}}
               .dump() +
           "\n";
  REQUIRE(write_file(groups_path, lines).ok());

  auto r = run_cli("objective-check --groups '" + groups_path + "'");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  std::stringstream ss(r.out);
  std::string line;
  REQUIRE(std::getline(ss, line));
  auto first = parse_json(line);
  REQUIRE(first.ok());
  CHECK(first.value()["objective_dapo"].get<double>() == Catch::Approx(-0.2).margin(1e-12));
  CHECK(first.value()["objective_grpo"].get<double>() == Catch::Approx(0.0).margin(1e-12));
  CHECK(first.value()["filter"] == "keep");

  REQUIRE(std::getline(ss, line));
  auto second = parse_json(line);
  REQUIRE(second.ok());
  // terms: clipped 1.28 for the winner, -1 for the loser, averaged either way
  CHECK(second.value()["objective_dapo"].get<double>() ==
        Catch::Approx((1.28 - 1.0) / 2.0).margin(1e-12));

  REQUIRE(std::getline(ss, line));
  auto third = parse_json(line);
  REQUIRE(third.ok());
  // terms: the shrinking loser clips at -0.8, the winner stays at 1
  CHECK(third.value()["objective_dapo"].get<double>() ==
        Catch::Approx((-0.8 + 1.0) / 2.0).margin(1e-12));
}

TEST_CASE("evaluate renders a report over prove output", "[cli]") {
  ProveSetup setup;
  const auto out_dir = testutil::make_temp_dir("cli_eval");
  REQUIRE(run_cli(setup.prove_args(out_dir.string(), "--first-round 4 --max-iterations 0"))
              .exit_code == 0);
  const std::string report_json = (out_dir / "report.json").string();
  auto r = run_cli("evaluate --episodes '" + (out_dir / "episodes.jsonl").string() +
                   "' --k 1,2 --json '" + report_json + "'");
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("pass@1") != std::string::npos);
  CHECK(r.out.find("solve_all_ratio") != std::string::npos);
  auto j = parse_json(read_file(report_json).value());
  REQUIRE(j.ok());
  CHECK(j.value()["statements"] == 2);
}

TEST_CASE("prove composes prompts from structured statement records", "[cli]") {
  const auto dir = testutil::make_temp_dir("cli_compose");
  StatementRecord record;
  record.id = "thm_sum";
  record.informal = "Show that 1 + 1 = 2.";
  record.formal_statement = "theorem thm_sum : 1 + 1 = 2 := by";
  record.header = "import Mathlib";
  const std::string statements_path = (dir / "statements.jsonl").string();
  REQUIRE(write_file(statements_path,
                     json{{"id", record.id},
                          {"informal", record.informal},
                          {"formal_statement", record.formal_statement},
                          {"header", record.header}}
                             .dump() +
                         "\n")
              .ok());

  // the mock is keyed on the composed prompt, which pins the composition bytes
  const std::string composed = compose_statement(record);
  const std::string model_path = (dir / "model.jsonl").string();
  REQUIRE(write_file(model_path,
                     json{{"prompt_sha256", sha256_hex(composed)},
                          {"turn", 0},
                          {"text", "ok\n<code>theorem thm_sum : 1 + 1 = 2 := by rfl</code>"}}
                             .dump() +
                         "\n")
              .ok());
  const std::string verifier_path = (dir / "verifier.json").string();
  REQUIRE(write_file(verifier_path, json{{"*", {{"pass", true}}}}.dump()).ok());

  const auto out_dir = testutil::make_temp_dir("cli_compose_out");
  auto r = run_cli("prove --statements '" + statements_path + "' --model-backend mock:'" +
                   model_path + "' --verifier-backend mock:'" + verifier_path + "' --out '" +
                   out_dir.string() + "' --first-round 1 --max-iterations 0");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  auto episodes = read_jsonl((out_dir / "episodes.jsonl").string());
  REQUIRE(episodes.ok());
  CHECK(episodes.value()[0]["solved"] == true);
}

TEST_CASE("forge and filter run over jsonl files", "[cli]") {
  const auto dir = testutil::make_temp_dir("cli_forge");
  const std::string tuples_path = (dir / "tuples.jsonl").string();
  const json failed_tuple{{"statement", "s1"},     {"cot", "c"},
                          {"proof", "p"},          {"feedback", "f"},
                          {"rewrite", "r"},        {"proof_passed", false},
                          {"rewrite_passed", true}};
  std::string lines;
  lines += failed_tuple.dump() + "\n";
  lines += failed_tuple.dump() + "\n";
  lines += json{{"statement", "s2"}, {"cot", "c"}, {"proof", "p"}, {"proof_passed", true}}
               .dump() +
           "\n";
  REQUIRE(write_file(tuples_path, lines).ok());

  const std::string samples_path = (dir / "samples.jsonl").string();
  auto forge = run_cli("forge --tuples '" + tuples_path + "' --out '" + samples_path + "'");
  REQUIRE(forge.exit_code == 0);
  auto samples = read_jsonl(samples_path);
  REQUIRE(samples.ok());
  CHECK(samples.value().size() == 6);  // two failed tuples give S1+S2 each, then S3+S4

  auto capped = run_cli("forge --tuples '" + tuples_path + "' --out '" + samples_path +
                        "' --quota-s1 1 --quota-s2 1 --quota-s3 1 --quota-s4 0");
  REQUIRE(capped.exit_code == 0);
  CHECK(read_jsonl(samples_path).value().size() == 4);  // S1, S2 capped to one each

  const std::string outcomes_path = (dir / "outcomes.jsonl").string();
  std::string outcome_lines;
  outcome_lines += json{{"id", "a"}, {"outcomes", {true, true, false, false, false, false,
                                                   false, false}}}
                       .dump() +
                   "\n";
  outcome_lines += json{{"id", "b"}, {"outcomes", {true, true, true, true, true, false,
                                                   false, false}}}
                       .dump() +
                   "\n";
  REQUIRE(write_file(outcomes_path, outcome_lines).ok());
  const std::string verdicts_path = (dir / "verdicts.jsonl").string();
  auto filter = run_cli("filter --outcomes '" + outcomes_path + "' --out '" + verdicts_path +
                        "'");
  REQUIRE(filter.exit_code == 0);
  auto verdicts = read_jsonl(verdicts_path);
  REQUIRE(verdicts.ok());
  REQUIRE(verdicts.value().size() == 2);
  CHECK(verdicts.value()[0]["keep"] == true);   // 2/8 inside [1/8, 1/2]
  CHECK(verdicts.value()[1]["keep"] == false);  // 5/8 above 1/2
}
