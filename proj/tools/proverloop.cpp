// SPDX-License-Identifier: Apache-2.0
//
// proverloop: verifier-integrated theorem-proving pipeline.
//
// Subcommands: prove, forge, filter, score, objective-check, evaluate.
// Exit codes: 0 ok, 1 runtime failure, 2 configuration error.

#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "proverloop/proverloop.hpp"

namespace fs = std::filesystem;
using namespace proverloop;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

int fail_config(const std::string& message) {
  std::cerr << "config error: " << message << "\n";
  return kConfigError;
}

int fail_runtime(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return kRuntimeError;
}

// "mock:PATH" | "http" (endpoint from env) | "http:URL"
struct ModelBackendSpec {
  std::unique_ptr<ModelBackend> backend;

  static Expected<ModelBackendSpec> parse(const std::string& spec) {
    ModelBackendSpec out;
    if (spec.rfind("mock:", 0) == 0) {
      auto mock = MockModelBackend::from_file(spec.substr(5));
      if (!mock.ok()) return mock.error();
      out.backend = std::make_unique<MockModelBackend>(std::move(mock).value());
      return out;
    }
    if (spec == "http") {
      auto http = HttpModelBackend::from_env();
      if (!http.ok()) return http.error();
      out.backend = std::make_unique<HttpModelBackend>(std::move(http).value());
      return out;
    }
    if (spec.rfind("http:", 0) == 0) {
      out.backend = std::make_unique<HttpModelBackend>(spec);
      return out;
    }
    return Error{Errc::ConfigError,
                 "model backend must be mock:PATH, http, or http://URL, got: " + spec};
  }
};

// "mock:PATH" | "cmd:COMMAND" | "http:URL"
struct VerifierBackendSpec {
  std::unique_ptr<VerifierBackend> backend;

  static Expected<VerifierBackendSpec> parse(const std::string& spec) {
    VerifierBackendSpec out;
    if (spec.rfind("mock:", 0) == 0) {
      auto mock = MockVerifierBackend::from_file(spec.substr(5));
      if (!mock.ok()) return mock.error();
      out.backend = std::make_unique<MockVerifierBackend>(std::move(mock).value());
      return out;
    }
    if (spec.rfind("cmd:", 0) == 0) {
      out.backend = std::make_unique<CommandVerifierBackend>(spec.substr(4));
      return out;
    }
    if (spec.rfind("http:", 0) == 0) {
      out.backend = std::make_unique<HttpVerifierBackend>(spec);
      return out;
    }
    return Error{Errc::ConfigError,
                 "verifier backend must be mock:PATH, cmd:COMMAND, or http://URL, got: " + spec};
  }
};

// Manifest keys mirror the flag names one-to-one (dashes as underscores).
// The manifest replaces built-in defaults; flags passed explicitly on the
// command line override the manifest.
template <typename T>
void manifest_value(const json& manifest, CLI::App* cmd, const std::string& flag, T& out) {
  std::string key = flag.substr(2);
  for (auto& c : key)
    if (c == '-') c = '_';
  if (!manifest.contains(key)) return;
  const CLI::Option* opt = cmd->get_option_no_throw(flag);
  if (opt && opt->count() > 0) return;
  out = manifest[key].get<T>();
}

struct ProveArgs {
  std::string statements_path;
  std::string out_dir;
  std::string model_spec;
  std::string verifier_spec;
  std::string manifest_path;
  std::string reward_config_path;
  std::string prompt_template_path;
  int first_round = 32;
  int branch = 1;
  int max_iterations = 1;
  int group_size = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
  double temperature = 0.6;
  int max_tokens = 16384;
  double verify_timeout = 60.0;
  bool early_stop = false;
};

int run_prove(const ProveArgs& args) {
  auto model_spec = ModelBackendSpec::parse(args.model_spec);
  if (!model_spec.ok()) return fail_config(model_spec.error().to_string());
  auto verifier_spec = VerifierBackendSpec::parse(args.verifier_spec);
  if (!verifier_spec.ok()) return fail_config(verifier_spec.error().to_string());

  RewardConfig rewards;
  if (!args.reward_config_path.empty()) {
    auto loaded = load_reward_config(args.reward_config_path);
    if (!loaded.ok()) return fail_config(loaded.error().to_string());
    rewards = std::move(loaded).value();
  }

  EpisodeConfig cfg;
  cfg.first_round_rollouts = args.first_round;
  cfg.branch_per_iteration = args.branch;
  cfg.max_iterations = args.max_iterations;
  cfg.verify_timeout_s = args.verify_timeout;
  cfg.gen.temperature = args.temperature;
  cfg.gen.max_tokens = args.max_tokens;
  cfg.seed = args.seed;
  cfg.early_stop_on_success = args.early_stop;
  if (!args.prompt_template_path.empty()) {
    auto tmpl = read_file(args.prompt_template_path);
    if (!tmpl.ok()) return fail_config(tmpl.error().to_string());
    cfg.prompt_template = std::move(tmpl).value();
  }
  if (auto st = cfg.validate(); !st.ok()) return fail_config(st.error().to_string());
  if (args.group_size == 1)
    return fail_config("group size must be 0 (disabled) or >= 2");

  auto records = read_jsonl(args.statements_path);
  if (!records.ok()) return fail_config(records.error().to_string());
  std::vector<std::pair<std::string, std::string>> items;
  for (const auto& j : records.value()) {
    if (j.contains("statement") && j["statement"].is_string() && j.contains("id")) {
      items.emplace_back(j["id"].get<std::string>(), j["statement"].get<std::string>());
      continue;
    }
    auto record = statement_from_json(j);
    if (!record.ok()) return fail_config(record.error().to_string());
    items.emplace_back(record.value().id, compose_statement(record.value()));
  }
  if (items.empty()) return fail_config("no statements in " + args.statements_path);

  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) return fail_runtime("cannot create output directory " + args.out_dir);

  ModelGateway model(*model_spec.value().backend);
  VerifierGateway verifier(*verifier_spec.value().backend);
  RolloutOrchestrator orchestrator(model, verifier, rewards);

  auto episodes = orchestrator.run_statements(items, cfg, static_cast<std::size_t>(args.jobs));
  if (!episodes.ok()) return fail_config(episodes.error().to_string());

  JsonlWriter episodes_out((fs::path(args.out_dir) / "episodes.jsonl").string());
  if (!episodes_out.ok()) return fail_runtime("cannot write " + episodes_out.path());
  int solved = 0;
  for (const auto& ep : episodes.value()) {
    if (ep.solved) ++solved;
    if (auto st = episodes_out.write(episode_to_json(ep)); !st.ok())
      return fail_runtime(st.error().to_string());
  }

  if (args.group_size >= 2) {
    auto batch = RolloutOrchestrator::build_rl_batch(episodes.value(),
                                                     static_cast<std::size_t>(args.group_size));
    if (!batch.ok()) return fail_runtime(batch.error().to_string());
    JsonlWriter groups_out((fs::path(args.out_dir) / "groups.jsonl").string());
    if (!groups_out.ok()) return fail_runtime("cannot write " + groups_out.path());
    const ClipConfig clip;
    for (const auto& g : batch.value().groups) {
      json record = group_record_to_json(g);
      auto dapo = dapo_objective(g, clip);
      auto grpo = grpo_objective(g, clip);
      record["objective_dapo"] = dapo.ok() ? json(dapo.value().value) : json();
      record["objective_grpo"] = grpo.ok() ? json(grpo.value()) : json();
      if (auto st = groups_out.write(record); !st.ok())
        return fail_runtime(st.error().to_string());
    }
    JsonlWriter dropped_out((fs::path(args.out_dir) / "dropped.jsonl").string());
    for (const auto& d : batch.value().dropped) {
      if (auto st = dropped_out.write(json{{"statement_id", d.statement_id},
                                           {"reason", d.reason}});
          !st.ok())
        return fail_runtime(st.error().to_string());
    }
    std::cerr << "groups: " << batch.value().groups.size() << " kept, "
              << batch.value().dropped.size() << " dropped\n";
  }

  std::cerr << "episodes: " << episodes.value().size() << " statements, " << solved
            << " solved\n";
  return kOk;
}

struct ForgeArgs {
  std::string tuples_path;
  std::string out_path;
  // 0 means unlimited
  int quota_s1 = 0, quota_s2 = 0, quota_s3 = 0, quota_s4 = 0;
};

int run_forge(const ForgeArgs& args) {
  auto records = read_jsonl(args.tuples_path);
  if (!records.ok()) return fail_config(records.error().to_string());

  JsonlWriter out(args.out_path);
  if (!out.ok()) return fail_runtime("cannot write " + args.out_path);

  int emitted[4] = {0, 0, 0, 0};
  const int quota[4] = {args.quota_s1, args.quota_s2, args.quota_s3, args.quota_s4};
  int skipped_invalid = 0;
  for (std::size_t i = 0; i < records.value().size(); ++i) {
    auto tuple = tuple_from_json(records.value()[i]);
    if (!tuple.ok()) {
      std::cerr << "tuple " << i << ": " << tuple.error().to_string() << "\n";
      ++skipped_invalid;
      continue;
    }
    auto samples = build_scenarios(tuple.value());
    if (!samples.ok()) {
      std::cerr << "tuple " << i << ": " << samples.error().to_string() << "\n";
      ++skipped_invalid;
      continue;
    }
    for (const auto& s : samples.value()) {
      const int idx = static_cast<int>(s.scenario);
      if (quota[idx] > 0 && emitted[idx] >= quota[idx]) continue;
      ++emitted[idx];
      if (auto st = out.write(sample_to_json(s)); !st.ok())
        return fail_runtime(st.error().to_string());
    }
  }
  std::cerr << "samples: S1=" << emitted[0] << " S2=" << emitted[1] << " S3=" << emitted[2]
            << " S4=" << emitted[3] << ", invalid tuples skipped: " << skipped_invalid << "\n";
  return kOk;
}

Expected<Rational> parse_rational(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      return Rational{std::stoll(text), 1};
    }
    return Rational{std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1))};
  } catch (...) {
    return Error{Errc::ConfigError, "bad rational: " + text};
  }
}

struct FilterArgs {
  std::string outcomes_path;
  std::string out_path;
  std::string lo = "1/8";
  std::string hi = "1/2";
};

int run_filter(const FilterArgs& args) {
  auto lo = parse_rational(args.lo);
  if (!lo.ok()) return fail_config(lo.error().to_string());
  auto hi = parse_rational(args.hi);
  if (!hi.ok()) return fail_config(hi.error().to_string());

  auto records = read_jsonl(args.outcomes_path);
  if (!records.ok()) return fail_config(records.error().to_string());

  JsonlWriter out(args.out_path);
  if (!out.ok()) return fail_runtime("cannot write " + args.out_path);
  int kept = 0;
  for (const auto& j : records.value()) {
    if (!j.contains("id") || !j.contains("outcomes") || !j["outcomes"].is_array())
      return fail_runtime("outcome record needs id and outcomes array");
    std::vector<bool> outcomes;
    int successes = 0;
    for (const auto& o : j["outcomes"]) {
      outcomes.push_back(o.get<bool>());
      if (outcomes.back()) ++successes;
    }
    auto keep = pass_rate_filter(outcomes, lo.value(), hi.value());
    if (!keep.ok()) return fail_runtime(j["id"].get<std::string>() + ": " +
                                        keep.error().to_string());
    if (keep.value()) ++kept;
    if (auto st = out.write(json{{"id", j["id"]},
                                 {"keep", keep.value()},
                                 {"successes", successes},
                                 {"attempts", outcomes.size()}});
        !st.ok())
      return fail_runtime(st.error().to_string());
  }
  std::cerr << "kept " << kept << " of " << records.value().size() << " statements\n";
  return kOk;
}

struct ScoreArgs {
  std::string result_path;
  std::string code_path;
  std::string config_path;
  bool format_ok = true;
};

int run_score(const ScoreArgs& args) {
  RewardConfig cfg;
  if (!args.config_path.empty()) {
    auto loaded = load_reward_config(args.config_path);
    if (!loaded.ok()) return fail_config(loaded.error().to_string());
    cfg = std::move(loaded).value();
  }

  auto text = read_file(args.result_path);
  if (!text.ok()) return fail_config(text.error().to_string());
  auto parsed = parse_json(text.value(), "verification result");
  if (!parsed.ok()) return fail_config("verification result is not valid json");
  json wire = parsed.value();
  // accept a bare AST object or fragment alongside the full wire format
  if (!wire.contains("pass")) {
    if (wire.contains("tactics")) wire = json{{"pass", true}, {"ast", wire}};
    else if (wire.contains("ast")) wire["pass"] = true;
  }
  auto result = verification_result_from_wire(wire);
  if (!result.ok()) return fail_config(result.error().to_string());

  std::string code;
  if (!args.code_path.empty()) {
    auto code_text = read_file(args.code_path);
    if (!code_text.ok()) return fail_config(code_text.error().to_string());
    code = std::move(code_text).value();
  }

  const RewardBreakdown breakdown = combine(cfg, args.format_ok, result.value(), code);
  std::cout << reward_breakdown_to_json(breakdown).dump(2) << "\n";
  return kOk;
}

struct ObjectiveArgs {
  std::string groups_path;
  std::string out_path = "-";
  double eps_low = 0.2;
  double eps_high = 0.28;
};

int run_objective_check(const ObjectiveArgs& args) {
  const ClipConfig clip{args.eps_low, args.eps_high};
  if (auto st = clip.validate(); !st.ok()) return fail_config(st.error().to_string());

  auto records = read_jsonl(args.groups_path);
  if (!records.ok()) return fail_config(records.error().to_string());

  std::ostringstream buffer;
  for (std::size_t i = 0; i < records.value().size(); ++i) {
    auto group = group_from_record(records.value()[i]);
    if (!group.ok())
      return fail_runtime("group record " + std::to_string(i) + ": " +
                          group.error().to_string());
    json out = records.value()[i];
    out.erase("sequences");
    auto dapo = dapo_objective(group.value(), clip);
    auto grpo = grpo_objective(group.value(), clip);
    if (!dapo.ok()) {
      out["error"] = dapo.error().to_string();
      out["objective_dapo"] = nullptr;
      out["objective_grpo"] = nullptr;
    } else {
      out["objective_dapo"] = dapo.value().value;
      out["objective_grpo"] = grpo.ok() ? json(grpo.value()) : json();
      if (!grpo.ok()) out["error"] = grpo.error().to_string();
    }
    if (!group.value().valid_flags.empty())
      out["filter"] = group_filter_reason(filter_group(group.value()));
    buffer << out.dump() << "\n";
  }
  if (args.out_path == "-") {
    std::cout << buffer.str();
  } else if (auto st = write_file(args.out_path, buffer.str()); !st.ok()) {
    return fail_runtime(st.error().to_string());
  }
  return kOk;
}

struct EvaluateArgs {
  std::string episodes_path;
  std::string ks = "1,2,4,8,16,32";
  std::string json_path;
  std::string csv_path;
};

int run_evaluate(const EvaluateArgs& args) {
  std::vector<int> ks;
  std::stringstream ss(args.ks);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      ks.push_back(std::stoi(item));
    } catch (...) {
      return fail_config("bad k list: " + args.ks);
    }
    if (ks.back() < 1) return fail_config("k must be >= 1");
  }
  if (ks.empty()) return fail_config("empty k list");

  auto records = read_jsonl(args.episodes_path);
  if (!records.ok()) return fail_config(records.error().to_string());
  std::vector<EpisodeResult> episodes;
  for (const auto& j : records.value()) {
    auto ep = episode_from_json(j);
    if (!ep.ok()) return fail_runtime(ep.error().to_string());
    episodes.push_back(std::move(ep).value());
  }

  auto report = aggregate(episodes, ks);
  if (!report.ok()) return fail_runtime(report.error().to_string());

  std::cout << render_report_table(report.value());
  if (!args.json_path.empty()) {
    if (auto st = write_file(args.json_path, report_to_json(report.value()).dump(2) + "\n");
        !st.ok())
      return fail_runtime(st.error().to_string());
  }
  if (!args.csv_path.empty()) {
    if (auto st = write_file(args.csv_path, report_to_csv(report.value())); !st.ok())
      return fail_runtime(st.error().to_string());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verifier-integrated theorem-proving pipeline"};
  app.require_subcommand(1);

  ProveArgs prove;
  auto* prove_cmd = app.add_subcommand(
      "prove", "Run generate/verify/feedback episodes over a statements file");
  prove_cmd->add_option("--statements", prove.statements_path, "Statements JSONL");
  prove_cmd->add_option("--out", prove.out_dir, "Output directory");
  prove_cmd->add_option("--model-backend", prove.model_spec, "mock:PATH | http | http://URL");
  prove_cmd->add_option("--verifier-backend", prove.verifier_spec,
                        "mock:PATH | cmd:COMMAND | http://URL");
  prove_cmd->add_option("--first-round", prove.first_round, "Round-zero rollouts per statement");
  prove_cmd->add_option("--branch", prove.branch, "Continuations per failed rollout");
  prove_cmd->add_option("--max-iterations", prove.max_iterations,
                        "Verifier-calling iteration budget (0 = single shot)");
  prove_cmd->add_option("--group-size", prove.group_size,
                        "Emit RL groups of this size (0 disables)");
  prove_cmd->add_option("--seed", prove.seed, "Base seed for mock determinism");
  prove_cmd->add_option("--jobs", prove.jobs, "Parallel workers");
  prove_cmd->add_option("--temperature", prove.temperature, "Sampling temperature");
  prove_cmd->add_option("--max-tokens", prove.max_tokens, "Generation token cap");
  prove_cmd->add_option("--verify-timeout", prove.verify_timeout, "Per-call verify timeout (s)");
  prove_cmd->add_flag("--early-stop", prove.early_stop, "Stop a statement on first pass");
  prove_cmd->add_option("--prompt-template", prove.prompt_template_path,
                        "Template file containing {statement}");
  prove_cmd->add_option("--reward-config", prove.reward_config_path, "Reward config JSON");
  prove_cmd->add_option("--config", prove.manifest_path,
                        "Run manifest JSON; explicit flags override it");

  ForgeArgs forge;
  auto* forge_cmd =
      app.add_subcommand("forge", "Synthesize cold-start SFT samples from correction tuples");
  forge_cmd->add_option("--tuples", forge.tuples_path, "Correction tuples JSONL")->required();
  forge_cmd->add_option("--out", forge.out_path, "Samples JSONL")->required();
  forge_cmd->add_option("--quota-s1", forge.quota_s1, "Cap on S1 samples (0 = unlimited)");
  forge_cmd->add_option("--quota-s2", forge.quota_s2, "Cap on S2 samples (0 = unlimited)");
  forge_cmd->add_option("--quota-s3", forge.quota_s3, "Cap on S3 samples (0 = unlimited)");
  forge_cmd->add_option("--quota-s4", forge.quota_s4, "Cap on S4 samples (0 = unlimited)");

  FilterArgs filter;
  auto* filter_cmd =
      app.add_subcommand("filter", "Keep statements whose pass rate sits in a band");
  filter_cmd->add_option("--outcomes", filter.outcomes_path, "Outcomes JSONL")->required();
  filter_cmd->add_option("--out", filter.out_path, "Filter verdicts JSONL")->required();
  filter_cmd->add_option("--lo", filter.lo, "Lower bound (rational, default 1/8)");
  filter_cmd->add_option("--hi", filter.hi, "Upper bound (rational, default 1/2)");

  ScoreArgs score;
  auto* score_cmd =
      app.add_subcommand("score", "Compute a reward breakdown for one verification result");
  score_cmd->add_option("--result", score.result_path, "Verification result JSON (with AST)")
      ->required();
  score_cmd->add_option("--code", score.code_path, "Verified Lean source file");
  score_cmd->add_option("--config", score.config_path, "Reward config JSON");
  score_cmd->add_flag("--format-ok,!--no-format-ok", score.format_ok,
                      "Whether the rollout satisfied the transcript format");

  ObjectiveArgs objective;
  auto* objective_cmd = app.add_subcommand(
      "objective-check", "Compute token-level and sample-level objectives for group records");
  objective_cmd->add_option("--groups", objective.groups_path, "Group records JSONL")
      ->required();
  objective_cmd->add_option("--out", objective.out_path, "Output path or - for stdout");
  objective_cmd->add_option("--eps-low", objective.eps_low, "Lower clip ratio");
  objective_cmd->add_option("--eps-high", objective.eps_high, "Upper clip ratio");

  EvaluateArgs evaluate;
  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "Aggregate episode records into a benchmark report");
  evaluate_cmd->add_option("--episodes", evaluate.episodes_path, "Episodes JSONL")->required();
  evaluate_cmd->add_option("--k", evaluate.ks, "Comma-separated pass@k budgets");
  evaluate_cmd->add_option("--json", evaluate.json_path, "Also write the report as JSON");
  evaluate_cmd->add_option("--csv", evaluate.csv_path, "Also write the report as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (prove_cmd->parsed()) {
      if (!prove.manifest_path.empty()) {
        auto text = read_file(prove.manifest_path);
        if (!text.ok()) return fail_config(text.error().to_string());
        auto manifest = parse_json(text.value(), "manifest");
        if (!manifest.ok() || !manifest.value().is_object())
          return fail_config("manifest must be a json object");
        const json& m = manifest.value();
        try {
          manifest_value(m, prove_cmd, "--statements", prove.statements_path);
          manifest_value(m, prove_cmd, "--out", prove.out_dir);
          manifest_value(m, prove_cmd, "--model-backend", prove.model_spec);
          manifest_value(m, prove_cmd, "--verifier-backend", prove.verifier_spec);
          manifest_value(m, prove_cmd, "--first-round", prove.first_round);
          manifest_value(m, prove_cmd, "--branch", prove.branch);
          manifest_value(m, prove_cmd, "--max-iterations", prove.max_iterations);
          manifest_value(m, prove_cmd, "--group-size", prove.group_size);
          manifest_value(m, prove_cmd, "--seed", prove.seed);
          manifest_value(m, prove_cmd, "--jobs", prove.jobs);
          manifest_value(m, prove_cmd, "--temperature", prove.temperature);
          manifest_value(m, prove_cmd, "--max-tokens", prove.max_tokens);
          manifest_value(m, prove_cmd, "--verify-timeout", prove.verify_timeout);
          manifest_value(m, prove_cmd, "--early-stop", prove.early_stop);
          manifest_value(m, prove_cmd, "--prompt-template", prove.prompt_template_path);
          manifest_value(m, prove_cmd, "--reward-config", prove.reward_config_path);
        } catch (const json::exception& e) {
          return fail_config(std::string("bad manifest value: ") + e.what());
        }
      }
      if (prove.statements_path.empty()) return fail_config("--statements is required");
      if (prove.out_dir.empty()) return fail_config("--out is required");
      if (prove.model_spec.empty()) return fail_config("--model-backend is required");
      if (prove.verifier_spec.empty()) return fail_config("--verifier-backend is required");
      return run_prove(prove);
    }
    if (forge_cmd->parsed()) return run_forge(forge);
    if (filter_cmd->parsed()) return run_filter(filter);
    if (score_cmd->parsed()) return run_score(score);
    if (objective_cmd->parsed()) return run_objective_check(objective);
    if (evaluate_cmd->parsed()) return run_evaluate(evaluate);
  } catch (const std::exception& e) {
    return fail_runtime(e.what());
  }
  return kConfigError;
}
