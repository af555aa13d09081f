#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

void add_overrides(CLI::App* cmd, arag::cli::Overrides& o, bool many_variants) {
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--backend", o.backend, "remote, mock, replay or record")
      ->check(CLI::IsMember({"remote", "mock", "replay", "record"}));
  if (many_variants) {
    cmd->add_option("--variant", o.variants, "Variant to evaluate (repeatable; default all)");
  } else {
    cmd->add_option("--variant", o.variants, "Variant to run (default arag)")->expected(1);
  }
  cmd->add_option("--pool-size", o.pool_size, "Candidate pool size");
  cmd->add_option("--k", o.k, "Recall depth");
  cmd->add_option("--theta", o.theta, "NLI acceptance threshold");
  cmd->add_option("--out", o.out_dir, "Output directory (overrides out_dir)");
  cmd->add_option("--cassette", o.cassette, "Cassette file for replay/record");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agentic retrieval-augmented recommendation: runs, experiments and trace replay"};
  app.set_version_flag("--version", arag::cli::kVersion);
  app.require_subcommand(1);

  arag::cli::IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Build user contexts from a catalog and an interaction log");
  c_ingest->add_option("--config", ingest.config, "Config file");
  c_ingest->add_option("--catalog", ingest.catalog, "Catalog JSONL");
  c_ingest->add_option("--interactions", ingest.interactions, "Interaction JSONL");
  c_ingest->add_option("--out", ingest.out_dir, "Output directory");
  c_ingest->add_option("--session-gap", ingest.session_gap, "Session gap in seconds");

  arag::cli::RunArgs run;
  auto* c_run = app.add_subcommand("run", "Rank the candidate pool for one user and write its trace");
  c_run->add_option("--config", run.config, "Config file")->required();
  c_run->add_option("--user", run.user, "User id")->required();
  add_overrides(c_run, run.overrides, false);

  arag::cli::EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Run every variant over the dataset and write summary.json and report.md");
  c_eval->add_option("--config", eval.config, "Config file")->required();
  c_eval->add_option("--max-users", eval.overrides.max_users, "Evaluate only the first N users");
  add_overrides(c_eval, eval.overrides, true);

  std::string trace;
  auto* c_replay = app.add_subcommand("replay", "Re-derive the final ranking from a trace file");
  c_replay->add_option("trace", trace, "Trace JSONL")->required();

  arag::cli::SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic dataset and a mock-backend config");
  c_synth->add_option("--out", synth.out_dir, "Output directory")->required();
  c_synth->add_option("--users", synth.options.users, "Number of users");
  c_synth->add_option("--seed", synth.options.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_ingest) return arag::cli::cmd_ingest(ingest, std::cout);
    if (*c_run) return arag::cli::cmd_run(run, std::cout);
    if (*c_eval) return arag::cli::cmd_eval(eval, std::cout);
    if (*c_replay) return arag::cli::cmd_replay(trace, std::cout);
    if (*c_synth) return arag::cli::cmd_synth(synth, std::cout);
  } catch (const arag::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
