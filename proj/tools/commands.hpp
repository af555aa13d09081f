// Subcommand implementations for the arag command-line tool.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arag/arag.hpp"
#include "arag/llm_remote.hpp"

namespace arag::cli {

inline constexpr const char* kVersion = "arag 0.1.0";

/// Flag overrides shared by the config-driven commands.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::vector<std::string> variants;
  std::optional<std::size_t> pool_size;
  std::optional<std::size_t> k;
  std::optional<double> theta;
  std::optional<std::string> out_dir;
  std::optional<std::string> cassette;
  std::optional<std::size_t> max_users;
};

inline void apply(const Overrides& o, Config& c) {
  auto& p = c.experiment.pipeline;
  if (o.seed) p.seed = *o.seed;
  if (o.backend) {
    if (*o.backend != "remote" && *o.backend != "mock" && *o.backend != "replay" && *o.backend != "record") {
      throw UsageError("--backend must be one of remote, mock, replay, record");
    }
    c.backend.kind = *o.backend;
  }
  if (!o.variants.empty()) {
    c.experiment.variants.clear();
    for (const auto& v : o.variants) c.experiment.variants.push_back(parse_variant(v));
  }
  if (o.pool_size) p.candidate_pool_size = *o.pool_size;
  if (o.k) p.k = *o.k;
  if (o.theta) p.theta = *o.theta;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.cassette) c.backend.cassette = *o.cassette;
  if (o.max_users) c.max_users = *o.max_users;
  p.validate();
}

inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Dataset {
  Catalog catalog;
  std::vector<EvalInstance> instances;  ///< sorted by user id
  std::size_t skipped_users = 0;        ///< fewer than two interactions
  nlohmann::json digests;
};

inline Dataset load_dataset(const Config& c) {
  if (c.catalog.empty() || c.interactions.empty()) throw UsageError("config must name catalog and interactions files");
  Dataset d{load_catalog(c.catalog), {}, 0, nlohmann::json::object()};
  const auto contexts = build_contexts(load_interactions(c.interactions), d.catalog, c.session_gap);
  for (const auto& ctx : contexts) {
    if (ctx.size() < 2) {
      ++d.skipped_users;
      continue;
    }
    if (c.max_users && d.instances.size() == *c.max_users) break;
    d.instances.push_back(holdout_split(ctx));
  }
  d.digests = {{"catalog", file_digest(c.catalog)}, {"interactions", file_digest(c.interactions)}};
  return d;
}

inline RemoteOptions remote_options(const Config& c, const std::string& model) {
  RemoteOptions o;
  o.base_url = c.backend.base_url;
  o.model = model;
  o.api_key = api_key_from_env(c.backend.api_key_env);
  o.max_attempts = c.backend.max_attempts;
  o.initial_backoff = std::chrono::milliseconds(c.backend.initial_backoff_ms);
  o.concurrency_cap = static_cast<int>(c.experiment.pipeline.concurrency_cap);
  return o;
}

/// Owns the backend chain selected by the config.
class BackendStack {
 public:
  explicit BackendStack(const Config& c) {
    const auto& b = c.backend;
    if (b.kind == "mock") {
      top_ = make_mock(c);
    } else if (b.kind == "remote") {
      top_ = make_remote(c);
    } else if (b.kind == "replay") {
      if (b.cassette.empty()) throw UsageError("replay backend needs a cassette path");
      top_ = std::make_unique<ReplayBackend>(b.cassette);
    } else if (b.kind == "record") {
      if (b.cassette.empty()) throw UsageError("record backend needs a cassette path");
      if (b.record_inner == "mock") {
        inner_ = make_mock(c);
      } else if (b.record_inner == "remote") {
        inner_ = make_remote(c);
      } else {
        throw UsageError("record_inner must be remote or mock");
      }
      top_ = std::make_unique<RecordingBackend>(*inner_, b.cassette);
    } else {
      throw UsageError("unknown backend kind \"" + b.kind + "\"");
    }
  }

  ChatBackend& get() { return *top_; }

 private:
  static std::unique_ptr<ChatBackend> make_mock(const Config& c) {
    auto simulated = std::make_shared<HeuristicBackend>();
    auto mock = std::make_unique<MockBackend>([simulated](const ChatRequest& r) { return simulated->respond(r); });
    if (!c.backend.script.empty()) mock->load_script(c.backend.script);
    mock->set_strict(c.backend.strict);
    return mock;
  }

  static std::unique_ptr<ChatBackend> make_remote(const Config& c) {
    auto opts = remote_options(c, c.backend.model);
    if (opts.api_key.empty()) throw UsageError("remote backend: environment variable " + c.backend.api_key_env + " is not set");
    return std::make_unique<RemoteBackend>(std::move(opts));
  }

  std::unique_ptr<ChatBackend> inner_;
  std::unique_ptr<ChatBackend> top_;
};

inline std::unique_ptr<Embedder> make_embedder(const Config& c) {
  if (c.embedder.kind == "hashed") return std::make_unique<HashedEmbedder>(c.embedder.dimension);
  if (c.embedder.kind == "remote") {
    auto opts = remote_options(c, c.embedder.model);
    if (opts.api_key.empty()) throw UsageError("remote embedder: environment variable " + c.backend.api_key_env + " is not set");
    return std::make_unique<RemoteEmbedder>(std::move(opts), c.embedder.dimension);
  }
  throw UsageError("unknown embedder kind \"" + c.embedder.kind + "\"");
}

inline PromptSet load_prompts(const Config& c) {
  return c.prompts_dir.empty() ? PromptSet() : PromptSet::load(c.prompts_dir);
}

inline void write_manifest(const std::filesystem::path& path, const Config& c, const Dataset& d,
                           const std::string& command, const std::string& backend_kind, const std::string& started,
                           double wall_seconds) {
  nlohmann::json m = {{"command", command},
                      {"version", kVersion},
                      {"config", config_snapshot(c)},
                      {"dataset_digests", d.digests},
                      {"backend", backend_kind},
                      {"users", d.instances.size()},
                      {"skipped_users", d.skipped_users},
                      {"started_at", started},
                      {"finished_at", utc_now()},
                      {"wall_seconds", wall_seconds}};
  write_text(path, m.dump(2) + "\n");
}

inline void print_ranking(std::ostream& out, const std::vector<std::string>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i + 1) << '\t' << ids[i] << '\n';
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string config;
  std::string catalog;
  std::string interactions;
  std::string out_dir;
  std::optional<std::int64_t> session_gap;
};

inline int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  Config c;
  if (!a.config.empty()) c = load_config(a.config);
  if (!a.catalog.empty()) c.catalog = a.catalog;
  if (!a.interactions.empty()) c.interactions = a.interactions;
  if (a.session_gap) c.session_gap = *a.session_gap;
  if (c.catalog.empty() || c.interactions.empty()) throw UsageError("ingest needs --catalog and --interactions (or --config)");
  const std::filesystem::path dir = a.out_dir.empty() ? c.out_dir : std::filesystem::path(a.out_dir);

  const Catalog catalog = load_catalog(c.catalog);
  const auto log = load_interactions(c.interactions);
  const std::size_t interactions = log.size();
  const auto contexts = build_contexts(log, catalog, c.session_gap);
  std::string text;
  for (const auto& ctx : contexts) text += detail::dump(to_json(ctx)) + "\n";
  write_text(dir / "contexts.jsonl", text);
  const nlohmann::json store = {{"contexts", contexts.size()},
                                {"items", catalog.size()},
                                {"interactions", interactions},
                                {"session_gap", c.session_gap},
                                {"catalog_sha256", file_digest(c.catalog)},
                                {"interactions_sha256", file_digest(c.interactions)},
                                {"contexts_sha256", sha256_hex(text)}};
  write_text(dir / "store.json", store.dump(2) + "\n");
  out << contexts.size() << " contexts\n";
  return 0;
}

struct RunArgs {
  std::string config;
  std::string user;
  Overrides overrides;
};

inline int cmd_run(const RunArgs& a, std::ostream& out) {
  Config c = load_config(a.config);
  if (a.overrides.variants.size() > 1) throw UsageError("run takes a single --variant");
  apply(a.overrides, c);
  const Variant variant = a.overrides.variants.empty() ? Variant::arag : c.experiment.variants.front();
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  Dataset d = load_dataset(c);
  const EvalInstance* instance = nullptr;
  for (const auto& inst : d.instances) {
    if (inst.context.user_id == a.user) instance = &inst;
  }
  if (instance == nullptr) throw DataError("unknown user \"" + a.user + "\" (or fewer than two interactions)");

  const auto embedder = make_embedder(c);
  const PromptSet prompts = load_prompts(c);
  const auto index = load_or_build_index(d.catalog, *embedder, c.embedder.cache, c.experiment.pipeline.agent.max_reviews);
  BackendStack backend(c);
  Runtime rt{d.catalog, *embedder, prompts, backend.get(), &index, {}, {}};

  const auto& p = c.experiment.pipeline;
  const auto pool = c.experiment.pool_mode == PoolMode::closed
                        ? build_candidate_pool(*instance, d.catalog, index, *embedder, p.candidate_pool_size, p.seed,
                                               p.k, p.agent)
                        : build_recall_pool(*instance, d.catalog, index, *embedder, p.k, p.agent);
  PipelineConfig pc = p;
  pc.variant = variant;
  const auto result = run_variant(instance->context, pool, pc, rt);

  const auto trace_path = c.out_dir / "traces" / std::string(to_string(variant)) / (a.user + ".jsonl");
  write_text(trace_path, result.trace);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(c.out_dir / "run_manifest.json", c, d, "run", backend.get().kind(), started, secs);

  print_ranking(out, result.ranking.ids);
  out << "trace: " << trace_path.string() << '\n';
  return 0;
}

struct EvalArgs {
  std::string config;
  Overrides overrides;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  Config c = load_config(a.config);
  apply(a.overrides, c);
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  Dataset d = load_dataset(c);
  const auto embedder = make_embedder(c);
  const PromptSet prompts = load_prompts(c);
  const auto index = load_or_build_index(d.catalog, *embedder, c.embedder.cache, c.experiment.pipeline.agent.max_reviews);
  BackendStack backend(c);
  Runtime rt{d.catalog, *embedder, prompts, backend.get(), &index, {}, {}};

  const auto result = run_experiment(d.instances, c.experiment, rt, index);
  const auto report = write_experiment(result, c.experiment, c.out_dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(c.out_dir / "run_manifest.json", c, d, "eval", backend.get().kind(), started, secs);

  out << report;
  std::size_t failed = 0;
  for (const auto& r : result.records) failed += r.failed ? 1 : 0;
  out << "\n" << d.instances.size() << " users, " << failed << " failed runs, " << result.missing_ground_truth
      << " rankings without the ground truth\n";
  out << "summary: " << (c.out_dir / "summary.json").string() << '\n';
  if (failure_limit_exceeded(result, c.experiment.failure_limit)) {
    std::cerr << "error: failure fraction " << result.failure_fraction << " exceeds the limit "
              << c.experiment.failure_limit << '\n';
    for (const auto& r : result.records) {
      if (r.failed) {
        std::cerr << "  first failure (" << r.user_id << ", " << to_string(r.variant) << "): " << r.error << '\n';
        break;
      }
    }
    return 4;
  }
  return 0;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline int cmd_replay(const std::string& trace_path, std::ostream& out) {
  const std::string text = read_file(trace_path);
  if (text.empty()) throw DataError(trace_path + ": empty trace");
  const Blackboard board = replay(text);
  const auto rankers = board.read(AgentRole::item_ranker);
  if (rankers.size() != 1) throw DataError(trace_path + ": expected exactly one item_ranker message");
  print_ranking(out, reparse_ranker_message(rankers.front()));
  return 0;
}

struct SynthArgs {
  std::string out_dir;
  SyntheticOptions options;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const std::filesystem::path dir = a.out_dir;
  const auto data = generate_synthetic(a.options);
  write_synthetic(data, dir / "catalog.jsonl", dir / "interactions.jsonl");
  const nlohmann::json config = {{"catalog", "catalog.jsonl"},
                                 {"interactions", "interactions.jsonl"},
                                 {"out_dir", "out"},
                                 {"dataset_name", "synthetic"},
                                 {"seed", a.options.seed},
                                 {"pool_size", 20},
                                 {"backend", {{"kind", "mock"}}}};
  write_text(dir / "config.json", config.dump(2) + "\n");
  out << data.items.size() << " items, " << data.interactions.size() << " interactions, " << a.options.users
      << " users\n";
  return 0;
}

}  // namespace arag::cli
