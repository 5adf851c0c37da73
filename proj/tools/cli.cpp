#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wakenllm/config.hpp"
#include "wakenllm/dataset.hpp"
#include "wakenllm/errors.hpp"
#include "wakenllm/metrics.hpp"
#include "wakenllm/pipeline.hpp"
#include "wakenllm/report.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string run_dir;
  std::string provider;
  std::string model;
  std::string style;
  std::string grid;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;
  std::optional<std::size_t> budget;
  bool dry_run = false;
  bool resume = false;
  bool check_oracle = false;

  // prepare / validate
  std::vector<std::string> inputs;
  std::string out;
  bool unknownize_half = false;
  std::size_t target = 0;
  std::size_t delete_count = 2;

  // run / rtg
  bool all = false;
  bool label = false;
  bool rp = false;

  // report
  std::vector<std::string> run_dirs;
  std::string format = "both";

  // replay
  std::string from;
  std::string transcript;
};

struct Loaded {
  RunConfig config;
  SampleSet samples;
  fs::path run_dir;
};

fs::path resolve(const fs::path& base, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : fs::absolute(base / p).lexically_normal();
}

void apply_overrides(RunConfig& config, const Options& o) {
  if (!o.provider.empty()) {
    if (o.provider == "scripted") config.provider.kind = ProviderSettings::Kind::Scripted;
    else if (o.provider == "live") config.provider.kind = ProviderSettings::Kind::Live;
    else if (o.provider == "replay") config.provider.kind = ProviderSettings::Kind::Replay;
    else throw UsageError("--provider must be scripted, live or replay");
  }
  if (!o.model.empty()) config.provider.model = o.model;
  if (!o.style.empty()) config.style = parse_style_mapping(o.style);
  if (!o.grid.empty()) config.misguide_grid = parse_misguide_grid(o.grid);
  if (o.seed) config.seed = *o.seed;
  if (o.concurrency) config.concurrency_limit = *o.concurrency;
  if (o.budget) config.call_budget = *o.budget;
}

/// Config from --config (samples from its dataset) or, failing that, the
/// snapshot inside an existing --run-dir. Flags override either.
Loaded load_effective(const Options& o) {
  Loaded loaded;
  if (!o.config.empty()) {
    const fs::path config_path(o.config);
    const fs::path base = config_path.parent_path();
    loaded.config = RunConfig::load(config_path);
    if (loaded.config.templates_dir)
      loaded.config.templates_dir = resolve(base, *loaded.config.templates_dir).string();
    if (!loaded.config.provider.replay_transcript.empty())
      loaded.config.provider.replay_transcript =
          resolve(base, loaded.config.provider.replay_transcript).string();
    apply_overrides(loaded.config, o);
    loaded.config.validate();
    if (loaded.config.dataset.empty()) throw ConfigError("config has no dataset");
    loaded.samples = load_samples(resolve(base, loaded.config.dataset));
    loaded.run_dir = o.run_dir.empty() ? fs::path("runs") / loaded.config.run_id : fs::path(o.run_dir);
  } else if (!o.run_dir.empty()) {
    StoredRun stored = load_stored_run(o.run_dir);
    loaded.config = std::move(stored.config);
    loaded.samples = std::move(stored.samples);
    apply_overrides(loaded.config, o);
    loaded.config.validate();
    loaded.run_dir = o.run_dir;
  } else {
    throw UsageError("either --config or --run-dir is required");
  }
  return loaded;
}

fs::path run_dir_only(const Options& o) {
  if (!o.run_dir.empty()) return o.run_dir;
  if (!o.config.empty()) return fs::path("runs") / RunConfig::load(o.config).run_id;
  throw UsageError("--run-dir is required");
}

using KindSet = std::set<Phase::Kind>;

KindSet kinds_for(const std::string& command, const Options& o) {
  using K = Phase::Kind;
  if (command == "detect") return {K::Detect};
  if (command == "run" && !o.all) return {K::Detect, K::Stage1, K::Stage2};
  if (command == "rtg") {
    KindSet kinds = {K::Detect, K::Stage1, K::Stage2};
    const bool both = !o.label && !o.rp;
    if (o.label || both) kinds.insert(K::RtgLabel);
    if (o.rp || both) kinds.insert(K::RtgRp);
    return kinds;
  }
  if (command == "ablate") return {K::Detect, K::Stage1, K::AblationRepeat};
  if (command == "annotate") return {K::Detect, K::RootCause};
  return {K::Detect, K::Stage1, K::Stage2, K::RtgLabel, K::RtgRp, K::AblationRepeat, K::RootCause};
}

int dry_run(const Loaded& loaded, const KindSet& kinds, std::ostream& out) {
  const RunState state = fs::exists(loaded.run_dir) ? load_run_state(loaded.run_dir) : RunState{};
  std::size_t total = 0;
  for (const auto& plan : plan_calls(loaded.config, loaded.samples, state)) {
    const auto phase = Phase::parse(plan.phase);
    if (!phase || !kinds.contains(phase->kind)) continue;
    out << plan.phase << ' ' << (plan.complete ? "complete" : std::to_string(plan.calls)) << '\n';
    total += plan.calls;
  }
  out << "planned provider calls: " << total << '\n';
  return kExitOk;
}

json phase_summary(const RunState& state, const RunConfig& config, const KindSet& kinds) {
  json phases = json::array();
  for (const auto& phase : enabled_phases(config)) {
    if (!kinds.contains(phase.kind) || !state.complete(phase)) continue;
    if (phase.kind == Phase::Kind::RootCause) {
      json dist = json::object();
      for (const auto& [cause, n] : state.root_cause->distribution())
        dist[std::string(root_cause_name(cause))] = n;
      phases.push_back({{"phase", phase.to_string()},
                        {"input", state.root_cause->input.size()},
                        {"distribution", dist},
                        {"unannotated", state.root_cause->unannotated.size()}});
      continue;
    }
    const auto* p = state.find(phase);
    phases.push_back({{"phase", phase.to_string()},
                      {"input", p->input.size()},
                      {"tc", p->tc.size()},
                      {"fc", p->fc.size()},
                      {"uc", p->uc.size()},
                      {"parse_failures", p->parse_failures.size()}});
  }
  return phases;
}

int run_pipeline(const std::string& command, const Options& o, std::ostream& out, std::ostream& err) {
  const Loaded loaded = load_effective(o);
  const KindSet kinds = kinds_for(command, o);
  if (o.dry_run) return dry_run(loaded, kinds, out);

  Pipeline pipeline(loaded.config, loaded.samples, loaded.run_dir, PipelineOptions{o.resume, nullptr});
  if (command == "detect") {
    pipeline.detect_vp();
  } else if (command == "run") {
    if (o.all) pipeline.run_all();
    else pipeline.run_stage2();
  } else if (command == "rtg") {
    const bool both = !o.label && !o.rp;
    if (o.label || both) {
      if (!loaded.config.rtg_label) {
        if (o.label) throw ConfigError("rtg label phases are disabled in the config");
      } else {
        pipeline.run_rtg_label();
      }
    }
    if (o.rp || both) {
      if (!loaded.config.rtg_rp) {
        if (o.rp) throw ConfigError("rtg reasoning phases are disabled in the config");
      } else {
        pipeline.run_rtg_rp();
      }
    }
  } else if (command == "ablate") {
    pipeline.run_ablation_repeat();
  } else if (command == "annotate") {
    pipeline.annotate_root_causes();
  }
  err << command << ": " << pipeline.calls_issued() << " provider calls issued, run directory "
      << pipeline.paths().dir.string() << '\n';
  out << json{{"run_dir", pipeline.paths().dir.string()},
              {"calls", pipeline.calls_issued()},
              {"phases", phase_summary(pipeline.state(), loaded.config, kinds)}}
             .dump(2)
      << '\n';
  return kExitOk;
}

int cmd_prepare(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.inputs.empty()) throw UsageError("prepare needs at least one --input");
  if (o.out.empty()) throw UsageError("prepare needs --out");
  if (o.dry_run) {
    out << "planned provider calls: 0\n";
    return kExitOk;
  }
  std::string content;
  for (const auto& input : o.inputs) {
    std::string text = read_text(input);
    if (!text.empty() && text.back() != '\n') text += '\n';
    content += text;
  }
  SampleSet set = parse_samples(content);
  const std::uint64_t seed = o.seed.value_or(0);
  if (o.unknownize_half)
    set = unknownize_half(set, DeletionStrategy::random_sentences(o.delete_count, seed), seed);
  if (o.target > 0) set = build_balanced_split(set, o.target, seed);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  save_samples(dir / "samples.jsonl", set);
  const json manifest = {{"tool_version", WAKENLLM_VERSION},
                         {"inputs", o.inputs},
                         {"seed", seed},
                         {"unknownize_half", o.unknownize_half},
                         {"delete_count", o.delete_count},
                         {"target", o.target},
                         {"balanced", set.balanced()},
                         {"dataset", set.manifest().to_json()},
                         {"stats", dataset_stats(set).to_json()}};
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  err << "prepare: wrote " << set.size() << " samples to " << (dir / "samples.jsonl").string() << '\n';
  out << manifest.dump(2) << '\n';
  return kExitOk;
}

int cmd_validate(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.dry_run) {
    out << "planned provider calls: 0\n";
    return kExitOk;
  }
  json result;
  if (!o.inputs.empty()) {
    json files = json::array();
    for (const auto& input : o.inputs) {
      const SampleSet set = load_samples(input);
      files.push_back({{"input", input}, {"dataset", set.manifest().to_json()},
                       {"stats", dataset_stats(set).to_json()}});
    }
    result["inputs"] = files;
  }
  if (!o.config.empty() || !o.run_dir.empty()) {
    const Loaded loaded = load_effective(o);
    result["config_digest"] = loaded.config.digest();
    result["dataset"] = loaded.samples.manifest().to_json();
    result["stats"] = dataset_stats(loaded.samples).to_json();
  }
  if (result.is_null()) throw UsageError("validate needs --input, --config or --run-dir");
  err << "validate: ok\n";
  out << result.dump(2) << '\n';
  return kExitOk;
}

int cmd_metrics(const Options& o, std::ostream& out, std::ostream& err) {
  const fs::path dir = run_dir_only(o);
  if (o.dry_run) {
    out << "planned provider calls: 0\n";
    return kExitOk;
  }
  const MetricsReport report = compute_run_metrics(dir);
  const RunPaths paths(dir);
  write_text_atomic(paths.metrics, report.to_json().dump(2) + "\n");
  out << report.to_json().dump(2) << '\n';
  if (!o.check_oracle) return kExitOk;

  const StoredRun stored = load_stored_run(dir);
  const MetricsReport oracle = oracle_recompute(paths.trajectory, stored.config);
  const auto diffs = diff_reports(report, oracle);
  if (!diffs.empty()) {
    err << "metrics: engine and oracle disagree on " << diffs.size() << " field(s)\n";
    for (const auto& d : diffs)
      err << "  " << d.key << ": engine=" << d.engine << " oracle=" << d.oracle << '\n';
    return kExitDomainError;
  }
  err << "metrics: oracle agrees on all " << report.fields().size() << " fields\n";
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<std::string> dirs = o.run_dirs;
  if (!o.run_dir.empty()) dirs.insert(dirs.begin(), o.run_dir);
  if (dirs.empty()) throw UsageError("report needs at least one --run-dir");
  TableFormat format;
  if (o.format == "csv") format = TableFormat::Csv;
  else if (o.format == "md") format = TableFormat::Markdown;
  else if (o.format == "both") format = TableFormat::Both;
  else throw UsageError("--format must be csv, md or both");
  if (o.dry_run) {
    out << "planned provider calls: 0\n";
    return kExitOk;
  }
  std::vector<ReportRow> rows;
  for (const auto& dir : dirs) rows.push_back(report_row(dir, compute_run_metrics(dir)));
  const fs::path out_dir = o.out.empty() ? RunPaths(dirs.front()).tables : fs::path(o.out);
  for (const auto& path : emit_tables(rows, out_dir, format)) out << path.string() << '\n';
  err << "report: " << rows.size() << " run(s) tabulated\n";
  return kExitOk;
}

int cmd_replay(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.run_dir.empty()) throw UsageError("replay needs --run-dir for the new run");
  std::string transcript = o.transcript;
  if (transcript.empty() && !o.from.empty()) transcript = RunPaths(o.from).transcript.string();
  if (transcript.empty()) throw UsageError("replay needs --transcript or --from");

  Loaded loaded;
  if (!o.config.empty()) {
    loaded = load_effective(o);
  } else if (!o.from.empty()) {
    StoredRun stored = load_stored_run(o.from);
    loaded = Loaded{std::move(stored.config), std::move(stored.samples), o.run_dir};
    apply_overrides(loaded.config, o);
  } else {
    throw UsageError("replay needs --from or --config");
  }
  loaded.config.provider.kind = ProviderSettings::Kind::Replay;
  loaded.config.provider.replay_transcript = fs::absolute(transcript).string();
  loaded.config.validate();

  const KindSet kinds = kinds_for("replay", o);
  if (o.dry_run) return dry_run(loaded, kinds, out);
  Pipeline pipeline(loaded.config, loaded.samples, loaded.run_dir, PipelineOptions{o.resume, nullptr});
  pipeline.run_all();
  err << "replay: " << pipeline.calls_issued() << " turns replayed\n";
  out << json{{"run_dir", loaded.run_dir.string()},
              {"phases", phase_summary(pipeline.state(), loaded.config, kinds)}}
             .dump(2)
      << '\n';
  return kExitOk;
}

void add_run_flags(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "run config (JSON)");
  sub->add_option("--run-dir,--run", o.run_dir, "run directory");
  sub->add_option("--provider", o.provider, "scripted, live or replay");
  sub->add_option("--model", o.model, "model name sent to the provider");
  sub->add_option("--style", o.style, "stimulation style, e.g. fact=detailed,story=concise");
  sub->add_option("--misguide-grid", o.grid, "misguiding rates, e.g. 1,0.6667,0.5,0");
  sub->add_option("--seed", o.seed, "run seed");
  sub->add_option("--concurrency", o.concurrency, "parallel provider calls")->check(CLI::Range(1, 1024));
  sub->add_option("--budget", o.budget, "maximum provider calls for this invocation");
  sub->add_flag("--dry-run", o.dry_run, "print the planned provider-call count and exit");
  sub->add_flag("--resume", o.resume, "continue an interrupted phase");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vague-perception evaluation runner", "wakenllm"};
  app.set_version_flag("--version", WAKENLLM_VERSION);
  app.require_subcommand(1);
  Options o;

  auto* prepare = app.add_subcommand("prepare", "build, unknownize and balance a sample file");
  prepare->add_option("--input", o.inputs, "sample file (repeatable)")->required();
  prepare->add_option("--out", o.out, "output directory")->required();
  prepare->add_flag("--unknownize-half", o.unknownize_half, "relabel a seeded half of the verifiable samples");
  prepare->add_option("--target", o.target, "balanced split size");
  prepare->add_option("--delete-count", o.delete_count, "sentences removed per unknownized sample")
      ->check(CLI::PositiveNumber);
  prepare->add_option("--seed", o.seed, "preparation seed");
  prepare->add_flag("--dry-run", o.dry_run, "print the planned provider-call count and exit");

  auto* validate = app.add_subcommand("validate", "check a sample file or run config");
  validate->add_option("--input", o.inputs, "sample file (repeatable)");
  add_run_flags(validate, o);

  auto* detect = app.add_subcommand("detect", "direct prediction and vague-perception detection");
  add_run_flags(detect, o);
  auto* run = app.add_subcommand("run", "stage 1 and stage 2 stimulation");
  add_run_flags(run, o);
  run->add_flag("--all", o.all, "run every phase the config enables");
  auto* rtg = app.add_subcommand("rtg", "remind-then-guide phases");
  add_run_flags(rtg, o);
  rtg->add_flag("--label", o.label, "only the assigned-label grid");
  rtg->add_flag("--rp", o.rp, "only the reasoning-process variant");
  auto* ablate = app.add_subcommand("ablate", "repeat stage 1 on its unconverted samples");
  add_run_flags(ablate, o);
  auto* annotate = app.add_subcommand("annotate", "root-cause annotation of detection errors");
  add_run_flags(annotate, o);

  auto* metrics = app.add_subcommand("metrics", "compute the metrics report of a run");
  add_run_flags(metrics, o);
  metrics->add_flag("--check-oracle", o.check_oracle, "recompute from the trajectory and compare");

  auto* report = app.add_subcommand("report", "emit tables for one or more runs");
  report->add_option("--run-dir,--run", o.run_dirs, "run directory (repeatable)")->required();
  report->add_option("--out", o.out, "table directory (default: <first run>/tables)");
  report->add_option("--format", o.format, "csv, md or both");
  report->add_flag("--dry-run", o.dry_run, "print the planned provider-call count and exit");

  auto* replay = app.add_subcommand("replay", "re-run a config against a recorded transcript");
  add_run_flags(replay, o);
  replay->add_option("--from", o.from, "recorded run directory supplying config, samples and transcript");
  replay->add_option("--transcript", o.transcript, "transcript file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(o, out, err);
    if (validate->parsed()) return cmd_validate(o, out, err);
    if (metrics->parsed()) return cmd_metrics(o, out, err);
    if (report->parsed()) return cmd_report(o, out, err);
    if (replay->parsed()) return cmd_replay(o, out, err);
    for (auto* sub : {detect, run, rtg, ablate, annotate})
      if (sub->parsed()) return run_pipeline(sub->get_name(), o, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return kExitDomainError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
  return kExitUsage;
}

}  // namespace wakenllm::cli
