#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wakenllm/config.hpp"
#include "wakenllm/dataset.hpp"
#include "wakenllm/domain.hpp"
#include "wakenllm/judge.hpp"
#include "wakenllm/prompt.hpp"
#include "wakenllm/provider.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {

using IdSet = std::set<std::string>;

/// TC/FC/UC split of one phase's input. Id sets are ordered so files diff cleanly.
struct StagePartition {
  std::string phase;
  IdSet input;
  IdSet tc;
  IdSet fc;
  IdSet uc;
  IdSet parse_failures;                     // subset of input; counted as Unknown
  std::map<std::string, Label> assigned_labels;  // RtG label phases only

  /// Throws PartitionViolation unless tc, fc, uc are disjoint and cover input.
  void check() const;
  bool empty() const noexcept { return input.empty(); }
  const IdSet& of(Verdict verdict) const;

  nlohmann::json to_json() const;
  static StagePartition from_json(const nlohmann::json& j);
  bool operator==(const StagePartition&) const = default;
};

struct DetectResult {
  StagePartition partition;  // the UC part is the vague-perception set
  Rational direct_accuracy{0};

  const IdSet& vp() const noexcept { return partition.uc; }
};

struct AblationResult {
  StagePartition partition;
  Rational unchanged_rate{1};
  bool empty = true;  // no stage-1 UC samples; the rate is 1 by convention
};

struct RootCauseSummary {
  IdSet input;  // detection errors: every sample whose detect verdict is not TC
  std::map<std::string, RootCause> causes;
  IdSet unannotated;  // judge failed for these

  std::map<RootCause, std::size_t> distribution() const;
  nlohmann::json to_json() const;
  static RootCauseSummary from_json(const nlohmann::json& j);
};

/// Everything a finished (or checkpointed) run has committed to partitions/.
struct RunState {
  std::map<std::string, StagePartition> partitions;  // keyed by phase name
  std::optional<RootCauseSummary> root_cause;

  const StagePartition* find(const Phase& phase) const;
  bool complete(const Phase& phase) const;
};

/// File names inside a run directory.
struct RunPaths {
  explicit RunPaths(std::filesystem::path dir);

  std::filesystem::path dir;
  std::filesystem::path run_json;     // immutable config snapshot
  std::filesystem::path manifest;     // regenerated after every phase
  std::filesystem::path samples;
  std::filesystem::path trajectory;
  std::filesystem::path transcript;
  std::filesystem::path partitions;
  std::filesystem::path lock;
  std::filesystem::path metrics;
  std::filesystem::path tables;

  std::filesystem::path partition(const Phase& phase) const;
};

RunState load_run_state(const std::filesystem::path& run_dir);

/// Phases the config asks for, in execution order.
std::vector<Phase> enabled_phases(const RunConfig& config);

struct PhasePlan {
  std::string phase;
  std::size_t calls = 0;  // upper bound on provider calls still to issue
  bool complete = false;
};

/// Call estimate for the remaining work; makes no calls and touches no files.
std::vector<PhasePlan> plan_calls(const RunConfig& config, const SampleSet& samples,
                                  const RunState& state);

/// Config and samples snapshotted in an existing run directory.
struct StoredRun {
  RunConfig config;
  SampleSet samples;
};
StoredRun load_stored_run(const std::filesystem::path& run_dir);

struct PipelineOptions {
  /// Required to continue a phase that was interrupted part-way.
  bool resume = false;
  /// Overrides the backend built from the config (tests, replay).
  std::shared_ptr<Backend> backend;
};

/// Runs the protocol against one run directory. Each phase method first runs
/// any missing prerequisite phase, and returns the stored partition without
/// issuing calls when the phase is already complete.
class Pipeline {
 public:
  /// Creates or reopens the run directory and takes its lock. Throws
  /// ManifestMismatch when the directory belongs to a different config or
  /// sample set, RunLocked when another pipeline holds it.
  Pipeline(RunConfig config, SampleSet samples, std::filesystem::path run_dir,
           PipelineOptions options = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  DetectResult detect_vp();
  StagePartition run_stage1();
  StagePartition run_stage2();
  std::vector<StagePartition> run_rtg_label();
  std::vector<StagePartition> run_rtg_rp();
  AblationResult run_ablation_repeat();
  RootCauseSummary annotate_root_causes();
  /// Every enabled phase, in order.
  void run_all();

  const RunState& state() const noexcept;
  const RunConfig& config() const noexcept;
  const SampleSet& samples() const noexcept;
  const RunPaths& paths() const noexcept;
  std::size_t calls_issued() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace wakenllm
