#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wakenllm/domain.hpp"
#include "wakenllm/judge.hpp"
#include "wakenllm/prompt.hpp"
#include "wakenllm/provider.hpp"

namespace wakenllm {

std::string_view request_role_name(RequestRole role);  // "primary", "justify", "judge"
std::optional<RequestRole> parse_request_role(std::string_view text);

/// Slot values that vary the prompt beyond the sample itself.
struct RecordCondition {
  std::optional<Label> answer;          // previous answer shown to the model
  std::optional<Label> assigned_label;  // RtG label guidance
  std::optional<bool> misguided;        // assigned_label != gold
  std::optional<std::string> prior_reasoning_digest;

  bool operator==(const RecordCondition&) const = default;
};

/// One model turn and everything derived from it. Serialized one per line.
struct TrajectoryRecord {
  std::uint64_t seq = 0;
  std::string run_id;
  Phase phase;
  std::string sample_id;
  FType ftype = FType::Verifiable;
  Label gold = Label::Unknown;
  RequestRole role = RequestRole::Primary;
  TemplateId template_id = TemplateId::DirectPredict;
  std::string prompt;
  std::string request_digest;
  RecordCondition condition;
  ModelTurn turn;
  std::optional<ParsedCompletion> parsed;  // primary and justify turns
  std::optional<JudgeResult> judge;
  std::optional<Verdict> verdict;  // primary turns only; "NA" elsewhere
  std::optional<std::string> error;  // judge failure; the sample is left unannotated
  std::string ts;

  nlohmann::json to_json() const;
  static TrajectoryRecord from_json(const nlohmann::json& j);
};

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

/// Appends records, numbering them from `next_seq`. A batch is written with a
/// single flush so a crash leaves at most one torn line at the tail.
class TrajectoryWriter {
 public:
  TrajectoryWriter(const std::filesystem::path& path, std::uint64_t next_seq);

  void append(std::vector<TrajectoryRecord>& batch);
  std::uint64_t next_seq() const noexcept { return next_seq_; }

 private:
  std::ofstream out_;
  std::uint64_t next_seq_;
};

/// Throws TranscriptError naming the first corrupt line.
std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path);

/// Drops a trailing partial line left by an interrupted write. Returns the
/// number of bytes removed.
std::size_t repair_tail(const std::filesystem::path& path);

/// File content with every "ts" field removed, for byte comparison of runs.
std::string normalized_trajectory(const std::filesystem::path& path);

/// Whole-file read; throws Error when the file cannot be opened.
std::string read_text(const std::filesystem::path& path);
/// Writes through a temporary file and a rename, so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace wakenllm
