#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wakenllm {

/// Base class for every domain error. The CLI maps these to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingJudgeResult : public Error {
 public:
  explicit MissingJudgeResult(const std::string& sample_id)
      : Error("missing justification judgement for unverifiable Unknown prediction on '" +
              sample_id + "'") {}
};

class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& detail)
      : Error("schema error at line " + std::to_string(line) + ", field '" + field +
              "': " + detail),
        line_(line),
        field_(std::move(field)) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(std::string id) : Error("duplicate sample id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class TooFewSentences : public Error {
 public:
  TooFewSentences(const std::string& id, std::size_t have, std::size_t remove)
      : Error("sample '" + id + "' has " + std::to_string(have) + " sentences, cannot remove " +
              std::to_string(remove)) {}
};

class InsufficientPool : public Error {
 public:
  InsufficientPool(std::string ftype, std::size_t have, std::size_t need)
      : Error("insufficient pool for ftype " + ftype + ": have " + std::to_string(have) +
              ", need " + std::to_string(need)),
        ftype_(std::move(ftype)),
        have_(have),
        need_(need) {}
  const std::string& ftype() const noexcept { return ftype_; }
  std::size_t have() const noexcept { return have_; }
  std::size_t need() const noexcept { return need_; }

 private:
  std::string ftype_;
  std::size_t have_;
  std::size_t need_;
};

class ProviderUnreachable : public Error {
 public:
  using Error::Error;
};

class CredentialMissing : public Error {
 public:
  explicit CredentialMissing(const std::string& variable)
      : Error("credential environment variable '" + variable + "' is not set") {}
};

class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(std::string tag)
      : Error("transcript has no entry for request tag '" + tag + "'"), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

class BudgetExceeded : public Error {
 public:
  explicit BudgetExceeded(std::size_t budget)
      : Error("provider call budget of " + std::to_string(budget) + " exhausted") {}
};

class TranscriptError : public Error {
 public:
  TranscriptError(std::size_t line, const std::string& detail)
      : Error("corrupt record at line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MissingSlot : public Error {
 public:
  explicit MissingSlot(std::string name)
      : Error("template slot '" + name + "' has no value"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class MissingReasoning : public Error {
 public:
  explicit MissingReasoning(const std::string& sample_id)
      : Error("no prior reasoning recorded for sample '" + sample_id + "'") {}
};

class ManifestMismatch : public Error {
 public:
  using Error::Error;
};

class RunLocked : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DisjointnessViolation : public Error {
 public:
  explicit DisjointnessViolation(std::vector<std::string> ids);
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class SubsetViolation : public Error {
 public:
  explicit SubsetViolation(std::vector<std::string> ids);
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class MissingGridPoint : public Error {
 public:
  using Error::Error;
};

class RangeViolation : public Error {
 public:
  using Error::Error;
};

class PartitionViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace wakenllm
