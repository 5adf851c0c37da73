#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "wakenllm/domain.hpp"

namespace wakenllm {

struct DatasetManifest {
  std::vector<std::string> datasets;  // sorted, distinct
  std::size_t total = 0;
  std::size_t verifiable = 0;
  std::size_t unverifiable = 0;
  std::size_t unknownized = 0;  // relabeled samples carry no manual verification
  std::map<FType, std::map<std::string, std::size_t>> by_subcategory;
  std::string source_digest;

  nlohmann::json to_json() const;
};

/// Validated, id-unique collection of samples in file order.
class SampleSet {
 public:
  SampleSet() = default;
  /// Validates every sample and id uniqueness; throws DuplicateId / SchemaError.
  explicit SampleSet(std::vector<Sample> samples, std::string source_digest = {});

  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const DatasetManifest& manifest() const noexcept { return manifest_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const Sample* find(std::string_view id) const;
  /// |verifiable| and |unverifiable| differ by at most one.
  bool balanced() const;

 private:
  std::vector<Sample> samples_;
  std::map<std::string, std::size_t, std::less<>> index_;
  DatasetManifest manifest_;
};

/// Parses one line-delimited record. Unknown top-level fields are rejected.
Sample parse_sample_record(std::string_view line, std::size_t line_number);
std::string sample_to_record(const Sample& sample);

SampleSet parse_samples(std::string_view content);
SampleSet load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path, const SampleSet& set);

/// Splits a context into sentence pieces. A sentence ends at '.', '!' or '?'
/// followed by whitespace or end of text; in fact-based contexts a line break
/// also ends one. Each piece keeps its trailing whitespace, so concatenating
/// the pieces gives back the context byte for byte.
std::vector<std::string> split_sentences(std::string_view context, SampleForm form);

struct RandomSentences {
  std::size_t count = 2;
  std::uint64_t seed = 0;
};

/// Asks a model which sentences to delete. `complete` sends one prompt and
/// returns the raw completion.
struct ModelSelected {
  std::function<std::string(const std::string& prompt)> complete;
  std::size_t count = 2;
  std::string provider;
};

class DeletionStrategy {
 public:
  /// Throws ConfigError when count is 0.
  static DeletionStrategy random_sentences(std::size_t count, std::uint64_t seed);
  static DeletionStrategy model_selected(ModelSelected selector);

  std::size_t count() const;
  const std::variant<RandomSentences, ModelSelected>& kind() const noexcept { return kind_; }

 private:
  explicit DeletionStrategy(std::variant<RandomSentences, ModelSelected> kind) : kind_(std::move(kind)) {}
  std::variant<RandomSentences, ModelSelected> kind_;
};

/// Removes `strategy.count()` sentences and relabels the sample Unknown. The
/// removed positions are encoded in the id suffix ("<id>~unk-3-7", 0-based).
Sample unknownize(const Sample& sample, const DeletionStrategy& strategy);

/// Original sentence positions of an unknownized sample's removed sentences.
std::vector<std::size_t> removed_positions(const Sample& sample);

/// Puts the removed sentences back at their recorded positions.
std::string restore_context(const Sample& sample);

/// Unknownizes a seeded half of the native verifiable samples.
SampleSet unknownize_half(const SampleSet& set, const DeletionStrategy& strategy,
                          std::uint64_t seed);

/// floor(target/2) verifiable and ceil(target/2) unverifiable samples drawn
/// without replacement, returned sorted by id.
SampleSet build_balanced_split(const SampleSet& pool, std::size_t target_size,
                               std::uint64_t seed);

struct DatasetStats {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_dataset;
  std::map<SampleForm, std::size_t> by_form;
  std::map<FType, std::size_t> by_ftype;
  std::map<std::string, std::size_t> by_subcategory;

  Rational form_fraction(SampleForm form) const;
  nlohmann::json to_json() const;
};

DatasetStats dataset_stats(const SampleSet& set);

}  // namespace wakenllm
