#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "wakenllm/config.hpp"
#include "wakenllm/dataset.hpp"
#include "wakenllm/domain.hpp"
#include "wakenllm/pipeline.hpp"

namespace wakenllm {

using MetricValue = std::variant<std::int64_t, Rational, bool>;

/// Flat, ordered key/value document. Rates are exact rationals; emptiness
/// flags sit next to the rate they qualify ("ocr" and "ocr_empty").
class MetricsReport {
 public:
  void set(const std::string& key, MetricValue value) { fields_[key] = std::move(value); }
  bool has(const std::string& key) const { return fields_.contains(key); }
  /// Throw std::out_of_range on a missing key, std::bad_variant_access on a type mismatch.
  std::int64_t count(const std::string& key) const { return std::get<std::int64_t>(fields_.at(key)); }
  Rational rate(const std::string& key) const { return std::get<Rational>(fields_.at(key)); }
  bool flag(const std::string& key) const { return std::get<bool>(fields_.at(key)); }

  const std::map<std::string, MetricValue>& fields() const noexcept { return fields_; }

  /// Rationals become {"exact": "p/q", "percent": "12.34"}.
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  bool operator==(const MetricsReport&) const = default;

 private:
  std::map<std::string, MetricValue> fields_;
};

std::string metric_value_string(const MetricValue& value);

struct FieldDiff {
  std::string key;
  std::string engine;  // "<absent>" when missing
  std::string oracle;
};

std::vector<FieldDiff> diff_reports(const MetricsReport& engine, const MetricsReport& oracle);

/// A rate plus the flag saying its denominator was empty (rate is then 0).
struct RateResult {
  Rational value{0};
  bool empty = false;

  bool operator==(const RateResult&) const = default;
};

using FTypeIndex = std::map<std::string, FType, std::less<>>;
FTypeIndex ftype_index(const SampleSet& samples);

/// |ids of `verdict` restricted to f| / |input|; f empty means all types.
/// The denominator is the whole input, so per-type rates add up to the total.
RateResult compute_rate(const StagePartition& partition, Verdict verdict, std::optional<FType> f,
                        const FTypeIndex& ftypes);
RateResult compute_tcr(const StagePartition& partition, std::optional<FType> f, const FTypeIndex& ftypes);

/// Throws DisjointnessViolation when tc1 and tc2 overlap, SubsetViolation when
/// either is not inside vp.
RateResult compute_ocr(const IdSet& tc1, const IdSet& tc2, const IdSet& vp);

/// Keys are (stage, misguide rate). Needs (1,0), (1,1), (2,0), (2,1); throws
/// MissingGridPoint otherwise. Stages whose rate is flagged empty are left out
/// of the mean; the result is flagged empty when both are.
using GridRates = std::map<std::pair<int, Rational>, RateResult>;
RateResult compute_conf(const GridRates& accuracy_at);

Rational compute_cgr(const Rational& tcr2_with_rp, const Rational& tcr2_base);
Rational compute_rpc(const Rational& tcr1_with_rp, const Rational& tcr1_base);

/// |fc1 \ (fc2 ∪ tc2)| / |fc1|. Throws SubsetViolation, DisjointnessViolation.
RateResult compute_deg(const IdSet& fc1, const IdSet& tc2, const IdSet& fc2);

/// direct + |tc1 ∪ tc2| / total. Throws DisjointnessViolation, and
/// RangeViolation when total is 0 or the result exceeds 1.
Rational compute_latent_accuracy(const Rational& direct_accuracy, const IdSet& tc1, const IdSet& tc2,
                                 std::int64_t total);

/// Every report field from committed partitions.
MetricsReport compute_report(const RunState& state, const SampleSet& samples, const RunConfig& config);

/// compute_report on a run directory, after checking that each partition
/// agrees with the trajectory (one primary record per input sample). Throws
/// PartitionViolation otherwise.
MetricsReport compute_run_metrics(const std::filesystem::path& run_dir);

/// Independent recomputation by full scans of the trajectory file. Shares no
/// code with the engine beyond the domain types.
MetricsReport oracle_recompute(const std::filesystem::path& trajectory, const RunConfig& config);

}  // namespace wakenllm
