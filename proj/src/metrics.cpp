#include "wakenllm/metrics.hpp"

#include <algorithm>

#include "wakenllm/errors.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {

namespace fs = std::filesystem;
using nlohmann::json;

json MetricsReport::to_json() const {
  json j = json::object();
  for (const auto& [key, value] : fields_) {
    if (const auto* n = std::get_if<std::int64_t>(&value)) j[key] = *n;
    else if (const auto* b = std::get_if<bool>(&value)) j[key] = *b;
    else {
      const auto& r = std::get<Rational>(value);
      j[key] = {{"exact", to_string(r)}, {"percent", format_percent(r)}};
    }
  }
  return j;
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport report;
  for (const auto& [key, value] : j.items()) {
    if (value.is_boolean()) report.set(key, value.get<bool>());
    else if (value.is_number_integer()) report.set(key, value.get<std::int64_t>());
    else if (value.is_object()) {
      auto r = parse_rational(value.at("exact").get<std::string>());
      if (!r) throw Error("bad rational in metrics field '" + key + "'");
      report.set(key, *r);
    } else {
      throw Error("unexpected metrics field '" + key + "'");
    }
  }
  return report;
}

std::string metric_value_string(const MetricValue& value) {
  if (const auto* n = std::get_if<std::int64_t>(&value)) return std::to_string(*n);
  if (const auto* b = std::get_if<bool>(&value)) return *b ? "true" : "false";
  return to_string(std::get<Rational>(value));
}

std::vector<FieldDiff> diff_reports(const MetricsReport& engine, const MetricsReport& oracle) {
  std::vector<FieldDiff> diffs;
  const auto& a = engine.fields();
  const auto& b = oracle.fields();
  std::set<std::string> keys;
  for (const auto& [k, v] : a) keys.insert(k);
  for (const auto& [k, v] : b) keys.insert(k);
  for (const auto& key : keys) {
    auto ia = a.find(key);
    auto ib = b.find(key);
    const std::string va = ia == a.end() ? "<absent>" : metric_value_string(ia->second);
    const std::string vb = ib == b.end() ? "<absent>" : metric_value_string(ib->second);
    const bool same = ia != a.end() && ib != b.end() && ia->second == ib->second;
    if (!same) diffs.push_back({key, va, vb});
  }
  return diffs;
}

FTypeIndex ftype_index(const SampleSet& samples) {
  FTypeIndex index;
  for (const auto& s : samples.samples()) index.emplace(s.id, ftype_of(s));
  return index;
}

namespace {

std::int64_t count_of(const IdSet& ids, std::optional<FType> f, const FTypeIndex& ftypes) {
  if (!f) return static_cast<std::int64_t>(ids.size());
  std::int64_t n = 0;
  for (const auto& id : ids) {
    auto it = ftypes.find(id);
    if (it == ftypes.end()) throw PartitionViolation("id '" + id + "' is not in the sample set");
    if (it->second == *f) ++n;
  }
  return n;
}

RateResult rate(std::int64_t num, std::int64_t den) { return {ratio_or_zero(num, den), den == 0}; }

std::vector<std::string> intersection(const IdSet& a, const IdSet& b) {
  std::vector<std::string> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<std::string> outside(const IdSet& a, const IdSet& universe) {
  std::vector<std::string> out;
  std::set_difference(a.begin(), a.end(), universe.begin(), universe.end(), std::back_inserter(out));
  return out;
}

void require_disjoint(const IdSet& a, const IdSet& b) {
  if (auto common = intersection(a, b); !common.empty()) throw DisjointnessViolation(std::move(common));
}

void require_subset(const IdSet& a, const IdSet& universe) {
  if (auto extra = outside(a, universe); !extra.empty()) throw SubsetViolation(std::move(extra));
}

const StagePartition& partition_or_empty(const RunState& state, const Phase& phase) {
  static const StagePartition kEmpty;
  const auto* p = state.find(phase);
  return p ? *p : kEmpty;
}

}  // namespace

RateResult compute_rate(const StagePartition& partition, Verdict verdict, std::optional<FType> f,
                        const FTypeIndex& ftypes) {
  return rate(count_of(partition.of(verdict), f, ftypes), static_cast<std::int64_t>(partition.input.size()));
}

RateResult compute_tcr(const StagePartition& partition, std::optional<FType> f, const FTypeIndex& ftypes) {
  return compute_rate(partition, Verdict::TrueConverting, f, ftypes);
}

RateResult compute_ocr(const IdSet& tc1, const IdSet& tc2, const IdSet& vp) {
  require_disjoint(tc1, tc2);
  require_subset(tc1, vp);
  require_subset(tc2, vp);
  return rate(static_cast<std::int64_t>(tc1.size() + tc2.size()), static_cast<std::int64_t>(vp.size()));
}

RateResult compute_conf(const GridRates& accuracy_at) {
  Rational sum{0};
  std::int64_t used = 0;
  for (int stage : {1, 2}) {
    auto truthful = accuracy_at.find({stage, Rational{0}});
    auto wrong = accuracy_at.find({stage, Rational{1}});
    if (truthful == accuracy_at.end() || wrong == accuracy_at.end())
      throw MissingGridPoint("conformity needs misguide rates 0 and 1 at stage " + std::to_string(stage));
    if (truthful->second.empty || wrong->second.empty) continue;
    sum += truthful->second.value - wrong->second.value;
    ++used;
  }
  if (used == 0) return {Rational{0}, true};
  return {sum / used, false};
}

Rational compute_cgr(const Rational& tcr2_with_rp, const Rational& tcr2_base) {
  return tcr2_with_rp - tcr2_base;
}

Rational compute_rpc(const Rational& tcr1_with_rp, const Rational& tcr1_base) {
  return tcr1_with_rp - tcr1_base;
}

RateResult compute_deg(const IdSet& fc1, const IdSet& tc2, const IdSet& fc2) {
  require_subset(tc2, fc1);
  require_subset(fc2, fc1);
  require_disjoint(tc2, fc2);
  const auto degraded = static_cast<std::int64_t>(fc1.size() - tc2.size() - fc2.size());
  return rate(degraded, static_cast<std::int64_t>(fc1.size()));
}

Rational compute_latent_accuracy(const Rational& direct_accuracy, const IdSet& tc1, const IdSet& tc2,
                                 std::int64_t total) {
  require_disjoint(tc1, tc2);
  if (total <= 0) throw RangeViolation("latent accuracy needs a non-empty dataset");
  const Rational result =
      direct_accuracy + Rational(static_cast<std::int64_t>(tc1.size() + tc2.size()), total);
  if (result > Rational{1})
    throw RangeViolation("latent accuracy " + to_string(result) + " exceeds 1");
  return result;
}

MetricsReport compute_report(const RunState& state, const SampleSet& samples, const RunConfig& config) {
  MetricsReport r;
  const FTypeIndex ftypes = ftype_index(samples);
  const auto V = std::optional<FType>(FType::Verifiable);
  const auto U = std::optional<FType>(FType::Unverifiable);
  const std::optional<FType> ALL;
  auto n = [](std::size_t x) { return static_cast<std::int64_t>(x); };

  IdSet all_ids;
  for (const auto& s : samples.samples()) all_ids.insert(s.id);
  const std::int64_t total = n(all_ids.size());
  r.set("samples_total", total);
  r.set("samples_v", count_of(all_ids, V, ftypes));
  r.set("samples_u", count_of(all_ids, U, ftypes));

  const auto& detect = partition_or_empty(state, Phase::detect());
  const auto& s1 = partition_or_empty(state, Phase::stage1());
  const auto& s2 = partition_or_empty(state, Phase::stage2());
  std::int64_t parse_failures = n(detect.parse_failures.size());

  r.set("detect_tc", n(detect.tc.size()));
  r.set("detect_fc", n(detect.fc.size()));
  r.set("detect_uc", n(detect.uc.size()));
  r.set("detect_parse_failures", n(detect.parse_failures.size()));
  const IdSet& vp = detect.uc;
  r.set("vp_total", n(vp.size()));
  r.set("vp_v", count_of(vp, V, ftypes));
  r.set("vp_u", count_of(vp, U, ftypes));
  const RateResult direct = rate(n(detect.tc.size()), total);
  r.set("direct_accuracy", direct.value);
  r.set("direct_accuracy_empty", direct.empty);
  const RateResult cause_v = rate(r.count("vp_v"), r.count("samples_v"));
  const RateResult cause_u = rate(r.count("vp_u"), r.count("samples_u"));
  r.set("cause_v", cause_v.value);
  r.set("cause_v_empty", cause_v.empty);
  r.set("cause_u", cause_u.value);
  r.set("cause_u_empty", cause_u.empty);

  for (int stage : {1, 2}) {
    const auto& p = stage == 1 ? s1 : s2;
    const std::string pre = "s" + std::to_string(stage) + "_";
    r.set(pre + "input", n(p.input.size()));
    r.set(pre + "input_v", count_of(p.input, V, ftypes));
    r.set(pre + "input_u", count_of(p.input, U, ftypes));
    for (auto [verdict, name] : {std::pair{Verdict::TrueConverting, "tc"},
                                 std::pair{Verdict::FalseConverting, "fc"},
                                 std::pair{Verdict::UnexcitedConverting, "uc"}}) {
      const std::string v = name;
      r.set(pre + v + "_v", count_of(p.of(verdict), V, ftypes));
      r.set(pre + v + "_u", count_of(p.of(verdict), U, ftypes));
      r.set(pre + v + "r_v", compute_rate(p, verdict, V, ftypes).value);
      r.set(pre + v + "r_u", compute_rate(p, verdict, U, ftypes).value);
      r.set(pre + v + "r_all", compute_rate(p, verdict, ALL, ftypes).value);
    }
    r.set(pre + "empty", p.input.empty());
    r.set(pre + "parse_failures", n(p.parse_failures.size()));
    parse_failures += n(p.parse_failures.size());
  }

  const RateResult ocr = compute_ocr(s1.tc, s2.tc, vp);
  r.set("ocr", ocr.value);
  r.set("ocr_empty", ocr.empty);
  const RateResult deg = compute_deg(s1.fc, s2.tc, s2.fc);
  r.set("deg", deg.value);
  r.set("deg_empty", deg.empty);
  if (total > 0) {
    r.set("latent_accuracy", compute_latent_accuracy(direct.value, s1.tc, s2.tc, total));
  } else {
    r.set("latent_accuracy", Rational{0});
  }
  r.set("latent_accuracy_vp_denominator",
        direct.value + ratio_or_zero(n(s1.tc.size() + s2.tc.size()), n(vp.size())));

  const auto has_stage = [&](int s) {
    return std::find(config.rtg_stages.begin(), config.rtg_stages.end(), s) != config.rtg_stages.end();
  };

  if (config.rtg_label) {
    GridRates acc_v, acc_u, whole_v, whole_u;
    for (int stage : config.rtg_stages) {
      for (const auto& m : config.misguide_grid) {
        const Phase phase = Phase::rtg_label(stage, m);
        const auto& p = partition_or_empty(state, phase);
        const std::string pre = "rtg_s" + std::to_string(stage) + "_m" + to_key(m) + "_";
        const auto input_v = count_of(p.input, V, ftypes);
        const auto input_u = count_of(p.input, U, ftypes);
        const auto tc_v = count_of(p.tc, V, ftypes);
        const auto tc_u = count_of(p.tc, U, ftypes);
        r.set(pre + "input", n(p.input.size()));
        r.set(pre + "input_v", input_v);
        r.set(pre + "input_u", input_u);
        r.set(pre + "tc_v", tc_v);
        r.set(pre + "tc_u", tc_u);
        const RateResult tv = compute_tcr(p, V, ftypes);
        const RateResult tu = compute_tcr(p, U, ftypes);
        r.set(pre + "tcr_v", tv.value);
        r.set(pre + "tcr_u", tu.value);
        r.set(pre + "tcr_all", compute_tcr(p, ALL, ftypes).value);
        const RateResult av = rate(tc_v, input_v);
        const RateResult au = rate(tc_u, input_u);
        r.set(pre + "acc_v", av.value);
        r.set(pre + "acc_u", au.value);
        r.set(pre + "acc_v_empty", av.empty);
        r.set(pre + "acc_u_empty", au.empty);
        r.set(pre + "empty", p.input.empty());
        r.set(pre + "parse_failures", n(p.parse_failures.size()));
        parse_failures += n(p.parse_failures.size());
        acc_v[{stage, m}] = av;
        acc_u[{stage, m}] = au;
        whole_v[{stage, m}] = tv;
        whole_u[{stage, m}] = tu;
      }
    }
    const bool grid_ok =
        std::find(config.misguide_grid.begin(), config.misguide_grid.end(), Rational{0}) !=
            config.misguide_grid.end() &&
        std::find(config.misguide_grid.begin(), config.misguide_grid.end(), Rational{1}) !=
            config.misguide_grid.end();
    const bool available = grid_ok && has_stage(1) && has_stage(2);
    r.set("conf_available", available);
    if (available) {
      const RateResult cv = compute_conf(acc_v);
      const RateResult cu = compute_conf(acc_u);
      r.set("conf_v", cv.value);
      r.set("conf_v_empty", cv.empty);
      r.set("conf_u", cu.value);
      r.set("conf_u_empty", cu.empty);
      r.set("conf_v_wholeset", compute_conf(whole_v).value);
      r.set("conf_u_wholeset", compute_conf(whole_u).value);
    }
  } else {
    r.set("conf_available", false);
  }

  if (config.rtg_rp) {
    for (int stage : config.rtg_stages) {
      const auto& p = partition_or_empty(state, Phase::rtg_rp(stage));
      const std::string pre = "rp_s" + std::to_string(stage) + "_";
      r.set(pre + "input", n(p.input.size()));
      r.set(pre + "tc", n(p.tc.size()));
      r.set(pre + "tcr", compute_tcr(p, ALL, ftypes).value);
      r.set(pre + "empty", p.input.empty());
      r.set(pre + "parse_failures", n(p.parse_failures.size()));
      parse_failures += n(p.parse_failures.size());
    }
  }
  const bool rpc_available = config.rtg_rp && has_stage(1);
  const bool cgr_available = config.rtg_rp && has_stage(2);
  r.set("rpc_available", rpc_available);
  r.set("cgr_available", cgr_available);
  if (rpc_available) r.set("rpc", compute_rpc(r.rate("rp_s1_tcr"), r.rate("s1_tcr_all")));
  if (cgr_available) r.set("cgr", compute_cgr(r.rate("rp_s2_tcr"), r.rate("s2_tcr_all")));

  if (config.ablation) {
    const auto& p = partition_or_empty(state, Phase::ablation());
    r.set("ablation_input", n(p.input.size()));
    r.set("ablation_tc", n(p.tc.size()));
    r.set("ablation_fc", n(p.fc.size()));
    r.set("ablation_unchanged", n(p.uc.size()));
    r.set("ablation_unchanged_rate",
          p.input.empty() ? Rational{1} : Rational(n(p.uc.size()), n(p.input.size())));
    r.set("ablation_empty", p.input.empty());
    r.set("ablation_parse_failures", n(p.parse_failures.size()));
    parse_failures += n(p.parse_failures.size());
  }

  if (config.annotate) {
    const RootCauseSummary summary = state.root_cause.value_or(RootCauseSummary{});
    const auto dist = summary.distribution();
    r.set("root_cause_input", n(summary.input.size()));
    r.set("root_cause_fu", n(dist.at(RootCause::FactUnderstanding)));
    r.set("root_cause_rg", n(dist.at(RootCause::ReasoningGap)));
    r.set("root_cause_ec", n(dist.at(RootCause::ExcessiveCaution)));
    r.set("root_cause_else", n(dist.at(RootCause::Else)));
    r.set("root_cause_unannotated", n(summary.unannotated.size()));
  }

  r.set("parse_failures_total", parse_failures);
  return r;
}

MetricsReport compute_run_metrics(const fs::path& run_dir) {
  const StoredRun stored = load_stored_run(run_dir);
  const RunState state = load_run_state(run_dir);
  const RunPaths paths(run_dir);

  // Each committed partition must be backed by exactly one primary record per input id.
  std::map<std::string, IdSet> seen;
  for (const auto& record : read_trajectory(paths.trajectory)) {
    const bool counted = record.phase.kind == Phase::Kind::RootCause || record.role == RequestRole::Primary;
    if (!counted) continue;
    const std::string phase = record.phase.to_string();
    if (!seen[phase].insert(record.sample_id).second)
      throw PartitionViolation("duplicate " + phase + " record for '" + record.sample_id + "'");
  }
  for (const auto& [phase, partition] : state.partitions) {
    const auto it = seen.find(phase);
    const IdSet empty;
    if ((it == seen.end() ? empty : it->second) != partition.input)
      throw PartitionViolation("partition " + phase + " does not match its trajectory records");
  }
  if (state.root_cause) {
    const auto it = seen.find("root-cause");
    const IdSet empty;
    if ((it == seen.end() ? empty : it->second) != state.root_cause->input)
      throw PartitionViolation("root-cause summary does not match its trajectory records");
  }
  return compute_report(state, stored.samples, stored.config);
}

}  // namespace wakenllm
