// Brute-force recomputation of every report field from the trajectory file.
// Deliberately written against the raw JSON lines, with its own label scan
// and verdict rules, so it can catch mistakes in the incremental engine.

#include <array>
#include <fstream>
#include <map>
#include <set>

#include "wakenllm/errors.hpp"
#include "wakenllm/metrics.hpp"

namespace wakenllm {

namespace {

using nlohmann::json;

struct Seen {
  bool verifiable = true;
  std::string label;  // "PROVED", "DISPROVED", "UNKNOWN" or "" for no sentinel
  std::string verdict;
};

std::string scan_label(const std::string& raw) {
  static const std::pair<const char*, const char*> kTokens[] = {
      {"__PROVED__", "PROVED"}, {"__DISPROVED__", "DISPROVED"}, {"__UNKNOWN__", "UNKNOWN"}};
  std::string best;
  std::size_t best_end = 0;
  for (const auto& [token, name] : kTokens) {
    const auto pos = raw.rfind(token);
    if (pos == std::string::npos) continue;
    const std::size_t end = pos + std::string(token).size();
    if (best.empty() || end > best_end) {
      best = name;
      best_end = end;
    }
  }
  return best;
}

std::string derive_verdict(const std::string& gold, const std::string& label, const json& judge,
                           const std::string& where) {
  const std::string effective = label.empty() ? "UNKNOWN" : label;
  if (gold != "UNKNOWN") {
    if (effective == gold) return "TC";
    if (effective == "UNKNOWN") return "UC";
    return "FC";
  }
  if (effective != "UNKNOWN") return "FC";
  if (!judge.is_object() || !judge.contains("justification_valid"))
    throw PartitionViolation(where + ": unverifiable Unknown without a judgement");
  return judge.at("justification_valid").get<bool>() ? "TC" : "UC";
}

struct PhaseRecords {
  std::map<std::string, Seen> by_id;

  std::int64_t count(const std::string& verdict, int type) const {  // type: 0 all, 1 v, 2 u
    std::int64_t n = 0;
    for (const auto& [id, s] : by_id) {
      if (!verdict.empty() && s.verdict != verdict) continue;
      if (type == 1 && !s.verifiable) continue;
      if (type == 2 && s.verifiable) continue;
      ++n;
    }
    return n;
  }
  std::set<std::string> ids(const std::string& verdict) const {
    std::set<std::string> out;
    for (const auto& [id, s] : by_id)
      if (s.verdict == verdict) out.insert(id);
    return out;
  }
  std::int64_t parse_failures() const {
    std::int64_t n = 0;
    for (const auto& [id, s] : by_id)
      if (s.label.empty()) ++n;
    return n;
  }
  std::int64_t size() const { return static_cast<std::int64_t>(by_id.size()); }
};

Rational div0(std::int64_t a, std::int64_t b) { return b == 0 ? Rational{0} : Rational(a, b); }

std::string key_of(const Rational& r) {
  return r.denominator() == 1 ? std::to_string(r.numerator())
                              : std::to_string(r.numerator()) + ":" + std::to_string(r.denominator());
}

}  // namespace

MetricsReport oracle_recompute(const std::filesystem::path& trajectory, const RunConfig& config) {
  std::map<std::string, PhaseRecords> phases;
  struct CauseRecord {
    std::string cause;  // empty when unannotated
  };
  std::map<std::string, CauseRecord> causes;

  std::ifstream in(trajectory, std::ios::binary);
  std::string line;
  std::size_t line_number = 0;
  while (in && std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw TranscriptError(line_number, e.what());
    }
    const std::string phase = j.at("phase").get<std::string>();
    const std::string id = j.at("sample_id").get<std::string>();
    const std::string role = j.at("role").get<std::string>();
    const std::string where = phase + "/" + id;
    if (phase == "root-cause") {
      if (causes.contains(id)) throw PartitionViolation("duplicate record " + where);
      CauseRecord c;
      const json& judge = j.at("judge");
      if (!j.contains("error") && judge.is_object() && judge.contains("root_cause"))
        c.cause = judge.at("root_cause").get<std::string>();
      causes[id] = c;
      continue;
    }
    if (role != "primary") continue;
    auto& records = phases[phase].by_id;
    if (records.contains(id)) throw PartitionViolation("duplicate record " + where);
    Seen s;
    const std::string gold = j.at("gold").get<std::string>();
    s.verifiable = gold != "UNKNOWN";
    s.label = scan_label(j.at("turn").at("raw_completion").get<std::string>());
    s.verdict = derive_verdict(gold, s.label, j.at("judge"), where);
    if (j.at("verdict").get<std::string>() != s.verdict)
      throw PartitionViolation(where + ": recorded verdict " + j.at("verdict").get<std::string>() +
                               " but the completion gives " + s.verdict);
    records[id] = s;
  }

  const PhaseRecords none;
  auto get = [&](const std::string& phase) -> const PhaseRecords& {
    auto it = phases.find(phase);
    return it == phases.end() ? none : it->second;
  };
  const auto& detect = get("detect");
  const auto& s1 = get("stage1");
  const auto& s2 = get("stage2");

  // Phase barrier: every later phase may only see the samples its predecessor handed on.
  const auto vp = detect.ids("UC");
  const auto fc1 = s1.ids("FC");
  const auto uc1 = s1.ids("UC");
  for (const auto& [phase, records] : phases) {
    if (phase == "detect") continue;
    const bool second = phase == "stage2" || phase.ends_with("-s2") || phase.find("-s2-") != std::string::npos;
    const std::set<std::string>* allowed = phase == "ablation" ? &uc1 : second ? &fc1 : &vp;
    for (const auto& [id, s] : records.by_id)
      if (!allowed->contains(id))
        throw PartitionViolation("phase barrier: " + phase + " record for '" + id +
                                 "' without the required earlier verdict");
  }

  MetricsReport r;
  const std::int64_t total = detect.size();
  r.set("samples_total", total);
  r.set("samples_v", detect.count("", 1));
  r.set("samples_u", detect.count("", 2));
  r.set("detect_tc", detect.count("TC", 0));
  r.set("detect_fc", detect.count("FC", 0));
  r.set("detect_uc", detect.count("UC", 0));
  r.set("detect_parse_failures", detect.parse_failures());
  r.set("vp_total", detect.count("UC", 0));
  r.set("vp_v", detect.count("UC", 1));
  r.set("vp_u", detect.count("UC", 2));
  const Rational direct = div0(detect.count("TC", 0), total);
  r.set("direct_accuracy", direct);
  r.set("direct_accuracy_empty", total == 0);
  r.set("cause_v", div0(detect.count("UC", 1), detect.count("", 1)));
  r.set("cause_v_empty", detect.count("", 1) == 0);
  r.set("cause_u", div0(detect.count("UC", 2), detect.count("", 2)));
  r.set("cause_u_empty", detect.count("", 2) == 0);

  std::int64_t parse_failures = detect.parse_failures();
  for (int stage : {1, 2}) {
    const auto& p = stage == 1 ? s1 : s2;
    const std::string pre = "s" + std::to_string(stage) + "_";
    r.set(pre + "input", p.size());
    r.set(pre + "input_v", p.count("", 1));
    r.set(pre + "input_u", p.count("", 2));
    for (const std::string v : {"TC", "FC", "UC"}) {
      std::string k = v == "TC" ? "tc" : v == "FC" ? "fc" : "uc";
      r.set(pre + k + "_v", p.count(v, 1));
      r.set(pre + k + "_u", p.count(v, 2));
      r.set(pre + k + "r_v", div0(p.count(v, 1), p.size()));
      r.set(pre + k + "r_u", div0(p.count(v, 2), p.size()));
      r.set(pre + k + "r_all", div0(p.count(v, 0), p.size()));
    }
    r.set(pre + "empty", p.size() == 0);
    r.set(pre + "parse_failures", p.parse_failures());
    parse_failures += p.parse_failures();
  }

  const auto tc1 = s1.ids("TC");
  const auto tc2 = s2.ids("TC");
  std::set<std::string> converted = tc1;
  for (const auto& id : tc2)
    if (!converted.insert(id).second) throw DisjointnessViolation({id});
  const auto converted_n = static_cast<std::int64_t>(converted.size());
  const auto vp_n = static_cast<std::int64_t>(vp.size());
  r.set("ocr", div0(converted_n, vp_n));
  r.set("ocr_empty", vp_n == 0);
  const auto fc1_n = static_cast<std::int64_t>(fc1.size());
  r.set("deg", div0(s2.count("UC", 0), fc1_n));
  r.set("deg_empty", fc1_n == 0);
  Rational latent{0};
  if (total > 0) {
    latent = direct + Rational(converted_n, total);
    if (latent > Rational{1}) throw RangeViolation("latent accuracy exceeds 1");
  }
  r.set("latent_accuracy", latent);
  r.set("latent_accuracy_vp_denominator", direct + div0(converted_n, vp_n));

  bool has1 = false, has2 = false;
  for (int s : config.rtg_stages) (s == 1 ? has1 : has2) = true;

  if (config.rtg_label) {
    // (stage, rate) -> per-type accuracy, whole-set rate, and emptiness
    std::map<std::pair<int, Rational>, std::array<std::pair<Rational, bool>, 4>> grid;
    for (int stage : config.rtg_stages) {
      for (const auto& m : config.misguide_grid) {
        const std::string phase = "rtg-label-s" + std::to_string(stage) + "-m" + key_of(m);
        const auto& p = get(phase);
        const std::string pre = "rtg_s" + std::to_string(stage) + "_m" + key_of(m) + "_";
        const auto in_v = p.count("", 1), in_u = p.count("", 2);
        const auto tc_v = p.count("TC", 1), tc_u = p.count("TC", 2);
        r.set(pre + "input", p.size());
        r.set(pre + "input_v", in_v);
        r.set(pre + "input_u", in_u);
        r.set(pre + "tc_v", tc_v);
        r.set(pre + "tc_u", tc_u);
        r.set(pre + "tcr_v", div0(tc_v, p.size()));
        r.set(pre + "tcr_u", div0(tc_u, p.size()));
        r.set(pre + "tcr_all", div0(p.count("TC", 0), p.size()));
        r.set(pre + "acc_v", div0(tc_v, in_v));
        r.set(pre + "acc_u", div0(tc_u, in_u));
        r.set(pre + "acc_v_empty", in_v == 0);
        r.set(pre + "acc_u_empty", in_u == 0);
        r.set(pre + "empty", p.size() == 0);
        r.set(pre + "parse_failures", p.parse_failures());
        parse_failures += p.parse_failures();
        grid[{stage, m}] = {std::pair{div0(tc_v, in_v), in_v == 0}, std::pair{div0(tc_u, in_u), in_u == 0},
                            std::pair{div0(tc_v, p.size()), p.size() == 0},
                            std::pair{div0(tc_u, p.size()), p.size() == 0}};
      }
    }
    bool has_zero = false, has_one = false;
    for (const auto& m : config.misguide_grid) {
      if (m == Rational{0}) has_zero = true;
      if (m == Rational{1}) has_one = true;
    }
    const bool available = has_zero && has_one && has1 && has2;
    r.set("conf_available", available);
    if (available) {
      auto conf = [&](std::size_t slot) {
        Rational sum{0};
        int used = 0;
        for (int stage : {1, 2}) {
          const auto& truthful = grid.at({stage, Rational{0}})[slot];
          const auto& wrong = grid.at({stage, Rational{1}})[slot];
          if (truthful.second || wrong.second) continue;
          sum += truthful.first - wrong.first;
          ++used;
        }
        return std::pair{used == 0 ? Rational{0} : sum / used, used == 0};
      };
      r.set("conf_v", conf(0).first);
      r.set("conf_v_empty", conf(0).second);
      r.set("conf_u", conf(1).first);
      r.set("conf_u_empty", conf(1).second);
      r.set("conf_v_wholeset", conf(2).first);
      r.set("conf_u_wholeset", conf(3).first);
    }
  } else {
    r.set("conf_available", false);
  }

  if (config.rtg_rp) {
    for (int stage : config.rtg_stages) {
      const auto& p = get("rtg-rp-s" + std::to_string(stage));
      const std::string pre = "rp_s" + std::to_string(stage) + "_";
      r.set(pre + "input", p.size());
      r.set(pre + "tc", p.count("TC", 0));
      r.set(pre + "tcr", div0(p.count("TC", 0), p.size()));
      r.set(pre + "empty", p.size() == 0);
      r.set(pre + "parse_failures", p.parse_failures());
      parse_failures += p.parse_failures();
    }
  }
  r.set("rpc_available", config.rtg_rp && has1);
  r.set("cgr_available", config.rtg_rp && has2);
  if (config.rtg_rp && has1) {
    const auto& p = get("rtg-rp-s1");
    r.set("rpc", div0(p.count("TC", 0), p.size()) - div0(s1.count("TC", 0), s1.size()));
  }
  if (config.rtg_rp && has2) {
    const auto& p = get("rtg-rp-s2");
    r.set("cgr", div0(p.count("TC", 0), p.size()) - div0(s2.count("TC", 0), s2.size()));
  }

  if (config.ablation) {
    const auto& p = get("ablation");
    r.set("ablation_input", p.size());
    r.set("ablation_tc", p.count("TC", 0));
    r.set("ablation_fc", p.count("FC", 0));
    r.set("ablation_unchanged", p.count("UC", 0));
    r.set("ablation_unchanged_rate", p.size() == 0 ? Rational{1} : Rational(p.count("UC", 0), p.size()));
    r.set("ablation_empty", p.size() == 0);
    r.set("ablation_parse_failures", p.parse_failures());
    parse_failures += p.parse_failures();
  }

  if (config.annotate) {
    std::map<std::string, std::int64_t> tally;
    std::int64_t unannotated = 0;
    for (const auto& [id, c] : causes) {
      if (detect.by_id.contains(id) && detect.by_id.at(id).verdict == "TC")
        throw PartitionViolation("root-cause record for correctly answered sample '" + id + "'");
      if (c.cause.empty()) ++unannotated;
      else ++tally[c.cause];
    }
    r.set("root_cause_input", static_cast<std::int64_t>(causes.size()));
    r.set("root_cause_fu", tally["FU"]);
    r.set("root_cause_rg", tally["RG"]);
    r.set("root_cause_ec", tally["EC"]);
    r.set("root_cause_else", tally["ELSE"]);
    r.set("root_cause_unannotated", unannotated);
  }

  r.set("parse_failures_total", parse_failures);
  return r;
}

}  // namespace wakenllm
