#include "wakenllm/report.hpp"

#include <algorithm>
#include <fstream>

#include "wakenllm/errors.hpp"
#include "wakenllm/pipeline.hpp"
#include "wakenllm/trajectory.hpp"

namespace wakenllm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kEmptyCell = "/";
constexpr std::string_view kAbsentCell = "-";

std::string percent_cell(const MetricsReport& r, const std::string& key,
                         std::initializer_list<std::string> empty_flags) {
  if (!r.has(key)) return std::string(kAbsentCell);
  for (const auto& flag : empty_flags)
    if (r.has(flag) && r.flag(flag)) return std::string(kEmptyCell);
  return format_percent(r.rate(key));
}

std::string count_cell(const MetricsReport& r, const std::string& key) {
  return r.has(key) ? std::to_string(r.count(key)) : std::string(kAbsentCell);
}

std::string root_cause_cell(const MetricsReport& r, const std::string& column) {
  if (!r.has("root_cause_input")) return std::string(kAbsentCell);
  const std::int64_t annotated = r.count("root_cause_input") - r.count("root_cause_unannotated");
  if (column == "annotated") return std::to_string(annotated);
  if (column == "unannotated") return count_cell(r, "root_cause_unannotated");
  if (annotated == 0) return std::string(kEmptyCell);
  std::string key = "root_cause_" + column;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  return format_percent(Rational(r.count(key), annotated));
}

std::string csv_field(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string markdown_field(const std::string& cell) {
  std::string out;
  for (char c : cell) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string_view table_name(TableKind kind) {
  switch (kind) {
    case TableKind::Main: return "main";
    case TableKind::Degrading: return "degrading";
    case TableKind::Cause: return "cause";
    case TableKind::Accuracy: return "accuracy";
    case TableKind::RootCause: return "root_cause";
    case TableKind::Ablation: return "ablation";
  }
  return "main";
}

std::vector<std::string> table_columns(TableKind kind) {
  switch (kind) {
    case TableKind::Main: return {"TCR1", "TCR2", "OCR", "Conf_v", "Conf_u", "CGR", "RPC"};
    case TableKind::Degrading: return {"TCR2", "Deg"};
    case TableKind::Cause: return {"V", "U"};
    case TableKind::Accuracy: return {"Direct", "WakenLLM", "WakenLLM_vp"};
    case TableKind::RootCause: return {"annotated", "FU", "RG", "EC", "ELSE", "unannotated"};
    case TableKind::Ablation: return {"input", "unchanged"};
  }
  return {};
}

std::string table_cell(TableKind kind, const std::string& column, const MetricsReport& r) {
  if (column == "TCR1") return percent_cell(r, "s1_tcr_all", {"s1_empty"});
  if (column == "TCR2") return percent_cell(r, "s2_tcr_all", {"s2_empty"});
  if (column == "OCR") return percent_cell(r, "ocr", {"ocr_empty"});
  if (column == "Conf_v") return percent_cell(r, "conf_v", {"conf_v_empty"});
  if (column == "Conf_u") return percent_cell(r, "conf_u", {"conf_u_empty"});
  if (column == "CGR") return percent_cell(r, "cgr", {"s2_empty", "rp_s2_empty"});
  if (column == "RPC") return percent_cell(r, "rpc", {"s1_empty", "rp_s1_empty"});
  if (column == "Deg") return percent_cell(r, "deg", {"deg_empty"});
  if (column == "V") return percent_cell(r, "cause_v", {"cause_v_empty"});
  if (column == "U") return percent_cell(r, "cause_u", {"cause_u_empty"});
  if (column == "Direct") return percent_cell(r, "direct_accuracy", {"direct_accuracy_empty"});
  if (column == "WakenLLM") return percent_cell(r, "latent_accuracy", {"direct_accuracy_empty"});
  if (column == "WakenLLM_vp")
    return percent_cell(r, "latent_accuracy_vp_denominator", {"direct_accuracy_empty"});
  if (kind == TableKind::RootCause) return root_cause_cell(r, column);
  if (column == "input") return count_cell(r, "ablation_input");
  if (column == "unchanged") return percent_cell(r, "ablation_unchanged_rate", {"ablation_empty"});
  throw Error("unknown table column '" + column + "'");
}

TextTable build_table(TableKind kind, std::vector<ReportRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.model, a.dataset) < std::tie(b.model, b.dataset);
  });
  TextTable table;
  table.header = {"model", "dataset"};
  const auto columns = table_columns(kind);
  table.header.insert(table.header.end(), columns.begin(), columns.end());
  for (const auto& row : rows) {
    std::vector<std::string> cells = {row.model, row.dataset};
    for (const auto& column : columns) cells.push_back(table_cell(kind, column, row.report));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

std::string render_csv(const TextTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_field(cells[i]);
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  return out;
}

std::string render_markdown(const TextTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    out += '|';
    for (const auto& cell : cells) out += ' ' + markdown_field(cell) + " |";
    out += '\n';
  };
  line(table.header);
  out += '|';
  for (std::size_t i = 0; i < table.header.size(); ++i) out += i < 2 ? " --- |" : " ---: |";
  out += '\n';
  for (const auto& row : table.rows) line(row);
  return out;
}

TextTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error("unterminated quoted CSV field");
  if (any) {
    row.push_back(std::move(field));
    lines.push_back(std::move(row));
  }
  TextTable table;
  if (lines.empty()) return table;
  table.header = std::move(lines.front());
  table.rows.assign(std::make_move_iterator(lines.begin() + 1), std::make_move_iterator(lines.end()));
  return table;
}

std::vector<fs::path> emit_tables(const std::vector<ReportRow>& rows, const fs::path& out_dir,
                                  TableFormat format) {
  if (rows.empty()) throw Error("no reports to tabulate");
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (auto kind : kAllTables) {
    const TextTable table = build_table(kind, rows);
    const std::string stem(table_name(kind));
    if (format != TableFormat::Markdown) {
      written.push_back(out_dir / (stem + ".csv"));
      write_text_atomic(written.back(), render_csv(table));
    }
    if (format != TableFormat::Csv) {
      written.push_back(out_dir / (stem + ".md"));
      write_text_atomic(written.back(), render_markdown(table));
    }
  }
  return written;
}

ReportRow report_row(const fs::path& run_dir, MetricsReport report) {
  const json run = json::parse(read_text(RunPaths(run_dir).run_json));
  ReportRow row;
  row.model = run.at("config").at("provider").at("model").get<std::string>();
  std::string dataset;
  for (const auto& name : run.at("dataset").at("datasets")) {
    if (!dataset.empty()) dataset += '+';
    dataset += name.get<std::string>();
  }
  row.dataset = dataset.empty() ? "-" : dataset;
  row.report = std::move(report);
  return row;
}

json build_manifest(const fs::path& run_dir, const std::map<std::string, std::size_t>* record_counts) {
  const RunPaths paths(run_dir);
  const json run = json::parse(read_text(paths.run_json));
  const RunConfig config = RunConfig::from_json(run.at("config"));
  const RunState state = load_run_state(run_dir);

  std::map<std::string, std::size_t> scanned;
  if (!record_counts) {
    std::ifstream in(paths.trajectory, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        ++scanned[json::parse(line).at("phase").get<std::string>()];
      } catch (const std::exception&) {
        break;  // torn tail; the pipeline repairs it on the next open
      }
    }
    record_counts = &scanned;
  }

  json phases = json::array();
  for (const auto& phase : enabled_phases(config)) {
    const std::string name = phase.to_string();
    const auto it = record_counts->find(name);
    const std::size_t records = it == record_counts->end() ? 0 : it->second;
    json entry = {{"phase", name}, {"records", records}};
    if (state.complete(phase)) {
      entry["status"] = "complete";
      if (phase.kind == Phase::Kind::RootCause) {
        json dist = json::object();
        for (const auto& [cause, n] : state.root_cause->distribution())
          dist[std::string(root_cause_name(cause))] = n;
        entry["input"] = state.root_cause->input.size();
        entry["distribution"] = dist;
        entry["unannotated"] = state.root_cause->unannotated.size();
      } else {
        const auto* p = state.find(phase);
        entry["input"] = p->input.size();
        entry["tc"] = p->tc.size();
        entry["fc"] = p->fc.size();
        entry["uc"] = p->uc.size();
        entry["parse_failures"] = p->parse_failures.size();
      }
    } else {
      entry["status"] = records > 0 ? "incomplete" : "pending";
    }
    phases.push_back(entry);
  }

  json conservation = json::object();
  const auto* detect = state.find(Phase::detect());
  const auto* s1 = state.find(Phase::stage1());
  const auto* s2 = state.find(Phase::stage2());
  if (detect && s1) {
    conservation["vp"] = detect->uc.size();
    conservation["stage1_tc_fc_uc"] = s1->tc.size() + s1->fc.size() + s1->uc.size();
    if (s2) {
      conservation["fc1"] = s1->fc.size();
      conservation["stage2_tc_fc_uc"] = s2->tc.size() + s2->fc.size() + s2->uc.size();
    }
    conservation["holds"] = detect->uc == s1->input && (!s2 || s1->fc == s2->input);
  }

  const json& cfg = run.at("config");
  return json{{"tool_version", run.at("tool_version")},
              {"run_id", run.at("run_id")},
              {"config_digest", run.at("config_digest")},
              {"seeds",
               {{"run", cfg.at("seed")},
                {"policy", cfg.at("provider").at("policy").at("seed")},
                {"judge", cfg.at("judge").at("seed")}}},
              {"templates", run.at("templates")},
              {"templates_digest", run.at("templates_digest")},
              {"provider_identity", run.at("provider_identity")},
              {"samples_digest", run.at("samples_digest")},
              {"dataset", run.at("dataset")},
              {"phases", phases},
              {"conservation", conservation},
              {"timestamps", {{"created_at", run.at("created_at")}, {"updated_at", utc_timestamp()}}}};
}

void emit_manifest(const fs::path& run_dir, const std::map<std::string, std::size_t>* record_counts) {
  write_text_atomic(RunPaths(run_dir).manifest, build_manifest(run_dir, record_counts).dump(2) + "\n");
}

}  // namespace wakenllm
