#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wakenllm/metrics.hpp"

namespace wakenllm {

struct ReportRow {
  std::string model;
  std::string dataset;
  MetricsReport report;
};

enum class TableKind { Main, Degrading, Cause, Accuracy, RootCause, Ablation };

std::string_view table_name(TableKind kind);  // file stem, e.g. "main"
inline constexpr TableKind kAllTables[] = {TableKind::Main,     TableKind::Degrading,
                                           TableKind::Cause,    TableKind::Accuracy,
                                           TableKind::RootCause, TableKind::Ablation};

/// Column headers after "model" and "dataset".
std::vector<std::string> table_columns(TableKind kind);

/// One rendered cell: a percentage with two decimals, "/" when the quantity
/// had no input, "-" when the run did not compute it.
std::string table_cell(TableKind kind, const std::string& column, const MetricsReport& report);

struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Rows sorted by (model, dataset); ties keep input order.
TextTable build_table(TableKind kind, std::vector<ReportRow> rows);

std::string render_csv(const TextTable& table);
std::string render_markdown(const TextTable& table);
/// Inverse of render_csv (quoted fields allowed).
TextTable parse_csv(std::string_view text);

enum class TableFormat { Csv, Markdown, Both };

/// Writes one file per table kind and format into out_dir; returns the paths.
std::vector<std::filesystem::path> emit_tables(const std::vector<ReportRow>& rows,
                                               const std::filesystem::path& out_dir,
                                               TableFormat format = TableFormat::Both);

/// Model and dataset tags of a run directory, for table rows.
ReportRow report_row(const std::filesystem::path& run_dir, MetricsReport report);

/// Manifest document for a run directory. Timestamps live under "timestamps"
/// so the rest is byte-stable across reruns.
nlohmann::json build_manifest(const std::filesystem::path& run_dir,
                              const std::map<std::string, std::size_t>* record_counts = nullptr);
/// Writes manifest.json. When record_counts is null the trajectory is scanned.
void emit_manifest(const std::filesystem::path& run_dir,
                   const std::map<std::string, std::size_t>* record_counts = nullptr);

}  // namespace wakenllm
