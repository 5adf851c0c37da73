#include "wakenllm/trajectory.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "wakenllm/errors.hpp"

namespace wakenllm {

using nlohmann::json;

namespace {

constexpr std::string_view kParseFailure = "PARSE_FAILURE";

template <class T, class F>
json optional_json(const std::optional<T>& value, F&& convert) {
  return value ? json(convert(*value)) : json(nullptr);
}

std::optional<Label> label_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  auto label = parse_label_name(j.at(key).get<std::string>());
  if (!label) throw Error(std::string("bad label in field '") + key + "'");
  return label;
}

json parsed_to_json(const ParsedCompletion& p) {
  return json{{"label", p.label ? std::string(label_name(*p.label)) : std::string(kParseFailure)},
              {"token", p.matched_token},
              {"reasoning", p.reasoning ? json(*p.reasoning) : json(nullptr)}};
}

ParsedCompletion parsed_from_json(const json& j) {
  ParsedCompletion p;
  const auto label = j.at("label").get<std::string>();
  if (label != kParseFailure) {
    p.label = parse_label_name(label);
    if (!p.label) throw Error("bad parsed label '" + label + "'");
  }
  p.matched_token = j.at("token").get<std::string>();
  if (!j.at("reasoning").is_null()) p.reasoning = j.at("reasoning").get<std::string>();
  return p;
}

}  // namespace

std::string_view request_role_name(RequestRole role) {
  switch (role) {
    case RequestRole::Primary: return "primary";
    case RequestRole::Justify: return "justify";
    case RequestRole::Judge: return "judge";
  }
  return "primary";
}

std::optional<RequestRole> parse_request_role(std::string_view text) {
  for (auto r : {RequestRole::Primary, RequestRole::Justify, RequestRole::Judge})
    if (request_role_name(r) == text) return r;
  return std::nullopt;
}

json TrajectoryRecord::to_json() const {
  auto name = [](Label l) { return std::string(label_name(l)); };
  json cond = {{"answer", optional_json(condition.answer, name)},
               {"assigned_label", optional_json(condition.assigned_label, name)},
               {"misguided", optional_json(condition.misguided, [](bool b) { return b; })},
               {"prior_reasoning_digest",
                optional_json(condition.prior_reasoning_digest, [](const std::string& s) { return s; })}};
  json j = {{"seq", seq},
            {"run_id", run_id},
            {"phase", phase.to_string()},
            {"sample_id", sample_id},
            {"ftype", ftype_name(ftype)},
            {"gold", label_name(gold)},
            {"role", request_role_name(role)},
            {"template", template_name(template_id)},
            {"prompt", prompt},
            {"request_digest", request_digest},
            {"condition", cond},
            {"turn", turn.to_json()},
            {"parsed", parsed ? parsed_to_json(*parsed) : json(nullptr)},
            {"judge", judge ? judge->to_json() : json(nullptr)},
            {"verdict", verdict ? std::string(verdict_name(*verdict)) : std::string("NA")}};
  if (error) j["error"] = *error;
  j["ts"] = ts;
  return j;
}

TrajectoryRecord TrajectoryRecord::from_json(const json& j) {
  TrajectoryRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.run_id = j.at("run_id").get<std::string>();
  auto phase = Phase::parse(j.at("phase").get<std::string>());
  if (!phase) throw Error("unknown phase");
  r.phase = *phase;
  r.sample_id = j.at("sample_id").get<std::string>();
  auto ftype = parse_ftype(j.at("ftype").get<std::string>());
  if (!ftype) throw Error("unknown ftype");
  r.ftype = *ftype;
  r.gold = label_field(j, "gold").value();
  auto role = parse_request_role(j.at("role").get<std::string>());
  if (!role) throw Error("unknown role");
  r.role = *role;
  auto tid = parse_template_name(j.at("template").get<std::string>());
  if (!tid) throw Error("unknown template");
  r.template_id = *tid;
  r.prompt = j.at("prompt").get<std::string>();
  r.request_digest = j.at("request_digest").get<std::string>();
  const auto& cond = j.at("condition");
  r.condition.answer = label_field(cond, "answer");
  r.condition.assigned_label = label_field(cond, "assigned_label");
  if (!cond.at("misguided").is_null()) r.condition.misguided = cond.at("misguided").get<bool>();
  if (!cond.at("prior_reasoning_digest").is_null())
    r.condition.prior_reasoning_digest = cond.at("prior_reasoning_digest").get<std::string>();
  r.turn = ModelTurn::from_json(j.at("turn"));
  if (!j.at("parsed").is_null()) r.parsed = parsed_from_json(j.at("parsed"));
  if (!j.at("judge").is_null()) r.judge = JudgeResult::from_json(j.at("judge"));
  const auto verdict = j.at("verdict").get<std::string>();
  if (verdict != "NA") {
    r.verdict = parse_verdict(verdict);
    if (!r.verdict) throw Error("unknown verdict '" + verdict + "'");
  }
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  r.ts = j.value("ts", std::string{});
  return r;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

TrajectoryWriter::TrajectoryWriter(const std::filesystem::path& path, std::uint64_t next_seq)
    : out_(path, std::ios::binary | std::ios::app), next_seq_(next_seq) {
  if (!out_) throw Error("cannot open trajectory " + path.string());
}

void TrajectoryWriter::append(std::vector<TrajectoryRecord>& batch) {
  std::string text;
  for (auto& record : batch) {
    record.seq = next_seq_++;
    record.ts = utc_timestamp();
    text += record.to_json().dump();
    text += '\n';
  }
  out_ << text;
  out_.flush();
  if (!out_) throw Error("trajectory write failed");
}

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::vector<TrajectoryRecord> records;
  std::ifstream in(path, std::ios::binary);
  if (!in) return records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      records.push_back(TrajectoryRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw TranscriptError(line_number, e.what());
    }
  }
  return records;
}

std::size_t repair_tail(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return 0;
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    content = buf.str();
  }
  if (content.empty() || content.back() == '\n') return 0;
  const auto last_newline = content.rfind('\n');
  const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
  std::filesystem::resize_file(path, keep);
  return content.size() - keep;
}

std::string normalized_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string out, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    j.erase("ts");
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace wakenllm
