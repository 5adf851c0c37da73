#include "wakenllm/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "wakenllm/digest.hpp"
#include "wakenllm/errors.hpp"

namespace wakenllm {

using nlohmann::json;

namespace {

constexpr std::string_view kUnknownizedMarker = "~unk";

const std::set<std::string, std::less<>> kRecordFields = {
    "id", "dataset", "subcategory", "form", "context", "hypothesis",
    "choices", "gold", "origin", "removed_sentences"};

void check_invariants(const Sample& s, std::size_t line) {
  if (s.id.empty()) throw SchemaError(line, "id", "must be non-empty");
  if (s.context.empty()) throw SchemaError(line, "context", "must be non-empty");
  if (s.hypothesis.empty()) throw SchemaError(line, "hypothesis", "must be non-empty");
  if (s.origin == Origin::Unknownized) {
    if (s.gold != Label::Unknown)
      throw SchemaError(line, "gold", "unknownized samples must be labeled UNKNOWN");
    if (!s.removed_sentences || s.removed_sentences->empty())
      throw SchemaError(line, "removed_sentences", "required for unknownized samples");
  } else if (s.removed_sentences) {
    throw SchemaError(line, "removed_sentences", "only allowed for unknownized samples");
  }
}

std::string require_string(const json& record, std::string_view field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) throw SchemaError(line, std::string(field), "missing");
  if (!it->is_string()) throw SchemaError(line, std::string(field), "must be a string");
  return it->get<std::string>();
}

std::optional<std::vector<std::string>> optional_strings(const json& record, std::string_view field,
                                                         std::size_t line) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw SchemaError(line, std::string(field), "must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : *it) {
    if (!item.is_string()) throw SchemaError(line, std::string(field), "must be an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Seeded selection of `count` distinct indices out of `n`, returned ascending.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + uniform_below(rng, n - i);
    std::swap(order[i], order[j]);
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> parse_model_selection(const std::string& completion, std::size_t sentences,
                                               std::size_t count) {
  auto pos = completion.rfind("DELETE:");
  if (pos == std::string::npos)
    throw Error("sentence selection reply has no 'DELETE:' line");
  std::vector<std::size_t> picks;
  std::size_t value = 0;
  bool in_number = false;
  for (std::size_t i = pos + 7; i <= completion.size(); ++i) {
    const char c = i < completion.size() ? completion[i] : '\n';
    if (std::isdigit(static_cast<unsigned char>(c))) {
      value = value * 10 + static_cast<std::size_t>(c - '0');
      in_number = true;
    } else {
      if (in_number) picks.push_back(value);
      value = 0;
      in_number = false;
      if (c == '\n') break;
    }
  }
  std::set<std::size_t> distinct;
  for (auto one_based : picks) {
    if (one_based == 0 || one_based > sentences)
      throw Error("sentence selection out of range: " + std::to_string(one_based));
    distinct.insert(one_based - 1);
  }
  if (distinct.size() != count)
    throw Error("sentence selection must name exactly " + std::to_string(count) +
                " distinct sentences");
  return {distinct.begin(), distinct.end()};
}

std::string selection_prompt(const std::vector<std::string>& pieces, const Sample& sample,
                             std::size_t count) {
  std::ostringstream out;
  out << "Hypothesis: " << sample.hypothesis << "\n\nFacts:\n";
  for (std::size_t i = 0; i < pieces.size(); ++i) out << (i + 1) << ". " << pieces[i] << "\n";
  out << "\nChoose exactly " << count
      << " facts whose removal leaves the hypothesis impossible to prove or disprove.\n"
      << "Answer with one line of the form: DELETE: <number>, <number>\n";
  return out.str();
}

}  // namespace

json DatasetManifest::to_json() const {
  json counts = json::object();
  for (const auto& [ftype, subs] : by_subcategory) {
    json inner = json::object();
    for (const auto& [sub, n] : subs) inner[sub] = n;
    counts[std::string(ftype_name(ftype))] = inner;
  }
  return json{{"datasets", datasets},
              {"total", total},
              {"verifiable", verifiable},
              {"unverifiable", unverifiable},
              {"unknownized", unknownized},
              {"counts", counts},
              {"source_digest", source_digest}};
}

SampleSet::SampleSet(std::vector<Sample> samples, std::string source_digest)
    : samples_(std::move(samples)) {
  std::set<std::string> datasets;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    check_invariants(s, i + 1);
    if (!index_.emplace(s.id, i).second) throw DuplicateId(s.id);
    datasets.insert(s.dataset);
    const FType f = ftype_of(s);
    (f == FType::Verifiable ? manifest_.verifiable : manifest_.unverifiable)++;
    if (s.origin == Origin::Unknownized) ++manifest_.unknownized;
    ++manifest_.by_subcategory[f][s.subcategory];
  }
  manifest_.datasets.assign(datasets.begin(), datasets.end());
  manifest_.total = samples_.size();
  manifest_.source_digest = std::move(source_digest);
}

const Sample* SampleSet::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &samples_[it->second];
}

bool SampleSet::balanced() const {
  const auto v = manifest_.verifiable;
  const auto u = manifest_.unverifiable;
  return (v > u ? v - u : u - v) <= 1;
}

Sample parse_sample_record(std::string_view line, std::size_t line_number) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(line_number, "<record>", e.what());
  }
  if (!record.is_object()) throw SchemaError(line_number, "<record>", "must be an object");
  for (const auto& [key, value] : record.items()) {
    if (!kRecordFields.contains(key)) throw SchemaError(line_number, key, "unknown field");
  }
  Sample s;
  s.id = require_string(record, "id", line_number);
  s.dataset = require_string(record, "dataset", line_number);
  s.subcategory = require_string(record, "subcategory", line_number);
  auto form = parse_form(require_string(record, "form", line_number));
  if (!form) throw SchemaError(line_number, "form", "must be \"fact\" or \"story\"");
  s.form = *form;
  s.context = require_string(record, "context", line_number);
  s.hypothesis = require_string(record, "hypothesis", line_number);
  s.choices = optional_strings(record, "choices", line_number);
  auto gold = parse_label_name(require_string(record, "gold", line_number));
  if (!gold) throw SchemaError(line_number, "gold", "must be PROVED, DISPROVED or UNKNOWN");
  s.gold = *gold;
  auto origin = parse_origin(require_string(record, "origin", line_number));
  if (!origin) throw SchemaError(line_number, "origin", "must be \"native\" or \"unknownized\"");
  s.origin = *origin;
  s.removed_sentences = optional_strings(record, "removed_sentences", line_number);
  check_invariants(s, line_number);
  return s;
}

std::string sample_to_record(const Sample& s) {
  json record = {{"id", s.id},
                 {"dataset", s.dataset},
                 {"subcategory", s.subcategory},
                 {"form", form_name(s.form)},
                 {"context", s.context},
                 {"hypothesis", s.hypothesis},
                 {"gold", label_name(s.gold)},
                 {"origin", origin_name(s.origin)}};
  if (s.choices) record["choices"] = *s.choices;
  if (s.removed_sentences) record["removed_sentences"] = *s.removed_sentences;
  return record.dump();
}

SampleSet parse_samples(std::string_view content) {
  std::vector<Sample> samples;
  std::set<std::string, std::less<>> seen;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    ++line_number;
    auto line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = end + 1;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    Sample s = parse_sample_record(line, line_number);
    if (!seen.insert(s.id).second) throw DuplicateId(s.id);
    samples.push_back(std::move(s));
  }
  return SampleSet(std::move(samples), sha256_hex(content));
}

SampleSet load_samples(const std::filesystem::path& path) {
  return parse_samples(read_file(path));
}

void save_samples(const std::filesystem::path& path, const SampleSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : set.samples()) out << sample_to_record(s) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<std::string> split_sentences(std::string_view context, SampleForm form) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::vector<std::string> pieces;
  std::size_t start = 0;
  std::size_t i = 0;
  const std::size_t n = context.size();
  while (i < n) {
    const char c = context[i];
    bool boundary = false;
    if (c == '.' || c == '!' || c == '?') boundary = i + 1 == n || is_space(context[i + 1]);
    if (form == SampleForm::FactBased && c == '\n') boundary = true;
    ++i;
    if (!boundary) continue;
    while (i < n && is_space(context[i])) ++i;
    auto piece = context.substr(start, i - start);
    // Leading blank lines stay attached to the first real sentence.
    if (piece.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos) continue;
    pieces.emplace_back(piece);
    start = i;
  }
  if (start < n) {
    auto tail = context.substr(start);
    if (tail.find_first_not_of(" \t\r\n") != std::string_view::npos || pieces.empty()) {
      pieces.emplace_back(tail);
    } else {
      pieces.back().append(tail);
    }
  }
  return pieces;
}

DeletionStrategy DeletionStrategy::random_sentences(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("deletion count must be at least 1");
  return DeletionStrategy(RandomSentences{count, seed});
}

DeletionStrategy DeletionStrategy::model_selected(ModelSelected selector) {
  if (selector.count == 0) throw ConfigError("deletion count must be at least 1");
  if (!selector.complete) throw ConfigError("model-selected deletion needs a provider");
  return DeletionStrategy(std::move(selector));
}

std::size_t DeletionStrategy::count() const {
  return std::visit([](const auto& k) { return k.count; }, kind_);
}

Sample unknownize(const Sample& sample, const DeletionStrategy& strategy) {
  if (sample.origin != Origin::Native)
    throw Error("sample '" + sample.id + "' is already unknownized");
  const auto pieces = split_sentences(sample.context, sample.form);
  const std::size_t count = strategy.count();
  if (pieces.size() <= count) throw TooFewSentences(sample.id, pieces.size(), count);

  std::vector<std::size_t> removed;
  if (const auto* random = std::get_if<RandomSentences>(&strategy.kind())) {
    removed = sample_indices(pieces.size(), count, derive_seed(random->seed, {sample.id}));
  } else {
    const auto& selector = std::get<ModelSelected>(strategy.kind());
    removed = parse_model_selection(selector.complete(selection_prompt(pieces, sample, count)),
                                    pieces.size(), count);
  }

  Sample out = sample;
  out.context.clear();
  out.removed_sentences.emplace();
  out.id += kUnknownizedMarker;
  std::size_t next = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (next < removed.size() && removed[next] == i) {
      out.removed_sentences->push_back(pieces[i]);
      out.id += "-" + std::to_string(i);
      ++next;
    } else {
      out.context += pieces[i];
    }
  }
  out.gold = Label::Unknown;
  out.origin = Origin::Unknownized;
  return out;
}

std::vector<std::size_t> removed_positions(const Sample& sample) {
  const auto marker = sample.id.rfind(kUnknownizedMarker);
  if (sample.origin != Origin::Unknownized || marker == std::string::npos)
    throw Error("sample '" + sample.id + "' carries no deletion record");
  std::vector<std::size_t> positions;
  std::string_view rest = std::string_view(sample.id).substr(marker + kUnknownizedMarker.size());
  while (!rest.empty()) {
    if (rest.front() != '-') throw Error("malformed deletion suffix in '" + sample.id + "'");
    rest.remove_prefix(1);
    std::size_t value = 0;
    std::size_t digits = 0;
    while (digits < rest.size() && std::isdigit(static_cast<unsigned char>(rest[digits]))) {
      value = value * 10 + static_cast<std::size_t>(rest[digits] - '0');
      ++digits;
    }
    if (digits == 0) throw Error("malformed deletion suffix in '" + sample.id + "'");
    positions.push_back(value);
    rest.remove_prefix(digits);
  }
  if (!sample.removed_sentences || positions.size() != sample.removed_sentences->size())
    throw Error("deletion suffix of '" + sample.id + "' does not match removed_sentences");
  return positions;
}

std::string restore_context(const Sample& sample) {
  const auto positions = removed_positions(sample);
  const auto kept = split_sentences(sample.context, sample.form);
  const std::size_t total = kept.size() + positions.size();
  std::string out;
  std::size_t k = 0;
  std::size_t r = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (r < positions.size() && positions[r] == i) {
      out += (*sample.removed_sentences)[r++];
    } else if (k < kept.size()) {
      out += kept[k++];
    }
  }
  // A kept tail that re-segments differently still belongs at the end.
  while (k < kept.size()) out += kept[k++];
  return out;
}

SampleSet unknownize_half(const SampleSet& set, const DeletionStrategy& strategy,
                          std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set.samples()[i];
    if (s.origin == Origin::Native && ftype_of(s) == FType::Verifiable) candidates.push_back(i);
  }
  const auto picks = sample_indices(candidates.size(), candidates.size() / 2, seed);
  std::set<std::size_t> chosen;
  for (auto p : picks) chosen.insert(candidates[p]);
  std::vector<Sample> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set.samples()[i];
    out.push_back(chosen.contains(i) ? unknownize(s, strategy) : s);
  }
  return SampleSet(std::move(out), set.manifest().source_digest);
}

SampleSet build_balanced_split(const SampleSet& pool, std::size_t target_size,
                               std::uint64_t seed) {
  std::vector<const Sample*> verifiable;
  std::vector<const Sample*> unverifiable;
  for (const auto& s : pool.samples())
    (ftype_of(s) == FType::Verifiable ? verifiable : unverifiable).push_back(&s);
  const std::size_t need_v = target_size / 2;
  const std::size_t need_u = target_size - need_v;
  if (verifiable.size() < need_v) throw InsufficientPool("v", verifiable.size(), need_v);
  if (unverifiable.size() < need_u) throw InsufficientPool("u", unverifiable.size(), need_u);

  auto by_id = [](const Sample* a, const Sample* b) { return a->id < b->id; };
  std::sort(verifiable.begin(), verifiable.end(), by_id);
  std::sort(unverifiable.begin(), unverifiable.end(), by_id);

  std::vector<Sample> out;
  out.reserve(target_size);
  for (auto i : sample_indices(verifiable.size(), need_v, derive_seed(seed, {"balanced", "v"})))
    out.push_back(*verifiable[i]);
  for (auto i : sample_indices(unverifiable.size(), need_u, derive_seed(seed, {"balanced", "u"})))
    out.push_back(*unverifiable[i]);
  std::sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  return SampleSet(std::move(out), pool.manifest().source_digest);
}

Rational DatasetStats::form_fraction(SampleForm form) const {
  auto it = by_form.find(form);
  return ratio_or_zero(it == by_form.end() ? 0 : static_cast<std::int64_t>(it->second),
                       static_cast<std::int64_t>(total));
}

json DatasetStats::to_json() const {
  json forms = json::object();
  for (const auto& [form, n] : by_form) forms[std::string(form_name(form))] = n;
  json ftypes = json::object();
  for (const auto& [f, n] : by_ftype) ftypes[std::string(ftype_name(f))] = n;
  return json{{"total", total},
              {"by_dataset", by_dataset},
              {"by_form", forms},
              {"by_ftype", ftypes},
              {"by_subcategory", by_subcategory}};
}

DatasetStats dataset_stats(const SampleSet& set) {
  DatasetStats stats;
  for (const auto& s : set.samples()) {
    ++stats.total;
    ++stats.by_dataset[s.dataset];
    ++stats.by_form[s.form];
    ++stats.by_ftype[ftype_of(s)];
    ++stats.by_subcategory[s.subcategory];
  }
  return stats;
}

}  // namespace wakenllm
