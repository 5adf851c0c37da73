#include "wakenllm/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "wakenllm/digest.hpp"
#include "wakenllm/errors.hpp"
#include "wakenllm/report.hpp"

namespace wakenllm {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Partitions and run state

void StagePartition::check() const {
  std::vector<std::string> bad;
  std::size_t covered = 0;
  for (const auto& id : input) {
    const int hits = int(tc.contains(id)) + int(fc.contains(id)) + int(uc.contains(id));
    if (hits != 1) bad.push_back(id);
    covered += hits;
  }
  if (!bad.empty() || covered != tc.size() + fc.size() + uc.size()) {
    std::string msg = "phase " + phase + ": TC/FC/UC do not partition the input";
    if (!bad.empty()) msg += " (first offending id '" + bad.front() + "')";
    throw PartitionViolation(msg);
  }
  for (const auto& id : parse_failures)
    if (!input.contains(id)) throw PartitionViolation("phase " + phase + ": parse failure outside input");
}

const IdSet& StagePartition::of(Verdict verdict) const {
  switch (verdict) {
    case Verdict::TrueConverting: return tc;
    case Verdict::FalseConverting: return fc;
    case Verdict::UnexcitedConverting: return uc;
  }
  return uc;
}

json StagePartition::to_json() const {
  json j = {{"phase", phase},        {"input", input}, {"tc", tc},
            {"fc", fc},              {"uc", uc},       {"parse_failures", parse_failures}};
  if (!assigned_labels.empty()) {
    json assigned = json::object();
    for (const auto& [id, label] : assigned_labels) assigned[id] = label_name(label);
    j["assigned_labels"] = assigned;
  }
  return j;
}

StagePartition StagePartition::from_json(const json& j) {
  StagePartition p;
  p.phase = j.at("phase").get<std::string>();
  p.input = j.at("input").get<IdSet>();
  p.tc = j.at("tc").get<IdSet>();
  p.fc = j.at("fc").get<IdSet>();
  p.uc = j.at("uc").get<IdSet>();
  p.parse_failures = j.at("parse_failures").get<IdSet>();
  if (j.contains("assigned_labels")) {
    for (const auto& [id, name] : j.at("assigned_labels").items()) {
      auto label = parse_label_name(name.get<std::string>());
      if (!label) throw Error("bad assigned label for '" + id + "'");
      p.assigned_labels[id] = *label;
    }
  }
  return p;
}

std::map<RootCause, std::size_t> RootCauseSummary::distribution() const {
  std::map<RootCause, std::size_t> out;
  for (auto c : {RootCause::FactUnderstanding, RootCause::ReasoningGap, RootCause::ExcessiveCaution,
                 RootCause::Else})
    out[c] = 0;
  for (const auto& [id, cause] : causes) ++out[cause];
  return out;
}

json RootCauseSummary::to_json() const {
  json c = json::object();
  for (const auto& [id, cause] : causes) c[id] = root_cause_name(cause);
  json dist = json::object();
  for (const auto& [cause, n] : distribution()) dist[std::string(root_cause_name(cause))] = n;
  return json{{"phase", "root-cause"},
              {"input", input},
              {"causes", c},
              {"unannotated", unannotated},
              {"distribution", dist}};
}

RootCauseSummary RootCauseSummary::from_json(const json& j) {
  RootCauseSummary s;
  s.input = j.at("input").get<IdSet>();
  s.unannotated = j.at("unannotated").get<IdSet>();
  for (const auto& [id, name] : j.at("causes").items()) {
    auto cause = parse_root_cause(name.get<std::string>());
    if (!cause) throw Error("bad root cause for '" + id + "'");
    s.causes[id] = *cause;
  }
  return s;
}

const StagePartition* RunState::find(const Phase& phase) const {
  auto it = partitions.find(phase.to_string());
  return it == partitions.end() ? nullptr : &it->second;
}

bool RunState::complete(const Phase& phase) const {
  if (phase.kind == Phase::Kind::RootCause) return root_cause.has_value();
  return partitions.contains(phase.to_string());
}

RunPaths::RunPaths(fs::path d)
    : dir(std::move(d)),
      run_json(dir / "run.json"),
      manifest(dir / "manifest.json"),
      samples(dir / "samples.jsonl"),
      trajectory(dir / "trajectory.jsonl"),
      transcript(dir / "transcript.jsonl"),
      partitions(dir / "partitions"),
      lock(dir / "lock"),
      metrics(dir / "metrics.json"),
      tables(dir / "tables") {}

fs::path RunPaths::partition(const Phase& phase) const {
  return partitions / (phase.to_string() + ".json");
}

RunState load_run_state(const fs::path& run_dir) {
  RunState state;
  const RunPaths paths(run_dir);
  if (!fs::exists(paths.partitions)) return state;
  for (const auto& entry : fs::directory_iterator(paths.partitions)) {
    if (entry.path().extension() != ".json") continue;
    const json j = json::parse(read_text(entry.path()));
    if (j.at("phase").get<std::string>() == "root-cause") {
      state.root_cause = RootCauseSummary::from_json(j);
    } else {
      auto p = StagePartition::from_json(j);
      p.check();
      state.partitions.emplace(p.phase, std::move(p));
    }
  }
  return state;
}

std::vector<Phase> enabled_phases(const RunConfig& config) {
  std::vector<Phase> phases = {Phase::detect(), Phase::stage1(), Phase::stage2()};
  if (config.rtg_label)
    for (int s : config.rtg_stages)
      for (const auto& m : config.misguide_grid) phases.push_back(Phase::rtg_label(s, m));
  if (config.rtg_rp)
    for (int s : config.rtg_stages) phases.push_back(Phase::rtg_rp(s));
  if (config.ablation) phases.push_back(Phase::ablation());
  if (config.annotate) phases.push_back(Phase::root_cause());
  return phases;
}

std::vector<PhasePlan> plan_calls(const RunConfig& config, const SampleSet& samples,
                                  const RunState& state) {
  const bool model_judge = config.judge.kind == JudgeSettings::Kind::Model;
  const std::size_t extra = model_judge ? 2 : 1;  // justify turn plus any judge call
  std::size_t total_u = 0;
  std::map<std::string, FType, std::less<>> ftypes;
  for (const auto& s : samples.samples()) {
    ftypes.emplace(s.id, ftype_of(s));
    if (ftype_of(s) == FType::Unverifiable) ++total_u;
  }
  // Without a committed input set, every sample is a possible input.
  auto cost = [&](const IdSet* input) {
    if (!input) return samples.size() + total_u * extra;
    std::size_t n = input->size();
    for (const auto& id : *input)
      if (auto it = ftypes.find(id); it != ftypes.end() && it->second == FType::Unverifiable) n += extra;
    return n;
  };
  const StagePartition* detect = state.find(Phase::detect());
  const StagePartition* stage1 = state.find(Phase::stage1());
  const IdSet* vp = detect ? &detect->uc : nullptr;
  const IdSet* fc1 = stage1 ? &stage1->fc : nullptr;
  const IdSet* uc1 = stage1 ? &stage1->uc : nullptr;

  std::vector<PhasePlan> plans;
  for (const auto& phase : enabled_phases(config)) {
    PhasePlan plan{phase.to_string(), 0, state.complete(phase)};
    if (!plan.complete) {
      switch (phase.kind) {
        case Phase::Kind::Detect: plan.calls = cost(nullptr); break;
        case Phase::Kind::Stage1: plan.calls = cost(vp); break;
        case Phase::Kind::Stage2: plan.calls = cost(fc1); break;
        case Phase::Kind::RtgLabel:
        case Phase::Kind::RtgRp: plan.calls = cost(phase.stage == 1 ? vp : fc1); break;
        case Phase::Kind::AblationRepeat: plan.calls = cost(uc1); break;
        case Phase::Kind::RootCause:
          if (model_judge)
            plan.calls = detect ? detect->fc.size() + detect->uc.size() : samples.size();
          break;
      }
    }
    plans.push_back(plan);
  }
  return plans;
}

StoredRun load_stored_run(const fs::path& run_dir) {
  const RunPaths paths(run_dir);
  if (!fs::exists(paths.run_json)) throw Error(run_dir.string() + " is not a run directory (no run.json)");
  const json j = json::parse(read_text(paths.run_json));
  return StoredRun{RunConfig::from_json(j.at("config")), load_samples(paths.samples)};
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

std::string samples_digest(const SampleSet& samples) {
  std::string text;
  for (const auto& s : samples.samples()) {
    text += sample_to_record(s);
    text += '\n';
  }
  return sha256_hex(text);
}

/// Exclusive run-directory lock. A lock left by a dead process is taken over.
class RunLock {
 public:
  explicit RunLock(const fs::path& path) : path_(path) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      if (errno != EEXIST) throw Error("cannot create lock " + path.string());
      long holder = 0;
      try {
        holder = std::stol(read_text(path));
      } catch (const std::exception&) {
        holder = 0;
      }
      const bool alive = holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM);
      if (alive) throw RunLocked("run directory is locked by process " + std::to_string(holder));
      fs::remove(path);
    }
    throw RunLocked("could not take run lock " + path.string());
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

struct PrimaryOutcome {
  Label predicted = Label::Unknown;
  bool parse_failure = false;
  Verdict verdict = Verdict::UnexcitedConverting;
  std::optional<std::string> reasoning;
  std::optional<Label> assigned_label;
};

PrimaryOutcome outcome_of(const TrajectoryRecord& r) {
  PrimaryOutcome o;
  o.predicted = r.parsed ? r.parsed->effective_label() : Label::Unknown;
  o.parse_failure = !r.parsed || r.parsed->parse_failure();
  o.verdict = r.verdict.value_or(Verdict::UnexcitedConverting);
  if (r.parsed) o.reasoning = r.parsed->reasoning;
  o.assigned_label = r.condition.assigned_label;
  return o;
}

/// Prompt and recorded condition for one primary turn.
struct Prepared {
  TemplateId template_id = TemplateId::DirectPredict;
  std::string text;
  RecordCondition condition;
};

struct SampleResult {
  std::vector<TrajectoryRecord> records;  // justify, judge, primary
  PrimaryOutcome outcome;
};

struct JudgeResultItem {
  std::vector<TrajectoryRecord> records;
};

/// Runs work(i) for i in [0, n) on up to `workers` threads and hands results
/// to commit(i, result) strictly in index order. After a failure nothing past
/// the failing index is committed; the first exception is rethrown.
template <class R, class Work, class Commit>
void execute_ordered(std::size_t n, std::size_t workers, Work&& work, Commit&& commit) {
  if (n == 0) return;
  std::vector<std::optional<R>> slots(n);
  std::mutex mutex;
  std::size_t next_commit = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;

  auto run = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        R result = work(i);
        std::lock_guard lock(mutex);
        slots[i] = std::move(result);
        while (next_commit < n && slots[next_commit]) {
          commit(next_commit, *slots[next_commit]);
          slots[next_commit].reset();
          ++next_commit;
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!error) error = std::current_exception();
        stop = true;
        return;
      }
    }
  };

  workers = std::clamp<std::size_t>(workers, 1, n);
  if (workers == 1) {
    run();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(run);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

struct Pipeline::Impl {
  RunConfig config;
  SampleSet samples;
  RunPaths paths;
  PipelineOptions options;
  std::unique_ptr<RunLock> lock;
  TemplateSet templates;
  std::shared_ptr<Backend> backend;
  std::unique_ptr<Judge> judge;
  std::unique_ptr<ProviderGateway> gateway;
  std::unique_ptr<TrajectoryWriter> writer;
  RunState state;
  std::map<std::string, std::map<std::string, PrimaryOutcome>> outcomes;  // phase -> id -> outcome
  std::map<std::string, TrajectoryRecord> root_cause_records;            // id -> record
  std::map<std::string, std::size_t> record_counts;                      // phase -> records

  Impl(RunConfig c, SampleSet s, fs::path dir, PipelineOptions o)
      : config(std::move(c)), samples(std::move(s)), paths(std::move(dir)), options(std::move(o)) {}

  void open();
  void persist_partition(const StagePartition& partition);
  void finish_phase();

  TrajectoryRecord base_record(const Phase& phase, const Sample& sample, RequestRole role,
                               TemplateId template_id, std::string prompt, std::string digest,
                               const RecordCondition& condition) const;
  SampleResult evaluate(const Phase& phase, const Sample& sample, const Prepared& prepared,
                        bool bypass_cache);
  StagePartition run_verdict_phase(const Phase& phase, const IdSet& input,
                                   const std::function<Prepared(const Sample&)>& prepare,
                                   bool bypass_cache);

  Prepared stimulation_prompt(const Sample& sample, Label previous) const;
  const Sample& sample(const std::string& id) const {
    const Sample* s = samples.find(id);
    if (!s) throw Error("unknown sample id '" + id + "'");
    return *s;
  }
  const PrimaryOutcome& outcome(const Phase& phase, const std::string& id) const {
    const auto& per_phase = outcomes.at(phase.to_string());
    auto it = per_phase.find(id);
    if (it == per_phase.end())
      throw PartitionViolation("no " + phase.to_string() + " record for '" + id + "'");
    return it->second;
  }
  TurnSource turn_source(std::string phase_name, bool bypass_cache) {
    return [this, phase_name = std::move(phase_name), bypass_cache](const CompletionRequest& request,
                                                                    const RequestContext& context) {
      RequestContext ctx = context;
      ctx.phase = phase_name;
      ctx.bypass_cache = bypass_cache;
      return std::pair<ModelTurn, bool>{gateway->complete(request, ctx), true};
    };
  }
};

void Pipeline::Impl::open() {
  fs::create_directories(paths.dir);
  lock = std::make_unique<RunLock>(paths.lock);
  templates = config.templates_dir ? TemplateSet::load_dir(*config.templates_dir) : TemplateSet::defaults();
  backend = options.backend ? options.backend : make_backend(config.provider);

  const std::string sample_digest = samples_digest(samples);
  if (fs::exists(paths.run_json)) {
    const json stored = json::parse(read_text(paths.run_json));
    if (stored.at("config_digest").get<std::string>() != config.digest())
      throw ManifestMismatch("config differs from the one this run directory was created with");
    if (stored.at("samples_digest").get<std::string>() != sample_digest)
      throw ManifestMismatch("sample set differs from the one this run directory was created with");
    if (stored.at("templates_digest").get<std::string>() != templates.digest())
      throw ManifestMismatch("prompt templates differ from the ones this run directory was created with");
  } else {
    fs::create_directories(paths.partitions);
    save_samples(paths.samples, samples);
    const json run = {{"tool_version", WAKENLLM_VERSION},
                      {"run_id", config.run_id},
                      {"config", config.to_json()},
                      {"config_digest", config.digest()},
                      {"samples_digest", sample_digest},
                      {"dataset", samples.manifest().to_json()},
                      {"templates", templates.digests()},
                      {"templates_digest", templates.digest()},
                      {"provider_identity", backend->identity()},
                      {"created_at", utc_timestamp()}};
    write_text_atomic(paths.run_json, run.dump(2) + "\n");
  }
  fs::create_directories(paths.partitions);

  repair_tail(paths.trajectory);
  std::uint64_t next_seq = 1;
  for (auto& record : read_trajectory(paths.trajectory)) {
    next_seq = std::max(next_seq, record.seq + 1);
    const std::string phase_name = record.phase.to_string();
    ++record_counts[phase_name];
    if (record.phase.kind == Phase::Kind::RootCause) {
      if (!root_cause_records.emplace(record.sample_id, record).second)
        throw PartitionViolation("duplicate root-cause record for '" + record.sample_id + "'");
    } else if (record.role == RequestRole::Primary) {
      if (!outcomes[phase_name].emplace(record.sample_id, outcome_of(record)).second)
        throw PartitionViolation("duplicate " + phase_name + " record for '" + record.sample_id + "'");
    }
  }
  state = load_run_state(paths.dir);

  if (!options.resume) {
    for (const auto& [phase_name, per_phase] : outcomes)
      if (!state.partitions.contains(phase_name))
        throw Error("phase " + phase_name + " was interrupted; continue it with --resume");
    if (!root_cause_records.empty() && !state.root_cause)
      throw Error("phase root-cause was interrupted; continue it with --resume");
  }

  GatewayOptions gw;
  gw.call_budget = config.call_budget;
  gw.concurrency_limit = config.concurrency_limit;
  gw.max_requests_per_second = config.provider.max_requests_per_second;
  gw.transcript_path = paths.transcript;
  gateway = std::make_unique<ProviderGateway>(backend, gw);
  judge = make_judge(config.judge, config.provider, templates);
  writer = std::make_unique<TrajectoryWriter>(paths.trajectory, next_seq);
  finish_phase();
}

void Pipeline::Impl::persist_partition(const StagePartition& partition) {
  partition.check();
  const auto phase = Phase::parse(partition.phase);
  write_text_atomic(paths.partition(*phase), partition.to_json().dump(2) + "\n");
  state.partitions[partition.phase] = partition;
}

void Pipeline::Impl::finish_phase() { emit_manifest(paths.dir, &record_counts); }

TrajectoryRecord Pipeline::Impl::base_record(const Phase& phase, const Sample& s, RequestRole role,
                                             TemplateId template_id, std::string prompt,
                                             std::string digest, const RecordCondition& condition) const {
  TrajectoryRecord r;
  r.run_id = config.run_id;
  r.phase = phase;
  r.sample_id = s.id;
  r.ftype = ftype_of(s);
  r.gold = s.gold;
  r.role = role;
  r.template_id = template_id;
  r.prompt = std::move(prompt);
  r.request_digest = std::move(digest);
  r.condition = condition;
  return r;
}

SampleResult Pipeline::Impl::evaluate(const Phase& phase, const Sample& s, const Prepared& prepared,
                                      bool bypass_cache) {
  const std::string phase_name = phase.to_string();
  const std::string tag = phase_name + "/" + s.id;
  const RequestSettings settings = config.provider.request_settings();
  auto make_request = [&](const std::string& text, const std::string& request_tag) {
    return CompletionRequest{settings.model, {{Role::User, text}}, settings.temperature,
                             settings.max_tokens, request_tag};
  };

  const CompletionRequest request = make_request(prepared.text, tag);
  RequestContext context;
  context.phase = phase_name;
  context.sample_id = s.id;
  context.gold = s.gold;
  context.template_id = prepared.template_id;
  context.assigned_label = prepared.condition.assigned_label;
  context.role = RequestRole::Primary;
  context.bypass_cache = bypass_cache;
  ModelTurn turn = gateway->complete(request, context);
  const ParsedCompletion parsed =
      parse_completion(turn.raw_completion, prepared.template_id == TemplateId::RpElicit);
  const Label predicted = parsed.effective_label();

  SampleResult result;
  std::optional<JudgeResult> judged;
  if (ftype_of(s) == FType::Unverifiable && predicted == Label::Unknown) {
    Condition slots;
    slots.slots["answer"] = std::string(label_token(predicted));
    const auto justify_prompt = render(templates, TemplateId::JustifyUnknown, s, slots);
    const CompletionRequest justify_request = make_request(justify_prompt.text, tag + "/justify");
    RequestContext justify_context = context;
    justify_context.template_id = TemplateId::JustifyUnknown;
    justify_context.role = RequestRole::Justify;
    justify_context.parent = &request;
    ModelTurn justify_turn = gateway->complete(justify_request, justify_context);

    auto justify_record = base_record(phase, s, RequestRole::Justify, TemplateId::JustifyUnknown,
                                      justify_prompt.text, request_digest(justify_request),
                                      prepared.condition);
    justify_record.parsed = parse_completion(justify_turn.raw_completion, true);
    justify_record.turn = justify_turn;
    result.records.push_back(std::move(justify_record));

    auto judgement = judge->judge_justification(s, justify_turn.raw_completion, tag + "/judge",
                                                turn_source(phase_name, bypass_cache));
    if (judgement.turn) {
      const std::string prompt = judgement.prompt.value_or("");
      auto judge_record = base_record(phase, s, RequestRole::Judge, TemplateId::JustificationJudge,
                                      prompt, request_digest(make_request(prompt, tag + "/judge")),
                                      prepared.condition);
      judge_record.turn = *judgement.turn;
      judge_record.judge = judgement.result;
      result.records.push_back(std::move(judge_record));
    }
    judged = judgement.result;
  }

  const Verdict verdict = classify_verdict(
      s, predicted, judged ? std::optional<bool>(judged->justification_valid) : std::nullopt);
  auto primary = base_record(phase, s, RequestRole::Primary, prepared.template_id, prepared.text,
                             request_digest(request), prepared.condition);
  primary.turn = std::move(turn);
  primary.parsed = parsed;
  primary.judge = judged;
  primary.verdict = verdict;
  result.records.push_back(std::move(primary));

  result.outcome = {predicted, parsed.parse_failure(), verdict, parsed.reasoning,
                    prepared.condition.assigned_label};
  return result;
}

StagePartition Pipeline::Impl::run_verdict_phase(const Phase& phase, const IdSet& input,
                                                 const std::function<Prepared(const Sample&)>& prepare,
                                                 bool bypass_cache) {
  const std::string phase_name = phase.to_string();
  if (const auto* done = state.find(phase)) return *done;

  auto& existing = outcomes[phase_name];
  std::vector<std::string> todo;
  for (const auto& id : input)
    if (!existing.contains(id)) todo.push_back(id);

  std::map<std::string, PrimaryOutcome> committed;
  auto merge = [&] {
    for (auto& [id, o] : committed) existing.emplace(id, std::move(o));
    committed.clear();
  };
  try {
    execute_ordered<SampleResult>(
        todo.size(), config.concurrency_limit,
        [&](std::size_t i) {
          const Sample& s = sample(todo[i]);
          return evaluate(phase, s, prepare(s), bypass_cache);
        },
        [&](std::size_t i, SampleResult& result) {
          writer->append(result.records);
          record_counts[phase_name] += result.records.size();
          committed.emplace(todo[i], std::move(result.outcome));
        });
  } catch (...) {
    merge();
    finish_phase();
    throw;
  }
  merge();

  StagePartition partition;
  partition.phase = phase_name;
  partition.input = input;
  for (const auto& id : input) {
    const auto& o = existing.at(id);
    switch (o.verdict) {
      case Verdict::TrueConverting: partition.tc.insert(id); break;
      case Verdict::FalseConverting: partition.fc.insert(id); break;
      case Verdict::UnexcitedConverting: partition.uc.insert(id); break;
    }
    if (o.parse_failure) partition.parse_failures.insert(id);
    if (phase.kind == Phase::Kind::RtgLabel && o.assigned_label)
      partition.assigned_labels[id] = *o.assigned_label;
  }
  persist_partition(partition);
  finish_phase();
  return partition;
}

Prepared Pipeline::Impl::stimulation_prompt(const Sample& s, Label previous) const {
  Prepared p;
  p.template_id = config.capture_reasoning ? TemplateId::RpElicit : config.style.at(s.form);
  Condition condition;
  condition.slots["answer"] = std::string(label_token(previous));
  p.text = render(templates, p.template_id, s, condition).text;
  p.condition.answer = previous;
  return p;
}

Pipeline::Pipeline(RunConfig config, SampleSet samples, fs::path run_dir, PipelineOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(samples), std::move(run_dir),
                                   std::move(options))) {
  impl_->config.validate();
  impl_->open();
}

Pipeline::~Pipeline() = default;

DetectResult Pipeline::detect_vp() {
  auto& m = *impl_;
  IdSet all;
  for (const auto& s : m.samples.samples()) all.insert(s.id);
  const auto partition = m.run_verdict_phase(
      Phase::detect(), all,
      [&m](const Sample& s) {
        Prepared p;
        p.template_id = TemplateId::DirectPredict;
        p.text = render(m.templates, TemplateId::DirectPredict, s, Condition{}).text;
        return p;
      },
      false);
  DetectResult result;
  result.partition = partition;
  result.direct_accuracy = ratio_or_zero(static_cast<std::int64_t>(partition.tc.size()),
                                         static_cast<std::int64_t>(partition.input.size()));
  return result;
}

StagePartition Pipeline::run_stage1() {
  auto& m = *impl_;
  if (const auto* done = m.state.find(Phase::stage1())) return *done;
  const auto detect = detect_vp();
  return m.run_verdict_phase(
      Phase::stage1(), detect.vp(),
      [&m](const Sample& s) { return m.stimulation_prompt(s, m.outcome(Phase::detect(), s.id).predicted); },
      false);
}

StagePartition Pipeline::run_stage2() {
  auto& m = *impl_;
  if (const auto* done = m.state.find(Phase::stage2())) return *done;
  const auto stage1 = run_stage1();
  return m.run_verdict_phase(
      Phase::stage2(), stage1.fc,
      [&m](const Sample& s) {
        const Label previous = m.outcome(Phase::stage1(), s.id).predicted;
        Prepared p = m.stimulation_prompt(s, previous);
        const auto& reminder = m.templates.stage2_reminder();
        const std::string remind =
            render_text(reminder.text, reminder.positional_slots,
                        {{"answer", std::string(label_token(previous))}});
        p.text = remind + "\n\n" + p.text;
        return p;
      },
      false);
}

std::vector<StagePartition> Pipeline::run_rtg_label() {
  auto& m = *impl_;
  std::vector<StagePartition> out;
  for (int stage : m.config.rtg_stages) {
    for (const auto& rate : m.config.misguide_grid) {
      const Phase phase = Phase::rtg_label(stage, rate);
      if (const auto* done = m.state.find(phase)) {
        out.push_back(*done);
        continue;
      }
      const IdSet input = stage == 1 ? detect_vp().vp() : run_stage1().fc;
      const std::string phase_name = phase.to_string();
      out.push_back(m.run_verdict_phase(
          phase, input,
          [&m, &phase_name, rate](const Sample& s) {
            std::mt19937_64 rng(derive_seed(m.config.seed, {s.id, phase_name}));
            const Label assigned = assign_guidance_label(s.gold, rate, rng);
            Prepared p;
            p.template_id = TemplateId::RtgLabelGuide;
            Condition condition;
            condition.slots["assigned_label"] = std::string(label_token(assigned));
            p.text = render(m.templates, TemplateId::RtgLabelGuide, s, condition).text;
            p.condition.assigned_label = assigned;
            p.condition.misguided = assigned != s.gold;
            return p;
          },
          false));
    }
  }
  return out;
}

std::vector<StagePartition> Pipeline::run_rtg_rp() {
  auto& m = *impl_;
  std::vector<StagePartition> out;
  for (int stage : m.config.rtg_stages) {
    const Phase phase = Phase::rtg_rp(stage);
    if (const auto* done = m.state.find(phase)) {
      out.push_back(*done);
      continue;
    }
    // Each stage is re-run with the reasoning that stage itself produced.
    const Phase source = stage == 1 ? Phase::stage1() : Phase::stage2();
    const IdSet input = stage == 1 ? run_stage1().input : run_stage2().input;
    for (const auto& id : input)
      if (!m.outcome(source, id).reasoning) throw MissingReasoning(id);
    out.push_back(m.run_verdict_phase(
        phase, input,
        [&m, source](const Sample& s) {
          const auto& prior = m.outcome(source, s.id);
          Prepared p;
          p.template_id = TemplateId::RtgWithRp;
          Condition condition;
          condition.slots["answer"] = std::string(label_token(prior.predicted));
          condition.slots["prior_reasoning"] = *prior.reasoning;
          condition.allow_empty_prior_reasoning = m.config.allow_empty_prior_reasoning;
          p.text = render(m.templates, TemplateId::RtgWithRp, s, condition).text;
          p.condition.answer = prior.predicted;
          p.condition.prior_reasoning_digest = sha256_hex(*prior.reasoning);
          return p;
        },
        false));
  }
  return out;
}

AblationResult Pipeline::run_ablation_repeat() {
  auto& m = *impl_;
  AblationResult result;
  if (const auto* done = m.state.find(Phase::ablation())) {
    result.partition = *done;
  } else {
    const auto stage1 = run_stage1();
    result.partition = m.run_verdict_phase(
        Phase::ablation(), stage1.uc,
        [&m](const Sample& s) { return m.stimulation_prompt(s, m.outcome(Phase::detect(), s.id).predicted); },
        true);
  }
  result.empty = result.partition.input.empty();
  result.unchanged_rate =
      result.empty ? Rational{1}
                   : Rational(static_cast<std::int64_t>(result.partition.uc.size()),
                              static_cast<std::int64_t>(result.partition.input.size()));
  return result;
}

RootCauseSummary Pipeline::annotate_root_causes() {
  auto& m = *impl_;
  if (m.state.root_cause) return *m.state.root_cause;
  const auto detect = detect_vp();
  const Phase phase = Phase::root_cause();
  const std::string phase_name = phase.to_string();

  IdSet input;
  for (const auto& id : detect.partition.input)
    if (!detect.partition.tc.contains(id)) input.insert(id);
  std::vector<std::string> todo;
  for (const auto& id : input)
    if (!m.root_cause_records.contains(id)) todo.push_back(id);

  std::map<std::string, TrajectoryRecord> committed;
  auto merge = [&] {
    for (auto& [id, r] : committed) m.root_cause_records.emplace(id, std::move(r));
    committed.clear();
  };
  try {
    execute_ordered<JudgeResultItem>(
        todo.size(), m.config.concurrency_limit,
        [&](std::size_t i) {
          const Sample& s = m.sample(todo[i]);
          const Label predicted = m.outcome(Phase::detect(), s.id).predicted;
          const std::string tag = phase_name + "/" + s.id;
          RecordCondition condition;
          condition.answer = predicted;
          auto record = m.base_record(phase, s, RequestRole::Judge, TemplateId::RootCauseJudge, "", "",
                                      condition);
          record.turn.request_tag = tag;
          try {
            auto judged = m.judge->judge_root_cause(s, predicted, tag, m.turn_source(phase_name, false));
            record.prompt = judged.prompt.value_or("");
            const auto settings = m.config.provider.request_settings();
            record.request_digest = request_digest(CompletionRequest{
                settings.model, {{Role::User, record.prompt}}, settings.temperature, settings.max_tokens, tag});
            if (judged.turn) record.turn = *judged.turn;
            record.judge = judged.result;
          } catch (const BudgetExceeded&) {
            throw;
          } catch (const Error& e) {
            record.error = e.what();
          }
          JudgeResultItem item;
          item.records.push_back(std::move(record));
          return item;
        },
        [&](std::size_t i, JudgeResultItem& item) {
          m.writer->append(item.records);
          m.record_counts[phase_name] += item.records.size();
          committed.emplace(todo[i], item.records.back());
        });
  } catch (...) {
    merge();
    m.finish_phase();
    throw;
  }
  merge();

  RootCauseSummary summary;
  summary.input = input;
  for (const auto& id : input) {
    const auto& r = m.root_cause_records.at(id);
    if (r.judge && r.judge->root_cause) summary.causes[id] = *r.judge->root_cause;
    else summary.unannotated.insert(id);
  }
  write_text_atomic(m.paths.partition(phase), summary.to_json().dump(2) + "\n");
  m.state.root_cause = summary;
  m.finish_phase();
  return summary;
}

void Pipeline::run_all() {
  detect_vp();
  run_stage1();
  run_stage2();
  if (impl_->config.rtg_label) run_rtg_label();
  if (impl_->config.rtg_rp) run_rtg_rp();
  if (impl_->config.ablation) run_ablation_repeat();
  if (impl_->config.annotate) annotate_root_causes();
}

const RunState& Pipeline::state() const noexcept { return impl_->state; }
const RunConfig& Pipeline::config() const noexcept { return impl_->config; }
const SampleSet& Pipeline::samples() const noexcept { return impl_->samples; }
const RunPaths& Pipeline::paths() const noexcept { return impl_->paths; }
std::size_t Pipeline::calls_issued() const noexcept { return impl_->gateway->calls_issued(); }

}  // namespace wakenllm
