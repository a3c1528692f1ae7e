#pragma once

// Operational shell: run configuration, metrics log, checkpoints on disk,
// evaluation reports, and the four commands behind the CLI.
//
// Exit codes: 0 ok, 1 validation, 2 version mismatch, 3 internal invariant.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "secloop/battlefield.hpp"
#include "secloop/episode.hpp"
#include "secloop/policy.hpp"
#include "secloop/remote_judge.hpp"
#include "secloop/rewards.hpp"
#include "secloop/sagrpo.hpp"
#include "secloop/scenario.hpp"

namespace secloop::app {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidation = 1, kVersionMismatch = 2, kInternal = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Judge selection

struct JudgeConfig {
  std::string kind = "rule";  // "rule" or "remote"
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/judge";
  int timeout_ms = 2000;
};

inline std::unique_ptr<StrategyJudge> make_judge(const JudgeConfig& j, std::size_t max_calls,
                                                 std::ostream* warnings = &std::cerr) {
  if (j.kind == "rule") return std::make_unique<RuleJudge>(max_calls);
  if (j.kind == "remote") {
    return std::make_unique<RemoteJudge>(j.host, j.port, j.path,
                                         std::chrono::milliseconds(j.timeout_ms), warnings);
  }
  throw ConfigError("judge.kind must be \"rule\" or \"remote\", got \"" + j.kind + "\"");
}

/// "host:port[/path]"
inline JudgeConfig parse_judge_endpoint(const std::string& endpoint) {
  JudgeConfig j;
  j.kind = "remote";
  std::string rest = endpoint;
  if (rest.starts_with("http://")) rest = rest.substr(7);
  const auto slash = rest.find('/');
  if (slash != std::string::npos) {
    j.path = rest.substr(slash);
    rest = rest.substr(0, slash);
  }
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) throw ConfigError("judge endpoint needs host:port");
  j.host = rest.substr(0, colon);
  try {
    j.port = std::stoi(rest.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in judge endpoint '" + endpoint + "'");
  }
  return j;
}

// ---------------------------------------------------------------------------
// RunConfig

struct RunConfig {
  TrainConfig train;
  std::vector<std::string> scenario_paths;  // resolved
  std::string out_dir = "secloop-out";
  std::size_t checkpoint_interval = 50;  // C
  int verbosity = 1;                     // 0 quiet, 1 summary, 2 per step
  bool timing = true;                    // false writes wall_ms as 0
  JudgeConfig judge;
};

namespace detail {

using json = nlohmann::json;

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

inline std::size_t get_count(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError(std::string(key) + ": expected non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace detail

/// Reads a run configuration document. Relative scenario paths resolve
/// against `base_dir`. Unknown keys are rejected.
inline RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
  using detail::get_as;
  using detail::get_count;
  if (!j.is_object()) throw ConfigError("config must be an object");
  static const std::set<std::string> kKnown = {
      "scenarios",   "out",          "checkpoint_interval", "verbosity",   "timing",
      "group_size",  "eps_low",      "eps_high",            "mu",          "steps",
      "prompts_per_step", "learning_rate", "n_env",         "max_len",     "temperature",
      "reward_weights", "ref_sync_steps", "alpha",          "beta",        "seed",
      "buckets",     "order",        "max_calls",           "judge"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  RunConfig c;
  TrainConfig& t = c.train;
  if (!j.contains("scenarios") || !j.at("scenarios").is_array() || j.at("scenarios").empty()) {
    throw ConfigError("scenarios: expected non-empty array of paths");
  }
  for (const auto& p : j.at("scenarios")) {
    if (!p.is_string()) throw ConfigError("scenarios: expected path strings");
    fs::path path = p.get<std::string>();
    if (path.is_relative()) path = base_dir / path;
    c.scenario_paths.push_back(path.lexically_normal().string());
  }
  if (j.contains("out")) c.out_dir = get_as<std::string>(j, "out");
  if (j.contains("checkpoint_interval")) c.checkpoint_interval = get_count(j, "checkpoint_interval");
  if (j.contains("verbosity")) c.verbosity = get_as<int>(j, "verbosity");
  if (j.contains("timing")) c.timing = get_as<bool>(j, "timing");

  if (j.contains("group_size")) t.group_size = get_count(j, "group_size");
  if (j.contains("eps_low")) t.eps_low = get_as<double>(j, "eps_low");
  if (j.contains("eps_high")) t.eps_high = get_as<double>(j, "eps_high");
  if (j.contains("mu")) t.inner_iterations = get_count(j, "mu");
  if (j.contains("steps")) t.steps = get_count(j, "steps");
  if (j.contains("prompts_per_step")) t.prompts_per_step = get_count(j, "prompts_per_step");
  if (j.contains("learning_rate")) t.learning_rate = get_as<double>(j, "learning_rate");
  if (j.contains("n_env")) t.n_env = get_count(j, "n_env");
  if (j.contains("max_len")) t.max_len = get_count(j, "max_len");
  if (j.contains("temperature")) t.temperature = get_as<double>(j, "temperature");
  if (j.contains("ref_sync_steps")) t.ref_sync_steps = get_count(j, "ref_sync_steps");
  if (j.contains("alpha")) t.alpha = get_as<double>(j, "alpha");
  if (j.contains("beta")) t.beta = get_as<double>(j, "beta");
  if (j.contains("seed")) t.run_seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("buckets")) t.buckets = get_count(j, "buckets");
  if (j.contains("order")) t.order = get_count(j, "order");
  if (j.contains("max_calls")) t.max_calls = get_count(j, "max_calls");
  if (j.contains("reward_weights")) {
    const auto& w = j.at("reward_weights");
    if (!w.is_object()) throw ConfigError("reward_weights: expected object");
    for (const auto& [key, _] : w.items()) {
      if (key != "format" && key != "exec" && key != "eva" && key != "penalty") {
        throw ConfigError("reward_weights: unknown key '" + key + "'");
      }
    }
    if (w.contains("format")) t.reward_weights.format = get_as<double>(w, "format");
    if (w.contains("exec")) t.reward_weights.exec = get_as<double>(w, "exec");
    if (w.contains("eva")) t.reward_weights.eva = get_as<double>(w, "eva");
    if (w.contains("penalty")) t.reward_weights.penalty = get_as<double>(w, "penalty");
  }
  if (j.contains("judge")) {
    const auto& jj = j.at("judge");
    if (!jj.is_object()) throw ConfigError("judge: expected object");
    if (jj.contains("kind")) c.judge.kind = get_as<std::string>(jj, "kind");
    if (jj.contains("host")) c.judge.host = get_as<std::string>(jj, "host");
    if (jj.contains("port")) c.judge.port = get_as<int>(jj, "port");
    if (jj.contains("path")) c.judge.path = get_as<std::string>(jj, "path");
    if (jj.contains("timeout_ms")) c.judge.timeout_ms = get_as<int>(jj, "timeout_ms");
  }
  return c;
}

inline void validate(const RunConfig& c) {
  if (c.checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
  if (c.train.buckets > 1'000'000) throw ConfigError("buckets too large");
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.judge.kind != "rule" && c.judge.kind != "remote") {
    throw ConfigError("judge.kind must be \"rule\" or \"remote\"");
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  RunConfig c = parse_run_config(j, fs::path(path).parent_path());
  validate(c);
  return c;
}

/// --out beats SECLOOP_OUT beats the configured directory.
inline std::string resolve_out_dir(const std::optional<std::string>& flag, const std::string& configured) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SECLOOP_OUT"); env != nullptr && *env != '\0') return env;
  return configured;
}

inline void ensure_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("output directory not writable: " + dir.string());
  }
  const fs::path probe = dir / ".secloop-write-probe";
  {
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

// ---------------------------------------------------------------------------
// Metrics log

inline nlohmann::ordered_json to_record(const StepMetrics& m, bool timing = true) {
  return {{"step", m.step},
          {"mean_reward", m.mean_reward},
          {"accuracy", m.accuracy},
          {"objective", m.objective},
          {"grad_norm", m.grad_norm},
          {"clip_fraction", m.clip_fraction},
          {"waves", m.waves},
          {"trajectories", m.trajectories},
          {"wall_ms", timing ? m.wall_ms : 0.0}};
}

inline const std::vector<std::string>& metrics_fields() {
  static const std::vector<std::string> f = {"step",          "mean_reward", "accuracy",
                                             "objective",     "grad_norm",   "clip_fraction",
                                             "waves",         "trajectories", "wall_ms"};
  return f;
}

/// One record per line, flushed as written, so a crash leaves whole records.
class MetricsWriter {
 public:
  explicit MetricsWriter(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("cannot open metrics log " + path.string());
  }
  void append(const nlohmann::ordered_json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

/// Parses a metrics log, dropping a trailing partial line.
inline std::vector<nlohmann::json> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> records;
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof() && !line.empty()) {
      // no trailing newline: the writer died mid-record
      try {
        records.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::parse_error&) {
      }
      break;
    }
    records.push_back(nlohmann::json::parse(line));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Checkpoints on disk

inline void write_checkpoint(const PolicyWeights& w, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    save_checkpoint(w, out);
  }
  fs::rename(tmp, path);
}

inline PolicyWeights read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

inline std::string checkpoint_name(std::size_t step) {
  std::ostringstream s;
  s << "step_" << std::setw(6) << std::setfill('0') << step << ".slpw";
  return s.str();
}

// ---------------------------------------------------------------------------
// Evaluation

struct ScenarioEval {
  std::string scenario;
  EvalSummary summary;
  double wall_ms_total = 0.0;
  double wall_ms_mean = 0.0;
  double wall_ms_max = 0.0;
};

struct EvalReport {
  std::vector<ScenarioEval> scenarios;
  std::size_t episodes = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  bool sampled = false;
};

struct EvalOptions {
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  std::size_t n_env = 1;
  std::size_t max_len = kDefaultMaxLen;
  bool sampled = false;
  double temperature = 1.0;
};

/// Episodes run concurrently in up to n_env workers; results are kept in
/// episode order so the report does not depend on n_env.
inline std::vector<EpisodeTrace> run_eval_episodes(const PolicyWeights& w, const Scenario& scenario,
                                                   const EvalOptions& opt,
                                                   const StrategyJudge& judge,
                                                   std::vector<double>* wall_ms = nullptr) {
  std::vector<EpisodeTrace> traces(opt.episodes);
  std::vector<double> times(opt.episodes, 0.0);
  auto work = [&](std::size_t first) {
    for (std::size_t e = first; e < opt.episodes; e += std::max<std::size_t>(opt.n_env, 1)) {
      const auto start = std::chrono::steady_clock::now();
      traces[e] = run_policy_episode(w, scenario, episode_seeds(opt.seed, e), judge, opt.max_len,
                                     opt.sampled, opt.temperature);
      times[e] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                     .count();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(opt.n_env, 1), opt.episodes);
  if (workers <= 1) {
    if (opt.episodes > 0) work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work, i);
  }
  if (wall_ms != nullptr) *wall_ms = std::move(times);
  return traces;
}

inline EvalSummary summarize_traces(const std::vector<EpisodeTrace>& traces) {
  EvalSummary s;
  for (const EpisodeTrace& t : traces) {
    ++s.episodes;
    s.correct += t.correct;
    s.mean_reward += to_double(t.reward.total);
    if (t.report) {
      s.mean_rs_exe += to_double(t.report->rs_exe);
      s.mean_rs_attack += to_double(t.report->rs_attack);
      s.mean_rs_service += to_double(t.report->rs_service);
    }
  }
  if (s.episodes > 0) {
    const double n = static_cast<double>(s.episodes);
    s.accuracy = static_cast<double>(s.correct) / n;
    s.mean_reward /= n;
    s.mean_rs_exe /= n;
    s.mean_rs_attack /= n;
    s.mean_rs_service /= n;
  }
  return s;
}

inline nlohmann::ordered_json to_record(const EvalReport& r, bool timing = true) {
  nlohmann::ordered_json j;
  j["decoding"] = r.sampled ? "sampled" : "greedy";
  j["episodes"] = r.episodes;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  j["scenarios"] = nlohmann::ordered_json::array();
  for (const ScenarioEval& s : r.scenarios) {
    j["scenarios"].push_back({{"scenario", s.scenario},
                              {"episodes", s.summary.episodes},
                              {"correct", s.summary.correct},
                              {"accuracy", s.summary.accuracy},
                              {"mean_reward", s.summary.mean_reward},
                              {"mean_rs_exe", s.summary.mean_rs_exe},
                              {"mean_rs_attack", s.summary.mean_rs_attack},
                              {"mean_rs_service", s.summary.mean_rs_service},
                              {"wall_ms_total", timing ? s.wall_ms_total : 0.0},
                              {"wall_ms_mean", timing ? s.wall_ms_mean : 0.0},
                              {"wall_ms_max", timing ? s.wall_ms_max : 0.0}});
  }
  return j;
}

inline nlohmann::ordered_json episode_record(const EpisodeTrace& t, std::size_t index) {
  nlohmann::ordered_json j;
  j["scenario"] = t.scenario;
  j["episode"] = index;
  j["output"] = t.output.text;
  j["report"] = t.report ? to_record(*t.report) : nlohmann::ordered_json(nullptr);
  j["reward"] = to_record(t.reward);
  j["judge_reasons"] = t.verdict.reasons;
  j["correct"] = t.correct;
  return j;
}

inline void print_table(const EvalReport& r, std::ostream& out) {
  std::size_t name_w = 8;
  for (const auto& s : r.scenarios) name_w = std::max(name_w, s.scenario.size());
  auto row = [&](const std::string& name, const std::string& eps, const std::string& acc,
                 const std::string& rew, const std::string& exe, const std::string& att,
                 const std::string& svc, const std::string& ms) {
    out << std::left << std::setw(static_cast<int>(name_w)) << name << std::right
        << std::setw(10) << eps << std::setw(10) << acc << std::setw(12) << rew << std::setw(9)
        << exe << std::setw(11) << att << std::setw(12) << svc << std::setw(10) << ms << '\n';
  };
  auto fmt = [](double x, int prec = 3) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << x;
    return s.str();
  };
  row("scenario", "episodes", "accuracy", "mean_reward", "rs_exe", "rs_attack", "rs_service",
      "ms/ep");
  for (const auto& s : r.scenarios) {
    row(s.scenario, std::to_string(s.summary.episodes), fmt(s.summary.accuracy),
        fmt(s.summary.mean_reward), fmt(s.summary.mean_rs_exe), fmt(s.summary.mean_rs_attack),
        fmt(s.summary.mean_rs_service), fmt(s.wall_ms_mean, 2));
  }
  row("total", std::to_string(r.episodes), fmt(r.accuracy), "", "", "", "", "");
}

inline EvalReport evaluate(const PolicyWeights& w, const std::vector<Scenario>& scenarios,
                           const EvalOptions& opt, const StrategyJudge& judge,
                           std::vector<std::pair<std::size_t, EpisodeTrace>>* dump = nullptr) {
  EvalReport r;
  r.sampled = opt.sampled;
  for (const Scenario& sc : scenarios) {
    std::vector<double> times;
    std::vector<EpisodeTrace> traces = run_eval_episodes(w, sc, opt, judge, &times);
    ScenarioEval se;
    se.scenario = sc.name;
    se.summary = summarize_traces(traces);
    for (double t : times) {
      se.wall_ms_total += t;
      se.wall_ms_max = std::max(se.wall_ms_max, t);
    }
    if (!times.empty()) se.wall_ms_mean = se.wall_ms_total / static_cast<double>(times.size());
    r.episodes += se.summary.episodes;
    r.correct += se.summary.correct;
    r.scenarios.push_back(std::move(se));
    if (dump != nullptr) {
      for (std::size_t i = 0; i < traces.size(); ++i) dump->emplace_back(i, std::move(traces[i]));
    }
  }
  r.accuracy = r.episodes == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.episodes);
  return r;
}

// ---------------------------------------------------------------------------
// Replay rendering

inline void print_trace(const EpisodeTrace& t, const Vocabulary& vocab, std::ostream& out) {
  out << "scenario: " << t.scenario << "\n\n";
  out << "alerts (" << t.observation.alerts.alerts.size() << "):\n";
  for (const AttackAlert& a : t.observation.alerts.alerts) {
    out << "  " << a.id << " t=" << a.timestamp << " " << a.attack_type << " " << a.source
        << " -> " << a.target << " [" << to_string(a.severity) << "]\n";
  }
  out << "\nsummaries (" << t.observation.prompt.summaries.size() << "):\n";
  for (const AlertSummary& s : t.observation.prompt.summaries) {
    out << "  " << s.attack_type << " " << s.source << " -> " << s.target << " x" << s.count
        << " [" << to_string(s.max_severity) << "]\n";
  }
  out << "\nprompt (bucket " << t.observation.prompt.context_hash << "):\n";
  std::istringstream lines(t.observation.prompt.rendered);
  for (std::string line; std::getline(lines, line);) out << "  | " << line << '\n';
  out << "\ntokens:";
  for (std::size_t tok : t.trajectory.tokens) out << ' ' << vocab.tokens[tok];
  out << "\nstrategy: " << t.output.text << '\n';
  if (t.report) {
    out << "tool outcomes:";
    for (int o : t.report->tool_outcomes) out << ' ' << o;
    out << "\nstage outcomes:";
    for (int o : t.report->stage_outcomes) out << ' ' << o;
    out << "\nrs_exe: " << to_string(t.report->rs_exe)
        << "  rs_attack: " << to_string(t.report->rs_attack)
        << "  rs_service: " << to_string(t.report->rs_service) << '\n';
  } else {
    out << "battlefield: skipped (format check failed)\n";
  }
  out << "reward: r_format=" << to_string(t.reward.r_format)
      << " r_exec=" << to_string(t.reward.r_exec) << " r_eva=" << to_string(t.reward.r_eva)
      << " penalty=" << to_string(t.reward.penalty) << " total=" << to_string(t.reward.total)
      << (t.reward.gated ? " (gated)" : "") << '\n';
  out << "judge:";
  if (t.verdict.reasons.empty()) out << " none";
  for (const auto& r : t.verdict.reasons) out << ' ' << r;
  out << "\ncorrect: " << (t.correct ? "true" : "false") << '\n';
}

inline nlohmann::ordered_json trace_record(const EpisodeTrace& t, const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["scenario"] = t.scenario;
  j["alerts"] = nlohmann::ordered_json::array();
  for (const AttackAlert& a : t.observation.alerts.alerts) {
    j["alerts"].push_back({{"id", a.id},
                           {"timestamp", a.timestamp},
                           {"attack_type", a.attack_type},
                           {"source", a.source},
                           {"target", a.target},
                           {"severity", std::string(to_string(a.severity))}});
  }
  j["summaries"] = nlohmann::ordered_json::array();
  for (const AlertSummary& s : t.observation.prompt.summaries) {
    j["summaries"].push_back({{"attack_type", s.attack_type},
                              {"source", s.source},
                              {"target", s.target},
                              {"count", s.count},
                              {"max_severity", std::string(to_string(s.max_severity))}});
  }
  j["prompt"] = t.observation.prompt.rendered;
  j["bucket"] = t.observation.prompt.context_hash;
  nlohmann::ordered_json toks = nlohmann::ordered_json::array();
  for (std::size_t tok : t.trajectory.tokens) toks.push_back(vocab.tokens[tok]);
  j["tokens"] = toks;
  j["output"] = t.output.text;
  j["report"] = t.report ? to_record(*t.report) : nlohmann::ordered_json(nullptr);
  j["reward"] = to_record(t.reward);
  j["judge_reasons"] = t.verdict.reasons;
  j["correct"] = t.correct;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

/// Maps exceptions to exit codes and writes the diagnostic to `err`.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const PromptFormatMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kVersionMismatch;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

inline int cmd_scenario_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Scenario s = load_scenario(path);
    out << s.name << ": ok (" << s.chain.size() << " stages, " << s.inventory.size()
        << " tools)\n";
    return static_cast<int>(kOk);
  });
}

inline std::vector<Scenario> load_scenarios(const std::vector<std::string>& paths) {
  std::vector<Scenario> out;
  for (const auto& p : paths) {
    try {
      out.push_back(load_scenario(p));
    } catch (const SchemaError& e) {
      throw SchemaError(e.path(), p + ": " + std::string(e.what()));
    }
  }
  return out;
}

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_env;
  std::optional<std::size_t> group_size;
  std::optional<std::size_t> steps;
  std::optional<std::string> out;
};

inline int cmd_train(const std::string& config_path, const TrainOverrides& ov, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, [&] {
    RunConfig c = load_run_config(config_path);
    if (ov.seed) c.train.run_seed = *ov.seed;
    if (ov.n_env) c.train.n_env = *ov.n_env;
    if (ov.group_size) c.train.group_size = *ov.group_size;
    if (ov.steps) c.train.steps = *ov.steps;
    validate(c);
    const fs::path dir = resolve_out_dir(ov.out, c.out_dir);
    ensure_writable_dir(dir);
    fs::create_directories(dir / "checkpoints");

    const std::vector<Scenario> scenarios = load_scenarios(c.scenario_paths);
    const auto judge = make_judge(c.judge, c.train.max_calls, &err);
    MetricsWriter metrics(dir / "metrics.jsonl");

    auto on_step = [&](const TrainerState& state, const StepMetrics& m) {
      metrics.append(to_record(m, c.timing));
      if (state.step % c.checkpoint_interval == 0) {
        write_checkpoint(state.theta, dir / "checkpoints" / checkpoint_name(state.step));
      }
      if (c.verbosity >= 2) {
        out << "step " << m.step << " reward " << m.mean_reward << " acc " << m.accuracy
            << " grad " << m.grad_norm << '\n';
      }
    };
    const TrainResult result = train(c.train, scenarios, *judge, on_step);
    write_checkpoint(result.weights, dir / "final.slpw");
    if (c.verbosity >= 1) {
      out << "trained " << c.train.steps << " steps on " << scenarios.size()
          << " scenario(s); final checkpoint " << (dir / "final.slpw").string() << '\n';
    }
    return static_cast<int>(kOk);
  });
}

enum class OutputFormat { kHuman, kRecords };

inline OutputFormat parse_format(const std::string& s) {
  if (s == "human") return OutputFormat::kHuman;
  if (s == "records") return OutputFormat::kRecords;
  throw ConfigError("--format must be human or records");
}

struct EvalRequest {
  std::string checkpoint;
  std::vector<std::string> scenario_paths;
  EvalOptions options;
  std::optional<std::string> out;  // report directory; nothing written when unset
  OutputFormat format = OutputFormat::kHuman;
  bool dump_episodes = false;
  std::optional<JudgeConfig> judge;
  std::size_t max_calls = 8;
};

inline int cmd_eval(const EvalRequest& req, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const PolicyWeights w = read_checkpoint(req.checkpoint);
    if (req.scenario_paths.empty()) throw ConfigError("eval needs at least one scenario");
    const std::vector<Scenario> scenarios = load_scenarios(req.scenario_paths);
    const auto judge = make_judge(req.judge.value_or(JudgeConfig{}), req.max_calls, &err);
    std::vector<std::pair<std::size_t, EpisodeTrace>> dump;
    const EvalReport report =
        evaluate(w, scenarios, req.options, *judge, req.dump_episodes ? &dump : nullptr);

    const std::optional<std::string> dir =
        req.out ? req.out
                : (std::getenv("SECLOOP_OUT") != nullptr && *std::getenv("SECLOOP_OUT") != '\0'
                       ? std::optional<std::string>(std::getenv("SECLOOP_OUT"))
                       : std::nullopt);
    if (dir) {
      ensure_writable_dir(*dir);
      std::ofstream f(fs::path(*dir) / "eval_report.json", std::ios::trunc);
      f << to_record(report).dump(2) << '\n';
      if (req.dump_episodes) {
        std::ofstream e(fs::path(*dir) / "eval_episodes.jsonl", std::ios::trunc);
        for (const auto& [i, t] : dump) e << episode_record(t, i).dump() << '\n';
      }
    }
    if (req.format == OutputFormat::kRecords) {
      out << to_record(report).dump() << '\n';
    } else {
      print_table(report, out);
    }
    return static_cast<int>(kOk);
  });
}

struct ReplayRequest {
  std::string checkpoint;
  std::string scenario_path;
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  std::size_t max_len = kDefaultMaxLen;
  bool sampled = false;
  double temperature = 1.0;
  OutputFormat format = OutputFormat::kHuman;
  std::optional<JudgeConfig> judge;
  std::size_t max_calls = 8;
};

inline int cmd_replay(const ReplayRequest& req, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const PolicyWeights w = read_checkpoint(req.checkpoint);
    const Scenario scenario = load_scenario(req.scenario_path);
    const auto judge = make_judge(req.judge.value_or(JudgeConfig{}), req.max_calls, &err);
    const EpisodeTrace t = run_policy_episode(w, scenario, episode_seeds(req.seed, req.episode),
                                              *judge, req.max_len, req.sampled, req.temperature);
    if (req.format == OutputFormat::kRecords) {
      out << trace_record(t, w.vocabulary).dump() << '\n';
    } else {
      print_trace(t, w.vocabulary, out);
    }
    return static_cast<int>(kOk);
  });
}

}  // namespace secloop::app
