#pragma once

// Run directories, phase orchestration and cross-run reports.
//
// Layout of a run directory:
//   config.toml                  resolved configuration
//   state.json                   config hash, seed, code version, completed phases
//   data/train.jsonl data/eval.jsonl
//   ckpt/backbone.bin ckpt/decomposer.bin ckpt/reasoner.bin
//   annotations/train.jsonl annotations/eval.jsonl
//   metrics/<phase>.jsonl        first line is a meta record
//   eval/<style>.json            EvalReport per prompt style
//   eval/subq_stats.json
//
// Every artifact carries the config hash, master seed and code version.
// Files are written to a temporary name and renamed into place, so a failed
// phase never leaves a half-written artifact behind.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2d/a2d.hpp"
#include "a2d/backbone.hpp"
#include "a2d/config.hpp"
#include "a2d/decomposer.hpp"
#include "a2d/env.hpp"
#include "a2d/eval.hpp"
#include "a2d/policy.hpp"
#include "a2d/rlvr.hpp"

namespace a2d::experiment {

namespace fs = std::filesystem;
using config::ConfigError;
using config::RunConfig;
using nlohmann::json;

/// A phase that started and did not finish.
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, const std::string& what)
      : std::runtime_error("phase " + phase + " failed: " + what), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

inline const std::vector<std::string>& phase_order() {
  static const std::vector<std::string> p{"gen-data", "pretrain", "train-decomposer", "annotate", "train-reasoner", "eval"};
  return p;
}

// ---------------------------------------------------------------------------
// Files

inline void write_atomic(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Provenance {
  std::string config_hash;
  std::string env_hash;
  std::uint64_t seed = 0;
  std::string code_version{config::kCodeVersion};

  json to_json() const {
    return {{"config_hash", config_hash}, {"env_hash", env_hash}, {"seed", seed}, {"code_version", code_version}};
  }
  std::string tag() const {
    return "config=" + config_hash + " seed=" + std::to_string(seed) + " code=" + code_version;
  }
};

inline Provenance provenance_of(const RunConfig& cfg) {
  return {config::config_hash(cfg), config::env_hash(cfg), cfg.seed, std::string(config::kCodeVersion)};
}

inline std::string meta_line(const Provenance& p, const std::string& kind) {
  json m = p.to_json();
  m["kind"] = kind;
  return json{{"meta", m}}.dump() + "\n";
}

inline json stats_json(const rlvr::StepStats& s) {
  json j{{"step", s.step},      {"mean_reward", s.mean_reward}, {"mean_advantage", s.mean_advantage},
         {"clip_fraction", s.clip_fraction}, {"kl", s.kl},       {"policy_loss", s.policy_loss}};
  for (const auto& [k, v] : s.extra) j[k] = v;
  return j;
}

/// Append-only metrics stream; every record is flushed as it is written.
class MetricsWriter {
 public:
  MetricsWriter(const fs::path& path, const Provenance& p, const std::string& phase) {
    fs::create_directories(path.parent_path());
    os_.open(path, std::ios::trunc);
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    os_ << meta_line(p, "metrics/" + phase);
    os_.flush();
  }
  void write(const json& record) {
    os_ << record.dump() << '\n';
    os_.flush();
  }

 private:
  std::ofstream os_;
};

inline std::vector<json> read_metrics(const fs::path& path) {
  std::vector<json> out;
  std::ifstream is(path);
  if (!is) return out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (!j.contains("meta")) out.push_back(std::move(j));
  }
  return out;
}

inline std::string tasks_text(const Provenance& p, const std::string& suite, std::span<const env::TaskInstance> tasks) {
  std::ostringstream os;
  os << meta_line(p, "tasks/" + suite);
  env::write_tasks(os, tasks);
  return os.str();
}

inline std::vector<env::TaskInstance> load_tasks(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing task file " + path.string());
  return env::read_tasks(is);
}

inline std::string annotations_text(const Provenance& p, std::span<const trainer::AnnotatedInstance> items) {
  std::ostringstream os;
  os << meta_line(p, "annotations");
  trainer::write_annotations(os, items);
  return os.str();
}

inline std::vector<trainer::AnnotatedInstance> load_annotations(const fs::path& path,
                                                               std::span<const env::TaskInstance> tasks) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing annotation file " + path.string());
  return trainer::read_annotations(is, tasks);
}

inline void save_checkpoint(policy::PolicyParams p, const Provenance& prov, const fs::path& path) {
  p.provenance = prov.tag();
  write_atomic(path, policy::serialize(p));
}

inline policy::PolicyParams load_checkpoint(const fs::path& path) { return policy::deserialize(read_file(path)); }

// ---------------------------------------------------------------------------
// Data

struct Suites {
  std::vector<env::TaskInstance> train, eval;
};

/// Train chains over [chain_len_min, chain_len_max]; eval chains over
/// [eval_len_min, eval_len_max] with no question shared with train.
inline Suites make_suites(const RunConfig& cfg) {
  Suites s;
  s.train = env::generate_suite(cfg.seed, "train", static_cast<std::size_t>(cfg.n_train), cfg.env.chain_len_min,
                                cfg.env.chain_len_max, cfg.env.modulus);
  std::set<TokenSeq> seen;
  for (const auto& t : s.train) seen.insert(t.question_tokens);
  s.eval = env::generate_suite(cfg.seed, "eval", static_cast<std::size_t>(cfg.n_eval), cfg.eval_len_min,
                               cfg.eval_len_max, cfg.env.modulus, &seen);
  return s;
}

// ---------------------------------------------------------------------------
// Run directory and state

struct RunDir {
  fs::path root;

  fs::path state() const { return root / "state.json"; }
  fs::path config() const { return root / "config.toml"; }
  fs::path train_tasks() const { return root / "data" / "train.jsonl"; }
  fs::path eval_tasks() const { return root / "data" / "eval.jsonl"; }
  fs::path backbone() const { return root / "ckpt" / "backbone.bin"; }
  fs::path decomposer() const { return root / "ckpt" / "decomposer.bin"; }
  fs::path reasoner() const { return root / "ckpt" / "reasoner.bin"; }
  fs::path train_annotations() const { return root / "annotations" / "train.jsonl"; }
  fs::path eval_annotations() const { return root / "annotations" / "eval.jsonl"; }
  fs::path metrics(const std::string& phase) const { return root / "metrics" / (phase + ".jsonl"); }
  fs::path eval_report(const std::string& style) const { return root / "eval" / (style + ".json"); }
  fs::path subq_stats() const { return root / "eval" / "subq_stats.json"; }
};

struct RunState {
  Provenance prov;
  std::string mode;
  std::map<std::string, json> phases;  // phase -> summary of the finished phase

  bool done(const std::string& phase) const { return phases.count(phase) > 0; }

  json to_json() const {
    json p = json::object();
    for (const auto& [k, v] : phases) p[k] = v;
    json j = prov.to_json();
    j["mode"] = mode;
    j["phases"] = p;
    return j;
  }
  static RunState from_json(const json& j) {
    RunState s;
    s.prov.config_hash = j.at("config_hash").get<std::string>();
    s.prov.env_hash = j.at("env_hash").get<std::string>();
    s.prov.seed = j.at("seed").get<std::uint64_t>();
    s.prov.code_version = j.at("code_version").get<std::string>();
    s.mode = j.at("mode").get<std::string>();
    for (const auto& [k, v] : j.at("phases").items()) s.phases[k] = v;
    return s;
  }
};

struct Options {
  bool force = false;
  bool resume = false;
  std::ostream* log = &std::cerr;
  int log_every = 50;
};

class Run {
 public:
  Run(RunConfig cfg, Options opt) : cfg_(cfg.resolved()), opt_(opt), dir_{cfg_.out} {
    cfg_.validate();
    prov_ = provenance_of(cfg_);
  }

  const RunConfig& config() const { return cfg_; }
  const RunDir& dir() const { return dir_; }
  const RunState& state() const { return state_; }
  const Provenance& provenance() const { return prov_; }

  /// Creates a fresh run directory. An existing one is an error unless
  /// --force (wipe) or --resume (continue, config must match) is given.
  void create() {
    const bool exists = fs::exists(dir_.root) && !fs::is_empty(dir_.root);
    if (exists && opt_.force) {
      fs::remove_all(dir_.root);
    } else if (exists && opt_.resume) {
      open();
      return;
    } else if (exists) {
      throw ConfigError("run directory " + dir_.root.string() + " already exists; pass --force or --resume");
    }
    fs::create_directories(dir_.root);
    state_ = RunState{prov_, cfg_.mode_text, {}};
    write_atomic(dir_.config(), config::to_toml(cfg_));
    save_state();
  }

  /// Opens an existing run for a single phase; its configuration must match.
  void open() {
    if (!fs::exists(dir_.state())) throw ConfigError("no run at " + dir_.root.string() + "; run gen-data or pipeline first");
    state_ = RunState::from_json(json::parse(read_file(dir_.state())));
    if (state_.prov.config_hash != prov_.config_hash || state_.prov.seed != prov_.seed)
      throw ConfigError("run at " + dir_.root.string() + " was made with config " + state_.prov.config_hash + " seed " +
                        std::to_string(state_.prov.seed) + ", not config " + prov_.config_hash + " seed " +
                        std::to_string(prov_.seed));
  }

  bool needed(const std::string& phase) const {
    const config::Mode m = cfg_.mode();
    if (phase == "train-decomposer" || phase == "annotate") return m.uses_decomposer();
    return true;
  }

  /// Runs one phase. A finished phase is skipped under --resume and redone
  /// under --force (which also invalidates every later phase).
  void run_phase(const std::string& phase) {
    if (!needed(phase)) {
      log() << "[" << phase << "] not used by mode " << cfg_.mode_text << "\n";
      return;
    }
    if (state_.done(phase)) {
      if (opt_.resume) {
        log() << "[" << phase << "] already done, skipping\n";
        return;
      }
      if (!opt_.force) throw ConfigError("phase " + phase + " already done in " + dir_.root.string() + "; pass --force or --resume");
    }
    check_prerequisites(phase);
    bool after = false;
    for (const auto& p : phase_order()) {
      if (p == phase) after = true;
      else if (after) state_.phases.erase(p);
    }
    state_.phases.erase(phase);
    save_state();

    const auto t0 = std::chrono::steady_clock::now();
    json summary;
    try {
      if (phase == "gen-data") summary = gen_data();
      else if (phase == "pretrain") summary = pretrain();
      else if (phase == "train-decomposer") summary = train_decomposer();
      else if (phase == "annotate") summary = annotate();
      else if (phase == "train-reasoner") summary = train_reasoner();
      else if (phase == "eval") summary = evaluate();
      else throw ConfigError("unknown phase " + phase);
    } catch (const ConfigError&) {
      throw;
    } catch (const PhaseError&) {
      throw;
    } catch (const std::exception& e) {
      throw PhaseError(phase, e.what());
    }
    summary["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state_.phases[phase] = summary;
    save_state();
    log() << "[" << phase << "] done " << summary.dump() << "\n";
  }

  void pipeline() {
    for (const auto& p : phase_order()) run_phase(p);
  }

 private:
  std::ostream& log() { return *opt_.log; }

  void save_state() { write_atomic(dir_.state(), state_.to_json().dump(2) + "\n"); }

  void check_prerequisites(const std::string& phase) {
    auto need = [&](const std::string& p) {
      if (needed(p) && !state_.done(p)) throw PhaseError(phase, "needs phase " + p + " to have run first");
    };
    const auto& order = phase_order();
    for (const auto& p : order) {
      if (p == phase) break;
      need(p);
    }
  }

  // -------------------------------------------------------------------------

  json gen_data() {
    const Suites s = make_suites(cfg_);
    write_atomic(dir_.train_tasks(), tasks_text(prov_, "train", s.train));
    write_atomic(dir_.eval_tasks(), tasks_text(prov_, "eval", s.eval));
    return {{"n_train", s.train.size()}, {"n_eval", s.eval.size()}};
  }

  json pretrain() {
    policy::PolicyParams p;
    if (!cfg_.backbone_checkpoint.empty()) {
      p = load_checkpoint(cfg_.backbone_checkpoint);
      if (!(p.shape == cfg_.shape)) throw std::runtime_error("backbone.checkpoint shape differs from policy.* settings");
    } else {
      MetricsWriter mw(dir_.metrics("pretrain"), prov_, "pretrain");
      p = policy::init_params(cfg_.seed, cfg_.shape, cfg_.init_scale);
      const int every = std::max(1, cfg_.backbone.steps / 100);
      p = backbone::pretrain(p, cfg_.backbone, cfg_.env, cfg_.seed, [&](int step, double nll) {
        if (step % every == 0 || step + 1 == cfg_.backbone.steps) mw.write({{"step", step}, {"nll", nll}});
      }, every);
    }
    save_checkpoint(p, prov_, dir_.backbone());
    return {{"params_hash", config::hex64(policy::params_hash(p))}, {"reused", !cfg_.backbone_checkpoint.empty()}};
  }

  json train_decomposer() {
    const auto train = load_tasks(dir_.train_tasks());
    if (train.empty()) throw std::runtime_error("empty training suite");
    const auto bb = load_checkpoint(dir_.backbone());
    MetricsWriter mw(dir_.metrics("decomposer"), prov_, "decomposer");
    auto st = decomposer::train_decomposer(bb, bb, train, cfg_.decomposer_rlvr(), cfg_.decomposer_config(), cfg_.seed,
                                           [&](const rlvr::StepStats& s) {
                                             mw.write(stats_json(s));
                                             progress("decomposer", s);
                                           });
    save_checkpoint(st.params, prov_, dir_.decomposer());
    json out{{"params_hash", config::hex64(policy::params_hash(st.params))}};
    if (!st.history.empty()) {
      out["final_reward"] = st.history.back().mean_reward;
      out["final_format_pass_rate"] = st.history.back().extra.at("format_pass_rate");
    }
    return out;
  }

  json annotate() {
    const auto train = load_tasks(dir_.train_tasks());
    const auto evs = load_tasks(dir_.eval_tasks());
    const auto dec = load_checkpoint(dir_.decomposer());
    trainer::AnnotationReport rt, re;
    const auto a_train = trainer::annotate_dataset(dec, train, cfg_.annotate_config(), cfg_.seed, &rt, "annotate");
    const auto a_eval = trainer::annotate_dataset(dec, evs, cfg_.annotate_config(), cfg_.seed, &re, "annotate/eval");
    write_atomic(dir_.train_annotations(), annotations_text(prov_, a_train));
    write_atomic(dir_.eval_annotations(), annotations_text(prov_, a_eval));
    return {{"train_flagged", rt.flagged}, {"train_retries", rt.retries}, {"eval_flagged", re.flagged}};
  }

  /// Training data for the reasoner: decomposer annotations when the mode
  /// has them, otherwise the bare tasks.
  std::vector<trainer::AnnotatedInstance> reasoner_data() {
    const auto train = load_tasks(dir_.train_tasks());
    if (needed("annotate")) return load_annotations(dir_.train_annotations(), train);
    std::vector<trainer::AnnotatedInstance> out;
    for (const auto& t : train) out.push_back({t, {}, 0, false});
    return out;
  }

  json train_reasoner() {
    const auto data = reasoner_data();
    if (data.empty()) throw std::runtime_error("empty training suite");
    const auto bb = load_checkpoint(dir_.backbone());
    MetricsWriter mw(dir_.metrics("reasoner"), prov_, "reasoner");
    trainer::ReasonerHooks hooks;
    hooks.on_step = [&](const rlvr::StepStats& s) {
      mw.write(stats_json(s));
      progress("reasoner", s);
    };
    const config::Mode m = cfg_.mode();
    rlvr::TrainState st;
    if (m.uses_a2d())
      st = trainer::train_reasoner(bb, data, cfg_.reasoner_rlvr(), cfg_.a2d, cfg_.seed, cfg_.env.reward, hooks);
    else
      st = trainer::train_reasoner_plain(bb, data, cfg_.reasoner_rlvr(), cfg_.seed, cfg_.env.reward,
                                         m.base == config::Base::kPromptWithSq, hooks);
    save_checkpoint(st.params, prov_, dir_.reasoner());
    json out{{"params_hash", config::hex64(policy::params_hash(st.params))}};
    if (!st.history.empty()) out["final_reward"] = st.history.back().mean_reward;
    return out;
  }

  json evaluate() {
    const auto evs = load_tasks(dir_.eval_tasks());
    const auto params = load_checkpoint(dir_.reasoner());
    json out = json::object();
    auto run_style = [&](env::PromptStyle style, std::span<const eval::EvalItem> items) {
      eval::EvalReport r = eval::evaluate(params, items, style, cfg_.eval_options(), cfg_.seed, "eval");
      r.config_hash = prov_.config_hash;
      r.code_version = prov_.code_version;
      write_atomic(dir_.eval_report(r.style), eval::to_json(r).dump(2) + "\n");
      json pk = json::object();
      for (const auto& [k, v] : r.pass_at) pk[std::to_string(k)] = v;
      out[r.style] = pk;
    };
    run_style(env::PromptStyle::vanilla(), eval::items_from(evs));
    if (cfg_.eval_with_subquestions) {
      // Decomposer annotations when the mode trained one, ground truth otherwise.
      const auto ann = needed("annotate") ? load_annotations(dir_.eval_annotations(), evs) : trainer::oracle_annotations(evs);
      std::vector<eval::EvalItem> items;
      for (const auto& a : ann)
        if (!a.subq.empty()) items.push_back({a.task, a.subq});
      if (!items.empty()) run_style(env::PromptStyle::with_subquestions(), items);
    }
    if (needed("annotate")) {
      const auto train = load_tasks(dir_.train_tasks());
      const auto ann = load_annotations(dir_.train_annotations(), train);
      std::vector<trainer::AnnotatedInstance> kept;
      for (const auto& a : ann)
        if (!a.subq.empty()) kept.push_back(a);
      if (!kept.empty()) {
        json j = eval::to_json(eval::subq_stats(kept));
        j["meta"] = prov_.to_json();
        write_atomic(dir_.subq_stats(), j.dump(2) + "\n");
      }
    }
    return out;
  }

  void progress(const std::string& phase, const rlvr::StepStats& s) {
    if (opt_.log_every <= 0 || s.step % opt_.log_every != 0) return;
    log() << "[" << phase << "] step " << s.step << " reward " << s.mean_reward;
    for (const auto& [k, v] : s.extra) log() << " " << k << " " << v;
    log() << "\n";
  }

  RunConfig cfg_;
  Options opt_;
  RunDir dir_;
  Provenance prov_;
  RunState state_;
};

// ---------------------------------------------------------------------------
// Cross-run report

struct RunSummary {
  fs::path dir;
  RunState state;
  std::map<std::string, eval::EvalReport> reports;  // style -> report
  std::vector<json> reasoner_metrics;
};

inline RunSummary load_run(const fs::path& dir) {
  RunDir rd{dir};
  if (!fs::exists(rd.state())) throw ConfigError(dir.string() + " is not a run directory");
  RunSummary s;
  s.dir = dir;
  s.state = RunState::from_json(json::parse(read_file(rd.state())));
  if (fs::exists(dir / "eval"))
    for (const auto& e : fs::directory_iterator(dir / "eval")) {
      if (e.path().extension() != ".json" || e.path().stem() == "subq_stats") continue;
      const auto r = eval::report_from_json(json::parse(read_file(e.path())));
      s.reports[r.style] = r;
    }
  s.reasoner_metrics = read_metrics(rd.metrics("reasoner"));
  return s;
}

struct ReportOutput {
  std::string csv;
  std::map<std::string, std::string> svgs;  // file name -> contents
};

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

inline std::string escape_xml(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return colors[i % 8];
}

/// Line chart of (x, y) series; moving average over `smooth` points.
inline std::string line_svg(const std::string& title, const std::string& ylabel,
                            const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                            const std::string& comment, int smooth = 1) {
  const double W = 640, H = 400, L = 60, R = 160, T = 40, B = 50;
  double xmax = 1.0, ymax = 1e-9, ymin = 0.0;
  for (const auto& [name, pts] : series)
    for (const auto& [x, y] : pts) {
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
      ymin = std::min(ymin, y);
    }
  if (ymax <= 1.0 && ymin >= 0.0) ymax = 1.0;
  auto px = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto py = [&](double y) { return H - B - (H - T - B) * (y - ymin) / (ymax - ymin); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<!-- " << escape_xml(comment) << " -->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
     << escape_xml(title) << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt(y) << "</text>\n";
    const double x = xmax * i / 4.0;
    os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt(x) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">step</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(ylabel) << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& [name, pts] = series[si];
    os << "<polyline fill=\"none\" stroke=\"" << palette(si) << "\" stroke-width=\"1.5\" points=\"";
    const std::size_t k = static_cast<std::size_t>(std::max(1, smooth));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::size_t lo = i + 1 >= k ? i + 1 - k : 0;
      double acc = 0.0;
      for (std::size_t j = lo; j <= i; ++j) acc += pts[j].second;
      os << px(pts[i].first) << "," << py(acc / static_cast<double>(i - lo + 1)) << " ";
    }
    os << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(si + 1);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << palette(si) << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 34 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << escape_xml(name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace detail

/// Comparison table over run directories. Runs must share the environment
/// hash. Rows are per run; a trailing block aggregates seeds per
/// (mode, config hash, style) as mean and population std.
inline ReportOutput build_report(const std::vector<fs::path>& dirs, bool plots) {
  if (dirs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  for (const auto& r : runs)
    if (r.state.prov.env_hash != runs.front().state.prov.env_hash)
      throw ConfigError("runs " + runs.front().dir.string() + " and " + r.dir.string() +
                        " use different environment settings (" + runs.front().state.prov.env_hash + " vs " +
                        r.state.prov.env_hash + "); refusing to compare");

  std::set<int> ks;
  for (const auto& r : runs)
    for (const auto& [style, rep] : r.reports)
      for (const auto& [k, v] : rep.pass_at) ks.insert(k);

  ReportOutput out;
  std::ostringstream csv;
  csv << "# env_hash=" << runs.front().state.prov.env_hash << " code=" << config::kCodeVersion << "\n";
  csv << "run,mode,seed,config_hash,code_version,style,n_tasks";
  for (int k : ks) csv << ",pass@" << k;
  csv << ",final_reward\n";
  struct Agg {
    std::map<int, std::vector<double>> pass;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Agg> agg;
  for (const auto& r : runs) {
    double final_reward = std::nan("");
    if (!r.reasoner_metrics.empty()) {
      // Mean over the last tenth of the curve; single waves are noisy.
      const std::size_t n = r.reasoner_metrics.size(), tail = std::max<std::size_t>(1, n / 10);
      double acc = 0.0;
      for (std::size_t i = n - tail; i < n; ++i) acc += r.reasoner_metrics[i].at("mean_reward").get<double>();
      final_reward = acc / static_cast<double>(tail);
    }
    for (const auto& [style, rep] : r.reports) {
      csv << r.dir.filename().string() << "," << r.state.mode << "," << r.state.prov.seed << ","
          << r.state.prov.config_hash << "," << r.state.prov.code_version << "," << style << "," << rep.task_ids.size();
      auto& a = agg[{r.state.mode, r.state.prov.config_hash, style}];
      for (int k : ks) {
        csv << ",";
        if (rep.pass_at.count(k)) {
          csv << detail::fmt(rep.pass_at.at(k));
          a.pass[k].push_back(rep.pass_at.at(k));
        }
      }
      csv << "," << (std::isnan(final_reward) ? std::string() : detail::fmt(final_reward)) << "\n";
    }
  }
  csv << "\n# seed aggregate: mean,std (population)\n";
  csv << "mode,config_hash,style,n_seeds";
  for (int k : ks) csv << ",pass@" << k << "_mean,pass@" << k << "_std";
  csv << "\n";
  for (const auto& [key, a] : agg) {
    const auto& [mode, hash, style] = key;
    std::size_t n = 0;
    for (const auto& [k, v] : a.pass) n = std::max(n, v.size());
    csv << mode << "," << hash << "," << style << "," << n;
    for (int k : ks) {
      if (a.pass.count(k)) {
        const auto s = eval::summarize(a.pass.at(k));
        csv << "," << detail::fmt(s.mean) << "," << detail::fmt(s.std);
      } else {
        csv << ",,";
      }
    }
    csv << "\n";
  }
  out.csv = csv.str();

  if (plots) {
    const std::string comment = "env_hash=" + runs.front().state.prov.env_hash + " code=" + std::string(config::kCodeVersion);
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> reward, gate;
    for (const auto& r : runs) {
      const std::string name = r.dir.filename().string();
      std::vector<std::pair<double, double>> pr, pg;
      for (const auto& m : r.reasoner_metrics) {
        pr.emplace_back(m.at("step").get<double>(), m.at("mean_reward").get<double>());
        if (m.contains("gate_rate")) pg.emplace_back(m.at("step").get<double>(), m.at("gate_rate").get<double>());
      }
      if (!pr.empty()) reward.emplace_back(name, pr);
      if (!pg.empty()) gate.emplace_back(name, pg);
    }
    if (!reward.empty()) out.svgs["reward.svg"] = detail::line_svg("reasoner training reward", "mean reward", reward, comment, 25);
    if (!gate.empty()) out.svgs["gate_rate.svg"] = detail::line_svg("gate activation rate", "gate rate", gate, comment, 25);
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> pk;
    for (const auto& r : runs)
      for (const auto& [style, rep] : r.reports) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& [k, v] : rep.pass_at) pts.emplace_back(k, v);
        pk.emplace_back(r.dir.filename().string() + " " + style, pts);
      }
    if (!pk.empty()) {
      std::string svg = detail::line_svg("pass@k on the held-out suite", "pass@k", pk, comment);
      const auto pos = svg.find(">step<");
      if (pos != std::string::npos) svg.replace(pos, 6, ">k<");
      out.svgs["pass_at_k.svg"] = svg;
    }
  }
  return out;
}

}  // namespace a2d::experiment
