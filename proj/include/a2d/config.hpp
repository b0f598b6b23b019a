#pragma once

// Run configuration: a flat-sectioned TOML-style file mapped onto the typed
// settings of every module.
//
//   # comment
//   [rlvr]
//   n_rollout = 8
//   estimator = "grpo"
//   [eval]
//   k_list = [1, 8]
//
// Every key is known in advance; unknown keys and malformed values are
// rejected before any work starts. The canonical dump lists every field, so
// the hash does not depend on which defaults were spelled out.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "a2d/a2d.hpp"
#include "a2d/backbone.hpp"
#include "a2d/decomposer.hpp"
#include "a2d/env.hpp"
#include "a2d/eval.hpp"
#include "a2d/policy.hpp"
#include "a2d/rlvr.hpp"
#include "a2d/rng.hpp"

namespace a2d::config {

inline constexpr std::string_view kCodeVersion = "a2d-rlvr/0.3.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Raw file parsing

/// "section.key" -> raw value text (quotes kept for strings).
using RawTable = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

inline bool valid_name(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

}  // namespace detail

inline RawTable parse_text(std::string_view text, const std::string& origin = "config") {
  RawTable out;
  std::string section;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string s = detail::trim(detail::strip_comment(line));
    const std::string where = origin + ":" + std::to_string(lineno);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = detail::trim(std::string_view(s).substr(1, s.size() - 2));
      if (!detail::valid_name(section)) throw ConfigError(where + ": bad section name '" + section + "'");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(std::string_view(s).substr(0, eq));
    const std::string value = detail::trim(std::string_view(s).substr(eq + 1));
    if (!detail::valid_name(key)) throw ConfigError(where + ": bad key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": missing value for '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    out[full] = value;
  }
  return out;
}

inline RawTable parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Value conversion

namespace detail {

inline std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::string to_string(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') throw ConfigError(key + ": expected a quoted string, got " + v);
  return v.substr(1, v.size() - 2);
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw ConfigError(key + ": expected [a, b, ...], got " + v);
  std::vector<int> out;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    out.push_back(static_cast<int>(to_int(key, t)));
  }
  return out;
}

/// Shortest text that reads back to the same double.
inline std::string fmt_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Modes

enum class Base { kGrpo, kGrpoN64, kA2d, kPromptWithSq, kRloo, kReinforcePP, kA2dRloo, kA2dReinforcePP };

struct Mode {
  Base base = Base::kA2d;
  bool no_format = false;    // decomposer trained without the format reward
  bool pass_at_1 = false;    // decomposer quality from a single proxy attempt
  bool no_selection = false;
  bool no_diversity = false;

  bool uses_decomposer() const {
    return base == Base::kA2d || base == Base::kPromptWithSq || base == Base::kA2dRloo || base == Base::kA2dReinforcePP;
  }
  bool uses_a2d() const { return base == Base::kA2d || base == Base::kA2dRloo || base == Base::kA2dReinforcePP; }
  rlvr::Estimator estimator() const {
    switch (base) {
      case Base::kRloo:
      case Base::kA2dRloo: return rlvr::Estimator::kRloo;
      case Base::kReinforcePP:
      case Base::kA2dReinforcePP: return rlvr::Estimator::kReinforcePP;
      default: return rlvr::Estimator::kGrpo;
    }
  }
};

inline const std::vector<std::pair<std::string_view, Base>>& base_names() {
  static const std::vector<std::pair<std::string_view, Base>> names{
      {"grpo", Base::kGrpo},   {"grpo_n64", Base::kGrpoN64},      {"a2d", Base::kA2d},
      {"prompt_with_sq", Base::kPromptWithSq}, {"rloo", Base::kRloo}, {"reinforcepp", Base::kReinforcePP},
      {"a2d_rloo", Base::kA2dRloo}, {"a2d_reinforcepp", Base::kA2dReinforcePP}};
  return names;
}

/// "a2d", "a2d+no_selection+no_diversity", "a2d+pass_at_1", ...
inline Mode parse_mode(std::string_view text) {
  Mode m;
  std::vector<std::string> parts;
  std::stringstream ss{std::string(text)};
  std::string p;
  while (std::getline(ss, p, '+')) parts.push_back(detail::trim(p));
  if (parts.empty() || parts[0].empty()) throw ConfigError("empty mode");
  bool found = false;
  for (const auto& [name, b] : base_names())
    if (parts[0] == name) {
      m.base = b;
      found = true;
    }
  if (!found) throw ConfigError("unknown mode '" + parts[0] + "'");
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "no_format") m.no_format = true;
    else if (parts[i] == "pass_at_1") m.pass_at_1 = true;
    else if (parts[i] == "no_selection") m.no_selection = true;
    else if (parts[i] == "no_diversity") m.no_diversity = true;
    else throw ConfigError("unknown mode flag '" + parts[i] + "'");
  }
  if ((m.no_format || m.pass_at_1) && !m.uses_decomposer())
    throw ConfigError("mode flags no_format/pass_at_1 need a mode that trains a decomposer");
  if ((m.no_selection || m.no_diversity) && !m.uses_a2d())
    throw ConfigError("mode flags no_selection/no_diversity need an a2d mode");
  return m;
}

inline std::string mode_name(const Mode& m) {
  std::string s;
  for (const auto& [name, b] : base_names())
    if (b == m.base) s = name;
  if (m.no_format) s += "+no_format";
  if (m.pass_at_1) s += "+pass_at_1";
  if (m.no_selection) s += "+no_selection";
  if (m.no_diversity) s += "+no_diversity";
  return s;
}

// ---------------------------------------------------------------------------
// Typed configuration

struct PhaseRl {
  int steps = 0;
  int batch_size = 8;
  int mini_batch_size = 4;
  int n_rollout = 8;
  double lr = 1e-3;
};

struct RunConfig {
  // [run]
  std::uint64_t seed = 1;
  std::string mode_text = "a2d";
  std::string out = "runs/a2d";
  int workers = 1;

  // [env]
  env::EnvConfig env;

  // [data]
  int n_train = 256;
  int n_eval = 200;
  int eval_len_min = 3;
  int eval_len_max = 3;

  // [policy]
  policy::PolicyShape shape;
  double init_scale = policy::kInitScale;
  policy::SamplingOptions sampling;

  // [backbone]
  backbone::BackboneConfig backbone;
  std::string backbone_checkpoint;  // reuse an existing warm-up checkpoint

  // [rlvr] (reasoner)
  rlvr::Estimator estimator = rlvr::Estimator::kGrpo;
  double eps_low = 0.2;
  double eps_high = 0.28;
  double beta = 0.0;
  PhaseRl reasoner{600, 8, 4, 8, 1e-3};

  // [decomposer]
  PhaseRl decomp{300, 8, 4, 8, 1e-3};
  decomposer::DecomposerConfig dcfg;

  // [a2d]
  trainer::A2dConfig a2d;
  int annotate_retries = 4;

  // [eval]
  int eval_samples = 8;
  std::vector<int> k_list{1, 8};
  bool eval_with_subquestions = false;

  Mode mode() const { return parse_mode(mode_text); }

  /// Mode-implied settings layered over the file values.
  RunConfig resolved() const {
    RunConfig c = *this;
    const Mode m = c.mode();
    c.mode_text = mode_name(m);
    c.estimator = m.estimator();
    if (m.base == Base::kGrpoN64) c.reasoner.n_rollout = 64;
    if (m.no_format) c.dcfg.format_reward_enabled = false;
    if (m.pass_at_1) c.dcfg.quality_mode = decomposer::QualityMode::kPassAt1;
    if (m.no_selection) c.a2d.selection_enabled = false;
    if (m.no_diversity) c.a2d.diversity_enabled = false;
    if (m.base == Base::kPromptWithSq) c.eval_with_subquestions = true;
    return c;
  }

  rlvr::RlvrConfig rlvr_config(const PhaseRl& ph) const {
    rlvr::RlvrConfig r;
    r.estimator = estimator;
    r.eps_low = eps_low;
    r.eps_high = eps_high;
    r.beta = beta;
    r.n_rollout = ph.n_rollout;
    r.adam.lr = ph.lr;
    r.sampling = sampling;
    r.steps = ph.steps;
    r.batch_size = ph.batch_size;
    r.mini_batch_size = ph.mini_batch_size;
    r.workers = workers;
    return r;
  }
  rlvr::RlvrConfig reasoner_rlvr() const { return rlvr_config(reasoner); }
  rlvr::RlvrConfig decomposer_rlvr() const {
    rlvr::RlvrConfig r = rlvr_config(decomp);
    r.estimator = rlvr::Estimator::kGrpo;
    return r;
  }
  decomposer::DecomposerConfig decomposer_config() const {
    decomposer::DecomposerConfig d = dcfg;
    d.proxy_sampling = sampling;
    d.reward = env.reward;
    return d;
  }
  trainer::AnnotateConfig annotate_config() const {
    trainer::AnnotateConfig a;
    a.max_retries = annotate_retries;
    a.sampling = sampling;
    a.min_content_chars = dcfg.min_content_chars;
    a.workers = workers;
    return a;
  }
  eval::EvalOptions eval_options() const {
    eval::EvalOptions e;
    e.n_samples = eval_samples;
    e.k_list = k_list;
    e.sampling = sampling;
    e.workers = workers;
    return e;
  }

  /// Every precondition the phases will later check, checked up front.
  void validate() const {
    try {
      (void)mode();
      if (workers < 1) throw ConfigError("run.workers must be positive");
      if (out.empty()) throw ConfigError("run.out must not be empty");
      env.validate();
      if (env.n_variants > vocab::kMaxVariants)
        throw ConfigError("env.n_variants exceeds the vocabulary's " + std::to_string(vocab::kMaxVariants) + " variant tokens");
      if (n_train < 0 || n_eval < 1) throw ConfigError("data.n_train must be >= 0 and data.n_eval >= 1");
      if (eval_len_min < 1 || eval_len_max < eval_len_min || eval_len_max > env::kMaxChainLen)
        throw ConfigError("data.eval_len_min/eval_len_max out of range");
      shape.validate();
      if (shape.vocab_size != vocab::kSize)
        throw ConfigError("policy vocabulary is fixed at " + std::to_string(vocab::kSize) + " tokens");
      if (!(init_scale > 0.0)) throw ConfigError("policy.init_scale must be positive");
      backbone.validate();
      resolved().reasoner_rlvr().validate();
      resolved().decomposer_rlvr().validate();
      dcfg.validate();
      a2d.validate();
      if (a2d.n_variants != env.n_variants) throw ConfigError("a2d.n_variants must equal env.n_variants");
      if (annotate_retries < 0) throw ConfigError("a2d.annotate_retries must be nonnegative");
      if (eval_samples < 1 || k_list.empty()) throw ConfigError("eval.n_samples and eval.k_list must be nonempty");
      for (int k : k_list)
        if (k < 1 || k > eval_samples) throw ConfigError("eval.k_list entries must lie in [1, eval.n_samples]");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
};

// ---------------------------------------------------------------------------
// Field table: one entry per key, used for parsing and for the canonical dump.

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool hashed = true;  // run.seed, run.out and run.workers do not change results
};

namespace detail {

template <typename T>
Field int_field(std::string key, T RunConfig::*outer, int T::*inner) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*outer).*inner = static_cast<int>(to_int(key, v)); },
          [=](const RunConfig& c) { return std::to_string((c.*outer).*inner); }};
}
template <typename T>
Field dbl_field(std::string key, T RunConfig::*outer, double T::*inner) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*outer).*inner = to_double(key, v); },
          [=](const RunConfig& c) { return fmt_double((c.*outer).*inner); }};
}
template <typename T>
Field bool_field(std::string key, T RunConfig::*outer, bool T::*inner) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*outer).*inner = to_bool(key, v); },
          [=](const RunConfig& c) { return std::string((c.*outer).*inner ? "true" : "false"); }};
}
inline Field top_int(std::string key, int RunConfig::*m, bool hashed = true) {
  return {key, [=](RunConfig& c, const std::string& v) { c.*m = static_cast<int>(to_int(key, v)); },
          [=](const RunConfig& c) { return std::to_string(c.*m); }, hashed};
}
inline Field top_dbl(std::string key, double RunConfig::*m) {
  return {key, [=](RunConfig& c, const std::string& v) { c.*m = to_double(key, v); },
          [=](const RunConfig& c) { return fmt_double(c.*m); }};
}
inline Field top_str(std::string key, std::string RunConfig::*m, bool hashed = true) {
  return {key, [=](RunConfig& c, const std::string& v) { c.*m = to_string(key, v); },
          [=](const RunConfig& c) { return "\"" + c.*m + "\""; }, hashed};
}

}  // namespace detail

inline const std::vector<Field>& fields() {
  using namespace detail;
  using RC = RunConfig;
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back({"run.seed", [](RC& c, const std::string& s) {
                   const auto x = to_int("run.seed", s);
                   if (x < 0) throw ConfigError("run.seed must be nonnegative");
                   c.seed = static_cast<std::uint64_t>(x);
                 },
                 [](const RC& c) { return std::to_string(c.seed); }, false});
    v.push_back(top_str("run.mode", &RC::mode_text));
    v.push_back(top_str("run.out", &RC::out, false));
    v.push_back(top_int("run.workers", &RC::workers, false));

    v.push_back(int_field("env.modulus", &RC::env, &env::EnvConfig::modulus));
    v.push_back(int_field("env.chain_len_min", &RC::env, &env::EnvConfig::chain_len_min));
    v.push_back(int_field("env.chain_len_max", &RC::env, &env::EnvConfig::chain_len_max));
    v.push_back({"env.n_variants", [](RC& c, const std::string& s) {
                   c.env.n_variants = static_cast<int>(to_int("env.n_variants", s));
                   c.a2d.n_variants = c.env.n_variants;
                 },
                 [](const RC& c) { return std::to_string(c.env.n_variants); }});
    v.push_back({"env.r_pos", [](RC& c, const std::string& s) { c.env.reward.pos = to_double("env.r_pos", s); },
                 [](const RC& c) { return fmt_double(c.env.reward.pos); }});
    v.push_back({"env.r_neg", [](RC& c, const std::string& s) { c.env.reward.neg = to_double("env.r_neg", s); },
                 [](const RC& c) { return fmt_double(c.env.reward.neg); }});

    v.push_back(top_int("data.n_train", &RC::n_train));
    v.push_back(top_int("data.n_eval", &RC::n_eval));
    v.push_back(top_int("data.eval_len_min", &RC::eval_len_min));
    v.push_back(top_int("data.eval_len_max", &RC::eval_len_max));

    v.push_back(int_field("policy.window", &RC::shape, &policy::PolicyShape::window));
    v.push_back(int_field("policy.hidden_dim", &RC::shape, &policy::PolicyShape::hidden_dim));
    v.push_back(top_dbl("policy.init_scale", &RC::init_scale));
    v.push_back(int_field("policy.max_response_len", &RC::sampling, &policy::SamplingOptions::max_len));
    v.push_back(dbl_field("policy.temperature", &RC::sampling, &policy::SamplingOptions::temperature));
    v.push_back(dbl_field("policy.top_p", &RC::sampling, &policy::SamplingOptions::top_p));

    v.push_back(int_field("backbone.steps", &RC::backbone, &backbone::BackboneConfig::steps));
    v.push_back(int_field("backbone.batch_size", &RC::backbone, &backbone::BackboneConfig::batch_size));
    v.push_back(dbl_field("backbone.lr", &RC::backbone, &backbone::BackboneConfig::lr));
    v.push_back(dbl_field("backbone.w_vanilla", &RC::backbone, &backbone::BackboneConfig::w_vanilla));
    v.push_back(int_field("backbone.vanilla_len_max", &RC::backbone, &backbone::BackboneConfig::vanilla_len_max));
    v.push_back(dbl_field("backbone.diversity_share", &RC::backbone, &backbone::BackboneConfig::diversity_share));
    v.push_back(dbl_field("backbone.w_guided", &RC::backbone, &backbone::BackboneConfig::w_guided));
    v.push_back(dbl_field("backbone.w_decompose", &RC::backbone, &backbone::BackboneConfig::w_decompose));
    v.push_back(dbl_field("backbone.decompose_leak", &RC::backbone, &backbone::BackboneConfig::decompose_leak));
    v.push_back(dbl_field("backbone.decompose_noise", &RC::backbone, &backbone::BackboneConfig::decompose_noise));
    v.push_back(top_str("backbone.checkpoint", &RC::backbone_checkpoint));

    v.push_back({"rlvr.estimator",
                 [](RC& c, const std::string& s) {
                   try {
                     c.estimator = rlvr::estimator_from_name(to_string("rlvr.estimator", s));
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("rlvr.estimator: ") + e.what());
                   }
                 },
                 [](const RC& c) { return "\"" + std::string(rlvr::estimator_name(c.estimator)) + "\""; }});
    v.push_back(top_dbl("rlvr.eps_low", &RC::eps_low));
    v.push_back(top_dbl("rlvr.eps_high", &RC::eps_high));
    v.push_back(top_dbl("rlvr.beta", &RC::beta));
    for (auto [sec, m] : {std::pair{std::string("rlvr"), &RC::reasoner}, std::pair{std::string("decomposer"), &RC::decomp}}) {
      v.push_back(int_field(sec + ".steps", m, &PhaseRl::steps));
      v.push_back(int_field(sec + ".batch_size", m, &PhaseRl::batch_size));
      v.push_back(int_field(sec + ".mini_batch_size", m, &PhaseRl::mini_batch_size));
      v.push_back(int_field(sec + ".n_rollout", m, &PhaseRl::n_rollout));
      v.push_back(dbl_field(sec + ".lr", m, &PhaseRl::lr));
    }

    v.push_back(int_field("decomposer.n_proxy", &RC::dcfg, &decomposer::DecomposerConfig::n_proxy));
    v.push_back({"decomposer.quality",
                 [](RC& c, const std::string& s) {
                   const std::string q = to_string("decomposer.quality", s);
                   if (q == "pass_at_k") c.dcfg.quality_mode = decomposer::QualityMode::kPassAtK;
                   else if (q == "pass_at_1") c.dcfg.quality_mode = decomposer::QualityMode::kPassAt1;
                   else throw ConfigError("decomposer.quality must be \"pass_at_k\" or \"pass_at_1\"");
                 },
                 [](const RC& c) {
                   return std::string(c.dcfg.quality_mode == decomposer::QualityMode::kPassAtK ? "\"pass_at_k\"" : "\"pass_at_1\"");
                 }});
    v.push_back(bool_field("decomposer.format_reward", &RC::dcfg, &decomposer::DecomposerConfig::format_reward_enabled));
    v.push_back(int_field("decomposer.min_content_chars", &RC::dcfg, &decomposer::DecomposerConfig::min_content_chars));

    v.push_back(dbl_field("a2d.k1", &RC::a2d, &trainer::A2dConfig::k1));
    v.push_back(dbl_field("a2d.k2", &RC::a2d, &trainer::A2dConfig::k2));
    v.push_back(dbl_field("a2d.alpha", &RC::a2d, &trainer::A2dConfig::alpha));
    v.push_back(bool_field("a2d.selection", &RC::a2d, &trainer::A2dConfig::selection_enabled));
    v.push_back(bool_field("a2d.diversity", &RC::a2d, &trainer::A2dConfig::diversity_enabled));
    v.push_back(top_int("a2d.annotate_retries", &RC::annotate_retries));

    v.push_back(top_int("eval.n_samples", &RC::eval_samples));
    v.push_back({"eval.k_list", [](RC& c, const std::string& s) { c.k_list = to_int_list("eval.k_list", s); },
                 [](const RC& c) {
                   std::string o = "[";
                   for (std::size_t i = 0; i < c.k_list.size(); ++i) o += (i ? ", " : "") + std::to_string(c.k_list[i]);
                   return o + "]";
                 }});
    v.push_back({"eval.with_subquestions",
                 [](RC& c, const std::string& s) { c.eval_with_subquestions = to_bool("eval.with_subquestions", s); },
                 [](const RC& c) { return std::string(c.eval_with_subquestions ? "true" : "false"); }});
    return v;
  }();
  return f;
}

inline RunConfig from_table(const RawTable& raw, RunConfig base = {}) {
  for (const auto& [key, value] : raw) {
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (it == fs.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(base, value);
  }
  return base;
}

inline RunConfig load(const std::string& path) { return from_table(parse_file(path)); }

/// Every field as "section.key = value", one per line, in table order.
inline std::string canonical_text(const RunConfig& c, bool hashed_only = false, std::string_view prefix = "") {
  std::string out;
  for (const Field& f : fields()) {
    if (hashed_only && !f.hashed) continue;
    if (!prefix.empty() && f.key.rfind(prefix, 0) != 0) continue;
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

/// TOML-style dump that parses back to the same configuration.
inline std::string to_toml(const RunConfig& c) {
  std::string out, section;
  for (const Field& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(c) + "\n";
  }
  return out;
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << x;
  return os.str();
}

/// Hash of the resolved configuration, excluding seed, output path and worker count.
inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(canonical_text(c.resolved(), true))); }

/// Hash of the task-environment settings; runs are comparable only when it matches.
inline std::string env_hash(const RunConfig& c) {
  const RunConfig r = c.resolved();
  return hex64(fnv1a(canonical_text(r, true, "env.") + canonical_text(r, true, "data.")));
}

}  // namespace a2d::config
