#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tscompress/harness.hpp"
#include "tscompress/random.hpp"

namespace tscompress {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("config key '" + key + "' expects a number");
  return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("config key '" + key + "' expects a non-negative integer");
  }
  return std::stoull(v);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "' expects true or false");
}

void set_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "corpus_path") {
    c.corpus_path = v;
  } else if (key == "output_dir") {
    c.output_dir = v;
  } else if (key == "min_length") {
    c.min_length = parse_unsigned(key, v);
  } else if (key == "lag") {
    c.lag = static_cast<int>(parse_unsigned(key, v));
  } else if (key == "reps") {
    c.reps = parse_unsigned(key, v);
  } else if (key == "train_frac") {
    c.train_frac = parse_double(key, v);
  } else if (key == "test_frac") {
    c.test_frac = parse_double(key, v);
  } else if (key == "seed") {
    c.seed = parse_unsigned(key, v);
  } else if (key == "portfolio") {
    c.portfolio = v == "default" ? std::vector<std::string>{} : split_list(v);
  } else if (key == "combiners") {
    c.combiners.clear();
    for (const auto& name : split_list(v)) c.combiners.push_back(parse_kind(name));
  } else if (key == "students") {
    c.students = split_list(v);
  } else if (key == "strategies") {
    c.strategies.clear();
    for (const auto& name : split_list(v)) c.strategies.push_back(parse_strategy(name));
  } else if (key == "prequential_blocks") {
    c.prequential_blocks = parse_unsigned(key, v);
  } else if (key == "lambda") {
    c.lambda = parse_unsigned(key, v);
  } else if (key == "eta") {
    c.eta = parse_double(key, v);
  } else if (key == "alpha") {
    c.alpha = parse_double(key, v);
  } else if (key == "forgetting") {
    c.forgetting = parse_double(key, v);
  } else if (key == "ridge_penalty") {
    c.ridge_penalty = parse_double(key, v);
  } else if (key == "trim_keep") {
    c.trim_keep = parse_double(key, v);
  } else if (key == "raw_controls") {
    c.raw_controls = parse_bool(key, v);
  } else if (key == "baselines") {
    c.baselines = parse_bool(key, v);
  } else if (key == "profile") {
    c.profile = parse_bool(key, v);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

void validate(const ExperimentConfig& c) {
  if (c.lag < 1) throw std::invalid_argument("lag must be >= 1");
  if (c.reps < 1) throw std::invalid_argument("reps must be >= 1");
  if (!(c.train_frac > 0.0 && c.test_frac > 0.0 && c.train_frac + c.test_frac <= 1.0)) {
    throw std::invalid_argument("holdout fractions infeasible");
  }
  if (c.prequential_blocks < 2) throw std::invalid_argument("prequential_blocks must be >= 2");
  if (c.lambda < 1) throw std::invalid_argument("lambda must be >= 1");
  if (!(c.trim_keep > 0.0 && c.trim_keep <= 1.0)) throw std::invalid_argument("trim_keep must lie in (0, 1]");
  for (const auto& name : c.students) {
    resolve_student(c, name);
    if (parse_label(name).role != MethodRole::raw_control || name.find('/') != std::string::npos) {
      throw std::invalid_argument("student name '" + name + "' collides with another method label");
    }
  }
  resolve_portfolio(c);
}

}  // namespace

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  set_key(config, trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
  validate(config);
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    set_key(c, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  return parse_config(in);
}

std::string format_config(const ExperimentConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.combiners) kinds.emplace_back(kind_name(k));
  std::vector<std::string> strategies;
  for (auto s : c.strategies) strategies.emplace_back(strategy_name(s));
  auto b = [](bool v) { return v ? "true" : "false"; };

  std::ostringstream out;
  out << "corpus_path = " << c.corpus_path.string() << '\n'
      << "output_dir = " << c.output_dir.string() << '\n'
      << "min_length = " << c.min_length << '\n'
      << "lag = " << c.lag << '\n'
      << "reps = " << c.reps << '\n'
      << "train_frac = " << fmt(c.train_frac) << '\n'
      << "test_frac = " << fmt(c.test_frac) << '\n'
      << "seed = " << c.seed << '\n'
      << "portfolio = " << (c.portfolio.empty() ? std::string("default") : join(c.portfolio)) << '\n'
      << "combiners = " << join(kinds) << '\n'
      << "students = " << join(c.students) << '\n'
      << "strategies = " << join(strategies) << '\n'
      << "prequential_blocks = " << c.prequential_blocks << '\n'
      << "lambda = " << c.lambda << '\n'
      << "eta = " << fmt(c.eta) << '\n'
      << "alpha = " << fmt(c.alpha) << '\n'
      << "forgetting = " << fmt(c.forgetting) << '\n'
      << "ridge_penalty = " << fmt(c.ridge_penalty) << '\n'
      << "trim_keep = " << fmt(c.trim_keep) << '\n'
      << "raw_controls = " << b(c.raw_controls) << '\n'
      << "baselines = " << b(c.baselines) << '\n'
      << "profile = " << b(c.profile) << '\n';
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  std::ostringstream key;
  key << kCodeVersion << '|' << c.lag << '|' << c.reps << '|' << fmt(c.train_frac) << '|' << fmt(c.test_frac) << '|'
      << c.seed << '|' << c.prequential_blocks << '|' << c.lambda << '|' << fmt(c.eta) << '|' << fmt(c.alpha) << '|'
      << fmt(c.forgetting) << '|' << fmt(c.ridge_penalty) << '|' << fmt(c.trim_keep) << '|';
  for (const auto& spec : resolve_portfolio(c)) key << nlohmann::json(spec).dump() << ';';
  return hash_string(key.str());
}

std::vector<LearnerSpec> resolve_portfolio(const ExperimentConfig& config) {
  auto all = default_portfolio_specs(config.lag);
  if (config.portfolio.empty()) return all;
  std::vector<LearnerSpec> out;
  for (const auto& id : config.portfolio) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const LearnerSpec& s) { return s.id() == id; });
    if (it == all.end()) throw std::invalid_argument("unknown portfolio member '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

LearnerSpec resolve_student(const ExperimentConfig& config, const std::string& name) {
  for (const auto& s : default_portfolio_specs(config.lag)) {
    if (s.id() == name) return s;
  }
  switch (parse_family(name)) {
    case Family::ridge: return LearnerSpec(name, RidgeParams{});
    case Family::kernel_ridge: return LearnerSpec(name, KernelRidgeParams{});
    case Family::knn: return LearnerSpec(name, KnnParams{});
    case Family::regression_tree: return LearnerSpec(name, TreeParams{});
    case Family::bagged_forest: return LearnerSpec(name, ForestParams{});
    case Family::model_tree: return LearnerSpec(name, ModelTreeParams{});
  }
  throw std::invalid_argument("unknown student '" + name + "'");
}

CombinerConfig combiner_config(const ExperimentConfig& config, CombinerKind kind) {
  CombinerConfig c;
  c.kind = kind;
  c.lambda_window = config.lambda;
  c.eta = config.eta;
  c.alpha = config.alpha;
  c.forgetting = config.forgetting;
  c.ridge_penalty = config.ridge_penalty;
  c.trim_keep = config.trim_keep;
  return c;
}

std::string format_label(const MethodLabel& label) {
  switch (label.role) {
    case MethodRole::teacher: return std::string(kind_name(*label.teacher));
    case MethodRole::student:
      return std::string(label.strategy == TeachingStrategy::prequential_oob ? "ST[oob]." : "ST.") +
             std::string(kind_name(*label.teacher)) + "/" + label.student;
    case MethodRole::raw_control: return label.student;
    case MethodRole::baseline: return label.baseline;
  }
  return {};
}

MethodLabel parse_label(const std::string& text) {
  MethodLabel label;
  std::string rest;
  if (text.rfind("ST[oob].", 0) == 0) {
    label.strategy = TeachingStrategy::prequential_oob;
    rest = text.substr(8);
  } else if (text.rfind("ST.", 0) == 0) {
    rest = text.substr(3);
  }
  if (!rest.empty()) {
    const auto slash = rest.find('/');
    if (slash == std::string::npos || slash + 1 == rest.size()) {
      throw std::invalid_argument("malformed student label '" + text + "'");
    }
    label.role = MethodRole::student;
    label.teacher = parse_kind(rest.substr(0, slash));
    label.student = rest.substr(slash + 1);
    return label;
  }
  if (text == "naive" || text == "snaive" || text == "ses") {
    label.role = MethodRole::baseline;
    label.baseline = text;
    return label;
  }
  try {
    label.teacher = parse_kind(text);
    label.role = MethodRole::teacher;
    return label;
  } catch (const std::invalid_argument&) {
  }
  if (text.empty()) throw std::invalid_argument("empty method label");
  label.role = MethodRole::raw_control;
  label.student = text;
  return label;
}

std::vector<std::string> method_labels(const ExperimentConfig& config) {
  std::vector<std::string> out;
  for (auto k : config.combiners) out.push_back(format_label({MethodRole::teacher, k, {}, {}, {}}));
  for (auto s : config.strategies) {
    for (auto k : config.combiners) {
      for (const auto& st : config.students) out.push_back(format_label({MethodRole::student, k, st, s, {}}));
    }
  }
  if (config.raw_controls) {
    for (const auto& st : config.students) out.push_back(format_label({MethodRole::raw_control, {}, st, {}, {}}));
  }
  if (config.baselines) {
    for (const char* b : {"naive", "snaive", "ses"}) out.emplace_back(b);
  }
  return out;
}

}  // namespace tscompress
