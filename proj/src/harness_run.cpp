#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include "tscompress/harness.hpp"
#include "tscompress/random.hpp"

namespace tscompress {

namespace {

namespace fs = std::filesystem;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex(const std::string& s) { return std::stoull(s, nullptr, 16); }

std::uint64_t series_hash(const TimeSeries& s) {
  const auto v = s.values();
  std::uint64_t h = hash_bytes(v.data(), v.size() * sizeof(double));
  h = mix_seed(h, hash_string(s.id()));
  return mix_seed(h, static_cast<std::uint64_t>(s.period().value_or(0)));
}

TrainFingerprint rows_fingerprint(std::span<const std::size_t> rows) {
  TrainFingerprint f;
  f.rows = rows.size();
  if (rows.empty()) return f;
  f.hash = hash_bytes(rows.data(), rows.size() * sizeof(std::size_t));
  f.first_row = *std::min_element(rows.begin(), rows.end());
  f.last_row = *std::max_element(rows.begin(), rows.end());
  return f;
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Caches a computed value or the error raised while computing it.
template <typename T>
class Lazy {
 public:
  template <typename F>
  const T& get(F&& make) {
    if (error_) throw std::runtime_error(*error_);
    if (!value_) {
      try {
        value_.emplace(make());
      } catch (const std::exception& e) {
        error_ = e.what();
        throw;
      }
    }
    return *value_;
  }

 private:
  std::optional<T> value_;
  std::optional<std::string> error_;
};

struct Scored {
  Eigen::VectorXd predictions;
  CostProfile cost;
  std::vector<ArtifactFingerprint> artifacts;
};

struct TeacherState {
  Eigen::VectorXd predictions;
  CostProfile cost;
  std::vector<ArtifactFingerprint> artifacts;
};

template <typename F>
double timed(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int estimate_period(std::span<const double> y) {
  const std::size_t n = y.size();
  const std::size_t max_lag = std::min<std::size_t>(n / 3, 60);
  if (max_lag < 2) return 1;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : y) denom += (v - mean) * (v - mean);
  if (denom <= 0.0) return 1;
  int best = 1;
  double best_acf = 0.0;
  for (std::size_t lag = 2; lag <= max_lag; ++lag) {
    double num = 0.0;
    for (std::size_t t = lag; t < n; ++t) num += (y[t] - mean) * (y[t - lag] - mean);
    const double acf = num / denom;
    if (acf > best_acf) {
      best_acf = acf;
      best = static_cast<int>(lag);
    }
  }
  return best;
}

// One series under one holdout repetition; shared artifacts are fitted on first use.
class Unit {
 public:
  Unit(const ExperimentConfig& config, std::span<const LearnerSpec> specs, const TimeSeries& series,
       const EmbeddedDataset& data, const HoldoutSplit& split)
      : config_(config),
        specs_(specs),
        series_(series),
        train_(data.slice(split.train)),
        test_(data.slice(split.test)) {}

  const EmbeddedDataset& train_data() const { return train_; }
  const EmbeddedDataset& test_data() const { return test_; }

  Scored evaluate(const MethodLabel& label) {
    switch (label.role) {
      case MethodRole::teacher: {
        const auto& t = teacher(*label.teacher);
        return {t.predictions, t.cost, t.artifacts};
      }
      case MethodRole::student: return student(label);
      case MethodRole::raw_control: return raw_control(label.student);
      case MethodRole::baseline: return baseline(label.baseline);
    }
    throw std::logic_error("unhandled method role");
  }

 private:
  const Portfolio& portfolio() {
    return portfolio_.get([&] { return train_portfolio(specs_, train_); });
  }

  const ExpertStream& oob() {
    return oob_.get([&] { return out_of_bag_stream(specs_, train_, config_.prequential_blocks); });
  }

  const ExpertStream& test_stream() {
    return test_stream_.get([&] { return expert_stream(portfolio(), test_); });
  }

  std::vector<ArtifactFingerprint> portfolio_artifacts() {
    std::vector<ArtifactFingerprint> out;
    for (const auto& m : portfolio().models) out.push_back({"portfolio:" + m.spec().id(), m.fingerprint()});
    return out;
  }

  static bool needs_oob(CombinerKind kind) {
    return requires_warmup(kind) || is_dynamic(kind) || kind == CombinerKind::Ridge;
  }

  const TeacherState& teacher(CombinerKind kind) {
    return teachers_[kind].get([&] {
      const auto cfg = combiner_config(config_, kind);
      TeacherState state;
      state.artifacts = portfolio_artifacts();
      const ExpertStream* warmup = nullptr;
      if (needs_oob(kind)) {
        warmup = &oob();
        state.artifacts.push_back({"oob-stream", rows_fingerprint(warmup->row_ids)});
      }
      const bool pass_warmup = requires_warmup(kind) || kind == CombinerKind::Ridge;
      Combiner combiner(cfg, portfolio().size(), pass_warmup ? warmup : nullptr);
      if (warmup) warm_start(combiner, *warmup);
      for (const auto& f : combiner.fingerprints()) {
        state.artifacts.push_back({"combiner:" + std::string(kind_name(kind)), f});
      }
      const Combiner deployed = combiner;
      state.predictions = replay(combiner, test_stream());
      if (config_.profile) state.cost = profile_cost(portfolio(), deployed, test_.features, as_span(test_.targets));
      return state;
    });
  }

  Scored student(const MethodLabel& label) {
    const auto spec = resolve_student(config_, label.student);
    TeachingOptions options;
    options.strategy = label.strategy;
    options.prequential_blocks = config_.prequential_blocks;
    const auto kind = *label.teacher;
    const bool uses_oob = label.strategy == TeachingStrategy::prequential_oob || requires_warmup(kind) ||
                          kind == CombinerKind::Ridge;
    if (uses_oob) options.oob = &oob();
    const auto teaching =
        generate_teaching_targets(portfolio(), combiner_config(config_, kind), train_, options);
    const auto distilled = distill(spec, teaching);

    Scored s;
    s.artifacts = portfolio_artifacts();
    if (uses_oob) s.artifacts.push_back({"oob-stream", rows_fingerprint(oob().row_ids)});
    s.artifacts.push_back({"teaching-set", rows_fingerprint(teaching.row_ids)});
    s.artifacts.push_back({"student:" + spec.id(), distilled.student.fingerprint()});
    s.predictions = distilled.predict(test_.features);
    if (config_.profile) s.cost = profile_cost(distilled.student, test_.features);
    return s;
  }

  Scored raw_control(const std::string& name) {
    const auto model = train(resolve_student(config_, name), train_);
    Scored s;
    s.artifacts.push_back({"raw:" + name, model.fingerprint()});
    s.predictions = model.predict(test_.features);
    if (config_.profile) s.cost = profile_cost(model, test_.features);
    return s;
  }

  Scored baseline(const std::string& name) {
    Scored s;
    s.artifacts.push_back({"baseline:" + name, rows_fingerprint(train_.row_ids)});
    const auto n = static_cast<Eigen::Index>(test_.rows());
    s.predictions.resize(n);
    const auto y = series_.values();
    const auto p = static_cast<std::size_t>(config_.lag);

    if (name == "naive") {
      s.cost.predict_seconds = timed([&] { s.predictions = test_.features.col(0); });
      s.cost.size_bytes = sizeof(double);
    } else if (name == "snaive") {
      const int period = series_.period().value_or(estimate_period(as_span(train_.targets)));
      s.cost.predict_seconds = timed([&] {
        for (Eigen::Index r = 0; r < n; ++r) {
          const std::size_t target = p + test_.row_ids[static_cast<std::size_t>(r)];
          s.predictions(r) = y[target >= static_cast<std::size_t>(period) ? target - period : 0];
        }
      });
      s.cost.size_bytes = sizeof(double) * static_cast<std::size_t>(period);
    } else if (name == "ses") {
      const auto& tr = train_.targets;
      double best_alpha = 1.0;
      double best_sse = std::numeric_limits<double>::infinity();
      for (int k = 1; k <= 100; ++k) {
        const double a = k / 100.0;
        double level = tr(0), sse = 0.0;
        for (Eigen::Index t = 1; t < tr.size(); ++t) {
          sse += (tr(t) - level) * (tr(t) - level);
          level = a * tr(t) + (1.0 - a) * level;
        }
        if (sse < best_sse) {
          best_sse = sse;
          best_alpha = a;
        }
      }
      double level = tr(0);
      for (Eigen::Index t = 1; t < tr.size(); ++t) level = best_alpha * tr(t) + (1.0 - best_alpha) * level;
      s.cost.predict_seconds = timed([&] {
        for (Eigen::Index r = 0; r < n; ++r) {
          s.predictions(r) = level;
          level = best_alpha * test_.targets(r) + (1.0 - best_alpha) * level;
        }
      });
      s.cost.size_bytes = 2 * sizeof(double);
    } else {
      throw std::invalid_argument("unknown baseline '" + name + "'");
    }
    if (!config_.profile) s.cost = {};
    return s;
  }

  const ExperimentConfig& config_;
  std::span<const LearnerSpec> specs_;
  const TimeSeries& series_;
  EmbeddedDataset train_;
  EmbeddedDataset test_;
  Lazy<Portfolio> portfolio_;
  Lazy<ExpertStream> oob_;
  Lazy<ExpertStream> test_stream_;
  std::map<CombinerKind, Lazy<TeacherState>> teachers_;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

std::optional<ResultRecord> read_record(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return nlohmann::json::parse(in).get<ResultRecord>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

void to_json(nlohmann::json& j, const ResultRecord& r) {
  auto artifacts = nlohmann::json::array();
  for (const auto& a : r.artifacts) {
    artifacts.push_back({{"artifact", a.artifact},
                         {"hash", hex(a.fingerprint.hash)},
                         {"rows", a.fingerprint.rows},
                         {"first_row", a.fingerprint.first_row},
                         {"last_row", a.fingerprint.last_row}});
  }
  j = {{"method", r.method},
       {"series", r.series},
       {"repetition", r.repetition},
       {"mase", r.mase},
       {"cost", {{"predict_seconds", r.cost.predict_seconds}, {"size_bytes", r.cost.size_bytes}}},
       {"train", r.train},
       {"test", r.test},
       {"artifacts", artifacts},
       {"provenance", {{"config_hash", r.config_hash}, {"seed", r.seed}, {"code_version", r.code_version}}}};
}

void from_json(const nlohmann::json& j, ResultRecord& r) {
  r.method = j.at("method").get<std::string>();
  r.series = j.at("series").get<std::string>();
  r.repetition = j.at("repetition").get<std::size_t>();
  r.mase = j.at("mase").get<double>();
  r.cost.predict_seconds = j.at("cost").at("predict_seconds").get<double>();
  r.cost.size_bytes = j.at("cost").at("size_bytes").get<std::size_t>();
  r.train = j.at("train").get<IndexRange>();
  r.test = j.at("test").get<IndexRange>();
  r.artifacts.clear();
  for (const auto& a : j.at("artifacts")) {
    TrainFingerprint f;
    f.hash = parse_hex(a.at("hash").get<std::string>());
    f.rows = a.at("rows").get<std::size_t>();
    f.first_row = a.at("first_row").get<std::size_t>();
    f.last_row = a.at("last_row").get<std::size_t>();
    r.artifacts.push_back({a.at("artifact").get<std::string>(), f});
  }
  const auto& p = j.at("provenance");
  r.config_hash = p.at("config_hash").get<std::string>();
  r.seed = p.at("seed").get<std::uint64_t>();
  r.code_version = p.at("code_version").get<std::string>();
}

bool leakage_free(const ResultRecord& record) {
  if (record.train.empty() || record.test.empty()) return false;
  if (record.train.end > record.test.begin) return false;
  for (const auto& a : record.artifacts) {
    const auto& f = a.fingerprint;
    if (f.rows == 0) return false;
    if (f.rows > record.train.size()) return false;
    if (f.first_row < record.train.begin || f.last_row >= record.train.end) return false;
  }
  return true;
}

std::string record_key(std::uint64_t config_hash, const TimeSeries& series, std::size_t repetition,
                       const std::string& method) {
  std::uint64_t h = mix_seed(config_hash, series_hash(series));
  h = mix_seed(h, repetition);
  h = mix_seed(h, hash_string(method));
  return hex(h);
}

RunSummary run_experiment(const ExperimentConfig& config, std::ostream* log) {
  auto corpus = load_corpus(config.corpus_path, config.min_length, log);
  auto summary = run_experiment(config, corpus.series, log);
  summary.rejected = std::move(corpus.rejected);
  return summary;
}

RunSummary run_experiment(const ExperimentConfig& config, std::span<const TimeSeries> corpus, std::ostream* log) {
  if (corpus.empty()) throw std::runtime_error("empty corpus");
  const auto hash = config_hash(config);
  const auto hash_hex = hex(hash);
  const auto records_dir = config.output_dir / "records";
  const auto quarantine_dir = config.output_dir / "quarantine";
  fs::create_directories(records_dir);
  std::ofstream(config.output_dir / "config.ini") << format_config(config);

  const auto labels = method_labels(config);
  std::vector<MethodLabel> parsed;
  for (const auto& l : labels) parsed.push_back(parse_label(l));
  const auto specs = resolve_portfolio(config);

  RunSummary summary;
  auto fail = [&](const std::string& key, const std::string& method, const TimeSeries& series, std::size_t rep,
                  const std::string& reason) {
    summary.failures.push_back({method, series.id(), rep, reason});
    if (log) *log << "FAILED " << method << " on " << series.id() << " rep " << rep << ": " << reason << '\n';
    fs::create_directories(quarantine_dir);
    write_json(quarantine_dir / (key + ".json"),
               {{"method", method}, {"series", series.id()}, {"repetition", rep}, {"reason", reason}});
  };

  for (const auto& series : corpus) {
    const auto seed = mix_seed(config.seed, hash_string(series.id()));
    EmbeddedDataset data;
    HoldoutPlan plan;
    try {
      data = embed(series, config.lag);
      plan = repeated_holdout(data.rows(), config.reps, config.train_frac, config.test_frac, seed);
    } catch (const std::exception& e) {
      for (std::size_t rep = 0; rep < config.reps; ++rep) {
        for (const auto& l : labels) fail(record_key(hash, series, rep, l), l, series, rep, e.what());
      }
      continue;
    }
    if (log) *log << "series " << series.id() << " (" << data.rows() << " rows)\n";

    for (std::size_t rep = 0; rep < plan.repetitions.size(); ++rep) {
      const auto& split = plan.repetitions[rep];
      Unit unit(config, specs, series, data, split);
      for (std::size_t li = 0; li < labels.size(); ++li) {
        const auto& label = labels[li];
        const auto key = record_key(hash, series, rep, label);
        const auto path = records_dir / (key + ".json");
        if (auto existing = read_record(path);
            existing && existing->method == label && existing->series == series.id() && existing->repetition == rep &&
            existing->config_hash == hash_hex) {
          summary.records.push_back(std::move(*existing));
          ++summary.reused;
          continue;
        }
        try {
          auto scored = unit.evaluate(parsed[li]);
          ResultRecord r;
          r.method = label;
          r.series = series.id();
          r.repetition = rep;
          r.mase = mase(as_span(scored.predictions), as_span(unit.test_data().targets),
                        naive_scale(as_span(unit.train_data().targets)));
          r.cost = scored.cost;
          r.train = split.train;
          r.test = split.test;
          r.artifacts = std::move(scored.artifacts);
          r.config_hash = hash_hex;
          r.seed = seed;
          if (!leakage_free(r)) throw std::runtime_error("leakage guard: artifact fitted outside the train range");
          write_json(path, r);
          fs::remove(quarantine_dir / (key + ".json"));
          summary.records.push_back(std::move(r));
          ++summary.computed;
        } catch (const std::exception& e) {
          fail(key, label, series, rep, e.what());
        }
      }
    }
  }
  if (log) {
    *log << "computed " << summary.computed << ", reused " << summary.reused << ", failed "
         << summary.failures.size() << '\n';
  }
  return summary;
}

std::vector<ResultRecord> load_records(const fs::path& output_dir) {
  std::vector<fs::path> files;
  const auto dir = output_dir / "records";
  if (!fs::is_directory(dir)) return {};
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ResultRecord> out;
  for (const auto& f : files) {
    auto r = read_record(f);
    if (!r) throw std::runtime_error("unreadable record " + f.string());
    out.push_back(std::move(*r));
  }
  return out;
}

ScoreMatrix score_matrix(std::span<const ResultRecord> records) {
  ScoreMatrix m;
  for (const auto& r : records) m.set(r.method, {r.series, r.repetition}, r.mase);
  return m;
}

std::vector<double> paired_differences(std::span<const ResultRecord> records, const std::string& a,
                                       const std::string& b) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_series;
  for (const auto& r : records) {
    if (r.method == a) by_series[r.series].first.push_back(r.mase);
    if (r.method == b) by_series[r.series].second.push_back(r.mase);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  std::vector<double> out;
  for (const auto& [series, pair] : by_series) {
    if (pair.first.empty() || pair.second.empty()) continue;
    out.push_back(percentage_difference(mean(pair.first), mean(pair.second)));
  }
  return out;
}

}  // namespace tscompress
