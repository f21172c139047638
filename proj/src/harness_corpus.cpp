#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "tscompress/harness.hpp"
#include "tscompress/random.hpp"

namespace tscompress {

Corpus load_corpus(const std::filesystem::path& path, std::size_t min_length, std::ostream* log) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }

  Corpus corpus;
  auto reject = [&](const fs::path& file, std::string reason) {
    if (log) *log << "skip " << file.string() << ": " << reason << '\n';
    corpus.rejected.push_back({file, std::move(reason)});
  };
  for (const auto& file : files) {
    try {
      auto series = read_series_csv(file);
      if (series.size() < min_length) {
        reject(file, "below minimum length (" + std::to_string(series.size()) + " < " + std::to_string(min_length) + ")");
        continue;
      }
      const bool duplicate = std::any_of(corpus.series.begin(), corpus.series.end(),
                                         [&](const TimeSeries& s) { return s.id() == series.id(); });
      if (duplicate) {
        reject(file, "duplicate series id '" + series.id() + "'");
        continue;
      }
      corpus.series.push_back(std::move(series));
    } catch (const std::exception& e) {
      reject(file, e.what());
    }
  }
  if (corpus.series.empty()) throw std::runtime_error("empty corpus");
  return corpus;
}

std::vector<TimeSeries> synthetic_suite(const SyntheticOptions& options) {
  constexpr std::size_t burn_in = 100;
  constexpr int periods[] = {7, 12, 24};
  std::vector<TimeSeries> out;
  for (std::size_t i = 0; i < options.count; ++i) {
    Rng rng(mix_seed(options.seed, i));
    const int period = periods[rng.index(3)];
    const double amplitude = 1.0 + 3.0 * rng.uniform();
    const double phase = 2.0 * M_PI * rng.uniform();
    const double switch_prob = 0.005 + 0.015 * rng.uniform();

    // Two stationary AR(2) regimes with different dynamics and noise levels.
    struct Regime {
      double phi1, phi2, mean, sd;
    };
    const Regime regimes[2] = {
        {0.3 + 0.5 * rng.uniform(), -0.2 + 0.3 * rng.uniform(), 0.0, 0.5 + 0.5 * rng.uniform()},
        {-0.4 + 0.6 * rng.uniform(), -0.4 + 0.3 * rng.uniform(), 2.0 + 4.0 * rng.uniform(), 1.0 + rng.uniform()},
    };

    std::size_t state = 0;
    double x1 = 0.0, x2 = 0.0;
    std::vector<double> values;
    values.reserve(options.length);
    for (std::size_t t = 0; t < options.length + burn_in; ++t) {
      if (rng.uniform() < switch_prob) state = 1 - state;
      const auto& r = regimes[state];
      const double x = r.mean * (1.0 - r.phi1 - r.phi2) + r.phi1 * x1 + r.phi2 * x2 + r.sd * rng.normal();
      x2 = x1;
      x1 = x;
      if (t < burn_in) continue;
      const double angle = 2.0 * M_PI * static_cast<double>(t) / period + phase;
      values.push_back(10.0 + x + amplitude * std::sin(angle) + 0.3 * amplitude * std::cos(2.0 * angle));
    }
    char id[32];
    std::snprintf(id, sizeof id, "synth_%02zu", i);
    out.emplace_back(id, std::move(values), period);
  }
  return out;
}

void write_corpus(const std::filesystem::path& dir, std::span<const TimeSeries> series) {
  std::filesystem::create_directories(dir);
  for (const auto& s : series) write_series_csv(dir / (s.id() + ".csv"), s);
}

}  // namespace tscompress
