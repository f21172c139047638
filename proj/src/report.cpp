#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tscompress/harness.hpp"

namespace tscompress {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string role_name(MethodRole role) {
  switch (role) {
    case MethodRole::teacher: return "teacher";
    case MethodRole::student: return "student";
    case MethodRole::raw_control: return "raw";
    case MethodRole::baseline: return "baseline";
  }
  return "unknown";
}

std::string role_color(MethodRole role) {
  switch (role) {
    case MethodRole::student: return "#d95f02";
    case MethodRole::teacher: return "#1b9e77";
    case MethodRole::raw_control: return "#7570b3";
    case MethodRole::baseline: return "#999999";
  }
  return "#000000";
}

void write_rank_svg(const fs::path& path, const std::vector<RankSummary>& ranks, std::size_t k) {
  const int row_h = 22, left = 220, width = 640, top = 30;
  const int height = top + row_h * static_cast<int>(ranks.size()) + 40;
  const double scale = (width - left - 30) / std::max(1.0, static_cast<double>(k));
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << left << "\" y=\"18\">Average rank (whiskers: one standard deviation)</text>\n";
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    const auto& r = ranks[i];
    const int y = top + row_h * static_cast<int>(i);
    const double w = r.mean_rank * scale;
    const auto color = role_color(parse_label(r.method).role);
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + 15 << "\" text-anchor=\"end\">" << xml_escape(r.method)
        << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << y + 3 << "\" width=\"" << short_num(w) << "\" height=\"" << row_h - 6
        << "\" fill=\"" << color << "\"/>\n";
    const double lo = std::max(0.0, (r.mean_rank - r.sd_rank) * scale);
    const double hi = (r.mean_rank + r.sd_rank) * scale;
    out << "<line x1=\"" << short_num(left + lo) << "\" x2=\"" << short_num(left + hi) << "\" y1=\"" << y + row_h / 2
        << "\" y2=\"" << y + row_h / 2 << "\" stroke=\"black\"/>\n";
  }
  const int axis_y = top + row_h * static_cast<int>(ranks.size()) + 5;
  out << "<line x1=\"" << left << "\" x2=\"" << short_num(left + k * scale) << "\" y1=\"" << axis_y << "\" y2=\""
      << axis_y << "\" stroke=\"black\"/>\n";
  for (std::size_t t = 1; t <= k; ++t) {
    out << "<text x=\"" << short_num(left + t * scale) << "\" y=\"" << axis_y + 15 << "\" text-anchor=\"middle\">" << t
        << "</text>\n";
  }
  out << "</svg>\n";
}

struct CostRow {
  std::string student;
  std::string teacher;
  std::string series;
  std::size_t repetition;
  double time_ratio;
  double size_ratio;
};

void write_cost_svg(const fs::path& path, const std::vector<std::string>& students,
                    const std::vector<CostRow>& rows) {
  const int row_h = 24, left = 240, panel = 300, top = 40;
  const int width = left + 2 * panel + 20;
  const int height = top + row_h * static_cast<int>(students.size()) + 40;
  // Ratios are drawn as percentages on a log10 axis spanning 0.01% .. 1000%.
  auto x_of = [&](double ratio, int panel_left) {
    const double pct = std::clamp(ratio * 100.0, 1e-2, 1e3);
    return panel_left + (std::log10(pct) + 2.0) / 5.0 * (panel - 20);
  };
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << left << "\" y=\"18\">Student cost relative to teacher (%, log scale)</text>\n";
  out << "<text x=\"" << left << "\" y=\"34\">time</text><text x=\"" << left + panel << "\" y=\"34\">size</text>\n";
  for (std::size_t i = 0; i < students.size(); ++i) {
    const int y = top + row_h * static_cast<int>(i) + row_h / 2;
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << xml_escape(students[i])
        << "</text>\n";
    for (const auto& r : rows) {
      if (r.student != students[i]) continue;
      out << "<circle cx=\"" << short_num(x_of(r.time_ratio, left)) << "\" cy=\"" << y
          << "\" r=\"2\" fill=\"#d95f02\" fill-opacity=\"0.5\"/>\n";
      out << "<circle cx=\"" << short_num(x_of(r.size_ratio, left + panel)) << "\" cy=\"" << y
          << "\" r=\"2\" fill=\"#1b9e77\" fill-opacity=\"0.5\"/>\n";
    }
  }
  const int axis_y = top + row_h * static_cast<int>(students.size()) + 5;
  for (int p : {0, 1}) {
    const int pl = left + p * panel;
    for (int e = -2; e <= 3; ++e) {
      const double x = x_of(std::pow(10.0, e) / 100.0, pl);
      out << "<line x1=\"" << short_num(x) << "\" x2=\"" << short_num(x) << "\" y1=\"" << top << "\" y2=\"" << axis_y
          << "\" stroke=\"#dddddd\"/>\n";
      out << "<text x=\"" << short_num(x) << "\" y=\"" << axis_y + 15 << "\" text-anchor=\"middle\">"
          << short_num(std::pow(10.0, e)) << "</text>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace

ReportBundle emit_report(std::span<const ResultRecord> records, const fs::path& output_dir,
                         const ReportOptions& options) {
  if (records.empty()) throw std::invalid_argument("no records to report");
  const auto dir = output_dir / "report";
  fs::create_directories(dir);
  ReportBundle bundle;
  auto open = [&](const std::string& name) {
    bundle.files.push_back(dir / name);
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };

  const auto scores = score_matrix(records);
  {
    auto out = open("scores.csv");
    scores.write_csv(out);
  }

  std::vector<std::string> ranked;
  for (const auto& m : scores.methods()) {
    if (scores.complete(m)) {
      ranked.push_back(m);
    } else {
      bundle.notices.push_back("method '" + m + "' has missing cells and is excluded from ranking");
    }
  }
  std::sort(ranked.begin(), ranked.end());
  auto ranks = average_ranks(scores, ranked);
  std::stable_sort(ranks.begin(), ranks.end(),
                   [](const RankSummary& a, const RankSummary& b) { return a.mean_rank < b.mean_rank; });
  {
    auto out = open("ranks.csv");
    out << "method,role,mean_rank,sd_rank,columns\n";
    for (const auto& r : ranks) {
      out << r.method << ',' << role_name(parse_label(r.method).role) << ',' << num(r.mean_rank) << ','
          << num(r.sd_rank) << ',' << scores.columns().size() << '\n';
    }
  }
  bundle.files.push_back(dir / "ranks.svg");
  write_rank_svg(dir / "ranks.svg", ranks, ranked.size());

  nlohmann::json bayes_json = nlohmann::json::array();
  {
    auto out = open("bayes.csv");
    out << "method_a,method_b,p_win,p_rope,p_lose,series\n";
    if (ranked.size() < 2) {
      bundle.notices.push_back("fewer than two complete methods; Bayes sign-test matrix is empty");
    }
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      for (std::size_t j = 0; j < ranked.size(); ++j) {
        if (i == j) continue;
        const auto diffs = paired_differences(records, ranked[i], ranked[j]);
        if (diffs.empty()) continue;
        const auto r = bayes_sign_test(diffs, options.rope, options.mc_samples, options.prior_strength, options.seed);
        out << ranked[i] << ',' << ranked[j] << ',' << num(r.p_win) << ',' << num(r.p_rope) << ',' << num(r.p_lose)
            << ',' << diffs.size() << '\n';
        nlohmann::json entry = r;
        entry["method_a"] = ranked[i];
        entry["method_b"] = ranked[j];
        bayes_json.push_back(entry);
      }
    }
  }
  {
    auto out = open("bayes.json");
    out << bayes_json.dump(2) << '\n';
  }

  std::map<std::tuple<std::string, std::string, std::size_t>, const ResultRecord*> index;
  for (const auto& r : records) index[{r.method, r.series, r.repetition}] = &r;

  std::vector<CostRow> cost_rows;
  std::vector<std::string> students;
  for (const auto& r : records) {
    const auto label = parse_label(r.method);
    if (label.role != MethodRole::student) continue;
    const auto teacher = std::string(kind_name(*label.teacher));
    const auto it = index.find({teacher, r.series, r.repetition});
    if (it == index.end()) continue;
    const auto& t = it->second->cost;
    if (t.predict_seconds <= 0.0 || t.size_bytes == 0) continue;
    cost_rows.push_back({r.method, teacher, r.series, r.repetition, r.cost.predict_seconds / t.predict_seconds,
                         static_cast<double>(r.cost.size_bytes) / static_cast<double>(t.size_bytes)});
    if (std::find(students.begin(), students.end(), r.method) == students.end()) students.push_back(r.method);
  }
  std::sort(students.begin(), students.end());
  if (cost_rows.empty()) bundle.notices.push_back("no student/teacher cost pairs available");
  {
    auto out = open("cost_ratios.csv");
    out << "student,teacher,series,repetition,time_ratio,size_ratio\n";
    for (const auto& c : cost_rows) {
      out << c.student << ',' << c.teacher << ',' << c.series << ',' << c.repetition << ',' << num(c.time_ratio) << ','
          << num(c.size_ratio) << '\n';
    }
  }
  {
    auto out = open("cost_summary.csv");
    out << "student,median_time_ratio,median_size_ratio,pairs\n";
    for (const auto& s : students) {
      std::vector<double> t, z;
      for (const auto& c : cost_rows) {
        if (c.student != s) continue;
        t.push_back(c.time_ratio);
        z.push_back(c.size_ratio);
      }
      out << s << ',' << num(median(t)) << ',' << num(median(z)) << ',' << t.size() << '\n';
    }
  }
  bundle.files.push_back(dir / "cost_ratios.svg");
  write_cost_svg(dir / "cost_ratios.svg", students, cost_rows);

  {
    auto out = open("teaching_strategies.csv");
    out << "teacher,student,series,repetition,resubstitution_mase,oob_mase,pct_difference\n";
    std::size_t pairs = 0;
    for (const auto& r : records) {
      auto label = parse_label(r.method);
      if (label.role != MethodRole::student || label.strategy != TeachingStrategy::resubstitution) continue;
      label.strategy = TeachingStrategy::prequential_oob;
      const auto it = index.find({format_label(label), r.series, r.repetition});
      if (it == index.end()) continue;
      const double oob = it->second->mase;
      out << kind_name(*label.teacher) << ',' << label.student << ',' << r.series << ',' << r.repetition << ','
          << num(r.mase) << ',' << num(oob) << ',' << (oob > 0.0 ? num(percentage_difference(r.mase, oob)) : "")
          << '\n';
      ++pairs;
    }
    if (pairs == 0) bundle.notices.push_back("no resubstitution/out-of-bag student pairs; teaching comparison empty");
  }

  bundle.notices.push_back(
      "classical baselines are naive, seasonal naive and simple exponential smoothing; ARIMA, ETS and TBATS are not run");
  bundle.notices.push_back("percentage differences are 100*(MASE_b - MASE_a)/MASE_b; positive favours method_a");
  {
    auto out = open("summary.json");
    nlohmann::json j = {{"records", records.size()},
                        {"methods", scores.methods().size()},
                        {"columns", scores.columns().size()},
                        {"rope", {options.rope.lo, options.rope.hi}},
                        {"mc_samples", options.mc_samples},
                        {"prior_strength", options.prior_strength},
                        {"notices", bundle.notices}};
    out << j.dump(2) << '\n';
  }
  return bundle;
}

}  // namespace tscompress
