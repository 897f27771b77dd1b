#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rmldp/error.hpp"
#include "rmldp/harness.hpp"

namespace rmldp {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

const std::string& csv_field(const std::string& s) {
  if (s.find_first_of(",\n\"") != std::string::npos) {
    throw IoError("identifier '" + s + "' cannot be written to CSV");
  }
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class F>
void for_each_csv_row(const std::filesystem::path& path, const std::string& header, F&& f) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw IoError(path.string() + ": expected header '" + header + "'");
  }
  const std::size_t columns = split_csv(header).size();
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != columns) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": expected " +
                    std::to_string(columns) + " columns");
    }
    try {
      f(cells);
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

const char* kResultsHeader = "seed,method,segment_id,category,mape,representation";
const char* kSweepHeader = "seed,window,category,mape";

std::string mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return fmt::format("{:.4f}", v.empty() ? 0.0 : s / static_cast<double>(v.size()));
}

}  // namespace

double mean_mape(const RunReport& report, const std::string& method, std::optional<std::uint64_t> seed) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& r : report.segments) {
    if (r.method == method && (!seed || r.seed == *seed)) {
      s += r.mape;
      ++n;
    }
  }
  if (n == 0) throw DataError("no results for method " + method);
  return s / static_cast<double>(n);
}

std::vector<CategoryRow> category_means(const RunReport& report) {
  std::vector<CategoryRow> out;
  std::set<std::string> categories;
  for (const auto& r : report.segments) categories.insert(r.category);
  for (std::uint64_t seed : report.seeds) {
    for (const auto& m : report.methods) {
      for (const auto& c : categories) {
        double s = 0;
        std::size_t n = 0;
        for (const auto& r : report.segments) {
          if (r.seed == seed && r.method == m && r.category == c) {
            s += r.mape;
            ++n;
          }
        }
        if (n > 0) out.push_back({seed, m, c, n, s / static_cast<double>(n)});
      }
    }
  }
  return out;
}

std::vector<MethodRow> method_summary(const RunReport& report) {
  std::vector<MethodRow> out;
  for (const auto& m : report.methods) {
    MethodRow row;
    row.method = m;
    for (std::uint64_t seed : report.seeds) row.seed_means.push_back(mean_mape(report, m, seed));
    double s = 0;
    for (double x : row.seed_means) s += x;
    row.mean = s / static_cast<double>(row.seed_means.size());
    out.push_back(row);
  }
  return out;
}

std::vector<SignificanceRow> significance_table(const RunReport& report) {
  std::vector<SignificanceRow> out;
  if (report.methods.size() < 2) return out;
  const std::string& a = report.methods.front();
  using Key = std::pair<std::uint64_t, std::string>;
  auto by_key = [&](const std::string& m) {
    std::map<Key, double> table;
    for (const auto& r : report.segments) {
      if (r.method == m) table[{r.seed, r.segment_id}] = r.mape;
    }
    return table;
  };
  const auto ta = by_key(a);
  for (std::size_t k = 1; k < report.methods.size(); ++k) {
    const auto tb = by_key(report.methods[k]);
    std::vector<double> xa, xb;
    for (const auto& [key, v] : ta) {
      auto it = tb.find(key);
      if (it != tb.end()) {
        xa.push_back(v);
        xb.push_back(it->second);
      }
    }
    if (xa.size() < 2) continue;
    out.push_back({a, report.methods[k], paired_t_test(xa, xb)});
  }
  return out;
}

void write_results(const std::filesystem::path& path, const std::vector<SegmentResult>& rows) {
  auto out = open_out(path);
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    std::string rep;
    for (std::size_t i = 0; i < r.representation.size(); ++i) {
      rep += fmt::format("{}{}", i ? " " : "", r.representation[i]);
    }
    out << fmt::format("{},{},{},{},{},{}\n", r.seed, csv_field(r.method), csv_field(r.segment_id),
                       csv_field(r.category), r.mape, rep);
  }
}

std::vector<SegmentResult> read_results(const std::filesystem::path& path) {
  std::vector<SegmentResult> out;
  for_each_csv_row(path, kResultsHeader, [&](const std::vector<std::string>& c) {
    SegmentResult r;
    r.seed = std::stoull(c[0]);
    r.method = c[1];
    r.segment_id = c[2];
    r.category = c[3];
    r.mape = std::stod(c[4]);
    std::stringstream ss(c[5]);
    double v;
    while (ss >> v) r.representation.push_back(v);
    out.push_back(std::move(r));
  });
  return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<SegmentResult>& rows) {
  auto out = open_out(path);
  out << "seed,method,segment_id,category,t_c,prediction,actual\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
      out << fmt::format("{},{},{},{},{},{},{}\n", r.seed, csv_field(r.method), csv_field(r.segment_id),
                         csv_field(r.category), r.t_c.at(i), r.predictions[i], r.actuals.at(i));
    }
  }
}

void write_sweep(const std::filesystem::path& path, const std::vector<SweepPoint>& rows) {
  auto out = open_out(path);
  out << kSweepHeader << '\n';
  for (const auto& p : rows) out << fmt::format("{},{},{},{}\n", p.seed, p.window, csv_field(p.category), p.mape);
}

std::vector<SweepPoint> read_sweep(const std::filesystem::path& path) {
  std::vector<SweepPoint> out;
  for_each_csv_row(path, kSweepHeader, [&](const std::vector<std::string>& c) {
    out.push_back({std::stoull(c[0]), std::stoul(c[1]), c[2], std::stod(c[3])});
  });
  return out;
}

void write_report(const std::filesystem::path& dir, const RunReport& report) {
  std::filesystem::create_directories(dir);
  open_out(dir / "config.txt") << report.config;
  write_results(dir / "segments.csv", report.segments);
  if (std::any_of(report.segments.begin(), report.segments.end(),
                  [](const SegmentResult& r) { return !r.predictions.empty(); })) {
    write_predictions(dir / "predictions.csv", report.segments);
  }

  const auto categories = category_means(report);
  {
    auto out = open_out(dir / "categories.csv");
    out << "seed,method,category,segments,mean_mape\n";
    for (const auto& c : categories) {
      out << fmt::format("{},{},{},{},{}\n", c.seed, c.method, c.category, c.segments, c.mean_mape);
    }
  }
  const auto methods = method_summary(report);
  {
    auto out = open_out(dir / "methods.csv");
    out << "method";
    for (auto s : report.seeds) out << ",seed_" << s;
    out << ",mean\n";
    for (const auto& m : methods) {
      out << m.method;
      for (double v : m.seed_means) out << fmt::format(",{}", v);
      out << fmt::format(",{}\n", m.mean);
    }
  }
  const auto sig = significance_table(report);
  {
    auto out = open_out(dir / "significance.csv");
    out << "method_a,method_b,pairs,mean_diff,t,p\n";
    for (const auto& s : sig) {
      out << fmt::format("{},{},{},{},{},{}\n", s.method_a, s.method_b, s.test.n, s.test.mean_diff, s.test.t,
                         s.test.p);
    }
  }
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> sweep_mean;
  for (const auto& p : report.sweep) sweep_mean[{p.window, p.category}].push_back(p.mape);
  if (!report.sweep.empty()) {
    write_sweep(dir / "sweep.csv", report.sweep);
    auto out = open_out(dir / "sweep_mean.csv");
    out << "window,category,mape\n";
    for (const auto& [key, v] : sweep_mean) out << fmt::format("{},{},{}\n", key.first, key.second, mean_of(v));
  }
  {
    auto out = open_out(dir / "representations.csv");
    out << "seed,method,segment_id,category,q\n";
    for (const auto& r : report.segments) {
      if (r.representation.empty()) continue;
      out << fmt::format("{},{},{},{},", r.seed, r.method, r.segment_id, r.category);
      for (std::size_t i = 0; i < r.representation.size(); ++i) {
        out << fmt::format("{}{}", i ? " " : "", r.representation[i]);
      }
      out << '\n';
    }
  }

  auto md = open_out(dir / "report.md");
  md << "# Target-segment MAPE\n\n";
  md << "Seeds:";
  for (auto s : report.seeds) md << ' ' << s;
  md << "\n\n## Methods (mean MAPE %, lower is better)\n\n| method |";
  for (auto s : report.seeds) md << " seed " << s << " |";
  md << " mean |\n|---|";
  for (std::size_t i = 0; i <= report.seeds.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& m : methods) {
    md << "| " << m.method << " |";
    for (double v : m.seed_means) md << fmt::format(" {:.4f} |", v);
    md << fmt::format(" {:.4f} |\n", m.mean);
  }

  std::set<std::string> cats;
  for (const auto& c : categories) cats.insert(c.category);
  md << "\n## Per category (mean over seeds of the category mean)\n\n| method |";
  for (const auto& c : cats) md << ' ' << c << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < cats.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& m : report.methods) {
    md << "| " << m << " |";
    for (const auto& c : cats) {
      std::vector<double> v;
      for (const auto& row : categories) {
        if (row.method == m && row.category == c) v.push_back(row.mean_mape);
      }
      md << ' ' << mean_of(v) << " |";
    }
    md << '\n';
  }

  if (!sig.empty()) {
    md << "\n## Paired t-test on per-segment MAPE\n\n| a | b | pairs | mean(a-b) | t | p |\n|---|---|---|---|---|---|\n";
    for (const auto& s : sig) {
      md << fmt::format("| {} | {} | {} | {:.4f} | {:.4f} | {:.3g} |\n", s.method_a, s.method_b, s.test.n,
                        s.test.mean_diff, s.test.t, s.test.p);
    }
  }

  if (!report.sweep.empty()) {
    md << "\n## Sequence length sweep (rmldp, mean over seeds)\n\n| window |";
    std::set<std::string> sweep_cats;
    std::set<std::size_t> windows;
    for (const auto& [key, v] : sweep_mean) {
      windows.insert(key.first);
      sweep_cats.insert(key.second);
    }
    for (const auto& c : sweep_cats) md << ' ' << c << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < sweep_cats.size(); ++i) md << "---|";
    md << '\n';
    for (std::size_t w : windows) {
      md << "| " << w << " |";
      for (const auto& c : sweep_cats) {
        auto it = sweep_mean.find({w, c});
        md << ' ' << (it == sweep_mean.end() ? std::string("-") : mean_of(it->second)) << " |";
      }
      md << '\n';
    }
  }
  md << "\n## Configuration\n\n```\n" << report.config << "```\n";
}

void write_timing(const std::filesystem::path& dir, const RunReport& report) {
  auto out = open_out(dir / "timing.txt");
  for (const auto& [stage, s] : report.runtime_seconds) out << fmt::format("{} {:.3f}\n", stage, s);
}

}  // namespace rmldp
