#include "texton/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace texton {

namespace {
constexpr const char* kAblationHeader =
    "deepten,gap,histogram,fap,mean_acc,std_acc,n_splits";
}

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationCell>& cells) {
  std::ofstream out(path);
  if (!out) throw IoError("report: cannot create " + path.string());
  out << kAblationHeader << '\n';
  for (const auto& cell : cells) {
    if (cell.failed || cell.mask == 0) continue;
    const auto flags = MethodSelection::from_mask(cell.mask).flags();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.17g,%.17g,%d", flags[0] ? 1 : 0,
                  flags[1] ? 1 : 0, flags[2] ? 1 : 0, flags[3] ? 1 : 0,
                  cell.mean_acc, cell.std_acc, cell.n_splits);
    out << buf << '\n';
  }
  if (!out) throw IoError("report: write failed for " + path.string());
}

std::vector<AblationCell> read_ablation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("report: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("report: empty file " + path.string());
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
    line.pop_back();
  if (line != kAblationHeader)
    throw IoError("report: " + path.string() + " has header '" + line +
                  "', expected '" + kAblationHeader + "'");
  std::vector<AblationCell> cells;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int f[4];
    double mean = 0, stdev = 0;
    int n = 0;
    char c;
    if (!(ls >> f[0] >> c >> f[1] >> c >> f[2] >> c >> f[3] >> c >> mean >> c >>
          stdev >> c >> n))
      throw IoError("report: " + path.string() + ":" + std::to_string(lineno) +
                    ": malformed row");
    AblationCell cell;
    MethodSelection sel;
    sel.deepten = f[0];
    sel.gap = f[1];
    sel.histogram = f[2];
    sel.fap = f[3];
    cell.mask = sel.mask();
    if (cell.mask == 0)
      throw IoError("report: " + path.string() + ":" + std::to_string(lineno) +
                    ": row selects no methods");
    cell.mean_acc = mean;
    cell.std_acc = stdev;
    cell.n_splits = n;
    cells.push_back(cell);
  }
  return cells;
}

void write_importance_csv(const std::filesystem::path& path,
                          const ImportanceReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("report: cannot create " + path.string());
  out << "method,importance,rank\n";
  std::vector<int> rank_of(report.feature_names.size(), 0);
  for (std::size_t pos = 0; pos < report.majority_order.size(); ++pos)
    rank_of[static_cast<std::size_t>(report.majority_order[pos])] =
        static_cast<int>(pos) + 1;
  for (std::size_t f = 0; f < report.feature_names.size(); ++f) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%d", report.feature_names[f].c_str(),
                  report.importance[f], rank_of[f]);
    out << buf << '\n';
  }
  if (!out) throw IoError("report: write failed for " + path.string());
}

void write_importance_svg(const std::filesystem::path& path,
                          const ImportanceReport& report) {
  const int n = static_cast<int>(report.feature_names.size());
  const int width = 120 * n + 60, height = 300;
  const int base_y = 250, max_bar = 200, bar_w = 80;
  double peak = 0;
  for (double v : report.importance) peak = std::max(peak, v);
  if (peak <= 0) peak = 1;

  std::ofstream out(path);
  if (!out) throw IoError("report: cannot create " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "  <line x1=\"40\" y1=\"" << base_y << "\" x2=\"" << (width - 20)
      << "\" y2=\"" << base_y << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  for (int f = 0; f < n; ++f) {
    const double v = report.importance[static_cast<std::size_t>(f)];
    const int bar_h = std::max(1, static_cast<int>(std::lround(v / peak * max_bar)));
    const int x = 60 + f * 120;
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "  <rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                  "fill=\"#4a7fb5\"/>\n",
                  x, base_y - bar_h, bar_w, bar_h);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "  <text x=\"%d\" y=\"%d\" text-anchor=\"middle\" "
                  "font-family=\"sans-serif\" font-size=\"14\">%s</text>\n",
                  x + bar_w / 2, base_y + 20,
                  report.feature_names[static_cast<std::size_t>(f)].c_str());
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "  <text x=\"%d\" y=\"%d\" text-anchor=\"middle\" "
                  "font-family=\"sans-serif\" font-size=\"12\">%.3f</text>\n",
                  x + bar_w / 2, base_y - bar_h - 6, v);
    out << buf;
  }
  out << "</svg>\n";
  if (!out) throw IoError("report: write failed for " + path.string());
}

std::string ablation_summary(const std::vector<AblationCell>& cells) {
  std::ostringstream os;
  os << "method combination grid (mean +/- std over splits):\n";
  for (const auto& cell : cells) {
    if (cell.mask == 0) continue;
    const std::string name = MethodSelection::from_mask(cell.mask).to_string();
    if (cell.failed) {
      os << "  " << name << ": FAILED (" << cell.error << ")\n";
      continue;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-30s %.4f +/- %.4f over %d splits%s\n",
                  name.c_str(), cell.mean_acc, cell.std_acc, cell.n_splits,
                  cell.mask == kProposedMask ? "   <- proposed ensemble" : "");
    os << buf;
  }
  return os.str();
}

}  // namespace texton
