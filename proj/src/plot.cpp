#include "ffnlab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ffnlab {

RunCurve load_run_csv(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read run csv: " + path);
  RunCurve curve;
  curve.name = name;
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,", 0) != 0)
    throw std::runtime_error("malformed run csv (missing header): " + path);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    StepLog log;
    char comma;
    std::istringstream row(line);
    if (!(row >> log.step >> comma >> log.tokens >> comma >> log.loss >>
          comma >> log.lr >> comma >> log.wall_ms))
      throw std::runtime_error("malformed run csv at " + path + ":" +
                               std::to_string(line_no));
    curve.steps.push_back(log);
  }
  if (curve.steps.empty())
    throw std::runtime_error("run csv has no rows: " + path);
  return curve;
}

void write_run_csv(const RunRecord& record, const std::string& path,
                   int log_stride) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run csv: " + path);
  out << "step,tokens,loss,lr,wall_ms\n";
  out.precision(10);
  for (size_t i = 0; i < record.steps.size(); ++i) {
    const StepLog& s = record.steps[i];
    if (log_stride > 1 && s.step % log_stride != 0 &&
        i + 1 != record.steps.size())
      continue;
    out << s.step << "," << s.tokens << "," << s.loss << "," << s.lr << ","
        << s.wall_ms << "\n";
  }
}

void write_merged_csv(const std::vector<RunCurve>& curves,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write merged csv: " + path);
  out << "run,step,tokens,loss,lr,wall_ms\n";
  out.precision(10);
  for (const auto& c : curves)
    for (const auto& s : c.steps)
      out << c.name << "," << s.step << "," << s.tokens << "," << s.loss
          << "," << s.lr << "," << s.wall_ms << "\n";
}

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                          "#bcbd22", "#17becf"};

}  // namespace

void write_loss_svg(const std::vector<RunCurve>& curves,
                    const std::string& path) {
  if (curves.empty()) throw std::invalid_argument("plot: no curves");
  double min_loss = 1e300, max_loss = 0.0;
  int64_t max_tokens = 1;
  for (const auto& c : curves)
    for (const auto& s : c.steps) {
      if (s.loss > 0.0) {
        min_loss = std::min(min_loss, s.loss);
        max_loss = std::max(max_loss, s.loss);
      }
      max_tokens = std::max(max_tokens, s.tokens);
    }
  if (max_loss <= 0.0) throw std::runtime_error("plot: no positive losses");
  double lo = std::log10(min_loss) - 0.05, hi = std::log10(max_loss) + 0.05;
  if (hi - lo < 0.1) {
    lo -= 0.05;
    hi += 0.05;
  }

  const double width = 860, height = 520;
  const double ml = 70, mr = 200, mt = 30, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto xpos = [&](int64_t tokens) {
    return ml + pw * static_cast<double>(tokens) /
                    static_cast<double>(max_tokens);
  };
  auto ypos = [&](double loss) {
    return mt + ph * (hi - std::log10(loss)) / (hi - lo);
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write svg: " + path);
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" data-yscale=\"log\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << ml << "\" y=\"18\" font-size=\"14\">training loss "
      << "(log scale) vs tokens</text>\n";

  // y ticks at 1-2-5 positions within the log range
  for (int e = static_cast<int>(std::floor(lo)) - 1;
       e <= static_cast<int>(std::ceil(hi)); ++e)
    for (double mant : {1.0, 2.0, 5.0}) {
      double v = mant * std::pow(10.0, e);
      double lv = std::log10(v);
      if (lv < lo || lv > hi) continue;
      double y = ypos(v);
      out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\""
          << (ml + pw) << "\" y2=\"" << y
          << "\" stroke=\"#dddddd\" class=\"ytick\" data-loss=\"" << v
          << "\"/>\n";
      out << "<text x=\"" << (ml - 6) << "\" y=\"" << (y + 4)
          << "\" font-size=\"11\" text-anchor=\"end\" class=\"ytick-label\">"
          << v << "</text>\n";
    }
  // x ticks
  for (int i = 0; i <= 5; ++i) {
    int64_t t = max_tokens * i / 5;
    double x = xpos(t);
    out << "<line x1=\"" << x << "\" y1=\"" << (mt + ph) << "\" x2=\"" << x
        << "\" y2=\"" << (mt + ph + 5) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << (mt + ph + 20)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* color = kPalette[i % 10];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.2\" data-run=\"" << c.name << "\" points=\"";
    for (const auto& s : c.steps)
      if (s.loss > 0.0) out << xpos(s.tokens) << "," << ypos(s.loss) << " ";
    out << "\"/>\n";
    double ly = mt + 16 + 16 * static_cast<double>(i);
    out << "<rect x=\"" << (ml + pw + 10) << "\" y=\"" << (ly - 9)
        << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << (ml + pw + 27) << "\" y=\"" << (ly + 1)
        << "\" font-size=\"12\">" << c.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ffnlab
