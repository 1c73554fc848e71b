// run.log -> SVG with the per-epoch loss curves and accuracy.
#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "supmae/error.hpp"
#include "supmae/run/runlog.hpp"

namespace {

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> pts;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// One panel at (x0, y0) of size w x h.
std::string panel(const std::string& title, const std::vector<Series>& series, double x0, double y0, double w,
                  double h) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  std::string out;
  out += "<text x=\"" + num(x0 + w / 2) + "\" y=\"" + num(y0 - 8) + "\" text-anchor=\"middle\">" + title + "</text>\n";
  out += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" fill=\"none\" stroke=\"#888\"/>\n";
  if (xmin > xmax) return out;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return x0 + (x - xmin) / (xmax - xmin) * w; };
  auto py = [&](double y) { return y0 + h - (y - ymin) / (ymax - ymin) * h; };
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    out += "<text x=\"" + num(x0 - 4) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\" font-size=\"10\">" +
           tick(y) + "</text>\n";
    const double x = xmin + (xmax - xmin) * i / 4.0;
    out += "<text x=\"" + num(px(x)) + "\" y=\"" + num(y0 + h + 14) + "\" text-anchor=\"middle\" font-size=\"10\">" +
           tick(x) + "</text>\n";
  }
  double ly = y0 + 14;
  for (const auto& s : series) {
    if (s.pts.empty()) continue;
    std::string pts;
    for (auto [x, y] : s.pts) pts += num(px(x)) + "," + num(py(y)) + " ";
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    out += "<text x=\"" + num(x0 + w - 6) + "\" y=\"" + num(ly) + "\" text-anchor=\"end\" font-size=\"11\" fill=\"" +
           s.color + "\">" + s.label + "</text>\n";
    ly += 14;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plot: run.log to SVG"};
  std::string in, out = "run.svg";
  app.add_option("log", in, "run.log path")->required();
  app.add_option("-o,--out", out, "SVG output path");
  CLI11_PARSE(app, argc, argv);

  std::ifstream f(in);
  if (!f) {
    std::cerr << "error: io: cannot read '" << in << "'\n";
    return 1;
  }
  Series joint{"joint", "#1f77b4", {}}, rec{"rec", "#2ca02c", {}}, cls{"cls", "#d62728", {}};
  Series acc{"accuracy", "#9467bd", {}};
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty() || line.find("\"kind\":\"epoch\"") == std::string::npos) continue;
      const auto r = supmae::run::parse_record(line);
      const double x = static_cast<double>(r.epoch + 1);
      joint.pts.emplace_back(x, r.loss_joint);
      if (r.mode == "pretrain") {
        rec.pts.emplace_back(x, r.loss_rec);
        cls.pts.emplace_back(x, r.loss_cls);
      }
      if (r.accuracy) acc.pts.emplace_back(x, *r.accuracy);
    }
  } catch (const supmae::Error& e) {
    std::cerr << "error: " << supmae::category_name(e.category()) << ": line " << line_no << ": " << e.what() << "\n";
    return 1;
  }
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"360\" font-family=\"sans-serif\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += panel("loss per epoch", {joint, rec, cls}, 60, 30, 360, 290);
  svg += panel("accuracy per epoch", {acc}, 510, 30, 360, 290);
  svg += "</svg>\n";
  std::ofstream o(out);
  o << svg;
  if (!o) {
    std::cerr << "error: io: cannot write '" << out << "'\n";
    return 1;
  }
  std::cout << "wrote " << out << " (" << joint.pts.size() << " epochs)\n";
  return 0;
}
