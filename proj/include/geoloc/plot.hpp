#pragma once

// Self-contained SVG line plot of a precision/recall sweep.

#include <cstdio>
#include <string>
#include <vector>

#include "geoloc/evaluation.hpp"

namespace geoloc {

inline std::string pr_curve_svg(const std::vector<PrPoint>& points, const std::string& title = "precision / recall") {
  constexpr double W = 480, H = 360, L = 60, R = 20, T = 40, B = 50;
  auto x = [&](double recall) { return L + recall * (W - L - R); };
  auto y = [&](double precision) { return H - B - precision * (H - T - B); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\" viewBox=\"0 0 480 360\">\n";
  s += "<rect width=\"480\" height=\"360\" fill=\"white\"/>\n";
  s += "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";
  s += "<g stroke=\"black\" fill=\"none\"><line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) +
       "\" y2=\"" + num(H - B) + "\"/><line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" +
       num(H - B) + "\"/></g>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    s += "<text class=\"tick\" x=\"" + num(x(v)) + "\" y=\"" + num(H - B + 16) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + num(v) + "</text>\n";
    s += "<text class=\"tick\" x=\"" + num(L - 6) + "\" y=\"" + num(y(v) + 3) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + num(v) + "</text>\n";
  }
  s += "<text x=\"" + num(x(0.5)) + "\" y=\"" + num(H - 12) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">recall</text>\n";
  s += "<text x=\"16\" y=\"" + num(y(0.5)) + "\" transform=\"rotate(-90 16 " + num(y(0.5)) +
       ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">precision</text>\n";
  if (!points.empty()) {
    s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& p : points) s += num(x(p.recall)) + "," + num(y(p.precision)) + " ";
    s += "\"/>\n";
  }
  for (const auto& p : points)
    s += "<circle class=\"marker\" cx=\"" + num(x(p.recall)) + "\" cy=\"" + num(y(p.precision)) +
         "\" r=\"3\" fill=\"steelblue\"/>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace geoloc
