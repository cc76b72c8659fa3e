#include "auxcal/report.hpp"

#include <cctype>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace auxcal {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

constexpr double kLeft = 56.0;
constexpr double kTop = 40.0;
constexpr double kSize = 300.0;

}  // namespace

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string file_stem(std::string_view label) {
  std::string out;
  for (char c : label) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out += static_cast<char>(std::tolower(u));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "method" : out;
}

std::string render_reliability_svg(std::span<const BinSummary> bins, std::string_view label) {
  const double bottom = kTop + kSize;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"380\" height=\"400\" viewBox=\"0 0 380 400\" "
       "font-family=\"sans-serif\">\n";
  s << "<rect width=\"380\" height=\"400\" fill=\"white\"/>\n";
  s << "<text x=\"" << fmt("%.2f", kLeft + kSize / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(label) << "</text>\n";
  s << "<rect x=\"" << fmt("%.2f", kLeft) << "\" y=\"" << fmt("%.2f", kTop) << "\" width=\"" << fmt("%.2f", kSize)
    << "\" height=\"" << fmt("%.2f", kSize) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (const auto& b : bins) {
    if (b.count == 0) continue;
    const double x = kLeft + b.lower * kSize;
    const double w = (b.upper - b.lower) * kSize;
    const double h = b.accuracy * kSize;
    s << "<rect class=\"bar\" x=\"" << fmt("%.2f", x) << "\" y=\"" << fmt("%.2f", bottom - h) << "\" width=\""
      << fmt("%.2f", w) << "\" height=\"" << fmt("%.2f", h)
      << "\" fill=\"#4c72b0\" fill-opacity=\"0.8\" stroke=\"white\"/>\n";
    // Inside the bar when it is tall enough to hold the text.
    const double ty = h >= 16.0 ? bottom - h + 13.0 : bottom - h - 3.0;
    const char* colour = h >= 16.0 ? "white" : "black";
    s << "<text class=\"proportion\" x=\"" << fmt("%.2f", x + w / 2) << "\" y=\"" << fmt("%.2f", ty)
      << "\" text-anchor=\"middle\" font-size=\"9\" fill=\"" << colour << "\">"
      << fmt("%.0f", b.proportion * 100.0) << "%</text>\n";
  }

  s << "<line class=\"diagonal\" x1=\"" << fmt("%.2f", kLeft) << "\" y1=\"" << fmt("%.2f", bottom) << "\" x2=\""
    << fmt("%.2f", kLeft + kSize) << "\" y2=\"" << fmt("%.2f", kTop)
    << "\" stroke=\"#c44e52\" stroke-dasharray=\"5,4\" stroke-width=\"1.5\"/>\n";

  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    const std::string tick = fmt("%.1f", v);
    s << "<text x=\"" << fmt("%.2f", kLeft + v * kSize) << "\" y=\"" << fmt("%.2f", bottom + 16)
      << "\" text-anchor=\"middle\" font-size=\"10\">" << tick << "</text>\n";
    s << "<text x=\"" << fmt("%.2f", kLeft - 6) << "\" y=\"" << fmt("%.2f", bottom - v * kSize + 3)
      << "\" text-anchor=\"end\" font-size=\"10\">" << tick << "</text>\n";
  }
  s << "<text x=\"" << fmt("%.2f", kLeft + kSize / 2) << "\" y=\"" << fmt("%.2f", bottom + 38)
    << "\" text-anchor=\"middle\" font-size=\"12\">Confidence</text>\n";
  s << "<text x=\"16\" y=\"" << fmt("%.2f", kTop + kSize / 2) << "\" text-anchor=\"middle\" font-size=\"12\" "
    << "transform=\"rotate(-90 16 " << fmt("%.2f", kTop + kSize / 2) << ")\">Accuracy</text>\n";
  s << "</svg>\n";
  return s.str();
}

void write_cluster_quality_csv(std::ostream& out, std::span<const QualityRow> rows) {
  out << "group,pairs,textual_mean,textual_std,textual_n,semantic_mean,semantic_std,semantic_n\n";
  for (const auto& [group, r] : rows) {
    auto line = [&](const char* kind, const SeriesSummary& t, const SeriesSummary& c) {
      out << group << ',' << kind << ',' << fmt("%.6f", t.mean) << ',' << fmt("%.6f", t.std) << ',' << t.count
          << ',' << fmt("%.6f", c.mean) << ',' << fmt("%.6f", c.std) << ',' << c.count << '\n';
    };
    line("clustered", r.textual, r.semantic);
    line("random", r.random_textual, r.random_semantic);
  }
}

void write_cluster_quality_markdown(std::ostream& out, std::span<const QualityRow> rows) {
  out << "| Group | Pairs | Textual (ROUGE-L) | Semantic (cosine) |\n";
  out << "|---|---|---|---|\n";
  for (const auto& [group, r] : rows) {
    auto cell = [](const SeriesSummary& v) { return fmt("%.2f", v.mean) + " ± " + fmt("%.2f", v.std); };
    out << "| " << group << " | Clustered | " << cell(r.textual) << " | " << cell(r.semantic) << " |\n";
    out << "| " << group << " | Random | " << cell(r.random_textual) << " | " << cell(r.random_semantic) << " |\n";
  }
}

}  // namespace auxcal
