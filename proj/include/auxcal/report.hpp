#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "auxcal/clustering.hpp"
#include "auxcal/metrics.hpp"

namespace auxcal {

// Reliability diagram: one bar per bin with height = accuracy, a dashed
// diagonal for perfect calibration and the bin's share of samples printed
// on the bar. Output bytes depend only on the inputs.
std::string render_reliability_svg(std::span<const BinSummary> bins, std::string_view label);

// Clustered vs random pair similarity, one row per named group.
using QualityRow = std::pair<std::string, ClusterQualityReport>;
void write_cluster_quality_csv(std::ostream& out, std::span<const QualityRow> rows);
void write_cluster_quality_markdown(std::ostream& out, std::span<const QualityRow> rows);

std::string xml_escape(std::string_view text);

// Lowercase alphanumerics, everything else collapsed to '_'.
std::string file_stem(std::string_view label);

}  // namespace auxcal
