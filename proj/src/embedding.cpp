#include "auxcal/embedding.hpp"

#include <cmath>
#include <string>

#include "auxcal/error.hpp"

namespace auxcal {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ValidationError("ragged rows in matrix construction");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::string_view to_string(Normalization mode) {
  switch (mode) {
    case Normalization::raw: return "raw";
    case Normalization::per_feature_z: return "per_feature_z";
    case Normalization::l2_row: return "l2_row";
  }
  return "raw";
}

Normalization parse_normalization(std::string_view text) {
  if (text == "raw") return Normalization::raw;
  if (text == "per_feature_z") return Normalization::per_feature_z;
  if (text == "l2_row") return Normalization::l2_row;
  throw PreconditionError("unknown normalization '" + std::string(text) + "'");
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace auxcal
