#include "auxcal/baselines.hpp"

#include <cctype>
#include <cmath>
#include <iostream>
#include <regex>
#include <string>

#include "auxcal/error.hpp"

namespace auxcal {

double normalized_seq_likelihood(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw PreconditionError("token_logprobs is empty");
  double sum = 0.0;
  for (double lp : token_logprobs) {
    if (!(lp <= 0.0)) throw PreconditionError("token logprob must be <= 0");
    sum += lp;
  }
  return std::exp(sum / static_cast<double>(token_logprobs.size()));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double apply_platt(const PlattParams& params, double confidence) {
  return logistic(params.a * confidence + params.b);
}

namespace {

void check_aligned(std::span<const double> p, const std::vector<bool>& y) {
  if (p.empty()) throw PreconditionError("Platt scaling needs a nonempty validation series");
  if (p.size() != y.size()) throw PreconditionError("confidences and correctness differ in length");
}

}  // namespace

double platt_mse(const PlattParams& params, std::span<const double> p, const std::vector<bool>& y) {
  check_aligned(p, y);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = apply_platt(params, p[i]) - (y[i] ? 1.0 : 0.0);
    total += d * d;
  }
  return total / static_cast<double>(p.size());
}

std::array<double, 2> platt_gradient(const PlattParams& params, std::span<const double> p,
                                     const std::vector<bool>& y) {
  check_aligned(p, y);
  double ga = 0.0, gb = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = apply_platt(params, p[i]);
    const double common = 2.0 * (q - (y[i] ? 1.0 : 0.0)) * q * (1.0 - q);
    ga += common * p[i];
    gb += common;
  }
  const double n = static_cast<double>(p.size());
  return {ga / n, gb / n};
}

PlattFit fit_platt(std::span<const double> p, const std::vector<bool>& y, const PlattOptions& options) {
  check_aligned(p, y);
  PlattFit fit;
  std::size_t positives = 0;
  for (bool c : y) positives += c ? 1 : 0;
  fit.single_class = positives == 0 || positives == y.size();
  if (fit.single_class) {
    std::cerr << "warning: Platt scaling fitted on a single-class validation set\n";
  }

  PlattParams current;
  fit.initial_mse = platt_mse(current, p, y);
  fit.params = current;
  fit.fitted_mse = fit.initial_mse;
  for (std::size_t it = 1; it <= options.iterations; ++it) {
    const auto [ga, gb] = platt_gradient(current, p, y);
    current.a -= options.learning_rate * ga;
    current.b -= options.learning_rate * gb;
    const double mse = platt_mse(current, p, y);
    if (mse < fit.fitted_mse) {
      fit.fitted_mse = mse;
      fit.params = current;
      fit.best_iteration = it;
    }
  }
  return fit;
}

std::optional<double> parse_verbalized_percent(std::string_view text, bool allow_bare_number) {
  static const std::regex with_percent(R"((\d+(?:\.\d+)?)\s*%)");
  static const std::regex bare(R"(\d+(?:\.\d+)?)");
  const std::string s(text);
  std::smatch m;
  std::optional<double> value;
  if (std::regex_search(s, m, with_percent)) {
    value = std::stod(m[1].str());
  } else if (allow_bare_number && std::regex_search(s, m, bare)) {
    value = std::stod(m[0].str());
  }
  if (!value || *value < 0.0 || *value > 100.0) return std::nullopt;
  return *value / 100.0;
}

namespace {

// Lowercase, with hyphens/underscores and whitespace runs folded to one
// space, so "Somewhat-High" and "somewhat  high" match alike.
std::string fold(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool space = false;
  for (unsigned char c : text) {
    if (std::isspace(c) || c == '-' || c == '_') {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::optional<double> parse_verbalized_qualitative(std::string_view text) {
  const std::string hay = fold(text);
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  double best_value = 0.0;
  for (const auto& level : kQualitativeScale) {
    const std::string needle = fold(level.expression);
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
      const std::size_t end = pos + needle.size();
      const bool bounded = (pos == 0 || !word_char(hay[pos - 1])) && (end == hay.size() || !word_char(hay[end]));
      if (!bounded) continue;
      if (pos < best_pos || (pos == best_pos && needle.size() > best_len)) {
        best_pos = pos;
        best_len = needle.size();
        best_value = level.value;
      }
      break;
    }
  }
  if (best_pos == std::string::npos) return std::nullopt;
  return best_value;
}

double success_rate(std::span<const std::optional<double>> parses) {
  if (parses.empty()) throw PreconditionError("success_rate of an empty list");
  std::size_t ok = 0;
  for (const auto& p : parses) ok += p.has_value() ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(parses.size());
}

}  // namespace auxcal
