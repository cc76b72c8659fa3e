#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace auxcal {

// Length-normalized sequence likelihood: exp of the mean token logprob,
// i.e. the geometric mean of the token probabilities.
double normalized_seq_likelihood(std::span<const double> token_logprobs);

struct PlattParams {
  double a = 1.0;
  double b = 0.0;
};

struct PlattOptions {
  double learning_rate = 0.1;
  std::size_t iterations = 2000;
};

struct PlattFit {
  PlattParams params;
  double initial_mse = 0.0;
  double fitted_mse = 0.0;
  std::size_t best_iteration = 0;
  // Set when the fitting data holds only one class; the fit still runs but
  // tends to saturate.
  bool single_class = false;
};

double logistic(double x);
double apply_platt(const PlattParams& params, double confidence);
double platt_mse(const PlattParams& params, std::span<const double> confidences, const std::vector<bool>& correct);

// Gradient of the Platt MSE with respect to (a, b).
std::array<double, 2> platt_gradient(const PlattParams& params, std::span<const double> confidences,
                                     const std::vector<bool>& correct);

// Gradient descent on mean (sigmoid(a*p + b) - y)^2 from (1, 0), keeping the
// best iterate seen.
PlattFit fit_platt(std::span<const double> confidences, const std::vector<bool>& correct,
                   const PlattOptions& options = {});

struct QualitativeLevel {
  std::string_view expression;
  double value;
};

// Expression -> confidence mapping for the seven-point verbal scale.
inline constexpr std::array<QualitativeLevel, 7> kQualitativeScale{{
    {"Very low", 0.0},
    {"Low", 0.3},
    {"Somewhat low", 0.45},
    {"Medium", 0.5},
    {"Somewhat high", 0.65},
    {"High", 0.7},
    {"Very high", 1.0},
}};

// First number followed by "%" (optionally after whitespace), divided by
// 100. Without a percent sign, falls back to the first bare number when
// `allow_bare_number` is set. Values outside [0,100] yield nullopt.
std::optional<double> parse_verbalized_percent(std::string_view text, bool allow_bare_number = true);

// Earliest case-insensitive, word-bounded occurrence of a scale expression;
// at a shared start the longest expression wins.
std::optional<double> parse_verbalized_qualitative(std::string_view text);

// Fraction of successful parses. Throws PreconditionError on empty input.
double success_rate(std::span<const std::optional<double>> parses);

}  // namespace auxcal
