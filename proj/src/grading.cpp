#include "auxcal/grading.hpp"

#include <algorithm>
#include <cctype>

#include "auxcal/error.hpp"

namespace auxcal {

std::string normalize_answer(std::string_view text, const GradeConfig& cfg) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (cfg.strip_punctuation && std::ispunct(c)) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(cfg.normalize_case ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view normalized) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < normalized.size()) {
    while (i < normalized.size() && std::isspace(static_cast<unsigned char>(normalized[i]))) ++i;
    std::size_t j = i;
    while (j < normalized.size() && !std::isspace(static_cast<unsigned char>(normalized[j]))) ++j;
    if (j > i) tokens.emplace_back(normalized.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference, const GradeConfig& cfg) {
  const auto cand = tokenize(normalize_answer(candidate, cfg));
  const auto ref = tokenize(normalize_answer(reference, cfg));
  const std::size_t lcs = lcs_length(cand, ref);
  if (lcs == 0) return 0.0;
  // F1 of precision lcs/|cand| and recall lcs/|ref|, rounded once.
  return 2.0 * static_cast<double>(lcs) / static_cast<double>(cand.size() + ref.size());
}

bool grade_answer(std::string_view model_answer, std::span<const std::string> gold_answers,
                  const GradeConfig& cfg) {
  if (gold_answers.empty()) throw PreconditionError("grade_answer needs at least one gold answer");
  if (!(cfg.rouge_threshold > 0.0 && cfg.rouge_threshold < 1.0)) {
    throw PreconditionError("rouge_threshold must lie in (0,1)");
  }
  const std::string answer = normalize_answer(model_answer, cfg);
  for (const auto& gold : gold_answers) {
    const std::string g = normalize_answer(gold, cfg);
    if (!g.empty() && answer.find(g) != std::string::npos) return true;
  }
  for (const auto& gold : gold_answers) {
    if (rouge_l(model_answer, gold, cfg) > cfg.rouge_threshold) return true;
  }
  return false;
}

}  // namespace auxcal
