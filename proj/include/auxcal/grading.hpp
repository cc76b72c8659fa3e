#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace auxcal {

struct GradeConfig {
  // An answer counts as correct when ROUGE-L strictly exceeds this.
  double rouge_threshold = 0.3;
  bool normalize_case = true;
  bool strip_punctuation = true;
};

// Lowercases and strips ASCII punctuation per `cfg`, then collapses runs of
// whitespace to single spaces and trims.
std::string normalize_answer(std::string_view text, const GradeConfig& cfg = {});

std::vector<std::string> tokenize(std::string_view normalized);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// LCS-based F-measure over whitespace tokens. 0 when either side is empty.
double rouge_l(std::string_view candidate, std::string_view reference, const GradeConfig& cfg = {});

// Correct iff some normalized gold answer occurs verbatim in the normalized
// model answer, or the best ROUGE-L against the gold answers exceeds the
// threshold. Throws PreconditionError on an empty gold list.
bool grade_answer(std::string_view model_answer, std::span<const std::string> gold_answers,
                  const GradeConfig& cfg = {});

}  // namespace auxcal
