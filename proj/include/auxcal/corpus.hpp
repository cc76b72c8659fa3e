#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace auxcal {

enum class Split { train, validation, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

// One question-answering instance and everything later stages attach to it.
// Fields beyond id/question/gold_answers are filled in by pipeline stages.
struct CalibrationRecord {
  std::string id;
  std::string question;
  std::optional<std::string> context;
  std::vector<std::string> gold_answers;
  std::optional<std::string> model_answer;
  std::optional<std::string> cot_answer;
  std::optional<std::string> verbalized_percent_raw;
  std::optional<std::string> verbalized_qual_raw;
  // Natural-log probabilities of the generated answer tokens.
  std::optional<std::vector<double>> token_logprobs;
  std::optional<std::vector<double>> embedding;
  std::optional<Split> split;
  std::optional<bool> correct;
  // -1 marks an HDBSCAN noise point.
  std::optional<int> cluster_id;
  std::optional<double> target;

  bool operator==(const CalibrationRecord&) const = default;
};

using Corpus = std::vector<CalibrationRecord>;

struct SplitSpec {
  std::size_t train_size = 12000;
  std::size_t validation_size = 1500;
  std::size_t test_size = 1500;
  std::uint64_t seed = 0;
};

nlohmann::ordered_json to_json(const CalibrationRecord& record);

// Throws ParseError (tagged with `line`) on schema violations.
CalibrationRecord record_from_json(const nlohmann::json& object, std::size_t line);

// Corpus-wide invariants: unique ids, nonempty gold answers, targets in
// [0,1], one embedding dimension. Throws ValidationError.
void validate_corpus(std::span<const CalibrationRecord> records);

Corpus read_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, std::span<const CalibrationRecord> records);
void save_corpus(const std::filesystem::path& path, std::span<const CalibrationRecord> records);

// Shuffles by seed and labels the first train_size records train, the next
// validation_size validation and the next test_size test. Only the selected
// subset is returned, in its original corpus order.
Corpus split_corpus(Corpus records, const SplitSpec& spec);

// k distinct demonstrations drawn from `train`, never the record with
// `exclude_id`. The draw is seeded per instance from (seed, exclude_id).
std::vector<CalibrationRecord> sample_icl(std::span<const CalibrationRecord> train, std::size_t k,
                                          std::uint64_t seed, std::string_view exclude_id);

std::vector<std::size_t> indices_in_split(std::span<const CalibrationRecord> records, Split split);

}  // namespace auxcal
