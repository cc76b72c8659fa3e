#include "auxcal/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "auxcal/error.hpp"
#include "auxcal/random.hpp"

namespace auxcal {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw PreconditionError("unknown split '" + std::string(text) + "'");
}

ordered_json to_json(const CalibrationRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["question"] = r.question;
  if (r.context) j["context"] = *r.context;
  j["gold_answers"] = r.gold_answers;
  if (r.model_answer) j["model_answer"] = *r.model_answer;
  if (r.cot_answer) j["cot_answer"] = *r.cot_answer;
  if (r.verbalized_percent_raw) j["verbalized_percent_raw"] = *r.verbalized_percent_raw;
  if (r.verbalized_qual_raw) j["verbalized_qual_raw"] = *r.verbalized_qual_raw;
  if (r.token_logprobs) j["token_logprobs"] = *r.token_logprobs;
  if (r.embedding) j["embedding"] = *r.embedding;
  if (r.split) j["split"] = std::string(to_string(*r.split));
  if (r.correct) j["correct"] = *r.correct;
  if (r.cluster_id) j["cluster_id"] = *r.cluster_id;
  if (r.target) j["target"] = *r.target;
  return j;
}

namespace {

const json* optional_field(const json& o, const char* key) {
  auto it = o.find(key);
  if (it == o.end() || it->is_null()) return nullptr;
  return &*it;
}

std::string require_string(const json& o, const char* key, std::size_t line) {
  const json* v = optional_field(o, key);
  if (v == nullptr) throw ParseError(line, std::string("missing required field '") + key + "'");
  if (!v->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
  return v->get<std::string>();
}

std::optional<std::string> maybe_string(const json& o, const char* key, std::size_t line) {
  const json* v = optional_field(o, key);
  if (v == nullptr) return std::nullopt;
  if (!v->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
  return v->get<std::string>();
}

std::optional<std::vector<double>> maybe_reals(const json& o, const char* key, std::size_t line) {
  const json* v = optional_field(o, key);
  if (v == nullptr) return std::nullopt;
  if (!v->is_array()) throw ParseError(line, std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v->size());
  for (const auto& x : *v) {
    if (!x.is_number()) throw ParseError(line, std::string("field '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace

CalibrationRecord record_from_json(const json& o, std::size_t line) {
  if (!o.is_object()) throw ParseError(line, "record must be a JSON object");
  CalibrationRecord r;
  r.id = require_string(o, "id", line);
  r.question = require_string(o, "question", line);
  r.context = maybe_string(o, "context", line);

  const json* gold = optional_field(o, "gold_answers");
  if (gold == nullptr) throw ParseError(line, "missing required field 'gold_answers'");
  if (!gold->is_array()) throw ParseError(line, "field 'gold_answers' must be an array");
  for (const auto& g : *gold) {
    if (!g.is_string()) throw ParseError(line, "field 'gold_answers' must hold strings");
    r.gold_answers.push_back(g.get<std::string>());
  }

  r.model_answer = maybe_string(o, "model_answer", line);
  r.cot_answer = maybe_string(o, "cot_answer", line);
  r.verbalized_percent_raw = maybe_string(o, "verbalized_percent_raw", line);
  r.verbalized_qual_raw = maybe_string(o, "verbalized_qual_raw", line);
  r.token_logprobs = maybe_reals(o, "token_logprobs", line);
  r.embedding = maybe_reals(o, "embedding", line);

  if (auto s = maybe_string(o, "split", line)) {
    try {
      r.split = parse_split(*s);
    } catch (const PreconditionError& e) {
      throw ParseError(line, e.what());
    }
  }
  if (const json* c = optional_field(o, "correct")) {
    if (!c->is_boolean()) throw ParseError(line, "field 'correct' must be a boolean");
    r.correct = c->get<bool>();
  }
  if (const json* c = optional_field(o, "cluster_id")) {
    if (!c->is_number_integer()) throw ParseError(line, "field 'cluster_id' must be an integer");
    r.cluster_id = c->get<int>();
  }
  if (const json* t = optional_field(o, "target")) {
    if (!t->is_number()) throw ParseError(line, "field 'target' must be a number");
    r.target = t->get<double>();
  }
  return r;
}

void validate_corpus(std::span<const CalibrationRecord> records) {
  std::unordered_set<std::string_view> seen;
  std::optional<std::size_t> dim;
  std::string dim_owner;
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) throw ValidationError("duplicate record id '" + r.id + "'");
    if (r.gold_answers.empty()) throw ValidationError("record '" + r.id + "' has empty gold_answers");
    if (r.target && !(*r.target >= 0.0 && *r.target <= 1.0)) {
      throw ValidationError("record '" + r.id + "' has target outside [0,1]");
    }
    if (r.embedding) {
      if (r.embedding->empty()) throw ValidationError("record '" + r.id + "' has an empty embedding");
      if (!dim) {
        dim = r.embedding->size();
        dim_owner = r.id;
      } else if (*dim != r.embedding->size()) {
        throw ValidationError("embedding dimension mismatch: record '" + r.id + "' has " +
                              std::to_string(r.embedding->size()) + ", record '" + dim_owner +
                              "' has " + std::to_string(*dim));
      }
    }
  }
}

Corpus read_corpus(std::istream& in) {
  Corpus out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json parsed;
    try {
      parsed = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    out.push_back(record_from_json(parsed, line_no));
  }
  validate_corpus(out);
  return out;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open corpus '" + path.string() + "'");
  return read_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const CalibrationRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

void save_corpus(const std::filesystem::path& path, std::span<const CalibrationRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PreconditionError("cannot write corpus '" + path.string() + "'");
  write_corpus(out, records);
}

Corpus split_corpus(Corpus records, const SplitSpec& spec) {
  if (spec.train_size == 0 || spec.validation_size == 0 || spec.test_size == 0) {
    throw PreconditionError("split sizes must be positive");
  }
  const std::size_t total = spec.train_size + spec.validation_size + spec.test_size;
  if (total > records.size()) {
    throw PreconditionError("split sizes total " + std::to_string(total) + " but corpus has " +
                            std::to_string(records.size()) + " records");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::optional<Split>> assigned(records.size());
  for (std::size_t pos = 0; pos < total; ++pos) {
    Split s = pos < spec.train_size                          ? Split::train
              : pos < spec.train_size + spec.validation_size ? Split::validation
                                                             : Split::test;
    assigned[order[pos]] = s;
  }
  Corpus out;
  out.reserve(total);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!assigned[i]) continue;
    records[i].split = assigned[i];
    out.push_back(std::move(records[i]));
  }
  return out;
}

std::vector<CalibrationRecord> sample_icl(std::span<const CalibrationRecord> train, std::size_t k,
                                          std::uint64_t seed, std::string_view exclude_id) {
  std::vector<std::size_t> pool;
  pool.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].id != exclude_id) pool.push_back(i);
  }
  if (k > pool.size()) {
    throw PreconditionError("cannot sample " + std::to_string(k) + " demonstrations from " +
                            std::to_string(pool.size()) + " eligible training records");
  }
  Rng rng(derive_seed(seed, exclude_id));
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  std::vector<CalibrationRecord> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(train[pool[i]]);
  return out;
}

std::vector<std::size_t> indices_in_split(std::span<const CalibrationRecord> records, Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

}  // namespace auxcal
