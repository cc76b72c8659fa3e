#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "auxcal/corpus.hpp"
#include "auxcal/embedding.hpp"

namespace auxcal {

enum class PromptStyle { trivia, coqa };
enum class ConfidenceMode { none, percent, qualitative };

std::string_view to_string(PromptStyle style);
PromptStyle parse_prompt_style(std::string_view text);
std::string_view to_string(ConfidenceMode mode);
ConfidenceMode parse_confidence_mode(std::string_view text);

struct Demonstration {
  std::string question;
  std::string answer;
};

struct PromptSpec {
  PromptStyle style = PromptStyle::trivia;
  bool cot = false;
  std::vector<Demonstration> icl_examples;
  ConfidenceMode confidence_mode = ConfidenceMode::none;
};

inline constexpr std::string_view kCotInstruction = "Briefly answer the following question by thinking step by step.";
inline constexpr std::array<std::string_view, 4> kDefaultStops{"Question:", "Q:", "Answer:", "A:"};

struct GenerationParams {
  std::size_t max_new_tokens = 50;
  // Extra stops on top of kDefaultStops.
  std::vector<std::string> stop_sequences;
  double temperature = 0.0;
  bool logprobs = true;
};

void validate_params(const GenerationParams& params);

// Segments are joined by newlines: CoT instruction, demonstrations, then the
// question itself.
std::string build_qa_prompt(const CalibrationRecord& record, const PromptSpec& spec);
std::string build_confidence_prompt(std::string_view question, std::string_view model_answer, ConfidenceMode mode);

struct Generation {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
  bool operator==(const Generation&) const = default;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

// Cuts text at the earliest occurrence of any stop sequence.
std::string truncate_at_stop(std::string_view text, std::span<const std::string> extra_stops = {});

// Same cut, also dropping tokens that end past it. When the tokens do not
// spell out a prefix of `text` they are kept as returned.
Generation truncate_generation(std::string_view text, const std::optional<std::vector<TokenLogprob>>& tokens,
                               std::span<const std::string> extra_stops = {});

enum class GatewayMode { live, record, replay };
std::string_view to_string(GatewayMode mode);
GatewayMode parse_gateway_mode(std::string_view text);

struct EndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string chat_model = "gpt-3.5-turbo";
  std::string embedding_model = "text-embedding-3-small";
  std::string api_key;
  std::filesystem::path fixture_path;
  GatewayMode mode = GatewayMode::live;
  std::size_t max_retries = 3;
  double backoff_seconds = 0.5;
  std::size_t parallelism = 4;
  double timeout_seconds = 60.0;
  std::size_t embedding_batch = 64;
};

// Fills api_key from AUXCAL_API_KEY or OPENAI_API_KEY and overrides base_url
// with AUXCAL_BASE_URL when those are set.
EndpointConfig apply_environment(EndpointConfig config);

// POSTs JSON to a path below the base URL and returns the decoded body.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual nlohmann::json post(const std::string& path, const nlohmann::json& body) = 0;
};

class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string api_key, double timeout_seconds);
  nlohmann::json post(const std::string& path, const nlohmann::json& body) override;

 private:
  std::string origin_;
  std::string prefix_;
  std::string api_key_;
  double timeout_;
};

std::string sha256_hex(std::string_view data);

// Hex SHA-256 over the canonical (sorted-key) JSON of the inputs.
std::string request_hash(std::string_view kind, std::string_view model, const nlohmann::json& input,
                         const nlohmann::json& params);

nlohmann::json chat_request_body(const EndpointConfig& config, const std::string& prompt,
                                 const GenerationParams& params);
std::string chat_request_hash(const EndpointConfig& config, const std::string& prompt, const GenerationParams& params);
std::string embedding_request_hash(const EndpointConfig& config, const std::string& text);

// Reads choices[0].message.content and its token logprobs, then applies
// stop-sequence truncation.
Generation parse_chat_response(const nlohmann::json& response, const GenerationParams& params);

// Append-only JSONL of {prompt_hash, request, response}. Later rows with a
// repeated hash are ignored on load.
class FixtureStore {
 public:
  explicit FixtureStore(std::filesystem::path path);
  std::optional<nlohmann::json> find(const std::string& hash) const;
  void append(const std::string& hash, const nlohmann::json& request, const nlohmann::json& response);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, nlohmann::json> rows_;
};

class LlmClient {
 public:
  // A null transport is replaced by an HttpTransport on first network use.
  explicit LlmClient(EndpointConfig config, std::shared_ptr<Transport> transport = nullptr);

  Generation generate(const std::string& prompt, const GenerationParams& params);
  // Results are in input order; at most config.parallelism requests in flight.
  std::vector<Generation> generate_batch(const std::vector<std::string>& prompts, const GenerationParams& params);
  Matrix embed_texts(const std::vector<std::string>& texts);

  std::size_t network_calls() const noexcept { return network_calls_.load(); }
  const EndpointConfig& config() const noexcept { return config_; }

 private:
  nlohmann::json call(const std::string& path, const nlohmann::json& body);
  Transport& transport();

  EndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  std::mutex transport_mu_;
  std::unique_ptr<FixtureStore> fixtures_;
  std::atomic<std::size_t> network_calls_{0};
  std::mutex embed_mu_;
  std::unordered_map<std::string, std::vector<double>> embed_cache_;
  std::size_t embed_dim_ = 0;
};

}  // namespace auxcal
