#include "auxcal/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "auxcal/error.hpp"
#include "auxcal/parallel.hpp"

namespace auxcal {

std::string_view to_string(PromptStyle style) { return style == PromptStyle::trivia ? "trivia" : "coqa"; }

PromptStyle parse_prompt_style(std::string_view text) {
  if (text == "trivia") return PromptStyle::trivia;
  if (text == "coqa") return PromptStyle::coqa;
  throw PreconditionError("unknown prompt style '" + std::string(text) + "'");
}

std::string_view to_string(ConfidenceMode mode) {
  switch (mode) {
    case ConfidenceMode::none: return "none";
    case ConfidenceMode::percent: return "percent";
    case ConfidenceMode::qualitative: return "qualitative";
  }
  return "none";
}

ConfidenceMode parse_confidence_mode(std::string_view text) {
  if (text == "none") return ConfidenceMode::none;
  if (text == "percent") return ConfidenceMode::percent;
  if (text == "qualitative") return ConfidenceMode::qualitative;
  throw PreconditionError("unknown confidence mode '" + std::string(text) + "'");
}

std::string_view to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::live: return "live";
    case GatewayMode::record: return "record";
    case GatewayMode::replay: return "replay";
  }
  return "live";
}

GatewayMode parse_gateway_mode(std::string_view text) {
  if (text == "live") return GatewayMode::live;
  if (text == "record") return GatewayMode::record;
  if (text == "replay") return GatewayMode::replay;
  throw PreconditionError("unknown gateway mode '" + std::string(text) + "'");
}

void validate_params(const GenerationParams& params) {
  if (params.max_new_tokens < 1) throw PreconditionError("max_new_tokens must be at least 1");
  if (!(params.temperature >= 0.0)) throw PreconditionError("temperature must be non-negative");
  for (const auto& s : params.stop_sequences) {
    if (s.empty()) throw PreconditionError("empty stop sequence");
  }
}

std::string build_qa_prompt(const CalibrationRecord& record, const PromptSpec& spec) {
  if (record.question.empty()) throw PreconditionError("empty question on record '" + record.id + "'");
  if (spec.confidence_mode != ConfidenceMode::none && !spec.icl_examples.empty()) {
    throw PreconditionError("demonstrations are not allowed when eliciting confidence");
  }
  if (spec.style == PromptStyle::coqa) {
    if (!record.context) throw MissingFieldError("context", record.id);
    std::string out = "Context: " + *record.context + "\n";
    if (spec.cot) out += "Instruction: " + std::string(kCotInstruction) + "\n";
    for (const auto& d : spec.icl_examples) out += "Question: " + d.question + "\nAnswer: " + d.answer + "\n";
    out += "Question: " + record.question + "\nAnswer:";
    return out;
  }
  std::string out;
  if (spec.cot) out += std::string(kCotInstruction) + "\n";
  for (const auto& d : spec.icl_examples) out += "Question: " + d.question + " Answer: " + d.answer + "\n";
  out += "Question: " + record.question + " Answer:";
  return out;
}

std::string build_confidence_prompt(std::string_view question, std::string_view model_answer, ConfidenceMode mode) {
  if (question.empty()) throw PreconditionError("empty question");
  if (model_answer.empty()) throw PreconditionError("confidence prompt needs a model answer");
  std::string out = std::string(question) + " " + std::string(model_answer) + " ";
  switch (mode) {
    case ConfidenceMode::percent:
      return out + "Please provide your confidence in the answer only in percent (0-100 %):";
    case ConfidenceMode::qualitative:
      return out +
             "Please provide your confidence in the answer only as one of 'Very Low' / 'Low' / 'Somewhat Low' / "
             "'Medium' / 'Somewhat High' / 'High' / 'Very High':";
    case ConfidenceMode::none:
      break;
  }
  throw PreconditionError("confidence prompt needs mode percent or qualitative");
}

namespace {

std::size_t stop_position(std::string_view text, std::span<const std::string> extra) {
  std::size_t cut = text.size();
  for (auto s : kDefaultStops) cut = std::min(cut, text.find(s));
  for (const auto& s : extra) {
    if (!s.empty()) cut = std::min(cut, text.find(s));
  }
  return cut;
}

}  // namespace

std::string truncate_at_stop(std::string_view text, std::span<const std::string> extra_stops) {
  return std::string(text.substr(0, stop_position(text, extra_stops)));
}

Generation truncate_generation(std::string_view text, const std::optional<std::vector<TokenLogprob>>& tokens,
                               std::span<const std::string> extra_stops) {
  const std::size_t cut = stop_position(text, extra_stops);
  Generation g{std::string(text.substr(0, cut)), std::nullopt};
  if (!tokens) return g;
  std::string joined;
  for (const auto& t : *tokens) joined += t.token;
  // Offsets are only trusted when the tokens spell the start of the text.
  const bool aligned = text.starts_with(joined);
  std::vector<double> lp;
  std::size_t end = 0;
  for (const auto& t : *tokens) {
    end += t.token.size();
    if (aligned && end > cut) break;
    lp.push_back(t.logprob);
  }
  g.token_logprobs = std::move(lp);
  return g;
}

EndpointConfig apply_environment(EndpointConfig config) {
  if (config.api_key.empty()) {
    if (const char* k = std::getenv("AUXCAL_API_KEY"); k && *k) {
      config.api_key = k;
    } else if (const char* o = std::getenv("OPENAI_API_KEY"); o && *o) {
      config.api_key = o;
    }
  }
  if (const char* b = std::getenv("AUXCAL_BASE_URL"); b && *b) config.base_url = b;
  return config;
}

HttpTransport::HttpTransport(std::string base_url, std::string api_key, double timeout_seconds)
    : api_key_(std::move(api_key)), timeout_(timeout_seconds) {
  const auto scheme = base_url.find("://");
  if (scheme == std::string::npos) throw PreconditionError("base_url needs a scheme: '" + base_url + "'");
  const auto slash = base_url.find('/', scheme + 3);
  origin_ = base_url.substr(0, slash);
  prefix_ = slash == std::string::npos ? "" : base_url.substr(slash);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

nlohmann::json HttpTransport::post(const std::string& path, const nlohmann::json& body) {
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(timeout_);
  const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(prefix_ + path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + origin_ + prefix_ + path + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body.substr(0, 300),
                         res->status);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("response is not JSON: ") + e.what(), res->status);
  }
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

std::string request_hash(std::string_view kind, std::string_view model, const nlohmann::json& input,
                         const nlohmann::json& params) {
  const nlohmann::json key = {{"kind", kind}, {"model", model}, {"input", input}, {"params", params}};
  return sha256_hex(key.dump());
}

FixtureStore::FixtureStore(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto row = nlohmann::json::parse(line);
      rows_.try_emplace(row.at("prompt_hash").get<std::string>(), std::move(row.at("response")));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, path_.string() + ": bad fixture row: " + e.what());
    }
  }
}

std::optional<nlohmann::json> FixtureStore::find(const std::string& hash) const {
  std::lock_guard lock(mu_);
  auto it = rows_.find(hash);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

void FixtureStore::append(const std::string& hash, const nlohmann::json& request, const nlohmann::json& response) {
  std::lock_guard lock(mu_);
  if (!rows_.try_emplace(hash, response).second) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw PreconditionError("cannot append to fixture file '" + path_.string() + "'");
  nlohmann::ordered_json row;
  row["prompt_hash"] = hash;
  row["request"] = request;
  row["response"] = response;
  out << row.dump() << '\n';
}

std::size_t FixtureStore::size() const {
  std::lock_guard lock(mu_);
  return rows_.size();
}

LlmClient::LlmClient(EndpointConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (config_.mode != GatewayMode::live) {
    if (config_.fixture_path.empty()) throw PreconditionError("record and replay modes need a fixture path");
    fixtures_ = std::make_unique<FixtureStore>(config_.fixture_path);
  }
  if (config_.parallelism < 1) throw PreconditionError("parallelism must be at least 1");
  if (config_.embedding_batch < 1) throw PreconditionError("embedding_batch must be at least 1");
}

Transport& LlmClient::transport() {
  std::lock_guard lock(transport_mu_);
  if (!transport_) {
    transport_ = std::make_shared<HttpTransport>(config_.base_url, config_.api_key, config_.timeout_seconds);
  }
  return *transport_;
}

nlohmann::json LlmClient::call(const std::string& path, const nlohmann::json& body) {
  if (config_.mode == GatewayMode::replay) throw Error("network call attempted in replay mode");
  Transport& t = transport();
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      ++network_calls_;
      return t.post(path, body);
    } catch (const TransportError& e) {
      const int s = e.status();
      const bool retryable = s == 0 || s == 408 || s == 429 || s >= 500;
      if (!retryable || attempt >= config_.max_retries) throw;
      const double wait = config_.backoff_seconds * std::pow(2.0, static_cast<double>(attempt));
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
  }
}

namespace {

nlohmann::json params_json(const GenerationParams& p) {
  return {{"max_new_tokens", p.max_new_tokens},
          {"stop_sequences", p.stop_sequences},
          {"temperature", p.temperature},
          {"logprobs", p.logprobs}};
}

}  // namespace

Generation parse_chat_response(const nlohmann::json& response, const GenerationParams& params) {
  try {
    const auto& choice = response.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    const std::string text = content.is_null() ? std::string() : content.get<std::string>();
    std::optional<std::vector<TokenLogprob>> tokens;
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      if (auto c = lp->find("content"); c != lp->end() && c->is_array()) {
        tokens.emplace();
        for (const auto& t : *c) tokens->push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      }
    }
    return truncate_generation(text, tokens, params.stop_sequences);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected chat response shape: ") + e.what());
  }
}

nlohmann::json chat_request_body(const EndpointConfig& config, const std::string& prompt,
                                 const GenerationParams& params) {
  nlohmann::json request = {{"model", config.chat_model},
                            {"messages", {{{"role", "user"}, {"content", prompt}}}},
                            {"max_tokens", params.max_new_tokens},
                            {"temperature", params.temperature}};
  if (params.logprobs) request["logprobs"] = true;
  // Servers commonly accept at most four stops; the defaults fill them and
  // any extras are applied client-side.
  request["stop"] = std::vector<std::string>(kDefaultStops.begin(), kDefaultStops.end());
  return request;
}

std::string chat_request_hash(const EndpointConfig& config, const std::string& prompt, const GenerationParams& params) {
  return request_hash("chat", config.chat_model, prompt, params_json(params));
}

std::string embedding_request_hash(const EndpointConfig& config, const std::string& text) {
  return request_hash("embedding", config.embedding_model, text, nlohmann::json::object());
}

Generation LlmClient::generate(const std::string& prompt, const GenerationParams& params) {
  validate_params(params);
  const std::string hash = chat_request_hash(config_, prompt, params);
  const nlohmann::json request = chat_request_body(config_, prompt, params);

  if (fixtures_) {
    if (auto hit = fixtures_->find(hash)) return parse_chat_response(*hit, params);
    if (config_.mode == GatewayMode::replay) {
      throw FixtureMissError("no fixture for chat prompt hash " + hash);
    }
  }
  const nlohmann::json response = call("/chat/completions", request);
  if (fixtures_) fixtures_->append(hash, request, response);
  return parse_chat_response(response, params);
}

std::vector<Generation> LlmClient::generate_batch(const std::vector<std::string>& prompts,
                                                  const GenerationParams& params) {
  std::vector<Generation> out(prompts.size());
  parallel_for(prompts.size(), config_.parallelism, [&](std::size_t i) { out[i] = generate(prompts[i], params); });
  return out;
}

Matrix LlmClient::embed_texts(const std::vector<std::string>& texts) {
  if (texts.empty()) throw PreconditionError("embed_texts needs at least one text");
  std::vector<std::string> hashes(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    hashes[i] = embedding_request_hash(config_, texts[i]);
  }

  std::lock_guard lock(embed_mu_);
  auto remember = [&](const std::string& hash, std::vector<double> v) {
    if (v.empty()) throw ValidationError("endpoint returned an empty embedding");
    if (embed_dim_ == 0) embed_dim_ = v.size();
    if (v.size() != embed_dim_) {
      throw ValidationError("inconsistent embedding dimension: " + std::to_string(v.size()) + " vs " +
                            std::to_string(embed_dim_));
    }
    embed_cache_.emplace(hash, std::move(v));
  };

  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (embed_cache_.count(hashes[i])) continue;
    if (fixtures_) {
      if (auto hit = fixtures_->find(hashes[i])) {
        remember(hashes[i], hit->at("embedding").get<std::vector<double>>());
        continue;
      }
    }
    bool queued = false;
    for (auto j : missing) queued = queued || hashes[j] == hashes[i];
    if (!queued) missing.push_back(i);
  }
  if (!missing.empty() && config_.mode == GatewayMode::replay) {
    throw FixtureMissError("no fixture for embedding hash " + hashes[missing.front()]);
  }

  for (std::size_t start = 0; start < missing.size(); start += config_.embedding_batch) {
    const std::size_t stop = std::min(missing.size(), start + config_.embedding_batch);
    std::vector<std::string> batch;
    for (std::size_t k = start; k < stop; ++k) batch.push_back(texts[missing[k]]);
    const nlohmann::json response =
        call("/embeddings", {{"model", config_.embedding_model}, {"input", batch}});
    try {
      const auto& data = response.at("data");
      if (data.size() != batch.size()) throw TransportError("embedding response has the wrong number of rows");
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const auto& item = data.at(k);
        const std::size_t slot = item.contains("index") ? item.at("index").get<std::size_t>() : k;
        if (slot >= batch.size()) throw TransportError("embedding response index out of range");
        const std::size_t i = missing[start + slot];
        auto vec = item.at("embedding").get<std::vector<double>>();
        if (fixtures_) {
          fixtures_->append(hashes[i], {{"model", config_.embedding_model}, {"input", texts[i]}},
                            {{"embedding", vec}});
        }
        remember(hashes[i], std::move(vec));
      }
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("unexpected embedding response shape: ") + e.what());
    }
  }

  Matrix out(texts.size(), embed_dim_);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& v = embed_cache_.at(hashes[i]);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace auxcal
