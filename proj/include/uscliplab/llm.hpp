#pragma once

#include <memory>
#include <optional>
#include <string>

#include "uscliplab/captions.hpp"
#include "uscliplab/common.hpp"

namespace usclip {

// System prompt sent verbatim with every rewrite request.
const std::string& rewrite_system_prompt();

struct LlmRequest {
  std::string model;
  std::string system_prompt;
  std::string user_content;
  double temperature = 1.0;
  double top_p = 0.95;
  double repetition_penalty = 1.05;
};

// Raised when the endpoint cannot be reached; retried within the budget and
// surfaced as "retryable" if the budget runs out.
class LlmNetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Completion text producer. The HTTP client and test stubs implement this.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Returns the assistant message content (not the enclosing JSON).
  virtual std::string complete(const LlmRequest& request) = 0;
};

// Talks to an OpenAI-style chat-completions endpoint over HTTP. The request
// body is {model, messages, temperature, top_p, repetition_penalty} with a
// system and a user message. An optional bearer token is sent when set.
class HttpLlmClient : public LlmClient {
 public:
  HttpLlmClient(std::string endpoint_url, std::string api_key = "");
  std::string complete(const LlmRequest& request) override;

  // Exposed for wire-format tests.
  static std::string build_request_body(const LlmRequest& request);
  static std::string parse_response_body(const std::string& body);

 private:
  std::string scheme_host_;
  std::string path_;
  std::string api_key_;
};

struct RewriteOptions {
  std::string model = "default";
  int retries = 3;           // attempts = retries + 1
  bool grounding_filter = true;
};

// key: value lines for the user message, in a fixed order.
std::string rewrite_user_content(const MetadataFields& fields, const std::string& source_caption);

// Splits a rewrite completion into its three captions. Throws on any format
// violation ("1. "/"2. "/"3. " prefixes, exactly three non-empty lines, no
// "Caption N:" labels); the raw content is carried in the error message.
std::vector<std::string> parse_rewrite_lines(const std::string& content);

// Requests three rewrites of a template caption, validates the format,
// optionally enforces that the condition keyword survives (case-insensitive)
// and picks one of the three lines uniformly via rng.
Caption rewrite_with_llm(const MetadataFields& fields, const Caption& source, LlmClient& client,
                         Rng& rng, const RewriteOptions& options);

}  // namespace usclip
