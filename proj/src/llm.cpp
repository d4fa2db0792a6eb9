#include "uscliplab/llm.hpp"

#include <httplib.h>
#include <json.hpp>

#include <sstream>

namespace usclip {

using nlohmann::json;
using nlohmann::ordered_json;

const std::string& rewrite_system_prompt() {
  static const std::string prompt =
      "You are a radiology assistant writing English captions for ultrasound images.\n"
      "You are given structured metadata fields (key: value pairs) from a clinical dataset.\n"
      "Produce THREE DIFFERENT captions for the SAME image.\n"
      "\n"
      "Content rules (apply to every caption):\n"
      "- Ground the caption ONLY in the provided fields. Never invent values, measurements, or "
      "findings.\n"
      "- Incorporate EVERY provided field (diagnosis, BI-RADS, pathology, anatomical region, "
      "lesion descriptors, patient demographics, findings, etc.). Do not omit any.\n"
      "- Read like natural clinical language written by a radiologist, not a key-value dump.\n"
      "- Length: 15 to 60 words, one to three sentences. Length should scale with the number of "
      "provided fields: shorter captions (~15-25 words) when few fields are given, and longer "
      "captions (up to ~40-60 words, two or more sentences) when many fields are given, so that "
      "every field is naturally incorporated.\n"
      "\n"
      "Diversity rules (across the three captions):\n"
      "- Captions must differ meaningfully in wording, sentence structure, tone, or emphasis.\n"
      "- Suggested variants: (1) concise and clinical, (2) descriptive and narrative, (3) reorder "
      "the emphasis.\n"
      "- No near-duplicates or trivial paraphrases.\n"
      "\n"
      "Output format (MUST follow exactly):\n"
      "- Return ONLY the three captions, nothing else.\n"
      "- Each caption is on its own single line.\n"
      "- Prefix each line with \"1. \", \"2. \", \"3. \" (number, period, space) \u2014 no other "
      "numbering style.\n"
      "- No preamble, no labels like \"Caption 1:\", no bullets, no quotation marks, no blank "
      "lines between captions, no trailing commentary.\n"
      "\n"
      "Example of the required output format (content is illustrative only):\n"
      "1. First caption text here.\n"
      "2. Second caption text here.\n"
      "3. Third caption text here.";
  return prompt;
}

// -------------------- http client --------------------

HttpLlmClient::HttpLlmClient(std::string endpoint_url, std::string api_key)
    : api_key_(std::move(api_key)) {
  // split http://host:port/path into client base and request path
  auto pos = endpoint_url.find("://");
  if (pos == std::string::npos) {
    throw ConfigError("llm endpoint must be an http URL: " + endpoint_url);
  }
  auto path_pos = endpoint_url.find('/', pos + 3);
  if (path_pos == std::string::npos) {
    scheme_host_ = endpoint_url;
    path_ = "/v1/chat/completions";
  } else {
    scheme_host_ = endpoint_url.substr(0, path_pos);
    path_ = endpoint_url.substr(path_pos);
  }
}

std::string HttpLlmClient::build_request_body(const LlmRequest& request) {
  ordered_json j;
  j["model"] = request.model;
  j["messages"] = ordered_json::array({
      ordered_json{{"role", "system"}, {"content", request.system_prompt}},
      ordered_json{{"role", "user"}, {"content", request.user_content}},
  });
  j["temperature"] = request.temperature;
  j["top_p"] = request.top_p;
  j["repetition_penalty"] = request.repetition_penalty;
  return j.dump();
}

std::string HttpLlmClient::parse_response_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw std::runtime_error("llm response is not valid JSON; raw response: " + body);
  }
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw std::runtime_error("llm response has no choices[0].message.content; raw response: " + body);
  }
}

std::string HttpLlmClient::complete(const LlmRequest& request) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(120, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path_, headers, build_request_body(request), "application/json");
  if (!res) {
    throw LlmNetworkError("llm endpoint unreachable: " + scheme_host_ + path_ +
                          " (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw std::runtime_error("llm endpoint returned HTTP " + std::to_string(res->status) +
                             "; raw response: " + res->body);
  }
  return parse_response_body(res->body);
}

// -------------------- rewrite protocol --------------------

std::string rewrite_user_content(const MetadataFields& fields, const std::string& source_caption) {
  std::ostringstream out;
  if (fields.tissue) out << "Tissue: " << *fields.tissue << "\n";
  if (fields.condition) out << "Condition: " << *fields.condition << "\n";
  if (fields.patient_info) out << "Patient: " << *fields.patient_info << "\n";
  if (fields.region) out << "Region: " << *fields.region << "\n";
  if (fields.findings) out << "Findings: " << *fields.findings << "\n";
  out << "Source caption: " << source_caption;
  return out.str();
}

std::vector<std::string> parse_rewrite_lines(const std::string& content) {
  auto fail = [&](const std::string& why) -> std::vector<std::string> {
    throw std::runtime_error("malformed rewrite (" + why + "); raw response: " + content);
  };

  std::vector<std::string> lines;
  for (const auto& line : split_lines(content)) {
    if (!trim(line).empty()) lines.push_back(trim(line));
  }
  if (lines.size() != 3) return fail("expected exactly 3 caption lines, got " +
                                     std::to_string(lines.size()));

  std::vector<std::string> out;
  for (int i = 0; i < 3; ++i) {
    std::string prefix = std::to_string(i + 1) + ". ";
    if (lines[i].rfind(prefix, 0) != 0) {
      return fail("line " + std::to_string(i + 1) + " does not start with \"" + prefix + "\"");
    }
    std::string body = trim(lines[i].substr(prefix.size()));
    if (body.empty()) return fail("line " + std::to_string(i + 1) + " is empty");
    std::string lowered = to_lower(body);
    if (lowered.rfind("caption", 0) == 0) {
      size_t p = 7;
      while (p < lowered.size() && (std::isspace(static_cast<unsigned char>(lowered[p])) ||
                                    std::isdigit(static_cast<unsigned char>(lowered[p])))) {
        ++p;
      }
      if (p < lowered.size() && lowered[p] == ':') {
        return fail("line " + std::to_string(i + 1) + " carries a \"Caption N:\" label");
      }
    }
    out.push_back(body);
  }
  return out;
}

Caption rewrite_with_llm(const MetadataFields& fields, const Caption& source, LlmClient& client,
                         Rng& rng, const RewriteOptions& options) {
  LlmRequest request;
  request.model = options.model;
  request.system_prompt = rewrite_system_prompt();
  request.user_content = rewrite_user_content(fields, source.text);

  const int attempts = options.retries + 1;
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    std::string content;
    try {
      content = client.complete(request);
    } catch (const LlmNetworkError& e) {
      last_error = e.what();
      continue;
    }
    try {
      auto lines = parse_rewrite_lines(content);
      Caption c;
      c.text = lines[rng.below(3)];
      c.tier = 0;
      c.source = CaptionSource::llm;
      if (options.grounding_filter && fields.condition &&
          !contains_ci(c.text, *fields.condition)) {
        throw std::runtime_error("rewrite dropped the condition '" + *fields.condition +
                                 "'; raw response: " + content);
      }
      return c;
    } catch (const std::runtime_error& e) {
      last_error = e.what();
    }
  }
  throw std::runtime_error("llm rewrite failed after " + std::to_string(attempts) +
                           " attempts (retryable); last error: " + last_error);
}

}  // namespace usclip
