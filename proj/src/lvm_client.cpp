#include "secad/lvm_client.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <thread>
#include <utility>

#include "httplib.h"
#ifdef _res
#undef _res  // glibc resolv.h macro collides with Eigen kernel parameters
#endif
#include "json.hpp"
#include "secad/render.hpp"
#include "secad/sem.hpp"

namespace secad {
namespace {

constexpr const char* kGradingTemplate =
    "You are a harsh grader for new CAD designers' works. The following is a "
    "text description of a CAD figure that they designed and an image of a "
    "CAD instance.\n"
    "Description: {description}\n"
    "Comment on this work for\n"
    "1. If the overall shape remains correct;\n"
    "2. If the number of components are correct, especially the circular "
    "holes;\n"
    "3. If the distribution of the components are natural, i.e. they are not "
    "clustered together or collide with each other.\n"
    "After that, give a score out of 10. Do not comment on issues such as "
    "texture, smoothness and colors.";

class HttpTransport final : public LvmTransport {
 public:
  explicit HttpTransport(std::string base_url) : base_url_(std::move(base_url)) {}

  HttpResponse post(const std::string& path, const std::string& body,
                    const std::string& api_key) override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(120, 0);
    const httplib::Headers headers{{"Authorization", "Bearer " + api_key}};
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  }

 private:
  std::string base_url_;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? std::string(v) : fallback;
}

}  // namespace

std::shared_ptr<LvmTransport> http_transport(const std::string& base_url) {
  return std::make_shared<HttpTransport>(base_url);
}

LvmConfig lvm_config_from_env() {
  LvmConfig config;
  const char* key = std::getenv("LVM_API_KEY");
  if (!key || !*key)
    throw MissingCredential("LVM_API_KEY is not set");
  config.api_key = key;
  config.base_url = env_or("LVM_BASE_URL", config.base_url);
  config.model = env_or("LVM_MODEL", config.model);
  return config;
}

LvmClient::LvmClient(LvmConfig config, std::shared_ptr<LvmTransport> transport,
                     Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)) {
  if (!sleeper_)
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.max_attempts < 1) config_.max_attempts = 1;
  if (config_.max_in_flight < 1) config_.max_in_flight = 1;
}

LvmClient::InFlightGuard::InFlightGuard(LvmClient& c) : client(c) {
  std::unique_lock lock(client.mutex_);
  client.slot_free_.wait(
      lock, [&] { return client.in_flight_ < client.config_.max_in_flight; });
  ++client.in_flight_;
}

LvmClient::InFlightGuard::~InFlightGuard() {
  {
    std::lock_guard lock(client.mutex_);
    --client.in_flight_;
  }
  client.slot_free_.notify_one();
}

double LvmClient::score(std::span<const std::uint8_t> snapshot_pgm,
                        const std::string& description) {
  if (config_.api_key.empty())
    throw MissingCredential("LVM_API_KEY is not set");

  const std::string& tmpl = config_.prompt_template.empty()
                                ? default_grading_template()
                                : config_.prompt_template;
  const nlohmann::json payload = {
      {"model", config_.model},
      {"messages",
       {{{"role", "user"},
         {"content",
          {{{"type", "text"},
            {"text", render_prompt_template(tmpl, description)}},
           {{"type", "image_url"},
            {"image_url",
             {{"url", "data:image/x-portable-graymap;base64," +
                          base64_encode(snapshot_pgm)}}}}}}}}}};
  const std::string body = payload.dump();

  InFlightGuard guard(*this);
  std::chrono::milliseconds delay = config_.backoff;
  for (int attempt = 1;; ++attempt) {
    const HttpResponse res = transport_->post(config_.endpoint, body,
                                              config_.api_key);
    if (res.status == 200) {
      std::string content;
      try {
        content = nlohmann::json::parse(res.body)
                      .at("choices").at(0).at("message").at("content")
                      .get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed reply: ") + e.what());
      }
      return parse_score(content);
    }
    const bool transient =
        res.status == 429 || res.status == 0 || res.status >= 500;
    if (!transient || attempt >= config_.max_attempts) {
      if (res.status == 429)
        throw RateLimited("rate limited after " + std::to_string(attempt) +
                          " attempts");
      throw TransportError("status " + std::to_string(res.status) + ": " +
                           res.body);
    }
    sleeper_(delay);
    delay *= 2;
  }
}

double score_lvm(std::span<const std::uint8_t> snapshot,
                 const std::string& description, LvmClient& client) {
  return client.score(snapshot, description);
}

ScoreFn lvm_scorer(std::shared_ptr<LvmClient> client) {
  return [client](const std::string& candidate, const CadModel&,
                  const std::string& prompt) -> double {
    const ParseResult parsed = parse_sequence(candidate);
    if (!parsed.ok() || !validate(*parsed.model).is_valid()) return 0.0;
    const AssembleResult assembled = assemble(*parsed.model, 32);
    if (!assembled.ok()) return 0.0;
    const std::vector<std::uint8_t> snapshot =
        render_snapshot_pgm(assembled.solid);
    return client->score(snapshot, prompt);
  };
}

double parse_score(const std::string& content) {
  // last non-empty line
  size_t end = content.find_last_not_of(" \t\r\n");
  if (end == std::string::npos)
    throw UnparseableScore("empty reply");
  const size_t start = content.find_last_of('\n', end);
  const std::string line =
      content.substr(start == std::string::npos ? 0 : start + 1,
                     end - (start == std::string::npos ? 0 : start + 1) + 1);

  static const std::regex pattern(R"((10|[0-9])(\.[0-9]+)?)");
  std::smatch m;
  if (!std::regex_search(line, m, pattern))
    throw UnparseableScore("no score in final line: " + line);
  return std::clamp(std::stod(m.str()), 0.0, 10.0);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  if (i + 1 == bytes.size()) {
    const unsigned v = bytes[i] << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.append("==");
  } else if (i + 2 == bytes.size()) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string default_grading_template() { return kGradingTemplate; }

std::string render_prompt_template(const std::string& tmpl,
                                   const std::string& description) {
  std::string out = tmpl;
  const std::string needle = "{description}";
  for (size_t pos = 0; (pos = out.find(needle, pos)) != std::string::npos;
       pos += description.size())
    out.replace(pos, needle.size(), description);
  return out;
}

}  // namespace secad
