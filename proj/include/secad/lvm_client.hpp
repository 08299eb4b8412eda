// Remote image-grading client: posts a rendered snapshot plus a grading
// prompt to a chat-completion endpoint and parses the numeric score from
// the reply. The transport is injectable so tests can script responses.
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "secad/prefgen.hpp"

namespace secad {

struct MissingCredential : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RateLimited : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnparseableScore : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// status 0 means the request never reached the server.
struct HttpResponse {
  int status = 0;
  std::string body;
};

class LvmTransport {
 public:
  virtual ~LvmTransport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const std::string& api_key) = 0;
};

// Real transport; base_url like "http://127.0.0.1:8080".
std::shared_ptr<LvmTransport> http_transport(const std::string& base_url);

struct LvmConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string endpoint = "/v1/chat/completions";
  std::string model = "lvm-grader";
  std::string api_key;              // from LVM_API_KEY
  std::string prompt_template;      // empty: built-in grading template
  int max_attempts = 3;
  std::chrono::milliseconds backoff{250};  // doubles after each retry
  int max_in_flight = 4;
};

// Reads LVM_API_KEY (required), LVM_BASE_URL and LVM_MODEL (optional).
// Throws MissingCredential when the key is absent or empty.
LvmConfig lvm_config_from_env();

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class LvmClient {
 public:
  // A default-constructed sleeper blocks the calling thread.
  LvmClient(LvmConfig config, std::shared_ptr<LvmTransport> transport,
            Sleeper sleeper = {});

  // Grades one snapshot against a description, 0..10. Retries transient
  // failures (429, 5xx, no connection) with exponential backoff up to
  // max_attempts, then surfaces RateLimited or TransportError. A reply
  // whose final line carries no number raises UnparseableScore.
  double score(std::span<const std::uint8_t> snapshot_pgm,
               const std::string& description);

  const LvmConfig& config() const { return config_; }

 private:
  struct InFlightGuard {
    explicit InFlightGuard(LvmClient& c);
    ~InFlightGuard();
    LvmClient& client;
  };

  LvmConfig config_;
  std::shared_ptr<LvmTransport> transport_;
  Sleeper sleeper_;
  std::mutex mutex_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
};

double score_lvm(std::span<const std::uint8_t> snapshot,
                 const std::string& description, LvmClient& client);

// ScoreFn adapter: renders each candidate to a snapshot and grades it
// remotely; candidates that fail to parse, validate, or render score 0
// without a network call.
ScoreFn lvm_scorer(std::shared_ptr<LvmClient> client);

// First number on the final non-empty line, clamped to [0, 10].
double parse_score(const std::string& content);

std::string base64_encode(std::span<const std::uint8_t> bytes);

// "{description}" substitution; the built-in template matches
// config/prompts/grading.txt.
std::string default_grading_template();
std::string render_prompt_template(const std::string& tmpl,
                                   const std::string& description);

}  // namespace secad
