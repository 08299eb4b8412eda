// Small decoder-only autoregressive transformer with hand-written backprop.
// Double precision throughout; a parameter registry drives the optimizer,
// checkpointing, and finite-difference verification.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "secad/rng.hpp"

namespace secad {

struct DecoderConfig {
  int vocab = 94;
  int dim = 96;
  int layers = 4;
  int heads = 4;
  int max_seq = 256;
  bool operator==(const DecoderConfig&) const = default;
};

struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
};

// Thrown when a sequence exceeds the positional table.
class ContextOverflow : public std::runtime_error {
 public:
  explicit ContextOverflow(const std::string& what)
      : std::runtime_error(what) {}
};

// Forward activations retained for the backward pass of one sequence.
struct Tape {
  std::vector<int> ids;
  struct LayerTape {
    Eigen::MatrixXd x_in;             // T x d
    Eigen::MatrixXd xhat1;            // T x d
    Eigen::VectorXd rstd1;            // T
    Eigen::MatrixXd q, k, v;          // T x d
    std::vector<Eigen::MatrixXd> p;   // per head, T x T
    Eigen::MatrixXd attn_concat;      // T x d (head outputs, pre-Wo)
    Eigen::MatrixXd x_mid;            // T x d
    Eigen::MatrixXd xhat2;            // T x d
    Eigen::VectorXd rstd2;            // T
    Eigen::MatrixXd h1;               // T x 4d (pre-gelu)
    Eigen::MatrixXd g;                // T x 4d (post-gelu)
  };
  std::vector<LayerTape> layers;
  Eigen::MatrixXd x_final;  // T x d, input to the final layernorm
  Eigen::MatrixXd xhatf;    // T x d
  Eigen::VectorXd rstdf;    // T
  Eigen::MatrixXd logits;   // T x vocab
};

// Incremental decoding state for sampling.
struct KvCache {
  std::vector<Eigen::MatrixXd> k, v;  // per layer, grows to T x d
  int length = 0;
};

struct SampleConfig {
  double temperature = 0.3;
  int top_k = 50;
  double top_p = 0.9;
  int max_tokens = 256;
};

class Decoder {
 public:
  Decoder(const DecoderConfig& config, std::uint64_t seed);

  const DecoderConfig& config() const { return config_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::int64_t parameter_count() const;
  void zero_grad();

  // Logits for every position (T x vocab). A non-null tape captures the
  // activations needed by backward(). Throws ContextOverflow for long input.
  Eigen::MatrixXd forward(const std::vector<int>& ids, Tape* tape = nullptr) const;

  // Accumulates parameter gradients for dlogits (T x vocab) recorded on tape.
  void backward(const Tape& tape, const Eigen::MatrixXd& dlogits);

  // Logits for the next token given one appended id; extends the cache.
  Eigen::VectorXd step(KvCache& cache, int id) const;

  // Autoregressive sampling from a prompt until <eos>, the token budget, or
  // the context limit. Returns the full sequence including the prompt.
  std::vector<int> sample(const std::vector<int>& prompt, int eos_id,
                          const SampleConfig& config, Rng& rng) const;

 private:
  struct Idx {
    int embed, pos;
    std::vector<int> layer_base;  // 16 params per layer
    int lnf_g, lnf_b, lm_w, lm_b;
  };

  const Eigen::MatrixXd& p(int idx) const {
    return params_[static_cast<size_t>(idx)].value;
  }
  Eigen::MatrixXd& g(int idx) {
    return params_[static_cast<size_t>(idx)].grad;
  }

  DecoderConfig config_;
  std::vector<Param> params_;
  Idx idx_;
};

// Deep frozen copy used as the DPO reference policy.
Decoder snapshot_reference(const Decoder& model);

// --- checkpoints -------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const Decoder& model);
Decoder decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Decoder& model, const std::string& path);
Decoder load_checkpoint(const std::string& path);

// --- losses ------------------------------------------------------------------

// One supervised example: token ids with the loss applied from target_start
// (everything before it is prompt and is masked out).
struct SupervisedExample {
  std::vector<int> ids;
  int target_start = 0;
};

// Mean over the batch of the per-sequence mean negative log-likelihood of the
// target region. Accumulates gradients into the model when with_grad.
double sl_loss(Decoder& model, const std::vector<SupervisedExample>& batch,
               bool with_grad);

// Sum of target-token log-probabilities for a single sequence.
double sequence_logprob(const Decoder& model, const SupervisedExample& ex,
                        Tape* tape = nullptr);

// Backward for sequence_logprob: accumulates coef * d(logprob)/d(theta).
void sequence_logprob_backward(Decoder& model, const Tape& tape,
                               const SupervisedExample& ex, double coef);

// -log sigmoid(beta * delta), the per-pair preference loss.
double dpo_pair_loss(double delta, double beta);

struct PreferenceExample {
  SupervisedExample chosen;
  SupervisedExample rejected;
};

struct DpoStats {
  double loss = 0.0;
  double mean_margin = 0.0;  // mean policy-vs-reference delta
};

// Mean preference loss over the batch; reference log-probs are computed with
// the frozen snapshot. Accumulates policy gradients when with_grad.
DpoStats dpo_loss(Decoder& policy, const Decoder& reference,
                  const std::vector<PreferenceExample>& batch, double beta,
                  bool with_grad);

// --- optimizer ---------------------------------------------------------------

class AdamW {
 public:
  AdamW(std::vector<Param>& params, double lr, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);
  void step();

 private:
  std::vector<Param>* params_;
  double lr_, beta1_, beta2_, eps_, wd_;
  int t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

}  // namespace secad
