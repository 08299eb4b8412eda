// Training harness: supervised warm-up alternating with preference tuning
// against a frozen reference snapshot.
#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "secad/decoder.hpp"
#include "secad/io.hpp"
#include "secad/prefgen.hpp"

namespace secad {

// Raised when phases are driven out of order, e.g. preference tuning without
// a fresh reference snapshot.
class SchedulingViolation : public std::logic_error {
 public:
  explicit SchedulingViolation(const std::string& what)
      : std::logic_error(what) {}
};

struct TrainOptions {
  int sl_epochs = 40;         // initial supervised phase
  int vf_epochs = 5;          // preference epochs per round
  int sl_refresh_epochs = 1;  // supervised epochs closing each round
  int rounds = 2;
  int batch = 32;
  int pair_batch = 16;
  double lr = 1e-3;     // supervised
  double lr_vf = 1e-4;  // preference
  double beta = 0.1;
  double weight_decay = 0.0;
  double abort_ir_pct = 95.0;  // stop when the probe degenerates
  int probe_prompts = 50;
  std::uint64_t seed = 1234;
  bool vf_only = false;        // drop the supervised refresh between rounds
  std::string checkpoint_dir;  // empty: no checkpoints
  std::string log_path;        // empty: no JSONL log
};

enum class RunStatus { Completed, AbortedHighInvalidity };

// Fresh preference pairs for a training round, drawn against the current
// policy.
using PairSource =
    std::function<std::vector<PreferencePair>(const Decoder& policy, int round)>;

// Mean chosen-minus-rejected log-probability under the policy alone.
double policy_margin(const Decoder& policy,
                     const std::vector<PreferenceExample>& pairs);

class Trainer {
 public:
  Trainer(Decoder& model, std::vector<DatasetRecord> dataset,
          TrainOptions options);

  void set_pair_source(PairSource source) { pair_source_ = std::move(source); }

  // Full schedule: SL, then per round [snapshot, VF, SL refresh].
  RunStatus run();

  // Individual phases, exposed for scheduling tests and partial runs.
  double sl_phase(int epochs);
  DpoStats vf_phase(const std::vector<PreferenceExample>& pairs);
  void snapshot();

  // Invalidity percentage of fresh samples from the current policy.
  double probe_invalidity();

  const std::vector<std::string>& phase_trace() const { return trace_; }
  const Decoder* reference() const {
    return reference_ ? &*reference_ : nullptr;
  }
  int skipped_long_sequences() const { return skipped_; }

 private:
  void log_line(const std::string& phase, int round, int epoch, double loss,
                std::optional<double> ir, std::optional<double> margin);
  void write_checkpoint(const std::string& stem, double loss,
                        std::optional<double> ir);

  Decoder& model_;
  TrainOptions opt_;
  std::vector<SupervisedExample> examples_;
  std::vector<std::string> prompts_;
  std::optional<Decoder> reference_;
  bool reference_fresh_ = false;
  PairSource pair_source_;
  std::vector<std::string> trace_;
  std::ofstream log_;
  int round_ = 0;
  int skipped_ = 0;
  std::uint64_t shuffle_counter_ = 0;
  std::uint64_t probe_counter_ = 0;
};

}  // namespace secad
