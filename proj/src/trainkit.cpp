#include "secad/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "secad/metrics.hpp"
#include "secad/vocab.hpp"

namespace secad {

double policy_margin(const Decoder& policy,
                     const std::vector<PreferenceExample>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("policy_margin: no pairs");
  double acc = 0.0;
  for (const PreferenceExample& pair : pairs)
    acc += sequence_logprob(policy, pair.chosen) -
           sequence_logprob(policy, pair.rejected);
  return acc / static_cast<double>(pairs.size());
}

Trainer::Trainer(Decoder& model, std::vector<DatasetRecord> dataset,
                 TrainOptions options)
    : model_(model), opt_(options) {
  for (const DatasetRecord& rec : dataset) {
    SupervisedExample ex = encode_supervised(rec.text, rec.sequence);
    if (static_cast<int>(ex.ids.size()) > model_.config().max_seq) {
      skipped_ += 1;
      continue;
    }
    examples_.push_back(std::move(ex));
    prompts_.push_back(rec.text);
  }
  if (examples_.empty())
    throw std::invalid_argument("Trainer: no usable training examples");
  if (!opt_.log_path.empty()) {
    log_.open(opt_.log_path);
    if (!log_) throw IoError("cannot write " + opt_.log_path);
  }
}

void Trainer::log_line(const std::string& phase, int round, int epoch,
                       double loss, std::optional<double> ir,
                       std::optional<double> margin) {
  if (!log_.is_open()) return;
  nlohmann::ordered_json j;
  j["phase"] = phase;
  j["round"] = round;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["ir_probe"] = ir ? nlohmann::json(*ir) : nlohmann::json(nullptr);
  j["margin"] = margin ? nlohmann::json(*margin) : nlohmann::json(nullptr);
  log_ << j.dump() << '\n';
  log_.flush();
}

void Trainer::write_checkpoint(const std::string& stem, double loss,
                               std::optional<double> ir) {
  if (opt_.checkpoint_dir.empty()) return;
  const std::string base = opt_.checkpoint_dir + "/" + stem;
  save_checkpoint(model_, base + ".ckpt");
  nlohmann::ordered_json j;
  j["phase"] = stem.substr(0, stem.find('_'));
  j["round"] = round_;
  j["loss"] = loss;
  j["ir_probe"] = ir ? nlohmann::json(*ir) : nlohmann::json(nullptr);
  j["parameters"] = model_.parameter_count();
  j["hash"] = fnv1a_hex(encode_checkpoint(model_));
  write_file(base + ".json", j.dump(2) + "\n");
}

double Trainer::sl_phase(int epochs) {
  trace_.push_back("SL");
  AdamW opt(model_.params(), opt_.lr, 0.9, 0.999, 1e-8, opt_.weight_decay);
  std::vector<size_t> order(examples_.size());
  std::iota(order.begin(), order.end(), size_t{0});
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(Rng::mix(opt_.seed, 0x51ull * 1000 + shuffle_counter_++));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(
                                  0, static_cast<int>(i) - 1))]);
    double acc = 0.0;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(opt_.batch)) {
      std::vector<SupervisedExample> batch;
      for (size_t j = at;
           j < std::min(order.size(), at + static_cast<size_t>(opt_.batch)); ++j)
        batch.push_back(examples_[order[j]]);
      model_.zero_grad();
      acc += sl_loss(model_, batch, /*with_grad=*/true);
      opt.step();
      batches += 1;
    }
    epoch_loss = acc / std::max(1, batches);
    log_line("sl", round_, epoch, epoch_loss, std::nullopt, std::nullopt);
  }
  reference_fresh_ = false;  // the policy moved; any snapshot is stale
  return epoch_loss;
}

void Trainer::snapshot() {
  reference_ = snapshot_reference(model_);
  reference_fresh_ = true;
  trace_.push_back("SNAP");
}

DpoStats Trainer::vf_phase(const std::vector<PreferenceExample>& pairs) {
  if (!reference_ || !reference_fresh_)
    throw SchedulingViolation(
        "preference phase requires a fresh reference snapshot");
  if (pairs.empty())
    throw std::invalid_argument("vf_phase: no preference pairs");
  trace_.push_back("VF");
  reference_fresh_ = false;  // consumed by this phase

  AdamW opt(model_.params(), opt_.lr_vf, 0.9, 0.999, 1e-8, opt_.weight_decay);
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  DpoStats last;
  for (int epoch = 0; epoch < opt_.vf_epochs; ++epoch) {
    Rng rng(Rng::mix(opt_.seed, 0x7full * 1000 + shuffle_counter_++));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(
                                  0, static_cast<int>(i) - 1))]);
    double loss_acc = 0.0, margin_acc = 0.0;
    int batches = 0;
    for (size_t at = 0; at < order.size();
         at += static_cast<size_t>(opt_.pair_batch)) {
      std::vector<PreferenceExample> batch;
      for (size_t j = at;
           j < std::min(order.size(), at + static_cast<size_t>(opt_.pair_batch));
           ++j)
        batch.push_back(pairs[order[j]]);
      model_.zero_grad();
      const DpoStats stats =
          dpo_loss(model_, *reference_, batch, opt_.beta, /*with_grad=*/true);
      opt.step();
      loss_acc += stats.loss;
      margin_acc += stats.mean_margin;
      batches += 1;
    }
    last.loss = loss_acc / std::max(1, batches);
    last.mean_margin = margin_acc / std::max(1, batches);
    log_line("vf", round_, epoch, last.loss, std::nullopt, last.mean_margin);
  }
  return last;
}

double Trainer::probe_invalidity() {
  const Vocabulary& vocab = Vocabulary::standard();
  SampleConfig sc;
  sc.temperature = 0.3;
  sc.top_k = 50;
  sc.top_p = 0.9;

  std::vector<std::string> bodies;
  for (int i = 0; i < opt_.probe_prompts; ++i) {
    const std::string& prompt =
        prompts_[static_cast<size_t>(i) % prompts_.size()];
    std::vector<int> prefix = {Vocabulary::kBos};
    for (int id : vocab.encode(prompt)) prefix.push_back(id);
    prefix.push_back(Vocabulary::kSep);
    sc.max_tokens =
        model_.config().max_seq - static_cast<int>(prefix.size());

    Rng rng(Rng::mix(opt_.seed, 0x9e00ull + probe_counter_++));
    const std::vector<int> ids =
        model_.sample(prefix, Vocabulary::kEos, sc, rng);
    bodies.push_back(vocab.decode(std::vector<int>(
        ids.begin() + static_cast<long>(prefix.size()), ids.end())));
  }
  return invalidity_ratio_pct(bodies);
}

RunStatus Trainer::run() {
  round_ = 0;
  const double sl0 = sl_phase(opt_.sl_epochs);
  {
    const double ir = probe_invalidity();
    log_line("probe", round_, 0, sl0, ir, std::nullopt);
    write_checkpoint("sl_round_0", sl0, ir);
  }

  for (round_ = 1; round_ <= opt_.rounds; ++round_) {
    snapshot();
    if (!pair_source_)
      throw SchedulingViolation("run() needs a pair source for VF rounds");
    const std::vector<PreferencePair> raw_pairs = pair_source_(model_, round_);
    std::vector<PreferenceExample> pairs;
    for (const PreferencePair& p : raw_pairs) {
      PreferenceExample ex = encode_preference(p);
      if (static_cast<int>(ex.chosen.ids.size()) <= model_.config().max_seq &&
          static_cast<int>(ex.rejected.ids.size()) <= model_.config().max_seq)
        pairs.push_back(std::move(ex));
    }
    if (pairs.empty())
      throw std::invalid_argument("run(): round produced no usable pairs");

    const DpoStats vf = vf_phase(pairs);
    const double ir_vf = probe_invalidity();
    log_line("probe", round_, 0, vf.loss, ir_vf, vf.mean_margin);
    write_checkpoint("vf_round_" + std::to_string(round_), vf.loss, ir_vf);
    if (ir_vf > opt_.abort_ir_pct) return RunStatus::AbortedHighInvalidity;

    if (!opt_.vf_only) {
      const double sl = sl_phase(opt_.sl_refresh_epochs);
      const double ir_sl = probe_invalidity();
      log_line("probe", round_, 0, sl, ir_sl, std::nullopt);
      write_checkpoint("sl_round_" + std::to_string(round_), sl, ir_sl);
      if (ir_sl > opt_.abort_ir_pct) return RunStatus::AbortedHighInvalidity;
    }
  }
  return RunStatus::Completed;
}

}  // namespace secad
