#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "secad/io.hpp"
#include "secad/synth.hpp"
#include "secad/trainkit.hpp"
#include "secad/vocab.hpp"

using namespace secad;

namespace {

DecoderConfig small_config() {
  DecoderConfig c;
  c.vocab = Vocabulary::standard().size();
  c.dim = 32;
  c.layers = 2;
  c.heads = 2;
  c.max_seq = 160;
  return c;
}

std::vector<DatasetRecord> small_dataset() {
  std::vector<DatasetRecord> all = toy_corpus();
  std::vector<DatasetRecord> out;
  for (size_t i = 0; i < all.size(); i += 10) out.push_back(all[i]);
  return out;  // 8 records
}

TrainOptions fast_options() {
  TrainOptions opt;
  opt.sl_epochs = 1;
  opt.vf_epochs = 1;
  opt.sl_refresh_epochs = 1;
  opt.rounds = 2;
  opt.batch = 8;
  opt.pair_batch = 4;
  opt.probe_prompts = 4;
  opt.abort_ir_pct = 101.0;  // tiny fixture models stay invalid; do not abort
  opt.seed = 99;
  return opt;
}

PairSource perturbation_pair_source(const std::vector<DatasetRecord>& records) {
  return [records](const Decoder&, int round) {
    SamplingConfig sampling;
    return generate_pairs(records, perturbation_sampler(records), sampling,
                          1000 + static_cast<std::uint64_t>(round));
  };
}

}  // namespace

TEST_CASE("preference phases demand a fresh snapshot") {
  Decoder model(small_config(), 1);
  Trainer trainer(model, small_dataset(), fast_options());

  const auto records = small_dataset();
  std::vector<PreferenceExample> pairs;
  for (const PreferencePair& p : perturbation_pair_source(records)(model, 1))
    pairs.push_back(encode_preference(p));
  REQUIRE(!pairs.empty());

  CHECK_THROWS_AS((void)trainer.vf_phase(pairs), SchedulingViolation);

  trainer.snapshot();
  (void)trainer.vf_phase(pairs);  // consumes the snapshot
  CHECK_THROWS_AS((void)trainer.vf_phase(pairs), SchedulingViolation);

  // a supervised phase moves the policy, so an old snapshot goes stale
  trainer.snapshot();
  (void)trainer.sl_phase(1);
  CHECK_THROWS_AS((void)trainer.vf_phase(pairs), SchedulingViolation);
}

TEST_CASE("alternating schedule leaves the expected phase trace") {
  Decoder model(small_config(), 2);
  const auto records = small_dataset();
  Trainer trainer(model, records, fast_options());
  trainer.set_pair_source(perturbation_pair_source(records));
  CHECK(trainer.run() == RunStatus::Completed);
  CHECK(trainer.phase_trace() ==
        std::vector<std::string>{"SL", "SNAP", "VF", "SL", "SNAP", "VF", "SL"});
}

TEST_CASE("vf-only schedule drops the supervised refresh") {
  Decoder model(small_config(), 2);
  const auto records = small_dataset();
  TrainOptions opt = fast_options();
  opt.vf_only = true;
  Trainer trainer(model, records, opt);
  trainer.set_pair_source(perturbation_pair_source(records));
  CHECK(trainer.run() == RunStatus::Completed);
  CHECK(trainer.phase_trace() ==
        std::vector<std::string>{"SL", "SNAP", "VF", "SNAP", "VF"});
}

TEST_CASE("degenerate probes abort the run") {
  Decoder model(small_config(), 3);
  const auto records = small_dataset();
  TrainOptions opt = fast_options();
  opt.abort_ir_pct = -1.0;  // any probe trips the wire
  Trainer trainer(model, records, opt);
  trainer.set_pair_source(perturbation_pair_source(records));
  CHECK(trainer.run() == RunStatus::AbortedHighInvalidity);
  CHECK(trainer.phase_trace() ==
        std::vector<std::string>{"SL", "SNAP", "VF"});
}

TEST_CASE("training runs are seed-deterministic down to the checkpoint hash") {
  const auto records = small_dataset();
  const auto run_once = [&records](const std::string& tag) {
    Decoder model(small_config(), 7);
    TrainOptions opt = fast_options();
    opt.rounds = 1;
    const auto dir =
        std::filesystem::temp_directory_path() / ("secad_det_" + tag);
    std::filesystem::create_directories(dir);
    opt.checkpoint_dir = dir.string();
    Trainer trainer(model, records, opt);
    trainer.set_pair_source(perturbation_pair_source(records));
    (void)trainer.run();
    const std::string hash = fnv1a_hex(encode_checkpoint(model));
    std::filesystem::remove_all(dir);
    return hash;
  };
  CHECK(run_once("a") == run_once("b"));
}

TEST_CASE("checkpoints and the training log are written and well-formed") {
  const auto dir = std::filesystem::temp_directory_path() / "secad_ckpt_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  Decoder model(small_config(), 4);
  const auto records = small_dataset();
  TrainOptions opt = fast_options();
  opt.rounds = 1;
  opt.checkpoint_dir = dir.string();
  opt.log_path = (dir / "train_log.jsonl").string();
  Trainer trainer(model, records, opt);
  trainer.set_pair_source(perturbation_pair_source(records));
  CHECK(trainer.run() == RunStatus::Completed);

  for (const char* stem : {"sl_round_0", "vf_round_1", "sl_round_1"}) {
    const auto ckpt = dir / (std::string(stem) + ".ckpt");
    const auto side = dir / (std::string(stem) + ".json");
    REQUIRE_MESSAGE(std::filesystem::exists(ckpt), stem);
    REQUIRE_MESSAGE(std::filesystem::exists(side), stem);
    const nlohmann::json meta =
        nlohmann::json::parse(slurp_file(side));
    CHECK(meta.contains("loss"));
    CHECK(meta.contains("hash"));
    CHECK(meta["parameters"].get<std::int64_t>() == model.parameter_count());
    // the last checkpoint's hash matches the final model
    if (std::string(stem) == "sl_round_1")
      CHECK(meta["hash"].get<std::string>() ==
            fnv1a_hex(encode_checkpoint(model)));
    // the checkpoint itself loads
    const Decoder back = load_checkpoint(ckpt.string());
    CHECK(back.config() == model.config());
  }

  // log: every line parses; sl, vf, and probe entries all present
  std::ifstream log(opt.log_path);
  REQUIRE(log.good());
  std::string line;
  std::set<std::string> phases;
  int lines = 0;
  while (std::getline(log, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    phases.insert(j["phase"].get<std::string>());
    CHECK(std::isfinite(j["loss"].get<double>()));
    lines += 1;
  }
  CHECK(lines >= 5);
  CHECK(phases.count("sl"));
  CHECK(phases.count("vf"));
  CHECK(phases.count("probe"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("long dataset records are skipped, short context is reported") {
  DecoderConfig cfg = small_config();
  cfg.max_seq = 40;  // too small for most toy sequences
  Decoder model(cfg, 5);
  std::vector<DatasetRecord> records = toy_corpus();
  TrainOptions opt = fast_options();
  Trainer trainer(model, records, opt);
  CHECK(trainer.skipped_long_sequences() > 0);
}

TEST_CASE("policy margin moves with preference updates") {
  Decoder model(small_config(), 8);
  const auto records = small_dataset();
  const auto raw = perturbation_pair_source(records)(model, 1);
  REQUIRE(raw.size() >= 4);
  std::vector<PreferenceExample> pairs;
  for (const PreferencePair& p : raw) pairs.push_back(encode_preference(p));

  const double before = policy_margin(model, pairs);
  TrainOptions opt = fast_options();
  opt.vf_epochs = 3;
  opt.lr_vf = 3e-4;
  Trainer trainer(model, records, opt);
  trainer.snapshot();
  (void)trainer.vf_phase(pairs);
  CHECK(policy_margin(model, pairs) > before);
}
