#include <cmath>

#include "doctest.h"
#include "secad/decoder.hpp"
#include "secad/io.hpp"
#include "secad/vocab.hpp"

using namespace secad;

namespace {

DecoderConfig tiny_config() {
  DecoderConfig c;
  c.vocab = 20;
  c.dim = 16;
  c.layers = 2;
  c.heads = 2;
  c.max_seq = 12;
  return c;
}

std::vector<int> random_ids(Rng& rng, int len, int vocab) {
  std::vector<int> ids(static_cast<size_t>(len));
  for (int& id : ids) id = rng.uniform_int(0, vocab - 1);
  return ids;
}

}  // namespace

TEST_CASE("standard configuration lands near half a million parameters") {
  const Decoder model(DecoderConfig{}, 1);
  CHECK(model.parameter_count() == 490270);
  CHECK(DecoderConfig{}.vocab == Vocabulary::standard().size());
}

TEST_CASE("analytic gradients match central differences") {
  const DecoderConfig cfg = tiny_config();
  Decoder model(cfg, 42);
  Rng rng(7);
  SupervisedExample ex;
  ex.ids = random_ids(rng, 9, cfg.vocab);
  ex.target_start = 3;

  model.zero_grad();
  (void)sl_loss(model, {ex}, /*with_grad=*/true);

  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const size_t pi = rng.uniform_int(0, static_cast<int>(model.params().size()) - 1);
    Param& p = model.params()[pi];
    if (p.value.size() == 0) continue;
    const Eigen::Index flat = rng.uniform_int(0, static_cast<int>(p.value.size()) - 1);
    const double saved = p.value.data()[flat];

    p.value.data()[flat] = saved + h;
    const double up = sl_loss(model, {ex}, false);
    p.value.data()[flat] = saved - h;
    const double down = sl_loss(model, {ex}, false);
    p.value.data()[flat] = saved;

    const double numeric = (up - down) / (2.0 * h);
    const double analytic = p.grad.data()[flat];
    const double scale =
        std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    CHECK_MESSAGE(std::abs(numeric - analytic) / scale < 1e-4,
                  p.name << "[" << flat << "]: numeric " << numeric
                         << " vs analytic " << analytic);
    checked += 1;
  }
  CHECK(checked >= 30);
}

TEST_CASE("preference-loss gradients match central differences") {
  const DecoderConfig cfg = tiny_config();
  Decoder policy(cfg, 5);
  const Decoder reference(cfg, 6);  // distinct weights so delta != 0
  Rng rng(11);
  PreferenceExample pair;
  pair.chosen.ids = random_ids(rng, 8, cfg.vocab);
  pair.chosen.target_start = 3;
  pair.rejected.ids = random_ids(rng, 10, cfg.vocab);
  pair.rejected.target_start = 3;
  const double beta = 0.3;

  policy.zero_grad();
  (void)dpo_loss(policy, reference, {pair}, beta, true);

  const double h = 1e-5;
  for (int trial = 0; trial < 15; ++trial) {
    const size_t pi = rng.uniform_int(0, static_cast<int>(policy.params().size()) - 1);
    Param& p = policy.params()[pi];
    const Eigen::Index flat = rng.uniform_int(0, static_cast<int>(p.value.size()) - 1);
    const double saved = p.value.data()[flat];

    p.value.data()[flat] = saved + h;
    const double up = dpo_loss(policy, reference, {pair}, beta, false).loss;
    p.value.data()[flat] = saved - h;
    const double down = dpo_loss(policy, reference, {pair}, beta, false).loss;
    p.value.data()[flat] = saved;

    const double numeric = (up - down) / (2.0 * h);
    const double analytic = p.grad.data()[flat];
    const double scale =
        std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    CHECK_MESSAGE(std::abs(numeric - analytic) / scale < 1e-4,
                  p.name << "[" << flat << "]: numeric " << numeric
                         << " vs analytic " << analytic);
  }
}

TEST_CASE("uniform logits give log-vocab supervised loss") {
  const DecoderConfig cfg = tiny_config();
  Decoder model(cfg, 3);
  for (Param& p : model.params())
    if (p.name == "lm.w" || p.name == "lm.b") p.value.setZero();
  Rng rng(2);
  SupervisedExample ex;
  ex.ids = random_ids(rng, 10, cfg.vocab);
  ex.target_start = 4;
  CHECK(sl_loss(model, {ex}, false) ==
        doctest::Approx(std::log(20.0)).epsilon(1e-12));
}

TEST_CASE("preference loss at the reference point is log 2") {
  const DecoderConfig cfg = tiny_config();
  Decoder policy(cfg, 9);
  const Decoder reference = snapshot_reference(policy);
  Rng rng(4);
  std::vector<PreferenceExample> batch(3);
  for (PreferenceExample& pair : batch) {
    pair.chosen.ids = random_ids(rng, 7, cfg.vocab);
    pair.chosen.target_start = 2;
    pair.rejected.ids = random_ids(rng, 9, cfg.vocab);
    pair.rejected.target_start = 2;
  }
  for (const double beta : {0.05, 0.1, 0.5}) {
    const DpoStats stats = dpo_loss(policy, reference, batch, beta, false);
    CHECK(std::abs(stats.loss - std::log(2.0)) < 1e-9);
    CHECK(std::abs(stats.mean_margin) < 1e-9);
  }
  CHECK(dpo_pair_loss(0.0, 0.1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(dpo_pair_loss(2.0, 1.0) ==
        doctest::Approx(0.12692801104297263).epsilon(1e-12));
}

TEST_CASE("incremental decoding matches the batch forward pass") {
  const DecoderConfig cfg = tiny_config();
  const Decoder model(cfg, 13);
  Rng rng(6);
  const std::vector<int> ids = random_ids(rng, 11, cfg.vocab);
  const Eigen::MatrixXd logits = model.forward(ids);

  KvCache cache;
  Eigen::VectorXd last;
  for (int id : ids) last = model.step(cache, id);
  CHECK((last.transpose() - logits.row(logits.rows() - 1)).cwiseAbs().maxCoeff() <
        1e-9);

  // every intermediate position agrees too
  KvCache cache2;
  for (size_t i = 0; i < ids.size(); ++i) {
    const Eigen::VectorXd step_logits = model.step(cache2, ids[i]);
    CHECK((step_logits.transpose() - logits.row(static_cast<Eigen::Index>(i)))
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }
}

TEST_CASE("sampling is seed-deterministic and respects limits") {
  const DecoderConfig cfg = tiny_config();
  const Decoder model(cfg, 21);
  SampleConfig sc;
  sc.temperature = 0.8;
  sc.top_k = 10;
  sc.top_p = 0.95;
  sc.max_tokens = 6;
  const std::vector<int> prompt = {1, 4, 5};

  Rng r1(77), r2(77), r3(78);
  const auto a = model.sample(prompt, /*eos=*/2, sc, r1);
  const auto b = model.sample(prompt, 2, sc, r2);
  CHECK(a == b);
  CHECK(a.size() <= prompt.size() + 6);
  (void)model.sample(prompt, 2, sc, r3);

  // greedy mode equals repeated argmax
  SampleConfig greedy = sc;
  greedy.temperature = 0.0;
  greedy.max_tokens = 4;
  Rng r4(1);
  const auto g = model.sample(prompt, 2, greedy, r4);
  KvCache cache;
  Eigen::VectorXd logits;
  for (int id : prompt) logits = model.step(cache, id);
  Eigen::Index arg = 0;
  logits.maxCoeff(&arg);
  CHECK(g[prompt.size()] == static_cast<int>(arg));

  // the context limit caps generation instead of throwing
  SampleConfig runaway = sc;
  runaway.max_tokens = 1000;
  Rng r5(3);
  const auto long_seq = model.sample(prompt, /*eos=*/19, runaway, r5);
  CHECK(long_seq.size() <= static_cast<size_t>(cfg.max_seq) + 1);

  CHECK_THROWS_AS(
      (void)model.forward(random_ids(r5, cfg.max_seq + 1, cfg.vocab)),
      ContextOverflow);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Decoder model(tiny_config(), 31);
  const auto bytes = encode_checkpoint(model);
  const Decoder back = decode_checkpoint(bytes);
  CHECK(back.config() == model.config());
  for (size_t i = 0; i < model.params().size(); ++i)
    CHECK(back.params()[i].value == model.params()[i].value);
  CHECK(fnv1a(bytes) == fnv1a(encode_checkpoint(back)));

  Rng rng(1);
  const std::vector<int> ids = random_ids(rng, 8, 20);
  CHECK(model.forward(ids) == back.forward(ids));

  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS((void)decode_checkpoint(corrupt), std::invalid_argument);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 9);
  CHECK_THROWS_AS((void)decode_checkpoint(truncated), std::invalid_argument);
}

TEST_CASE("optimizer steps reduce both losses") {
  const DecoderConfig cfg = tiny_config();
  Rng rng(15);
  SupervisedExample ex;
  ex.ids = random_ids(rng, 10, cfg.vocab);
  ex.target_start = 3;

  Decoder model(cfg, 44);
  AdamW opt(model.params(), 1e-2);
  const double before = sl_loss(model, {ex}, false);
  for (int i = 0; i < 5; ++i) {
    model.zero_grad();
    (void)sl_loss(model, {ex}, true);
    opt.step();
  }
  CHECK(sl_loss(model, {ex}, false) < before);

  // one preference phase increases the chosen-vs-rejected margin
  Decoder policy(cfg, 44);
  const Decoder reference = snapshot_reference(policy);
  PreferenceExample pair;
  pair.chosen.ids = random_ids(rng, 8, cfg.vocab);
  pair.chosen.target_start = 2;
  pair.rejected.ids = random_ids(rng, 8, cfg.vocab);
  pair.rejected.target_start = 2;
  AdamW popt(policy.params(), 1e-2);
  const DpoStats start = dpo_loss(policy, reference, {pair}, 0.1, false);
  for (int i = 0; i < 5; ++i) {
    policy.zero_grad();
    (void)dpo_loss(policy, reference, {pair}, 0.1, true);
    popt.step();
  }
  const DpoStats end = dpo_loss(policy, reference, {pair}, 0.1, false);
  CHECK(end.loss < start.loss);
  CHECK(end.mean_margin > start.mean_margin);
}
