#include "secad/prefgen.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "secad/metrics.hpp"
#include "secad/render.hpp"
#include "secad/synth.hpp"
#include "secad/vocab.hpp"

namespace secad {

namespace {

constexpr int kOracleRes = 32;
constexpr int kOraclePoints = 512;
constexpr std::uint64_t kOracleSeedRef = 101;
constexpr std::uint64_t kOracleSeedCand = 102;

int total_curves(const CadModel& model) {
  const PrimitiveCounts c = count_primitives(model);
  return c.lines + c.arcs + c.circles;
}

bool vocab_encodable(const std::string& sequence) {
  std::istringstream in(sequence);
  std::string tok;
  const Vocabulary& vocab = Vocabulary::standard();
  while (in >> tok)
    if (!vocab.find(tok)) return false;
  return true;
}

}  // namespace

double oracle_score(const std::string& candidate, const CadModel& reference) {
  const ParseResult parsed = parse_sequence(candidate);
  if (!parsed.ok()) return 0.0;
  if (*parsed.model == reference) return 10.0;
  if (!validate(*parsed.model).is_valid()) return 0.0;

  const AssembleResult cand = assemble(*parsed.model, kOracleRes);
  if (!cand.ok()) return 0.0;
  const AssembleResult ref = assemble(reference, kOracleRes);
  if (!ref.ok()) return 0.0;

  const PointCloud cand_cloud =
      sample_points(cand.solid, kOraclePoints, kOracleSeedCand);
  const PointCloud ref_cloud =
      sample_points(ref.solid, kOraclePoints, kOracleSeedRef);
  const double s_cd =
      10.0 * std::max(0.0, 1.0 - chamfer_distance(cand_cloud, ref_cloud));

  const int nc = total_curves(*parsed.model);
  const int nr = total_curves(reference);
  const double s_curve =
      (nc == 0 && nr == 0)
          ? 10.0
          : 10.0 * (1.0 - std::abs(nc - nr) /
                              static_cast<double>(std::max(nc, nr)));

  const double s_iou = 10.0 * voxel_iou(cand.solid, ref.solid);

  return std::clamp((s_cd + s_curve + s_iou) / 3.0, 0.0, 10.0);
}

std::vector<ScoredCandidate> score_candidates(
    const std::vector<std::string>& candidates, const CadModel& reference,
    const ScoreFn& score, const std::string& prompt) {
  std::vector<ScoredCandidate> out;
  out.reserve(candidates.size());
  for (const std::string& seq : candidates) {
    ScoredCandidate sc;
    sc.sequence = seq;
    sc.score = score ? std::clamp(score(seq, reference, prompt), 0.0, 10.0)
                     : oracle_score(seq, reference);
    const ParseResult parsed = parse_sequence(seq);
    sc.valid = parsed.ok() && is_renderable(*parsed.model).is_valid();
    out.push_back(std::move(sc));
  }
  return out;
}

std::vector<PreferencePair> build_pairs(const std::string& prompt,
                                        const std::vector<ScoredCandidate>& scored,
                                        const PairFilter& filter) {
  std::vector<size_t> order(scored.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scored[a].score > scored[b].score;
  });

  std::vector<PreferencePair> pairs;
  for (size_t i = 0; i + 1 < scored.size() - i; ++i) {
    const ScoredCandidate& chosen = scored[order[i]];
    const ScoredCandidate& rejected = scored[order[scored.size() - 1 - i]];
    if (!chosen.valid) continue;
    if (chosen.score < filter.min_chosen) continue;
    if (chosen.score - rejected.score < filter.min_margin) continue;
    if (chosen.sequence == rejected.sequence) continue;
    if (!vocab_encodable(rejected.sequence)) continue;
    pairs.push_back({prompt, chosen.sequence, rejected.sequence, chosen.score,
                     rejected.score});
  }
  return pairs;
}

std::vector<PreferencePair> generate_pairs(
    const std::vector<DatasetRecord>& records, const CandidateSampler& sampler,
    const SamplingConfig& sampling, std::uint64_t seed,
    const PairFilter& filter, const ScoreFn& score) {
  std::vector<PreferencePair> out;
  for (size_t i = 0; i < records.size(); ++i) {
    const ParseResult ref = parse_sequence(records[i].sequence);
    if (!ref.ok()) continue;
    const std::vector<std::string> candidates =
        sampler(records[i].text, sampling.k, Rng::mix(seed, i));
    const std::vector<ScoredCandidate> scored =
        score_candidates(candidates, *ref.model, score, records[i].text);
    std::vector<PreferencePair> pairs =
        build_pairs(records[i].text, scored, filter);
    out.insert(out.end(), std::make_move_iterator(pairs.begin()),
               std::make_move_iterator(pairs.end()));
  }
  return out;
}

CandidateSampler decoder_sampler(const Decoder& model) {
  return [&model](const std::string& prompt, int k, std::uint64_t seed) {
    const Vocabulary& vocab = Vocabulary::standard();
    std::vector<int> prefix = {Vocabulary::kBos};
    for (int id : vocab.encode(prompt)) prefix.push_back(id);
    prefix.push_back(Vocabulary::kSep);

    SampleConfig sc;
    sc.temperature = 0.3;
    sc.top_k = 50;
    sc.top_p = 0.9;
    sc.max_tokens =
        std::min(1024, model.config().max_seq - static_cast<int>(prefix.size()));

    std::vector<std::string> out;
    for (int j = 0; j < k; ++j) {
      Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(j)));
      const std::vector<int> ids =
          model.sample(prefix, Vocabulary::kEos, sc, rng);
      std::vector<int> body(ids.begin() + static_cast<long>(prefix.size()),
                            ids.end());
      out.push_back(vocab.decode(body));
    }
    return out;
  };
}

CandidateSampler perturbation_sampler(const std::vector<DatasetRecord>& records) {
  auto lookup = std::make_shared<std::unordered_map<std::string, std::string>>();
  for (const DatasetRecord& r : records) (*lookup)[r.text] = r.sequence;
  return [lookup](const std::string& prompt, int k, std::uint64_t seed) {
    const auto it = lookup->find(prompt);
    if (it == lookup->end())
      throw std::invalid_argument("perturbation_sampler: unknown prompt '" +
                                  prompt + "'");
    const ParseResult ref = parse_sequence(it->second);
    if (!ref.ok())
      throw std::invalid_argument("perturbation_sampler: bad reference for '" +
                                  prompt + "'");
    Rng rng(seed);
    return perturb_candidates(*ref.model, k, rng);
  };
}

void write_pairs_jsonl(const std::string& path,
                       const std::vector<PreferencePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const PreferencePair& p : pairs) {
    nlohmann::ordered_json j;
    j["prompt"] = p.prompt;
    j["chosen"] = p.chosen;
    j["rejected"] = p.rejected;
    j["chosen_score"] = p.chosen_score;
    j["rejected_score"] = p.rejected_score;
    out << j.dump() << '\n';
  }
}

std::vector<PreferencePair> read_pairs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<PreferencePair> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    line_no += 1;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("prompt") || !j.contains("chosen") ||
        !j.contains("rejected"))
      throw IoError(path + ":" + std::to_string(line_no) + ": bad pair record");
    PreferencePair p;
    p.prompt = j["prompt"].get<std::string>();
    p.chosen = j["chosen"].get<std::string>();
    p.rejected = j["rejected"].get<std::string>();
    p.chosen_score = j.value("chosen_score", 0.0);
    p.rejected_score = j.value("rejected_score", 0.0);
    out.push_back(std::move(p));
  }
  return out;
}

SupervisedExample encode_supervised(const std::string& prompt,
                                    const std::string& body) {
  const Vocabulary& vocab = Vocabulary::standard();
  SupervisedExample ex;
  ex.ids.push_back(Vocabulary::kBos);
  for (int id : vocab.encode(prompt)) ex.ids.push_back(id);
  ex.ids.push_back(Vocabulary::kSep);
  ex.target_start = static_cast<int>(ex.ids.size());
  for (int id : vocab.encode(body)) ex.ids.push_back(id);
  ex.ids.push_back(Vocabulary::kEos);
  return ex;
}

PreferenceExample encode_preference(const PreferencePair& pair) {
  PreferenceExample ex;
  ex.chosen = encode_supervised(pair.prompt, pair.chosen);
  ex.rejected = encode_supervised(pair.prompt, pair.rejected);
  return ex;
}

}  // namespace secad
