// Preference-pair generation: sample candidates per prompt, score them
// against the reference geometry, and keep ordered pairs that clear the
// margin and quality gates.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "secad/decoder.hpp"
#include "secad/io.hpp"
#include "secad/sem.hpp"

namespace secad {

struct SamplingConfig {
  int k = 5;  // candidates per prompt
  double temperature = 0.3;
  double top_p = 0.9;
  int top_k = 50;
  int max_tokens = 1024;
};

struct PairFilter {
  double min_margin = 2.0;  // chosen minus rejected score
  double min_chosen = 5.0;  // quality floor for the chosen side
};

struct ScoredCandidate {
  std::string sequence;
  double score = 0.0;  // 0..10
  bool valid = false;  // parses, validates, and renders
};

struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double chosen_score = 0.0;
  double rejected_score = 0.0;
  double margin() const { return chosen_score - rejected_score; }
};

// Deterministic geometric oracle, 0..10: equal parts Chamfer proximity,
// curve-count agreement, and voxel IoU at resolution 32 with 512-point
// clouds under a fixed seed. A candidate equal to the reference scores
// exactly 10; anything that fails to parse, validate, or render scores 0.
double oracle_score(const std::string& candidate, const CadModel& reference);

// Pluggable scorer: the oracle and the remote image grader sit behind the
// same shape. An empty function means the oracle.
using ScoreFn = std::function<double(
    const std::string& candidate, const CadModel& reference,
    const std::string& prompt)>;

std::vector<ScoredCandidate> score_candidates(
    const std::vector<std::string>& candidates, const CadModel& reference,
    const ScoreFn& score = {}, const std::string& prompt = {});

// Disjoint rank pairing over the score order: best vs worst, second vs
// second-worst, and so on. A pair is kept when the chosen side is valid and
// clears the quality floor, the margin is met, the rejected side tokenizes,
// and the two sequences differ.
std::vector<PreferencePair> build_pairs(
    const std::string& prompt, const std::vector<ScoredCandidate>& scored,
    const PairFilter& filter = {});

// Produces k candidate sequences for a prompt; the seed makes each
// (prompt index, base seed) combination reproducible.
using CandidateSampler = std::function<std::vector<std::string>(
    const std::string& prompt, int k, std::uint64_t seed)>;

// Runs the full pipeline over a record set. Records whose reference fails to
// parse are skipped.
std::vector<PreferencePair> generate_pairs(
    const std::vector<DatasetRecord>& records, const CandidateSampler& sampler,
    const SamplingConfig& sampling, std::uint64_t seed,
    const PairFilter& filter = {}, const ScoreFn& score = {});

// Candidate samplers: one drawing from a trained decoder, one applying
// scripted perturbations to the reference (pipeline tests and bootstrap).
CandidateSampler decoder_sampler(const Decoder& model);
CandidateSampler perturbation_sampler(const std::vector<DatasetRecord>& records);

// JSONL round-trip for pair files: {"prompt","chosen","rejected",
// "chosen_score","rejected_score"} per line.
void write_pairs_jsonl(const std::string& path,
                       const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> read_pairs_jsonl(const std::string& path);

// Encoding into training examples: <bos> prompt <sep> body <eos>.
SupervisedExample encode_supervised(const std::string& prompt,
                                    const std::string& body);
PreferenceExample encode_preference(const PreferencePair& pair);

}  // namespace secad
