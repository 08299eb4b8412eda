// Deterministic toy corpus: a tiny prompt grammar with exact CAD ground truth.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "secad/io.hpp"
#include "secad/rng.hpp"
#include "secad/sem.hpp"

namespace secad {

// Prompts follow "a <size> <shape>" optionally extended by
// "with <count> hole(s)": 4 sizes x 4 shapes x 5 hole counts = 80 items.
std::vector<std::string> toy_prompts();

// Ground-truth model for a prompt; throws std::invalid_argument otherwise.
CadModel toy_ground_truth(const std::string& text);

// All 80 unique records with serialized ground truth.
std::vector<DatasetRecord> toy_corpus();

// The corpus tiled `copies` times and shuffled; the usual training input.
std::vector<DatasetRecord> toy_training_set(int copies, std::uint64_t seed);

// Reference-anchored candidate generator for exercising the preference
// pipeline without a trained sampler: emits the reference itself, mild and
// severe geometric corruptions, and token-level damage, k at a time.
std::vector<std::string> perturb_candidates(const CadModel& reference, int k,
                                            Rng& rng);

}  // namespace secad
