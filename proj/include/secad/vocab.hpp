// Shared token vocabulary covering prompts and model sequences.
#pragma once

#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace secad {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;

  // Specials, the 64 grid numerals, structural markers, curve and boolean
  // words, then the prompt vocabulary.
  static const Vocabulary& standard() {
    static const Vocabulary v = [] {
      std::vector<std::string> tokens = {"<pad>", "<bos>", "<eos>", "<sep>"};
      for (int i = 0; i < 64; ++i) tokens.push_back(std::to_string(i));
      for (const char* t : {"<curve_end>", "<loop_end>", "<face_end>",
                            "<sketch_end>", "line", "arc", "circle", "add",
                            "cut", "intersect", "a", "with", "thin", "tall",
                            "flat", "long", "plate", "block", "cylinder",
                            "disc", "one", "two", "three", "four", "hole",
                            "holes"})
        tokens.emplace_back(t);
      return Vocabulary(std::move(tokens));
    }();
    return v;
  }

  explicit Vocabulary(std::vector<std::string> tokens)
      : tokens_(std::move(tokens)) {
    for (size_t i = 0; i < tokens_.size(); ++i)
      index_[tokens_[i]] = static_cast<int>(i);
    if (index_.size() != tokens_.size())
      throw std::invalid_argument("Vocabulary: duplicate token");
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  std::optional<int> find(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(const std::string& token) const {
    const auto found = find(token);
    if (!found)
      throw std::invalid_argument("Vocabulary: unknown token '" + token + "'");
    return *found;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size())
      throw std::invalid_argument("Vocabulary: id out of range");
    return tokens_[static_cast<size_t>(id)];
  }

  // Whitespace-split encode; throws on tokens outside the vocabulary.
  std::vector<int> encode(const std::string& text) const {
    std::vector<int> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) out.push_back(id(tok));
    return out;
  }

  // Space-joined decode, skipping pad/bos/eos/sep.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id_ : ids) {
      if (id_ == kPad || id_ == kBos || id_ == kEos || id_ == kSep) continue;
      if (!out.empty()) out += ' ';
      out += token(id_);
    }
    return out;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace secad
