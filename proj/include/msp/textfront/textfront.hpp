#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "msp/common/errors.hpp"

namespace msp::text {

inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr int kWordBoundary = 2;

/// Raised by g2p for characters outside the supported set.
class UnsupportedCharacterError : public ContractError {
 public:
  UnsupportedCharacterError(const std::string& what, std::vector<char32_t> codepoints)
      : ContractError(what), codepoints_(std::move(codepoints)) {}
  const std::vector<char32_t>& codepoints() const noexcept { return codepoints_; }

 private:
  std::vector<char32_t> codepoints_;
};

/// Lowercased, whitespace-collapsed text. Normalization is idempotent.
class Transcript {
 public:
  Transcript() = default;
  explicit Transcript(std::string_view raw);

  const std::string& text() const noexcept { return text_; }
  const std::string& normalized() const noexcept { return normalized_; }

  static std::string normalize(std::string_view raw);

 private:
  std::string text_;
  std::string normalized_;
};

struct PhonemeSequence {
  std::vector<int> ids;
  int vocabulary_size = 0;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  friend bool operator==(const PhonemeSequence&, const PhonemeSequence&) = default;
};

/// grapheme -> phoneme id mapping for letters and digits.
class RuleTable {
 public:
  /// The table compiled into the library (identical to data/g2p_rules_v1.tsv).
  static const RuleTable& builtin();
  /// Parses the versioned "grapheme TAB id" text format.
  static RuleTable parse(std::string_view text);
  static RuleTable load(const std::string& path);

  int version() const noexcept { return version_; }
  int vocabulary_size() const noexcept { return vocabulary_size_; }
  /// -1 when the grapheme has no rule.
  int lookup(char grapheme) const noexcept;

  friend bool operator==(const RuleTable&, const RuleTable&) = default;

 private:
  int version_ = 0;
  int vocabulary_size_ = 3;
  std::array<int, 128> ids_{};
};

/// Letters/digits map through the rule table, spaces become word boundaries,
/// basic punctuation is dropped. Runs of boundaries collapse to one and no
/// boundary is emitted at either end.
PhonemeSequence g2p(const Transcript& t, const RuleTable& table = RuleTable::builtin());

struct TextPrompt {
  PhonemeSequence phonemes;
  /// Index of the boundary symbol separating prompt and target (0 when the
  /// prompt transcript is empty).
  std::size_t prompt_len = 0;
};

/// g2p(prompt) ++ [word boundary] ++ g2p(target).
TextPrompt build_text_prompt(const Transcript& prompt_transcript, const Transcript& target_text,
                             const RuleTable& table = RuleTable::builtin());

}  // namespace msp::text
