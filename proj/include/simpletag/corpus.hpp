#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace simpletag {

enum class Sentiment { Pos = 0, Neu = 1, Neg = 2 };

// Token-level tags. Values are class indices of the 1D logits.
enum class Tag1D { A = 0, O = 1, N = 2 };
inline constexpr int kNumTags1D = 3;

// Token-pair tags. Values are class indices of the 2D logits; the first
// three coincide with Sentiment.
enum class Tag2D { Pos = 0, Neu = 1, Neg = 2, N = 3 };
inline constexpr int kNumTags2D = 4;

std::string_view polarity_name(Sentiment s);  // "POS" / "NEU" / "NEG"
std::optional<Sentiment> parse_polarity(std::string_view name);

// Inclusive token range.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool contains(std::size_t i) const { return start <= i && i <= end; }
  bool overlaps(const Span& o) const { return start <= o.end && o.start <= end; }
  auto operator<=>(const Span&) const = default;
};

struct Triplet {
  Span aspect;
  Span opinion;
  Sentiment sentiment = Sentiment::Pos;

  auto operator<=>(const Triplet&) const = default;
};

std::string to_string(const Triplet& t);

struct LabeledSentence {
  std::vector<std::string> tokens;
  std::vector<Triplet> triplets;  // file order

  bool operator==(const LabeledSentence&) const = default;
};

// Gold tag surfaces of one sentence. tags2d is n*n row-major.
struct TagTargets {
  std::size_t n = 0;
  std::vector<Tag1D> tags1d;
  std::vector<Tag2D> tags2d;

  Tag2D at(std::size_t i, std::size_t j) const { return tags2d[i * n + j]; }
  std::vector<int> classes1d() const;
  std::vector<int> classes2d() const;
};

// Parses `<tokens>####<triplet list>`. `line_number` is only used in errors.
LabeledSentence parse_v2_line(std::string_view line, std::size_t line_number = 0);

// Inverse of parse_v2_line; canonical spacing ("[1, 2]", "), (").
std::string serialize_v2_line(const LabeledSentence& sentence);

// Reads every non-blank line. Errors carry the file name and line number.
std::vector<LabeledSentence> read_v2_file(const std::filesystem::path& path);

// Tokens of each non-blank line; anything after "####" is ignored.
std::vector<std::vector<std::string>> read_token_lines(const std::filesystem::path& path);

// Throws ConflictError when the triplets cannot be written onto one pair
// of tag surfaces and decoded back unchanged.
TagTargets encode_tags(const LabeledSentence& sentence);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  int id(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  // Words must start with the two reserved tokens and be unique.
  static Vocabulary from_words(std::vector<std::string> words);

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> ids_;
};

// Frequency-descending, then lexicographic; words below min_count are dropped.
Vocabulary build_vocab(const std::vector<LabeledSentence>& corpus, int min_count);

}  // namespace simpletag
