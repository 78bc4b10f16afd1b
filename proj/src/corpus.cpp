#include "simpletag/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

constexpr std::string_view kSeparator = "####";
constexpr std::string_view kVocabHeader = "#simpletag-vocab v1";

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// Recursive-descent reader for the bracketed triplet list.
class TripletListReader {
 public:
  TripletListReader(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  std::vector<std::pair<std::vector<long>, std::vector<long>>> index_lists;
  std::vector<std::string> polarities;

  void read() {
    expect('[');
    skip_ws();
    if (peek() != ']') {
      for (;;) {
        read_tuple();
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        break;
      }
    }
    expect(']');
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after triplet list");
  }

 private:
  void read_tuple() {
    expect('(');
    auto aspect = read_index_list();
    expect(',');
    auto opinion = read_index_list();
    expect(',');
    polarities.push_back(read_quoted());
    expect(')');
    index_lists.emplace_back(std::move(aspect), std::move(opinion));
  }

  std::vector<long> read_index_list() {
    expect('[');
    std::vector<long> out;
    skip_ws();
    if (peek() != ']') {
      for (;;) {
        skip_ws();
        std::size_t begin = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (begin == pos_) fail("expected token index at column " + std::to_string(begin + 1));
        if (pos_ - begin > 9) fail("token index too large");
        out.push_back(std::stol(std::string(text_.substr(begin, pos_ - begin))));
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        break;
      }
    }
    expect(']');
    return out;
  }

  std::string read_quoted() {
    skip_ws();
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected quoted polarity");
    ++pos_;
    const auto close = text_.find(quote, pos_);
    if (close == std::string_view::npos) fail("unterminated polarity string");
    std::string value(text_.substr(pos_, close - pos_));
    pos_ = close + 1;
    return value;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void expect(char c) {
    skip_ws();
    if (peek() != c) {
      fail(std::string("expected '") + c + "' at column " + std::to_string(pos_ + 1) +
           " of triplet list");
    }
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& cause) const { throw ParseError(line_, cause); }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

Span to_span(const std::vector<long>& indices, std::size_t n_tokens, std::size_t line,
             const char* role) {
  if (indices.empty()) throw ParseError(line, std::string("empty ") + role + " index list");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= n_tokens) {
      throw ParseError(line, std::string(role) + " index " + std::to_string(indices[i]) +
                                 " out of range for " + std::to_string(n_tokens) + " tokens");
    }
    if (i > 0 && indices[i] != indices[i - 1] + 1) {
      throw ParseError(line, std::string("non-contiguous ") + role + " index list");
    }
  }
  return {static_cast<std::size_t>(indices.front()), static_cast<std::size_t>(indices.back())};
}

std::string span_list(const Span& s) {
  std::string out = "[";
  for (std::size_t i = s.start; i <= s.end; ++i) {
    if (i != s.start) out += ", ";
    out += std::to_string(i);
  }
  return out + "]";
}

}  // namespace

std::string_view polarity_name(Sentiment s) {
  switch (s) {
    case Sentiment::Pos:
      return "POS";
    case Sentiment::Neu:
      return "NEU";
    case Sentiment::Neg:
      return "NEG";
  }
  return "?";
}

std::optional<Sentiment> parse_polarity(std::string_view name) {
  if (name == "POS") return Sentiment::Pos;
  if (name == "NEU") return Sentiment::Neu;
  if (name == "NEG") return Sentiment::Neg;
  return std::nullopt;
}

std::string to_string(const Triplet& t) {
  return "(" + span_list(t.aspect) + ", " + span_list(t.opinion) + ", '" +
         std::string(polarity_name(t.sentiment)) + "')";
}

std::vector<int> TagTargets::classes1d() const {
  std::vector<int> out(tags1d.size());
  std::transform(tags1d.begin(), tags1d.end(), out.begin(), [](Tag1D t) { return static_cast<int>(t); });
  return out;
}

std::vector<int> TagTargets::classes2d() const {
  std::vector<int> out(tags2d.size());
  std::transform(tags2d.begin(), tags2d.end(), out.begin(), [](Tag2D t) { return static_cast<int>(t); });
  return out;
}

LabeledSentence parse_v2_line(std::string_view line, std::size_t line_number) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto sep = line.find(kSeparator);
  if (sep == std::string_view::npos) throw ParseError(line_number, "missing '####' separator");

  LabeledSentence out;
  out.tokens = split_whitespace(line.substr(0, sep));
  if (out.tokens.empty()) throw ParseError(line_number, "empty sentence");

  TripletListReader reader(line.substr(sep + kSeparator.size()), line_number);
  reader.read();
  for (std::size_t k = 0; k < reader.index_lists.size(); ++k) {
    const auto& [a, o] = reader.index_lists[k];
    Triplet t;
    t.aspect = to_span(a, out.tokens.size(), line_number, "aspect");
    t.opinion = to_span(o, out.tokens.size(), line_number, "opinion");
    const auto polarity = parse_polarity(reader.polarities[k]);
    if (!polarity) throw ParseError(line_number, "unknown polarity '" + reader.polarities[k] + "'");
    t.sentiment = *polarity;
    if (t.aspect.overlaps(t.opinion)) {
      throw ParseError(line_number, "aspect and opinion spans overlap in " + to_string(t));
    }
    for (const auto& prev : out.triplets) {
      if (prev.aspect == t.aspect && prev.opinion == t.opinion) {
        throw ParseError(line_number, "duplicate aspect/opinion pair " + to_string(t));
      }
    }
    out.triplets.push_back(t);
  }
  return out;
}

std::string serialize_v2_line(const LabeledSentence& sentence) {
  std::string out;
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    if (i) out += ' ';
    out += sentence.tokens[i];
  }
  out += kSeparator;
  out += '[';
  for (std::size_t k = 0; k < sentence.triplets.size(); ++k) {
    if (k) out += ", ";
    out += to_string(sentence.triplets[k]);
  }
  out += ']';
  return out;
}

std::vector<LabeledSentence> read_v2_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<LabeledSentence> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (is_blank(line)) continue;
    try {
      out.push_back(parse_v2_line(line, number));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), path.string() + ": " + e.cause());
    }
  }
  return out;
}

std::vector<std::vector<std::string>> read_token_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (is_blank(line)) continue;
    const auto sep = line.find(kSeparator);
    out.push_back(split_whitespace(std::string_view(line).substr(0, sep)));
  }
  return out;
}

TagTargets encode_tags(const LabeledSentence& sentence) {
  const std::size_t n = sentence.tokens.size();
  TagTargets out;
  out.n = n;
  out.tags1d.assign(n, Tag1D::N);
  out.tags2d.assign(n * n, Tag2D::N);

  // Role of each token, and which triplet assigned it.
  std::vector<const Triplet*> owner(n, nullptr);
  auto mark = [&](const Triplet& t, const Span& span, Tag1D role) {
    for (std::size_t i = span.start; i <= span.end; ++i) {
      if (out.tags1d[i] != Tag1D::N && out.tags1d[i] != role) {
        throw ConflictError("token " + std::to_string(i) +
                            " is both aspect and opinion: " + to_string(*owner[i]) + " vs " +
                            to_string(t));
      }
      out.tags1d[i] = role;
      owner[i] = &t;
    }
  };
  for (const auto& t : sentence.triplets) {
    mark(t, t.aspect, Tag1D::A);
    mark(t, t.opinion, Tag1D::O);
  }

  std::vector<const Triplet*> cell_owner(n * n, nullptr);
  for (const auto& t : sentence.triplets) {
    const auto tag = static_cast<Tag2D>(static_cast<int>(t.sentiment));
    for (std::size_t i = t.aspect.start; i <= t.aspect.end; ++i)
      for (std::size_t j = t.opinion.start; j <= t.opinion.end; ++j) {
        const std::size_t lo = std::min(i, j), hi = std::max(i, j);
        const std::size_t cell = lo * n + hi;
        if (cell_owner[cell] && out.tags2d[cell] != tag) {
          throw ConflictError("cell (" + std::to_string(lo) + "," + std::to_string(hi) +
                              ") has conflicting sentiments: " + to_string(*cell_owner[cell]) +
                              " vs " + to_string(t));
        }
        cell_owner[cell] = &t;
        out.tags2d[cell] = tag;
        out.tags2d[hi * n + lo] = tag;
      }
  }

  // Distinct spans of one role must be separated by at least one token,
  // otherwise the maximal-run decoding merges them.
  auto check_runs = [&](auto span_of, const char* role) {
    for (std::size_t a = 0; a < sentence.triplets.size(); ++a)
      for (std::size_t b = a + 1; b < sentence.triplets.size(); ++b) {
        const Span& x = span_of(sentence.triplets[a]);
        const Span& y = span_of(sentence.triplets[b]);
        if (x == y) continue;
        if (x.start <= y.end + 1 && y.start <= x.end + 1) {
          throw ConflictError(std::string(role) + " spans overlap or touch: " +
                              to_string(sentence.triplets[a]) + " vs " +
                              to_string(sentence.triplets[b]));
        }
      }
  };
  check_runs([](const Triplet& t) -> const Span& { return t.aspect; }, "aspect");
  check_runs([](const Triplet& t) -> const Span& { return t.opinion; }, "opinion");
  return out;
}

Vocabulary::Vocabulary()
    : words_{std::string(kPadToken), std::string(kUnkToken)},
      ids_{{std::string(kPadToken), kPad}, {std::string(kUnkToken), kUnk}} {}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  if (words.size() < 2 || words[0] != kPadToken || words[1] != kUnkToken) {
    throw DataError("vocabulary must start with " + std::string(kPadToken) + " and " +
                    std::string(kUnkToken));
  }
  Vocabulary v;
  v.words_ = std::move(words);
  v.ids_.clear();
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    if (!v.ids_.emplace(v.words_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary entry '" + v.words_[i] + "'");
    }
  }
  return v;
}

int Vocabulary::id(std::string_view word) const {
  const auto it = ids_.find(word);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kVocabHeader << '\n';
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader) {
    throw ParseError(1, path.string() + ": missing vocabulary header '" +
                            std::string(kVocabHeader) + "'");
  }
  std::vector<std::string> words;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(number, path.string() + ": expected word<TAB>id");
    const std::string id_text = line.substr(tab + 1);
    if (id_text != std::to_string(words.size())) {
      throw ParseError(number, path.string() + ": ids must be dense and ascending");
    }
    words.push_back(line.substr(0, tab));
  }
  return from_words(std::move(words));
}

Vocabulary build_vocab(const std::vector<LabeledSentence>& corpus, int min_count) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw ConfigError("min_count must be >= 1, got " + std::to_string(min_count));
  std::map<std::string, int> counts;
  for (const auto& s : corpus)
    for (const auto& t : s.tokens) ++counts[t];
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [word, count] : counts)
    if (count >= min_count && word != Vocabulary::kPadToken && word != Vocabulary::kUnkToken)
      kept.emplace_back(word, count);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words{std::string(Vocabulary::kPadToken),
                                 std::string(Vocabulary::kUnkToken)};
  for (auto& [word, count] : kept) words.push_back(word);
  return Vocabulary::from_words(std::move(words));
}

}  // namespace simpletag
