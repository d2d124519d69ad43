#pragma once

// Documents, labels and corpora, plus the bow-text and bow-binary formats.
//
// bow-text: one document per line, `<label> <N> <wordId>:<count> ...`,
// whitespace separated. Everything after `#` is a comment. A leading
// `# dictionary_size <V>` comment declares V; without it V is taken from the
// caller or inferred as max id + 1.
//
// bow-binary: framed (see binary_io.hpp) payload of varints mirroring the
// text format: V, document count, then per document label, source id, N,
// entry count and (id, count) pairs.

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "localhdp/binary_io.hpp"
#include "localhdp/errors.hpp"

namespace localhdp {

using WordId = std::uint32_t;

struct WordCount {
  WordId id = 0;
  std::uint32_t count = 0;
  auto operator<=>(const WordCount&) const = default;
};

/// Sparse visual-word histogram of one object view. Entries are kept sorted
/// by id with strictly positive counts.
class BowDocument {
 public:
  BowDocument() = default;

  /// Duplicate ids are merged; zero counts are dropped.
  explicit BowDocument(std::vector<WordCount> entries, std::string source_id = {})
      : source_id_(std::move(source_id)) {
    std::sort(entries.begin(), entries.end());
    for (const auto& e : entries) {
      if (e.count == 0) continue;
      if (!entries_.empty() && entries_.back().id == e.id)
        entries_.back().count += e.count;
      else
        entries_.push_back(e);
      total_ += e.count;
    }
  }

  /// Histogram of a word sequence (order is irrelevant).
  static BowDocument from_words(const std::vector<WordId>& words, std::string source_id = {}) {
    std::vector<WordCount> entries;
    entries.reserve(words.size());
    for (auto w : words) entries.push_back({w, 1});
    return BowDocument(std::move(entries), std::move(source_id));
  }

  const std::vector<WordCount>& entries() const noexcept { return entries_; }
  std::size_t unique_words() const noexcept { return entries_.size(); }
  std::uint64_t total_words() const noexcept { return total_; }
  bool empty() const noexcept { return total_ == 0; }
  const std::string& source_id() const noexcept { return source_id_; }
  void set_source_id(std::string id) { source_id_ = std::move(id); }

  std::uint32_t count(WordId id) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), WordCount{id, 0},
                               [](const WordCount& a, const WordCount& b) { return a.id < b.id; });
    return (it != entries_.end() && it->id == id) ? it->count : 0;
  }

  /// One past the largest word id, 0 for an empty document.
  std::size_t id_bound() const noexcept { return entries_.empty() ? 0 : std::size_t{entries_.back().id} + 1; }

  /// Equality ignores the source id.
  bool same_counts(const BowDocument& o) const { return entries_ == o.entries_; }
  bool operator==(const BowDocument& o) const { return entries_ == o.entries_ && source_id_ == o.source_id_; }

 private:
  std::vector<WordCount> entries_;
  std::uint64_t total_ = 0;
  std::string source_id_;
};

/// Non-empty, whitespace-free category name.
class CategoryLabel {
 public:
  CategoryLabel() = default;
  explicit CategoryLabel(std::string name) : name_(std::move(name)) {
    if (name_.empty()) throw ValidationError("category label must be non-empty");
    if (std::any_of(name_.begin(), name_.end(), [](unsigned char c) { return std::isspace(c) || c == '#'; }))
      throw ValidationError("category label '" + name_ + "' contains whitespace or '#'");
  }

  const std::string& str() const noexcept { return name_; }
  auto operator<=>(const CategoryLabel&) const = default;

 private:
  std::string name_;
};

struct LabeledDocument {
  BowDocument doc;
  CategoryLabel label;
  bool operator==(const LabeledDocument&) const = default;
};

struct LabeledCorpus {
  std::size_t dictionary_size = 0;
  std::vector<LabeledDocument> documents;

  /// Distinct labels in lexicographic order.
  std::vector<CategoryLabel> labels() const {
    std::set<CategoryLabel> s;
    for (const auto& d : documents) s.insert(d.label);
    return {s.begin(), s.end()};
  }

  /// Document indices grouped by label, each group in corpus order.
  std::map<CategoryLabel, std::vector<std::size_t>> by_label() const {
    std::map<CategoryLabel, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < documents.size(); ++i) groups[documents[i].label].push_back(i);
    return groups;
  }

  /// Indices of degenerate empty documents. They load fine but inference rejects them.
  std::vector<std::size_t> empty_documents() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < documents.size(); ++i)
      if (documents[i].doc.empty()) out.push_back(i);
    return out;
  }

  void validate() const {
    for (const auto& d : documents) {
      if (d.doc.id_bound() > dictionary_size)
        throw ValidationError("document '" + d.doc.source_id() + "' (" + d.label.str() + "): word id " +
                              std::to_string(d.doc.entries().back().id) + " ≥ V=" +
                              std::to_string(dictionary_size));
    }
  }

  bool operator==(const LabeledCorpus&) const = default;
};

enum class CorpusFormat { BowText, BowBinary };

inline CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "bow-text") return CorpusFormat::BowText;
  if (name == "bow-binary") return CorpusFormat::BowBinary;
  throw ParameterError("unknown corpus format '" + std::string(name) + "'");
}

namespace detail {

inline std::uint64_t parse_unsigned(std::string_view tok, std::size_t line, const char* what) {
  if (tok.empty() || tok.size() > 19 || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw ParseError(std::string("expected non-negative integer for ") + what + ", got '" + std::string(tok) + "'", line);
  return std::stoull(std::string(tok));
}

inline constexpr std::string_view kBowMagic = "LHDPBOW1";
inline constexpr std::uint32_t kBowVersion = 1;

}  // namespace detail

/// Parses bow-text. `dictionary_size` overrides the header; when neither is
/// present V is inferred.
inline LabeledCorpus parse_bow_text(std::istream& in, std::optional<std::size_t> dictionary_size = {}) {
  LabeledCorpus corpus;
  std::optional<std::size_t> header_v;
  std::string line;
  std::size_t lineno = 0;
  std::size_t inferred = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      std::istringstream comment(line.substr(hash + 1));
      std::string key, value;
      if (corpus.documents.empty() && (comment >> key >> value) && key == "dictionary_size")
        header_v = detail::parse_unsigned(value, lineno, "dictionary_size");
      line.resize(hash);
    }
    std::istringstream ss(line);
    std::string label_tok;
    if (!(ss >> label_tok)) continue;
    std::string n_tok;
    if (!(ss >> n_tok)) throw ParseError("missing word total after label", lineno);
    const auto declared = detail::parse_unsigned(n_tok, lineno, "word total");

    std::vector<WordCount> entries;
    std::set<WordId> seen;
    std::uint64_t sum = 0;
    std::string tok;
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError("expected <wordId>:<count>, got '" + tok + "'", lineno);
      const auto id = detail::parse_unsigned(std::string_view(tok).substr(0, colon), lineno, "word id");
      const auto count = detail::parse_unsigned(std::string_view(tok).substr(colon + 1), lineno, "count");
      if (count == 0) throw ParseError("zero count for word " + std::to_string(id), lineno);
      if (id > UINT32_MAX || count > UINT32_MAX) throw ParseError("value out of range in '" + tok + "'", lineno);
      if (!seen.insert(static_cast<WordId>(id)).second)
        throw ParseError("duplicate word id " + std::to_string(id), lineno);
      entries.push_back({static_cast<WordId>(id), static_cast<std::uint32_t>(count)});
      sum += count;
    }
    if (sum != declared)
      throw ParseError("declared total " + std::to_string(declared) + " but counts sum to " + std::to_string(sum),
                       lineno);
    CategoryLabel label;
    try {
      label = CategoryLabel(label_tok);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    BowDocument doc(std::move(entries), "line:" + std::to_string(lineno));
    inferred = std::max(inferred, doc.id_bound());
    corpus.documents.push_back({std::move(doc), std::move(label)});
  }
  corpus.dictionary_size = dictionary_size.value_or(header_v.value_or(inferred));
  corpus.validate();
  return corpus;
}

inline void write_bow_text(std::ostream& out, const LabeledCorpus& corpus) {
  out << "# dictionary_size " << corpus.dictionary_size << '\n';
  for (const auto& d : corpus.documents) {
    out << d.label.str() << ' ' << d.doc.total_words();
    for (const auto& e : d.doc.entries()) out << ' ' << e.id << ':' << e.count;
    out << '\n';
  }
}

inline std::vector<std::uint8_t> encode_bow_binary(const LabeledCorpus& corpus) {
  io::ByteWriter w;
  w.varint(corpus.dictionary_size);
  w.varint(corpus.documents.size());
  for (const auto& d : corpus.documents) {
    w.str(d.label.str());
    w.str(d.doc.source_id());
    w.varint(d.doc.total_words());
    w.varint(d.doc.unique_words());
    for (const auto& e : d.doc.entries()) {
      w.varint(e.id);
      w.varint(e.count);
    }
  }
  return io::frame(detail::kBowMagic, detail::kBowVersion, w.bytes());
}

inline LabeledCorpus decode_bow_binary(std::span<const std::uint8_t> bytes,
                                       std::optional<std::size_t> dictionary_size = {}) {
  io::ByteReader r(io::unframe(bytes, detail::kBowMagic, detail::kBowVersion));
  LabeledCorpus corpus;
  corpus.dictionary_size = r.varint();
  const auto ndocs = r.varint();
  for (std::uint64_t i = 0; i < ndocs; ++i) {
    const std::size_t record = i + 1;
    auto label_str = r.str();
    auto source = r.str();
    const auto declared = r.varint();
    const auto nentries = r.varint();
    std::vector<WordCount> entries;
    std::uint64_t sum = 0;
    for (std::uint64_t k = 0; k < nentries; ++k) {
      const auto id = r.varint();
      const auto count = r.varint();
      if (count == 0 || id > UINT32_MAX || count > UINT32_MAX)
        throw ParseError("invalid entry in record", record);
      if (!entries.empty() && id <= entries.back().id) throw ParseError("word ids not strictly increasing", record);
      entries.push_back({static_cast<WordId>(id), static_cast<std::uint32_t>(count)});
      sum += count;
    }
    if (sum != declared) throw ParseError("declared total does not match counts", record);
    CategoryLabel label;
    try {
      label = CategoryLabel(std::move(label_str));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), record);
    }
    corpus.documents.push_back({BowDocument(std::move(entries), std::move(source)), std::move(label)});
  }
  if (!r.at_end()) throw IntegrityError("trailing bytes in corpus payload");
  if (dictionary_size) corpus.dictionary_size = *dictionary_size;
  corpus.validate();
  return corpus;
}

inline LabeledCorpus load_corpus(const std::string& path, CorpusFormat format,
                                 std::optional<std::size_t> dictionary_size = {}) {
  if (format == CorpusFormat::BowBinary) return decode_bow_binary(io::read_file(path), dictionary_size);
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_bow_text(in, dictionary_size);
}

inline void save_corpus(const std::string& path, const LabeledCorpus& corpus, CorpusFormat format) {
  if (format == CorpusFormat::BowBinary) {
    io::write_file(path, encode_bow_binary(corpus));
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  write_bow_text(out, corpus);
}

}  // namespace localhdp
