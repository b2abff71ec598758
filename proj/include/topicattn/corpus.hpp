#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "topicattn/detail/binary_io.hpp"
#include "topicattn/error.hpp"
#include "topicattn/stopwords.hpp"

namespace topicattn {

using TokenList = std::vector<std::string>;

struct Document {
  std::size_t doc_id = 0;
  std::string raw_text;
  std::optional<std::string> label;
  std::vector<TokenList> sentences; // attention path: raw tokens, stopwords kept
  TokenList tm_tokens;              // topic-model path
};

struct Corpus {
  std::vector<Document> documents;

  std::size_t size() const { return documents.size(); }

  /// Distinct labels in order of first appearance.
  std::vector<std::string> labels() const
  {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& d : documents)
      if (d.label && seen.insert(*d.label).second)
        out.push_back(*d.label);
    return out;
  }

  std::vector<TokenList> tm_token_lists() const
  {
    std::vector<TokenList> out;
    out.reserve(documents.size());
    for (const auto& d : documents)
      out.push_back(d.tm_tokens);
    return out;
  }
};

enum class CorpusFormat { dir_per_class, csv_labeled, jsonl };

inline CorpusFormat parse_corpus_format(std::string_view name)
{
  if (name == "dir_per_class")
    return CorpusFormat::dir_per_class;
  if (name == "csv_labeled" || name == "csv")
    return CorpusFormat::csv_labeled;
  if (name == "jsonl")
    return CorpusFormat::jsonl;
  throw ConfigError("unknown corpus format '" + std::string(name) +
                    "' (expected dir_per_class, csv_labeled or jsonl)");
}

inline std::string_view to_string(CorpusFormat f)
{
  switch (f) {
  case CorpusFormat::dir_per_class: return "dir_per_class";
  case CorpusFormat::csv_labeled: return "csv_labeled";
  case CorpusFormat::jsonl: return "jsonl";
  }
  return "?";
}

struct PreprocessConfig {
  bool lowercase = true;
  std::unordered_set<std::string> stopword_list = default_stopwords();
  std::size_t min_doc_freq = 5;
  double max_doc_freq_fraction = 0.5;
  bool keep_non_ascii = false;

  void validate() const
  {
    if (min_doc_freq < 1)
      throw ConfigError("min_doc_freq must be >= 1");
    if (!(max_doc_freq_fraction > 0.0 && max_doc_freq_fraction <= 1.0))
      throw ConfigError("max_doc_freq_fraction must lie in (0, 1]");
  }
};

struct Vocabulary {
  std::unordered_map<std::string, std::size_t> word_to_id;
  std::vector<std::string> id_to_word;
  std::vector<std::size_t> doc_freq;
  std::vector<std::size_t> coll_freq;

  std::size_t size() const { return id_to_word.size(); }

  std::optional<std::size_t> find(const std::string& word) const
  {
    auto it = word_to_id.find(word);
    if (it == word_to_id.end())
      return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& word) const { return word_to_id.count(word) != 0; }

  const std::string& word(std::size_t id) const { return id_to_word.at(id); }

  /// Tie-break used wherever words are ranked: higher coll_freq, then lexicographic.
  bool ranks_before(std::size_t a, std::size_t b) const
  {
    if (coll_freq[a] != coll_freq[b])
      return coll_freq[a] > coll_freq[b];
    return id_to_word[a] < id_to_word[b];
  }
};

struct DocTermEntry {
  std::size_t doc;
  std::size_t word;
  std::uint32_t count;

  bool operator==(const DocTermEntry&) const = default;
};

// Sparse counts in row-major (CSR) order: entries of document d occupy
// [row_offsets[d], row_offsets[d + 1]) sorted by word id.
struct DocTermMatrix {
  std::size_t n_docs = 0;
  std::size_t n_words = 0;
  std::vector<DocTermEntry> entries;
  std::vector<std::size_t> row_offsets;

  std::span<const DocTermEntry> row(std::size_t d) const
  {
    return {entries.data() + row_offsets[d], row_offsets[d + 1] - row_offsets[d]};
  }

  std::uint64_t row_sum(std::size_t d) const
  {
    std::uint64_t s = 0;
    for (const auto& e : row(d))
      s += e.count;
    return s;
  }

  std::uint64_t total() const
  {
    std::uint64_t s = 0;
    for (const auto& e : entries)
      s += e.count;
    return s;
  }

  bool empty() const { return entries.empty(); }
};

namespace detail {

inline bool is_ascii_space(char c)
{
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_ascii_punct(char c)
{
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && ((u >= 0x21 && u <= 0x2f) || (u >= 0x3a && u <= 0x40) ||
                      (u >= 0x5b && u <= 0x60) || (u >= 0x7b && u <= 0x7e));
}

inline bool is_ascii(std::string_view s)
{
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

inline std::string ascii_lower(std::string_view s)
{
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z')
      c = static_cast<char>(c - 'A' + 'a');
  return out;
}

/// Collapses whitespace runs to one space and trims; the duplicate-detection key.
inline std::string normalize_whitespace(std::string_view s)
{
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space)
      out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

struct RawDoc {
  std::string text;
  std::optional<std::string> label;
};

// RFC-4180 reader. Returns records with the physical line each one starts on.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(std::string_view text,
                                                                               const std::string& name)
{
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string field;
  std::size_t line = 1, record_line = 1;
  bool in_quotes = false, field_started = false, after_quote = false;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
    after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(fields.size() == 1 && fields[0].empty()))
      records.emplace_back(record_line, std::move(fields));
    fields.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n')
          ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (field_started || after_quote)
        throw InputError(name + ":" + std::to_string(line) + ": stray quote in unquoted field");
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      end_record();
      ++line;
      record_line = line;
    } else {
      if (after_quote)
        throw InputError(name + ":" + std::to_string(line) + ": text after closing quote");
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes)
    throw InputError(name + ":" + std::to_string(record_line) + ": unterminated quoted field");
  if (field_started || after_quote || !fields.empty())
    end_record();
  return records;
}

inline std::vector<RawDoc> read_dir_per_class(const std::filesystem::path& root)
{
  namespace fs = std::filesystem;
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory())
      class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());

  std::vector<RawDoc> docs;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
      if (entry.is_regular_file())
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      docs.push_back({read_text_file(f), dir.filename().string()});
  }
  return docs;
}

inline std::vector<RawDoc> read_csv_labeled(const std::filesystem::path& path)
{
  const std::string text = read_text_file(path);
  const std::string name = path.string();
  auto records = parse_csv(text, name);
  if (records.empty())
    throw InputError(name + ": missing header");
  const auto& header = records.front().second;
  std::optional<std::size_t> text_col, label_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string h = header[i];
    if (i == 0 && h.rfind("\xEF\xBB\xBF", 0) == 0)
      h = h.substr(3);
    if (h == "text")
      text_col = i;
    else if (h == "label")
      label_col = i;
  }
  if (!text_col)
    throw InputError(name + ":1: header lacks a 'text' column");

  std::vector<RawDoc> docs;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& [line, fields] = records[r];
    if (fields.size() != header.size())
      throw InputError(name + ":" + std::to_string(line) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    RawDoc d{fields[*text_col], std::nullopt};
    if (label_col)
      d.label = fields[*label_col];
    docs.push_back(std::move(d));
  }
  return docs;
}

inline std::vector<RawDoc> read_jsonl(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open " + path.string());
  std::vector<RawDoc> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty())
      continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string())
      throw InputError(where + ": object with string field 'text' required");
    RawDoc d{obj["text"].get<std::string>(), std::nullopt};
    if (obj.contains("label") && !obj["label"].is_null()) {
      if (!obj["label"].is_string())
        throw InputError(where + ": 'label' must be a string");
      d.label = obj["label"].get<std::string>();
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

} // namespace detail

/// Loads documents, dropping empty texts and whitespace-normalized duplicates
/// (first occurrence wins). doc_ids are dense and follow input order.
inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format)
{
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec))
    throw InputError("corpus path does not exist: " + path.string());

  std::vector<detail::RawDoc> raw;
  switch (format) {
  case CorpusFormat::dir_per_class:
    if (!fs::is_directory(path))
      throw InputError("dir_per_class corpus must be a directory: " + path.string());
    raw = detail::read_dir_per_class(path);
    break;
  case CorpusFormat::csv_labeled:
    raw = detail::read_csv_labeled(path);
    break;
  case CorpusFormat::jsonl:
    raw = detail::read_jsonl(path);
    break;
  }

  Corpus corpus;
  std::unordered_set<std::string> seen;
  for (auto& r : raw) {
    auto key = detail::normalize_whitespace(r.text);
    if (key.empty() || !seen.insert(std::move(key)).second)
      continue;
    Document d;
    d.doc_id = corpus.documents.size();
    d.raw_text = std::move(r.text);
    d.label = std::move(r.label);
    corpus.documents.push_back(std::move(d));
  }
  if (corpus.documents.empty())
    throw InputError("no documents left after filtering: " + path.string());
  return corpus;
}

/// Splits on ASCII whitespace and punctuation, lowercases, and drops stopwords
/// and (unless configured otherwise) tokens carrying non-ASCII bytes.
inline TokenList tokenize_for_topics(std::string_view text, const PreprocessConfig& cfg)
{
  TokenList out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (detail::is_ascii_space(text[i]) || detail::is_ascii_punct(text[i])))
      ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(text[j]) && !detail::is_ascii_punct(text[j]))
      ++j;
    if (j > i) {
      std::string_view tok = text.substr(i, j - i);
      std::string lower = detail::ascii_lower(tok);
      const bool ascii = detail::is_ascii(tok);
      if ((ascii || cfg.keep_non_ascii) && !cfg.stopword_list.count(lower))
        out.push_back(cfg.lowercase ? std::move(lower) : std::string(tok));
    }
    i = j;
  }
  return out;
}

inline Document preprocess(Document doc, const PreprocessConfig& cfg)
{
  doc.tm_tokens = tokenize_for_topics(doc.raw_text, cfg);
  return doc;
}

// A boundary falls between two whitespace-separated tokens when the first
// ends in . ? or ! and the second starts with an ASCII capital, or when the
// gap between them holds a blank line.
inline std::vector<TokenList> split_sentences(std::string_view text)
{
  std::vector<TokenList> sentences;
  TokenList current;
  std::size_t i = 0;
  std::size_t newlines_in_gap = 0;
  while (i < text.size()) {
    newlines_in_gap = 0;
    while (i < text.size() && detail::is_ascii_space(text[i])) {
      if (text[i] == '\n')
        ++newlines_in_gap;
      ++i;
    }
    if (i >= text.size())
      break;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(text[j]))
      ++j;
    std::string tok(text.substr(i, j - i));
    if (!current.empty()) {
      const char last = current.back().back();
      const bool terminal = last == '.' || last == '?' || last == '!';
      const bool capital = tok.front() >= 'A' && tok.front() <= 'Z';
      if (newlines_in_gap >= 2 || (terminal && capital)) {
        sentences.push_back(std::move(current));
        current.clear();
      }
    }
    current.push_back(std::move(tok));
    i = j;
  }
  if (!current.empty())
    sentences.push_back(std::move(current));
  return sentences;
}

inline Document segment_sentences(Document doc)
{
  doc.sentences = split_sentences(doc.raw_text);
  return doc;
}

/// Runs both token paths over every document.
inline void prepare_corpus(Corpus& corpus, const PreprocessConfig& cfg)
{
  for (auto& d : corpus.documents) {
    d.tm_tokens = tokenize_for_topics(d.raw_text, cfg);
    d.sentences = split_sentences(d.raw_text);
  }
}

/// Ids follow decreasing collection frequency, ties lexicographic.
inline Vocabulary build_vocab(const Corpus& corpus, const PreprocessConfig& cfg)
{
  cfg.validate();
  std::map<std::string, std::pair<std::size_t, std::size_t>> stats; // word -> (df, cf)
  for (const auto& d : corpus.documents) {
    std::unordered_set<std::string_view> in_doc;
    for (const auto& t : d.tm_tokens) {
      auto& s = stats[t];
      ++s.second;
      if (in_doc.insert(t).second)
        ++s.first;
    }
  }
  const double ceiling = cfg.max_doc_freq_fraction * static_cast<double>(corpus.size());

  struct Kept {
    std::string word;
    std::size_t df, cf;
  };
  std::vector<Kept> kept;
  for (auto& [w, s] : stats)
    if (s.first >= cfg.min_doc_freq && static_cast<double>(s.first) <= ceiling)
      kept.push_back({w, s.first, s.second});
  if (kept.empty())
    throw InputError("vocabulary is empty after frequency filtering");

  std::stable_sort(kept.begin(), kept.end(), [](const Kept& a, const Kept& b) {
    if (a.cf != b.cf)
      return a.cf > b.cf;
    return a.word < b.word;
  });

  Vocabulary v;
  for (auto& k : kept) {
    v.word_to_id.emplace(k.word, v.id_to_word.size());
    v.id_to_word.push_back(std::move(k.word));
    v.doc_freq.push_back(k.df);
    v.coll_freq.push_back(k.cf);
  }
  return v;
}

inline DocTermMatrix doc_term_matrix(const Corpus& corpus, const Vocabulary& vocab)
{
  DocTermMatrix m;
  m.n_docs = corpus.size();
  m.n_words = vocab.size();
  m.row_offsets.reserve(m.n_docs + 1);
  m.row_offsets.push_back(0);
  std::map<std::size_t, std::uint32_t> counts;
  for (const auto& d : corpus.documents) {
    counts.clear();
    for (const auto& t : d.tm_tokens)
      if (auto id = vocab.find(t))
        ++counts[*id];
    for (const auto& [w, c] : counts)
      m.entries.push_back({d.doc_id, w, c});
    m.row_offsets.push_back(m.entries.size());
  }
  return m;
}

/// Builds a matrix directly from per-document word-id lists (synthetic corpora).
inline DocTermMatrix doc_term_matrix_from_ids(const std::vector<std::vector<std::size_t>>& docs, std::size_t n_words)
{
  DocTermMatrix m;
  m.n_docs = docs.size();
  m.n_words = n_words;
  m.row_offsets.push_back(0);
  std::map<std::size_t, std::uint32_t> counts;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    counts.clear();
    for (auto w : docs[d]) {
      if (w >= n_words)
        throw InputError("word id out of range");
      ++counts[w];
    }
    for (const auto& [w, c] : counts)
      m.entries.push_back({d, w, c});
    m.row_offsets.push_back(m.entries.size());
  }
  return m;
}

} // namespace topicattn
