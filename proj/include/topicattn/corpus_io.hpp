#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "topicattn/corpus.hpp"

namespace topicattn {

// Prepared-corpus directory written by `ingest` and read by the later stages:
//   corpus.jsonl  one object per document: doc_id, text, label, tm_tokens, sentences
//   vocab.json    words (id order), doc_freq, coll_freq
// corpus.jsonl is itself a valid jsonl input corpus; the attention dump tool
// reads its `sentences` so both token paths share one segmentation.

inline void write_prepared_corpus(const std::filesystem::path& dir, const Corpus& corpus, const Vocabulary& vocab)
{
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "corpus.jsonl", std::ios::trunc);
  if (!out)
    throw InputError("cannot write " + (dir / "corpus.jsonl").string());
  for (const auto& d : corpus.documents) {
    nlohmann::json j;
    j["doc_id"] = d.doc_id;
    j["text"] = d.raw_text;
    j["label"] = d.label ? nlohmann::json(*d.label) : nlohmann::json(nullptr);
    j["tm_tokens"] = d.tm_tokens;
    j["sentences"] = d.sentences;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }

  nlohmann::json v;
  v["words"] = vocab.id_to_word;
  v["doc_freq"] = vocab.doc_freq;
  v["coll_freq"] = vocab.coll_freq;
  std::ofstream vout(dir / "vocab.json", std::ios::trunc);
  vout << v.dump(1) << '\n';
}

inline Vocabulary read_vocab(const std::filesystem::path& file)
{
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(detail::read_text_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(file.string() + ": " + e.what());
  }
  Vocabulary vocab;
  try {
    vocab.id_to_word = v.at("words").get<std::vector<std::string>>();
    vocab.doc_freq = v.at("doc_freq").get<std::vector<std::size_t>>();
    vocab.coll_freq = v.at("coll_freq").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(file.string() + ": " + e.what());
  }
  if (vocab.doc_freq.size() != vocab.size() || vocab.coll_freq.size() != vocab.size())
    throw InputError(file.string() + ": inconsistent array lengths");
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (!vocab.word_to_id.emplace(vocab.id_to_word[i], i).second)
      throw InputError(file.string() + ": duplicate word '" + vocab.id_to_word[i] + "'");
  return vocab;
}

inline Corpus read_prepared_corpus(const std::filesystem::path& dir)
{
  const auto file = dir / "corpus.jsonl";
  std::ifstream in(file);
  if (!in)
    throw InputError("cannot open " + file.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty())
      continue;
    try {
      auto j = nlohmann::json::parse(line);
      Document d;
      d.doc_id = j.at("doc_id").get<std::size_t>();
      d.raw_text = j.value("text", std::string{});
      if (j.contains("label") && j["label"].is_string())
        d.label = j["label"].get<std::string>();
      d.tm_tokens = j.at("tm_tokens").get<TokenList>();
      d.sentences = j.value("sentences", std::vector<TokenList>{});
      corpus.documents.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (corpus.documents.empty())
    throw InputError(file.string() + ": no documents");
  return corpus;
}

} // namespace topicattn
