#pragma once

#include <random>
#include <set>
#include <vector>

#include "topicattn/corpus.hpp"

namespace topicattn::testing {

// Corpus whose documents each draw every token from one of two disjoint
// 10-word vocabularies (ids 0-9 and 10-19). The generating partition is the
// oracle for topic recovery.
struct PlantedCorpus {
  DocTermMatrix dtm;
  Vocabulary vocab;
  std::vector<int> doc_set;
  std::set<std::size_t> set_a, set_b;
};

inline PlantedCorpus make_planted_corpus(unsigned seed, std::size_t n_docs = 200, std::size_t doc_len = 50)
{
  PlantedCorpus p;
  std::mt19937 gen(seed);
  std::vector<std::vector<std::size_t>> docs;
  for (std::size_t d = 0; d < n_docs; ++d) {
    const int s = static_cast<int>(gen() % 2);
    p.doc_set.push_back(s);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < doc_len; ++i)
      ids.push_back(static_cast<std::size_t>(s * 10) + gen() % 10);
    docs.push_back(ids);
  }
  p.dtm = doc_term_matrix_from_ids(docs, 20);
  p.vocab.doc_freq.assign(20, 0);
  p.vocab.coll_freq.assign(20, 0);
  for (std::size_t w = 0; w < 20; ++w) {
    const std::string name = (w < 10 ? "alpha" : "beta") + std::to_string(w % 10);
    p.vocab.word_to_id[name] = w;
    p.vocab.id_to_word.push_back(name);
    (w < 10 ? p.set_a : p.set_b).insert(w);
  }
  for (const auto& e : p.dtm.entries) {
    ++p.vocab.doc_freq[e.word];
    p.vocab.coll_freq[e.word] += e.count;
  }
  return p;
}

} // namespace topicattn::testing
