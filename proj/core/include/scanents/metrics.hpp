#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "scanents/error.hpp"

namespace scanents {

using TokenSeq = std::vector<std::string>;

// Corpus-level BLEU-4 with brevity penalty, unsmoothed: clipped n-gram
// matches and totals are pooled over the corpus and any empty precision
// yields 0. Throws EmptyReference when an example has no (or an empty)
// reference.
double bleu4(const std::vector<TokenSeq>& candidates,
             const std::vector<std::vector<TokenSeq>>& references);

// Per-sentence BLEU-4 with add-one smoothing for n >= 2.
double sentence_bleu4(const TokenSeq& candidate, const std::vector<TokenSeq>& references);

// Mean over examples of the best per-reference ROUGE-L F-measure (beta = 1).
double rouge_l(const std::vector<TokenSeq>& candidates,
               const std::vector<std::vector<TokenSeq>>& references);

// Document frequencies of reference n-grams (n = 1..4). A document is one
// example's reference set; each n-gram counts once per document.
struct CiderIndex {
  long n_docs = 0;
  std::unordered_map<std::string, long> df;
};

CiderIndex build_cider_index(const std::vector<std::vector<TokenSeq>>& references);

// Mean over n of the TF-IDF n-gram cosine similarity between candidate and
// references, averaged over references and examples, scaled by 10. IDF is
// ln(n_docs) - ln(max(1, df)).
double cider(const std::vector<TokenSeq>& candidates,
             const std::vector<std::vector<TokenSeq>>& references, const CiderIndex& corpus_df);

}  // namespace scanents
