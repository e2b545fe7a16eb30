#include "scanents/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace scanents {

namespace {

constexpr int kMaxOrder = 4;
constexpr char kSep = '\x1f';  // unambiguous n-gram joiner

using Counts = std::unordered_map<std::string, long>;

Counts ngram_counts(const TokenSeq& tokens, int n) {
  Counts out;
  if (static_cast<int>(tokens.size()) < n) return out;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int k = 1; k < n; ++k) {
      key += kSep;
      key += tokens[i + k];
    }
    ++out[key];
  }
  return out;
}

void check_refs(const std::vector<TokenSeq>& candidates,
                const std::vector<std::vector<TokenSeq>>& references) {
  if (candidates.size() != references.size())
    throw Error("metrics: " + std::to_string(candidates.size()) + " candidates vs " +
                std::to_string(references.size()) + " reference sets");
  for (const auto& refs : references) {
    if (refs.empty()) throw EmptyReference("metrics: example without references");
    for (const auto& r : refs) {
      if (r.empty()) throw EmptyReference("metrics: empty reference sentence");
    }
  }
}

struct BleuTotals {
  std::array<long, kMaxOrder> match{};
  std::array<long, kMaxOrder> total{};
  long cand_len = 0;
  long ref_len = 0;
};

void accumulate_bleu(const TokenSeq& cand, const std::vector<TokenSeq>& refs, BleuTotals& t) {
  t.cand_len += static_cast<long>(cand.size());
  // Closest reference length; ties go to the shorter one.
  const long c = static_cast<long>(cand.size());
  long best_ref = static_cast<long>(refs[0].size());
  for (const auto& r : refs) {
    const long len = static_cast<long>(r.size());
    if (std::abs(len - c) < std::abs(best_ref - c) ||
        (std::abs(len - c) == std::abs(best_ref - c) && len < best_ref)) {
      best_ref = len;
    }
  }
  t.ref_len += best_ref;

  for (int n = 1; n <= kMaxOrder; ++n) {
    const Counts cc = ngram_counts(cand, n);
    Counts max_ref;
    for (const auto& r : refs) {
      for (const auto& [k, v] : ngram_counts(r, n)) max_ref[k] = std::max(max_ref[k], v);
    }
    long match = 0;
    long total = 0;
    for (const auto& [k, v] : cc) {
      total += v;
      auto it = max_ref.find(k);
      if (it != max_ref.end()) match += std::min(v, it->second);
    }
    t.match[n - 1] += match;
    t.total[n - 1] += total;
  }
}

long lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<long> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double bleu4(const std::vector<TokenSeq>& candidates,
             const std::vector<std::vector<TokenSeq>>& references) {
  check_refs(candidates, references);
  if (candidates.empty()) return 0.0;
  BleuTotals t;
  for (size_t i = 0; i < candidates.size(); ++i)
    accumulate_bleu(candidates[i], references[i], t);
  double log_p = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (t.match[n] == 0 || t.total[n] == 0) return 0.0;
    log_p += std::log(static_cast<double>(t.match[n]) / static_cast<double>(t.total[n]));
  }
  if (t.cand_len == 0) return 0.0;
  const double bp =
      t.cand_len > t.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(t.ref_len) / static_cast<double>(t.cand_len));
  return bp * std::exp(log_p / kMaxOrder);
}

double sentence_bleu4(const TokenSeq& candidate, const std::vector<TokenSeq>& references) {
  check_refs({candidate}, {references});
  BleuTotals t;
  accumulate_bleu(candidate, references, t);
  double log_p = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    double p;
    if (n == 0) {
      if (t.match[0] == 0 || t.total[0] == 0) return 0.0;
      p = static_cast<double>(t.match[0]) / static_cast<double>(t.total[0]);
    } else {
      p = (static_cast<double>(t.match[n]) + 1.0) / (static_cast<double>(t.total[n]) + 1.0);
    }
    log_p += std::log(p);
  }
  if (t.cand_len == 0) return 0.0;
  const double bp =
      t.cand_len > t.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(t.ref_len) / static_cast<double>(t.cand_len));
  return bp * std::exp(log_p / kMaxOrder);
}

double rouge_l(const std::vector<TokenSeq>& candidates,
               const std::vector<std::vector<TokenSeq>>& references) {
  check_refs(candidates, references);
  if (candidates.empty()) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& c = candidates[i];
    double best = 0.0;
    for (const auto& r : references[i]) {
      const long lcs = lcs_length(c, r);
      if (lcs == 0 || c.empty()) continue;
      const double precision = static_cast<double>(lcs) / static_cast<double>(c.size());
      const double recall = static_cast<double>(lcs) / static_cast<double>(r.size());
      best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    acc += best;
  }
  return acc / static_cast<double>(candidates.size());
}

CiderIndex build_cider_index(const std::vector<std::vector<TokenSeq>>& references) {
  CiderIndex index;
  index.n_docs = static_cast<long>(references.size());
  for (const auto& refs : references) {
    std::set<std::string> doc_grams;
    for (const auto& r : refs) {
      for (int n = 1; n <= kMaxOrder; ++n) {
        for (const auto& [k, v] : ngram_counts(r, n)) doc_grams.insert(k);
      }
    }
    for (const auto& g : doc_grams) ++index.df[g];
  }
  return index;
}

namespace {

// Per-order TF-IDF vector and its norm.
struct TfIdfVec {
  Counts raw;
  std::unordered_map<std::string, double> w;
  double norm = 0.0;
};

TfIdfVec tfidf(const TokenSeq& tokens, int n, const CiderIndex& index) {
  TfIdfVec v;
  v.raw = ngram_counts(tokens, n);
  const double log_docs = index.n_docs > 0 ? std::log(static_cast<double>(index.n_docs)) : 0.0;
  double sq = 0.0;
  for (const auto& [k, tf] : v.raw) {
    auto it = index.df.find(k);
    const double df = it == index.df.end() ? 0.0 : static_cast<double>(it->second);
    const double idf = log_docs - std::log(std::max(1.0, df));
    const double weight = static_cast<double>(tf) * idf;
    v.w[k] = weight;
    sq += weight * weight;
  }
  v.norm = std::sqrt(sq);
  return v;
}

double cosine_sim(const TfIdfVec& a, const TfIdfVec& b) {
  if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [k, w] : a.w) {
    auto it = b.w.find(k);
    if (it != b.w.end()) dot += w * it->second;
  }
  return dot / (a.norm * b.norm);
}

}  // namespace

double cider(const std::vector<TokenSeq>& candidates,
             const std::vector<std::vector<TokenSeq>>& references,
             const CiderIndex& corpus_df) {
  check_refs(candidates, references);
  if (candidates.empty()) return 0.0;
  double corpus_acc = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    double order_acc = 0.0;
    for (int n = 1; n <= kMaxOrder; ++n) {
      const TfIdfVec cv = tfidf(candidates[i], n, corpus_df);
      double ref_acc = 0.0;
      for (const auto& r : references[i])
        ref_acc += cosine_sim(cv, tfidf(r, n, corpus_df));
      order_acc += ref_acc / static_cast<double>(references[i].size());
    }
    corpus_acc += order_acc / kMaxOrder;
  }
  return 10.0 * corpus_acc / static_cast<double>(candidates.size());
}

}  // namespace scanents
