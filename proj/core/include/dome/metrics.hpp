#pragma once

#include <map>
#include <string>
#include <vector>

#include "dome/corpus.hpp"

namespace dome {

using TokenSeq = std::vector<std::string>;

/// Corpus-level BLEU: clipped n-gram counts pooled over all pairs for
/// n = 1..max_n, geometric mean with uniform weights over the orders whose
/// pooled denominator is nonzero, times the brevity penalty
/// min(1, e^{1-r/c}).  A pooled precision of exactly zero zeroes the score.
double bleu(const std::vector<TokenSeq>& candidates,
            const std::vector<TokenSeq>& references, std::size_t max_n = 4);

/// Pair-level ROUGE-L F-score: P = LCS/|cand|, R = LCS/|ref|,
/// F = 2PR/(P+R) (0 when P+R = 0).
double rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

/// Simplified METEOR: greedy exact-match unigram alignment,
/// Fmean = PR/(0.9P + 0.1R) (recall weighted higher), fragmentation penalty
/// 0.5*(chunks/matches)^3, score = Fmean*(1 - penalty); 0 with no matches.
double meteor(const TokenSeq& candidate, const TokenSeq& reference);

struct MetricScores {
    double bleu = 0.0;
    double rouge_l = 0.0;
    double meteor = 0.0;
};

/// Overall scores plus a per-intent breakdown (ROUGE-L and METEOR are
/// unweighted means over pairs; BLEU is pooled per group).
struct MetricReport {
    MetricScores overall;
    std::map<IntentCategory, MetricScores> per_intent;
    std::size_t pair_count = 0;
};

MetricReport evaluate_generation(const std::vector<TokenSeq>& candidates,
                                 const std::vector<TokenSeq>& references,
                                 const std::vector<IntentCategory>& intents);

std::string report_to_json(const MetricReport& report);

}  // namespace dome
