#include "dome/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

namespace dome {

namespace {

/// Multiset of n-grams keyed by their joined token text.
std::map<std::vector<std::string>, std::size_t> ngram_counts(const TokenSeq& seq,
                                                             std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (seq.size() < n) return counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i)
        ++counts[std::vector<std::string>(seq.begin() + i, seq.begin() + i + n)];
    return counts;
}

}  // namespace

double bleu(const std::vector<TokenSeq>& candidates,
            const std::vector<TokenSeq>& references, std::size_t max_n) {
    if (candidates.size() != references.size())
        throw ShapeError("bleu: candidate/reference counts differ");
    if (candidates.empty())
        throw ShapeError("bleu: empty corpus");

    std::size_t cand_total = 0, ref_total = 0;
    std::vector<std::size_t> clipped(max_n, 0), possible(max_n, 0);
    for (std::size_t p = 0; p < candidates.size(); ++p) {
        cand_total += candidates[p].size();
        ref_total += references[p].size();
        for (std::size_t n = 1; n <= max_n; ++n) {
            const auto cand_ngrams = ngram_counts(candidates[p], n);
            const auto ref_ngrams = ngram_counts(references[p], n);
            for (const auto& [gram, count] : cand_ngrams) {
                possible[n - 1] += count;
                auto it = ref_ngrams.find(gram);
                if (it != ref_ngrams.end())
                    clipped[n - 1] += std::min(count, it->second);
            }
        }
    }
    if (cand_total == 0) return 0.0;

    // Orders with no candidate n-grams at all (e.g. bigrams of one-token
    // corpora) carry no evidence and are excluded so identity still scores 1.
    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 0; n < max_n; ++n) {
        if (possible[n] == 0) continue;
        if (clipped[n] == 0) return 0.0;
        log_sum += std::log(static_cast<double>(clipped[n]) /
                            static_cast<double>(possible[n]));
        ++orders;
    }
    if (orders == 0) return 0.0;
    const double geo_mean = std::exp(log_sum / static_cast<double>(orders));
    const double bp =
        cand_total >= ref_total
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_total) /
                                 static_cast<double>(cand_total));
    return bp * geo_mean;
}

double rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
    if (candidate.empty() || reference.empty())
        throw ShapeError("rouge_l: sequences must be non-empty");
    const std::size_t m = candidate.size(), n = reference.size();
    // Classic LCS dynamic program over (candidate, reference) prefixes.
    std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if (candidate[i - 1] == reference[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[n]);
    const double p = lcs / static_cast<double>(m);
    const double r = lcs / static_cast<double>(n);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

double meteor(const TokenSeq& candidate, const TokenSeq& reference) {
    if (candidate.empty() || reference.empty())
        throw ShapeError("meteor: sequences must be non-empty");

    // Greedy left-to-right alignment: each candidate token takes the first
    // unmatched identical reference token.
    std::vector<bool> ref_used(reference.size(), false);
    std::vector<long> match_of(candidate.size(), -1);
    std::size_t matches = 0;
    for (std::size_t i = 0; i < candidate.size(); ++i)
        for (std::size_t j = 0; j < reference.size(); ++j)
            if (!ref_used[j] && candidate[i] == reference[j]) {
                ref_used[j] = true;
                match_of[i] = static_cast<long>(j);
                ++matches;
                break;
            }
    if (matches == 0) return 0.0;

    const double p = static_cast<double>(matches) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(matches) / static_cast<double>(reference.size());
    const double fmean = p * r / (0.9 * p + 0.1 * r);

    // Chunks: maximal runs of matches adjacent in both sequences.
    std::size_t chunks = 0;
    long prev_ref = -2;
    bool in_chunk = false;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        if (match_of[i] < 0) {
            in_chunk = false;
            prev_ref = -2;
            continue;
        }
        if (!in_chunk || match_of[i] != prev_ref + 1) ++chunks;
        in_chunk = true;
        prev_ref = match_of[i];
    }
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = 0.5 * frag * frag * frag;
    return fmean * (1.0 - penalty);
}

namespace {

MetricScores score_group(const std::vector<TokenSeq>& cands,
                         const std::vector<TokenSeq>& refs) {
    MetricScores s;
    s.bleu = bleu(cands, refs);
    double rouge_sum = 0.0, meteor_sum = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        rouge_sum += cands[i].empty() ? 0.0 : rouge_l(cands[i], refs[i]);
        meteor_sum += cands[i].empty() ? 0.0 : meteor(cands[i], refs[i]);
    }
    s.rouge_l = rouge_sum / static_cast<double>(cands.size());
    s.meteor = meteor_sum / static_cast<double>(cands.size());
    return s;
}

}  // namespace

MetricReport evaluate_generation(const std::vector<TokenSeq>& candidates,
                                 const std::vector<TokenSeq>& references,
                                 const std::vector<IntentCategory>& intents) {
    if (candidates.size() != references.size() ||
        candidates.size() != intents.size())
        throw ShapeError("evaluate_generation: parallel inputs required");
    if (candidates.empty())
        throw ShapeError("evaluate_generation: empty test set");

    MetricReport report;
    report.pair_count = candidates.size();
    report.overall = score_group(candidates, references);

    std::map<IntentCategory, std::vector<std::size_t>> by_intent;
    for (std::size_t i = 0; i < intents.size(); ++i)
        by_intent[intents[i]].push_back(i);
    for (const auto& [intent, idx] : by_intent) {
        std::vector<TokenSeq> c, r;
        for (std::size_t i : idx) {
            c.push_back(candidates[i]);
            r.push_back(references[i]);
        }
        report.per_intent[intent] = score_group(c, r);
    }
    return report;
}

std::string report_to_json(const MetricReport& report) {
    nlohmann::ordered_json out;
    out["pairs"] = report.pair_count;
    out["overall"] = {{"bleu", report.overall.bleu},
                      {"rouge_l", report.overall.rouge_l},
                      {"meteor", report.overall.meteor}};
    nlohmann::ordered_json per;
    for (const auto& [intent, s] : report.per_intent)
        per[to_string(intent)] = {
            {"bleu", s.bleu}, {"rouge_l", s.rouge_l}, {"meteor", s.meteor}};
    out["per_intent"] = per;
    return out.dump(2);
}

}  // namespace dome
