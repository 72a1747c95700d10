#include "dome/coin.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "dome/errors.hpp"
#include "dome/ops.hpp"

namespace dome {

void ClassifierConfig::validate() const {
    if (d_model == 0 || heads == 0 || blocks == 0 || ffn_mult == 0 ||
        mlp_hidden == 0)
        throw ConfigError("classifier dimensions must be positive");
    if (d_model % heads != 0)
        throw ConfigError("d_model must be divisible by heads");
    if (max_seq_len < 3)
        throw ConfigError("max_seq_len must fit [CLS] and both [SEP] markers");
    if (dropout < 0.0 || dropout >= 1.0)
        throw ConfigError("dropout must lie in [0, 1)");
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
}

std::vector<int> build_classifier_input(const std::vector<std::string>& comment_tokens,
                                        const std::vector<std::string>& code_tokens,
                                        const Vocabulary& vocab,
                                        std::size_t max_seq_len) {
    if (max_seq_len < 3)
        throw ConfigError("max_seq_len must fit [CLS] and both [SEP] markers");
    const std::size_t budget = max_seq_len - 3;
    const std::size_t comment_keep = std::min(comment_tokens.size(), budget);
    const std::size_t code_keep = std::min(code_tokens.size(), budget - comment_keep);

    std::vector<int> ids;
    ids.reserve(comment_keep + code_keep + 3);
    ids.push_back(SpecialTokens::kCls);
    for (std::size_t i = 0; i < comment_keep; ++i)
        ids.push_back(vocab.id_of(comment_tokens[i]));
    ids.push_back(SpecialTokens::kSep);
    for (std::size_t i = 0; i < code_keep; ++i)
        ids.push_back(vocab.id_of(code_tokens[i]));
    ids.push_back(SpecialTokens::kSep);
    return ids;
}

Vocabulary build_shared_vocab(const Corpus& corpus, std::size_t max_size) {
    if (corpus.empty()) throw EmptyInput("cannot build a vocabulary from nothing");
    if (max_size <= SpecialTokens::kReservedCount)
        throw ConfigError("vocabulary size must exceed the reserved tokens");

    std::map<std::string, std::size_t> counts;
    for (const CodeCommentRecord& r : corpus) {
        for (const std::string& t : tokenize(r.code)) ++counts[t];
        for (const std::string& t : tokenize(r.comment)) ++counts[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                            counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens;
    const std::size_t keep =
        std::min(ranked.size(), max_size - SpecialTokens::kReservedCount);
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
    return Vocabulary(tokens);
}

CoinModel::CoinModel(const ClassifierConfig& cfg, std::size_t vocab_size,
                     std::uint64_t init_seed)
    : cfg_(cfg), vocab_size_(vocab_size) {
    cfg_.validate();
    if (vocab_size <= SpecialTokens::kReservedCount)
        throw ConfigError("vocabulary size must exceed the reserved tokens");
    Rng rng(init_seed);
    encoder_ = TransformerEncoder(params_, "coin.encoder", vocab_size, cfg_.d_model,
                                  cfg_.heads, cfg_.blocks,
                                  cfg_.d_model * cfg_.ffn_mult, rng);
    fc1_ = Linear(params_, "coin.fc1", cfg_.d_model, cfg_.mlp_hidden, rng);
    fc2_ = Linear(params_, "coin.fc2", cfg_.mlp_hidden, kIntentCount, rng);
}

Tensor CoinModel::logits(const std::vector<int>& input_ids,
                         const ForwardContext& ctx) const {
    if (input_ids.empty()) throw EmptyInput("classifier input is empty");
    Tensor h = encoder_.forward(input_ids, ctx);
    Tensor cls = slice_rows(h, 0, 1);
    return fc2_.forward(relu(fc1_.forward(cls)));
}

ClassifyResult CoinModel::classify(const std::string& comment,
                                   const std::string& code,
                                   const Vocabulary& vocab) const {
    NoGradGuard guard;
    ForwardContext ctx;
    std::vector<int> input = build_classifier_input(tokenize(comment), tokenize(code),
                                                    vocab, cfg_.max_seq_len);
    Tensor lg = logits(input, ctx);
    const std::vector<double>& v = lg.data();

    double mx = *std::max_element(v.begin(), v.end());
    double denom = 0.0;
    for (double x : v) denom += std::exp(x - mx);

    ClassifyResult result;
    std::size_t best = 0;
    for (std::size_t i = 0; i < kIntentCount; ++i) {
        result.probs[i] = std::exp(v[i] - mx) / denom;
        if (v[i] > v[best]) best = i;
    }
    result.intent = intent_from_index(best);
    return result;
}

std::vector<double> train_classifier(CoinModel& model, const Corpus& records,
                                     const Vocabulary& vocab, std::uint64_t seed) {
    if (records.empty()) throw EmptyInput("classifier training needs records");
    const ClassifierConfig& cfg = model.config();

    std::vector<std::vector<int>> inputs;
    std::vector<int> labels;
    inputs.reserve(records.size());
    labels.reserve(records.size());
    for (const CodeCommentRecord& r : records) {
        inputs.push_back(build_classifier_input(tokenize(r.comment), tokenize(r.code),
                                                vocab, cfg.max_seq_len));
        labels.push_back(static_cast<int>(intent_index(r.intent)));
    }

    Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    Rng root(seed);
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng = root.child("coin-epoch-" + std::to_string(epoch));
        Rng shuffle_rng = epoch_rng.child("shuffle");
        Rng dropout_rng = epoch_rng.child("dropout");
        shuffle_rng.shuffle(order);

        ForwardContext ctx;
        ctx.training = true;
        ctx.dropout = cfg.dropout;
        ctx.rng = &dropout_rng;

        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            model.params().zero_grad();
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                Tensor lg = model.logits(inputs[idx], ctx);
                RowwiseCrossEntropy ce =
                    cross_entropy_rowwise(lg, {labels[idx]});
                total += ce.sum.at(0);
                Tensor loss = scale(ce.sum, inv);
                loss.backward();
            }
            clip_global_norm(model.params(), 1.0);
            adam.step(model.params());
        }
        history.push_back(total / static_cast<double>(records.size()));
        model.params().quantize_f32();
        adam.quantize_f32();
    }
    return history;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                  std::uint64_t seed) {
    if (k < 2) throw ConfigError("cross-validation needs at least two folds");
    if (k > n) throw ConfigError("more folds than records");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<std::vector<std::size_t>> folds(k);
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return folds;
}

EvaluationReport evaluate_classifier(const CoinModel& model, const Corpus& test,
                                     const Vocabulary& vocab) {
    if (test.empty()) throw EmptyInput("nothing to evaluate");
    EvaluationReport report;
    report.count = test.size();

    std::size_t correct = 0;
    for (const CodeCommentRecord& r : test) {
        ClassifyResult res = model.classify(r.comment, r.code, vocab);
        const std::size_t truth = intent_index(r.intent);
        const std::size_t pred = intent_index(res.intent);
        ++report.confusion[truth][pred];
        if (truth == pred) ++correct;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());

    for (std::size_t c = 0; c < kIntentCount; ++c) {
        std::size_t tp = report.confusion[c][c];
        std::size_t pred_total = 0;
        std::size_t true_total = 0;
        for (std::size_t o = 0; o < kIntentCount; ++o) {
            pred_total += report.confusion[o][c];
            true_total += report.confusion[c][o];
        }
        ClassMetrics& m = report.per_class[c];
        m.precision = pred_total ? static_cast<double>(tp) / pred_total : 0.0;
        m.recall = true_total ? static_cast<double>(tp) / true_total : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        report.macro_precision += m.precision;
        report.macro_recall += m.recall;
        report.macro_f1 += m.f1;
    }
    report.macro_precision /= kIntentCount;
    report.macro_recall /= kIntentCount;
    report.macro_f1 /= kIntentCount;
    return report;
}

std::string evaluation_to_json(const EvaluationReport& report) {
    nlohmann::ordered_json j;
    j["count"] = report.count;
    j["accuracy"] = report.accuracy;
    j["macro_precision"] = report.macro_precision;
    j["macro_recall"] = report.macro_recall;
    j["macro_f1"] = report.macro_f1;
    nlohmann::ordered_json classes = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < kIntentCount; ++c) {
        nlohmann::ordered_json entry;
        entry["precision"] = report.per_class[c].precision;
        entry["recall"] = report.per_class[c].recall;
        entry["f1"] = report.per_class[c].f1;
        classes[to_string(intent_from_index(c))] = entry;
    }
    j["per_class"] = classes;
    nlohmann::ordered_json confusion = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < kIntentCount; ++t) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t p = 0; p < kIntentCount; ++p)
            row.push_back(report.confusion[t][p]);
        confusion.push_back(row);
    }
    j["confusion"] = confusion;
    return j.dump(2);
}

Corpus auto_label(const CoinModel& model, const Vocabulary& vocab, Corpus corpus) {
    for (CodeCommentRecord& r : corpus)
        r.intent = model.classify(r.comment, r.code, vocab).intent;
    return corpus;
}

}  // namespace dome
