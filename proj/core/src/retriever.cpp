#include "dome/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <unordered_set>

#include "dome/ops.hpp"

namespace dome {

const std::string& to_string(ScorerKind kind) {
    static const std::string kDense = "dense", kLexical = "lexical";
    return kind == ScorerKind::Dense ? kDense : kLexical;
}

ScorerKind parse_scorer_kind(const std::string& name) {
    if (name == "dense") return ScorerKind::Dense;
    if (name == "lexical") return ScorerKind::Lexical;
    throw ConfigError("unknown retrieval scorer '" + name + "'");
}

const std::vector<IndexedRecord>& RetrievalIndex::partition(
    IntentCategory intent) const {
    if (intent == IntentCategory::Others)
        throw InvalidIntent("no retrieval partition for intent 'others'");
    return partitions[intent_index(intent)];
}

std::vector<IndexedRecord>& RetrievalIndex::partition(IntentCategory intent) {
    if (intent == IntentCategory::Others)
        throw InvalidIntent("no retrieval partition for intent 'others'");
    return partitions[intent_index(intent)];
}

std::size_t RetrievalIndex::total_records() const {
    std::size_t n = 0;
    for (const auto& p : partitions) n += p.size();
    return n;
}

std::map<IntentCategory, Corpus> partition_by_intent(const Corpus& corpus) {
    std::map<IntentCategory, Corpus> out;
    for (std::size_t i = 0; i < kGeneratableIntentCount; ++i)
        out[intent_from_index(i)] = {};
    for (const CodeCommentRecord& r : corpus) {
        if (r.intent == IntentCategory::Others)
            throw InvalidIntent(
                "partition_by_intent expects an Others-free corpus (record " +
                std::to_string(r.id) + ")");
        out[r.intent].push_back(r);
    }
    return out;
}

void BiEncoderConfig::validate() const {
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
        throw ConfigError("bi-encoder d_model must be divisible by heads");
    if (batch_size < 2)
        throw ConfigError("in-batch negatives need batch_size of at least 2");
    if (epochs < 1) throw ConfigError("bi-encoder epochs must be at least 1");
}

BiEncoder::BiEncoder(const BiEncoderConfig& cfg, std::size_t code_vocab_size,
                     std::size_t comment_vocab_size, std::uint64_t init_seed)
    : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    code_encoder_ =
        TransformerEncoder(params_, "biencoder.code", code_vocab_size, cfg.d_model,
                           cfg.heads, cfg.blocks, cfg.d_model * cfg.ffn_mult, rng);
    comment_encoder_ = TransformerEncoder(params_, "biencoder.comment",
                                          comment_vocab_size, cfg.d_model, cfg.heads,
                                          cfg.blocks, cfg.d_model * cfg.ffn_mult, rng);
}

Tensor BiEncoder::embed_code(const std::vector<int>& ids,
                             const ForwardContext& ctx) const {
    return mean_rows(code_encoder_.forward(ids, ctx));
}

Tensor BiEncoder::embed_comment(const std::vector<int>& ids,
                                const ForwardContext& ctx) const {
    return mean_rows(comment_encoder_.forward(ids, ctx));
}

std::vector<double> BiEncoder::embed_code_vec(const std::vector<int>& ids) const {
    NoGradGuard guard;
    return embed_code(ids, ForwardContext{}).data();
}

std::vector<double> BiEncoder::embed_comment_vec(const std::vector<int>& ids) const {
    NoGradGuard guard;
    return embed_comment(ids, ForwardContext{}).data();
}

std::vector<double> train_biencoder(
    BiEncoder& encoder,
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
    std::uint64_t seed) {
    const BiEncoderConfig& cfg = encoder.config();
    if (pairs.size() < 2)
        throw ConfigError("bi-encoder training needs at least 2 pairs");

    Adam adam(AdamConfig{cfg.lr});
    std::vector<double> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng = Rng(seed).child("biencoder-epoch-" + std::to_string(epoch));
        Rng dropout_rng = epoch_rng.child("dropout");
        std::vector<std::size_t> order(pairs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = epoch_rng.child("shuffle");
        shuffle_rng.shuffle(order);

        ForwardContext ctx{true, cfg.dropout, &dropout_rng};
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + 1 < order.size();
             start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            if (stop - start < 2) break;  // a singleton tail has no negatives
            std::vector<Tensor> code_rows, comment_rows;
            for (std::size_t i = start; i < stop; ++i) {
                code_rows.push_back(encoder.embed_code(pairs[order[i]].first, ctx));
                comment_rows.push_back(
                    encoder.embed_comment(pairs[order[i]].second, ctx));
            }
            const Tensor scores = matmul(concat_rows(code_rows),
                                         transpose(concat_rows(comment_rows)));
            std::vector<int> targets(stop - start);
            for (std::size_t i = 0; i < targets.size(); ++i)
                targets[i] = static_cast<int>(i);
            const RowwiseCrossEntropy ce = cross_entropy_rowwise(scores, targets);
            const Tensor loss =
                scale(ce.sum, 1.0 / static_cast<double>(ce.rows));
            encoder.params().zero_grad();
            loss.backward();
            clip_global_norm(encoder.params(), 1.0);
            adam.step(encoder.params());
            loss_sum += loss.at(0);
            ++batches;
        }
        history.push_back(batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches));
    }
    // Epoch-boundary rounding keeps the trained towers identical to their
    // checkpointed form.
    encoder.params().quantize_f32();
    return history;
}

RetrievalIndex build_index(const Corpus& corpus,
                           const std::vector<std::vector<int>>& code_ids,
                           const BiEncoder* encoder, ScorerKind kind) {
    if (kind == ScorerKind::Dense && encoder == nullptr)
        throw ConfigError("dense indexing requires a trained bi-encoder");
    if (code_ids.size() != corpus.size())
        throw ShapeError("build_index: one id sequence per record required");

    RetrievalIndex index;
    index.kind = kind;
    index.dim = kind == ScorerKind::Dense ? encoder->config().d_model : 0;
    index.encoder_version = kind == ScorerKind::Dense ? "biencoder-v1" : "bm25-v1";
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const CodeCommentRecord& r = corpus[i];
        IndexedRecord rec;
        rec.id = r.id;
        rec.comment = r.comment;
        rec.code_tokens = tokenize(r.code);
        if (kind == ScorerKind::Dense) {
            rec.vec = encoder->embed_code_vec(code_ids[i]);
            for (double& x : rec.vec)
                x = static_cast<double>(static_cast<float>(x));
        }
        index.partition(r.intent).push_back(std::move(rec));
    }
    return index;
}

namespace {

const IndexedRecord* best_by_score(
    const std::vector<IndexedRecord>& partition,
    std::optional<std::int64_t> exclude_id,
    const std::function<double(const IndexedRecord&)>& score_of, double* best_score) {
    const IndexedRecord* best = nullptr;
    double best_val = 0.0;
    for (const IndexedRecord& rec : partition) {
        if (exclude_id && rec.id == *exclude_id) continue;
        const double s = score_of(rec);
        if (best == nullptr || s > best_val ||
            (s == best_val && rec.id < best->id)) {
            best = &rec;
            best_val = s;
        }
    }
    if (best != nullptr) *best_score = best_val;
    return best;
}

}  // namespace

Exemplar retrieve(const std::vector<double>& query_vec, IntentCategory intent,
                  const RetrievalIndex& index,
                  std::optional<std::int64_t> exclude_id) {
    if (index.kind != ScorerKind::Dense)
        throw ConfigError("dense retrieval requested on a lexical index");
    const auto& partition = index.partition(intent);
    double best_score = 0.0;
    const IndexedRecord* best = best_by_score(
        partition, exclude_id,
        [&query_vec](const IndexedRecord& rec) {
            if (rec.vec.size() != query_vec.size())
                throw ShapeError("retrieve: query/index dimension mismatch");
            double dot = 0.0;
            for (std::size_t i = 0; i < query_vec.size(); ++i)
                dot += query_vec[i] * rec.vec[i];
            return dot;
        },
        &best_score);
    if (best == nullptr)
        throw NoExemplar("no exemplar for intent '" + to_string(intent) + "'");
    return Exemplar{best->comment, best_score, best->id};
}

Exemplar lexical_retrieve(const std::vector<std::string>& query_tokens,
                          IntentCategory intent, const RetrievalIndex& index,
                          std::optional<std::int64_t> exclude_id) {
    const auto& partition = index.partition(intent);
    if (partition.empty())
        throw NoExemplar("no exemplar for intent '" + to_string(intent) + "'");

    constexpr double kK1 = 1.2, kB = 0.75;
    const double n_docs = static_cast<double>(partition.size());
    double avgdl = 0.0;
    std::unordered_map<std::string, std::size_t> df;
    for (const IndexedRecord& rec : partition) {
        avgdl += static_cast<double>(rec.code_tokens.size());
        std::unordered_set<std::string> seen(rec.code_tokens.begin(),
                                             rec.code_tokens.end());
        for (const std::string& t : seen) ++df[t];
    }
    avgdl /= n_docs;

    std::vector<std::string> unique_terms;
    {
        std::unordered_set<std::string> seen;
        for (const std::string& t : query_tokens)
            if (seen.insert(t).second) unique_terms.push_back(t);
    }

    double best_score = 0.0;
    const IndexedRecord* best = best_by_score(
        partition, exclude_id,
        [&](const IndexedRecord& rec) {
            const double dl = static_cast<double>(rec.code_tokens.size());
            double score = 0.0;
            for (const std::string& term : unique_terms) {
                auto it = df.find(term);
                if (it == df.end()) continue;
                std::size_t tf = 0;
                for (const std::string& t : rec.code_tokens)
                    if (t == term) ++tf;
                if (tf == 0) continue;
                const double d = static_cast<double>(it->second);
                const double idf = std::log(1.0 + (n_docs - d + 0.5) / (d + 0.5));
                const double tfd = static_cast<double>(tf);
                score += idf * (tfd * (kK1 + 1.0)) /
                         (tfd + kK1 * (1.0 - kB + kB * dl / avgdl));
            }
            return score;
        },
        &best_score);
    if (best == nullptr)
        throw NoExemplar("no exemplar for intent '" + to_string(intent) +
                         "' after exclusion");
    return Exemplar{best->comment, best_score, best->id};
}

}  // namespace dome
