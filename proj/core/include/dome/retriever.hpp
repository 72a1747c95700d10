#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dome/blocks.hpp"
#include "dome/corpus.hpp"

namespace dome {

/// Retrieval result: the most similar comment within the intent partition.
struct Exemplar {
    std::string comment;
    double score = 0.0;
    std::int64_t source_id = -1;
};

/// One indexed corpus record: the dense code vector (empty under the lexical
/// scorer), the code token bag for BM25, and the comment that retrieval
/// returns.
struct IndexedRecord {
    std::int64_t id = -1;
    std::vector<double> vec;
    std::vector<std::string> code_tokens;
    std::string comment;
};

enum class ScorerKind { Dense, Lexical };

const std::string& to_string(ScorerKind kind);
ScorerKind parse_scorer_kind(const std::string& name);

/// Intent-partitioned exemplar index.  Others records are rejected at build
/// time, so the five generatable intents each own one partition.
struct RetrievalIndex {
    ScorerKind kind = ScorerKind::Dense;
    std::size_t dim = 0;
    std::string encoder_version;
    std::array<std::vector<IndexedRecord>, kGeneratableIntentCount> partitions;

    const std::vector<IndexedRecord>& partition(IntentCategory intent) const;
    std::vector<IndexedRecord>& partition(IntentCategory intent);
    std::size_t total_records() const;
};

/// Groups a pre-filtered corpus by intent, preserving order inside each
/// group; a lingering Others record is an error.
std::map<IntentCategory, Corpus> partition_by_intent(const Corpus& corpus);

struct BiEncoderConfig {
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t ffn_mult = 4;
    double dropout = 0.0;
    double lr = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;

    void validate() const;
};

/// Small trainable two-tower encoder scoring code against comments by dot
/// product of mean-pooled final hidden states.
class BiEncoder {
public:
    BiEncoder(const BiEncoderConfig& cfg, std::size_t code_vocab_size,
              std::size_t comment_vocab_size, std::uint64_t init_seed);

    const BiEncoderConfig& config() const { return cfg_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    /// Mean-pooled code embedding as a graph tensor [1 x d] (training path).
    Tensor embed_code(const std::vector<int>& ids, const ForwardContext& ctx) const;
    Tensor embed_comment(const std::vector<int>& ids, const ForwardContext& ctx) const;

    /// Inference embeddings (no graph recorded).
    std::vector<double> embed_code_vec(const std::vector<int>& ids) const;
    std::vector<double> embed_comment_vec(const std::vector<int>& ids) const;

private:
    BiEncoderConfig cfg_;
    ParameterStore params_;
    TransformerEncoder code_encoder_;
    TransformerEncoder comment_encoder_;
};

/// Trains the two towers with in-batch-negative softmax over dot products
/// (each code's positive is its own comment, other batch members are
/// negatives).  Returns the per-epoch mean loss.
std::vector<double> train_biencoder(
    BiEncoder& encoder,
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
    std::uint64_t seed);

/// Builds the intent-partitioned index from a pre-filtered corpus.
/// code_ids run parallel to the corpus (token ids of each record's code).
/// Dense indexing embeds every record and rounds the vectors through
/// float32 so the index serializes losslessly.
RetrievalIndex build_index(const Corpus& corpus,
                           const std::vector<std::vector<int>>& code_ids,
                           const BiEncoder* encoder, ScorerKind kind);

/// Dense retrieval: argmax dot product of the query vector over the intent
/// partition; exclude_id is skipped; ties go to the lowest record id.
Exemplar retrieve(const std::vector<double>& query_vec, IntentCategory intent,
                  const RetrievalIndex& index,
                  std::optional<std::int64_t> exclude_id = std::nullopt);

/// BM25 retrieval (k1 = 1.2, b = 0.75) over code token bags, with the same
/// exclusion and tie rules.  Corpus statistics (idf, average length) are
/// computed over the full partition regardless of exclusion.
Exemplar lexical_retrieve(const std::vector<std::string>& query_tokens,
                          IntentCategory intent, const RetrievalIndex& index,
                          std::optional<std::int64_t> exclude_id = std::nullopt);

}  // namespace dome
