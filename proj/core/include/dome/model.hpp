#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dome/blocks.hpp"
#include "dome/corpus.hpp"
#include "dome/isa.hpp"
#include "dome/retriever.hpp"

namespace dome {

/// Network dimensions and decoding knobs.  Defaults mirror the full-scale
/// configuration; toy runs override them downward.
struct ModelConfig {
    std::size_t d_model = 512;
    std::size_t d_intent = 128;
    std::size_t heads = 8;
    std::size_t blocks = 6;
    std::size_t ffn_mult = 4;
    double dropout = 0.2;
    std::size_t k_token = 10;
    std::size_t k_statement = 5;
    std::size_t max_comment_len = 30;
    std::size_t max_code_tokens = 512;
    std::size_t code_vocab_size = 50000;
    std::size_t comment_vocab_size = 30000;
    std::size_t beam_size = 5;
    std::size_t max_statements = 16;
    std::size_t max_statement_len = 32;

    void validate() const;
    ISAConfig isa() const {
        return ISAConfig{k_token, k_statement, heads, d_model, d_intent};
    }
};

/// Two-level encoding of one snippet: final token states and their
/// per-statement max-pools.
struct EncodedCode {
    Tensor x_tok;  // T x d_model
    Tensor x_sta;  // L x d_model
    Segments segments;
};

/// The comment generator: code encoder, exemplar encoder, intent embedding,
/// decoder stack with masked self-attention + ISA/exemplar fusion, and the
/// intent-conditioned output head.
class DomeModel {
public:
    /// Builds and initializes all parameters; actual vocabulary sizes
    /// replace the configured maxima.
    DomeModel(const ModelConfig& cfg, std::size_t code_vocab_size,
              std::size_t comment_vocab_size, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    std::size_t comment_vocab_size() const { return comment_vocab_size_; }

    EncodedCode encode_code(const PreprocessedCode& pre,
                            const ForwardContext& ctx) const;

    /// Exemplar comment ids -> encoder states; an empty exemplar yields the
    /// learned null row so cross-attention stays defined.
    Tensor encode_exemplar(const std::vector<int>& ids,
                           const ForwardContext& ctx) const;

    /// Row of the 5 x d_intent table as [1 x d_intent]; Others is invalid.
    Tensor intent_embed(IntentCategory intent) const;

    /// One decoder block: masked self-attention, intent-concatenated query,
    /// ISA + exemplar cross-attention fused by the sigmoid gate, then the
    /// feed-forward sublayer.  Exposed for gradient checks.
    Tensor decoder_block_forward(std::size_t block, const Tensor& s_prev,
                                 const Tensor& intent_e, const EncodedCode& enc,
                                 const Tensor& z, const ForwardContext& ctx,
                                 Tensor* beta_out = nullptr,
                                 AttentionTrace* trace = nullptr) const;

    /// Full decoder pass over a BOS-prefixed target id sequence: hidden
    /// states [n x d_model].
    Tensor decode_states(const std::vector<int>& input_ids, const EncodedCode& enc,
                         const Tensor& intent_e, const Tensor& z,
                         const ForwardContext& ctx,
                         AttentionTrace* trace = nullptr) const;

    /// Output head: logits = [s ; E] W_o + b_o, one row per position.
    Tensor output_logits(const Tensor& states, const Tensor& intent_e) const;

    std::vector<int> greedy_decode(const EncodedCode& enc, IntentCategory intent,
                                   const Tensor& z) const;

    std::vector<int> beam_decode(const EncodedCode& enc, IntentCategory intent,
                                 const Tensor& z, std::size_t beam_size,
                                 double* best_score = nullptr) const;

private:
    struct DecoderBlock {
        MultiHeadAttention self_attn;
        LayerNormLayer norm1;
        ISAParams isa;
        MultiHeadAttention cross_attn;
        Tensor w_gate;  // [2*d_model x 1], zero-initialized (gate starts at 0.5)
        FeedForward ffn;
        LayerNormLayer norm2;
    };

    ModelConfig cfg_;
    std::size_t comment_vocab_size_ = 0;
    ParameterStore params_;
    TransformerEncoder code_encoder_;
    TransformerEncoder exemplar_encoder_;
    Tensor intent_table_;       // 5 x d_intent
    Tensor null_exemplar_;      // 1 x d_model
    Tensor comment_embedding_;  // comment vocab x d_model
    std::vector<DecoderBlock> decoder_blocks_;
    Linear output_;
};

/// Steppable sequence scorer: full next-token log-distribution for a
/// BOS-prefixed prefix.  Decoding algorithms run against this interface so
/// tests can drive them with exhaustive toy distributions.
struct StepScorer {
    virtual ~StepScorer() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual std::vector<double> log_probs(const std::vector<int>& prefix) const = 0;
};

/// Argmax decoding (ties to the lowest token id); returns generated ids
/// without BOS, including the terminating EOS when emitted.
std::vector<int> greedy_decode_scorer(const StepScorer& scorer, int bos, int eos,
                                      std::size_t max_len);

/// Beam search with mean-log-probability length normalization; completed
/// hypotheses retire at EOS; ties break toward the lexicographically
/// smallest token sequence.
std::vector<int> beam_search_scorer(const StepScorer& scorer, std::size_t beam_size,
                                    int bos, int eos, std::size_t max_len,
                                    double* best_score = nullptr);

/// Length-normalized score (sum of step log-probs / length) of an existing
/// generated sequence; shared by decoding and the exhaustive test oracle.
double sequence_score(const StepScorer& scorer, const std::vector<int>& generated,
                      int bos);

/// Everything generation needs: configuration, vocabularies, the trained
/// model, the exemplar index, and (for dense retrieval) the bi-encoder.
struct DomeBundle {
    ModelConfig cfg;
    Vocabulary code_vocab;
    Vocabulary comment_vocab;
    std::unique_ptr<DomeModel> model;
    RetrievalIndex index;
    std::unique_ptr<BiEncoder> biencoder;
};

struct GenerateResult {
    std::string comment;
    std::vector<int> token_ids;
    IntentCategory intent = IntentCategory::What;
    std::int64_t exemplar_id = -1;
    double exemplar_score = 0.0;
    bool used_exemplar = false;
    double beam_score = 0.0;
};

/// Full pipeline: preprocess -> retrieve intent-matched exemplar -> encode ->
/// beam decode -> detokenize (specials stripped, space-joined).  A missing
/// exemplar partition falls back to the null exemplar.
GenerateResult generate(const DomeBundle& bundle, const std::string& code,
                        IntentCategory intent, std::size_t beam_override = 0,
                        AttentionTrace* trace = nullptr);

}  // namespace dome
