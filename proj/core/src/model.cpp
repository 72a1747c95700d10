#include "dome/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "dome/errors.hpp"
#include "dome/ops.hpp"

namespace dome {

void ModelConfig::validate() const {
    isa().validate();
    if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
    if (blocks == 0) throw ConfigError("decoder needs at least one block");
    if (dropout < 0.0 || dropout >= 1.0)
        throw ConfigError("dropout must lie in [0, 1)");
    if (max_comment_len == 0) throw ConfigError("max_comment_len must be positive");
    if (max_code_tokens == 0) throw ConfigError("max_code_tokens must be positive");
    if (beam_size == 0) throw ConfigError("beam_size must be positive");
    if (max_statements == 0 || max_statement_len < 2)
        throw ConfigError("statement limits too small");
    if (code_vocab_size <= SpecialTokens::kReservedCount ||
        comment_vocab_size <= SpecialTokens::kReservedCount)
        throw ConfigError("vocabulary sizes must exceed the reserved tokens");
}

DomeModel::DomeModel(const ModelConfig& cfg, std::size_t code_vocab_size,
                     std::size_t comment_vocab_size, std::uint64_t init_seed)
    : cfg_(cfg), comment_vocab_size_(comment_vocab_size) {
    cfg_.code_vocab_size = code_vocab_size;
    cfg_.comment_vocab_size = comment_vocab_size;
    cfg_.validate();

    const std::size_t d = cfg_.d_model;
    Rng rng(init_seed);

    code_encoder_ = TransformerEncoder(params_, "code_encoder", code_vocab_size, d,
                                       cfg_.heads, cfg_.blocks,
                                       d * cfg_.ffn_mult, rng);
    exemplar_encoder_ = TransformerEncoder(params_, "exemplar_encoder",
                                           comment_vocab_size, d, cfg_.heads,
                                           cfg_.blocks, d * cfg_.ffn_mult, rng);

    intent_table_ = params_.create("intent_table",
                                   {kGeneratableIntentCount, cfg_.d_intent});
    {
        Rng stream = rng.child("intent_table");
        init_normal(intent_table_, stream, 0.02);
    }
    null_exemplar_ = params_.create("null_exemplar", {1, d});
    {
        Rng stream = rng.child("null_exemplar");
        init_normal(null_exemplar_, stream, 0.02);
    }
    comment_embedding_ = params_.create("comment_embedding", {comment_vocab_size, d});
    {
        Rng stream = rng.child("comment_embedding");
        init_normal(comment_embedding_, stream, 0.02);
    }

    decoder_blocks_.reserve(cfg_.blocks);
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
        std::string prefix = "decoder.block" + std::to_string(b);
        DecoderBlock blk;
        blk.self_attn = MultiHeadAttention(params_, prefix + ".self_attn", d, d,
                                           cfg_.heads, rng);
        blk.norm1 = LayerNormLayer(params_, prefix + ".norm1", d);
        blk.isa = ISAParams(params_, prefix + ".isa", cfg_.isa(), rng);
        blk.cross_attn = MultiHeadAttention(params_, prefix + ".cross_attn",
                                            d + cfg_.d_intent, d, cfg_.heads, rng);
        // Zero init keeps the fusion gate at exactly 0.5 before training.
        blk.w_gate = params_.create(prefix + ".gate.w", {2 * d, 1});
        blk.ffn = FeedForward(params_, prefix + ".ffn", d, d * cfg_.ffn_mult, rng);
        blk.norm2 = LayerNormLayer(params_, prefix + ".norm2", d);
        decoder_blocks_.push_back(std::move(blk));
    }

    output_ = Linear(params_, "output", d + cfg_.d_intent, comment_vocab_size, rng,
                     /*bias=*/true);
}

EncodedCode DomeModel::encode_code(const PreprocessedCode& pre,
                                   const ForwardContext& ctx) const {
    if (pre.token_ids.empty()) throw EmptyInput("cannot encode empty code");
    if (pre.token_ids.size() > cfg_.max_code_tokens) {
        std::ostringstream msg;
        msg << "code has " << pre.token_ids.size()
            << " tokens, above the limit of " << cfg_.max_code_tokens;
        throw InputTooLong(msg.str());
    }
    EncodedCode enc;
    enc.x_tok = code_encoder_.forward(pre.token_ids, ctx);
    enc.x_sta = segment_max_pool(enc.x_tok, pre.segments);
    enc.segments = pre.segments;
    return enc;
}

Tensor DomeModel::encode_exemplar(const std::vector<int>& ids,
                                  const ForwardContext& ctx) const {
    if (ids.empty()) return null_exemplar_;
    return exemplar_encoder_.forward(ids, ctx);
}

Tensor DomeModel::intent_embed(IntentCategory intent) const {
    if (intent == IntentCategory::Others)
        throw InvalidIntent("no intent embedding for Others");
    std::size_t row = intent_index(intent);
    return slice_rows(intent_table_, row, row + 1);
}

Tensor DomeModel::decoder_block_forward(std::size_t block, const Tensor& s_prev,
                                        const Tensor& intent_e,
                                        const EncodedCode& enc, const Tensor& z,
                                        const ForwardContext& ctx, Tensor* beta_out,
                                        AttentionTrace* trace) const {
    if (block >= decoder_blocks_.size())
        throw ConfigError("decoder block index out of range");
    const DecoderBlock& blk = decoder_blocks_[block];
    const std::size_t n = s_prev.rows();

    Tensor self_out = blk.self_attn.forward(s_prev, s_prev, causal_mask(n));
    Tensor s1 = blk.norm1.forward(add(s_prev, ctx.maybe_dropout(self_out)));

    Tensor q1 = concat_cols(s1, repeat_row(intent_e, n));
    Tensor o_isa = isa_forward(q1, enc.x_tok, enc.x_sta, enc.segments, cfg_.isa(),
                               blk.isa, block, trace);
    Tensor o_mha = blk.cross_attn.forward(q1, z);

    Tensor beta = sigmoid(matmul(concat_cols(o_isa, o_mha), blk.w_gate));
    Tensor one_minus_beta = sub(Tensor::full({n, 1}, 1.0), beta);
    Tensor s2 = add(row_scale(o_isa, beta), row_scale(o_mha, one_minus_beta));

    Tensor s2d = ctx.maybe_dropout(s2);
    Tensor out = blk.norm2.forward(add(s2d, ctx.maybe_dropout(blk.ffn.forward(s2d))));

    if (beta_out) *beta_out = beta;
    if (trace) {
        if (trace->beta.size() <= block) trace->beta.resize(block + 1);
        trace->beta[block] = beta.data();
    }
    return out;
}

Tensor DomeModel::decode_states(const std::vector<int>& input_ids,
                                const EncodedCode& enc, const Tensor& intent_e,
                                const Tensor& z, const ForwardContext& ctx,
                                AttentionTrace* trace) const {
    if (input_ids.empty()) throw EmptyInput("decoder needs at least one input id");
    const std::size_t d = cfg_.d_model;
    Tensor h = embedding_lookup(comment_embedding_, input_ids);
    h = scale(h, std::sqrt(static_cast<double>(d)));
    h = add(h, sinusoidal_pe(input_ids.size(), d));
    h = ctx.maybe_dropout(h);

    if (trace) {
        trace->heads.clear();
        trace->beta.assign(decoder_blocks_.size(), {});
    }
    for (std::size_t b = 0; b < decoder_blocks_.size(); ++b)
        h = decoder_block_forward(b, h, intent_e, enc, z, ctx, nullptr, trace);
    return h;
}

Tensor DomeModel::output_logits(const Tensor& states, const Tensor& intent_e) const {
    return output_.forward(concat_cols(states, repeat_row(intent_e, states.rows())));
}

namespace {

/// Scorer backed by the full model; recomputes the prefix each step, which
/// is quadratic in output length but exact and stateless.
class ModelStepScorer final : public StepScorer {
public:
    ModelStepScorer(const DomeModel& model, const EncodedCode& enc, Tensor intent_e,
                    Tensor z)
        : model_(model), enc_(enc), intent_e_(std::move(intent_e)), z_(std::move(z)) {}

    std::size_t vocab_size() const override { return model_.comment_vocab_size(); }

    std::vector<double> log_probs(const std::vector<int>& prefix) const override {
        NoGradGuard guard;
        ForwardContext ctx;
        Tensor states = model_.decode_states(prefix, enc_, intent_e_, z_, ctx);
        Tensor last = slice_rows(states, states.rows() - 1, states.rows());
        Tensor logits = model_.output_logits(last, intent_e_);
        const std::vector<double>& v = logits.data();
        double mx = *std::max_element(v.begin(), v.end());
        double lse = 0.0;
        for (double x : v) lse += std::exp(x - mx);
        lse = mx + std::log(lse);
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
        return out;
    }

private:
    const DomeModel& model_;
    const EncodedCode& enc_;
    Tensor intent_e_;
    Tensor z_;
};

}  // namespace

std::vector<int> DomeModel::greedy_decode(const EncodedCode& enc,
                                          IntentCategory intent,
                                          const Tensor& z) const {
    NoGradGuard guard;
    ModelStepScorer scorer(*this, enc, intent_embed(intent), z);
    return greedy_decode_scorer(scorer, SpecialTokens::kBos, SpecialTokens::kEos,
                                cfg_.max_comment_len);
}

std::vector<int> DomeModel::beam_decode(const EncodedCode& enc, IntentCategory intent,
                                        const Tensor& z, std::size_t beam_size,
                                        double* best_score) const {
    NoGradGuard guard;
    ModelStepScorer scorer(*this, enc, intent_embed(intent), z);
    return beam_search_scorer(scorer, beam_size, SpecialTokens::kBos,
                              SpecialTokens::kEos, cfg_.max_comment_len, best_score);
}

std::vector<int> greedy_decode_scorer(const StepScorer& scorer, int bos, int eos,
                                      std::size_t max_len) {
    if (max_len == 0) throw ConfigError("max_len must be positive");
    std::vector<int> prefix{bos};
    std::vector<int> generated;
    for (std::size_t step = 0; step < max_len; ++step) {
        std::vector<double> lp = scorer.log_probs(prefix);
        if (lp.size() != scorer.vocab_size())
            throw ShapeError("scorer returned a distribution of the wrong size");
        std::size_t best = 0;
        for (std::size_t i = 1; i < lp.size(); ++i)
            if (lp[i] > lp[best]) best = i;
        generated.push_back(static_cast<int>(best));
        prefix.push_back(static_cast<int>(best));
        if (static_cast<int>(best) == eos) break;
    }
    return generated;
}

namespace {

struct Hypothesis {
    std::vector<int> ids;
    double sum_logp = 0.0;
};

/// Candidate expansion referencing its parent hypothesis to avoid copying
/// token vectors before selection.
struct Candidate {
    std::size_t parent = 0;
    int token = 0;
    double sum_logp = 0.0;
};

}  // namespace

std::vector<int> beam_search_scorer(const StepScorer& scorer, std::size_t beam_size,
                                    int bos, int eos, std::size_t max_len,
                                    double* best_score) {
    if (beam_size == 0) throw ConfigError("beam_size must be positive");
    if (max_len == 0) throw ConfigError("max_len must be positive");
    const std::size_t vocab = scorer.vocab_size();
    if (vocab == 0) throw ConfigError("scorer has an empty vocabulary");

    std::vector<Hypothesis> live{Hypothesis{}};
    std::vector<Hypothesis> finished;

    for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
        std::vector<Candidate> candidates;
        candidates.reserve(live.size() * vocab);
        for (std::size_t h = 0; h < live.size(); ++h) {
            std::vector<int> prefix;
            prefix.reserve(live[h].ids.size() + 1);
            prefix.push_back(bos);
            prefix.insert(prefix.end(), live[h].ids.begin(), live[h].ids.end());
            std::vector<double> lp = scorer.log_probs(prefix);
            if (lp.size() != vocab)
                throw ShapeError("scorer returned a distribution of the wrong size");
            for (std::size_t t = 0; t < vocab; ++t)
                candidates.push_back(
                    {h, static_cast<int>(t), live[h].sum_logp + lp[t]});
        }
        // All live hypotheses at a given step have equal length, so the
        // lexicographic tiebreak compares parents elementwise, then tokens.
        auto before = [&](const Candidate& a, const Candidate& b) {
            if (a.sum_logp != b.sum_logp) return a.sum_logp > b.sum_logp;
            const std::vector<int>& pa = live[a.parent].ids;
            const std::vector<int>& pb = live[b.parent].ids;
            for (std::size_t i = 0; i < pa.size(); ++i)
                if (pa[i] != pb[i]) return pa[i] < pb[i];
            return a.token < b.token;
        };
        std::size_t keep = std::min(beam_size, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + keep,
                          candidates.end(), before);

        std::vector<Hypothesis> next;
        next.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            const Candidate& c = candidates[i];
            Hypothesis h;
            h.ids = live[c.parent].ids;
            h.ids.push_back(c.token);
            h.sum_logp = c.sum_logp;
            if (c.token == eos)
                finished.push_back(std::move(h));
            else
                next.push_back(std::move(h));
        }
        live = std::move(next);
    }
    // Hypotheses still open at the length cap compete as they stand.
    for (Hypothesis& h : live) finished.push_back(std::move(h));

    const Hypothesis* winner = nullptr;
    double winner_score = -std::numeric_limits<double>::infinity();
    for (const Hypothesis& h : finished) {
        double norm = h.ids.empty()
                          ? -std::numeric_limits<double>::infinity()
                          : h.sum_logp / static_cast<double>(h.ids.size());
        if (!winner || norm > winner_score ||
            (norm == winner_score && h.ids < winner->ids)) {
            winner = &h;
            winner_score = norm;
        }
    }
    if (!winner) throw StateError("beam search produced no hypotheses");
    if (best_score) *best_score = winner_score;
    return winner->ids;
}

double sequence_score(const StepScorer& scorer, const std::vector<int>& generated,
                      int bos) {
    if (generated.empty()) return 0.0;
    std::vector<int> prefix{bos};
    double sum = 0.0;
    for (int tok : generated) {
        std::vector<double> lp = scorer.log_probs(prefix);
        if (tok < 0 || static_cast<std::size_t>(tok) >= lp.size())
            throw ShapeError("token id outside the scorer vocabulary");
        sum += lp[static_cast<std::size_t>(tok)];
        prefix.push_back(tok);
    }
    return sum / static_cast<double>(generated.size());
}

GenerateResult generate(const DomeBundle& bundle, const std::string& code,
                        IntentCategory intent, std::size_t beam_override,
                        AttentionTrace* trace) {
    if (intent == IntentCategory::Others)
        throw InvalidIntent("cannot generate for the Others intent");
    if (!bundle.model) throw StateError("bundle has no model");

    const ModelConfig& cfg = bundle.cfg;
    PreprocessedCode pre = preprocess_code(code, bundle.code_vocab,
                                           cfg.max_statements,
                                           cfg.max_statement_len);

    NoGradGuard guard;
    ForwardContext ctx;
    EncodedCode enc = bundle.model->encode_code(pre, ctx);

    Exemplar exemplar;
    bool have_exemplar = true;
    try {
        if (bundle.index.kind == ScorerKind::Dense) {
            if (!bundle.biencoder)
                throw StateError("dense retrieval requires the paired encoder");
            std::vector<int> query_ids = bundle.code_vocab.encode(tokenize(code));
            std::vector<double> query = bundle.biencoder->embed_code_vec(query_ids);
            exemplar = retrieve(query, intent, bundle.index);
        } else {
            exemplar = lexical_retrieve(tokenize(code), intent, bundle.index);
        }
    } catch (const NoExemplar&) {
        have_exemplar = false;
    }

    std::vector<int> exemplar_ids;
    if (have_exemplar)
        exemplar_ids = bundle.comment_vocab.encode(tokenize(exemplar.comment));
    Tensor z = bundle.model->encode_exemplar(exemplar_ids, ctx);

    std::size_t beam = beam_override ? beam_override : cfg.beam_size;
    double beam_score = 0.0;
    std::vector<int> ids = bundle.model->beam_decode(enc, intent, z, beam,
                                                     &beam_score);

    std::vector<std::string> words = bundle.comment_vocab.decode(ids, true);
    std::string comment;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) comment += ' ';
        comment += words[i];
    }

    if (trace) {
        std::vector<int> input{SpecialTokens::kBos};
        input.insert(input.end(), ids.begin(), ids.end());
        Tensor intent_e = bundle.model->intent_embed(intent);
        bundle.model->decode_states(input, enc, intent_e, z, ctx, trace);
    }

    GenerateResult result;
    result.comment = comment;
    result.token_ids = ids;
    result.intent = intent;
    result.exemplar_id = have_exemplar ? exemplar.source_id : -1;
    result.exemplar_score = have_exemplar ? exemplar.score : 0.0;
    result.used_exemplar = have_exemplar;
    result.beam_score = beam_score;
    return result;
}

}  // namespace dome
