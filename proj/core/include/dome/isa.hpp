#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dome/blocks.hpp"
#include "dome/ops.hpp"

namespace dome {

/// Dimensions and sparsity knobs for intent-guided selective attention.
struct ISAConfig {
    std::size_t k_token = 10;
    std::size_t k_statement = 5;
    std::size_t heads = 8;
    std::size_t d_model = 512;
    std::size_t d_intent = 128;

    void validate() const;
    std::size_t d_head() const { return d_model / heads; }
    std::size_t d_query_in() const { return d_model + d_intent; }
};

/// Recorded attention for one (decoder block, head): statement attention,
/// per-statement token attention, and the combined token-level matrix.
struct HeadTrace {
    std::size_t block = 0;
    std::size_t head = 0;
    std::vector<std::vector<double>> a_s;                    // targets x L
    std::map<std::size_t, std::vector<std::vector<double>>> a_t;  // per statement
    std::vector<std::vector<double>> a;                      // targets x T
};

/// Full decoding trace: every block/head attention plus the per-position
/// gate values per block.
struct AttentionTrace {
    std::vector<HeadTrace> heads;
    std::vector<std::vector<double>> beta;  // [block][target position]
};

std::string trace_to_json(const AttentionTrace& trace);

/// Keeps the min(k, row_len) largest entries of each row and masks the rest
/// to kMaskedScore; ties at the cut are resolved toward lower column
/// indices.  Masked positions receive no gradient.
Tensor topk_mask(const Tensor& scores, std::size_t k);

/// Projection weights of one ISA layer.  Queries are intent-concatenated
/// decoder states (width d_model + d_intent); keys come from statement and
/// token representations; values from token representations only.
struct ISAParams {
    Tensor wq_s, wk_s;        // statement-level scores
    Tensor wq_t, wk_t, wv_t;  // token-level scores and values
    Tensor wo;                // output projection after head concat

    ISAParams() = default;
    ISAParams(ParameterStore& store, const std::string& prefix, const ISAConfig& cfg,
              Rng& rng);
};

/// Per-head statement attention A_s [targets x L]: scaled dot-product scores
/// of projected queries against projected statement representations, top
/// k_statement masking, row softmax.
std::vector<Tensor> statement_attention(const Tensor& q1, const Tensor& x_sta,
                                        const ISAConfig& cfg, const Tensor& wq_s,
                                        const Tensor& wk_s);

/// Per-head, per-statement token attention A_t^l [targets x |segment l|]:
/// token scores are computed once over all tokens, then each statement's
/// columns are top-k_token masked and softmax-normalized independently.
std::vector<std::vector<Tensor>> token_attention(const Tensor& q1,
                                                 const Tensor& x_tok,
                                                 const Segments& segments,
                                                 const ISAConfig& cfg,
                                                 const Tensor& wq_t,
                                                 const Tensor& wk_t);

/// Hierarchical combination A[j, t] = A_s[j, l] * A_t^l[j, t_local] for the
/// statement l containing token t, concatenated in source order.
Tensor combine_attention(const Tensor& a_s, const std::vector<Tensor>& a_t,
                         const Segments& segments);

/// Full ISA layer: per-head combined attention applied to token values,
/// heads concatenated, output projected.  When trace is non-null, per-head
/// attention matrices are appended with the given block index.
Tensor isa_forward(const Tensor& q1, const Tensor& x_tok, const Tensor& x_sta,
                   const Segments& segments, const ISAConfig& cfg,
                   const ISAParams& params, std::size_t block_index = 0,
                   AttentionTrace* trace = nullptr);

}  // namespace dome
