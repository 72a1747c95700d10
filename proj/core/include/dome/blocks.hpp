#pragma once

#include <string>
#include <vector>

#include "dome/ops.hpp"
#include "dome/params.hpp"

namespace dome {

/// Per-call context for stochastic layers: dropout fires only during
/// training and draws from the supplied stream.
struct ForwardContext {
    bool training = false;
    double dropout = 0.0;
    Rng* rng = nullptr;

    Tensor maybe_dropout(const Tensor& x) const {
        if (!training || dropout == 0.0 || rng == nullptr) return x;
        return dome::dropout(x, dropout, true, *rng);
    }
};

/// Affine map y = x W + b (bias optional).
struct Linear {
    Tensor w;
    Tensor b;

    Linear() = default;
    Linear(ParameterStore& store, const std::string& prefix, std::size_t in,
           std::size_t out, Rng& rng, bool bias = true);

    Tensor forward(const Tensor& x) const;
};

/// Layer normalization with learned gain (ones) and bias (zeros).
struct LayerNormLayer {
    Tensor gain;
    Tensor bias;

    LayerNormLayer() = default;
    LayerNormLayer(ParameterStore& store, const std::string& prefix, std::size_t d);

    Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

/// Scaled dot-product multi-head attention over 2-D sequences.  Queries may
/// be wider than d_model (e.g. intent-concatenated); the query projection
/// maps them down before head splitting.  Projections are bias-free.
struct MultiHeadAttention {
    std::size_t heads = 1;
    std::size_t d_model = 0;
    std::size_t d_head = 0;
    Tensor wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore& store, const std::string& prefix,
                       std::size_t d_query_in, std::size_t d_model_,
                       std::size_t heads_, Rng& rng);

    /// mask: empty, or Tq*Tk flags (nonzero = blocked) applied to every head.
    Tensor forward(const Tensor& queries, const Tensor& keys_values,
                   const std::vector<unsigned char>& mask = {}) const;
};

/// Upper-triangle (future positions) mask for causal self-attention over a
/// length-n sequence.
std::vector<unsigned char> causal_mask(std::size_t n);

/// Two-layer position-wise feed-forward network with ReLU.
struct FeedForward {
    Linear fc1, fc2;

    FeedForward() = default;
    FeedForward(ParameterStore& store, const std::string& prefix, std::size_t d,
                std::size_t hidden, Rng& rng);

    Tensor forward(const Tensor& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

/// Vanilla transformer encoder block: self-attention and feed-forward
/// sublayers, each wrapped in dropout + residual + layer norm.
struct EncoderBlock {
    MultiHeadAttention mha;
    FeedForward ffn;
    LayerNormLayer norm1, norm2;

    EncoderBlock() = default;
    EncoderBlock(ParameterStore& store, const std::string& prefix, std::size_t d,
                 std::size_t heads, std::size_t ffn_hidden, Rng& rng);

    Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
};

/// Token embedding (scaled by sqrt(d)) + sinusoidal positions + encoder
/// blocks.  Shared by the code/exemplar encoders, the bi-encoder sides, and
/// the classifier body.
struct TransformerEncoder {
    std::size_t d_model = 0;
    Tensor embedding;  // vocab x d
    std::vector<EncoderBlock> encoder_blocks;

    TransformerEncoder() = default;
    TransformerEncoder(ParameterStore& store, const std::string& prefix,
                       std::size_t vocab_size, std::size_t d, std::size_t heads,
                       std::size_t blocks, std::size_t ffn_hidden, Rng& rng);

    Tensor forward(const std::vector<int>& ids, const ForwardContext& ctx) const;
};

}  // namespace dome
