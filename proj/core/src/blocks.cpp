#include "dome/blocks.hpp"

#include <cmath>

namespace dome {

Linear::Linear(ParameterStore& store, const std::string& prefix, std::size_t in,
               std::size_t out, Rng& rng, bool bias) {
    w = store.create(prefix + ".w", {in, out});
    Rng stream = rng.child(prefix + ".w");
    init_xavier_uniform(w, stream);
    if (bias) b = store.create(prefix + ".b", {out});
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, w);
    if (b.defined()) y = add_rowvec(y, b);
    return y;
}

LayerNormLayer::LayerNormLayer(ParameterStore& store, const std::string& prefix,
                               std::size_t d) {
    gain = store.create(prefix + ".gain", {d});
    for (double& g : gain.data()) g = 1.0;
    bias = store.create(prefix + ".bias", {d});
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store,
                                       const std::string& prefix,
                                       std::size_t d_query_in, std::size_t d_model_,
                                       std::size_t heads_, Rng& rng)
    : heads(heads_), d_model(d_model_) {
    if (d_model % heads != 0)
        throw ConfigError("attention width " + std::to_string(d_model) +
                          " not divisible by " + std::to_string(heads) + " heads");
    d_head = d_model / heads;
    auto make = [&](const char* name, std::size_t in, std::size_t out) {
        Tensor t = store.create(prefix + "." + name, {in, out});
        Rng stream = rng.child(prefix + "." + name);
        init_xavier_uniform(t, stream);
        return t;
    };
    wq = make("wq", d_query_in, d_model);
    wk = make("wk", d_model, d_model);
    wv = make("wv", d_model, d_model);
    wo = make("wo", d_model, d_model);
}

Tensor MultiHeadAttention::forward(const Tensor& queries, const Tensor& keys_values,
                                   const std::vector<unsigned char>& mask) const {
    const std::size_t tq = queries.rows(), tk = keys_values.rows();
    if (!mask.empty() && mask.size() != tq * tk)
        throw ShapeError("attention mask size mismatch");
    const Tensor q = matmul(queries, wq);
    const Tensor k = matmul(keys_values, wk);
    const Tensor v = matmul(keys_values, wv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));

    Tensor heads_out;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * d_head, c1 = (h + 1) * d_head;
        const Tensor qh = slice_cols(q, c0, c1);
        const Tensor kh = slice_cols(k, c0, c1);
        const Tensor vh = slice_cols(v, c0, c1);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (!mask.empty()) scores = masked_fill(scores, mask, kMaskedScore);
        const Tensor attn = softmax(scores, 1);
        const Tensor out = matmul(attn, vh);
        heads_out = h == 0 ? out : concat_cols(heads_out, out);
    }
    return matmul(heads_out, wo);
}

std::vector<unsigned char> causal_mask(std::size_t n) {
    std::vector<unsigned char> mask(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) mask[i * n + j] = 1;
    return mask;
}

FeedForward::FeedForward(ParameterStore& store, const std::string& prefix,
                         std::size_t d, std::size_t hidden, Rng& rng)
    : fc1(store, prefix + ".fc1", d, hidden, rng),
      fc2(store, prefix + ".fc2", hidden, d, rng) {}

EncoderBlock::EncoderBlock(ParameterStore& store, const std::string& prefix,
                           std::size_t d, std::size_t heads, std::size_t ffn_hidden,
                           Rng& rng)
    : mha(store, prefix + ".mha", d, d, heads, rng),
      ffn(store, prefix + ".ffn", d, ffn_hidden, rng),
      norm1(store, prefix + ".norm1", d),
      norm2(store, prefix + ".norm2", d) {}

Tensor EncoderBlock::forward(const Tensor& x, const ForwardContext& ctx) const {
    const Tensor attended = ctx.maybe_dropout(mha.forward(x, x));
    const Tensor h1 = norm1.forward(add(x, attended));
    const Tensor transformed = ctx.maybe_dropout(ffn.forward(h1));
    return norm2.forward(add(h1, transformed));
}

TransformerEncoder::TransformerEncoder(ParameterStore& store,
                                       const std::string& prefix,
                                       std::size_t vocab_size, std::size_t d,
                                       std::size_t heads, std::size_t blocks,
                                       std::size_t ffn_hidden, Rng& rng)
    : d_model(d) {
    embedding = store.create(prefix + ".embedding", {vocab_size, d});
    Rng stream = rng.child(prefix + ".embedding");
    init_normal(embedding, stream, 0.02);
    for (std::size_t i = 0; i < blocks; ++i)
        encoder_blocks.emplace_back(store, prefix + ".block" + std::to_string(i), d,
                                    heads, ffn_hidden, rng);
}

Tensor TransformerEncoder::forward(const std::vector<int>& ids,
                                   const ForwardContext& ctx) const {
    Tensor x = scale(embedding_lookup(embedding, ids),
                     std::sqrt(static_cast<double>(d_model)));
    x = add(x, sinusoidal_pe(ids.size(), d_model));
    x = ctx.maybe_dropout(x);
    for (const EncoderBlock& block : encoder_blocks) x = block.forward(x, ctx);
    return x;
}

}  // namespace dome
