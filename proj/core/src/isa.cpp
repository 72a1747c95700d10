#include "dome/isa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace dome {

void ISAConfig::validate() const {
    if (k_token < 1 || k_statement < 1)
        throw ConfigError("ISA top-k values must be at least 1");
    if (heads < 1) throw ConfigError("ISA needs at least one head");
    if (d_model == 0 || d_model % heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) +
                          " not divisible by " + std::to_string(heads) + " heads");
}

Tensor topk_mask(const Tensor& scores, std::size_t k) {
    if (scores.ndim() != 2) throw ShapeError("topk_mask: expected a 2-D tensor");
    if (k < 1) throw ConfigError("topk_mask: k must be at least 1");
    const std::size_t r = scores.rows(), c = scores.cols();
    std::vector<unsigned char> masked(r * c, 0);
    if (k < c) {
        std::vector<std::size_t> idx(c);
        for (std::size_t i = 0; i < r; ++i) {
            std::iota(idx.begin(), idx.end(), 0);
            const double* row = scores.data().data() + i * c;
            // Sorting by (value desc, column asc) keeps the lowest-index
            // entries on ties at the k-th value.
            std::sort(idx.begin(), idx.end(), [row](std::size_t a, std::size_t b) {
                if (row[a] != row[b]) return row[a] > row[b];
                return a < b;
            });
            for (std::size_t j = k; j < c; ++j) masked[i * c + idx[j]] = 1;
        }
    }
    return masked_fill(scores, masked, kMaskedScore);
}

namespace {

void validate_segments(const Segments& segments, std::size_t total,
                       const char* what) {
    if (segments.empty())
        throw ShapeError(std::string(what) + ": no statement segments");
    std::size_t expect = 0;
    for (const Segment& s : segments) {
        if (s.begin != expect || s.end <= s.begin)
            throw ShapeError(std::string(what) +
                             ": segments must partition the token range "
                             "without empty segments");
        expect = s.end;
    }
    if (expect != total)
        throw ShapeError(std::string(what) + ": segments cover " +
                         std::to_string(expect) + " tokens, expected " +
                         std::to_string(total));
}

/// Scaled per-head attention scores of projected queries against projected
/// keys: one [targets x source_len] matrix per head.
std::vector<Tensor> head_scores(const Tensor& q1, const Tensor& source,
                                const ISAConfig& cfg, const Tensor& wq,
                                const Tensor& wk) {
    const Tensor q = matmul(q1, wq);
    const Tensor k = matmul(source, wk);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.d_head()));
    std::vector<Tensor> scores;
    scores.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::size_t c0 = h * cfg.d_head(), c1 = (h + 1) * cfg.d_head();
        scores.push_back(scale(
            matmul(slice_cols(q, c0, c1), transpose(slice_cols(k, c0, c1))),
            inv_sqrt));
    }
    return scores;
}

std::vector<std::vector<double>> to_rows(const Tensor& t) {
    std::vector<std::vector<double>> rows(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i)
        rows[i].assign(t.data().begin() + i * t.cols(),
                       t.data().begin() + (i + 1) * t.cols());
    return rows;
}

}  // namespace

ISAParams::ISAParams(ParameterStore& store, const std::string& prefix,
                     const ISAConfig& cfg, Rng& rng) {
    auto make = [&](const char* name, std::size_t in, std::size_t out) {
        Tensor t = store.create(prefix + "." + name, {in, out});
        Rng stream = rng.child(prefix + "." + name);
        init_xavier_uniform(t, stream);
        return t;
    };
    wq_s = make("wq_s", cfg.d_query_in(), cfg.d_model);
    wk_s = make("wk_s", cfg.d_model, cfg.d_model);
    wq_t = make("wq_t", cfg.d_query_in(), cfg.d_model);
    wk_t = make("wk_t", cfg.d_model, cfg.d_model);
    wv_t = make("wv_t", cfg.d_model, cfg.d_model);
    wo = make("wo", cfg.d_model, cfg.d_model);
}

std::vector<Tensor> statement_attention(const Tensor& q1, const Tensor& x_sta,
                                        const ISAConfig& cfg, const Tensor& wq_s,
                                        const Tensor& wk_s) {
    cfg.validate();
    if (x_sta.ndim() != 2 || x_sta.rows() < 1)
        throw ShapeError("statement_attention: statement matrix must be non-empty");
    std::vector<Tensor> attn = head_scores(q1, x_sta, cfg, wq_s, wk_s);
    for (Tensor& scores : attn)
        scores = softmax(topk_mask(scores, cfg.k_statement), 1);
    return attn;
}

std::vector<std::vector<Tensor>> token_attention(const Tensor& q1,
                                                 const Tensor& x_tok,
                                                 const Segments& segments,
                                                 const ISAConfig& cfg,
                                                 const Tensor& wq_t,
                                                 const Tensor& wk_t) {
    cfg.validate();
    validate_segments(segments, x_tok.rows(), "token_attention");
    const std::vector<Tensor> scores = head_scores(q1, x_tok, cfg, wq_t, wk_t);
    std::vector<std::vector<Tensor>> attn(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        attn[h].reserve(segments.size());
        for (const Segment& seg : segments) {
            const Tensor part = slice_cols(scores[h], seg.begin, seg.end);
            attn[h].push_back(softmax(topk_mask(part, cfg.k_token), 1));
        }
    }
    return attn;
}

Tensor combine_attention(const Tensor& a_s, const std::vector<Tensor>& a_t,
                         const Segments& segments) {
    if (a_t.size() != segments.size() || a_s.cols() != segments.size())
        throw ShapeError("combine_attention: one token matrix per statement required");
    Tensor combined;
    for (std::size_t l = 0; l < segments.size(); ++l) {
        if (a_t[l].rows() != a_s.rows() || a_t[l].cols() != segments[l].length())
            throw ShapeError("combine_attention: token attention shape mismatch");
        const Tensor weighted = row_scale(a_t[l], slice_cols(a_s, l, l + 1));
        combined = l == 0 ? weighted : concat_cols(combined, weighted);
    }
    return combined;
}

Tensor isa_forward(const Tensor& q1, const Tensor& x_tok, const Tensor& x_sta,
                   const Segments& segments, const ISAConfig& cfg,
                   const ISAParams& params, std::size_t block_index,
                   AttentionTrace* trace) {
    cfg.validate();
    validate_segments(segments, x_tok.rows(), "isa_forward");
    if (x_sta.rows() != segments.size())
        throw ShapeError("isa_forward: one statement row per segment required");

    const std::vector<Tensor> a_s =
        statement_attention(q1, x_sta, cfg, params.wq_s, params.wk_s);
    const std::vector<std::vector<Tensor>> a_t =
        token_attention(q1, x_tok, segments, cfg, params.wq_t, params.wk_t);
    const Tensor values = matmul(x_tok, params.wv_t);

    Tensor heads_out;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const Tensor combined = combine_attention(a_s[h], a_t[h], segments);
        const Tensor vh =
            slice_cols(values, h * cfg.d_head(), (h + 1) * cfg.d_head());
        const Tensor out = matmul(combined, vh);
        heads_out = h == 0 ? out : concat_cols(heads_out, out);
        if (trace != nullptr) {
            HeadTrace ht;
            ht.block = block_index;
            ht.head = h;
            ht.a_s = to_rows(a_s[h]);
            for (std::size_t l = 0; l < segments.size(); ++l)
                ht.a_t[l] = to_rows(a_t[h][l]);
            ht.a = to_rows(combined);
            trace->heads.push_back(std::move(ht));
        }
    }
    return matmul(heads_out, params.wo);
}

std::string trace_to_json(const AttentionTrace& trace) {
    nlohmann::ordered_json heads = nlohmann::ordered_json::array();
    for (const HeadTrace& h : trace.heads) {
        nlohmann::ordered_json obj;
        obj["block"] = h.block;
        obj["head"] = h.head;
        obj["step"] = h.a.empty() ? 0 : h.a.size() - 1;
        obj["A_s"] = h.a_s;
        nlohmann::ordered_json at;
        for (const auto& [stmt, rows] : h.a_t) at[std::to_string(stmt)] = rows;
        obj["A_t"] = at;
        obj["A"] = h.a;
        heads.push_back(std::move(obj));
    }
    nlohmann::ordered_json out;
    out["heads"] = heads;
    out["beta"] = trace.beta;
    return out.dump(2);
}

}  // namespace dome
