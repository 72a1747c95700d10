// Microbenchmarks over the library's hot paths.  Each fixture is built once
// outside the timing loop and runs under NoGradGuard where training-graph
// bookkeeping would only add noise.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dome/corpus.hpp"
#include "dome/isa.hpp"
#include "dome/model.hpp"
#include "dome/ops.hpp"
#include "dome/retriever.hpp"
#include "dome/rng.hpp"
#include "dome/tensor.hpp"
#include "dome/trainer.hpp"

using namespace dome;

namespace {

Tensor rand_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from({rows, cols}, std::move(v));
}

void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = rand_tensor(n, n, rng);
    const Tensor b = rand_tensor(n, n, rng);
    NoGradGuard guard;
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_softmax_rows(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const Tensor x = rand_tensor(n, n, rng);
    NoGradGuard guard;
    for (auto _ : state) {
        Tensor y = softmax(x, 1);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_softmax_rows)->Arg(64)->Arg(256);

void BM_topk_mask(benchmark::State& state) {
    const auto cols = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    const Tensor x = rand_tensor(16, cols, rng);
    NoGradGuard guard;
    for (auto _ : state) {
        Tensor y = topk_mask(x, 10);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_topk_mask)->Arg(64)->Arg(512);

void BM_isa_forward(benchmark::State& state) {
    const ISAConfig cfg{10, 5, 4, 64, 16};
    ParameterStore store;
    Rng rng(4);
    const ISAParams params(store, "isa", cfg, rng);
    Segments segments;
    for (std::size_t l = 0; l < 6; ++l) segments.push_back({l * 8, (l + 1) * 8});
    const Tensor q1 = rand_tensor(8, cfg.d_query_in(), rng);
    const Tensor x_tok = rand_tensor(48, cfg.d_model, rng);
    const Tensor x_sta = rand_tensor(6, cfg.d_model, rng);
    NoGradGuard guard;
    for (auto _ : state) {
        Tensor y = isa_forward(q1, x_tok, x_sta, segments, cfg, params);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_isa_forward);

void BM_lexical_retrieve(benchmark::State& state) {
    const auto docs = static_cast<std::size_t>(state.range(0));
    static const std::vector<std::string> words = {
        "load", "store", "flag", "node", "list", "item", "key", "map",
        "sum",  "count", "byte", "word", "line", "file", "path"};
    Rng rng(5);
    Corpus corpus;
    for (std::size_t i = 0; i < docs; ++i) {
        std::string code;
        const std::size_t len = 4 + rng.uniform_int(8);
        for (std::size_t w = 0; w < len; ++w) {
            if (w) code += ' ';
            code += words[rng.uniform_int(words.size())];
        }
        corpus.push_back({code, "c" + std::to_string(i), IntentCategory::What,
                          static_cast<std::int64_t>(i)});
    }
    const Vocabulary vocab = build_vocab(corpus, VocabSide::Code, 500);
    std::vector<std::vector<int>> code_ids;
    for (const CodeCommentRecord& rec : corpus)
        code_ids.push_back(vocab.encode(tokenize(rec.code)));
    const RetrievalIndex index =
        build_index(corpus, code_ids, nullptr, ScorerKind::Lexical);
    const std::vector<std::string> query = {"load", "node", "key", "line", "sum"};
    for (auto _ : state) {
        Exemplar ex = lexical_retrieve(query, IntentCategory::What, index);
        benchmark::DoNotOptimize(ex.score);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(docs));
}
BENCHMARK(BM_lexical_retrieve)->Arg(100)->Arg(1000);

struct DecodeFixture {
    ModelConfig cfg;
    std::unique_ptr<DomeModel> model;
    EncodedCode enc;
    Tensor z;

    DecodeFixture() {
        cfg.d_model = 64;
        cfg.d_intent = 16;
        cfg.heads = 4;
        cfg.blocks = 2;
        cfg.ffn_mult = 2;
        cfg.dropout = 0.0;
        cfg.k_token = 4;
        cfg.k_statement = 2;
        cfg.max_comment_len = 16;
        cfg.max_code_tokens = 64;
        cfg.code_vocab_size = 64;
        cfg.comment_vocab_size = 64;
        cfg.beam_size = 5;
        cfg.max_statements = 6;
        cfg.max_statement_len = 10;
        model = std::make_unique<DomeModel>(cfg, 64, 64, 6);

        PreprocessedCode pre;
        Rng rng(7);
        for (std::size_t l = 0; l < 4; ++l) {
            const std::size_t begin = pre.token_ids.size();
            for (int t = 0; t < 7; ++t)
                pre.token_ids.push_back(static_cast<int>(
                    SpecialTokens::kReservedCount + rng.uniform_int(50)));
            pre.token_ids.push_back(SpecialTokens::kSep);
            pre.segments.push_back({begin, pre.token_ids.size()});
        }
        const ForwardContext ctx;
        enc = model->encode_code(pre, ctx);
        z = model->encode_exemplar({8, 9, 10, 11}, ctx);
    }
};

void BM_greedy_decode(benchmark::State& state) {
    const DecodeFixture fx;
    for (auto _ : state) {
        std::vector<int> ids =
            fx.model->greedy_decode(fx.enc, IntentCategory::What, fx.z);
        benchmark::DoNotOptimize(ids.data());
    }
}
BENCHMARK(BM_greedy_decode);

void BM_beam_decode(benchmark::State& state) {
    const DecodeFixture fx;
    for (auto _ : state) {
        std::vector<int> ids =
            fx.model->beam_decode(fx.enc, IntentCategory::What, fx.z, 5);
        benchmark::DoNotOptimize(ids.data());
    }
}
BENCHMARK(BM_beam_decode);

}  // namespace

BENCHMARK_MAIN();
