#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dome/trainer.hpp"

using namespace dome;

namespace {

/// Self-removing file path for checkpoint and config fixtures.
struct TmpPath {
    std::string path;
    explicit TmpPath(const std::string& name) : path("trainer_test_" + name) {}
    ~TmpPath() { std::remove(path.c_str()); }
    TmpPath(const TmpPath&) = delete;
    TmpPath& operator=(const TmpPath&) = delete;
};

std::string read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(static_cast<bool>(is));
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    REQUIRE(static_cast<bool>(os));
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.d_intent = 4;
    cfg.heads = 2;
    cfg.blocks = 1;
    cfg.ffn_mult = 2;
    cfg.dropout = 0.1;
    cfg.k_token = 2;
    cfg.k_statement = 2;
    cfg.max_comment_len = 6;
    cfg.max_code_tokens = 64;
    cfg.code_vocab_size = 100;
    cfg.comment_vocab_size = 100;
    cfg.beam_size = 2;
    cfg.max_statements = 8;
    cfg.max_statement_len = 8;
    return cfg;
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.model = tiny_model_config();
    cfg.scorer = ScorerKind::Lexical;
    cfg.lr = 1e-3;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.seed = 11;
    return cfg;
}

Corpus toy_corpus() {
    Corpus corpus;
    corpus.push_back({"int a;\nreturn a;", "returns the stored value",
                      IntentCategory::What, 0});
    corpus.push_back({"int b;\nb = a;", "copies the input", IntentCategory::What, 1});
    corpus.push_back({"return (a);", "avoids an extra lookup", IntentCategory::Why,
                      2});
    corpus.push_back({"{ a = b; }", "call after init", IntentCategory::HowToUse, 3});
    corpus.push_back({"b = a;", "walks the buffer once",
                      IntentCategory::HowItIsDone, 4});
    corpus.push_back({"return b;", "always non negative", IntentCategory::Property,
                      5});
    return corpus;
}

Corpus coin_corpus() {
    Corpus corpus = toy_corpus();
    corpus.push_back({"x = 1;", "unclear note", IntentCategory::Others, 6});
    return corpus;
}

CoinTrainConfig tiny_coin_config() {
    CoinTrainConfig cfg;
    cfg.classifier.d_model = 16;
    cfg.classifier.heads = 2;
    cfg.classifier.blocks = 1;
    cfg.classifier.ffn_mult = 2;
    cfg.classifier.mlp_hidden = 16;
    cfg.classifier.max_seq_len = 24;
    cfg.classifier.dropout = 0.0;
    cfg.classifier.lr = 1e-3;
    cfg.classifier.batch_size = 8;
    cfg.classifier.epochs = 3;
    cfg.seed = 13;
    cfg.vocab_size = 200;
    return cfg;
}

std::vector<PreparedRecord> prepared_toy(const TrainConfig& cfg,
                                         Vocabulary& code_vocab,
                                         Vocabulary& comment_vocab) {
    Corpus corpus = toy_corpus();
    code_vocab = build_vocab(corpus, VocabSide::Code, cfg.model.code_vocab_size);
    comment_vocab =
        build_vocab(corpus, VocabSide::Comment, cfg.model.comment_vocab_size);
    std::vector<PreparedRecord> prepared;
    for (const CodeCommentRecord& rec : corpus)
        prepared.push_back(prepare_record(rec, code_vocab, comment_vocab, cfg.model));
    return prepared;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("train config JSON defaults, round-trip, and strict keys") {
    TrainConfig defaults = TrainConfig::from_json("{}");
    CHECK(defaults.lr == 1e-4);
    CHECK(defaults.batch_size == 8);
    CHECK(defaults.epochs == 10);
    CHECK(defaults.clip_norm == 1.0);
    CHECK(defaults.seed == 17);
    CHECK(defaults.scorer == ScorerKind::Dense);
    CHECK(defaults.checkpoint_path.empty());

    TrainConfig cfg = tiny_train_config();
    cfg.checkpoint_path = "somewhere.bin";
    TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.scorer == ScorerKind::Lexical);
    CHECK(back.model.d_model == cfg.model.d_model);
    CHECK(back.biencoder.epochs == cfg.biencoder.epochs);

    CHECK_THROWS_AS(TrainConfig::from_json("{\"learning_rate\": 1}"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json("{\"model\": {\"bogus\": 1}}"),
                    ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json("{\"epochs\": -1}"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json("not json"), ParseError);
    CHECK_THROWS_AS(TrainConfig::from_json_file("no_such_config.json"), ParseError);

    TrainConfig bad = tiny_train_config();
    bad.clip_norm = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    CoinTrainConfig coin_defaults = CoinTrainConfig::from_json("{}");
    CHECK(coin_defaults.vocab_size == 20000);
    CHECK(coin_defaults.seed == 17);
    CHECK_THROWS_AS(CoinTrainConfig::from_json("{\"oops\": 2}"), ConfigError);
    CoinTrainConfig coin_back =
        CoinTrainConfig::from_json(tiny_coin_config().to_json());
    CHECK(coin_back.to_json() == tiny_coin_config().to_json());
}

TEST_CASE("prepare_record builds BOS input and EOS target") {
    TrainConfig cfg = tiny_train_config();
    Vocabulary code_vocab, comment_vocab;
    std::vector<PreparedRecord> prepared = prepared_toy(cfg, code_vocab,
                                                        comment_vocab);

    const PreparedRecord& rec = prepared[0];
    std::vector<int> words = comment_vocab.encode(tokenize("returns the stored value"));
    REQUIRE(rec.input_ids.size() == words.size() + 1);
    CHECK(rec.input_ids.front() == SpecialTokens::kBos);
    for (std::size_t i = 0; i < words.size(); ++i)
        CHECK(rec.input_ids[i + 1] == words[i]);
    CHECK(rec.target_ids.size() == rec.input_ids.size());
    CHECK(rec.target_ids.back() == SpecialTokens::kEos);
    for (std::size_t i = 0; i < words.size(); ++i)
        CHECK(rec.target_ids[i] == words[i]);
    CHECK(rec.intent == IntentCategory::What);
    CHECK(rec.id == 0);
    CHECK(!rec.code.token_ids.empty());

    // Comments longer than the budget are clipped to max_comment_len - 1
    // tokens so the EOS always fits.
    CodeCommentRecord wordy{"int a;", "one two three four five six seven eight",
                            IntentCategory::What, 9};
    PreparedRecord clipped = prepare_record(wordy, code_vocab, comment_vocab,
                                            cfg.model);
    CHECK(clipped.target_ids.size() == cfg.model.max_comment_len);
    CHECK(clipped.target_ids.back() == SpecialTokens::kEos);

    CodeCommentRecord others{"int a;", "note", IntentCategory::Others, 10};
    CHECK_THROWS_AS(prepare_record(others, code_vocab, comment_vocab, cfg.model),
                    InvalidIntent);
}

TEST_CASE("make_batches pads each batch to its own longest row") {
    TrainConfig cfg = tiny_train_config();
    Vocabulary code_vocab, comment_vocab;
    std::vector<PreparedRecord> prepared = prepared_toy(cfg, code_vocab,
                                                        comment_vocab);
    // Duplicate up to 10 records to exercise a ragged final batch.
    while (prepared.size() < 10) prepared.push_back(prepared[prepared.size() % 6]);

    std::vector<std::size_t> order(prepared.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Batch> batches = make_batches(prepared, order, 4);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].record_indices.size() == 4);
    CHECK(batches[1].record_indices.size() == 4);
    CHECK(batches[2].record_indices.size() == 2);

    for (const Batch& b : batches) {
        std::size_t longest = 0;
        for (std::size_t idx : b.record_indices)
            longest = std::max(longest, prepared[idx].input_ids.size());
        CHECK(b.max_len == longest);
        for (std::size_t i = 0; i < b.record_indices.size(); ++i) {
            const PreparedRecord& rec = prepared[b.record_indices[i]];
            CHECK(b.lengths[i] == rec.input_ids.size());
            REQUIRE(b.inputs[i].size() == b.max_len);
            REQUIRE(b.targets[i].size() == b.max_len);
            for (std::size_t t = 0; t < b.max_len; ++t) {
                const int expect_in =
                    t < rec.input_ids.size() ? rec.input_ids[t] : SpecialTokens::kPad;
                const int expect_tgt = t < rec.target_ids.size()
                                           ? rec.target_ids[t]
                                           : SpecialTokens::kPad;
                CHECK(b.inputs[i][t] == expect_in);
                CHECK(b.targets[i][t] == expect_tgt);
            }
        }
    }

    CHECK_THROWS_AS(make_batches(prepared, order, 0), ConfigError);
    CHECK_THROWS_AS(make_batches(prepared, {99}, 4), ShapeError);
}

TEST_CASE("teacher forcing ignores padding width entirely") {
    TrainConfig cfg = tiny_train_config();
    Vocabulary code_vocab, comment_vocab;
    std::vector<PreparedRecord> prepared = prepared_toy(cfg, code_vocab,
                                                        comment_vocab);
    DomeModel model(cfg.model, code_vocab.size(), comment_vocab.size(), 5);
    ForwardContext ctx;  // evaluation mode: deterministic

    std::vector<std::size_t> order = {0, 2};
    std::vector<Batch> batches = make_batches(prepared, order, 2);
    REQUIRE(batches.size() == 1);
    StepLoss tight = teacher_forcing_step(model, prepared, batches[0], ctx);

    Batch widened = batches[0];
    widened.max_len += 3;
    for (auto& row : widened.inputs) row.resize(widened.max_len, SpecialTokens::kPad);
    for (auto& row : widened.targets) row.resize(widened.max_len, SpecialTokens::kPad);
    StepLoss wide = teacher_forcing_step(model, prepared, widened, ctx);

    CHECK(wide.token_count == tight.token_count);
    CHECK(wide.loss_sum.at(0) == tight.loss_sum.at(0));

    std::size_t expected_tokens = prepared[0].target_ids.size() +
                                  prepared[2].target_ids.size();
    CHECK(tight.token_count == expected_tokens);
    CHECK(tight.loss_sum.at(0) > 0.0);

    CHECK_THROWS_AS(teacher_forcing_step(model, prepared, Batch{}, ctx), EmptyInput);
}

TEST_CASE("a zeroed output head scores every token at ln V") {
    TrainConfig cfg = tiny_train_config();
    Vocabulary code_vocab, comment_vocab;
    std::vector<PreparedRecord> prepared = prepared_toy(cfg, code_vocab,
                                                        comment_vocab);
    DomeModel model(cfg.model, code_vocab.size(), comment_vocab.size(), 5);
    for (const char* name : {"output.w", "output.b"}) {
        Tensor t = model.params().get(name);
        t.data().assign(t.size(), 0.0);
    }

    std::vector<std::size_t> order = {0, 1, 2, 3, 4, 5};
    std::vector<Batch> batches = make_batches(prepared, order, 6);
    ForwardContext ctx;
    StepLoss sl = teacher_forcing_step(model, prepared, batches[0], ctx);
    const double mean = sl.loss_sum.at(0) / static_cast<double>(sl.token_count);
    CHECK(mean ==
          doctest::Approx(std::log(static_cast<double>(comment_vocab.size())))
              .epsilon(1e-12));
}

TEST_CASE("identical seeds give identical loss histories") {
    Corpus corpus = toy_corpus();
    TrainConfig cfg = tiny_train_config();

    TrainResult a = train_dome(corpus, cfg);
    TrainResult b = train_dome(corpus, cfg);

    REQUIRE(a.loss_history.size() == cfg.epochs);
    CHECK(a.epochs_completed == cfg.epochs);
    CHECK(a.biencoder_history.empty());  // lexical scorer: no retrieval encoder
    for (double v : a.loss_history) CHECK(v > 0.0);
    for (std::size_t i = 0; i < a.loss_history.size(); ++i)
        CHECK(a.loss_history[i] == b.loss_history[i]);
    for (const std::string& name : a.bundle.model->params().names()) {
        const std::vector<double>& va = a.bundle.model->params().get(name).data();
        const std::vector<double>& vb = b.bundle.model->params().get(name).data();
        for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
    }

    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    TrainResult c = train_dome(corpus, other);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.loss_history.size(); ++i)
        if (a.loss_history[i] != c.loss_history[i]) any_diff = true;
    CHECK(any_diff);

    // Dense mode additionally trains and records the retrieval encoder.
    TrainConfig dense = cfg;
    dense.scorer = ScorerKind::Dense;
    dense.epochs = 1;
    dense.biencoder.d_model = 8;
    dense.biencoder.heads = 2;
    dense.biencoder.blocks = 1;
    dense.biencoder.epochs = 2;
    TrainResult d = train_dome(corpus, dense);
    CHECK(d.biencoder_history.size() == dense.biencoder.epochs);
    REQUIRE(d.bundle.biencoder != nullptr);
    CHECK(d.bundle.index.kind == ScorerKind::Dense);

    CHECK_THROWS_AS(train_dome(Corpus{}, cfg), EmptyInput);
    Corpus all_others;
    all_others.push_back({"x;", "note", IntentCategory::Others, 0});
    CHECK_THROWS_AS(train_dome(all_others, cfg), EmptyInput);
}

TEST_CASE("checkpoint round-trip preserves generation exactly") {
    TmpPath ckpt("dome_roundtrip.bin");
    Corpus corpus = toy_corpus();
    TrainConfig cfg = tiny_train_config();
    cfg.checkpoint_path = ckpt.path;

    TrainResult trained = train_dome(corpus, cfg);
    LoadedDome loaded = load_dome_checkpoint(ckpt.path);

    CHECK(loaded.epochs_completed == cfg.epochs);
    REQUIRE(loaded.loss_history.size() == trained.loss_history.size());
    for (std::size_t i = 0; i < trained.loss_history.size(); ++i)
        CHECK(loaded.loss_history[i] == trained.loss_history[i]);
    CHECK(loaded.has_adam);
    CHECK(loaded.train_cfg.seed == cfg.seed);
    CHECK(loaded.train_cfg.epochs == cfg.epochs);

    // Training quantized everything to float32 at the epoch boundary, so the
    // float32 file storage is lossless and parameters match bit for bit.
    for (const std::string& name : trained.bundle.model->params().names()) {
        const std::vector<double>& vt =
            trained.bundle.model->params().get(name).data();
        const std::vector<double>& vl =
            loaded.bundle.model->params().get(name).data();
        REQUIRE(vt.size() == vl.size());
        for (std::size_t i = 0; i < vt.size(); ++i) CHECK(vt[i] == vl[i]);
    }

    for (IntentCategory intent :
         {IntentCategory::What, IntentCategory::Why, IntentCategory::Property}) {
        GenerateResult before = generate(trained.bundle, "int a;\nreturn a;", intent);
        GenerateResult after = generate(loaded.bundle, "int a;\nreturn a;", intent);
        CHECK(before.token_ids == after.token_ids);
        CHECK(before.comment == after.comment);
        CHECK(before.beam_score == after.beam_score);
        CHECK(before.exemplar_id == after.exemplar_id);
    }
}

TEST_CASE("save-load-save is byte-stable") {
    TmpPath first("dome_bytes_a.bin");
    TmpPath second("dome_bytes_b.bin");
    Corpus corpus = toy_corpus();
    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 2;
    cfg.checkpoint_path = first.path;
    train_dome(corpus, cfg);

    LoadedDome loaded = load_dome_checkpoint(first.path);
    save_dome_checkpoint(second.path, loaded.bundle, loaded.train_cfg,
                         loaded.epochs_completed, loaded.loss_history,
                         loaded.biencoder_history,
                         loaded.has_adam ? &loaded.adam : nullptr);
    CHECK(read_bytes(first.path) == read_bytes(second.path));
}

TEST_CASE("resuming a checkpoint matches the uninterrupted run bit for bit") {
    TmpPath full("dome_full.bin");
    TmpPath half("dome_half.bin");
    Corpus corpus = toy_corpus();

    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 3;
    cfg.checkpoint_path = full.path;
    TrainResult straight = train_dome(corpus, cfg);

    TrainConfig short_cfg = cfg;
    short_cfg.epochs = 1;
    short_cfg.checkpoint_path = half.path;
    train_dome(corpus, short_cfg);
    TrainResult resumed = resume_dome(half.path, corpus, 3);

    CHECK(resumed.epochs_completed == 3);
    REQUIRE(resumed.loss_history.size() == straight.loss_history.size());
    for (std::size_t i = 0; i < straight.loss_history.size(); ++i)
        CHECK(resumed.loss_history[i] == straight.loss_history[i]);
    for (const std::string& name : straight.bundle.model->params().names()) {
        const std::vector<double>& vs =
            straight.bundle.model->params().get(name).data();
        const std::vector<double>& vr =
            resumed.bundle.model->params().get(name).data();
        for (std::size_t i = 0; i < vs.size(); ++i) CHECK(vs[i] == vr[i]);
    }
    GenerateResult gs = generate(straight.bundle, "return b;", IntentCategory::Why);
    GenerateResult gr = generate(resumed.bundle, "return b;", IntentCategory::Why);
    CHECK(gs.token_ids == gr.token_ids);
    CHECK(gs.comment == gr.comment);

    // Asking for fewer epochs than already completed is a configuration
    // error; asking for exactly the completed count is a no-op.
    CHECK_THROWS_AS(resume_dome(full.path, corpus, 1), ConfigError);
    TrainResult noop = resume_dome(full.path, corpus, 3);
    CHECK(noop.epochs_completed == 3);
    REQUIRE(noop.loss_history.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(noop.loss_history[i] == straight.loss_history[i]);
}

TEST_CASE("corrupted checkpoints are rejected") {
    TmpPath coin_ckpt("coin_corrupt.bin");
    TmpPath dome_ckpt("dome_corrupt.bin");
    TmpPath mangled("mangled.bin");

    Corpus corpus = coin_corpus();
    CoinTrainConfig coin_cfg = tiny_coin_config();
    coin_cfg.checkpoint_path = coin_ckpt.path;
    train_coin(corpus, coin_cfg);

    TrainConfig dome_cfg = tiny_train_config();
    dome_cfg.epochs = 1;
    dome_cfg.checkpoint_path = dome_ckpt.path;
    train_dome(toy_corpus(), dome_cfg);

    const std::string good = read_bytes(coin_ckpt.path);

    // Kind mismatch in both directions.
    CHECK_THROWS_AS(load_dome_checkpoint(coin_ckpt.path), CorruptCheckpoint);
    CHECK_THROWS_AS(load_coin_checkpoint(dome_ckpt.path), CorruptCheckpoint);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    write_bytes(mangled.path, bad_magic);
    CHECK_THROWS_AS(load_coin_checkpoint(mangled.path), CorruptCheckpoint);

    const std::string version_key = "\"format_version\":1";
    std::string bad_version = good;
    const std::size_t at = bad_version.find(version_key);
    REQUIRE(at != std::string::npos);
    bad_version[at + version_key.size() - 1] = '7';
    write_bytes(mangled.path, bad_version);
    CHECK_THROWS_AS(load_coin_checkpoint(mangled.path), CorruptCheckpoint);

    write_bytes(mangled.path, good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_coin_checkpoint(mangled.path), CorruptCheckpoint);

    write_bytes(mangled.path, good + "junk");
    CHECK_THROWS_AS(load_coin_checkpoint(mangled.path), CorruptCheckpoint);

    // A missing file is unreadable data, not a corrupt payload.
    CHECK_THROWS_AS(load_coin_checkpoint("no_such_checkpoint.bin"), ParseError);
}

TEST_CASE("classifier checkpoint round-trip preserves every prediction") {
    TmpPath ckpt("coin_roundtrip.bin");
    Corpus corpus = coin_corpus();
    CoinTrainConfig cfg = tiny_coin_config();
    cfg.checkpoint_path = ckpt.path;

    CoinTrainResult trained = train_coin(corpus, cfg);
    REQUIRE(trained.loss_history.size() == cfg.classifier.epochs);

    LoadedCoin loaded = load_coin_checkpoint(ckpt.path);
    CHECK(loaded.seed == cfg.seed);
    CHECK(loaded.epochs_completed == cfg.classifier.epochs);
    REQUIRE(loaded.loss_history.size() == trained.loss_history.size());
    for (std::size_t i = 0; i < trained.loss_history.size(); ++i)
        CHECK(loaded.loss_history[i] == trained.loss_history[i]);
    CHECK(loaded.vocab.size() == trained.vocab.size());
    // Classifier checkpoints carry no optimizer state; only the generator
    // supports exact resumption.
    CHECK(!loaded.has_adam);

    for (const CodeCommentRecord& rec : corpus) {
        ClassifyResult before = trained.model->classify(rec.comment, rec.code,
                                                        trained.vocab);
        ClassifyResult after = loaded.model->classify(rec.comment, rec.code,
                                                      loaded.vocab);
        CHECK(before.intent == after.intent);
        for (std::size_t c = 0; c < kIntentCount; ++c)
            CHECK(before.probs[c] == after.probs[c]);
    }
}

}  // TEST_SUITE
