#include "dome/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "config_json.hpp"
#include "dome/errors.hpp"
#include "dome/ops.hpp"

namespace dome {

using detail::ordered_json;

void TrainConfig::validate() const {
    model.validate();
    biencoder.validate();
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid training config JSON: ") + e.what());
    }
    const std::string where = "train config";
    detail::check_keys(j,
                       {"seed", "lr", "batch_size", "epochs", "clip_norm", "scorer",
                        "checkpoint_path", "model", "biencoder"},
                       where);
    TrainConfig cfg;
    detail::assign_u64(j, "seed", cfg.seed, where);
    detail::assign_double(j, "lr", cfg.lr, where);
    detail::assign_size(j, "batch_size", cfg.batch_size, where);
    detail::assign_size(j, "epochs", cfg.epochs, where);
    detail::assign_double(j, "clip_norm", cfg.clip_norm, where);
    detail::assign_string(j, "checkpoint_path", cfg.checkpoint_path, where);
    if (j.contains("scorer")) {
        std::string name;
        detail::assign_string(j, "scorer", name, where);
        cfg.scorer = parse_scorer_kind(name);
    }
    if (j.contains("model")) cfg.model = detail::model_config_from_json(j["model"]);
    if (j.contains("biencoder"))
        cfg.biencoder = detail::biencoder_config_from_json(j["biencoder"]);
    return cfg;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open config file " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_json(buf.str());
}

std::string TrainConfig::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["clip_norm"] = clip_norm;
    j["scorer"] = to_string(scorer);
    j["checkpoint_path"] = checkpoint_path;
    j["model"] = detail::model_config_to_json(model);
    j["biencoder"] = detail::biencoder_config_to_json(biencoder);
    return j.dump(2);
}

PreparedRecord prepare_record(const CodeCommentRecord& record,
                              const Vocabulary& code_vocab,
                              const Vocabulary& comment_vocab,
                              const ModelConfig& cfg) {
    if (record.intent == IntentCategory::Others)
        throw InvalidIntent("cannot prepare a record labeled Others");
    PreparedRecord out;
    out.code = preprocess_code(record.code, code_vocab, cfg.max_statements,
                               cfg.max_statement_len);
    std::vector<int> ids = comment_vocab.encode(tokenize(record.comment));
    if (ids.size() > cfg.max_comment_len - 1) ids.resize(cfg.max_comment_len - 1);
    out.input_ids.reserve(ids.size() + 1);
    out.input_ids.push_back(SpecialTokens::kBos);
    out.input_ids.insert(out.input_ids.end(), ids.begin(), ids.end());
    out.target_ids = ids;
    out.target_ids.push_back(SpecialTokens::kEos);
    out.intent = record.intent;
    out.id = record.id;
    return out;
}

void resolve_exemplars(std::vector<PreparedRecord>& records,
                       const RetrievalIndex& index,
                       const Vocabulary& comment_vocab) {
    for (PreparedRecord& rec : records) {
        const IndexedRecord* self = nullptr;
        for (const IndexedRecord& ir : index.partition(rec.intent)) {
            if (ir.id == rec.id) {
                self = &ir;
                break;
            }
        }
        if (!self)
            throw StateError("training record missing from the exemplar index");
        bool have = true;
        Exemplar ex;
        try {
            if (index.kind == ScorerKind::Dense)
                ex = retrieve(self->vec, rec.intent, index, rec.id);
            else
                ex = lexical_retrieve(self->code_tokens, rec.intent, index, rec.id);
        } catch (const NoExemplar&) {
            have = false;
        }
        if (have)
            rec.exemplar_ids = comment_vocab.encode(tokenize(ex.comment));
        else
            rec.exemplar_ids.clear();
    }
}

std::vector<Batch> make_batches(const std::vector<PreparedRecord>& records,
                                const std::vector<std::size_t>& order,
                                std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    for (std::size_t idx : order)
        if (idx >= records.size()) throw ShapeError("batch order index out of range");

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, order.size());
        Batch b;
        for (std::size_t i = start; i < end; ++i) {
            const PreparedRecord& rec = records[order[i]];
            if (rec.input_ids.size() != rec.target_ids.size())
                throw ShapeError("decoder input and target lengths disagree");
            b.record_indices.push_back(order[i]);
            b.max_len = std::max(b.max_len, rec.input_ids.size());
        }
        for (std::size_t idx : b.record_indices) {
            const PreparedRecord& rec = records[idx];
            std::vector<int> in = rec.input_ids;
            std::vector<int> tgt = rec.target_ids;
            in.resize(b.max_len, SpecialTokens::kPad);
            tgt.resize(b.max_len, SpecialTokens::kPad);
            b.inputs.push_back(std::move(in));
            b.targets.push_back(std::move(tgt));
            b.lengths.push_back(rec.input_ids.size());
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

StepLoss teacher_forcing_step(const DomeModel& model,
                              const std::vector<PreparedRecord>& records,
                              const Batch& batch, const ForwardContext& ctx) {
    const std::size_t n = batch.record_indices.size();
    if (n == 0) throw EmptyInput("cannot take a step on an empty batch");
    if (batch.inputs.size() != n || batch.targets.size() != n ||
        batch.lengths.size() != n)
        throw ShapeError("batch arrays are not parallel");

    StepLoss out;
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.record_indices[i] >= records.size())
            throw ShapeError("batch record index out of range");
        const PreparedRecord& rec = records[batch.record_indices[i]];
        const std::size_t len = batch.lengths[i];
        if (len == 0 || len > batch.inputs[i].size() ||
            batch.targets[i].size() != batch.inputs[i].size())
            throw ShapeError("batch row has an inconsistent length");

        std::vector<int> in(batch.inputs[i].begin(),
                            batch.inputs[i].begin() + static_cast<std::ptrdiff_t>(len));
        std::vector<int> tgt(batch.targets[i].begin(),
                             batch.targets[i].begin() + static_cast<std::ptrdiff_t>(len));

        EncodedCode enc = model.encode_code(rec.code, ctx);
        Tensor z = model.encode_exemplar(rec.exemplar_ids, ctx);
        Tensor e = model.intent_embed(rec.intent);
        Tensor states = model.decode_states(in, enc, e, z, ctx);
        Tensor logits = model.output_logits(states, e);
        RowwiseCrossEntropy ce = cross_entropy_rowwise(logits, tgt);
        out.loss_sum = (out.token_count == 0) ? ce.sum : add(out.loss_sum, ce.sum);
        out.token_count += ce.rows;
    }
    return out;
}

namespace {

/// Shared epoch loop for fresh and resumed runs.  Epoch RNG streams are
/// derived from the configured seed and the epoch number alone, so a resumed
/// run draws exactly the numbers an uninterrupted run would have drawn.
void run_epochs(const TrainConfig& cfg, const std::vector<PreparedRecord>& prepared,
                DomeModel& model, Adam& adam, std::size_t from_epoch,
                std::size_t to_epoch, std::vector<double>& history,
                const std::function<void()>& after_epoch) {
    Rng root(cfg.seed);
    std::vector<std::size_t> base_order(prepared.size());
    std::iota(base_order.begin(), base_order.end(), 0);

    for (std::size_t epoch = from_epoch; epoch < to_epoch; ++epoch) {
        Rng epoch_rng = root.child("epoch-" + std::to_string(epoch));
        Rng shuffle_rng = epoch_rng.child("shuffle");
        Rng dropout_rng = epoch_rng.child("dropout");

        std::vector<std::size_t> order = base_order;
        shuffle_rng.shuffle(order);
        std::vector<Batch> batches = make_batches(prepared, order, cfg.batch_size);

        ForwardContext ctx;
        ctx.training = true;
        ctx.dropout = cfg.model.dropout;
        ctx.rng = &dropout_rng;

        double ce_total = 0.0;
        std::size_t tok_total = 0;
        for (const Batch& b : batches) {
            model.params().zero_grad();
            StepLoss sl = teacher_forcing_step(model, prepared, b, ctx);
            ce_total += sl.loss_sum.at(0);
            tok_total += sl.token_count;
            Tensor loss =
                scale(sl.loss_sum, 1.0 / static_cast<double>(sl.token_count));
            loss.backward();
            clip_global_norm(model.params(), cfg.clip_norm);
            adam.step(model.params());
        }
        history.push_back(ce_total / static_cast<double>(tok_total));
        model.params().quantize_f32();
        adam.quantize_f32();
        if (after_epoch) after_epoch();
    }
}

std::vector<PreparedRecord> prepare_corpus(const Corpus& filtered,
                                           const Vocabulary& code_vocab,
                                           const Vocabulary& comment_vocab,
                                           const ModelConfig& cfg,
                                           const RetrievalIndex& index) {
    std::vector<PreparedRecord> prepared;
    prepared.reserve(filtered.size());
    for (const CodeCommentRecord& r : filtered)
        prepared.push_back(prepare_record(r, code_vocab, comment_vocab, cfg));
    resolve_exemplars(prepared, index, comment_vocab);
    return prepared;
}

}  // namespace

TrainResult train_dome(const Corpus& corpus, const TrainConfig& cfg) {
    cfg.validate();
    Corpus filtered = filter_others(corpus);
    if (filtered.empty())
        throw EmptyInput("no trainable records after dropping Others");

    TrainResult result;
    result.bundle.code_vocab =
        build_vocab(filtered, VocabSide::Code, cfg.model.code_vocab_size);
    result.bundle.comment_vocab =
        build_vocab(filtered, VocabSide::Comment, cfg.model.comment_vocab_size);
    result.bundle.cfg = cfg.model;
    result.bundle.cfg.code_vocab_size = result.bundle.code_vocab.size();
    result.bundle.cfg.comment_vocab_size = result.bundle.comment_vocab.size();

    Rng root(cfg.seed);

    std::vector<std::vector<int>> code_ids;
    code_ids.reserve(filtered.size());
    for (const CodeCommentRecord& r : filtered) {
        std::vector<int> ids = result.bundle.code_vocab.encode(tokenize(r.code));
        if (ids.empty()) ids.push_back(SpecialTokens::kUnk);
        code_ids.push_back(std::move(ids));
    }

    if (cfg.scorer == ScorerKind::Dense) {
        result.bundle.biencoder = std::make_unique<BiEncoder>(
            cfg.biencoder, result.bundle.code_vocab.size(),
            result.bundle.comment_vocab.size(), root.child("biencoder-init").seed());
        std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
        pairs.reserve(filtered.size());
        for (std::size_t i = 0; i < filtered.size(); ++i) {
            std::vector<int> cids =
                result.bundle.comment_vocab.encode(tokenize(filtered[i].comment));
            if (cids.empty()) cids.push_back(SpecialTokens::kUnk);
            pairs.emplace_back(code_ids[i], std::move(cids));
        }
        result.biencoder_history = train_biencoder(
            *result.bundle.biencoder, pairs, root.child("biencoder-train").seed());
    }

    result.bundle.index = build_index(filtered, code_ids,
                                      result.bundle.biencoder.get(), cfg.scorer);

    result.bundle.model = std::make_unique<DomeModel>(
        cfg.model, result.bundle.code_vocab.size(),
        result.bundle.comment_vocab.size(), root.child("model-init").seed());

    std::vector<PreparedRecord> prepared =
        prepare_corpus(filtered, result.bundle.code_vocab,
                       result.bundle.comment_vocab, result.bundle.cfg,
                       result.bundle.index);

    Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    auto after_epoch = [&]() {
        result.epochs_completed = result.loss_history.size();
        if (!cfg.checkpoint_path.empty())
            save_dome_checkpoint(cfg.checkpoint_path, result.bundle, cfg,
                                 result.epochs_completed, result.loss_history,
                                 result.biencoder_history, &adam);
    };
    run_epochs(cfg, prepared, *result.bundle.model, adam, 0, cfg.epochs,
               result.loss_history, after_epoch);
    result.epochs_completed = cfg.epochs;
    return result;
}

TrainResult resume_dome(const std::string& checkpoint_path, const Corpus& corpus,
                        std::size_t total_epochs) {
    LoadedDome loaded = load_dome_checkpoint(checkpoint_path);
    if (total_epochs < loaded.epochs_completed)
        throw ConfigError("checkpoint is already past the requested epoch count");

    Corpus filtered = filter_others(corpus);
    if (filtered.empty())
        throw EmptyInput("no trainable records after dropping Others");

    TrainConfig cfg = loaded.train_cfg;
    cfg.epochs = total_epochs;
    cfg.checkpoint_path = checkpoint_path;

    TrainResult result;
    result.bundle = std::move(loaded.bundle);
    result.loss_history = std::move(loaded.loss_history);
    result.biencoder_history = std::move(loaded.biencoder_history);

    std::vector<PreparedRecord> prepared =
        prepare_corpus(filtered, result.bundle.code_vocab,
                       result.bundle.comment_vocab, result.bundle.cfg,
                       result.bundle.index);

    Adam adam = loaded.has_adam ? std::move(loaded.adam)
                                : Adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    auto after_epoch = [&]() {
        result.epochs_completed = result.loss_history.size();
        save_dome_checkpoint(checkpoint_path, result.bundle, cfg,
                             result.epochs_completed, result.loss_history,
                             result.biencoder_history, &adam);
    };
    run_epochs(cfg, prepared, *result.bundle.model, adam, loaded.epochs_completed,
               total_epochs, result.loss_history, after_epoch);
    result.epochs_completed = total_epochs;
    return result;
}

void CoinTrainConfig::validate() const {
    classifier.validate();
    if (vocab_size <= SpecialTokens::kReservedCount)
        throw ConfigError("vocab_size must exceed the reserved tokens");
}

CoinTrainConfig CoinTrainConfig::from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid classifier config JSON: ") + e.what());
    }
    const std::string where = "classifier config";
    detail::check_keys(j, {"seed", "vocab_size", "checkpoint_path", "classifier"},
                       where);
    CoinTrainConfig cfg;
    detail::assign_u64(j, "seed", cfg.seed, where);
    detail::assign_size(j, "vocab_size", cfg.vocab_size, where);
    detail::assign_string(j, "checkpoint_path", cfg.checkpoint_path, where);
    if (j.contains("classifier"))
        cfg.classifier = detail::classifier_config_from_json(j["classifier"]);
    return cfg;
}

CoinTrainConfig CoinTrainConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open config file " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_json(buf.str());
}

std::string CoinTrainConfig::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["vocab_size"] = vocab_size;
    j["checkpoint_path"] = checkpoint_path;
    j["classifier"] = detail::classifier_config_to_json(classifier);
    return j.dump(2);
}

CoinTrainResult train_coin(const Corpus& corpus, const CoinTrainConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw EmptyInput("classifier training needs records");

    CoinTrainResult result;
    result.vocab = build_shared_vocab(corpus, cfg.vocab_size);
    Rng root(cfg.seed);
    result.model = std::make_unique<CoinModel>(cfg.classifier, result.vocab.size(),
                                               root.child("coin-init").seed());
    result.loss_history = train_classifier(*result.model, corpus, result.vocab,
                                           root.child("coin-train").seed());
    if (!cfg.checkpoint_path.empty())
        save_coin_checkpoint(cfg.checkpoint_path, *result.model, result.vocab,
                             cfg.seed, cfg.classifier.epochs, result.loss_history,
                             nullptr);
    return result;
}

}  // namespace dome
