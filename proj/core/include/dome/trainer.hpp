#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dome/coin.hpp"
#include "dome/model.hpp"

namespace dome {

/// End-to-end training configuration; loadable from a strict-keyed JSON
/// file (unknown keys are rejected so typos fail loudly).
struct TrainConfig {
    ModelConfig model;
    BiEncoderConfig biencoder;
    ScorerKind scorer = ScorerKind::Dense;
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::size_t epochs = 10;
    double clip_norm = 1.0;
    std::uint64_t seed = 17;
    std::string checkpoint_path;  // empty: no checkpoint written

    void validate() const;
    static TrainConfig from_json(const std::string& text);
    static TrainConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

/// One record made trainable: preprocessed code, BOS-prefixed decoder input,
/// EOS-terminated target, and the exemplar resolved once against the frozen
/// index (with the record itself excluded).
struct PreparedRecord {
    PreprocessedCode code;
    std::vector<int> input_ids;
    std::vector<int> target_ids;
    std::vector<int> exemplar_ids;
    IntentCategory intent = IntentCategory::What;
    std::int64_t id = -1;
};

PreparedRecord prepare_record(const CodeCommentRecord& record,
                              const Vocabulary& code_vocab,
                              const Vocabulary& comment_vocab,
                              const ModelConfig& cfg);

/// Resolves the training exemplar for every prepared record against the
/// index, excluding each record's own id.
void resolve_exemplars(std::vector<PreparedRecord>& records,
                       const RetrievalIndex& index, const Vocabulary& comment_vocab);

/// Fixed-width view of a slice of records: sequences padded with PAD to the
/// longest member, with the real lengths kept alongside.
struct Batch {
    std::vector<std::size_t> record_indices;
    std::vector<std::vector<int>> inputs;
    std::vector<std::vector<int>> targets;
    std::vector<std::size_t> lengths;
    std::size_t max_len = 0;
};

std::vector<Batch> make_batches(const std::vector<PreparedRecord>& records,
                                const std::vector<std::size_t>& order,
                                std::size_t batch_size);

/// Summed token cross-entropy over one batch with the graph attached.
/// Records are sliced back to their real lengths before decoding, so the
/// padding width never influences the value or the gradients.
struct StepLoss {
    Tensor loss_sum;
    std::size_t token_count = 0;
};

StepLoss teacher_forcing_step(const DomeModel& model,
                              const std::vector<PreparedRecord>& records,
                              const Batch& batch, const ForwardContext& ctx);

struct TrainResult {
    DomeBundle bundle;
    std::vector<double> loss_history;
    std::vector<double> biencoder_history;
    std::size_t epochs_completed = 0;
};

/// Full pipeline: drop Others, build vocabularies, train the retrieval
/// encoder (dense mode), freeze the index, resolve exemplars, then run the
/// teacher-forcing epochs.  Parameters and optimizer state are rounded to
/// float32 at every epoch boundary, and a checkpoint is written there when
/// configured.
TrainResult train_dome(const Corpus& corpus, const TrainConfig& cfg);

/// Continues a checkpointed run against the same corpus up to total_epochs;
/// the result is bit-identical to an uninterrupted run of that length.
TrainResult resume_dome(const std::string& checkpoint_path, const Corpus& corpus,
                        std::size_t total_epochs);

/// Classifier training configuration (strict-keyed JSON, like TrainConfig).
struct CoinTrainConfig {
    ClassifierConfig classifier;
    std::uint64_t seed = 17;
    std::size_t vocab_size = 20000;
    std::string checkpoint_path;

    void validate() const;
    static CoinTrainConfig from_json(const std::string& text);
    static CoinTrainConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

struct CoinTrainResult {
    std::unique_ptr<CoinModel> model;
    Vocabulary vocab;
    std::vector<double> loss_history;
};

/// Builds the shared vocabulary, initializes the classifier, and trains it;
/// writes a checkpoint at the end when configured.
CoinTrainResult train_coin(const Corpus& corpus, const CoinTrainConfig& cfg);

// --- Checkpoint persistence -------------------------------------------------
//
// Layout: 8-byte magic, little-endian u64 manifest length, JSON manifest,
// then float32 little-endian row-major blocks in manifest order.  The
// manifest embeds configs, vocabularies, the exemplar index, and training
// history, so a checkpoint alone restores generation and exact resumption.

inline constexpr char kCheckpointMagic[8] = {'D', 'O', 'M', 'E',
                                             'C', 'K', 'P', 'T'};

void save_dome_checkpoint(const std::string& path, const DomeBundle& bundle,
                          const TrainConfig& train_cfg,
                          std::size_t epochs_completed,
                          const std::vector<double>& loss_history,
                          const std::vector<double>& biencoder_history,
                          Adam* adam);

struct LoadedDome {
    DomeBundle bundle;
    TrainConfig train_cfg;
    std::size_t epochs_completed = 0;
    std::vector<double> loss_history;
    std::vector<double> biencoder_history;
    Adam adam;
    bool has_adam = false;
};

LoadedDome load_dome_checkpoint(const std::string& path);

void save_coin_checkpoint(const std::string& path, const CoinModel& model,
                          const Vocabulary& vocab, std::uint64_t seed,
                          std::size_t epochs_completed,
                          const std::vector<double>& loss_history, Adam* adam);

struct LoadedCoin {
    std::unique_ptr<CoinModel> model;
    Vocabulary vocab;
    std::uint64_t seed = 0;
    std::size_t epochs_completed = 0;
    std::vector<double> loss_history;
    Adam adam;
    bool has_adam = false;
};

LoadedCoin load_coin_checkpoint(const std::string& path);

}  // namespace dome
