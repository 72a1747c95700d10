#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dome/blocks.hpp"
#include "dome/corpus.hpp"

namespace dome {

/// Intent classifier dimensions and training knobs.
struct ClassifierConfig {
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t ffn_mult = 4;
    std::size_t mlp_hidden = 128;
    std::size_t max_seq_len = 128;
    double dropout = 0.1;
    double lr = 1e-3;
    std::size_t batch_size = 16;
    std::size_t epochs = 20;

    void validate() const;
};

struct ClassifyResult {
    IntentCategory intent = IntentCategory::Others;
    std::array<double, kIntentCount> probs{};
};

/// Joint classifier input: [CLS] comment [SEP] code [SEP].  When the pair
/// exceeds max_seq_len, code tokens are dropped first, then comment tokens;
/// the markers always survive.
std::vector<int> build_classifier_input(const std::vector<std::string>& comment_tokens,
                                        const std::vector<std::string>& code_tokens,
                                        const Vocabulary& vocab,
                                        std::size_t max_seq_len);

/// Single vocabulary over code and comment tokens of the whole corpus, since
/// the classifier reads both sides in one sequence.
Vocabulary build_shared_vocab(const Corpus& corpus, std::size_t max_size);

/// Transformer encoder + two-layer MLP over the [CLS] state, producing one
/// score per intent category (all six, including Others).
class CoinModel {
public:
    CoinModel(const ClassifierConfig& cfg, std::size_t vocab_size,
              std::uint64_t init_seed);

    const ClassifierConfig& config() const { return cfg_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    std::size_t vocab_size() const { return vocab_size_; }

    /// Class scores [1 x 6] for a prepared input sequence.
    Tensor logits(const std::vector<int>& input_ids, const ForwardContext& ctx) const;

    /// Tokenizes, assembles the joint input, and picks the argmax class
    /// (ties to the lowest class index).
    ClassifyResult classify(const std::string& comment, const std::string& code,
                            const Vocabulary& vocab) const;

private:
    ClassifierConfig cfg_;
    std::size_t vocab_size_ = 0;
    ParameterStore params_;
    TransformerEncoder encoder_;
    Linear fc1_;
    Linear fc2_;
};

/// Minibatch cross-entropy training over all six intent labels; returns the
/// mean per-record loss of each epoch.  Parameters and optimizer state are
/// rounded to float32 at every epoch boundary.
std::vector<double> train_classifier(CoinModel& model, const Corpus& records,
                                     const Vocabulary& vocab, std::uint64_t seed);

/// Shuffled indices cut into k folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                  std::uint64_t seed);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvaluationReport {
    // confusion[true][predicted]
    std::array<std::array<std::size_t, kIntentCount>, kIntentCount> confusion{};
    std::array<ClassMetrics, kIntentCount> per_class{};
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

/// Confusion matrix and per-class precision/recall/F1 on held-out records;
/// zero denominators score 0, macro values are unweighted class means.
EvaluationReport evaluate_classifier(const CoinModel& model, const Corpus& test,
                                     const Vocabulary& vocab);

std::string evaluation_to_json(const EvaluationReport& report);

/// Replaces every record's intent with the classifier's prediction.
Corpus auto_label(const CoinModel& model, const Vocabulary& vocab, Corpus corpus);

}  // namespace dome
