#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dome/errors.hpp"
#include "dome/segment.hpp"

namespace dome {

/// Malformed external data (corpus files, vocabulary files); carries enough
/// context (line numbers) for CLI error reporting.
struct ParseError : Error {
    using Error::Error;
};

/// The six comment-intent categories.  Others marks ambiguous/noisy comments
/// and is removable from training corpora.
enum class IntentCategory : int {
    What = 0,
    Why = 1,
    HowToUse = 2,
    HowItIsDone = 3,
    Property = 4,
    Others = 5,
};

inline constexpr std::size_t kIntentCount = 6;
/// All intents except Others can be requested at generation time.
inline constexpr std::size_t kGeneratableIntentCount = 5;

/// Canonical hyphenated lowercase label, e.g. "how-to-use".
const std::string& to_string(IntentCategory intent);

/// Case-insensitive parse of the canonical labels; anything else raises
/// InvalidIntent.
IntentCategory parse_intent(const std::string& label);

inline std::size_t intent_index(IntentCategory intent) {
    return static_cast<std::size_t>(intent);
}

IntentCategory intent_from_index(std::size_t index);

/// One corpus row.
struct CodeCommentRecord {
    std::string code;
    std::string comment;
    IntentCategory intent = IntentCategory::Others;
    std::int64_t id = -1;
};

using Corpus = std::vector<CodeCommentRecord>;

/// Reserved vocabulary slots, fixed across every vocabulary and checkpoint.
struct SpecialTokens {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr int kBos = 4;
    static constexpr int kEos = 5;
    static constexpr std::size_t kReservedCount = 6;

    static const std::array<std::string, kReservedCount>& names();
};

/// Immutable token <-> id bijection with the reserved tokens at ids 0-5.
class Vocabulary {
public:
    /// Reserved tokens only.
    Vocabulary();

    /// Builds from already-ranked tokens (no reserved names among them).
    explicit Vocabulary(const std::vector<std::string>& ranked_tokens);

    std::size_t size() const { return id_to_token_.size(); }

    /// Token id, or UNK for out-of-vocabulary tokens.
    int id_of(const std::string& token) const;

    bool contains(const std::string& token) const;

    const std::string& token_of(int id) const;

    std::vector<int> encode(const std::vector<std::string>& tokens) const;

    /// Ids back to surface tokens; reserved ids are dropped when
    /// skip_special is set.
    std::vector<std::string> decode(const std::vector<int>& ids,
                                    bool skip_special = true) const;

    /// One token per line, line number = id (reserved lines included).
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    /// All tokens in id order (used for checkpoint embedding).
    const std::vector<std::string>& tokens() const { return id_to_token_; }
    static Vocabulary from_tokens(const std::vector<std::string>& all_tokens);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;

    void append(const std::string& token);
};

/// Preprocessed source snippet: flat token ids with per-statement segments,
/// every segment SEP-terminated.
struct PreprocessedCode {
    std::vector<int> token_ids;
    Segments segments;

    std::size_t statement_count() const { return segments.size(); }
};

/// Splits a snippet into statements at newlines and after semicolons
/// (semicolon kept with the preceding text); pieces are trimmed and empty
/// pieces dropped, so braces on their own lines become their own statements.
std::vector<std::string> split_statements(const std::string& code);

/// Lowercased tokens: words split at camelCase humps (a lower/digit followed
/// by an upper), punctuation characters emitted as single-char tokens,
/// whitespace discarded.
std::vector<std::string> tokenize(const std::string& text);

enum class VocabSide { Code, Comment };

/// Frequency-ranked vocabulary (ties broken lexicographically) over one side
/// of the corpus, truncated to max_size including the reserved tokens.
Vocabulary build_vocab(const Corpus& corpus, VocabSide side, std::size_t max_size);

/// Tokenizes statements, truncates each to max_statement_len - 1 tokens plus
/// a trailing SEP, drops statements beyond max_statements, and records
/// segment boundaries.
PreprocessedCode preprocess_code(const std::string& code, const Vocabulary& vocab,
                                 std::size_t max_statements,
                                 std::size_t max_statement_len);

/// Drops every record labeled Others, preserving order.
Corpus filter_others(const Corpus& corpus);

struct IntentStat {
    std::size_t count = 0;
    double proportion = 0.0;
};

/// Count and proportion per intent (all six categories always present).
std::map<IntentCategory, IntentStat> intent_distribution(const Corpus& corpus);

/// Reads a JSON Lines corpus; keys "code", "comment", "intent", optional
/// integer "id" (assigned from the record position when absent).  When
/// require_intent is false, records without an intent default to Others
/// (used before auto-labeling).
Corpus load_corpus_jsonl(const std::string& path, bool require_intent = true);

void save_corpus_jsonl(const Corpus& corpus, const std::string& path);

}  // namespace dome
