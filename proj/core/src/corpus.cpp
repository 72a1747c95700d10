#include "dome/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dome {

namespace {

using nlohmann::json;

const std::array<std::string, kIntentCount> kIntentNames = {
    "what", "why", "how-to-use", "how-it-is-done", "property", "others"};

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

const std::string& to_string(IntentCategory intent) {
    return kIntentNames.at(intent_index(intent));
}

IntentCategory parse_intent(const std::string& label) {
    const std::string needle = to_lower(trim(label));
    for (std::size_t i = 0; i < kIntentCount; ++i)
        if (kIntentNames[i] == needle) return intent_from_index(i);
    throw InvalidIntent("unknown intent label '" + label + "'");
}

IntentCategory intent_from_index(std::size_t index) {
    if (index >= kIntentCount)
        throw InvalidIntent("intent index out of range");
    return static_cast<IntentCategory>(static_cast<int>(index));
}

const std::array<std::string, SpecialTokens::kReservedCount>& SpecialTokens::names() {
    static const std::array<std::string, kReservedCount> kNames = {
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"};
    return kNames;
}

Vocabulary::Vocabulary() {
    for (const std::string& name : SpecialTokens::names()) append(name);
}

Vocabulary::Vocabulary(const std::vector<std::string>& ranked_tokens) : Vocabulary() {
    for (const std::string& t : ranked_tokens) append(t);
}

void Vocabulary::append(const std::string& token) {
    if (token_to_id_.count(token))
        throw ConfigError("vocabulary token '" + token + "' duplicated");
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? SpecialTokens::kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw ShapeError("token id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(id_of(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids,
                                            bool skip_special) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (skip_special && id >= 0 &&
            static_cast<std::size_t>(id) < SpecialTokens::kReservedCount)
            continue;
        out.push_back(token_of(id));
    }
    return out;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    for (const std::string& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open vocabulary file '" + path + "'");
    std::vector<std::string> all;
    std::string line;
    while (std::getline(in, line)) all.push_back(line);
    return from_tokens(all);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& all_tokens) {
    if (all_tokens.size() < SpecialTokens::kReservedCount)
        throw ParseError("vocabulary is missing the reserved tokens");
    for (std::size_t i = 0; i < SpecialTokens::kReservedCount; ++i)
        if (all_tokens[i] != SpecialTokens::names()[i])
            throw ParseError("vocabulary reserved token " + std::to_string(i) +
                             " is '" + all_tokens[i] + "', expected '" +
                             SpecialTokens::names()[i] + "'");
    return Vocabulary(std::vector<std::string>(
        all_tokens.begin() + SpecialTokens::kReservedCount, all_tokens.end()));
}

std::vector<std::string> split_statements(const std::string& code) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        const std::string t = trim(current);
        if (!t.empty()) out.push_back(t);
        current.clear();
    };
    for (char c : code) {
        if (c == '\n') {
            flush();
        } else {
            current.push_back(c);
            if (c == ';') flush();
        }
    }
    flush();
    if (out.empty())
        throw EmptyInput("code is empty after statement splitting");
    return out;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string word;
    auto flush_word = [&] {
        if (!word.empty()) {
            out.push_back(to_lower(word));
            word.clear();
        }
    };
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            flush_word();
        } else if (std::isalnum(u)) {
            // camelCase hump: lower/digit followed by an upper starts a token
            if (!word.empty() && std::isupper(u)) {
                const unsigned char prev = static_cast<unsigned char>(word.back());
                if (std::islower(prev) || std::isdigit(prev)) flush_word();
            }
            word.push_back(c);
        } else {
            flush_word();
            out.push_back(std::string(1, c));
        }
    }
    flush_word();
    return out;
}

Vocabulary build_vocab(const Corpus& corpus, VocabSide side, std::size_t max_size) {
    if (max_size <= SpecialTokens::kReservedCount)
        throw ConfigError("vocabulary max_size must exceed the " +
                          std::to_string(SpecialTokens::kReservedCount) +
                          " reserved tokens");
    if (corpus.empty()) throw EmptyInput("cannot build a vocabulary from an empty corpus");
    std::unordered_map<std::string, std::size_t> freq;
    for (const CodeCommentRecord& r : corpus)
        for (const std::string& t :
             tokenize(side == VocabSide::Code ? r.code : r.comment))
            ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const std::size_t keep =
        std::min(ranked.size(), max_size - SpecialTokens::kReservedCount);
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
    return Vocabulary(tokens);
}

PreprocessedCode preprocess_code(const std::string& code, const Vocabulary& vocab,
                                 std::size_t max_statements,
                                 std::size_t max_statement_len) {
    std::vector<std::string> statements = split_statements(code);
    if (statements.size() > max_statements) statements.resize(max_statements);
    if (statements.empty())
        throw EmptyInput("code has no statements after preprocessing");

    PreprocessedCode out;
    for (const std::string& stmt : statements) {
        std::vector<std::string> tokens = tokenize(stmt);
        if (max_statement_len >= 1 && tokens.size() > max_statement_len - 1)
            tokens.resize(max_statement_len - 1);
        const std::size_t begin = out.token_ids.size();
        for (const std::string& t : tokens) out.token_ids.push_back(vocab.id_of(t));
        out.token_ids.push_back(SpecialTokens::kSep);
        out.segments.push_back({begin, out.token_ids.size()});
    }
    return out;
}

Corpus filter_others(const Corpus& corpus) {
    Corpus out;
    out.reserve(corpus.size());
    for (const CodeCommentRecord& r : corpus)
        if (r.intent != IntentCategory::Others) out.push_back(r);
    return out;
}

std::map<IntentCategory, IntentStat> intent_distribution(const Corpus& corpus) {
    if (corpus.empty())
        throw EmptyInput("intent_distribution requires a non-empty corpus");
    std::map<IntentCategory, IntentStat> out;
    for (std::size_t i = 0; i < kIntentCount; ++i)
        out[intent_from_index(i)] = IntentStat{};
    for (const CodeCommentRecord& r : corpus) ++out[r.intent].count;
    const double total = static_cast<double>(corpus.size());
    for (auto& [intent, stat] : out)
        stat.proportion = static_cast<double>(stat.count) / total;
    return out;
}

Corpus load_corpus_jsonl(const std::string& path, bool require_intent) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open corpus file '" + path + "'");
    Corpus out;
    std::set<std::int64_t> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + ": invalid JSON: " + e.what());
        }
        if (!obj.is_object())
            throw ParseError(where + ": expected a JSON object");
        CodeCommentRecord rec;
        if (!obj.contains("code") || !obj["code"].is_string())
            throw ParseError(where + ": missing string field 'code'");
        if (!obj.contains("comment") || !obj["comment"].is_string())
            throw ParseError(where + ": missing string field 'comment'");
        rec.code = obj["code"].get<std::string>();
        rec.comment = obj["comment"].get<std::string>();
        if (trim(rec.code).empty())
            throw ParseError(where + ": 'code' is empty after trimming");
        if (trim(rec.comment).empty())
            throw ParseError(where + ": 'comment' is empty after trimming");
        if (obj.contains("intent")) {
            if (!obj["intent"].is_string())
                throw ParseError(where + ": 'intent' must be a string");
            try {
                rec.intent = parse_intent(obj["intent"].get<std::string>());
            } catch (const InvalidIntent& e) {
                throw ParseError(where + ": " + e.what());
            }
        } else if (require_intent) {
            throw ParseError(where + ": missing field 'intent'");
        } else {
            rec.intent = IntentCategory::Others;
        }
        if (obj.contains("id")) {
            if (!obj["id"].is_number_integer())
                throw ParseError(where + ": 'id' must be an integer");
            rec.id = obj["id"].get<std::int64_t>();
        } else {
            rec.id = static_cast<std::int64_t>(out.size());
        }
        if (!seen_ids.insert(rec.id).second)
            throw ParseError(where + ": duplicate record id " +
                             std::to_string(rec.id));
        out.push_back(std::move(rec));
    }
    return out;
}

void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    for (const CodeCommentRecord& r : corpus) {
        json obj;
        obj["id"] = r.id;
        obj["code"] = r.code;
        obj["comment"] = r.comment;
        obj["intent"] = to_string(r.intent);
        out << obj.dump() << '\n';
    }
}

}  // namespace dome
