#include "config_json.hpp"

#include <algorithm>
#include <cstdint>

#include "dome/errors.hpp"

namespace dome::detail {

void check_keys(const ordered_json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

void assign_size(const ordered_json& j, const char* key, std::size_t& out,
                 const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer() && !it->is_number_unsigned())
        throw ConfigError(where + "." + key + " must be an integer");
    if (it->is_number_integer() && it->get<std::int64_t>() < 0)
        throw ConfigError(where + "." + key + " must be non-negative");
    out = it->get<std::size_t>();
}

void assign_u64(const ordered_json& j, const char* key, std::uint64_t& out,
                const std::string& where) {
    std::size_t tmp = static_cast<std::size_t>(out);
    assign_size(j, key, tmp, where);
    out = static_cast<std::uint64_t>(tmp);
}

void assign_double(const ordered_json& j, const char* key, double& out,
                   const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number())
        throw ConfigError(where + "." + key + " must be a number");
    out = it->get<double>();
}

void assign_string(const ordered_json& j, const char* key, std::string& out,
                   const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string())
        throw ConfigError(where + "." + key + " must be a string");
    out = it->get<std::string>();
}

ordered_json model_config_to_json(const ModelConfig& cfg) {
    ordered_json j;
    j["d_model"] = cfg.d_model;
    j["d_intent"] = cfg.d_intent;
    j["heads"] = cfg.heads;
    j["blocks"] = cfg.blocks;
    j["ffn_mult"] = cfg.ffn_mult;
    j["dropout"] = cfg.dropout;
    j["k_token"] = cfg.k_token;
    j["k_statement"] = cfg.k_statement;
    j["max_comment_len"] = cfg.max_comment_len;
    j["max_code_tokens"] = cfg.max_code_tokens;
    j["code_vocab_size"] = cfg.code_vocab_size;
    j["comment_vocab_size"] = cfg.comment_vocab_size;
    j["beam_size"] = cfg.beam_size;
    j["max_statements"] = cfg.max_statements;
    j["max_statement_len"] = cfg.max_statement_len;
    return j;
}

ModelConfig model_config_from_json(const ordered_json& j) {
    const std::string where = "model";
    check_keys(j,
               {"d_model", "d_intent", "heads", "blocks", "ffn_mult", "dropout",
                "k_token", "k_statement", "max_comment_len", "max_code_tokens",
                "code_vocab_size", "comment_vocab_size", "beam_size",
                "max_statements", "max_statement_len"},
               where);
    ModelConfig cfg;
    assign_size(j, "d_model", cfg.d_model, where);
    assign_size(j, "d_intent", cfg.d_intent, where);
    assign_size(j, "heads", cfg.heads, where);
    assign_size(j, "blocks", cfg.blocks, where);
    assign_size(j, "ffn_mult", cfg.ffn_mult, where);
    assign_double(j, "dropout", cfg.dropout, where);
    assign_size(j, "k_token", cfg.k_token, where);
    assign_size(j, "k_statement", cfg.k_statement, where);
    assign_size(j, "max_comment_len", cfg.max_comment_len, where);
    assign_size(j, "max_code_tokens", cfg.max_code_tokens, where);
    assign_size(j, "code_vocab_size", cfg.code_vocab_size, where);
    assign_size(j, "comment_vocab_size", cfg.comment_vocab_size, where);
    assign_size(j, "beam_size", cfg.beam_size, where);
    assign_size(j, "max_statements", cfg.max_statements, where);
    assign_size(j, "max_statement_len", cfg.max_statement_len, where);
    return cfg;
}

ordered_json biencoder_config_to_json(const BiEncoderConfig& cfg) {
    ordered_json j;
    j["d_model"] = cfg.d_model;
    j["heads"] = cfg.heads;
    j["blocks"] = cfg.blocks;
    j["ffn_mult"] = cfg.ffn_mult;
    j["dropout"] = cfg.dropout;
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    return j;
}

BiEncoderConfig biencoder_config_from_json(const ordered_json& j) {
    const std::string where = "biencoder";
    check_keys(j,
               {"d_model", "heads", "blocks", "ffn_mult", "dropout", "lr", "epochs",
                "batch_size"},
               where);
    BiEncoderConfig cfg;
    assign_size(j, "d_model", cfg.d_model, where);
    assign_size(j, "heads", cfg.heads, where);
    assign_size(j, "blocks", cfg.blocks, where);
    assign_size(j, "ffn_mult", cfg.ffn_mult, where);
    assign_double(j, "dropout", cfg.dropout, where);
    assign_double(j, "lr", cfg.lr, where);
    assign_size(j, "epochs", cfg.epochs, where);
    assign_size(j, "batch_size", cfg.batch_size, where);
    return cfg;
}

ordered_json classifier_config_to_json(const ClassifierConfig& cfg) {
    ordered_json j;
    j["d_model"] = cfg.d_model;
    j["heads"] = cfg.heads;
    j["blocks"] = cfg.blocks;
    j["ffn_mult"] = cfg.ffn_mult;
    j["mlp_hidden"] = cfg.mlp_hidden;
    j["max_seq_len"] = cfg.max_seq_len;
    j["dropout"] = cfg.dropout;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    return j;
}

ClassifierConfig classifier_config_from_json(const ordered_json& j) {
    const std::string where = "classifier";
    check_keys(j,
               {"d_model", "heads", "blocks", "ffn_mult", "mlp_hidden", "max_seq_len",
                "dropout", "lr", "batch_size", "epochs"},
               where);
    ClassifierConfig cfg;
    assign_size(j, "d_model", cfg.d_model, where);
    assign_size(j, "heads", cfg.heads, where);
    assign_size(j, "blocks", cfg.blocks, where);
    assign_size(j, "ffn_mult", cfg.ffn_mult, where);
    assign_size(j, "mlp_hidden", cfg.mlp_hidden, where);
    assign_size(j, "max_seq_len", cfg.max_seq_len, where);
    assign_double(j, "dropout", cfg.dropout, where);
    assign_double(j, "lr", cfg.lr, where);
    assign_size(j, "batch_size", cfg.batch_size, where);
    assign_size(j, "epochs", cfg.epochs, where);
    return cfg;
}

}  // namespace dome::detail
