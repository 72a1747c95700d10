#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <utility>

#include "config_json.hpp"
#include "dome/errors.hpp"
#include "dome/trainer.hpp"

namespace dome {
namespace {

using detail::ordered_json;

void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i)
        buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw CorruptCheckpoint("checkpoint truncated in header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f32_block(std::ostream& os, const std::vector<double>& vals) {
    for (double d : vals) {
        float f = static_cast<float>(d);
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        unsigned char buf[4];
        for (int i = 0; i < 4; ++i)
            buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
        os.write(reinterpret_cast<const char*>(buf), 4);
    }
}

std::vector<double> read_f32_block(std::istream& is, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char buf[4];
        is.read(reinterpret_cast<char*>(buf), 4);
        if (!is) throw CorruptCheckpoint("checkpoint truncated in parameter data");
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k)
            bits |= static_cast<std::uint32_t>(buf[k]) << (8 * k);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        out[i] = static_cast<double>(f);
    }
    return out;
}

std::size_t shape_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

ordered_json index_to_json(const RetrievalIndex& index) {
    ordered_json j;
    j["kind"] = to_string(index.kind);
    j["dim"] = index.dim;
    j["encoder_version"] = index.encoder_version;
    ordered_json parts = ordered_json::array();
    for (const auto& partition : index.partitions) {
        ordered_json arr = ordered_json::array();
        for (const IndexedRecord& r : partition) {
            ordered_json rec;
            rec["id"] = r.id;
            rec["comment"] = r.comment;
            rec["code_tokens"] = r.code_tokens;
            rec["vec"] = r.vec;
            arr.push_back(std::move(rec));
        }
        parts.push_back(std::move(arr));
    }
    j["partitions"] = std::move(parts);
    return j;
}

RetrievalIndex index_from_json(const ordered_json& j) {
    RetrievalIndex index;
    index.kind = parse_scorer_kind(j.at("kind").get<std::string>());
    index.dim = j.at("dim").get<std::size_t>();
    index.encoder_version = j.at("encoder_version").get<std::string>();
    const ordered_json& parts = j.at("partitions");
    if (!parts.is_array() || parts.size() != kGeneratableIntentCount)
        throw CorruptCheckpoint("index needs one partition per generatable intent");
    for (std::size_t p = 0; p < kGeneratableIntentCount; ++p) {
        for (const ordered_json& rec : parts[p]) {
            IndexedRecord r;
            r.id = rec.at("id").get<std::int64_t>();
            r.comment = rec.at("comment").get<std::string>();
            r.code_tokens = rec.at("code_tokens").get<std::vector<std::string>>();
            r.vec = rec.at("vec").get<std::vector<double>>();
            index.partitions[p].push_back(std::move(r));
        }
    }
    return index;
}

struct BlockOut {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

void append_param_blocks(std::vector<BlockOut>& blocks, const ParameterStore& store,
                         const std::string& prefix) {
    for (const std::string& name : store.names()) {
        Tensor t = store.get(name);
        blocks.push_back({prefix + name, t.shape(), t.data()});
    }
}

void append_adam_blocks(std::vector<BlockOut>& blocks, Adam& adam,
                        const ParameterStore& store) {
    for (const std::string& name : store.names()) {
        Tensor t = store.get(name);
        blocks.push_back(
            {"adam_m:" + name, t.shape(), adam.first_moment(name, t.size())});
        blocks.push_back(
            {"adam_v:" + name, t.shape(), adam.second_moment(name, t.size())});
    }
}

void write_checkpoint_file(const std::string& path, ordered_json& manifest,
                           const std::vector<BlockOut>& blocks) {
    ordered_json blist = ordered_json::array();
    for (const BlockOut& b : blocks) {
        ordered_json e;
        e["name"] = b.name;
        e["shape"] = b.shape;
        blist.push_back(std::move(e));
    }
    manifest["blocks"] = std::move(blist);
    const std::string mtext = manifest.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ParseError("cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u64_le(os, mtext.size());
    os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const BlockOut& b : blocks) write_f32_block(os, b.data);
    os.flush();
    if (!os) throw ParseError("failed while writing checkpoint '" + path + "'");
}

ordered_json read_manifest(std::istream& is, const std::string& expected_kind) {
    char magic[sizeof(kCheckpointMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CorruptCheckpoint("bad checkpoint magic");
    const std::uint64_t mlen = read_u64_le(is);
    if (mlen == 0 || mlen > (1ull << 32))
        throw CorruptCheckpoint("implausible manifest length");
    std::string mtext(mlen, '\0');
    is.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw CorruptCheckpoint("checkpoint truncated in manifest");
    ordered_json m;
    try {
        m = ordered_json::parse(mtext);
    } catch (const nlohmann::json::parse_error& e) {
        throw CorruptCheckpoint(std::string("manifest is not valid JSON: ") +
                                e.what());
    }
    try {
        if (m.at("format_version").get<int>() != 1)
            throw CorruptCheckpoint("unsupported checkpoint format version");
        if (m.at("kind").get<std::string>() != expected_kind)
            throw CorruptCheckpoint("checkpoint kind mismatch: expected " +
                                    expected_kind);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("manifest is missing header fields: ") +
                                e.what());
    }
    return m;
}

/// Reads every declared block and installs it into the right destination.
/// Unknown names, shape mismatches, or missing coverage are corruption.
void read_blocks(std::istream& is, const ordered_json& manifest,
                 ParameterStore* model_params, Adam* adam,
                 ParameterStore* biencoder_params) {
    std::size_t param_seen = 0;
    std::size_t bi_seen = 0;
    std::size_t adam_seen = 0;
    const ordered_json& blocks = manifest.at("blocks");
    if (!blocks.is_array()) throw CorruptCheckpoint("blocks must be an array");
    for (const ordered_json& e : blocks) {
        const std::string name = e.at("name").get<std::string>();
        const std::vector<std::size_t> shape =
            e.at("shape").get<std::vector<std::size_t>>();
        std::vector<double> data = read_f32_block(is, shape_count(shape));

        auto install_param = [&](ParameterStore* store, const std::string& pname) {
            if (!store || !store->contains(pname))
                throw CorruptCheckpoint("unexpected parameter block " + name);
            Tensor t = store->get(pname);
            if (t.shape() != shape)
                throw CorruptCheckpoint("shape mismatch for block " + name);
            t.data() = std::move(data);
        };
        auto install_moment = [&](bool first, const std::string& pname) {
            if (!adam || !model_params || !model_params->contains(pname))
                throw CorruptCheckpoint("unexpected optimizer block " + name);
            Tensor t = model_params->get(pname);
            if (t.size() != data.size())
                throw CorruptCheckpoint("shape mismatch for block " + name);
            std::vector<double>& dst = first
                                           ? adam->first_moment(pname, data.size())
                                           : adam->second_moment(pname, data.size());
            dst = std::move(data);
        };

        if (name.rfind("param:", 0) == 0) {
            install_param(model_params, name.substr(6));
            ++param_seen;
        } else if (name.rfind("adam_m:", 0) == 0) {
            install_moment(true, name.substr(7));
            ++adam_seen;
        } else if (name.rfind("adam_v:", 0) == 0) {
            install_moment(false, name.substr(7));
            ++adam_seen;
        } else if (name.rfind("bi:", 0) == 0) {
            install_param(biencoder_params, name.substr(3));
            ++bi_seen;
        } else {
            throw CorruptCheckpoint("unknown block name " + name);
        }
    }
    if (model_params && param_seen != model_params->size())
        throw CorruptCheckpoint("checkpoint does not cover every model parameter");
    if (biencoder_params && bi_seen != biencoder_params->size())
        throw CorruptCheckpoint("checkpoint does not cover the retrieval encoder");
    if (adam && adam_seen != 0 && model_params &&
        adam_seen != 2 * model_params->size())
        throw CorruptCheckpoint("optimizer state is incomplete");
    if (is.peek() != std::char_traits<char>::eof())
        throw CorruptCheckpoint("trailing bytes after the declared blocks");
}

}  // namespace

void save_dome_checkpoint(const std::string& path, const DomeBundle& bundle,
                          const TrainConfig& train_cfg,
                          std::size_t epochs_completed,
                          const std::vector<double>& loss_history,
                          const std::vector<double>& biencoder_history,
                          Adam* adam) {
    if (!bundle.model) throw StateError("bundle has no model to save");

    ordered_json m;
    m["format_version"] = 1;
    m["kind"] = "dome";
    m["seed"] = train_cfg.seed;
    m["epochs_completed"] = epochs_completed;
    m["adam_step"] = adam ? adam->step_count() : 0;
    m["has_adam"] = adam != nullptr;
    m["loss_history"] = loss_history;
    m["biencoder_history"] = biencoder_history;
    m["train_config"] = ordered_json::parse(train_cfg.to_json());
    m["model_config"] = detail::model_config_to_json(bundle.cfg);
    m["code_vocab"] = bundle.code_vocab.tokens();
    m["comment_vocab"] = bundle.comment_vocab.tokens();
    m["has_biencoder"] = bundle.biencoder != nullptr;
    if (bundle.biencoder)
        m["biencoder_config"] =
            detail::biencoder_config_to_json(bundle.biencoder->config());
    m["index"] = index_to_json(bundle.index);

    std::vector<BlockOut> blocks;
    append_param_blocks(blocks, bundle.model->params(), "param:");
    if (adam) append_adam_blocks(blocks, *adam, bundle.model->params());
    if (bundle.biencoder)
        append_param_blocks(blocks, bundle.biencoder->params(), "bi:");
    write_checkpoint_file(path, m, blocks);
}

LoadedDome load_dome_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open checkpoint file '" + path + "'");
    ordered_json m = read_manifest(is, "dome");

    LoadedDome out;
    try {
        out.train_cfg = TrainConfig::from_json(m.at("train_config").dump());
        out.epochs_completed = m.at("epochs_completed").get<std::size_t>();
        out.loss_history = m.at("loss_history").get<std::vector<double>>();
        out.biencoder_history =
            m.at("biencoder_history").get<std::vector<double>>();
        out.has_adam = m.at("has_adam").get<bool>();

        ModelConfig mc = detail::model_config_from_json(m.at("model_config"));
        out.bundle.cfg = mc;
        out.bundle.code_vocab =
            Vocabulary::from_tokens(m.at("code_vocab").get<std::vector<std::string>>());
        out.bundle.comment_vocab = Vocabulary::from_tokens(
            m.at("comment_vocab").get<std::vector<std::string>>());
        if (out.bundle.code_vocab.size() != mc.code_vocab_size ||
            out.bundle.comment_vocab.size() != mc.comment_vocab_size)
            throw CorruptCheckpoint(
                "embedded vocabularies disagree with the model configuration");

        out.bundle.model = std::make_unique<DomeModel>(
            mc, mc.code_vocab_size, mc.comment_vocab_size, /*init_seed=*/0);
        if (m.at("has_biencoder").get<bool>()) {
            BiEncoderConfig bc =
                detail::biencoder_config_from_json(m.at("biencoder_config"));
            out.bundle.biencoder = std::make_unique<BiEncoder>(
                bc, out.bundle.code_vocab.size(), out.bundle.comment_vocab.size(),
                /*init_seed=*/0);
        }
        out.bundle.index = index_from_json(m.at("index"));

        out.adam = Adam(AdamConfig{out.train_cfg.lr, 0.9, 0.999, 1e-8});
        out.adam.set_step_count(m.at("adam_step").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("manifest field error: ") + e.what());
    } catch (const ConfigError& e) {
        throw CorruptCheckpoint(std::string("invalid embedded config: ") + e.what());
    } catch (const ParseError& e) {
        throw CorruptCheckpoint(std::string("invalid embedded data: ") + e.what());
    }

    read_blocks(is, m, &out.bundle.model->params(),
                out.has_adam ? &out.adam : nullptr,
                out.bundle.biencoder ? &out.bundle.biencoder->params() : nullptr);
    return out;
}

void save_coin_checkpoint(const std::string& path, const CoinModel& model,
                          const Vocabulary& vocab, std::uint64_t seed,
                          std::size_t epochs_completed,
                          const std::vector<double>& loss_history, Adam* adam) {
    ordered_json m;
    m["format_version"] = 1;
    m["kind"] = "coin";
    m["seed"] = seed;
    m["epochs_completed"] = epochs_completed;
    m["adam_step"] = adam ? adam->step_count() : 0;
    m["has_adam"] = adam != nullptr;
    m["loss_history"] = loss_history;
    m["classifier_config"] = detail::classifier_config_to_json(model.config());
    m["vocab"] = vocab.tokens();

    std::vector<BlockOut> blocks;
    append_param_blocks(blocks, model.params(), "param:");
    if (adam) append_adam_blocks(blocks, *adam, model.params());
    write_checkpoint_file(path, m, blocks);
}

LoadedCoin load_coin_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open checkpoint file '" + path + "'");
    ordered_json m = read_manifest(is, "coin");

    LoadedCoin out;
    try {
        out.seed = m.at("seed").get<std::uint64_t>();
        out.epochs_completed = m.at("epochs_completed").get<std::size_t>();
        out.loss_history = m.at("loss_history").get<std::vector<double>>();
        out.has_adam = m.at("has_adam").get<bool>();
        ClassifierConfig cc =
            detail::classifier_config_from_json(m.at("classifier_config"));
        out.vocab =
            Vocabulary::from_tokens(m.at("vocab").get<std::vector<std::string>>());
        out.model = std::make_unique<CoinModel>(cc, out.vocab.size(),
                                                /*init_seed=*/0);
        out.adam = Adam(AdamConfig{cc.lr, 0.9, 0.999, 1e-8});
        out.adam.set_step_count(m.at("adam_step").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("manifest field error: ") + e.what());
    } catch (const ConfigError& e) {
        throw CorruptCheckpoint(std::string("invalid embedded config: ") + e.what());
    } catch (const ParseError& e) {
        throw CorruptCheckpoint(std::string("invalid embedded data: ") + e.what());
    }

    read_blocks(is, m, &out.model->params(), out.has_adam ? &out.adam : nullptr,
                nullptr);
    return out;
}

}  // namespace dome
