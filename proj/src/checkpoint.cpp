#include "vista/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "vista/errors.hpp"

namespace vista {
namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'V', 'S', 'T', 'A'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f32_array(std::ostream& os, const float* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &p[i], 4);
        write_u32(os, bits);
    }
}

void read_f32_array(std::istream& is, float* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits = read_u32(is);
        std::memcpy(&p[i], &bits, 4);
    }
}

json config_to_json(const ModelConfig& c) {
    json j;
    j["d_model"] = c.d_model;
    j["n_text_layers"] = c.n_text_layers;
    j["n_vit_layers"] = c.n_vit_layers;
    j["n_heads"] = c.n_heads;
    j["max_seq_len"] = c.max_seq_len;
    j["max_text_len"] = c.max_text_len;
    j["vocab_size"] = c.vocab_size;
    j["image_size"] = c.image_size;
    j["patch_size"] = c.patch_size;
    j["channels"] = c.channels;
    j["token_order"] = to_string(c.token_order);
    j["mask_ratio"] = c.mask_ratio;
    j["use_projector"] = c.use_projector;
    j["seed"] = c.seed;
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_text_layers = j.at("n_text_layers").get<int>();
    c.n_vit_layers = j.at("n_vit_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.max_text_len = j.at("max_text_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.image_size = j.at("image_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.channels = j.at("channels").get<int>();
    c.token_order = token_order_from_string(j.at("token_order").get<std::string>());
    c.mask_ratio = j.at("mask_ratio").get<float>();
    c.use_projector = j.at("use_projector").get<bool>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

std::string read_metadata_json(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    uint32_t version = read_u32(is);
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version) + " in " +
                      path);
    uint64_t len = read_u64(is);
    std::string meta(len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError("checkpoint: truncated metadata in " + path);
    return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model, const Vocab& vocab,
                     int step, const AdamW<float>* optimizer) {
    json meta;
    meta["format"] = "vista-checkpoint";
    meta["step"] = step;
    meta["config"] = config_to_json(model.cfg);
    meta["vocab"] = vocab.words();
    meta["text_trainable"] = model.params.text_trainable;
    meta["vis_trainable"] = model.params.vis_trainable;

    json arrays = json::array();
    model.params.visit([&](const std::string& name, const Tensor<float>& t) {
        json a;
        a["name"] = name;
        a["shape"] = t.shape;
        arrays.push_back(a);
    });
    meta["arrays"] = arrays;

    meta["has_optimizer"] = optimizer != nullptr;
    if (optimizer) {
        json opt;
        opt["t"] = optimizer->t;
        json names = json::array();
        for (const auto& [name, mv] : optimizer->moments) names.push_back(name);
        opt["moment_arrays"] = names;
        meta["optimizer"] = opt;
    }

    const std::string meta_str = meta.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open for write: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u64(os, meta_str.size());
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    model.params.visit([&](const std::string&, const Tensor<float>& t) {
        write_f32_array(os, t.data.data(), t.size());
    });
    if (optimizer) {
        for (const auto& [name, mv] : optimizer->moments) {
            write_f32_array(os, mv.first.data.data(), mv.first.size());
            write_f32_array(os, mv.second.data.data(), mv.second.size());
        }
    }
    if (!os) throw IoError("checkpoint: write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    json meta;
    try {
        meta = json::parse(read_metadata_json(is, path));
    } catch (const json::exception& e) {
        throw IoError("checkpoint: metadata parse error in " + path + ": " + e.what());
    }
    if (meta.value("format", "") != "vista-checkpoint")
        throw IoError("checkpoint: unrecognized format in " + path);

    CheckpointData out;
    out.config = config_from_json(meta.at("config"));
    out.step = meta.at("step").get<int>();

    for (const auto& w : meta.at("vocab")) {
        std::string word = w.get<std::string>();
        if (word == "[UNK]") continue;  // present by construction
        out.vocab.add(word);
    }
    if (out.vocab.size() != static_cast<int>(meta.at("vocab").size()))
        throw IoError("checkpoint: duplicate vocabulary words in " + path);

    out.model = std::make_unique<Model<float>>(out.config);
    out.model->params.text_trainable = meta.at("text_trainable").get<bool>();
    out.model->params.vis_trainable = meta.at("vis_trainable").get<bool>();

    // Validate the table of contents against the freshly built model,
    // then read arrays in visit order.
    size_t idx = 0;
    const json& arrays = meta.at("arrays");
    out.model->params.visit([&](const std::string& name, Tensor<float>& t) {
        if (idx >= arrays.size())
            throw IoError("checkpoint: missing array " + name + " in " + path);
        const json& a = arrays[idx++];
        if (a.at("name").get<std::string>() != name)
            throw IoError("checkpoint: array order mismatch at " + name + " in " + path);
        if (a.at("shape").get<std::vector<int>>() != t.shape)
            throw IoError("checkpoint: shape mismatch for " + name + " in " + path);
        read_f32_array(is, t.ptr(), t.size());
    });
    if (idx != arrays.size())
        throw IoError("checkpoint: extra arrays listed in " + path);

    out.has_optimizer = meta.at("has_optimizer").get<bool>();
    if (out.has_optimizer) {
        const json& opt = meta.at("optimizer");
        out.optimizer.t = opt.at("t").get<int64_t>();
        std::map<std::string, std::vector<int>> shapes;
        out.model->params.visit([&](const std::string& name, const Tensor<float>& t) {
            shapes[name] = t.shape;
        });
        for (const auto& n : opt.at("moment_arrays")) {
            std::string name = n.get<std::string>();
            auto sit = shapes.find(name);
            if (sit == shapes.end())
                throw IoError("checkpoint: optimizer moment for unknown array " + name);
            Tensor<float> m(sit->second), v(sit->second);
            read_f32_array(is, m.ptr(), m.size());
            read_f32_array(is, v.ptr(), v.size());
            out.optimizer.moments.emplace(name, std::make_pair(std::move(m), std::move(v)));
        }
    }
    if (!is) throw IoError("checkpoint: truncated array data in " + path);
    return out;
}

std::string checkpoint_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    char buf[4096];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!is) break;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string checkpoint_metadata(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    std::string raw = read_metadata_json(is, path);
    try {
        return json::parse(raw).dump(2);
    } catch (const json::exception& e) {
        throw IoError("checkpoint: metadata parse error in " + path + ": " + e.what());
    }
}

}  // namespace vista
