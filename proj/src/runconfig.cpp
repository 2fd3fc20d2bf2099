#include "vista/runconfig.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vista/errors.hpp"
#include "vista/scene.hpp"

namespace vista {
namespace {

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Key {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, Key>& registry() {
    static const std::map<std::string, Key> reg = {
        {"model.d_model",
         {[](RunConfig& c, const std::string& v) { c.model.d_model = parse_int("model.d_model", v); },
          [](const RunConfig& c) { return std::to_string(c.model.d_model); }}},
        {"model.n_text_layers",
         {[](RunConfig& c, const std::string& v) {
              c.model.n_text_layers = parse_int("model.n_text_layers", v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.n_text_layers); }}},
        {"model.n_vit_layers",
         {[](RunConfig& c, const std::string& v) {
              c.model.n_vit_layers = parse_int("model.n_vit_layers", v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.n_vit_layers); }}},
        {"model.n_heads",
         {[](RunConfig& c, const std::string& v) { c.model.n_heads = parse_int("model.n_heads", v); },
          [](const RunConfig& c) { return std::to_string(c.model.n_heads); }}},
        {"model.max_seq_len",
         {[](RunConfig& c, const std::string& v) {
              c.model.max_seq_len = parse_int("model.max_seq_len", v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.max_seq_len); }}},
        {"model.max_text_len",
         {[](RunConfig& c, const std::string& v) {
              c.model.max_text_len = parse_int("model.max_text_len", v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.max_text_len); }}},
        {"model.vocab_size",
         {[](RunConfig& c, const std::string& v) {
              c.model.vocab_size = parse_int("model.vocab_size", v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.vocab_size); }}},
        {"model.image_size",
         {[](RunConfig& c, const std::string& v) {
              c.model.image_size = parse_int("model.image_size", v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.image_size); }}},
        {"model.patch_size",
         {[](RunConfig& c, const std::string& v) {
              c.model.patch_size = parse_int("model.patch_size", v);
          },
          [](const RunConfig& c) { return std::to_string(c.model.patch_size); }}},
        {"model.token_order",
         {[](RunConfig& c, const std::string& v) {
              c.model.token_order = token_order_from_string(v);
          },
          [](const RunConfig& c) { return std::string(to_string(c.model.token_order)); }}},
        {"model.mask_ratio",
         {[](RunConfig& c, const std::string& v) {
              c.model.mask_ratio = static_cast<float>(parse_double("model.mask_ratio", v));
          },
          [](const RunConfig& c) { return fmt_double(c.model.mask_ratio); }}},
        {"model.use_projector",
         {[](RunConfig& c, const std::string& v) {
              c.model.use_projector = parse_bool("model.use_projector", v);
          },
          [](const RunConfig& c) { return c.model.use_projector ? "true" : "false"; }}},

        {"data.groups",
         {[](RunConfig& c, const std::string& v) { c.data_groups = parse_int("data.groups", v); },
          [](const RunConfig& c) { return std::to_string(c.data_groups); }}},
        {"data.edits_per_group",
         {[](RunConfig& c, const std::string& v) {
              c.data_edits_per_group = parse_int("data.edits_per_group", v);
          },
          [](const RunConfig& c) { return std::to_string(c.data_edits_per_group); }}},
        {"data.docs",
         {[](RunConfig& c, const std::string& v) { c.data_docs = parse_int("data.docs", v); },
          [](const RunConfig& c) { return std::to_string(c.data_docs); }}},
        {"data.max_objects",
         {[](RunConfig& c, const std::string& v) {
              c.data_max_objects = parse_int("data.max_objects", v);
          },
          [](const RunConfig& c) { return std::to_string(c.data_max_objects); }}},
        {"data.background",
         {[](RunConfig& c, const std::string& v) { c.data_background = v; },
          [](const RunConfig& c) { return c.data_background; }}},
        {"data.filter_drop",
         {[](RunConfig& c, const std::string& v) {
              c.data_filter_drop = parse_double("data.filter_drop", v);
          },
          [](const RunConfig& c) { return fmt_double(c.data_filter_drop); }}},

        {"train.tau",
         {[](RunConfig& c, const std::string& v) { c.train.tau = parse_double("train.tau", v); },
          [](const RunConfig& c) { return fmt_double(c.train.tau); }}},
        {"train.lr",
         {[](RunConfig& c, const std::string& v) { c.train.lr_init = parse_double("train.lr", v); },
          [](const RunConfig& c) { return fmt_double(c.train.lr_init); }}},
        {"train.total_steps",
         {[](RunConfig& c, const std::string& v) {
              c.train.total_steps = parse_int("train.total_steps", v);
          },
          [](const RunConfig& c) { return std::to_string(c.train.total_steps); }}},
        {"train.batch_size",
         {[](RunConfig& c, const std::string& v) {
              c.train.batch_size = parse_int("train.batch_size", v);
          },
          [](const RunConfig& c) { return std::to_string(c.train.batch_size); }}},
        {"train.mask_ratio",
         {[](RunConfig& c, const std::string& v) {
              c.train.mask_ratio_stage1 =
                  static_cast<float>(parse_double("train.mask_ratio", v));
          },
          [](const RunConfig& c) { return fmt_double(c.train.mask_ratio_stage1); }}},
        {"train.unmasked_steps",
         {[](RunConfig& c, const std::string& v) {
              c.train.unmasked_steps = parse_int("train.unmasked_steps", v);
          },
          [](const RunConfig& c) { return std::to_string(c.train.unmasked_steps); }}},
        {"train.hard_negatives",
         {[](RunConfig& c, const std::string& v) {
              c.train.hard_negatives_per_query = parse_int("train.hard_negatives", v);
          },
          [](const RunConfig& c) { return std::to_string(c.train.hard_negatives_per_query); }}},
        {"train.bidirectional_stage2",
         {[](RunConfig& c, const std::string& v) {
              c.train.bidirectional_stage2 = parse_bool("train.bidirectional_stage2", v);
          },
          [](const RunConfig& c) { return c.train.bidirectional_stage2 ? "true" : "false"; }}},
        {"train.loss_form",
         {[](RunConfig& c, const std::string& v) {
              if (v == "infonce")
                  c.train.loss_form = LossForm::InfoNCE;
              else if (v == "paper_literal")
                  c.train.loss_form = LossForm::PaperLiteral;
              else
                  throw ConfigError(
                      "config: train.loss_form expects infonce|paper_literal, got '" + v + "'");
          },
          [](const RunConfig& c) {
              return std::string(c.train.loss_form == LossForm::InfoNCE ? "infonce"
                                                                        : "paper_literal");
          }}},
        {"train.weight_decay",
         {[](RunConfig& c, const std::string& v) {
              c.train.weight_decay = parse_double("train.weight_decay", v);
          },
          [](const RunConfig& c) { return fmt_double(c.train.weight_decay); }}},
        {"train.clip_norm",
         {[](RunConfig& c, const std::string& v) {
              c.train.clip_norm = parse_double("train.clip_norm", v);
          },
          [](const RunConfig& c) { return fmt_double(c.train.clip_norm); }}},
        {"train.checkpoint_every",
         {[](RunConfig& c, const std::string& v) {
              c.checkpoint_every = parse_int("train.checkpoint_every", v);
          },
          [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }}},

        {"fusion",
         {[](RunConfig& c, const std::string& v) { c.fusion = fusion_from_string(v); },
          [](const RunConfig& c) { return std::string(to_string(c.fusion)); }}},
        {"seed",
         {[](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }}},
        {"out",
         {[](RunConfig& c, const std::string& v) { c.out = v; },
          [](const RunConfig& c) { return c.out; }}},
    };
    return reg;
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (data_groups < 1) throw ConfigError("config: data.groups must be >= 1");
    if (data_edits_per_group < 2)
        throw ConfigError("config: data.edits_per_group must be >= 2");
    if (data_docs < 1) throw ConfigError("config: data.docs must be >= 1");
    if (data_max_objects < 1 || data_max_objects > 16)
        throw ConfigError("config: data.max_objects must be in [1,16]");
    if (data_filter_drop < 0.0 || data_filter_drop >= 1.0)
        throw ConfigError("config: data.filter_drop must be in [0,1)");
    bool known_bg = false;
    for (const char* n : Palette::names())
        if (data_background == n) known_bg = true;
    if (!known_bg)
        throw ConfigError("config: data.background '" + data_background +
                          "' is not a palette color");
    if (checkpoint_every < 1) throw ConfigError("config: train.checkpoint_every must be >= 1");
    if (out.empty()) throw ConfigError("config: out must not be empty");
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto it = registry().find(key);
    if (it == registry().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        size_t last = line.find_last_not_of(" \t\r");
        std::string s = line.substr(first, last - first + 1);
        if (s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + s + "'");
        std::string key = s.substr(0, eq);
        std::string value = s.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        size_t vf = value.find_first_not_of(" \t");
        value = vf == std::string::npos ? "" : value.substr(vf);
        apply_override(cfg, key, value);
    }
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_run_config_text(buf.str(), path);
}

std::string render_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& [key, k] : registry()) os << key << "=" << k.get(cfg) << "\n";
    return os.str();
}

}  // namespace vista
