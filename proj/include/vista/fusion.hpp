#pragma once

#include <string>
#include <vector>

#include "vista/errors.hpp"
#include "vista/loss.hpp"
#include "vista/model.hpp"
#include "vista/tokenizer.hpp"
#include "vista/train.hpp"

namespace vista {

enum class FusionMethod { Interleaved, ScoreFusion, PseudoToken };

inline const char* to_string(FusionMethod f) {
    switch (f) {
        case FusionMethod::Interleaved: return "interleaved";
        case FusionMethod::ScoreFusion: return "score_fusion";
        case FusionMethod::PseudoToken: return "pseudo_token";
    }
    return "?";
}

inline FusionMethod fusion_from_string(const std::string& s) {
    if (s == "interleaved") return FusionMethod::Interleaved;
    if (s == "score_fusion") return FusionMethod::ScoreFusion;
    if (s == "pseudo_token") return FusionMethod::PseudoToken;
    throw ConfigError("unknown fusion method: " + s);
}

// Renormalized element-wise sum of two embeddings.
template <typename S>
Tensor<S> fuse_normalized(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape != b.shape) throw InputError("fuse_normalized: shape mismatch");
    const int d = static_cast<int>(a.size());
    Tensor<S> sum(a.shape);
    for (size_t i = 0; i < sum.size(); ++i) sum.data[i] = a.data[i] + b.data[i];
    Tensor<S> out(a.shape);
    double norm = kernels::l2_normalize(sum.ptr(), out.ptr(), d);
    if (norm < 1e-9)
        throw NumericError("score fusion: embeddings cancel, direction undefined");
    return out;
}

// Element-wise sum of the independent text and image embeddings,
// renormalized to unit length unless raw_sum is set.
template <typename S>
Tensor<S> score_fusion_encode(const Model<S>& model, const TokenSequence& text,
                              const ImageGrid& image, bool raw_sum = false) {
    Tensor<S> et = model.encode_text(text).emb;
    Tensor<S> ei = model.encode_image(image).emb;
    if (raw_sum) {
        Tensor<S> sum({model.cfg.d_model});
        for (size_t i = 0; i < sum.size(); ++i) sum.data[i] = et.data[i] + ei.data[i];
        return sum;
    }
    return fuse_normalized(et, ei);
}

// Linear map from an image embedding to one pseudo token embedding, plus
// the prompt ids for "a photo of".
template <typename S>
struct PseudoTokenMap {
    Tensor<S> w;  // (d, d)
    Tensor<S> b;  // (d)
    std::vector<int> prompt_ids;

    static PseudoTokenMap init(const Model<S>& model, const Vocab& vocab, uint64_t seed) {
        PseudoTokenMap m;
        const int d = model.cfg.d_model;
        m.w = Tensor<S>({d, d});
        m.b = Tensor<S>({d});
        Rng rng(seed, "init.map.w");
        for (auto& v : m.w.data) v = static_cast<S>(rng.next_normal() * 0.02);
        for (const char* word : {"a", "photo", "of"}) m.prompt_ids.push_back(vocab.id_of(word));
        return m;
    }
};

template <typename S>
struct PseudoEncoding {
    Encoding<S> enc;        // text-stack encoding with the [*] extern slot
    Encoding<S> image_enc;  // frozen image path feeding the map
    Tensor<S> pseudo;       // Img2Txt output
};

// e_h = TextStack([CLS; "a photo of"; [*]; text]) with [*] = W·e_i + b.
template <typename S>
PseudoEncoding<S> pseudo_token_encode_full(const Model<S>& model, const PseudoTokenMap<S>& map,
                                           const TokenSequence* text, const ImageGrid& image) {
    const int d = model.cfg.d_model;
    if (map.w.rows() != d || map.w.cols() != d)
        throw InputError("pseudo_token_encode: map dimension mismatch");
    PseudoEncoding<S> out;
    out.image_enc = model.encode_image(image);

    out.pseudo = Tensor<S>({d});
    kernels::linear_forward(out.image_enc.emb.ptr(), map.w.ptr(), map.b.ptr(),
                            out.pseudo.ptr(), 1, d, d);

    std::vector<Slot> slots;
    for (int id : map.prompt_ids) slots.push_back({SlotSource::Token, id, 0});
    slots.push_back({SlotSource::Extern, 0, 0});
    if (text)
        for (int id : text->ids) slots.push_back({SlotSource::Token, id, 0});
    std::vector<Tensor<S>> extern_vecs;
    extern_vecs.push_back(out.pseudo);
    out.enc = model.encode_with_extern(slots, std::move(extern_vecs));
    return out;
}

template <typename S>
Tensor<S> pseudo_token_encode(const Model<S>& model, const PseudoTokenMap<S>& map,
                              const TokenSequence& text, const ImageGrid& image) {
    return pseudo_token_encode_full(model, map, &text, image).enc.emb;
}

// Backward of the pseudo-token path into the map arrays only (the model
// stays frozen).
template <typename S>
void pseudo_token_backward(const Model<S>& model, [[maybe_unused]] const PseudoTokenMap<S>& map,
                           const PseudoEncoding<S>& pe, const Tensor<S>& d_emb,
                           Tensor<S>& d_map_w, Tensor<S>& d_map_b) {
    ModelParams<S>& mp = const_cast<ModelParams<S>&>(model.params);
    const bool saved_text = mp.text_trainable;
    const bool saved_vis = mp.vis_trainable;
    mp.text_trainable = false;
    mp.vis_trainable = false;
    GradStore<S> gs(model.params);
    std::vector<Tensor<S>> d_extern;
    model.encode_backward(pe.enc, d_emb, gs, &d_extern);
    mp.text_trainable = saved_text;
    mp.vis_trainable = saved_vis;

    const int d = model.cfg.d_model;
    if (d_map_w.size() == 0) d_map_w = Tensor<S>({d, d});
    if (d_map_b.size() == 0) d_map_b = Tensor<S>({d});
    // pseudo = e_i · W + b with e_i constant
    kernels::linear_backward_params(pe.image_enc.emb.ptr(), d_extern[0].ptr(), d_map_w.ptr(),
                                    d_map_b.ptr(), 1, d, d);
}

// Contrastive alignment of the prompt embedding against the image
// embedding; only the map arrays are updated.
template <typename S>
struct MapTrainResult {
    PseudoTokenMap<S> map;
    std::vector<double> losses;
};

template <typename S>
MapTrainResult<S> train_pseudo_token_map(const Model<S>& model, const Vocab& vocab,
                                         const std::vector<ImageGrid>& images,
                                         const TrainConfig& cfg) {
    cfg.validate();
    MapTrainResult<S> out;
    out.map = PseudoTokenMap<S>::init(model, vocab, cfg.seed);
    const int d = model.cfg.d_model;

    AdamW<S> opt;
    for (int step = 0; step < cfg.total_steps; ++step) {
        Rng rng(cfg.seed, "map.batch", static_cast<uint64_t>(step));
        const int b = std::min<int>(cfg.batch_size, static_cast<int>(images.size()));
        std::vector<PseudoEncoding<S>> encs(static_cast<size_t>(b));
        Tensor<S> u({b, d}), v({b, d});
        for (int i = 0; i < b; ++i) {
            const ImageGrid& img =
                images[static_cast<size_t>(rng.next_below(images.size()))];
            encs[static_cast<size_t>(i)] =
                pseudo_token_encode_full(model, out.map, nullptr, img);
            std::copy(encs[static_cast<size_t>(i)].enc.emb.data.begin(),
                      encs[static_cast<size_t>(i)].enc.emb.data.end(), u.row(i));
            std::copy(encs[static_cast<size_t>(i)].image_enc.emb.data.begin(),
                      encs[static_cast<size_t>(i)].image_enc.emb.data.end(), v.row(i));
        }
        auto lg = contrastive_loss(u, v, cfg.tau, cfg.loss_form);
        out.losses.push_back(lg.loss);

        Tensor<S> dw, db;
        for (int i = 0; i < b; ++i) {
            Tensor<S> de({d});
            std::copy(lg.d_u.row(i), lg.d_u.row(i) + d, de.data.begin());
            pseudo_token_backward(model, out.map, encs[static_cast<size_t>(i)], de, dw, db);
        }

        GradStore<S> gs;  // free-standing store: everything in it is trainable
        gs.grads.emplace("map.w", std::move(dw));
        gs.grads.emplace("map.b", std::move(db));
        clip_global_norm(gs, cfg.clip_norm);
        std::vector<ParamRef<S>> refs = {{"map.w", &out.map.w, true},
                                         {"map.b", &out.map.b, true}};
        opt.step(refs, gs, lr_at(step, cfg), cfg.weight_decay);
    }
    return out;
}

}  // namespace vista
