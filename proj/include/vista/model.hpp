#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vista/errors.hpp"
#include "vista/kernels.hpp"
#include "vista/rng.hpp"
#include "vista/tensor.hpp"
#include "vista/types.hpp"

namespace vista {

struct ModelConfig {
    int d_model = 64;
    int n_text_layers = 2;
    int n_vit_layers = 2;
    int n_heads = 4;
    int max_seq_len = 128;
    int max_text_len = 64;
    int vocab_size = 512;
    int image_size = 32;
    int patch_size = 8;
    int channels = 3;
    TokenOrder token_order = TokenOrder::VisualFirst;
    float mask_ratio = 0.5f;
    bool use_projector = false;
    uint64_t seed = 42;

    int n_patches() const {
        int g = image_size / patch_size;
        return g * g;
    }
    int patch_dim() const { return patch_size * patch_size * channels; }

    void validate() const {
        if (d_model <= 0 || n_text_layers <= 0 || n_vit_layers <= 0 || n_heads <= 0 ||
            max_seq_len <= 0 || max_text_len <= 0 || vocab_size <= 0 ||
            image_size <= 0 || patch_size <= 0 || channels <= 0)
            throw ConfigError("model config: all dimensions must be positive");
        if (image_size % patch_size != 0)
            throw ConfigError("model config: patch_size must divide image_size");
        if (d_model % n_heads != 0)
            throw ConfigError("model config: n_heads must divide d_model");
        if (1 + n_patches() + max_text_len > max_seq_len)
            throw ConfigError(
                "model config: 1 + n_patches + max_text_len exceeds max_seq_len");
        if (mask_ratio < 0.0f || mask_ratio >= 1.0f)
            throw ConfigError("model config: mask_ratio must be in [0,1)");
    }
};

template <typename S>
struct LayerParams {
    Tensor<S> ln1_g, ln1_b;
    Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<S> ln2_g, ln2_b;
    Tensor<S> w1, b1, w2, b2;

    void init(int d) {
        ln1_g = Tensor<S>({d});
        ln1_b = Tensor<S>({d});
        ln2_g = Tensor<S>({d});
        ln2_b = Tensor<S>({d});
        wq = Tensor<S>({d, d});
        wk = Tensor<S>({d, d});
        wv = Tensor<S>({d, d});
        wo = Tensor<S>({d, d});
        bq = Tensor<S>({d});
        bk = Tensor<S>({d});
        bv = Tensor<S>({d});
        bo = Tensor<S>({d});
        w1 = Tensor<S>({d, 4 * d});
        b1 = Tensor<S>({4 * d});
        w2 = Tensor<S>({4 * d, d});
        b2 = Tensor<S>({d});
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "ln1.g", ln1_g);
        f(prefix + "ln1.b", ln1_b);
        f(prefix + "attn.wq", wq);
        f(prefix + "attn.bq", bq);
        f(prefix + "attn.wk", wk);
        f(prefix + "attn.bk", bk);
        f(prefix + "attn.wv", wv);
        f(prefix + "attn.bv", bv);
        f(prefix + "attn.wo", wo);
        f(prefix + "attn.bo", bo);
        f(prefix + "ln2.g", ln2_g);
        f(prefix + "ln2.b", ln2_b);
        f(prefix + "mlp.w1", w1);
        f(prefix + "mlp.b1", b1);
        f(prefix + "mlp.w2", w2);
        f(prefix + "mlp.b2", b2);
    }
};

template <typename S>
struct StackParams {
    std::vector<LayerParams<S>> layers;
    Tensor<S> lnf_g, lnf_b;

    void init(int d, int n_layers) {
        layers.assign(static_cast<size_t>(n_layers), LayerParams<S>{});
        for (auto& l : layers) l.init(d);
        lnf_g = Tensor<S>({d});
        lnf_b = Tensor<S>({d});
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        for (size_t i = 0; i < layers.size(); ++i)
            layers[i].visit(prefix + "l" + std::to_string(i) + ".", f);
        f(prefix + "lnf.g", lnf_g);
        f(prefix + "lnf.b", lnf_b);
    }
};

// All learnable arrays, partitioned into the frozen-by-default text
// encoder and the trainable vision tokenizer.
template <typename S>
struct ModelParams {
    // text encoder
    Tensor<S> cls;      // (d)
    Tensor<S> tok_emb;  // (V, d)
    Tensor<S> pos_emb;  // (max_seq, d)
    StackParams<S> text;
    // vision tokenizer
    Tensor<S> patch_w;  // (patch_dim, d)
    Tensor<S> patch_b;  // (d)
    Tensor<S> vis_pos;  // (n_patches, d)
    StackParams<S> vis;
    Tensor<S> proj_w, proj_b;  // optional projector

    bool text_trainable = false;
    bool vis_trainable = true;
    bool has_projector = false;

    bool trainable(const std::string& name) const {
        if (name.rfind("text.", 0) == 0) return text_trainable;
        return vis_trainable;
    }

    template <typename F>
    void visit(F&& f) {
        f("text.cls", cls);
        f("text.tok_emb", tok_emb);
        f("text.pos_emb", pos_emb);
        text.visit("text.", f);
        f("vis.patch.w", patch_w);
        f("vis.patch.b", patch_b);
        f("vis.pos_emb", vis_pos);
        vis.visit("vis.", f);
        if (has_projector) {
            f("vis.proj.w", proj_w);
            f("vis.proj.b", proj_b);
        }
    }

    template <typename F>
    void visit(F&& f) const {
        const_cast<ModelParams<S>*>(this)->visit(
            [&](const std::string& n, Tensor<S>& t) { f(n, static_cast<const Tensor<S>&>(t)); });
    }
};

// Per-array gradient accumulator. Frozen arrays get no storage.
template <typename S>
struct GradStore {
    const ModelParams<S>* params = nullptr;
    std::map<std::string, Tensor<S>> grads;

    explicit GradStore(const ModelParams<S>& p) : params(&p) {}
    GradStore() = default;

    S* acc(const std::string& name, const std::vector<int>& shape) {
        if (params && !params->trainable(name)) return nullptr;
        auto it = grads.find(name);
        if (it == grads.end()) it = grads.emplace(name, Tensor<S>(shape)).first;
        return it->second.ptr();
    }

    // Fixed-order merge of per-example stores.
    void add(const GradStore<S>& other) {
        for (const auto& [name, g] : other.grads) {
            auto it = grads.find(name);
            if (it == grads.end()) {
                grads.emplace(name, g);
            } else {
                for (size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
            }
        }
    }

    void scale(S factor) {
        for (auto& [name, g] : grads)
            for (auto& v : g.data) v *= factor;
    }
};

// ---------------------------------------------------------------------
// Transformer stack forward/backward with cached activations.

template <typename S>
struct LayerTrace {
    Tensor<S> x_in, ln1_out, ln1_mean, ln1_rstd;
    Tensor<S> q, k, v, probs, ctx;
    Tensor<S> res1, ln2_out, ln2_mean, ln2_rstd;
    Tensor<S> h_pre, h_act, res2;
};

template <typename S>
struct StackTrace {
    Tensor<S> x0;
    std::vector<LayerTrace<S>> layers;
    Tensor<S> lnf_mean, lnf_rstd, y;
};

namespace detail {

template <typename S>
void attention_forward(const Tensor<S>& ln1_out, const LayerParams<S>& lp, int n_heads,
                       LayerTrace<S>& tr) {
    const int L = ln1_out.rows();
    const int d = ln1_out.cols();
    const int dh = d / n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    tr.q = Tensor<S>({L, d});
    tr.k = Tensor<S>({L, d});
    tr.v = Tensor<S>({L, d});
    kernels::linear_forward(ln1_out.ptr(), lp.wq.ptr(), lp.bq.ptr(), tr.q.ptr(), L, d, d);
    kernels::linear_forward(ln1_out.ptr(), lp.wk.ptr(), lp.bk.ptr(), tr.k.ptr(), L, d, d);
    kernels::linear_forward(ln1_out.ptr(), lp.wv.ptr(), lp.bv.ptr(), tr.v.ptr(), L, d, d);

    tr.probs = Tensor<S>({n_heads, L, L});
    tr.ctx = Tensor<S>({L, d});
    std::vector<S> scores(static_cast<size_t>(L));
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        S* probs_h = tr.probs.ptr() + static_cast<size_t>(h) * L * L;
        for (int i = 0; i < L; ++i) {
            const S* qi = tr.q.row(i) + off;
            for (int j = 0; j < L; ++j)
                scores[static_cast<size_t>(j)] = static_cast<S>(
                    kernels::dot(qi, tr.k.row(j) + off, dh) * inv_sqrt_dh);
            kernels::detail::softmax_row(scores.data(), probs_h + static_cast<size_t>(i) * L, L);
        }
        for (int i = 0; i < L; ++i) {
            const S* pi = probs_h + static_cast<size_t>(i) * L;
            S* ci = tr.ctx.row(i) + off;
            for (int t = 0; t < dh; ++t) ci[t] = S(0);
            for (int j = 0; j < L; ++j) {
                const S p = pi[j];
                const S* vj = tr.v.row(j) + off;
                for (int t = 0; t < dh; ++t) ci[t] += p * vj[t];
            }
        }
    }
}

template <typename S>
void attention_backward(const LayerParams<S>& lp, int n_heads, const LayerTrace<S>& tr,
                        const Tensor<S>& d_ctx, Tensor<S>& d_ln1_out,
                        const std::string& prefix, GradStore<S>& gs) {
    const int L = tr.q.rows();
    const int d = tr.q.cols();
    const int dh = d / n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor<S> dq({L, d}), dk({L, d}), dv({L, d});
    std::vector<double> dprobs(static_cast<size_t>(L));
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        const S* probs_h = tr.probs.ptr() + static_cast<size_t>(h) * L * L;
        for (int i = 0; i < L; ++i) {
            const S* dci = d_ctx.row(i) + off;
            const S* pi = probs_h + static_cast<size_t>(i) * L;
            double dot_p_dp = 0.0;
            for (int j = 0; j < L; ++j) {
                double dp = kernels::dot(dci, tr.v.row(j) + off, dh);
                dprobs[static_cast<size_t>(j)] = dp;
                dot_p_dp += static_cast<double>(pi[j]) * dp;
                // dv accumulation
                S* dvj = dv.row(j) + off;
                const S p = pi[j];
                for (int t = 0; t < dh; ++t) dvj[t] += p * dci[t];
            }
            S* dqi = dq.row(i) + off;
            for (int j = 0; j < L; ++j) {
                double ds = static_cast<double>(pi[j]) *
                            (dprobs[static_cast<size_t>(j)] - dot_p_dp) * inv_sqrt_dh;
                const S* kj = tr.k.row(j) + off;
                S* dkj = dk.row(j) + off;
                const S* qi = tr.q.row(i) + off;
                for (int t = 0; t < dh; ++t) {
                    dqi[t] += static_cast<S>(ds) * kj[t];
                    dkj[t] += static_cast<S>(ds) * qi[t];
                }
            }
        }
    }

    if (S* g = gs.acc(prefix + "attn.wq", lp.wq.shape))
        kernels::linear_backward_params(tr.ln1_out.ptr(), dq.ptr(), g,
                                        gs.acc(prefix + "attn.bq", lp.bq.shape), L, d, d);
    if (S* g = gs.acc(prefix + "attn.wk", lp.wk.shape))
        kernels::linear_backward_params(tr.ln1_out.ptr(), dk.ptr(), g,
                                        gs.acc(prefix + "attn.bk", lp.bk.shape), L, d, d);
    if (S* g = gs.acc(prefix + "attn.wv", lp.wv.shape))
        kernels::linear_backward_params(tr.ln1_out.ptr(), dv.ptr(), g,
                                        gs.acc(prefix + "attn.bv", lp.bv.shape), L, d, d);

    Tensor<S> tmp({L, d});
    kernels::linear_backward_input(dq.ptr(), lp.wq.ptr(), d_ln1_out.ptr(), L, d, d);
    kernels::linear_backward_input(dk.ptr(), lp.wk.ptr(), tmp.ptr(), L, d, d);
    for (size_t i = 0; i < d_ln1_out.size(); ++i) d_ln1_out.data[i] += tmp.data[i];
    kernels::linear_backward_input(dv.ptr(), lp.wv.ptr(), tmp.ptr(), L, d, d);
    for (size_t i = 0; i < d_ln1_out.size(); ++i) d_ln1_out.data[i] += tmp.data[i];
}

}  // namespace detail

// Forward through a pre-norm transformer stack; x0 already contains
// positional information. Throws NumericError naming the layer on any
// non-finite activation.
template <typename S>
void stack_forward(const Tensor<S>& x0, const StackParams<S>& sp, int n_heads,
                   StackTrace<S>& tr, const std::string& stack_name) {
    const int L = x0.rows();
    const int d = x0.cols();
    tr.x0 = x0;
    tr.layers.assign(sp.layers.size(), LayerTrace<S>{});
    const Tensor<S>* x = &tr.x0;

    for (size_t li = 0; li < sp.layers.size(); ++li) {
        const LayerParams<S>& lp = sp.layers[li];
        LayerTrace<S>& l = tr.layers[li];
        l.x_in = *x;

        l.ln1_out = Tensor<S>({L, d});
        l.ln1_mean = Tensor<S>({L});
        l.ln1_rstd = Tensor<S>({L});
        kernels::layernorm_forward(l.x_in.ptr(), lp.ln1_g.ptr(), lp.ln1_b.ptr(),
                                   l.ln1_out.ptr(), l.ln1_mean.ptr(), l.ln1_rstd.ptr(), L, d);

        detail::attention_forward(l.ln1_out, lp, n_heads, l);

        Tensor<S> attn_out({L, d});
        kernels::linear_forward(l.ctx.ptr(), lp.wo.ptr(), lp.bo.ptr(), attn_out.ptr(), L, d, d);
        l.res1 = Tensor<S>({L, d});
        for (size_t i = 0; i < l.res1.size(); ++i)
            l.res1.data[i] = l.x_in.data[i] + attn_out.data[i];

        l.ln2_out = Tensor<S>({L, d});
        l.ln2_mean = Tensor<S>({L});
        l.ln2_rstd = Tensor<S>({L});
        kernels::layernorm_forward(l.res1.ptr(), lp.ln2_g.ptr(), lp.ln2_b.ptr(),
                                   l.ln2_out.ptr(), l.ln2_mean.ptr(), l.ln2_rstd.ptr(), L, d);

        l.h_pre = Tensor<S>({L, 4 * d});
        kernels::linear_forward(l.ln2_out.ptr(), lp.w1.ptr(), lp.b1.ptr(), l.h_pre.ptr(), L, d,
                                4 * d);
        l.h_act = Tensor<S>({L, 4 * d});
        kernels::gelu_forward(l.h_pre.ptr(), l.h_act.ptr(), l.h_pre.size());

        Tensor<S> mlp_out({L, d});
        kernels::linear_forward(l.h_act.ptr(), lp.w2.ptr(), lp.b2.ptr(), mlp_out.ptr(), L,
                                4 * d, d);
        l.res2 = Tensor<S>({L, d});
        for (size_t i = 0; i < l.res2.size(); ++i)
            l.res2.data[i] = l.res1.data[i] + mlp_out.data[i];

        if (!l.res2.finite())
            throw NumericError("non-finite activation in " + stack_name + ".l" +
                               std::to_string(li));
        x = &l.res2;
    }

    tr.y = Tensor<S>({L, d});
    tr.lnf_mean = Tensor<S>({L});
    tr.lnf_rstd = Tensor<S>({L});
    kernels::layernorm_forward(x->ptr(), sp.lnf_g.ptr(), sp.lnf_b.ptr(), tr.y.ptr(),
                               tr.lnf_mean.ptr(), tr.lnf_rstd.ptr(), L, d);
    if (!tr.y.finite())
        throw NumericError("non-finite activation in " + stack_name + ".lnf");
}

// Backward through the stack; fills dx0 and accumulates parameter grads
// for trainable arrays into gs.
template <typename S>
void stack_backward(const StackParams<S>& sp, int n_heads, const StackTrace<S>& tr,
                    const Tensor<S>& dy, Tensor<S>& dx0, const std::string& prefix,
                    GradStore<S>& gs) {
    const int L = tr.x0.rows();
    const int d = tr.x0.cols();

    const Tensor<S>& last =
        tr.layers.empty() ? tr.x0 : tr.layers.back().res2;
    Tensor<S> dx({L, d});
    kernels::layernorm_backward_input(last.ptr(), sp.lnf_g.ptr(), tr.lnf_mean.ptr(),
                                      tr.lnf_rstd.ptr(), dy.ptr(), dx.ptr(), L, d);
    if (S* g = gs.acc(prefix + "lnf.g", sp.lnf_g.shape))
        kernels::layernorm_backward_params(last.ptr(), tr.lnf_mean.ptr(), tr.lnf_rstd.ptr(),
                                           dy.ptr(), g, gs.acc(prefix + "lnf.b", sp.lnf_b.shape),
                                           L, d);

    for (int li = static_cast<int>(sp.layers.size()) - 1; li >= 0; --li) {
        const LayerParams<S>& lp = sp.layers[static_cast<size_t>(li)];
        const LayerTrace<S>& l = tr.layers[static_cast<size_t>(li)];
        const std::string lpfx = prefix + "l" + std::to_string(li) + ".";

        // res2 = res1 + h_act*W2 + b2
        Tensor<S> d_h_act({L, 4 * d});
        kernels::linear_backward_input(dx.ptr(), lp.w2.ptr(), d_h_act.ptr(), L, 4 * d, d);
        if (S* g = gs.acc(lpfx + "mlp.w2", lp.w2.shape))
            kernels::linear_backward_params(l.h_act.ptr(), dx.ptr(), g,
                                            gs.acc(lpfx + "mlp.b2", lp.b2.shape), L, 4 * d, d);

        Tensor<S> d_h_pre({L, 4 * d});
        kernels::gelu_backward(l.h_pre.ptr(), d_h_act.ptr(), d_h_pre.ptr(), d_h_pre.size());

        Tensor<S> d_ln2_out({L, d});
        kernels::linear_backward_input(d_h_pre.ptr(), lp.w1.ptr(), d_ln2_out.ptr(), L, d, 4 * d);
        if (S* g = gs.acc(lpfx + "mlp.w1", lp.w1.shape))
            kernels::linear_backward_params(l.ln2_out.ptr(), d_h_pre.ptr(), g,
                                            gs.acc(lpfx + "mlp.b1", lp.b1.shape), L, d, 4 * d);

        // d_res1 = dx (residual) + LN2-backward(d_ln2_out)
        Tensor<S> d_res1({L, d});
        kernels::layernorm_backward_input(l.res1.ptr(), lp.ln2_g.ptr(), l.ln2_mean.ptr(),
                                          l.ln2_rstd.ptr(), d_ln2_out.ptr(), d_res1.ptr(), L, d);
        if (S* g = gs.acc(lpfx + "ln2.g", lp.ln2_g.shape))
            kernels::layernorm_backward_params(l.res1.ptr(), l.ln2_mean.ptr(), l.ln2_rstd.ptr(),
                                               d_ln2_out.ptr(), g,
                                               gs.acc(lpfx + "ln2.b", lp.ln2_b.shape), L, d);
        for (size_t i = 0; i < d_res1.size(); ++i) d_res1.data[i] += dx.data[i];

        // res1 = x_in + ctx*Wo + bo
        Tensor<S> d_ctx({L, d});
        kernels::linear_backward_input(d_res1.ptr(), lp.wo.ptr(), d_ctx.ptr(), L, d, d);
        if (S* g = gs.acc(lpfx + "attn.wo", lp.wo.shape))
            kernels::linear_backward_params(l.ctx.ptr(), d_res1.ptr(), g,
                                            gs.acc(lpfx + "attn.bo", lp.bo.shape), L, d, d);

        Tensor<S> d_ln1_out({L, d});
        detail::attention_backward(lp, n_heads, l, d_ctx, d_ln1_out, lpfx, gs);

        Tensor<S> d_x_in({L, d});
        kernels::layernorm_backward_input(l.x_in.ptr(), lp.ln1_g.ptr(), l.ln1_mean.ptr(),
                                          l.ln1_rstd.ptr(), d_ln1_out.ptr(), d_x_in.ptr(), L, d);
        if (S* g = gs.acc(lpfx + "ln1.g", lp.ln1_g.shape))
            kernels::layernorm_backward_params(l.x_in.ptr(), l.ln1_mean.ptr(), l.ln1_rstd.ptr(),
                                               d_ln1_out.ptr(), g,
                                               gs.acc(lpfx + "ln1.b", lp.ln1_b.shape), L, d);
        for (size_t i = 0; i < d_x_in.size(); ++i) d_x_in.data[i] += d_res1.data[i];
        dx = std::move(d_x_in);
    }
    dx0 = std::move(dx);
}

// ---------------------------------------------------------------------
// Sequence slots fed to the text stack after the CLS position.

enum class SlotSource { Token, Vision, Extern };

struct Slot {
    SlotSource source = SlotSource::Token;
    int token_id = 0;   // Token
    int index = 0;      // Vision: row of the state matrix; Extern: caller index
};

// Hidden states for the kept image patches.
template <typename S>
struct VisualTokenStates {
    Tensor<S> states;              // (n_kept, d) — post projector if enabled
    std::vector<int> kept_indices;  // strictly increasing patch indices
    // backward caches
    Tensor<S> patches;   // (n_kept, patch_dim)
    Tensor<S> pre_proj;  // states before projector (empty if no projector)
    StackTrace<S> trace;
};

// One finished encode: the unit-norm embedding plus everything backward
// needs.
template <typename S>
struct Encoding {
    Tensor<S> emb;  // (d), unit norm
    double prenorm_norm = 0.0;
    StackTrace<S> text_trace;
    std::vector<Slot> slots;
    bool has_vision = false;
    VisualTokenStates<S> vision;
    // extern slot input vectors (owned copies, for param-grad of callers)
    std::vector<Tensor<S>> extern_vecs;
};

template <typename S>
class Model {
public:
    ModelConfig cfg;
    ModelParams<S> params;

    explicit Model(const ModelConfig& c) : cfg(c) {
        cfg.validate();
        init_arrays();
        random_init(cfg.seed);
    }

    // --- encode paths ---------------------------------------------------

    Encoding<S> encode_text(const TokenSequence& tokens) const {
        if (tokens.ids.empty()) throw InputError("encode_text: empty token sequence");
        std::vector<Slot> slots;
        slots.reserve(tokens.ids.size());
        for (int id : tokens.ids) {
            if (id < 0 || id >= cfg.vocab_size)
                throw InputError("encode_text: token id out of range");
            slots.push_back({SlotSource::Token, id, 0});
        }
        return encode_slots(slots, nullptr, {});
    }

    // Patchify, mask, run the vision stack. Masking draws come only from
    // the supplied stream; mask_ratio 0 keeps every patch.
    VisualTokenStates<S> image_to_visual_tokens(const ImageGrid& image, float mask_ratio,
                                                Rng& rng) const {
        if (image.size != cfg.image_size || image.channels != cfg.channels)
            throw InputError("image shape does not match model config");
        if (mask_ratio < 0.0f || mask_ratio >= 1.0f)
            throw InputError("mask_ratio must be in [0,1)");
        const int n = cfg.n_patches();
        const int keep =
            static_cast<int>(std::ceil((1.0 - static_cast<double>(mask_ratio)) * n));

        VisualTokenStates<S> out;
        out.kept_indices = (keep == n) ? all_indices(n)
                                       : rng.sample_without_replacement(n, keep);

        const int pd = cfg.patch_dim();
        const int d = cfg.d_model;
        const int grid = cfg.image_size / cfg.patch_size;
        out.patches = Tensor<S>({keep, pd});
        for (int r = 0; r < keep; ++r) {
            const int p = out.kept_indices[static_cast<size_t>(r)];
            const int py = (p / grid) * cfg.patch_size;
            const int px = (p % grid) * cfg.patch_size;
            S* dst = out.patches.row(r);
            int t = 0;
            for (int y = 0; y < cfg.patch_size; ++y)
                for (int x = 0; x < cfg.patch_size; ++x)
                    for (int c = 0; c < cfg.channels; ++c)
                        dst[t++] = static_cast<S>(image.at(py + y, px + x, c));
        }

        Tensor<S> x0({keep, d});
        kernels::linear_forward(out.patches.ptr(), params.patch_w.ptr(), params.patch_b.ptr(),
                                x0.ptr(), keep, pd, d);
        for (int r = 0; r < keep; ++r) {
            const S* pos = params.vis_pos.row(out.kept_indices[static_cast<size_t>(r)]);
            S* xr = x0.row(r);
            for (int j = 0; j < d; ++j) xr[j] += pos[j];
        }

        stack_forward(x0, params.vis, cfg.n_heads, out.trace, "vis");
        if (params.has_projector) {
            out.pre_proj = out.trace.y;
            out.states = Tensor<S>({keep, d});
            kernels::linear_forward(out.pre_proj.ptr(), params.proj_w.ptr(),
                                    params.proj_b.ptr(), out.states.ptr(), keep, d, d);
            out.states.check_finite("vis.proj");
        } else {
            out.states = out.trace.y;
        }
        return out;
    }

    // Inference path: masking disabled.
    Encoding<S> encode_image(const ImageGrid& image) const {
        Rng unused(0, "unused");
        VisualTokenStates<S> vt = image_to_visual_tokens(image, 0.0f, unused);
        return encode_from_visual(std::move(vt), nullptr, TokenOrder::VisualFirst);
    }

    // Training path: caller controls masking.
    Encoding<S> encode_image_masked(const ImageGrid& image, float mask_ratio, Rng& rng) const {
        VisualTokenStates<S> vt = image_to_visual_tokens(image, mask_ratio, rng);
        return encode_from_visual(std::move(vt), nullptr, TokenOrder::VisualFirst);
    }

    Encoding<S> encode_interleaved(const ImageGrid& image, const TokenSequence& tokens,
                                   TokenOrder order) const {
        Rng unused(0, "unused");
        VisualTokenStates<S> vt = image_to_visual_tokens(image, 0.0f, unused);
        return encode_from_visual(std::move(vt), &tokens, order);
    }

    Encoding<S> encode_interleaved_masked(const ImageGrid& image, const TokenSequence& tokens,
                                          TokenOrder order, float mask_ratio, Rng& rng) const {
        VisualTokenStates<S> vt = image_to_visual_tokens(image, mask_ratio, rng);
        return encode_from_visual(std::move(vt), &tokens, order);
    }

    // Generic entry used by the fusion baselines: token slots plus extern
    // embedding vectors (index into extern_vecs).
    Encoding<S> encode_with_extern(const std::vector<Slot>& slots,
                                   std::vector<Tensor<S>> extern_vecs) const {
        return encode_slots(slots, nullptr, std::move(extern_vecs));
    }

    // Backward from d(embedding). Token/positional/vision/projector grads
    // are accumulated into gs for trainable arrays. If d_extern is
    // non-null it receives gradients for extern slots (keyed by slot
    // index order of appearance).
    void encode_backward(const Encoding<S>& enc, const Tensor<S>& d_emb, GradStore<S>& gs,
                         std::vector<Tensor<S>>* d_extern = nullptr) const {
        const int d = cfg.d_model;
        const int L = enc.text_trace.x0.rows();

        // unit-norm backward, then route into CLS row of the final LN output
        Tensor<S> d_pre({d});
        kernels::l2_normalize_backward(enc.emb.ptr(), enc.prenorm_norm, d_emb.ptr(),
                                       d_pre.ptr(), d);
        Tensor<S> dy({L, d});
        for (int j = 0; j < d; ++j) dy.row(0)[j] = d_pre.data[static_cast<size_t>(j)];

        Tensor<S> dx0;
        stack_backward(params.text, cfg.n_heads, enc.text_trace, dy, dx0, "text.", gs);

        // distribute input-embedding grads
        if (S* g = gs.acc("text.cls", params.cls.shape))
            for (int j = 0; j < d; ++j) g[j] += dx0.row(0)[j];
        S* gpos = gs.acc("text.pos_emb", params.pos_emb.shape);
        if (gpos)
            for (int r = 0; r < L; ++r)
                for (int j = 0; j < d; ++j)
                    gpos[static_cast<size_t>(r) * d + j] += dx0.row(r)[j];

        S* gtok = gs.acc("text.tok_emb", params.tok_emb.shape);
        Tensor<S> d_states;
        if (enc.has_vision)
            d_states = Tensor<S>({enc.vision.states.rows(), d});
        if (d_extern) {
            d_extern->assign(enc.extern_vecs.size(), Tensor<S>({d}));
        }
        for (size_t s = 0; s < enc.slots.size(); ++s) {
            const Slot& sl = enc.slots[s];
            const S* dxr = dx0.row(static_cast<int>(s) + 1);
            switch (sl.source) {
                case SlotSource::Token:
                    if (gtok)
                        for (int j = 0; j < d; ++j)
                            gtok[static_cast<size_t>(sl.token_id) * d + j] += dxr[j];
                    break;
                case SlotSource::Vision:
                    for (int j = 0; j < d; ++j) d_states.row(sl.index)[j] += dxr[j];
                    break;
                case SlotSource::Extern:
                    if (d_extern)
                        for (int j = 0; j < d; ++j)
                            (*d_extern)[static_cast<size_t>(sl.index)].data[static_cast<size_t>(j)] +=
                                dxr[j];
                    break;
            }
        }

        if (enc.has_vision) vision_backward(enc.vision, d_states, gs);
    }

    // --- initialization -------------------------------------------------

    void random_init(uint64_t seed) {
        params.visit([&](const std::string& name, Tensor<S>& t) {
            bool is_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0 &&
                           name.find("ln") != std::string::npos;
            bool is_bias = (name.find(".b") != std::string::npos &&
                            name.find("emb") == std::string::npos) ||
                           name == "vis.patch.b";
            if (is_gain) {
                std::fill(t.data.begin(), t.data.end(), S(1));
            } else if (is_bias) {
                t.zero();
            } else {
                Rng rng(seed, "init." + name);
                for (auto& v : t.data) v = static_cast<S>(rng.next_normal() * 0.02);
            }
        });
    }

private:
    void init_arrays() {
        const int d = cfg.d_model;
        params.cls = Tensor<S>({d});
        params.tok_emb = Tensor<S>({cfg.vocab_size, d});
        params.pos_emb = Tensor<S>({cfg.max_seq_len, d});
        params.text.init(d, cfg.n_text_layers);
        params.patch_w = Tensor<S>({cfg.patch_dim(), d});
        params.patch_b = Tensor<S>({d});
        params.vis_pos = Tensor<S>({cfg.n_patches(), d});
        params.vis.init(d, cfg.n_vit_layers);
        params.has_projector = cfg.use_projector;
        if (cfg.use_projector) {
            params.proj_w = Tensor<S>({d, d});
            params.proj_b = Tensor<S>({d});
        }
    }

    static std::vector<int> all_indices(int n) {
        std::vector<int> v(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = i;
        return v;
    }

    Encoding<S> encode_from_visual(VisualTokenStates<S> vt, const TokenSequence* tokens,
                                   TokenOrder order) const {
        std::vector<Slot> slots;
        const int n_kept = vt.states.rows();
        auto push_visual = [&] {
            for (int r = 0; r < n_kept; ++r) slots.push_back({SlotSource::Vision, 0, r});
        };
        auto push_text = [&] {
            if (!tokens) return;
            for (int id : tokens->ids) {
                if (id < 0 || id >= cfg.vocab_size)
                    throw InputError("encode_interleaved: token id out of range");
                slots.push_back({SlotSource::Token, id, 0});
            }
        };
        if (order == TokenOrder::VisualFirst) {
            push_visual();
            push_text();
        } else {
            push_text();
            push_visual();
        }
        // The interleaved path never truncates: overflow is a hard error.
        if (1 + static_cast<int>(slots.size()) > cfg.max_seq_len)
            throw InputError("encode_interleaved: sequence overflow (" +
                             std::to_string(1 + slots.size()) + " > " +
                             std::to_string(cfg.max_seq_len) + ")");
        return encode_slots(slots, &vt, {});
    }

    Encoding<S> encode_slots(const std::vector<Slot>& slots, VisualTokenStates<S>* vt,
                             std::vector<Tensor<S>> extern_vecs) const {
        const int d = cfg.d_model;
        const int L = 1 + static_cast<int>(slots.size());
        if (L > cfg.max_seq_len) throw InputError("sequence overflow");

        Tensor<S> x0({L, d});
        for (int j = 0; j < d; ++j)
            x0.row(0)[j] = params.cls.data[static_cast<size_t>(j)] + params.pos_emb.row(0)[j];
        for (size_t s = 0; s < slots.size(); ++s) {
            const Slot& sl = slots[s];
            const S* src = nullptr;
            switch (sl.source) {
                case SlotSource::Token:
                    src = params.tok_emb.row(sl.token_id);
                    break;
                case SlotSource::Vision:
                    src = vt->states.row(sl.index);
                    break;
                case SlotSource::Extern:
                    src = extern_vecs[static_cast<size_t>(sl.index)].ptr();
                    break;
            }
            const S* pos = params.pos_emb.row(static_cast<int>(s) + 1);
            S* dst = x0.row(static_cast<int>(s) + 1);
            for (int j = 0; j < d; ++j) dst[j] = src[j] + pos[j];
        }

        Encoding<S> enc;
        enc.slots = slots;
        enc.extern_vecs = std::move(extern_vecs);
        if (vt) {
            enc.has_vision = true;
            enc.vision = std::move(*vt);
        }
        stack_forward(x0, params.text, cfg.n_heads, enc.text_trace, "text");

        enc.emb = Tensor<S>({d});
        enc.prenorm_norm =
            kernels::l2_normalize(enc.text_trace.y.row(0), enc.emb.ptr(), d);
        if (enc.prenorm_norm <= 0.0)
            throw NumericError("zero-norm embedding at text.cls output");
        enc.emb.check_finite("embedding");
        return enc;
    }

    void vision_backward(const VisualTokenStates<S>& vt, const Tensor<S>& d_states,
                         GradStore<S>& gs) const {
        const int keep = vt.states.rows();
        const int d = cfg.d_model;
        const int pd = cfg.patch_dim();

        Tensor<S> dy = d_states;
        if (params.has_projector) {
            Tensor<S> d_pre({keep, d});
            kernels::linear_backward_input(d_states.ptr(), params.proj_w.ptr(), d_pre.ptr(),
                                           keep, d, d);
            if (S* g = gs.acc("vis.proj.w", params.proj_w.shape))
                kernels::linear_backward_params(vt.pre_proj.ptr(), d_states.ptr(), g,
                                                gs.acc("vis.proj.b", params.proj_b.shape),
                                                keep, d, d);
            dy = std::move(d_pre);
        }

        Tensor<S> dx0;
        stack_backward(params.vis, cfg.n_heads, vt.trace, dy, dx0, "vis.", gs);

        S* gpos = gs.acc("vis.pos_emb", params.vis_pos.shape);
        if (gpos)
            for (int r = 0; r < keep; ++r) {
                const int p = vt.kept_indices[static_cast<size_t>(r)];
                for (int j = 0; j < d; ++j) gpos[static_cast<size_t>(p) * d + j] += dx0.row(r)[j];
            }
        if (S* gw = gs.acc("vis.patch.w", params.patch_w.shape))
            kernels::linear_backward_params(vt.patches.ptr(), dx0.ptr(), gw,
                                            gs.acc("vis.patch.b", params.patch_b.shape), keep,
                                            pd, d);
    }
};

}  // namespace vista
