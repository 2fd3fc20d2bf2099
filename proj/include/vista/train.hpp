#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vista/errors.hpp"
#include "vista/exec.hpp"
#include "vista/loss.hpp"
#include "vista/model.hpp"
#include "vista/rng.hpp"

namespace vista {

enum class Stage { Stage1, Stage2, Finetune };
enum class TaskTag { CrossModal, It2i, T2it, Finetune };

inline const char* to_string(TaskTag t) {
    switch (t) {
        case TaskTag::CrossModal: return "cross_modal";
        case TaskTag::It2i: return "it2i";
        case TaskTag::T2it: return "t2it";
        case TaskTag::Finetune: return "finetune";
    }
    return "?";
}

struct TrainConfig {
    double tau = 0.02;
    double lr_init = 2e-5;
    int total_steps = 600;
    int batch_size = 8;
    float mask_ratio_stage1 = 0.5f;
    int unmasked_steps = -1;  // <0: 30% of total_steps
    int hard_negatives_per_query = 3;
    Stage stage = Stage::Stage1;
    uint64_t seed = 42;
    bool bidirectional_stage2 = false;
    LossForm loss_form = LossForm::InfoNCE;
    double weight_decay = 0.01;
    double clip_norm = 1.0;

    int masked_phase_steps() const {
        int un = unmasked_steps >= 0 ? unmasked_steps : total_steps - (total_steps * 7) / 10;
        return total_steps - un;
    }

    void validate() const {
        if (tau <= 0.0) throw ConfigError("train config: tau must be positive");
        if (lr_init <= 0.0) throw ConfigError("train config: lr_init must be positive");
        if (total_steps <= 0) throw ConfigError("train config: total_steps must be positive");
        if (batch_size <= 0) throw ConfigError("train config: batch_size must be positive");
        if (hard_negatives_per_query < 0)
            throw ConfigError("train config: hard_negatives_per_query must be >= 0");
        if (mask_ratio_stage1 < 0.0f || mask_ratio_stage1 >= 1.0f)
            throw ConfigError("train config: mask_ratio_stage1 must be in [0,1)");
    }
};

// Linear decay from lr_init to 0 across total_steps.
inline double lr_at(int step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.total_steps)
        throw InputError("lr_at: step out of range [0, total_steps]");
    double lr = cfg.lr_init * (1.0 - static_cast<double>(step) / cfg.total_steps);
    return lr < 0.0 ? 0.0 : lr;
}

// ---------------------------------------------------------------------
// Batches

struct TrainItem {
    enum class Kind { Text, Image, ImageText } kind = Kind::Text;
    std::string id;
    TokenSequence tokens;
    ImageGrid image;
};

struct TrainingBatch {
    std::vector<TrainItem> queries;
    std::vector<TrainItem> candidates;  // positives, aligned by index
    std::vector<std::vector<TrainItem>> hard_negative_groups;  // per query
    TaskTag task_tag = TaskTag::It2i;

    void validate() const {
        if (queries.size() != candidates.size())
            throw InputError("batch: |queries| != |candidates|");
        bool has_negs = false;
        for (const auto& g : hard_negative_groups)
            if (!g.empty()) has_negs = true;
        if (!has_negs && queries.size() < 2)
            throw InputError("batch: need |B| >= 2 when hard negatives are absent");
        if (!hard_negative_groups.empty() &&
            hard_negative_groups.size() != queries.size())
            throw InputError("batch: hard_negative_groups size mismatch");
        for (size_t i = 0; i < hard_negative_groups.size(); ++i)
            for (const auto& n : hard_negative_groups[i])
                if (n.id == candidates[i].id)
                    throw InputError("batch: hard negative equals the positive: " + n.id);
    }
};

// ---------------------------------------------------------------------
// Optimizer

template <typename S>
struct ParamRef {
    std::string name;
    Tensor<S>* tensor;
    bool trainable;
};

template <typename S>
std::vector<ParamRef<S>> param_refs(ModelParams<S>& p) {
    std::vector<ParamRef<S>> out;
    p.visit([&](const std::string& name, Tensor<S>& t) {
        out.push_back({name, &t, p.trainable(name)});
    });
    return out;
}

// Scale grads in place so the global L2 norm is at most max_norm.
template <typename S>
double clip_global_norm(GradStore<S>& gs, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : gs.grads)
        for (S v : g.data) sq += static_cast<double>(v) * v;
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        S f = static_cast<S>(max_norm / norm);
        gs.scale(f);
    }
    return norm;
}

// AdamW with decoupled weight decay. Moments are kept in the working
// precision so checkpoint round-trips are bit-exact.
template <typename S>
class AdamW {
public:
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::map<std::string, std::pair<Tensor<S>, Tensor<S>>> moments;  // m, v

    void step(std::vector<ParamRef<S>> params, const GradStore<S>& grads, double lr,
              double weight_decay) {
        std::map<std::string, ParamRef<S>*> by_name;
        for (auto& p : params) by_name[p.name] = &p;
        for (const auto& [name, g] : grads.grads) {
            auto it = by_name.find(name);
            if (it == by_name.end())
                throw InputError("optimizer_step: gradient for unknown array " + name);
            if (!it->second->trainable)
                throw InputError("optimizer_step: gradient supplied for frozen array " + name);
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& p : params) {
            if (!p.trainable) continue;
            auto git = grads.grads.find(p.name);
            if (git == grads.grads.end()) continue;
            const Tensor<S>& g = git->second;
            auto& [m, v] = moments.try_emplace(p.name,
                                               std::make_pair(Tensor<S>(p.tensor->shape),
                                                              Tensor<S>(p.tensor->shape)))
                               .first->second;
            S* w = p.tensor->ptr();
            for (size_t i = 0; i < g.size(); ++i) {
                const double gi = g.data[i];
                const double mi = beta1 * m.data[i] + (1.0 - beta1) * gi;
                const double vi = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
                m.data[i] = static_cast<S>(mi);
                v.data[i] = static_cast<S>(vi);
                const double update =
                    (mi / bc1) / (std::sqrt(vi / bc2) + eps) + weight_decay * w[i];
                const double nw = static_cast<double>(w[i]) - lr * update;
                if (!std::isfinite(nw))
                    throw NumericError("optimizer_step: non-finite update in " + p.name);
                w[i] = static_cast<S>(nw);
            }
        }
    }
};

// ---------------------------------------------------------------------
// Forward/backward heads. Each returns the loss and accumulates grads for
// trainable arrays; the Trainer below applies clipping + AdamW.

template <typename S>
Encoding<S> encode_item(const Model<S>& model, const TrainItem& item, TokenOrder order,
                        float mask_ratio, Rng* rng) {
    switch (item.kind) {
        case TrainItem::Kind::Text:
            return model.encode_text(item.tokens);
        case TrainItem::Kind::Image:
            if (mask_ratio > 0.0f && rng)
                return model.encode_image_masked(item.image, mask_ratio, *rng);
            return model.encode_image(item.image);
        case TrainItem::Kind::ImageText:
            if (mask_ratio > 0.0f && rng)
                return model.encode_interleaved_masked(item.image, item.tokens, order,
                                                       mask_ratio, *rng);
            return model.encode_interleaved(item.image, item.tokens, order);
    }
    throw InputError("encode_item: unknown kind");
}

// Stage 1: bidirectional cross-modal loss over caption/image pairs.
// Masking is active while step < masked_phase_steps, with draws from the
// (seed, "mask", step, example) stream.
template <typename S>
double stage1_forward_backward(const Model<S>& model,
                               const std::vector<TokenSequence>& texts,
                               const std::vector<ImageGrid>& images, const TrainConfig& cfg,
                               int step, GradStore<S>& gs) {
    cfg.validate();
    const int b = static_cast<int>(texts.size());
    if (b < 2) throw InputError("stage1: need |B| >= 2");
    if (images.size() != texts.size()) throw InputError("stage1: unpaired batch");
    const float mr = step < cfg.masked_phase_steps() ? cfg.mask_ratio_stage1 : 0.0f;
    const int d = model.cfg.d_model;

    std::vector<Encoding<S>> enc_t(static_cast<size_t>(b)), enc_i(static_cast<size_t>(b));
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < b; ++i) {
        enc_t[static_cast<size_t>(i)] = model.encode_text(texts[static_cast<size_t>(i)]);
        Rng mask_rng(cfg.seed, "mask", (static_cast<uint64_t>(step) << 20) +
                                           static_cast<uint64_t>(i));
        enc_i[static_cast<size_t>(i)] = mr > 0.0f
            ? model.encode_image_masked(images[static_cast<size_t>(i)], mr, mask_rng)
            : model.encode_image(images[static_cast<size_t>(i)]);
    }

    Tensor<S> u({b, d}), v({b, d});
    for (int i = 0; i < b; ++i) {
        std::copy(enc_t[static_cast<size_t>(i)].emb.data.begin(),
                  enc_t[static_cast<size_t>(i)].emb.data.end(), u.row(i));
        std::copy(enc_i[static_cast<size_t>(i)].emb.data.begin(),
                  enc_i[static_cast<size_t>(i)].emb.data.end(), v.row(i));
    }

    auto l_ti = contrastive_loss(u, v, cfg.tau, cfg.loss_form);
    auto l_it = contrastive_loss(v, u, cfg.tau, cfg.loss_form);

    std::vector<GradStore<S>> parts(static_cast<size_t>(b), GradStore<S>(model.params));
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < b; ++i) {
        Tensor<S> dt({d}), di({d});
        for (int j = 0; j < d; ++j) {
            dt.data[static_cast<size_t>(j)] = l_ti.d_u.row(i)[j] + l_it.d_v.row(i)[j];
            di.data[static_cast<size_t>(j)] = l_ti.d_v.row(i)[j] + l_it.d_u.row(i)[j];
        }
        model.encode_backward(enc_t[static_cast<size_t>(i)], dt, parts[static_cast<size_t>(i)]);
        model.encode_backward(enc_i[static_cast<size_t>(i)], di, parts[static_cast<size_t>(i)]);
    }
    for (const auto& p : parts) gs.add(p);
    return l_ti.loss + l_it.loss;
}

// Stage 2 / fine-tune: each query against the pool of all in-batch
// positives plus all hard negatives (deduplicated by id).
template <typename S>
double stage2_forward_backward(const Model<S>& model, const TrainingBatch& batch,
                               const TrainConfig& cfg, GradStore<S>& gs) {
    cfg.validate();
    batch.validate();
    if (batch.task_tag == TaskTag::CrossModal)
        throw InputError("stage2: task_tag must be it2i/t2it/finetune");
    const int b = static_cast<int>(batch.queries.size());
    const int d = model.cfg.d_model;
    const TokenOrder order = model.cfg.token_order;

    // pool: positives first, then unseen hard negatives, order-stable
    std::vector<const TrainItem*> pool;
    std::map<std::string, int> pool_index;
    std::vector<int> pos_index(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        const TrainItem& c = batch.candidates[static_cast<size_t>(i)];
        auto [it, inserted] = pool_index.try_emplace(c.id, static_cast<int>(pool.size()));
        if (inserted) pool.push_back(&c);
        pos_index[static_cast<size_t>(i)] = it->second;
    }
    for (const auto& group : batch.hard_negative_groups)
        for (const auto& n : group) {
            auto [it, inserted] = pool_index.try_emplace(n.id, static_cast<int>(pool.size()));
            if (inserted) pool.push_back(&n);
        }
    const int p = static_cast<int>(pool.size());

    std::vector<Encoding<S>> enc_q(static_cast<size_t>(b)), enc_c(static_cast<size_t>(p));
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < b + p; ++i) {
        if (i < b)
            enc_q[static_cast<size_t>(i)] =
                encode_item(model, batch.queries[static_cast<size_t>(i)], order, 0.0f, nullptr);
        else
            enc_c[static_cast<size_t>(i - b)] =
                encode_item(model, *pool[static_cast<size_t>(i - b)], order, 0.0f, nullptr);
    }

    Tensor<S> q({b, d}), c({p, d});
    for (int i = 0; i < b; ++i)
        std::copy(enc_q[static_cast<size_t>(i)].emb.data.begin(),
                  enc_q[static_cast<size_t>(i)].emb.data.end(), q.row(i));
    for (int j = 0; j < p; ++j)
        std::copy(enc_c[static_cast<size_t>(j)].emb.data.begin(),
                  enc_c[static_cast<size_t>(j)].emb.data.end(), c.row(j));

    auto lg = pool_softmax_loss(q, c, pos_index, cfg.tau);
    double loss = lg.loss;
    if (cfg.bidirectional_stage2) {
        // reverse direction: each positive candidate against the query pool
        std::vector<int> rev(static_cast<size_t>(b));
        Tensor<S> cpos({b, d});
        for (int i = 0; i < b; ++i) {
            std::copy(c.row(pos_index[static_cast<size_t>(i)]),
                      c.row(pos_index[static_cast<size_t>(i)]) + d, cpos.row(i));
            rev[static_cast<size_t>(i)] = i;
        }
        auto lg2 = pool_softmax_loss(cpos, q, rev, cfg.tau);
        loss += lg2.loss;
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < d; ++j) {
                lg.d_q.row(i)[j] += lg2.d_c.row(i)[j];
                lg.d_c.row(pos_index[static_cast<size_t>(i)])[j] += lg2.d_q.row(i)[j];
            }
    }

    std::vector<GradStore<S>> parts(static_cast<size_t>(b + p), GradStore<S>(model.params));
#pragma omp parallel for num_threads(exec::threads()) schedule(dynamic) if (exec::parallel_enabled())
    for (int i = 0; i < b + p; ++i) {
        Tensor<S> de({d});
        if (i < b) {
            std::copy(lg.d_q.row(i), lg.d_q.row(i) + d, de.data.begin());
            model.encode_backward(enc_q[static_cast<size_t>(i)], de, parts[static_cast<size_t>(i)]);
        } else {
            std::copy(lg.d_c.row(i - b), lg.d_c.row(i - b) + d, de.data.begin());
            model.encode_backward(enc_c[static_cast<size_t>(i - b)], de,
                                  parts[static_cast<size_t>(i)]);
        }
    }
    for (const auto& part : parts) gs.add(part);
    return loss;
}

// ---------------------------------------------------------------------
// Trainer: owns the optimizer; one call per step.

template <typename S>
class Trainer {
public:
    Trainer(Model<S>& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
        cfg_.validate();
        apply_stage_partition();
    }

    double stage1_step(const std::vector<TokenSequence>& texts,
                       const std::vector<ImageGrid>& images, int step) {
        if (cfg_.stage != Stage::Stage1) throw InputError("stage1_step: wrong stage");
        GradStore<S> gs(model_.params);
        double loss = stage1_forward_backward(model_, texts, images, cfg_, step, gs);
        apply(gs, step);
        return loss;
    }

    double stage2_step(const TrainingBatch& batch, int step) {
        if (cfg_.stage != Stage::Stage2) throw InputError("stage2_step: wrong stage");
        GradStore<S> gs(model_.params);
        double loss = stage2_forward_backward(model_, batch, cfg_, gs);
        apply(gs, step);
        return loss;
    }

    double finetune_step(const TrainingBatch& batch, int step) {
        if (cfg_.stage != Stage::Finetune) throw InputError("finetune_step: wrong stage");
        GradStore<S> gs(model_.params);
        double loss = stage2_forward_backward(model_, batch, cfg_, gs);
        apply(gs, step);
        return loss;
    }

    AdamW<S>& optimizer() { return opt_; }
    const TrainConfig& config() const { return cfg_; }

private:
    void apply_stage_partition() {
        model_.params.text_trainable = (cfg_.stage == Stage::Finetune);
        model_.params.vis_trainable = true;
    }

    void apply(GradStore<S>& gs, int step) {
        clip_global_norm(gs, cfg_.clip_norm);
        opt_.step(param_refs(model_.params), gs, lr_at(step, cfg_), cfg_.weight_decay);
    }

    Model<S>& model_;
    TrainConfig cfg_;
    AdamW<S> opt_;
};

}  // namespace vista
