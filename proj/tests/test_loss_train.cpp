#include <doctest.h>

#include <cmath>

#include "vista/loss.hpp"
#include "vista/train.hpp"

using namespace vista;

namespace {

Tensor<float> unit_rows(int b, int d, uint64_t seed) {
    Tensor<float> t({b, d});
    Rng rng(seed, "rows");
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < d; ++j) t.row(i)[j] = static_cast<float>(rng.next_normal());
        kernels::l2_normalize(t.row(i), t.row(i), d);
    }
    return t;
}

}  // namespace

TEST_CASE("identical-embedding batches give loss = ln|B| exactly") {
    for (int b : {2, 3, 8}) {
        Tensor<float> u({b, 4});
        for (int i = 0; i < b; ++i) {
            u.row(i)[0] = 1.0f;  // every row is the same unit vector
        }
        auto lg = contrastive_loss(u, u, 0.02);
        CHECK(std::abs(lg.loss - std::log(static_cast<double>(b))) <= 1e-12);
    }
}

TEST_CASE("|B|=1 self-pair has zero loss") {
    Tensor<float> u({1, 4});
    u.row(0)[0] = 1.0f;
    auto lg = contrastive_loss(u, u, 0.02);
    CHECK(std::abs(lg.loss) <= 1e-12);
}

TEST_CASE("orthogonal positives at tau=0.02 are essentially solved") {
    const int b = 4;
    Tensor<float> u({b, 8});
    for (int i = 0; i < b; ++i) u.row(i)[i] = 1.0f;  // orthonormal rows
    auto lg = contrastive_loss(u, u, 0.02);
    CHECK(lg.loss <= 1e-12);
    CHECK(lg.loss >= 0.0);
}

TEST_CASE("no-log loss form matches its closed form on identical batches") {
    // -(1/B) sum softmax(..)_ii with all-equal logits = -1/B
    for (int b : {2, 5}) {
        Tensor<float> u({b, 4});
        for (int i = 0; i < b; ++i) u.row(i)[0] = 1.0f;
        auto lg = contrastive_loss(u, u, 0.02, LossForm::PaperLiteral);
        CHECK(std::abs(lg.loss + 1.0 / b) <= 1e-12);
    }
}

TEST_CASE("contrastive loss rejects bad inputs") {
    Tensor<float> u({2, 4}), v({3, 4});
    CHECK_THROWS_AS(contrastive_loss(u, v, 0.02), InputError);
    Tensor<float> w({2, 4});
    CHECK_THROWS_AS(contrastive_loss(u, w, 0.0), InputError);
    CHECK_THROWS_AS(contrastive_loss(u, w, -1.0), InputError);
}

TEST_CASE("pool softmax loss equals in-batch loss when pool == positives") {
    const int b = 3, d = 6;
    Tensor<float> q = unit_rows(b, d, 1), c = unit_rows(b, d, 2);
    auto pooled = pool_softmax_loss(q, c, {0, 1, 2}, 0.02);
    auto inbatch = contrastive_loss(q, c, 0.02);
    CHECK(pooled.loss == doctest::Approx(inbatch.loss).epsilon(1e-12));
}

TEST_CASE("extra hard negatives can only shrink the positive's probability") {
    const int b = 2, d = 6;
    Tensor<float> q = unit_rows(b, d, 3), c = unit_rows(b, d, 4);
    auto small = pool_softmax_loss(q, c, {0, 1}, 0.5);
    Tensor<float> cbig({b + 2, d});
    Tensor<float> extra = unit_rows(2, d, 5);
    for (int i = 0; i < b; ++i) std::copy(c.row(i), c.row(i) + d, cbig.row(i));
    for (int i = 0; i < 2; ++i) std::copy(extra.row(i), extra.row(i) + d, cbig.row(b + i));
    auto big = pool_softmax_loss(q, cbig, {0, 1}, 0.5);
    CHECK(big.loss >= small.loss - 1e-12);
}

TEST_CASE("lr schedule decays linearly and rejects out-of-range steps") {
    TrainConfig tc;
    tc.lr_init = 2e-5;
    tc.total_steps = 600;
    CHECK(lr_at(0, tc) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(lr_at(300, tc) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(lr_at(600, tc) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at(-1, tc), InputError);
    CHECK_THROWS_AS(lr_at(601, tc), InputError);
}

TEST_CASE("masked/unmasked phase split defaults to 70/30") {
    TrainConfig tc;
    tc.total_steps = 600;
    CHECK(tc.masked_phase_steps() == 420);
    tc.total_steps = 10;
    CHECK(tc.masked_phase_steps() == 7);
    tc.unmasked_steps = 2;
    CHECK(tc.masked_phase_steps() == 8);
}

TEST_CASE("adamw follows the hand-computed recurrence") {
    // one parameter array of two entries, one step
    Tensor<float> w({2});
    w.data = {1.0f, -2.0f};
    GradStore<float> gs;
    Tensor<float> g({2});
    g.data = {0.5f, -0.25f};
    gs.grads.emplace("p", g);

    AdamW<float> opt;
    const double lr = 0.1, wd = 0.01;
    std::vector<ParamRef<float>> refs = {{"p", &w, true}};
    opt.step(refs, gs, lr, wd);

    for (int i = 0; i < 2; ++i) {
        const double gi = g.data[static_cast<size_t>(i)];
        const double m = 0.1 * gi;            // (1-beta1)*g
        const double v = 0.001 * gi * gi;     // (1-beta2)*g^2
        const double mhat = m / (1 - 0.9);    // t = 1
        const double vhat = v / (1 - 0.999);
        const double w0 = i == 0 ? 1.0 : -2.0;
        const double expect = w0 - lr * (mhat / (std::sqrt(vhat) + 1e-8) + wd * w0);
        CHECK(w.data[static_cast<size_t>(i)] ==
              doctest::Approx(expect).epsilon(1e-6));
    }
    CHECK(opt.t == 1);
}

TEST_CASE("optimizer rejects gradients for frozen or unknown arrays") {
    Tensor<float> w({2});
    GradStore<float> gs;
    Tensor<float> g({2});
    gs.grads.emplace("frozen", g);
    std::vector<ParamRef<float>> refs = {{"frozen", &w, false}};
    AdamW<float> opt;
    CHECK_THROWS_AS(opt.step(refs, gs, 0.1, 0.0), InputError);

    GradStore<float> gs2;
    gs2.grads.emplace("mystery", g);
    std::vector<ParamRef<float>> refs2 = {{"p", &w, true}};
    CHECK_THROWS_AS(opt.step(refs2, gs2, 0.1, 0.0), InputError);
}

TEST_CASE("global norm clipping scales gradients to the bound") {
    GradStore<float> gs;
    Tensor<float> g({4});
    g.data = {3.0f, 4.0f, 0.0f, 0.0f};  // norm 5
    gs.grads.emplace("p", g);
    double norm = clip_global_norm(gs, 1.0);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-6));
    double after = 0.0;
    for (float v : gs.grads.at("p").data) after += static_cast<double>(v) * v;
    CHECK(std::sqrt(after) == doctest::Approx(1.0).epsilon(1e-5));

    GradStore<float> gs2;
    Tensor<float> g2({2});
    g2.data = {0.3f, 0.4f};
    gs2.grads.emplace("p", g2);
    clip_global_norm(gs2, 1.0);
    CHECK(gs2.grads.at("p").data == std::vector<float>{0.3f, 0.4f});  // untouched below bound
}

TEST_CASE("training batches validate hard-negative consistency") {
    TrainingBatch b;
    TrainItem q, c;
    q.id = "q0";
    c.id = "c0";
    b.queries = {q};
    b.candidates = {c};
    TrainItem dup = c;
    b.hard_negative_groups = {{dup}};
    CHECK_THROWS_AS(b.validate(), InputError);  // negative equals positive

    b.hard_negative_groups = {{}};
    CHECK_THROWS_AS(b.validate(), InputError);  // |B|=1 with no negatives
}
