#pragma once

#include <cmath>
#include <vector>

#include "vista/errors.hpp"
#include "vista/kernels.hpp"
#include "vista/tensor.hpp"

namespace vista {

enum class LossForm {
    InfoNCE,       // -(1/B) sum_i log softmax(u_i·v_j/tau)[i]
    PaperLiteral,  // -(1/B) sum_i softmax(u_i·v_j/tau)[i]  (no log)
};

template <typename S>
struct LossGrad {
    double loss = 0.0;
    Tensor<S> d_u, d_v;
};

// In-batch contrastive loss over row-aligned embedding matrices U, V
// (B×d). Logits are computed and reduced in double with max-subtraction.
template <typename S>
LossGrad<S> contrastive_loss(const Tensor<S>& u, const Tensor<S>& v, double tau,
                             LossForm form = LossForm::InfoNCE) {
    if (tau <= 0.0) throw InputError("contrastive_loss: tau must be positive");
    const int b = u.rows();
    const int d = u.cols();
    if (b < 1 || v.rows() != b || v.cols() != d)
        throw InputError("contrastive_loss: U/V size mismatch");

    std::vector<double> probs(static_cast<size_t>(b) * b);
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        double* p = probs.data() + static_cast<size_t>(i) * b;
        double mx = -1e300;
        for (int j = 0; j < b; ++j) {
            p[j] = kernels::dot(u.row(i), v.row(j), d) / tau;
            mx = std::max(mx, p[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < b; ++j) {
            p[j] = std::exp(p[j] - mx);
            sum += p[j];
        }
        for (int j = 0; j < b; ++j) p[j] /= sum;
        if (form == LossForm::InfoNCE)
            loss += -std::log(p[i]);
        else
            loss += -p[i];
    }
    loss /= b;
    if (!std::isfinite(loss)) throw NumericError("contrastive_loss: non-finite loss");

    LossGrad<S> out;
    out.loss = loss;
    out.d_u = Tensor<S>({b, d});
    out.d_v = Tensor<S>({b, d});
    // dlogits, then chain through logits = u·v / tau
    std::vector<double> dlogits(static_cast<size_t>(b) * b);
    for (int i = 0; i < b; ++i) {
        const double* p = probs.data() + static_cast<size_t>(i) * b;
        double* dl = dlogits.data() + static_cast<size_t>(i) * b;
        if (form == LossForm::InfoNCE) {
            for (int j = 0; j < b; ++j) dl[j] = (p[j] - (i == j ? 1.0 : 0.0)) / b;
        } else {
            // d(-p_ii)/dlogit_ik = -p_ii (delta_ik - p_ik)
            for (int j = 0; j < b; ++j)
                dl[j] = -p[i] * ((i == j ? 1.0 : 0.0) - p[j]) / b;
        }
    }
    for (int i = 0; i < b; ++i) {
        const double* dl = dlogits.data() + static_cast<size_t>(i) * b;
        S* du = out.d_u.row(i);
        for (int j = 0; j < b; ++j) {
            const double c = dl[j] / tau;
            const S* vj = v.row(j);
            S* dv = out.d_v.row(j);
            const S* ui = u.row(i);
            for (int t = 0; t < d; ++t) {
                du[t] += static_cast<S>(c * vj[t]);
                dv[t] += static_cast<S>(c * ui[t]);
            }
        }
    }
    return out;
}

template <typename S>
struct PoolLossGrad {
    double loss = 0.0;
    Tensor<S> d_q;  // (B, d)
    Tensor<S> d_c;  // (P, d)
};

// One-directional softmax of each query against a shared candidate pool;
// pos_index[i] is the row of query i's positive in C.
template <typename S>
PoolLossGrad<S> pool_softmax_loss(const Tensor<S>& q, const Tensor<S>& c,
                                  const std::vector<int>& pos_index, double tau) {
    if (tau <= 0.0) throw InputError("pool_softmax_loss: tau must be positive");
    const int b = q.rows();
    const int p = c.rows();
    const int d = q.cols();
    if (static_cast<int>(pos_index.size()) != b || c.cols() != d || p < 1)
        throw InputError("pool_softmax_loss: size mismatch");

    PoolLossGrad<S> out;
    out.d_q = Tensor<S>({b, d});
    out.d_c = Tensor<S>({p, d});
    std::vector<double> probs(static_cast<size_t>(p));
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        double mx = -1e300;
        for (int j = 0; j < p; ++j) {
            probs[static_cast<size_t>(j)] = kernels::dot(q.row(i), c.row(j), d) / tau;
            mx = std::max(mx, probs[static_cast<size_t>(j)]);
        }
        double sum = 0.0;
        for (int j = 0; j < p; ++j) {
            probs[static_cast<size_t>(j)] = std::exp(probs[static_cast<size_t>(j)] - mx);
            sum += probs[static_cast<size_t>(j)];
        }
        for (int j = 0; j < p; ++j) probs[static_cast<size_t>(j)] /= sum;
        loss += -std::log(probs[static_cast<size_t>(pos_index[static_cast<size_t>(i)])]);

        S* dq = out.d_q.row(i);
        const S* qi = q.row(i);
        for (int j = 0; j < p; ++j) {
            double dl =
                (probs[static_cast<size_t>(j)] -
                 (j == pos_index[static_cast<size_t>(i)] ? 1.0 : 0.0)) /
                (static_cast<double>(b) * tau);
            const S* cj = c.row(j);
            S* dc = out.d_c.row(j);
            for (int t = 0; t < d; ++t) {
                dq[t] += static_cast<S>(dl * cj[t]);
                dc[t] += static_cast<S>(dl * qi[t]);
            }
        }
    }
    out.loss = loss / b;
    if (!std::isfinite(out.loss)) throw NumericError("pool_softmax_loss: non-finite loss");
    return out;
}

}  // namespace vista
