#include "qh/mlp.hpp"

#include "qh/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace qh {

void MlpGrads::set_zero() {
    for (auto& g : w) g.setZero();
    for (auto& g : b) g.setZero();
}

bool MlpGrads::all_finite() const {
    for (const auto& g : w)
        if (!g.allFinite()) return false;
    for (const auto& g : b)
        if (!g.allFinite()) return false;
    return true;
}

namespace {

std::vector<std::pair<int, int>> layer_dims(const MlpShape& s) {
    if (s.in <= 0 || s.hidden <= 0 || s.out <= 0 || s.n_hidden < 1)
        throw std::invalid_argument("Mlp: bad shape");
    std::vector<std::pair<int, int>> dims;
    dims.emplace_back(s.in, s.hidden);
    for (int l = 1; l < s.n_hidden; ++l) dims.emplace_back(s.hidden, s.hidden);
    dims.emplace_back(s.hidden, s.out);
    return dims;
}

}  // namespace

Mlp Mlp::glorot(const MlpShape& shape, Rng& rng) {
    Mlp net;
    for (const auto& [fan_in, fan_out] : layer_dims(shape)) {
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        MatrixXd w(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i)
            for (int j = 0; j < fan_out; ++j)
                w(i, j) = bound * (2.0 * rng.next_uniform() - 1.0);
        net.w.push_back(std::move(w));
        net.b.push_back(RowVectorXd::Zero(fan_out));
    }
    return net;
}

Mlp Mlp::zeros(const MlpShape& shape) {
    Mlp net;
    for (const auto& [fan_in, fan_out] : layer_dims(shape)) {
        net.w.push_back(MatrixXd::Zero(fan_in, fan_out));
        net.b.push_back(RowVectorXd::Zero(fan_out));
    }
    return net;
}

MatrixXd Mlp::forward(const MatrixXd& x) const {
    Cache cache;
    return forward(x, cache);
}

MatrixXd Mlp::forward(const MatrixXd& x, Cache& cache) const {
    if (x.cols() != input_dim()) throw std::invalid_argument("Mlp::forward: dimension mismatch");
    const int L = n_layers();
    cache.act.resize(L);
    cache.act[0] = x;
    for (int l = 0; l < L - 1; ++l) {
        MatrixXd z = (cache.act[l] * w[l]).rowwise() + b[l];
        z = z.cwiseMax(0.0);
        if (l + 1 < L) cache.act[l + 1] = std::move(z);
    }
    return (cache.act[L - 1] * w[L - 1]).rowwise() + b[L - 1];
}

void Mlp::backward(const Cache& cache, const MatrixXd& dout, MlpGrads& grads) const {
    const int L = n_layers();
    MatrixXd delta = dout;
    for (int l = L - 1; l >= 0; --l) {
        grads.w[l].noalias() += cache.act[l].transpose() * delta;
        grads.b[l] += delta.colwise().sum();
        if (l > 0) {
            MatrixXd prev = delta * w[l].transpose();
            // post-ReLU activations > 0 iff pre-activations > 0
            delta = (cache.act[l].array() > 0.0).cast<double>() * prev.array();
        }
    }
}

MlpGrads Mlp::zero_grads() const {
    MlpGrads g;
    for (const auto& wl : w) g.w.push_back(MatrixXd::Zero(wl.rows(), wl.cols()));
    for (const auto& bl : b) g.b.push_back(RowVectorXd::Zero(bl.cols()));
    return g;
}

long Mlp::param_count() const {
    long n = 0;
    for (const auto& wl : w) n += wl.size();
    for (const auto& bl : b) n += bl.size();
    return n;
}

void adam_update(Eigen::Ref<MatrixXd> param, const MatrixXd& grad, AdamMoments& mom,
                 long t, double lr, const AdamConfig& cfg) {
    mom.m = cfg.beta1 * mom.m + (1.0 - cfg.beta1) * grad;
    mom.v = cfg.beta2 * mom.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    param.array() -=
        lr * (mom.m.array() / bc1) / ((mom.v.array() / bc2).sqrt() + cfg.eps);
}

}  // namespace qh
