#pragma once

#include <Eigen/Dense>

#include <vector>

namespace qh {

class Rng;

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

struct MlpShape {
    int in = 0;
    int hidden = 0;
    int out = 0;
    int n_hidden = 4;
};

struct MlpGrads {
    std::vector<MatrixXd> w;
    std::vector<RowVectorXd> b;

    void set_zero();
    bool all_finite() const;
};

/// Plain feedforward network: n_hidden ReLU layers of equal width and a
/// linear output layer. Batched evaluation, rows are samples. ReLU at
/// exactly zero uses subgradient 0.
class Mlp {
public:
    Mlp() = default;

    static Mlp glorot(const MlpShape& shape, Rng& rng);
    static Mlp zeros(const MlpShape& shape);

    MatrixXd forward(const MatrixXd& x) const;

    struct Cache {
        std::vector<MatrixXd> act;  // act[0] = input, act[l] = post-ReLU of layer l
    };

    MatrixXd forward(const MatrixXd& x, Cache& cache) const;

    /// Accumulates dLoss/dparams into `grads` given dLoss/doutput.
    void backward(const Cache& cache, const MatrixXd& dout, MlpGrads& grads) const;

    MlpGrads zero_grads() const;
    long param_count() const;

    int input_dim() const { return w.empty() ? 0 : static_cast<int>(w.front().rows()); }
    int output_dim() const { return w.empty() ? 0 : static_cast<int>(w.back().cols()); }
    int n_layers() const { return static_cast<int>(w.size()); }

    std::vector<MatrixXd> w;     // per affine layer, fan_in x fan_out
    std::vector<RowVectorXd> b;  // per affine layer
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    MatrixXd m;
    MatrixXd v;

    static AdamMoments like(const MatrixXd& p) {
        return {MatrixXd::Zero(p.rows(), p.cols()), MatrixXd::Zero(p.rows(), p.cols())};
    }
};

/// One Adam update of a single tensor; `t` is the 1-based step count.
void adam_update(Eigen::Ref<MatrixXd> param, const MatrixXd& grad, AdamMoments& mom,
                 long t, double lr, const AdamConfig& cfg = {});

}  // namespace qh
