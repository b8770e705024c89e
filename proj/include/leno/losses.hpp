#pragma once

#include "leno/sodnet.hpp"

namespace leno {

struct LossConfig {
    double lambda = 0.1;  // MSE weight in the noise loss
    int side_count = 3;
};

// L_noise = BCE(N_est, N_gt) + lambda * MSE(N_est, N_gt)
template <class T>
Var<T> loss_noise(const Var<T>& n_est, const Var<T>& n_gt, T lambda) {
    if (lambda < T(0)) throw ConfigError("loss_noise lambda must be >= 0");
    return add(bce(n_est, n_gt), scale(mse(n_est, n_gt), lambda));
}

// L_side = sum_{i=1..3} BCE(S_i, G)
template <class T>
Var<T> loss_side(const std::array<Var<T>, 3>& sides, const Var<T>& mask) {
    Var<T> total = bce(sides[0], mask);
    for (int i = 1; i < 3; ++i) total = add(total, bce(sides[i], mask));
    return total;
}

// L_pred = BCE(S, G)
template <class T>
Var<T> loss_pred(const Var<T>& pred, const Var<T>& mask) {
    return bce(pred, mask);
}

// L = L_noise + L_side + L_pred
template <class T>
Var<T> loss_total(const Var<T>& l_noise, const Var<T>& l_side, const Var<T>& l_pred) {
    return add(add(l_noise, l_side), l_pred);
}

} // namespace leno
