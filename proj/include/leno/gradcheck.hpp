#pragma once

#include <functional>
#include <vector>

#include "leno/ops.hpp"

namespace leno {

// Central-difference check of reverse-mode gradients. `loss_fn` rebuilds the
// scalar loss from the current leaf values on every call. Probes up to
// `max_probes_per_leaf` coordinates per leaf (seeded subsample when smaller
// than the leaf). Returns max over probed coordinates of
// |analytic - numeric| / max(1, |numeric|). 64-bit mode only.
struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t probes = 0;
};

inline GradcheckResult gradcheck(const std::function<VarD()>& loss_fn,
                                 const std::vector<VarD>& leaves,
                                 std::size_t max_probes_per_leaf = SIZE_MAX,
                                 std::uint64_t probe_seed = 0,
                                 double h = 1e-5) {
    for (const auto& leaf : leaves) leaf.node()->grad = TensorD();
    VarD loss = loss_fn();
    backward(loss);

    std::vector<TensorD> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) {
        leaf.node()->ensure_grad();
        analytic.push_back(leaf.node()->grad);
    }

    Rng rng(probe_seed);
    GradcheckResult res;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& value = leaves[li].node()->value;
        std::vector<std::size_t> idx;
        if (value.numel() <= max_probes_per_leaf) {
            idx.resize(value.numel());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        } else {
            for (std::size_t i = 0; i < max_probes_per_leaf; ++i)
                idx.push_back(static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<int>(value.numel()) - 1)));
        }
        for (std::size_t i : idx) {
            const double saved = value.data[i];
            value.data[i] = saved + h;
            const double up = loss_fn().value().data[0];
            value.data[i] = saved - h;
            const double down = loss_fn().value().data[0];
            value.data[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double err = std::abs(analytic[li].data[i] - numeric) /
                               std::max(1.0, std::abs(numeric));
            res.max_rel_error = std::max(res.max_rel_error, err);
            ++res.probes;
        }
    }
    return res;
}

} // namespace leno
