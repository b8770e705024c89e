#include "leno/training.hpp"

#include <numeric>
#include <ostream>

#include "json.hpp"

namespace leno {

namespace {

void require_clean(const Dataset& ds) {
    if (ds.empty()) throw ConfigError("training dataset is empty");
    for (const auto& s : ds.samples)
        if (s.provenance.adversarial)
            throw ConfigError("training requires clean samples; " + s.id + " is adversarial");
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

struct BatchLoss {
    VarF total;  // mean per-sample loss, ready for backward
    double l_noise = 0, l_side = 0, l_pred = 0, l_total = 0;
};

// with_noise selects the full objective (noise + side + pred); otherwise L_side + L_pred.
BatchLoss batch_loss(SodModelF& model, const Dataset& ds, const std::vector<std::size_t>& order,
                     std::size_t begin, std::size_t end, const LossConfig& lc, bool with_noise) {
    BatchLoss out;
    VarF sum;
    const float inv = 1.0f / static_cast<float>(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
        const Sample& s = ds.samples[order[k]];
        auto fwd = forward(model, VarF(s.image));
        VarF mask(s.mask, false);
        VarF ls = loss_side(fwd.sides, mask);
        VarF lp = loss_pred(fwd.pred, mask);
        VarF sample_total = add(ls, lp);
        out.l_side += ls.value()[0];
        out.l_pred += lp.value()[0];
        if (with_noise) {
            VarF n_gt(noise_gt(fwd.f_tilde.value()), false);
            VarF ln = loss_noise(fwd.noise_est, n_gt, static_cast<float>(lc.lambda));
            out.l_noise += ln.value()[0];
            sample_total = add(sample_total, ln);
        }
        out.l_total += sample_total.value()[0];
        sum = sum.valid() ? add(sum, sample_total) : sample_total;
    }
    out.l_noise *= inv;
    out.l_side *= inv;
    out.l_pred *= inv;
    out.l_total *= inv;
    out.total = scale(sum, inv);
    return out;
}

void emit(TrainLog& log, std::ostream* stream, TrainRecord rec) {
    if (stream) *stream << record_to_json(rec) << "\n";
    log.push_back(std::move(rec));
}

TrainLog run_epochs(SodModelF& model, const Dataset& ds, const TrainConfig& cfg, int phase,
                    int epochs, bool with_noise, bool alternate,
                    const std::vector<VarF>& fixed_partition, const char* fixed_name,
                    std::ostream* stream) {
    cfg.validate();
    require_clean(ds);

    const auto theta_n = model.theta_n();
    const auto theta_w = model.theta_w();
    const auto all = model.all_params();

    TrainLog log;
    Rng perm_rng(cfg.seed);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto order = epoch_order(ds.size(), perm_rng);
        int batch_index = 0;
        for (std::size_t begin = 0; begin < ds.size();
             begin += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
            const std::size_t end =
                std::min(ds.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            for (auto v : all) v.zero_grad();

            BatchLoss bl = batch_loss(model, ds, order, begin, end, cfg.loss, with_noise);
            backward(bl.total);

            TrainRecord rec{phase, epoch, batch_index, bl.l_noise, bl.l_side, bl.l_pred,
                            bl.l_total, ""};
            if (alternate) {
                const int parity =
                    cfg.alternation == Alternation::per_batch ? batch_index : epoch;
                const bool step_n = parity % 2 == 0;
                sgd_step(step_n ? theta_n : theta_w, static_cast<float>(cfg.lr));
                rec.updated_partition = step_n ? "theta_n" : "theta_w";
            } else {
                sgd_step(fixed_partition, static_cast<float>(cfg.lr));
                rec.updated_partition = fixed_name;
            }
            emit(log, stream, std::move(rec));
        }
    }
    return log;
}

} // namespace

std::string record_to_json(const TrainRecord& r) {
    nlohmann::json j = {{"phase", r.phase},     {"epoch", r.epoch},
                        {"batch", r.batch},     {"l_noise", r.l_noise},
                        {"l_side", r.l_side},   {"l_pred", r.l_pred},
                        {"l_total", r.l_total}, {"updated_partition", r.updated_partition}};
    return j.dump();
}

TrainLog train_phase1(SodModelF& model, const Dataset& ds, const TrainConfig& cfg,
                      std::ostream* log) {
    return run_epochs(model, ds, cfg, 1, cfg.epochs_phase1, false, true, {}, "", log);
}

TrainLog train_phase2(SodModelF& model, const Dataset& ds, const TrainConfig& cfg,
                      std::ostream* log) {
    return run_epochs(model, ds, cfg, 2, cfg.epochs_phase2, true, false,
                      freeze_for_phase2(model), "theta_n_unfrozen", log);
}

TrainLog train_baseline(SodModelF& model, const Dataset& ds, const TrainConfig& cfg,
                        std::ostream* log) {
    return run_epochs(model, ds, cfg, 0, cfg.epochs_phase1, false, false, model.all_params(),
                      "all", log);
}

} // namespace leno
