#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "leno/data_io.hpp"
#include "leno/losses.hpp"

namespace leno {

enum class Alternation { per_batch, per_epoch };

struct TrainConfig {
    double lr = 0.05;
    int epochs_phase1 = 20;
    int epochs_phase2 = 10;
    int batch_size = 8;
    std::uint64_t seed = 0;
    Alternation alternation = Alternation::per_batch;
    LossConfig loss;

    void validate() const {
        if (lr <= 0.0) throw ConfigError("train lr must be positive");
        if (epochs_phase1 < 1 || epochs_phase2 < 1)
            throw ConfigError("train epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train batch_size must be >= 1");
        if (loss.lambda < 0.0) throw ConfigError("loss lambda must be >= 0");
    }
};

// One line of the training log; serialized as line-delimited JSON.
struct TrainRecord {
    int phase = 0, epoch = 0, batch = 0;
    double l_noise = 0, l_side = 0, l_pred = 0, l_total = 0;
    std::string updated_partition;
};

using TrainLog = std::vector<TrainRecord>;

std::string record_to_json(const TrainRecord& r);

// Phase 1: objective L_side + L_pred on clean images, alternating SGD steps
// between theta_n and theta_w (even batch -> theta_n, odd -> theta_w).
TrainLog train_phase1(SodModelF& model, const Dataset& ds, const TrainConfig& cfg,
                      std::ostream* log = nullptr);

// Phase 2: full objective L = L_noise + L_side + L_pred with the stem and
// w1/w2 frozen; the noise ground truth is recomputed per batch from the
// frozen noise path.
TrainLog train_phase2(SodModelF& model, const Dataset& ds, const TrainConfig& cfg,
                      std::ostream* log = nullptr);

// Undefended comparator: single phase on L_side + L_pred, stepping every
// parameter each batch (no alternation). Runs cfg.epochs_phase1 epochs.
TrainLog train_baseline(SodModelF& model, const Dataset& ds, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

} // namespace leno
