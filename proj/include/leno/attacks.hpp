#pragma once

#include <string>
#include <vector>

#include "leno/data_io.hpp"

namespace leno {

enum class AttackKind { fgsm, pgd, rosa };

inline const char* to_string(AttackKind k) {
    switch (k) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::pgd: return "pgd";
        case AttackKind::rosa: return "rosa";
    }
    return "?";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "fgsm") return AttackKind::fgsm;
    if (s == "pgd") return AttackKind::pgd;
    if (s == "rosa") return AttackKind::rosa;
    throw ConfigError("unknown attack kind: " + s);
}

// All step sizes live on the [0,1] pixel scale; the bound of 20 is read as
// 20/255 for 8-bit images.
struct AttackSpec {
    AttackKind kind = AttackKind::pgd;
    double epsilon = 20.0 / 255.0;  // L-inf bound
    double step = 0.04;             // a (PGD), alpha (ROSA), epsilon-step (FGSM)
    int max_iters = 10;             // PGD/ROSA only

    static AttackSpec defaults(AttackKind k) {
        AttackSpec s;
        s.kind = k;
        switch (k) {
            case AttackKind::fgsm:
                s.step = std::min(0.3, s.epsilon);
                s.max_iters = 1;
                break;
            case AttackKind::pgd:
                s.step = 0.04;
                s.max_iters = 10;
                break;
            case AttackKind::rosa:
                s.step = 0.1;
                s.max_iters = 30;
                break;
        }
        return s;
    }

    void validate() const {
        if (epsilon <= 0.0 || epsilon > 1.0)
            throw ConfigError("attack epsilon must be in (0,1]");
        if (step < 0.0) throw ConfigError("attack step must be >= 0");
        if (max_iters < 1) throw ConfigError("attack max_iters must be >= 1");
        if (kind != AttackKind::fgsm && step > 2.0 * epsilon)
            throw ConfigError("iterative attack step must be <= 2*epsilon");
    }
};

struct AdvResult {
    TensorF adv_image;
    double linf = 0;                 // achieved max |adv - x|
    int iters_run = 0;
    std::vector<double> loss_trace;  // per-iteration loss values
    std::vector<double> step_linf;   // per-iteration perturbation norms (ROSA)
};

// One sign step followed by projection onto the eps ball around origin,
// intersected with [0,1]. Shared by FGSM and PGD so one PGD iteration is
// bitwise FGSM.
TensorF sign_step_project(const TensorF& current, const TensorF& grad, const TensorF& origin,
                          double step, double epsilon);

// +2 for still-correct background pixels, -2 for still-correct salient pixels,
// 0 for already-wrong pixels (correct means (S >= 0.5) == (G == 1)).
TensorF rosa_weight_map(const TensorF& pred, const TensorF& mask);

AdvResult fgsm(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
               const AttackSpec& spec);
AdvResult pgd(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
              const AttackSpec& spec);
AdvResult rosa_attack(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
                      const AttackSpec& spec);
AdvResult run_attack(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
                     const AttackSpec& spec);

// Attacks every sample; writes the adversarial dataset (PNG + manifest with
// attack provenance) when out_dir is non-empty. Per-sample failures are
// recorded and the batch continues.
Dataset attack_dataset(SodModelF& model, const Dataset& ds, const AttackSpec& spec,
                       const std::filesystem::path& out_dir, int jobs = 1);

} // namespace leno
