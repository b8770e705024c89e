#include "leno/attacks.hpp"

#include <iostream>
#include <thread>

namespace leno {

namespace {

// Disables weight gradients for the duration of an attack: the model is
// frozen, only the input needs a gradient, and attack workers may then share
// the weights across threads. Only flags that are actually true get flipped,
// so guards nest: inner guards on worker threads see already-frozen weights
// and touch nothing.
class WeightFreezeGuard {
public:
    explicit WeightFreezeGuard(SodModelF& model) {
        for (auto& v : model.all_params()) {
            if (!v.node()->requires_grad) continue;
            nodes_.push_back(v.node());
            v.node()->requires_grad = false;
        }
    }
    ~WeightFreezeGuard() {
        for (auto& n : nodes_) n->requires_grad = true;
    }

private:
    std::vector<std::shared_ptr<Node<float>>> nodes_;
};

TensorF input_gradient(const VarF& image_var, const VarF& loss) {
    backward(loss);
    if (image_var.grad().data.empty())
        return TensorF(image_var.value().shape, 0.0f);
    const TensorF& g = image_var.grad();
    if (!g.all_finite()) throw AttackError("non-finite input gradient");
    return g;
}

double linf_distance(const TensorF& a, const TensorF& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

void check_bounds(const TensorF& adv, const TensorF& origin, double epsilon) {
    for (std::size_t i = 0; i < adv.numel(); ++i) {
        if (adv.data[i] < 0.0f || adv.data[i] > 1.0f)
            throw AttackError("iterate escaped the [0,1] pixel range");
        if (std::abs(static_cast<double>(adv.data[i]) - origin.data[i]) > epsilon + 1e-6)
            throw AttackError("iterate escaped the epsilon ball");
    }
}

} // namespace

TensorF sign_step_project(const TensorF& current, const TensorF& grad, const TensorF& origin,
                          double step, double epsilon) {
    TensorF out = current;
    const float s = static_cast<float>(step);
    const float eps = static_cast<float>(epsilon);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        float v = out.data[i] + s * sign_of(grad.data[i]);
        v = std::clamp(v, origin.data[i] - eps, origin.data[i] + eps);
        out.data[i] = std::clamp(v, 0.0f, 1.0f);
    }
    return out;
}

TensorF rosa_weight_map(const TensorF& pred, const TensorF& mask) {
    if (!pred.same_shape(mask)) throw DimensionError("rosa_weight_map shape mismatch");
    TensorF w(pred.shape);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const bool salient = mask.data[i] >= 0.5f;
        const bool correct = (pred.data[i] >= 0.5f) == salient;
        if (!correct) continue;
        // objective per pixel: g_{1-y} - g_y with g_1 = S, g_0 = 1 - S
        w.data[i] = salient ? -2.0f : 2.0f;
    }
    return w;
}

namespace {

AdvResult iterative_sign_attack(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
                                const AttackSpec& spec, int iters) {
    WeightFreezeGuard freeze(model);
    AdvResult res;
    res.adv_image = image;
    VarF mask(mask_gt, false);
    for (int t = 0; t < iters; ++t) {
        VarF x(res.adv_image, true);
        auto out = forward(model, x);
        VarF loss = bce(out.pred, mask);
        res.loss_trace.push_back(loss.value()[0]);
        TensorF grad = input_gradient(x, loss);
        res.adv_image = sign_step_project(res.adv_image, grad, image, spec.step, spec.epsilon);
        check_bounds(res.adv_image, image, spec.epsilon);
        ++res.iters_run;
    }
    res.linf = linf_distance(res.adv_image, image);
    return res;
}

} // namespace

AdvResult fgsm(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
               const AttackSpec& spec) {
    spec.validate();
    return iterative_sign_attack(model, image, mask_gt, spec, 1);
}

AdvResult pgd(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
              const AttackSpec& spec) {
    spec.validate();
    return iterative_sign_attack(model, image, mask_gt, spec, spec.max_iters);
}

AdvResult rosa_attack(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
                      const AttackSpec& spec) {
    spec.validate();
    WeightFreezeGuard freeze(model);
    AdvResult res;
    res.adv_image = image;
    for (int t = 0; t < spec.max_iters; ++t) {
        VarF x(res.adv_image, true);
        auto out = forward(model, x);
        TensorF weights = rosa_weight_map(out.pred.value(), mask_gt);
        bool any_correct = false;
        for (float w : weights.data) any_correct = any_correct || w != 0.0f;
        if (!any_correct) break;  // every pixel already misclassified

        VarF objective = dot_const(out.pred, weights);
        res.loss_trace.push_back(objective.value()[0]);
        TensorF grad = input_gradient(x, objective);
        double grad_linf = 0;
        for (float g : grad.data) grad_linf = std::max(grad_linf, std::abs(double(g)));
        if (grad_linf < 1e-12) break;

        const float alpha = static_cast<float>(spec.step);
        const float inv = static_cast<float>(1.0 / grad_linf);
        double step_norm = 0;
        for (std::size_t i = 0; i < grad.data.size(); ++i) {
            const float p = alpha * (grad.data[i] * inv);
            step_norm = std::max(step_norm, std::abs(double(p)));
            res.adv_image.data[i] += p;
        }
        res.step_linf.push_back(step_norm);
        ++res.iters_run;
    }
    // single final projection; the per-step updates themselves are unclamped
    for (std::size_t i = 0; i < res.adv_image.numel(); ++i) {
        const float eps = static_cast<float>(spec.epsilon);
        float v = std::clamp(res.adv_image.data[i], image.data[i] - eps, image.data[i] + eps);
        res.adv_image.data[i] = std::clamp(v, 0.0f, 1.0f);
    }
    check_bounds(res.adv_image, image, spec.epsilon);
    res.linf = linf_distance(res.adv_image, image);
    return res;
}

AdvResult run_attack(SodModelF& model, const TensorF& image, const TensorF& mask_gt,
                     const AttackSpec& spec) {
    switch (spec.kind) {
        case AttackKind::fgsm: return fgsm(model, image, mask_gt, spec);
        case AttackKind::pgd: return pgd(model, image, mask_gt, spec);
        case AttackKind::rosa: return rosa_attack(model, image, mask_gt, spec);
    }
    throw ConfigError("bad attack kind");
}

Dataset attack_dataset(SodModelF& model, const Dataset& ds, const AttackSpec& spec,
                       const std::filesystem::path& out_dir, int jobs) {
    spec.validate();
    const std::string checksum = model_checksum(model);
    WeightFreezeGuard freeze(model);  // spans all workers; per-call guards nest

    Dataset adv;
    adv.samples.resize(ds.size());
    std::vector<std::string> failures(ds.size());

    auto attack_one = [&](std::size_t i) {
        const Sample& src = ds.samples[i];
        try {
            AdvResult r = run_attack(model, src.image, src.mask, spec);
            Sample s;
            s.id = src.id;
            s.image = std::move(r.adv_image);
            s.mask = src.mask;
            s.provenance.adversarial = true;
            s.provenance.source_id = src.id;
            s.provenance.attack = {to_string(spec.kind), spec.epsilon, spec.step, spec.max_iters,
                                   checksum};
            adv.samples[i] = std::move(s);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    };

    jobs = std::max(1, jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < ds.size(); ++i) attack_one(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = static_cast<std::size_t>(t); i < ds.size();
                     i += static_cast<std::size_t>(jobs))
                    attack_one(i);
            });
        for (auto& th : pool) th.join();
    }

    Dataset out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!failures[i].empty()) {
            std::cerr << "attack failed for " << ds.samples[i].id << ": " << failures[i] << "\n";
            continue;
        }
        out.samples.push_back(std::move(adv.samples[i]));
    }
    if (!out_dir.empty()) save_dataset(out, out_dir);
    return out;
}

} // namespace leno
