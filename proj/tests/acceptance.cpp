// Acceptance harness: one PASS/FAIL line per criterion, exit code = number
// of failed criteria. Several criteria train models and take minutes.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "leno/attacks.hpp"
#include "leno/gradcheck.hpp"
#include "leno/metrics.hpp"
#include "leno/report.hpp"
#include "leno/training.hpp"

using namespace leno;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

int eval_jobs() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(std::min(hc, 4u));
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------- criterion 1: gradcheck suite ----------

Outcome criterion_gradcheck() {
    const auto t0 = clock_type::now();
    double worst = 0;
    std::string worst_name = "none";
    auto check = [&](const char* name, const std::function<VarD()>& fn,
                     const std::vector<VarD>& leaves) {
        const double err = gradcheck(fn, leaves).max_rel_error;
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    };

    Rng rng(501);
    auto rand_t = [&](std::vector<int> shape, double lo, double hi) {
        TensorD t(std::move(shape));
        rng.fill_uniform(t, lo, hi);
        return t;
    };

    {
        VarD in(rand_t({2, 6, 6}, -1, 1), true), w(rand_t({3, 2, 3, 3}, -1, 1), true),
            b(rand_t({3}, -1, 1), true);
        VarD target(rand_t({3, 6, 6}, -1, 1));
        check("conv2d", [&] { return mse(conv2d(in, w, b, 1, 1), target); }, {in, w, b});
        VarD t2(rand_t({3, 3, 3}, -1, 1));
        check("conv2d_s2", [&] { return mse(conv2d(in, w, b, 2, 1), t2); }, {in, w, b});
    }
    {
        // keep relu inputs away from the kink
        TensorD v = rand_t({2, 4, 4}, 0.2, 1.0);
        for (std::size_t i = 0; i < v.numel(); i += 2) v[i] = -v[i];
        VarD x(v, true);
        VarD target(rand_t({2, 4, 4}, -1, 1));
        check("relu", [&] { return mse(relu(x), target); }, {x});
        check("sigmoid", [&] { return mse(sigmoid(x), target); }, {x});
        check("scale", [&] { return mse(scale(x, 1.7), target); }, {x});
        VarD y(rand_t({2, 4, 4}, -1, 1), true);
        check("add", [&] { return mse(add(x, y), target); }, {x, y});
        check("mul", [&] { return mse(mul(x, y), target); }, {x, y});
        check("sum_all", [&] { return sum_all(mul(x, x)); }, {x});
        TensorD dw = rand_t({2, 4, 4}, -1, 1);
        check("dot_const", [&] { return dot_const(sigmoid(x), dw); }, {x});
    }
    {
        VarD p(rand_t({1, 4, 4}, 0.1, 0.9), true);
        VarD g(rand_t({1, 4, 4}, 0, 1));
        check("bce", [&] { return bce(p, g); }, {p});
        check("mse", [&] { return mse(p, g); }, {p});
    }
    {
        VarD x(rand_t({3, 4, 4}, -1, 1), true);
        VarD t1(rand_t({1, 4, 4}, -1, 1)), t2(rand_t({3, 7, 5}, -1, 1)),
            t3(rand_t({2, 4, 4}, -1, 1)), t4(rand_t({3, 2, 2}, -1, 1)),
            t5(rand_t({3, 8, 8}, -1, 1));
        check("mean_channels", [&] { return mse(mean_channels(x), t1); }, {x});
        check("upsample_bilinear", [&] { return mse(upsample_bilinear(x, 7, 5), t2); }, {x});
        check("slice_channels", [&] { return mse(slice_channels(x, 1, 3), t3); }, {x});
        check("maxpool2", [&] { return mse(maxpool2(x), t4); }, {x});
        check("embed2d", [&] { return mse(embed2d(x, 8, 8, 2, 3), t5); }, {x});
    }
    {
        // full training objective through the whole model; N_gt is a detached
        // target, frozen from the initial forward
        ModelConfig cfg;
        cfg.channels = 4;
        cfg.height = cfg.width = 16;
        auto m = build_model<double>(cfg, 93);
        Rng r2(12);
        TensorD img({3, 16, 16}), mask({1, 16, 16});
        r2.fill_uniform(img, 0.05, 0.95);
        for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = i % 3 == 0 ? 1.0 : 0.0;
        VarD vimg(img), vmask(mask);
        VarD n_gt(noise_gt(forward(m, vimg).f_tilde.value()), false);
        auto loss_fn = [&] {
            auto out = forward(m, vimg);
            VarD ln = loss_noise(out.noise_est, n_gt, 0.1);
            return loss_total(ln, loss_side(out.sides, vmask), loss_pred(out.pred, vmask));
        };
        const double err = gradcheck(loss_fn, m.all_params(), 6, 2024).max_rel_error;
        if (err > worst) {
            worst = err;
            worst_name = "full_model_objective";
        }
    }

    const double elapsed = seconds_since(t0);
    std::ostringstream d;
    d << "max rel err " << worst << " (" << worst_name << "), " << elapsed << "s";
    return {worst < 1e-4 && elapsed < 60.0, d.str()};
}

// ---------- criterion 2: attack contracts ----------

Outcome criterion_attacks() {
    ModelConfig mc;
    mc.channels = 8;
    mc.height = mc.width = 32;
    mc.defense = false;
    SodModelF model = build_model<float>(mc, 7);
    Dataset ds = synth_generate(50, 32, 616, {});

    int violations = 0;
    double worst_linf_excess = 0, worst_alpha_dev = 0;
    auto check_bounds = [&](const AdvResult& r, const TensorF& img, double eps) {
        worst_linf_excess = std::max(worst_linf_excess, r.linf - eps);
        if (r.linf > eps + 1e-6) ++violations;
        for (float v : r.adv_image.data)
            if (v < 0.0f || v > 1.0f) {
                ++violations;
                break;
            }
    };

    const AttackSpec fs = AttackSpec::defaults(AttackKind::fgsm);
    const AttackSpec ps = AttackSpec::defaults(AttackKind::pgd);
    AttackSpec p1 = ps;
    p1.max_iters = 1;
    AttackSpec fs_same = fs;
    fs_same.step = ps.step;
    AttackSpec rs = AttackSpec::defaults(AttackKind::rosa);
    rs.max_iters = 5;  // enough iterations to exercise the normalization

    for (const auto& s : ds.samples) {
        AdvResult rf = fgsm(model, s.image, s.mask, fs);
        AdvResult rp = pgd(model, s.image, s.mask, ps);
        AdvResult rr = rosa_attack(model, s.image, s.mask, rs);
        check_bounds(rf, s.image, fs.epsilon);
        check_bounds(rp, s.image, ps.epsilon);
        check_bounds(rr, s.image, rs.epsilon);

        AdvResult a = pgd(model, s.image, s.mask, p1);
        AdvResult b = fgsm(model, s.image, s.mask, fs_same);
        if (a.adv_image.data != b.adv_image.data) ++violations;

        for (double n : rr.step_linf) {
            worst_alpha_dev = std::max(worst_alpha_dev, std::abs(n - rs.step));
            if (std::abs(n - rs.step) > 1e-6) ++violations;
        }
    }
    std::ostringstream d;
    d << "50 images, violations " << violations << ", worst linf excess " << worst_linf_excess
      << ", worst |alpha dev| " << worst_alpha_dev;
    return {violations == 0, d.str()};
}

// ---------- criterion 3: metric oracle ----------

// deliberately naive, separate from the library implementation
struct OracleMetrics {
    double mae, f, precision, recall;
};

OracleMetrics oracle(const TensorF& s, const TensorF& g, double thr) {
    double abs_sum = 0;
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.numel(); ++i) {
        abs_sum += std::abs(double(s.data[i]) - double(g.data[i]));
        const bool pred = double(s.data[i]) >= thr;
        const bool truth = g.data[i] >= 0.5f;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
    }
    OracleMetrics r{};
    r.mae = abs_sum / double(s.numel());
    r.precision = tp + fp > 0 ? double(tp) / (tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? double(tp) / (tp + fn) : 0.0;
    const double den = 0.3 * r.precision + r.recall;
    r.f = den > 0 ? 1.3 * r.precision * r.recall / den : 0.0;
    return r;
}

Outcome criterion_metric_oracle() {
    Rng rng(2718);
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
        TensorF s({1, 8, 8}), g({1, 8, 8});
        rng.fill_uniform(s, 0.0f, 1.0f);
        rng.fill_uniform(g, 0.0f, 1.0f);
        for (auto& v : g.data) v = v >= 0.5f ? 1.0f : 0.0f;
        bool any = false;
        for (float v : g.data) any = any || v > 0;
        if (!any) g.data[0] = 1.0f;
        const double thr = adaptive_threshold(s);
        const OracleMetrics want = oracle(s, g, thr);
        const FBetaResult got = f_beta(s, g, thr);
        worst = std::max(worst, std::abs(mae(s, g) - want.mae));
        worst = std::max(worst, std::abs(got.f - want.f));
        worst = std::max(worst, std::abs(got.precision - want.precision));
        worst = std::max(worst, std::abs(got.recall - want.recall));
    }
    std::ostringstream d;
    d << "50 pairs, max |lib - oracle| " << worst;
    return {worst < 1e-6, d.str()};
}

// ---------- criterion 4: cross-shape structure ----------

Outcome criterion_cross_shape() {
    bool corners_zero = true;
    double worst_ratio_dev = 0;
    for (unsigned seed : {17u, 18u, 19u}) {
        ModelConfig cfg;
        cfg.channels = 16;
        cfg.height = cfg.width = 80;  // big enough for stable variance stats
        auto m = build_model<double>(cfg, seed);
        const auto& sn = m.noises[0];
        TensorD placed = placed_noise_sum(sn).value();
        const int h = sn.h, w = sn.w;

        double center_var = 0, arm_var = 0;
        std::size_t nc = 0, na = 0;
        for (int c = 0; c < sn.c; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const bool in_col = x >= w / 4 && x < w / 4 + w / 2;
                    const bool in_row = y >= h / 4 && y < h / 4 + h / 2;
                    const double v = placed.at3(c, y, x);
                    if (!in_col && !in_row) {
                        if (v != 0.0) corners_zero = false;
                    } else if (in_col && in_row) {
                        center_var += v * v;
                        ++nc;
                    } else {
                        arm_var += v * v;
                        ++na;
                    }
                }
        center_var /= double(nc);
        arm_var /= double(na);
        worst_ratio_dev = std::max(worst_ratio_dev, std::abs(center_var / arm_var - 2.0));
    }
    std::ostringstream d;
    d << "corners zero: " << (corners_zero ? "yes" : "NO") << ", worst |center/arm - 2| "
      << worst_ratio_dev;
    return {corners_zero && worst_ratio_dev < 0.2, d.str()};
}

// ---------- criterion 5: training-scheme contracts ----------

std::vector<std::vector<float>> values_of(const std::vector<VarF>& params) {
    std::vector<std::vector<float>> out;
    for (const auto& v : params) out.push_back(v.value().data);
    return out;
}

bool same_values(const std::vector<VarF>& params, const std::vector<std::vector<float>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].value().data != snap[i]) return false;
    return true;
}

Outcome criterion_training_contracts() {
    ModelConfig mc;
    mc.channels = 8;
    mc.height = mc.width = 32;
    mc.defense = true;
    Dataset ds = synth_generate(8, 32, 21, {});

    TrainConfig cfg;
    cfg.epochs_phase1 = 1;
    cfg.epochs_phase2 = 1;

    std::vector<std::string> problems;

    {
        // one even batch: theta_w must not move, theta_n must
        SodModelF m = build_model<float>(mc, 5);
        cfg.batch_size = 8;
        auto w0 = values_of(m.theta_w());
        auto n0 = values_of(m.theta_n());
        train_phase1(m, ds, cfg);
        if (!same_values(m.theta_w(), w0)) problems.push_back("even batch moved theta_w");
        if (same_values(m.theta_n(), n0)) problems.push_back("even batch left theta_n fixed");
    }
    {
        // even + odd batch: theta_w moves exactly on the odd one
        SodModelF m = build_model<float>(mc, 5);
        cfg.batch_size = 4;
        auto w0 = values_of(m.theta_w());
        TrainLog log = train_phase1(m, ds, cfg);
        if (same_values(m.theta_w(), w0)) problems.push_back("odd batch left theta_w fixed");
        for (const auto& r : log)
            if (r.updated_partition != (r.batch % 2 == 0 ? "theta_n" : "theta_w"))
                problems.push_back("alternation order broken");
    }
    {
        // phase 2: stem and w1/w2 bitwise constant, the rest moves
        SodModelF m = build_model<float>(mc, 5);
        cfg.batch_size = 4;
        cfg.epochs_phase1 = 2;
        cfg.epochs_phase2 = 2;
        train_phase1(m, ds, cfg);
        std::vector<VarF> frozen = {m.stem1.w, m.stem1.b, m.stem2.w, m.stem2.b};
        for (const auto& v : m.theta_w()) frozen.push_back(v);
        auto f0 = values_of(frozen);
        auto t0 = values_of(freeze_for_phase2(m));
        train_phase2(m, ds, cfg);
        if (!same_values(frozen, f0)) problems.push_back("phase 2 moved stem or theta_w");
        if (same_values(freeze_for_phase2(m), t0))
            problems.push_back("phase 2 left trainables fixed");
    }
    std::ostringstream d;
    if (problems.empty())
        d << "alternation and freeze contracts hold";
    else
        for (const auto& p : problems) d << p << "; ";
    return {problems.empty(), d.str()};
}

// ---------- criteria 6 and 7: directional reproductions ----------

struct DirectionalResults {
    double base_clean = 0, base_adv = 0, leno_clean = 0, leno_adv = 0;
    double base_seconds = 0;  // criterion-6 portion: baseline train + attack + eval
    bool ready = false;
};

DirectionalResults run_directional() {
    DirectionalResults r;
    const auto t0 = clock_type::now();
    const int jobs = eval_jobs();

    Dataset corpus = synth_generate(200, 64, 1001, {});

    ModelConfig mc;
    mc.channels = 16;
    mc.height = mc.width = 64;
    mc.defense = false;

    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.batch_size = 8;
    cfg.seed = 7;
    cfg.epochs_phase1 = 35;

    SodModelF base = build_model<float>(mc, 777);
    train_baseline(base, corpus, cfg);

    // PGD-10 against the undefended model: white-box for it, transfer for
    // the defended one
    AttackSpec spec = AttackSpec::defaults(AttackKind::pgd);
    Dataset adv = attack_dataset(base, corpus, spec, {}, jobs);
    r.base_clean = evaluate(base, corpus, {}, jobs).aggregate.f_beta;
    r.base_adv = evaluate(base, adv, {}, jobs).aggregate.f_beta;
    r.base_seconds = seconds_since(t0);

    ModelConfig mcd = mc;
    mcd.defense = true;
    SodModelF leno = build_model<float>(mcd, 777);
    TrainConfig lcfg = cfg;
    lcfg.epochs_phase1 = 80;  // alternation gives theta_n every other batch
    lcfg.epochs_phase2 = 10;
    train_phase1(leno, corpus, lcfg);
    train_phase2(leno, corpus, lcfg);

    r.leno_clean = evaluate(leno, corpus, {}, jobs).aggregate.f_beta;
    r.leno_adv = evaluate(leno, adv, {}, jobs).aggregate.f_beta;
    r.ready = true;
    return r;
}

Outcome criterion_attack_impact(const DirectionalResults& r) {
    const double drop = r.base_clean - r.base_adv;
    std::ostringstream d;
    d << "clean F " << r.base_clean << " (need >= 0.85), PGD-10 drop " << drop
      << " (need >= 0.20), " << r.base_seconds << "s";
    return {r.ready && r.base_clean >= 0.85 && drop >= 0.20 && r.base_seconds <= 900.0,
            d.str()};
}

Outcome criterion_defense_tradeoff(const DirectionalResults& r) {
    const double adv_gain = r.leno_adv - r.base_adv;
    const double clean_loss = r.base_clean - r.leno_clean;
    std::ostringstream d;
    d << "adversarial F gain " << adv_gain << " (need >= 0.05), clean F loss " << clean_loss
      << " (need <= 0.05)";
    return {r.ready && adv_gain >= 0.05 && clean_loss <= 0.05, d.str()};
}

// ---------- criterion 8: inference overhead ----------

Outcome criterion_overhead() {
    ModelConfig on;
    on.channels = 16;
    on.height = on.width = 64;
    on.defense = true;
    ModelConfig off = on;
    off.defense = false;
    SodModelF m_on = build_model<float>(on, 1);
    SodModelF m_off = build_model<float>(off, 1);
    Rng rng(3);
    TensorF img({3, 64, 64});
    rng.fill_uniform(img, 0.0f, 1.0f);

    auto once = [&](SodModelF& m) {
        const auto a = clock_type::now();
        forward(m, VarF(img), false);
        return seconds_since(a);
    };
    for (int i = 0; i < 10; ++i) {  // warm-up
        once(m_off);
        once(m_on);
    }
    // interleave the two models so background load hits both equally
    std::vector<double> t_on, t_off;
    for (int i = 0; i < 100; ++i) {
        t_off.push_back(once(m_off));
        t_on.push_back(once(m_on));
    }
    std::sort(t_on.begin(), t_on.end());
    std::sort(t_off.begin(), t_off.end());
    const double overhead = t_on[50] / t_off[50] - 1.0;
    std::ostringstream d;
    d << "median defense-off " << t_off[50] * 1e3 << "ms, defense-on " << t_on[50] * 1e3
      << "ms, overhead " << overhead * 100 << "% (need <= 5%)";
    return {overhead <= 0.05, d.str()};
}

// ---------- criterion 9: format stability ----------

Outcome criterion_formats() {
    std::vector<std::string> problems;
    const auto dir = std::filesystem::temp_directory_path() / "leno_acceptance_fmt";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    ModelConfig mc;
    mc.channels = 8;
    mc.height = mc.width = 32;
    mc.defense = true;
    SodModelF m = build_model<float>(mc, 31);

    // checkpoint: bitwise round trip
    const auto ckpt = dir / "m.ckpt";
    save_checkpoint(m, ckpt);
    SodModelF back = load_checkpoint(ckpt);
    if (serialize_checkpoint(m) != serialize_checkpoint(back))
        problems.push_back("checkpoint round trip not bitwise");

    // corrupted checkpoint: CRC error, never a crash
    auto bytes = serialize_checkpoint(m);
    bytes[bytes.size() / 2] ^= 0x40;
    const auto bad = dir / "bad.ckpt";
    {
        std::ofstream out(bad, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    try {
        load_checkpoint(bad);
        problems.push_back("corrupted checkpoint loaded silently");
    } catch (const LoadError& e) {
        if (std::string(e.what()).find("CRC") == std::string::npos)
            problems.push_back(std::string("unexpected load error: ") + e.what());
    } catch (const std::exception& e) {
        problems.push_back(std::string("wrong error type: ") + e.what());
    }

    // dataset: masks bitwise, images within 8-bit quantization
    Dataset ds = synth_generate(3, 32, 99, dir / "ds");
    Dataset lds = load_dataset(dir / "ds");
    if (lds.size() != ds.size()) problems.push_back("dataset round trip lost samples");
    for (std::size_t i = 0; i < lds.size(); ++i) {
        if (lds.samples[i].mask.data != ds.samples[i].mask.data)
            problems.push_back("mask round trip not exact");
        for (std::size_t k = 0; k < lds.samples[i].image.numel(); ++k)
            if (std::abs(lds.samples[i].image.data[k] - ds.samples[i].image.data[k]) >
                0.5f / 255.0f + 1e-6f) {
                problems.push_back("image round trip beyond quantization");
                break;
            }
    }
    std::ostringstream d;
    if (problems.empty())
        d << "checkpoint bitwise + CRC rejection + dataset within quantization";
    else
        for (const auto& p : problems) d << p << "; ";
    return {problems.empty(), d.str()};
}

// ---------- criterion 10: ablation switches ----------

Outcome criterion_ablations() {
    Dataset ds = synth_generate(16, 32, 404, {});
    TrainConfig cfg;
    cfg.epochs_phase1 = 8;
    cfg.epochs_phase2 = 2;
    cfg.batch_size = 4;

    struct Variant {
        std::string name;
        InitKind init;
        int layers;
    };
    const std::vector<Variant> variants = {
        {"init-gaussian", InitKind::gaussian, 1}, {"init-uniform", InitKind::uniform, 1},
        {"init-constant", InitKind::constant, 1}, {"layers-1", InitKind::gaussian, 1},
        {"layers-2", InitKind::gaussian, 2},      {"layers-3", InitKind::gaussian, 3},
    };

    std::vector<LabeledReport> reports;
    std::vector<std::string> problems;
    for (const auto& v : variants) {
        try {
            ModelConfig mc;
            mc.channels = 8;
            mc.height = mc.width = 32;
            mc.defense = true;
            mc.init_kind = v.init;
            mc.noise_layers = v.layers;
            SodModelF m = build_model<float>(mc, 99);
            train_phase1(m, ds, cfg);
            train_phase2(m, ds, cfg);
            reports.push_back({v.name, "clean", evaluate(m, ds, {}, eval_jobs())});
        } catch (const std::exception& e) {
            problems.push_back(v.name + ": " + e.what());
        }
    }

    std::string table;
    std::size_t rows = 0;
    if (problems.empty()) {
        table = report_table(reports);
        std::istringstream lines(table);
        std::string line;
        while (std::getline(lines, line)) ++rows;
        if (rows != variants.size() + 2)  // header + separator + one row each
            problems.push_back("report table row count mismatch");
    }
    std::ostringstream d;
    if (problems.empty())
        d << variants.size() << " variants trained, table has " << rows - 2 << " rows";
    else
        for (const auto& p : problems) d << p << "; ";
    return {problems.empty(), d.str()};
}

void report_line(int id, const char* name, const Outcome& o, int& failures) {
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %d: %s — %s\n", o.pass ? "PASS" : "FAIL", id, name,
                o.detail.c_str());
    std::fflush(stdout);
}

Outcome guarded(const std::function<Outcome()>& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return {false, std::string("exception: ") + e.what()};
    }
}

} // namespace

int main() {
    int failures = 0;
    report_line(1, "gradcheck suite (rtol 1e-4, < 1 min)", guarded(criterion_gradcheck),
                failures);
    report_line(2, "attack contracts on 50 images", guarded(criterion_attacks), failures);
    report_line(3, "metric oracle agreement to 1e-6", guarded(criterion_metric_oracle),
                failures);
    report_line(4, "cross-shaped noise structure", guarded(criterion_cross_shape), failures);
    report_line(5, "training-scheme contracts", guarded(criterion_training_contracts),
                failures);

    DirectionalResults dir;
    try {
        dir = run_directional();
    } catch (const std::exception& e) {
        dir.ready = false;
    }
    report_line(6, "attack impact on the undefended model",
                guarded([&] { return criterion_attack_impact(dir); }), failures);
    report_line(7, "defense robustness/clean-accuracy tradeoff",
                guarded([&] { return criterion_defense_tradeoff(dir); }), failures);

    report_line(8, "inference overhead <= 5%", guarded(criterion_overhead), failures);
    report_line(9, "format stability", guarded(criterion_formats), failures);
    report_line(10, "ablation switches execute", guarded(criterion_ablations), failures);

    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures;
}
