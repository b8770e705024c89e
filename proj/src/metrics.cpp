#include "leno/metrics.hpp"

#include <fstream>
#include <thread>

#include "json.hpp"

using json = nlohmann::json;

namespace leno {

double mae(const TensorF& s, const TensorF& g) {
    if (!s.same_shape(g)) throw DimensionError("mae shape mismatch");
    double acc = 0;
    for (std::size_t i = 0; i < s.numel(); ++i)
        acc += std::abs(static_cast<double>(s.data[i]) - g.data[i]);
    return acc / static_cast<double>(s.numel());
}

double adaptive_threshold(const TensorF& s) {
    double mean = 0;
    for (float v : s.data) mean += v;
    mean /= static_cast<double>(s.numel());
    return std::min(2.0 * mean, 1.0 - 1e-6);
}

FBetaResult f_beta(const TensorF& s, const TensorF& g, double threshold,
                   const MetricConfig& cfg) {
    if (!s.same_shape(g)) throw DimensionError("f_beta shape mismatch");
    std::size_t tp = 0, fp = 0, fn = 0, pos = 0;
    for (std::size_t i = 0; i < s.numel(); ++i) {
        const bool pred = s.data[i] >= threshold;
        const bool truth = g.data[i] >= 0.5f;
        if (truth) ++pos;
        if (pred && truth) ++tp;
        else if (pred) ++fp;
        else if (truth) ++fn;
    }
    if (pos == 0) throw DomainError("f_beta requires at least one positive ground-truth pixel");

    FBetaResult r;
    r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double denom_coef = cfg.literal_beta ? std::sqrt(cfg.beta_sq) : cfg.beta_sq;
    const double denom = denom_coef * r.precision + r.recall;
    r.f = denom == 0.0 ? 0.0 : (1.0 + cfg.beta_sq) * r.precision * r.recall / denom;
    return r;
}

EvalReport evaluate(SodModelF& model, const Dataset& ds, const MetricConfig& cfg, int jobs) {
    if (ds.empty()) throw ConfigError("evaluate: dataset is empty");
    if (model.cfg.resample_per_forward) jobs = 1;  // forward mutates noise state

    EvalReport report;
    report.config = cfg;
    report.per_sample.resize(ds.size());

    auto eval_one = [&](std::size_t i) {
        SampleEval& e = report.per_sample[i];
        const Sample& smp = ds.samples[i];
        e.id = smp.id;
        try {
            auto out = forward(model, VarF(smp.image), false);
            const TensorF& pred = out.pred.value();
            e.mae = mae(pred, smp.mask);
            e.threshold = adaptive_threshold(pred);
            FBetaResult fb = f_beta(pred, smp.mask, e.threshold, cfg);
            e.f_beta = fb.f;
            e.precision = fb.precision;
            e.recall = fb.recall;
        } catch (const std::exception& ex) {
            e.skipped = true;
            e.skip_reason = ex.what();
        }
    };

    jobs = std::max(1, jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < ds.size(); ++i) eval_one(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = static_cast<std::size_t>(t); i < ds.size();
                     i += static_cast<std::size_t>(jobs))
                    eval_one(i);
            });
        for (auto& th : pool) th.join();
    }

    // aggregation in manifest order regardless of jobs
    for (const auto& e : report.per_sample) {
        if (e.skipped) {
            ++report.skipped;
            continue;
        }
        ++report.evaluated;
        report.aggregate.mae += e.mae;
        report.aggregate.f_beta += e.f_beta;
        report.aggregate.precision += e.precision;
        report.aggregate.recall += e.recall;
    }
    if (report.evaluated > 0) {
        const double n = report.evaluated;
        report.aggregate.mae /= n;
        report.aggregate.f_beta /= n;
        report.aggregate.precision /= n;
        report.aggregate.recall /= n;
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    json j;
    j["config"] = {{"beta_sq", report.config.beta_sq},
                   {"literal_beta", report.config.literal_beta}};
    j["aggregate"] = {{"mae", report.aggregate.mae},
                      {"f_beta", report.aggregate.f_beta},
                      {"precision", report.aggregate.precision},
                      {"recall", report.aggregate.recall},
                      {"evaluated", report.evaluated},
                      {"skipped", report.skipped}};
    j["per_sample"] = json::array();
    for (const auto& e : report.per_sample) {
        json s = {{"id", e.id}};
        if (e.skipped) {
            s["skipped"] = true;
            s["reason"] = e.skip_reason;
        } else {
            s["mae"] = e.mae;
            s["f_beta"] = e.f_beta;
            s["precision"] = e.precision;
            s["recall"] = e.recall;
            s["threshold"] = e.threshold;
        }
        j["per_sample"].push_back(std::move(s));
    }
    return j.dump(2);
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path.string());
    out << report_to_json(report) << "\n";
}

EvalReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read report: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed report " + path.string() + ": " + e.what());
    }
    EvalReport report;
    report.config.beta_sq = j.at("config").at("beta_sq").get<double>();
    report.config.literal_beta = j.at("config").at("literal_beta").get<bool>();
    const auto& a = j.at("aggregate");
    report.aggregate = {a.at("mae").get<double>(), a.at("f_beta").get<double>(),
                        a.at("precision").get<double>(), a.at("recall").get<double>()};
    report.evaluated = a.at("evaluated").get<int>();
    report.skipped = a.at("skipped").get<int>();
    for (const auto& s : j.at("per_sample")) {
        SampleEval e;
        e.id = s.at("id").get<std::string>();
        if (s.value("skipped", false)) {
            e.skipped = true;
            e.skip_reason = s.value("reason", "");
        } else {
            e.mae = s.at("mae").get<double>();
            e.f_beta = s.at("f_beta").get<double>();
            e.precision = s.at("precision").get<double>();
            e.recall = s.at("recall").get<double>();
            e.threshold = s.at("threshold").get<double>();
        }
        report.per_sample.push_back(std::move(e));
    }
    return report;
}

} // namespace leno
