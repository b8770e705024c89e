#pragma once

#include <string>
#include <vector>

#include "leno/data_io.hpp"

namespace leno {

struct MetricConfig {
    double beta_sq = 0.3;       // beta^2 in the F-measure denominator
    bool literal_beta = false;  // use beta (not beta^2) in the denominator
};

struct SampleEval {
    std::string id;
    double mae = 0, f_beta = 0, precision = 0, recall = 0, threshold = 0;
    bool skipped = false;
    std::string skip_reason;
};

struct EvalAggregate {
    double mae = 0, f_beta = 0, precision = 0, recall = 0;
};

struct EvalReport {
    std::vector<SampleEval> per_sample;
    EvalAggregate aggregate;
    MetricConfig config;
    int evaluated = 0;
    int skipped = 0;
};

double mae(const TensorF& s, const TensorF& g);

// min(2 * mean(S), 1 - 1e-6); the standard SOD adaptive threshold.
double adaptive_threshold(const TensorF& s);

struct FBetaResult {
    double f = 0, precision = 0, recall = 0;
};

// Binarizes S at `threshold` (>= counts as salient). G must contain at least
// one positive pixel.
FBetaResult f_beta(const TensorF& s, const TensorF& g, double threshold,
                   const MetricConfig& cfg = {});

EvalReport evaluate(SodModelF& model, const Dataset& ds, const MetricConfig& cfg = {},
                    int jobs = 1);

std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

} // namespace leno
