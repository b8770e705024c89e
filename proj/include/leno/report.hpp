#pragma once

#include <string>
#include <vector>

#include "leno/metrics.hpp"

namespace leno {

// An EvalReport tagged with the model it scored and the data condition
// (clean, or an attack name) it was scored under.
struct LabeledReport {
    std::string model;
    std::string condition;
    EvalReport report;
};

// Markdown table: one row per model; F-beta and MAE column pair per
// condition, "clean" first, then remaining conditions in first-appearance
// order. Models missing a condition show "-".
std::string report_table(const std::vector<LabeledReport>& reports);

void write_report_table(const std::vector<LabeledReport>& reports,
                        const std::filesystem::path& path);

} // namespace leno
