#include "leno/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace leno {

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
}

} // namespace

std::string report_table(const std::vector<LabeledReport>& reports) {
    if (reports.empty()) throw ConfigError("report_table needs at least one report");

    std::vector<std::string> models, conditions;
    for (const auto& r : reports) {
        if (std::find(models.begin(), models.end(), r.model) == models.end())
            models.push_back(r.model);
        if (r.condition != "clean" &&
            std::find(conditions.begin(), conditions.end(), r.condition) == conditions.end())
            conditions.push_back(r.condition);
    }
    conditions.insert(conditions.begin(), "clean");

    auto find_cell = [&](const std::string& model, const std::string& cond) {
        for (const auto& r : reports)
            if (r.model == model && r.condition == cond) return &r;
        return static_cast<const LabeledReport*>(nullptr);
    };

    std::ostringstream out;
    out << "| model |";
    for (const auto& c : conditions) out << " " << c << " F_beta | " << c << " MAE |";
    out << "\n|---|";
    for (std::size_t i = 0; i < conditions.size(); ++i) out << "---|---|";
    out << "\n";
    for (const auto& m : models) {
        out << "| " << m << " |";
        for (const auto& c : conditions) {
            const LabeledReport* r = find_cell(m, c);
            if (r)
                out << " " << fmt(r->report.aggregate.f_beta) << " | "
                    << fmt(r->report.aggregate.mae) << " |";
            else
                out << " - | - |";
        }
        out << "\n";
    }
    return out.str();
}

void write_report_table(const std::vector<LabeledReport>& reports,
                        const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report table: " + path.string());
    out << report_table(reports);
}

} // namespace leno
