#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "leno/attacks.hpp"
#include "leno/report.hpp"
#include "leno/training.hpp"

using namespace leno;
using json = nlohmann::json;

namespace {

void write_config_echo(const json& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "config.json");
    if (!out) throw IoError("cannot write config echo in " + dir.string());
    out << cfg.dump(2) << "\n";
}

int cmd_gen_data(const std::filesystem::path& out, int count, int size, std::uint64_t seed) {
    synth_generate(count, size, seed, out);
    write_config_echo({{"command", "gen-data"},
                       {"out", out.string()},
                       {"count", count},
                       {"size", size},
                       {"seed", seed}},
                      out);
    std::cout << "wrote " << count << " samples to " << out.string() << "\n";
    return 0;
}

struct TrainArgs {
    std::filesystem::path data, out;
    std::string defense = "leno";
    std::string init = "gaussian";
    std::string placement = "cross";
    int noise_layers = 1;
    int channels = 16;
    TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
    Dataset ds = load_dataset(a.data);
    if (ds.empty()) throw ConfigError("training dataset is empty: " + a.data.string());

    ModelConfig mc;
    mc.channels = a.channels;
    mc.height = static_cast<int>(ds.samples[0].image.shape[1]);
    mc.width = static_cast<int>(ds.samples[0].image.shape[2]);
    mc.defense = a.defense == "leno";
    mc.init_kind = init_kind_from_string(a.init);
    mc.placement = placement_from_string(a.placement);
    mc.noise_layers = a.noise_layers;

    std::filesystem::create_directories(a.out);
    std::ofstream log(a.out / "train_log.jsonl");
    if (!log) throw IoError("cannot write training log in " + a.out.string());

    SodModelF model = build_model<float>(mc, a.cfg.seed);
    if (mc.defense) {
        train_phase1(model, ds, a.cfg, &log);
        train_phase2(model, ds, a.cfg, &log);
    } else {
        train_baseline(model, ds, a.cfg, &log);
    }
    save_checkpoint(model, a.out / "model.ckpt");

    write_config_echo({{"command", "train"},
                       {"data", a.data.string()},
                       {"defense", a.defense},
                       {"init", a.init},
                       {"placement", a.placement},
                       {"noise_layers", a.noise_layers},
                       {"channels", a.channels},
                       {"lr", a.cfg.lr},
                       {"epochs1", a.cfg.epochs_phase1},
                       {"epochs2", a.cfg.epochs_phase2},
                       {"batch", a.cfg.batch_size},
                       {"seed", a.cfg.seed},
                       {"checksum", model_checksum(model)}},
                      a.out);
    std::cout << "checkpoint " << (a.out / "model.ckpt").string() << " checksum "
              << model_checksum(model) << "\n";
    return 0;
}

int cmd_attack(const std::filesystem::path& model_path, const std::filesystem::path& data,
               const std::string& kind, double epsilon, double step, int iters,
               const std::filesystem::path& out, int jobs) {
    AttackSpec spec = AttackSpec::defaults(attack_kind_from_string(kind));
    if (epsilon >= 0) spec.epsilon = epsilon;
    if (step >= 0) spec.step = step;
    if (iters > 0) spec.max_iters = iters;
    if (spec.epsilon == 0.0) {  // identity attack: keep the images untouched
        spec.epsilon = 1e-9;
        spec.step = 0.0;
    }
    spec.validate();

    SodModelF model = load_checkpoint(model_path);
    Dataset ds = load_dataset(data);
    Dataset adv = attack_dataset(model, ds, spec, out, jobs);
    write_config_echo({{"command", "attack"},
                       {"model", model_path.string()},
                       {"data", data.string()},
                       {"attack", to_string(spec.kind)},
                       {"epsilon", spec.epsilon},
                       {"step", spec.step},
                       {"iters", spec.max_iters},
                       {"jobs", jobs},
                       {"source_model_checksum", model_checksum(model)}},
                      out);
    std::cout << "attacked " << adv.size() << " samples into " << out.string() << "\n";
    return 0;
}

int cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data,
             const std::filesystem::path& report_path, int jobs) {
    SodModelF model = load_checkpoint(model_path);
    Dataset ds = load_dataset(data);
    EvalReport report = evaluate(model, ds, {}, jobs);
    write_report(report, report_path);
    std::cout << "f_beta " << report.aggregate.f_beta << " mae " << report.aggregate.mae
              << " (" << report.evaluated << " evaluated, " << report.skipped << " skipped)\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& entries, const std::filesystem::path& table) {
    if (entries.empty()) throw ConfigError("report needs at least one model,condition,path entry");
    std::vector<LabeledReport> reports;
    for (const auto& e : entries) {
        const auto c1 = e.find(',');
        const auto c2 = e.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ConfigError("report entry must be model,condition,path: " + e);
        LabeledReport r;
        r.model = e.substr(0, c1);
        r.condition = e.substr(c1 + 1, c2 - c1 - 1);
        r.report = read_report(e.substr(c2 + 1));
        reports.push_back(std::move(r));
    }
    write_report_table(reports, table);
    std::cout << "wrote " << table.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LeNo toy lab: synthetic SOD data, noise-defended training, attacks, evaluation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    std::filesystem::path gen_out;
    int gen_count = 10, gen_size = 64;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Number of samples");
    gen->add_option("--size", gen_size, "Image side length (divisible by 8)");
    gen->add_option("--seed", gen_seed, "RNG seed");

    // train
    auto* train = app.add_subcommand("train", "Train a model");
    TrainArgs ta;
    train->add_option("--data", ta.data, "Dataset directory")->required();
    train->add_option("--out", ta.out, "Output directory")->required();
    train->add_option("--defense", ta.defense, "none or leno")
        ->check(CLI::IsMember({"none", "leno"}));
    train->add_option("--epochs1", ta.cfg.epochs_phase1, "Phase-1 (or baseline) epochs");
    train->add_option("--epochs2", ta.cfg.epochs_phase2, "Phase-2 epochs");
    train->add_option("--lr", ta.cfg.lr, "SGD learning rate");
    train->add_option("--batch", ta.cfg.batch_size, "Batch size");
    train->add_option("--seed", ta.cfg.seed, "RNG seed");
    train->add_option("--channels", ta.channels, "Base channel count");
    train->add_option("--init", ta.init, "Noise init: gaussian, uniform, constant")
        ->check(CLI::IsMember({"gaussian", "uniform", "constant"}));
    train->add_option("--placement", ta.placement, "Noise placement: cross, full, center")
        ->check(CLI::IsMember({"cross", "full", "center"}));
    train->add_option("--noise-layers", ta.noise_layers, "Number of noise layers (1-3)");

    // attack
    auto* attack = app.add_subcommand("attack", "Generate an adversarial dataset");
    std::filesystem::path at_model, at_data, at_out;
    std::string at_kind = "pgd";
    double at_eps = -1, at_step = -1;
    int at_iters = 0, at_jobs = 1;
    attack->add_option("--model", at_model, "Source checkpoint")->required();
    attack->add_option("--data", at_data, "Clean dataset directory")->required();
    attack->add_option("--attack", at_kind, "fgsm, pgd, or rosa")
        ->check(CLI::IsMember({"fgsm", "pgd", "rosa"}));
    attack->add_option("--epsilon", at_eps, "L-inf bound (default 20/255)");
    attack->add_option("--step", at_step, "Step size (default per attack)");
    attack->add_option("--iters", at_iters, "Iteration budget (default per attack)");
    attack->add_option("--out", at_out, "Output directory")->required();
    attack->add_option("--jobs", at_jobs, "Parallel workers");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
    std::filesystem::path ev_model, ev_data, ev_report;
    int ev_jobs = 1;
    eval->add_option("--model", ev_model, "Checkpoint")->required();
    eval->add_option("--data", ev_data, "Dataset directory")->required();
    eval->add_option("--report", ev_report, "Output report JSON")->required();
    eval->add_option("--jobs", ev_jobs, "Parallel workers");

    // report
    auto* report = app.add_subcommand("report", "Merge eval reports into a markdown table");
    std::vector<std::string> rp_entries;
    std::filesystem::path rp_table;
    report->add_option("--reports", rp_entries, "Entries model,condition,report.json");
    report->add_option("--table", rp_table, "Output markdown file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_count, gen_size, gen_seed);
        if (train->parsed()) return cmd_train(ta);
        if (attack->parsed())
            return cmd_attack(at_model, at_data, at_kind, at_eps, at_step, at_iters, at_out,
                              at_jobs);
        if (eval->parsed()) return cmd_eval(ev_model, ev_data, ev_report, ev_jobs);
        if (report->parsed()) return cmd_report(rp_entries, rp_table);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
