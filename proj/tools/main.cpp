#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "memf/pipeline.hpp"
#include "memf/run_config.hpp"

namespace {

struct CliOverrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> k;
    bool plot_data = false;
    bool no_overwrite = false;
};

memf::RunConfig load_config(const CliOverrides& o) {
    memf::RunConfig cfg = o.config_path.empty() ? memf::RunConfig{}
                                                : memf::RunConfig::from_file(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out = *o.out;
    if (o.k) cfg.k = *o.k;
    if (o.plot_data) cfg.plot_data = true;
    if (o.no_overwrite) cfg.no_overwrite = true;
    return cfg;
}

void add_common(CLI::App* cmd, CliOverrides& o) {
    cmd->add_option("--config", o.config_path, "Configuration file (sectioned key = value)");
    cmd->add_option("--seed", o.seed, "Override run.seed");
    cmd->add_option("--out", o.out, "Override run.out output directory");
    cmd->add_option("--k", o.k, "Override retrieval/candidate count");
    cmd->add_flag("--plot-data", o.plot_data, "Emit tidy long-format CSV for plotting");
    cmd->add_flag("--no-overwrite", o.no_overwrite, "Refuse to overwrite existing artifacts");
}

int fail(const std::string& code, const std::string& message) {
    nlohmann::json j{{"error", code}, {"message", message}};
    std::cerr << j.dump() << std::endl;
    return code == "exists" ? 3 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"memforecast: parametric-memory domain adaptation for time-series forecasting"};
    app.require_subcommand(1);
    app.set_version_flag("--version", memf::kToolVersion);

    CliOverrides o;
    using Stage = void (*)(const memf::RunConfig&);
    struct Sub {
        const char* name;
        const char* help;
        Stage fn;
    };
    const Sub subs[] = {
        {"synth", "Generate a synthetic dataset (bimodal, regime_shift, sinus_mix)",
         &memf::pipeline::cmd_synth},
        {"build-kb", "Window the data and build the knowledge-base index",
         &memf::pipeline::cmd_build_kb},
        {"train-kpm", "Train the knowledge persistence module", &memf::pipeline::cmd_train_kpm},
        {"train-fusion", "Train the adaptive fusion head", &memf::pipeline::cmd_train_fusion},
        {"forecast", "Run the fused pipeline on the test split", &memf::pipeline::cmd_forecast},
        {"bench", "Latency/throughput comparison of the parametric path vs retrieval",
         &memf::pipeline::cmd_bench},
        {"ablate", "Ablation drivers (topk, loss, gating)", &memf::pipeline::cmd_ablate},
    };
    Stage selected = nullptr;
    for (const auto& s : subs) {
        CLI::App* cmd = app.add_subcommand(s.name, s.help);
        add_common(cmd, o);
        cmd->callback([&selected, fn = s.fn] { selected = fn; });
    }

    CLI11_PARSE(app, argc, argv);
    try {
        memf::RunConfig cfg = load_config(o);
        selected(cfg);
    } catch (const memf::pipeline::StageError& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail("error", e.what());
    }
    return 0;
}
