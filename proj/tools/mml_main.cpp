// mml: command-line front end for the matching-market library.
//
//   mml balance <market-file>
//   mml run <config-file> --out <dir>
//   mml enumerate <market-file> --seed S
//   mml summarize <csv> [--config <config-file>]
//
// Exit codes: 0 all checks pass, 1 some check failed, 2 config/runtime error.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mml/errors.hpp"
#include "mml/experiment.hpp"
#include "mml/market.hpp"
#include "mml/market_io.hpp"
#include "mml/matching.hpp"
#include "mml/sampling.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitError = 2;

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

void print_vector(std::ostream& os, const char* name, const std::vector<double>& v) {
    os << name;
    for (double x : v) os << ' ' << mml::format_double(x);
    os << '\n';
}

int cmd_balance(const std::string& path) {
    const mml::BalancedMarket bal = mml::sinkhorn_balance(mml::read_market_file(path));
    std::cout << "n " << bal.n() << '\n'
              << "iterations " << bal.sinkhorn_iters << '\n'
              << "residual " << mml::format_double(bal.residual) << '\n'
              << "contiguity " << mml::format_double(bal.c_bound) << '\n';
    print_vector(std::cout, "phi", bal.phi);
    print_vector(std::cout, "psi", bal.psi);
    std::cout << "M\n";
    for (std::size_t i = 0; i < bal.n(); ++i) {
        for (std::size_t j = 0; j < bal.n(); ++j)
            std::cout << (j ? " " : "") << mml::format_double(bal.M(i, j));
        std::cout << '\n';
    }
    return kExitPass;
}

int cmd_enumerate(const std::string& path, mml::Seed seed) {
    const mml::BalancedMarket bal = mml::sinkhorn_balance(mml::read_market_file(path));
    const mml::LatentValues values = mml::sample_latent(bal, seed);
    const auto stable = mml::enumerate_stable(mml::prefs_from_latent(values));
    std::cout << "stable_matchings " << stable.size() << '\n';
    for (std::size_t k = 0; k < stable.size(); ++k) {
        const auto outcome = mml::outcome_of(stable[k], values);
        double men = 0.0, women = 0.0;
        for (double x : outcome.value_men) men += x;
        for (double y : outcome.value_women) women += y;
        std::cout << "\n# matching " << k << " men_total " << mml::format_double(men)
                  << " women_total " << mml::format_double(women) << '\n';
        mml::write_matching(std::cout, stable[k]);
    }
    return kExitPass;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    mml::ExperimentConfig config = mml::load_config(config_path);
    mml::apply_env_overrides(config);

    std::signal(SIGINT, on_sigint);
    const mml::ExperimentResult result = mml::run_experiment(config, &g_stop);

    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    {
        std::ofstream csv(dir / "trials.csv", std::ios::binary);
        if (!csv) throw mml::Error("cannot write " + (dir / "trials.csv").string());
        mml::write_csv(csv, result.records);
    }
    {
        std::ofstream js(dir / "summary.json");
        if (!js) throw mml::Error("cannot write " + (dir / "summary.json").string());
        js << mml::summary_json(result.summary, &config) << '\n';
    }
    mml::print_summary_table(std::cout, result.summary);
    if (result.interrupted) {
        std::cerr << "interrupted: wrote " << result.records.size() << " partial records\n";
        return kExitError;
    }
    return result.summary.all_pass() ? kExitPass : kExitFail;
}

int cmd_summarize(const std::string& csv_path, const std::string& config_path) {
    std::ifstream in(csv_path);
    if (!in) throw mml::Error("cannot open '" + csv_path + "'");
    const auto records = mml::read_csv(in);
    if (records.empty()) throw mml::EmptySample("no records in '" + csv_path + "'");
    if (config_path.empty()) {
        mml::print_summary_table(std::cout, mml::summarize(records));
        return kExitPass;
    }
    const mml::ExperimentConfig config = mml::load_config(config_path);
    const mml::Summary summary = mml::summarize(records, &config);
    mml::print_summary_table(std::cout, summary);
    return summary.all_pass() ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mml: random matching markets with correlated preferences"};
    app.require_subcommand(1);

    std::string market_path, config_path, out_dir, csv_path, check_config;
    mml::Seed seed = 0;

    auto* balance = app.add_subcommand("balance", "balance a market file and print phi, psi, M");
    balance->add_option("market-file", market_path)->required();

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config-file", config_path)->required();
    run->add_option("--out", out_dir, "output directory")->required();

    auto* enumerate = app.add_subcommand("enumerate", "sample values and list every stable matching");
    enumerate->add_option("market-file", market_path)->required();
    enumerate->add_option("--seed", seed, "sampling seed")->required();

    auto* summarize = app.add_subcommand("summarize", "summary table of a trial CSV");
    summarize->add_option("csv", csv_path)->required();
    summarize->add_option("--config", check_config, "evaluate the checks of this config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitError;
    }

    try {
        if (*balance) return cmd_balance(market_path);
        if (*enumerate) return cmd_enumerate(market_path, seed);
        if (*run) return cmd_run(config_path, out_dir);
        if (*summarize) return cmd_summarize(csv_path, check_config);
    } catch (const std::exception& e) {
        std::cerr << "mml: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
