#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mml/rng.hpp"

namespace mml {

enum class ExperimentKind { ValueDist, RankDist, Hyperbola, ApproxStable, Imbalance, StableCount, Bounds };
enum class MarketKind { Uniform, PublicScores, CBounded };

// Flat `key = value` configuration. Tolerances are read from `tol.<name>`
// keys and are never defaulted by the library.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::ValueDist;
    std::size_t n = 0;
    std::size_t trials = 1;
    Seed master_seed = 0;
    MarketKind market = MarketKind::Uniform;
    double c = 1.0;  // contiguity target for CBounded / PublicScores
    double delta = 0.05;
    std::optional<double> alpha;
    std::optional<std::size_t> k;
    std::size_t swaps = 1;
    std::size_t workers = 1;

    // DA matchings whose records enter the pass/fail checks; all are recorded
    std::vector<std::string> check_matchings{"MOSM", "WOSM"};

    // diagnostics
    double zeta = 0.25;
    double theta = 0.5;

    // Bounds experiment: which validators run, and their parameters
    bool chernoff = true;
    bool dkw = true;
    std::size_t inner_trials = 10'000;
    std::vector<double> chernoff_t{0.3};
    double dkw_delta = 0.02;
    std::vector<double> dkw_epsilon{0.1};

    std::map<std::string, double> tolerances;

    double tolerance(const std::string& name) const;  // throws ConfigError if absent
};

ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);

// Applies MML_WORKERS from the environment, if set.
void apply_env_overrides(ExperimentConfig& config);

std::string to_string(ExperimentKind kind);
std::string to_string(MarketKind kind);

struct TrialRecord {
    std::uint64_t trial_id = 0;
    std::string matching_kind;
    double lambda_fit = 0.0;
    double lambda_ysum = 0.0;
    double ks_fit = 0.0;
    double ks_ysum = 0.0;
    double hyperbola = 0.0;
    double dispersion = 0.0;
    double rank_ratio_frac = 0.0;
    double lambda_rank = 0.0;
    double ks_rank = 0.0;
    double mean_rank_men = 0.0;
    double mean_rank_women = 0.0;
    double proposal_count = 0.0;
    double stable_count = 0.0;
    double alpha_cert = 0.0;
    double da_agree = 0.0;
    double bound = 0.0;
    double empirical = 0.0;
};

struct NumericField {
    const char* name;
    double TrialRecord::*member;
};

// Numeric CSV columns in output order (after trial_id, matching_kind).
const std::vector<NumericField>& numeric_fields();

void write_csv(std::ostream& os, const std::vector<TrialRecord>& records);
std::string format_csv(const std::vector<TrialRecord>& records);
std::vector<TrialRecord> read_csv(std::istream& is);

// Records of one trial, computed from a seed derived from (master_seed, t).
std::vector<TrialRecord> run_trial(const ExperimentConfig& config, std::uint64_t trial);

// All trials on `config.workers` threads; records sorted by (trial_id, kind
// order within the trial). Stops picking up new trials once *stop is set.
std::vector<TrialRecord> run_trials(const ExperimentConfig& config,
                                    const std::atomic<bool>* stop = nullptr);

struct StatSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct CheckResult {
    std::string name;
    std::string matching_kind;
    std::string statistic;
    double threshold = 0.0;
    double pass_fraction = 0.0;  // fraction of records meeting the threshold
    double required = 1.0;       // fraction needed to pass
    double value = 0.0;          // aggregate value, for mean-type checks
    bool pass = false;
};

struct Summary {
    // kind -> statistic -> summary
    std::map<std::string, std::map<std::string, StatSummary>> stats;
    std::vector<CheckResult> checks;
    std::size_t records = 0;
    bool all_pass() const;
};

// Per-kind descriptive statistics; pass/fail checks when a config is given.
Summary summarize(const std::vector<TrialRecord>& records, const ExperimentConfig* config = nullptr);

std::string summary_json(const Summary& summary, const ExperimentConfig* config = nullptr);
void print_summary_table(std::ostream& os, const Summary& summary);

struct ExperimentResult {
    std::vector<TrialRecord> records;
    Summary summary;
    bool interrupted = false;
};

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::atomic<bool>* stop = nullptr);

}  // namespace mml
