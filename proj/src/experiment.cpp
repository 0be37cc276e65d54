#include "mml/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mml/errors.hpp"
#include "mml/market.hpp"
#include "mml/market_io.hpp"
#include "mml/matching.hpp"
#include "mml/oracles.hpp"
#include "mml/sampling.hpp"
#include "mml/stats.hpp"

namespace mml {
namespace {

// ---------------------------------------------------------------- config

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string canonical_word(std::string_view s) {
    std::string out;
    for (char ch : s)
        if (ch != '_' && ch != '-' && ch != ' ')
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    return out;
}

double parse_real(const std::string& field, const std::string& value) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(v))
        throw ConfigError(field, "expected a real number, got '" + value + "'");
    return v;
}

std::vector<double> parse_real_list(const std::string& field, const std::string& value) {
    std::vector<double> out;
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(field, trim(item)));
    if (out.empty()) throw ConfigError(field, "empty list");
    return out;
}

std::uint64_t parse_count(const std::string& field, const std::string& value) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec == std::errc() && ptr == value.data() + value.size()) return v;
    // allow 1e5-style counts
    const double d = parse_real(field, value);
    if (d < 0 || d != std::floor(d) || d > 9.0e18)
        throw ConfigError(field, "expected a nonnegative integer, got '" + value + "'");
    return static_cast<std::uint64_t>(d);
}

ExperimentKind parse_experiment(const std::string& value) {
    const std::string w = canonical_word(value);
    if (w == "valuedist") return ExperimentKind::ValueDist;
    if (w == "rankdist") return ExperimentKind::RankDist;
    if (w == "hyperbola") return ExperimentKind::Hyperbola;
    if (w == "approxstable") return ExperimentKind::ApproxStable;
    if (w == "imbalance") return ExperimentKind::Imbalance;
    if (w == "stablecount") return ExperimentKind::StableCount;
    if (w == "bounds") return ExperimentKind::Bounds;
    throw ConfigError("experiment", "unknown experiment '" + value + "'");
}

void parse_market(const std::string& value, ExperimentConfig& cfg) {
    std::string w = canonical_word(value);
    if (const auto open = w.find('('); open != std::string::npos) {
        if (w.back() != ')') throw ConfigError("market", "malformed market '" + value + "'");
        cfg.c = parse_real("market", w.substr(open + 1, w.size() - open - 2));
        w = w.substr(0, open);
    }
    if (w == "uniform")
        cfg.market = MarketKind::Uniform;
    else if (w == "public" || w == "publicscores")
        cfg.market = MarketKind::PublicScores;
    else if (w == "cbounded")
        cfg.market = MarketKind::CBounded;
    else
        throw ConfigError("market", "unknown market '" + value + "'");
}

std::vector<std::string> required_tolerances(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::ValueDist:
        case ExperimentKind::RankDist:
        case ExperimentKind::Imbalance:
            return {"ks", "pass_fraction"};
        case ExperimentKind::Hyperbola:
            return {"hyperbola", "pass_fraction"};
        case ExperimentKind::ApproxStable:
            return {"ks", "alpha", "pass_fraction"};
        case ExperimentKind::StableCount:
            return {"stable_count_target", "stable_count_abs"};
        case ExperimentKind::Bounds:
            return {};
    }
    return {};
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.n == 0) throw ConfigError("n", "must be at least 1");
    if (cfg.trials == 0) throw ConfigError("trials", "must be at least 1");
    if (!(cfg.delta >= 0.0 && cfg.delta < 1.0)) throw ConfigError("delta", "must lie in [0, 1)");
    if (!(cfg.c >= 1.0)) throw ConfigError("c", "must be >= 1");
    if (cfg.workers == 0) throw ConfigError("workers", "must be at least 1");
    if (!(cfg.zeta > 0.0)) throw ConfigError("zeta", "must be positive");
    if (!(cfg.theta > 0.0)) throw ConfigError("theta", "must be positive");
    for (const auto& [name, v] : cfg.tolerances)
        if (!(v > 0.0)) throw ConfigError("tol." + name, "tolerances must be positive");
    for (const auto& name : required_tolerances(cfg.experiment))
        if (!cfg.tolerances.count(name))
            throw ConfigError("tol." + name, "required by experiment " + to_string(cfg.experiment));
    if (cfg.experiment == ExperimentKind::StableCount && cfg.n > kMaxEnumerationSize)
        throw ConfigError("n", "stable counting enumerates; n must be <= 10");
    if (cfg.experiment == ExperimentKind::Imbalance && (!cfg.k || *cfg.k == 0 || *cfg.k >= cfg.n))
        throw ConfigError("k", "imbalance needs 1 <= k < n");
    if (cfg.experiment == ExperimentKind::Bounds) {
        if (cfg.inner_trials == 0) throw ConfigError("inner_trials", "must be at least 1");
        if (!cfg.chernoff && !cfg.dkw) throw ConfigError("bounds", "nothing to validate");
        for (double t : cfg.chernoff_t)
            if (!(t >= 0.0)) throw ConfigError("chernoff_t", "must be nonnegative");
        if (!(cfg.dkw_delta > 0.0)) throw ConfigError("dkw_delta", "must be positive");
        for (double e : cfg.dkw_epsilon)
            if (!(e > 0.0)) throw ConfigError("dkw_epsilon", "must be positive");
    }
}

// ---------------------------------------------------------------- trials

CanonicalMarket make_market(const ExperimentConfig& cfg, Seed seed, std::size_t n_men,
                            std::size_t n_women) {
    switch (cfg.market) {
        case MarketKind::Uniform:
            return uniform_market(n_men, n_women);
        case MarketKind::CBounded:
            return random_cbounded_market(n_men, n_women, cfg.c, stream_key(seed, "market"));
        case MarketKind::PublicScores: {
            const double log_c = std::log(cfg.c);
            auto scores = [&](std::string_view label, std::size_t len) {
                std::vector<double> s(len);
                for (std::size_t i = 0; i < len; ++i)
                    s[i] = std::exp(log_c * (2.0 * uniform_at(stream_key(seed, label, i)) - 1.0));
                return s;
            };
            return public_scores_market(scores("public.a", n_women), scores("public.b", n_men));
        }
    }
    throw Error("unknown market kind");
}

LatentValues sample_with_retry(const BalancedMarket& bal, Seed seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        try {
            return sample_latent(bal, derive_key(stream_key(seed, "values"), attempt));
        } catch (const DuplicateValue&) {
            if (attempt == 16) throw;
        }
    }
}

double mean_positive(const std::vector<int>& ranks) {
    double s = 0.0;
    std::size_t c = 0;
    for (int r : ranks)
        if (r > 0) {
            s += r;
            ++c;
        }
    return c ? s / static_cast<double>(c) : 0.0;
}

std::vector<double> matched_values(const std::vector<double>& values, const std::vector<int>& ranks) {
    std::vector<double> out;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (ranks[i] > 0) out.push_back(values[i]);
    return out;
}

// Statistics shared by all matching-based experiments. x_delta / y_delta are
// the (possibly truncated) value vectors used for the closed-form rate, the
// hyperbola product and the dispersion diagnostic.
void fill_statistics(TrialRecord& rec, const MatchingOutcome& outcome,
                     const std::vector<double>& x_delta, const std::vector<double>& y_delta,
                     const BalancedMarket& bal, std::span<const double> phi,
                     const ExperimentConfig& cfg) {
    const std::vector<double> x = matched_values(outcome.value_men, outcome.rank_men);
    const ExponentialFit fit = best_fit_exponential(x);
    rec.lambda_fit = fit.lambda;
    rec.ks_fit = fit.ks_distance;
    rec.lambda_ysum = l1_norm(y_delta);
    rec.ks_ysum = rec.lambda_ysum > 0.0 ? ks_distance_to_exp(x, rec.lambda_ysum) : 1.0;

    std::vector<int> ranks;
    std::vector<double> phis;
    for (std::size_t i = 0; i < outcome.rank_men.size(); ++i)
        if (outcome.rank_men[i] > 0) {
            ranks.push_back(outcome.rank_men[i]);
            phis.push_back(phi[i]);
        }
    const ExponentialFit rank_fit = best_fit_exponential(rescaled_ranks(ranks, phis));
    rec.lambda_rank = rank_fit.lambda;
    rec.ks_rank = rank_fit.ks_distance;

    rec.hyperbola = hyperbola_product(x_delta, y_delta, bal.n());
    rec.dispersion = eig_dispersion(bal.M, y_delta, cfg.zeta).violating_fraction;
    rec.rank_ratio_frac = rank_value_ratio_report(outcome, phi, cfg.theta);
    rec.mean_rank_men = mean_positive(outcome.rank_men);
    rec.mean_rank_women = mean_positive(outcome.rank_women);
    rec.proposal_count = static_cast<double>(outcome.proposal_count);
}

TrialRecord square_record(std::uint64_t trial, std::string kind, const Matching& mu,
                          const MatchingOutcome& outcome, const BalancedMarket& bal,
                          const ExperimentConfig& cfg) {
    TrialRecord rec;
    rec.trial_id = trial;
    rec.matching_kind = std::move(kind);
    if (cfg.delta > 0.0) {
        const Truncation t = truncate_delta(mu, outcome, cfg.delta);
        fill_statistics(rec, outcome, t.x_delta, t.y_delta, bal, bal.phi, cfg);
    } else {
        fill_statistics(rec, outcome, outcome.value_men, outcome.value_women, bal, bal.phi, cfg);
    }
    return rec;
}

const char* side_name(Side s) { return s == Side::Men ? "MOSM" : "WOSM"; }

std::vector<TrialRecord> matching_trial(const ExperimentConfig& cfg, std::uint64_t trial) {
    const Seed seed = trial_seed(cfg.master_seed, trial);
    const BalancedMarket bal = sinkhorn_balance(make_market(cfg, seed, cfg.n, cfg.n));
    const LatentValues values = sample_with_retry(bal, seed);
    const PreferenceProfile prefs = prefs_from_latent(values);

    std::vector<TrialRecord> out;
    for (Side side : {Side::Men, Side::Women}) {
        DaResult da = deferred_acceptance(prefs, side);
        MatchingOutcome outcome = outcome_of(da.matching, values);
        outcome.proposal_count = da.proposals;

        if (cfg.experiment == ExperimentKind::ApproxStable) {
            Matching perturbed = da.matching;
            CounterRng rng(stream_key(seed, "swaps", side == Side::Men ? 0 : 1));
            const std::size_t n = cfg.n;
            for (std::size_t s = 0; s < cfg.swaps && n > 1; ++s) {
                const std::size_t a = rng() % n;
                std::size_t b = rng() % (n - 1);
                if (b >= a) ++b;
                perturbed.swap_partners(a, b);
            }
            MatchingOutcome pout = outcome_of(perturbed, values);
            TrialRecord rec =
                square_record(trial, std::string(side_name(side)) + "~swap", perturbed, pout, bal, cfg);
            rec.alpha_cert = greedy_alpha_certificate(perturbed, values).alpha_upper;
            out.push_back(std::move(rec));
        } else {
            out.push_back(square_record(trial, side_name(side), da.matching, outcome, bal, cfg));
        }
    }

    if (cfg.n <= kMaxEnumerationSize && cfg.experiment != ExperimentKind::ApproxStable) {
        const std::vector<Matching> all = enumerate_stable(prefs);
        for (auto& rec : out) rec.stable_count = static_cast<double>(all.size());
        for (std::size_t k = 0; k < all.size(); ++k) {
            TrialRecord rec = square_record(trial, "enum:" + std::to_string(k), all[k],
                                            outcome_of(all[k], values), bal, cfg);
            rec.stable_count = static_cast<double>(all.size());
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<TrialRecord> imbalance_trial(const ExperimentConfig& cfg, std::uint64_t trial) {
    const Seed seed = trial_seed(cfg.master_seed, trial);
    const std::size_t k = *cfg.k;
    const std::size_t real = cfg.n - k;
    const CanonicalMarket rect = make_market(cfg, seed, real, cfg.n);
    const BalancedMarket bal = sinkhorn_balance(backfill_imbalanced(rect, k));
    const LatentValues full = sample_with_retry(bal, seed);
    const LatentValues values = full.first_men(real);
    const PreferenceProfile prefs = prefs_from_latent(values);
    const PreferenceProfile extended = dummies_last_profile(full, real);
    const std::span<const double> phi(bal.phi.data(), real);

    std::vector<TrialRecord> out;
    for (Side side : {Side::Men, Side::Women}) {
        const DaResult da = deferred_acceptance(prefs, side);
        MatchingOutcome outcome = outcome_of(da.matching, values);
        outcome.proposal_count = da.proposals;

        const DaResult da_ext = deferred_acceptance(extended, side);
        bool agree = true;
        for (std::size_t i = 0; i < real; ++i) agree = agree && da_ext.matching.wife(i) == da.matching.wife(i);

        TrialRecord rec;
        rec.trial_id = trial;
        rec.matching_kind = side_name(side);
        fill_statistics(rec, outcome, outcome.value_men, outcome.value_women, bal, phi, cfg);
        rec.da_agree = agree ? 1.0 : 0.0;
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<TrialRecord> stable_count_trial(const ExperimentConfig& cfg, std::uint64_t trial) {
    const Seed seed = trial_seed(cfg.master_seed, trial);
    const BalancedMarket bal = sinkhorn_balance(make_market(cfg, seed, cfg.n, cfg.n));
    const LatentValues values = sample_with_retry(bal, seed);
    TrialRecord rec;
    rec.trial_id = trial;
    rec.matching_kind = "S";
    rec.stable_count = static_cast<double>(enumerate_stable(prefs_from_latent(values)).size());
    return {rec};
}

// Half-width r of the rate interval [1 - r, 1 + r] whose exponential CDFs all
// lie within `delta` of Exp(1) in sup-norm.
double rate_spread_for(double delta) {
    double lo = 0.0, hi = 0.99;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double d = std::max(exp_cdf_distance(1.0, 1.0 - mid), exp_cdf_distance(1.0, 1.0 + mid));
        (d <= delta ? lo : hi) = mid;
    }
    return lo;
}

std::string bound_kind(const char* prefix, double parameter) {
    std::ostringstream os;
    os << prefix << parameter;
    return os.str();
}

std::vector<TrialRecord> bounds_trial(const ExperimentConfig& cfg, std::uint64_t trial) {
    const Seed seed = trial_seed(cfg.master_seed, trial);
    const std::size_t n = cfg.n;

    CounterRng rng(stream_key(seed, "bounds.u"));
    std::vector<double> u(n);
    for (double& ui : u) ui = std::exp(std::log(2.0) * (2.0 * rng.uniform() - 1.0));
    const double scale = static_cast<double>(n) / std::accumulate(u.begin(), u.end(), 0.0);
    for (double& ui : u) ui *= scale;

    std::vector<TrialRecord> out;
    auto record = [&](std::string kind, double bound, double empirical) {
        TrialRecord r;
        r.trial_id = trial;
        r.matching_kind = std::move(kind);
        r.bound = bound;
        r.empirical = empirical;
        out.push_back(std::move(r));
    };

    if (cfg.chernoff) {
        const auto freq = chernoff_frequency_mc(u, cfg.chernoff_t, cfg.inner_trials,
                                                stream_key(seed, "bounds.chernoff"));
        for (std::size_t k = 0; k < cfg.chernoff_t.size(); ++k)
            record(bound_kind("chernoff:t=", cfg.chernoff_t[k]),
                   chernoff_lower_tail(u, cfg.chernoff_t[k]), freq[k]);
    }

    if (cfg.dkw) {
        const double spread = rate_spread_for(cfg.dkw_delta);
        CounterRng rate_rng(stream_key(seed, "bounds.rates"));
        std::vector<double> rates(n);
        for (double& r : rates) r = 1.0 - spread + 2.0 * spread * rate_rng.uniform();
        for (double eps : cfg.dkw_epsilon)
            record(bound_kind("dkw:eps=", eps), dkw_bound(n, cfg.dkw_delta, eps),
                   dkw_violation_frequency_mc(rates, cfg.dkw_delta, eps, cfg.inner_trials,
                                              stream_key(seed, "bounds.dkw")));
    }
    return out;
}

// ---------------------------------------------------------------- checks

struct CheckSpec {
    std::string name;
    std::string kind;
    std::string statistic;
    double threshold;
    double required;
    std::function<bool(const TrialRecord&)> ok;
};

std::vector<CheckSpec> check_specs(const ExperimentConfig& cfg) {
    std::vector<CheckSpec> specs;
    const auto& tol = cfg.tolerances;
    auto get = [&](const char* name) { return tol.at(name); };
    switch (cfg.experiment) {
        case ExperimentKind::ValueDist:
        case ExperimentKind::RankDist: {
            const bool value = cfg.experiment == ExperimentKind::ValueDist;
            const double ks = get("ks");
            for (const auto& kind : cfg.check_matchings)
                specs.push_back({value ? "value_ks_ysum" : "rank_ks_fit", kind,
                                 value ? "ks_ysum" : "ks_rank", ks, get("pass_fraction"),
                                 value ? std::function<bool(const TrialRecord&)>(
                                             [ks](const TrialRecord& r) { return r.ks_ysum <= ks; })
                                       : [ks](const TrialRecord& r) { return r.ks_rank <= ks; }});
            break;
        }
        case ExperimentKind::Hyperbola: {
            const double h = get("hyperbola");
            for (const auto& kind : cfg.check_matchings)
                specs.push_back({"hyperbola_dev", kind, "hyperbola", h, get("pass_fraction"),
                                 [h](const TrialRecord& r) { return std::abs(r.hyperbola - 1.0) <= h; }});
            break;
        }
        case ExperimentKind::ApproxStable: {
            const double ks = get("ks"), a = get("alpha");
            for (const auto& base : cfg.check_matchings) {
                const std::string kind = base + "~swap";
                specs.push_back({"value_ks_fit", kind, "ks_fit", ks, get("pass_fraction"),
                                 [ks](const TrialRecord& r) { return r.ks_fit <= ks; }});
                specs.push_back({"alpha_certificate", kind, "alpha_cert", a, get("pass_fraction"),
                                 [a](const TrialRecord& r) { return r.alpha_cert <= a; }});
            }
            break;
        }
        case ExperimentKind::Imbalance: {
            const double ks = get("ks");
            for (const auto& kind : cfg.check_matchings) {
                specs.push_back({"value_ks_fit", kind, "ks_fit", ks, get("pass_fraction"),
                                 [ks](const TrialRecord& r) { return r.ks_fit <= ks; }});
                specs.push_back({"da_agrees_with_backfill", kind, "da_agree", 1.0, 1.0,
                                 [](const TrialRecord& r) { return r.da_agree == 1.0; }});
            }
            break;
        }
        case ExperimentKind::Bounds:
        {
            std::vector<std::string> kinds;
            if (cfg.chernoff)
                for (double t : cfg.chernoff_t) kinds.push_back(bound_kind("chernoff:t=", t));
            if (cfg.dkw)
                for (double e : cfg.dkw_epsilon) kinds.push_back(bound_kind("dkw:eps=", e));
            for (const auto& kind : kinds)
                specs.push_back({"empirical_below_bound", kind, "empirical", 0.0, 1.0,
                                 [](const TrialRecord& r) { return r.empirical <= r.bound; }});
        }
            break;
        case ExperimentKind::StableCount:
            break;  // mean-type check, handled separately
    }
    return specs;
}

double sample_stddev(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

// ---------------------------------------------------------------- public

double ExperimentConfig::tolerance(const std::string& name) const {
    const auto it = tolerances.find(name);
    if (it == tolerances.end()) throw ConfigError("tol." + name, "missing tolerance");
    return it->second;
}

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::ValueDist: return "ValueDist";
        case ExperimentKind::RankDist: return "RankDist";
        case ExperimentKind::Hyperbola: return "Hyperbola";
        case ExperimentKind::ApproxStable: return "ApproxStable";
        case ExperimentKind::Imbalance: return "Imbalance";
        case ExperimentKind::StableCount: return "StableCount";
        case ExperimentKind::Bounds: return "Bounds";
    }
    return "?";
}

std::string to_string(MarketKind kind) {
    switch (kind) {
        case MarketKind::Uniform: return "Uniform";
        case MarketKind::PublicScores: return "PublicScores";
        case MarketKind::CBounded: return "CBounded";
    }
    return "?";
}

ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig cfg;
    bool have_experiment = false, have_n = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (value.empty()) throw ConfigError(key, "empty value");

        if (key == "experiment") {
            cfg.experiment = parse_experiment(value);
            have_experiment = true;
        } else if (key == "n") {
            cfg.n = parse_count(key, value);
            have_n = true;
        } else if (key == "trials") {
            cfg.trials = parse_count(key, value);
        } else if (key == "master_seed") {
            cfg.master_seed = parse_count(key, value);
        } else if (key == "market") {
            parse_market(value, cfg);
        } else if (key == "c") {
            cfg.c = parse_real(key, value);
        } else if (key == "delta") {
            cfg.delta = parse_real(key, value);
        } else if (key == "alpha") {
            cfg.alpha = parse_real(key, value);
        } else if (key == "k") {
            cfg.k = parse_count(key, value);
        } else if (key == "swaps") {
            cfg.swaps = parse_count(key, value);
        } else if (key == "workers") {
            cfg.workers = parse_count(key, value);
        } else if (key == "zeta") {
            cfg.zeta = parse_real(key, value);
        } else if (key == "theta") {
            cfg.theta = parse_real(key, value);
        } else if (key == "inner_trials") {
            cfg.inner_trials = parse_count(key, value);
        } else if (key == "check_matchings") {
            cfg.check_matchings.clear();
            std::istringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                const std::string w = canonical_word(item);
                if (w != "mosm" && w != "wosm")
                    throw ConfigError(key, "expected MOSM and/or WOSM, got '" + trim(item) + "'");
                cfg.check_matchings.push_back(w == "mosm" ? "MOSM" : "WOSM");
            }
            if (cfg.check_matchings.empty()) throw ConfigError(key, "empty list");
        } else if (key == "bounds") {
            const std::string w = canonical_word(value);
            if (w != "chernoff" && w != "dkw" && w != "both")
                throw ConfigError(key, "expected chernoff, dkw or both");
            cfg.chernoff = w != "dkw";
            cfg.dkw = w != "chernoff";
        } else if (key == "chernoff_t") {
            cfg.chernoff_t = parse_real_list(key, value);
        } else if (key == "dkw_delta") {
            cfg.dkw_delta = parse_real(key, value);
        } else if (key == "dkw_epsilon") {
            cfg.dkw_epsilon = parse_real_list(key, value);
        } else if (key.rfind("tol.", 0) == 0 && key.size() > 4) {
            cfg.tolerances[key.substr(4)] = parse_real(key, value);
        } else {
            throw ConfigError(key, "unknown key");
        }
    }
    if (!have_experiment) throw ConfigError("experiment", "missing");
    if (!have_n) throw ConfigError("n", "missing");
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
    return parse_config(in);
}

void apply_env_overrides(ExperimentConfig& config) {
    if (const char* w = std::getenv("MML_WORKERS"); w && *w) {
        config.workers = parse_count("MML_WORKERS", w);
        if (config.workers == 0) throw ConfigError("MML_WORKERS", "must be at least 1");
    }
}

const std::vector<NumericField>& numeric_fields() {
    static const std::vector<NumericField> fields = {
        {"lambda_fit", &TrialRecord::lambda_fit},
        {"lambda_ysum", &TrialRecord::lambda_ysum},
        {"ks_fit", &TrialRecord::ks_fit},
        {"ks_ysum", &TrialRecord::ks_ysum},
        {"hyperbola", &TrialRecord::hyperbola},
        {"dispersion", &TrialRecord::dispersion},
        {"rank_ratio_frac", &TrialRecord::rank_ratio_frac},
        {"lambda_rank", &TrialRecord::lambda_rank},
        {"ks_rank", &TrialRecord::ks_rank},
        {"mean_rank_men", &TrialRecord::mean_rank_men},
        {"mean_rank_women", &TrialRecord::mean_rank_women},
        {"proposal_count", &TrialRecord::proposal_count},
        {"stable_count", &TrialRecord::stable_count},
        {"alpha_cert", &TrialRecord::alpha_cert},
        {"da_agree", &TrialRecord::da_agree},
        {"bound", &TrialRecord::bound},
        {"empirical", &TrialRecord::empirical},
    };
    return fields;
}

void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
    os << "trial_id,matching_kind";
    for (const auto& f : numeric_fields()) os << ',' << f.name;
    os << '\n';
    for (const auto& r : records) {
        os << r.trial_id << ',' << r.matching_kind;
        for (const auto& f : numeric_fields()) os << ',' << format_double(r.*f.member);
        os << '\n';
    }
}

std::string format_csv(const std::vector<TrialRecord>& records) {
    std::ostringstream os;
    write_csv(os, records);
    return os.str();
}

std::vector<TrialRecord> read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw Error("csv: missing header");
    const auto header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
    if (!col.count("trial_id") || !col.count("matching_kind"))
        throw Error("csv: header needs trial_id and matching_kind");

    std::vector<TrialRecord> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw Error("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells");
        TrialRecord r;
        r.trial_id = parse_count("trial_id", cells[col["trial_id"]]);
        r.matching_kind = cells[col["matching_kind"]];
        for (const auto& f : numeric_fields())
            if (const auto it = col.find(f.name); it != col.end())
                r.*f.member = parse_real(f.name, cells[it->second]);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TrialRecord> run_trial(const ExperimentConfig& config, std::uint64_t trial) {
    switch (config.experiment) {
        case ExperimentKind::ValueDist:
        case ExperimentKind::RankDist:
        case ExperimentKind::Hyperbola:
        case ExperimentKind::ApproxStable:
            return matching_trial(config, trial);
        case ExperimentKind::Imbalance:
            return imbalance_trial(config, trial);
        case ExperimentKind::StableCount:
            return stable_count_trial(config, trial);
        case ExperimentKind::Bounds:
            return bounds_trial(config, trial);
    }
    return {};
}

std::vector<TrialRecord> run_trials(const ExperimentConfig& config, const std::atomic<bool>* stop) {
    std::vector<std::vector<TrialRecord>> per_trial(config.trials);
    std::vector<bool> done(config.trials, false);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        while (true) {
            if (stop && stop->load()) return;
            {
                std::lock_guard lock(failure_mutex);
                if (failure) return;
            }
            const std::size_t t = next.fetch_add(1);
            if (t >= config.trials) return;
            try {
                per_trial[t] = run_trial(config, t);
                done[t] = true;  // distinct elements written by distinct threads
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const std::size_t threads = std::min(config.workers, config.trials);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<TrialRecord> out;
    for (std::size_t t = 0; t < config.trials; ++t)
        if (done[t]) std::move(per_trial[t].begin(), per_trial[t].end(), std::back_inserter(out));
    return out;
}

bool Summary::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

Summary summarize(const std::vector<TrialRecord>& records, const ExperimentConfig* config) {
    Summary s;
    s.records = records.size();
    std::map<std::string, std::vector<const TrialRecord*>> by_kind;
    for (const auto& r : records) by_kind[r.matching_kind].push_back(&r);

    for (const auto& [kind, recs] : by_kind)
        for (const auto& f : numeric_fields()) {
            std::vector<double> v;
            v.reserve(recs.size());
            for (const auto* r : recs) v.push_back(r->*f.member);
            StatSummary st;
            st.count = v.size();
            st.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            st.stddev = sample_stddev(v, st.mean);
            st.min = *std::min_element(v.begin(), v.end());
            st.max = *std::max_element(v.begin(), v.end());
            s.stats[kind][f.name] = st;
        }

    if (!config) return s;

    for (const auto& spec : check_specs(*config)) {
        CheckResult c;
        c.name = spec.name;
        c.matching_kind = spec.kind;
        c.statistic = spec.statistic;
        c.threshold = spec.threshold;
        c.required = spec.required;
        const auto it = by_kind.find(spec.kind);
        if (it != by_kind.end() && !it->second.empty()) {
            const auto good = std::count_if(it->second.begin(), it->second.end(),
                                            [&](const TrialRecord* r) { return spec.ok(*r); });
            c.pass_fraction = static_cast<double>(good) / static_cast<double>(it->second.size());
            c.pass = c.pass_fraction >= c.required;
        }
        c.value = c.pass_fraction;
        s.checks.push_back(std::move(c));
    }

    if (config->experiment == ExperimentKind::StableCount) {
        CheckResult c;
        c.name = "mean_stable_count";
        c.matching_kind = "S";
        c.statistic = "stable_count";
        c.threshold = config->tolerance("stable_count_abs");
        const auto it = s.stats.find("S");
        if (it != s.stats.end()) {
            c.value = it->second.at("stable_count").mean;
            c.pass = std::abs(c.value - config->tolerance("stable_count_target")) <= c.threshold;
            c.pass_fraction = c.pass ? 1.0 : 0.0;
        }
        s.checks.push_back(std::move(c));
    }
    return s;
}

std::string summary_json(const Summary& summary, const ExperimentConfig* config) {
    nlohmann::ordered_json j;
    if (config) {
        j["experiment"] = to_string(config->experiment);
        j["market"] = to_string(config->market);
        j["n"] = config->n;
        j["trials"] = config->trials;
        j["master_seed"] = config->master_seed;
        j["delta"] = config->delta;
        if (config->k) j["k"] = *config->k;
        j["check_matchings"] = config->check_matchings;
        j["tolerances"] = config->tolerances;
    }
    j["records"] = summary.records;
    for (const auto& [kind, stats] : summary.stats)
        for (const auto& [name, st] : stats)
            j["statistics"][kind][name] = {{"count", st.count}, {"mean", st.mean},
                                           {"stddev", st.stddev}, {"min", st.min},
                                           {"max", st.max}};
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : summary.checks)
        j["checks"].push_back({{"name", c.name},
                               {"matching_kind", c.matching_kind},
                               {"statistic", c.statistic},
                               {"threshold", c.threshold},
                               {"pass_fraction", c.pass_fraction},
                               {"required", c.required},
                               {"value", c.value},
                               {"pass", c.pass}});
    j["all_pass"] = summary.all_pass();
    return j.dump(2);
}

void print_summary_table(std::ostream& os, const Summary& summary) {
    const auto flags = os.flags();
    for (const auto& [kind, stats] : summary.stats) {
        os << "[" << kind << "]\n";
        os << std::left << std::setw(18) << "statistic" << std::right << std::setw(8) << "count"
           << std::setw(14) << "mean" << std::setw(14) << "stddev" << std::setw(14) << "min"
           << std::setw(14) << "max" << '\n';
        for (const auto& [name, st] : stats) {
            if (st.min == 0.0 && st.max == 0.0) continue;  // unused column
            os << std::left << std::setw(18) << name << std::right << std::setw(8) << st.count
               << std::setprecision(6) << std::setw(14) << st.mean << std::setw(14) << st.stddev
               << std::setw(14) << st.min << std::setw(14) << st.max << '\n';
        }
    }
    for (const auto& c : summary.checks)
        os << (c.pass ? "PASS " : "FAIL ") << c.name << " [" << c.matching_kind << "] "
           << c.statistic << " threshold " << c.threshold << ": "
           << (c.name == "mean_stable_count" ? "mean " + std::to_string(c.value)
                                             : "fraction " + std::to_string(c.pass_fraction) +
                                                   " (need " + std::to_string(c.required) + ")")
           << '\n';
    os.flags(flags);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::atomic<bool>* stop) {
    ExperimentResult res;
    res.records = run_trials(config, stop);
    res.interrupted = stop && stop->load();
    res.summary = summarize(res.records, &config);
    return res;
}

}  // namespace mml
