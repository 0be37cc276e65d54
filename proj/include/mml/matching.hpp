#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mml/sampling.hpp"

namespace mml {

inline constexpr int kUnmatched = -1;

// A (possibly partial) matching between men [0, n_men) and women [0, n_women).
//
// The supports define the sub-market the matching lives in. Every matched
// agent is supported. A supported agent may be unmatched, which happens on
// the long side of an imbalanced market; such an agent prefers any partner to
// staying single.
class Matching {
public:
    Matching() = default;

    // Perfect matching of a square market: wife[i] is man i's partner.
    static Matching full(std::vector<int> wife);

    // All agents of an (n_men x n_women) market are supported; wife[i] may be
    // kUnmatched.
    static Matching in_market(std::vector<int> wife, std::size_t n_women);

    // Partial matching whose supports are exactly the matched agents.
    static Matching partial(std::size_t n_men, std::size_t n_women,
                            const std::vector<std::pair<int, int>>& pairs);

    std::size_t n_men() const noexcept { return wife_.size(); }
    std::size_t n_women() const noexcept { return husband_.size(); }

    int wife(std::size_t man) const { return wife_[man]; }
    int husband(std::size_t woman) const { return husband_[woman]; }
    bool man_supported(std::size_t man) const { return men_in_[man]; }
    bool woman_supported(std::size_t woman) const { return women_in_[woman]; }

    const std::vector<int>& wives() const noexcept { return wife_; }
    const std::vector<int>& husbands() const noexcept { return husband_; }

    std::size_t matched_pairs() const noexcept;
    std::size_t men_support_size() const noexcept;
    std::size_t women_support_size() const noexcept;
    bool is_full() const noexcept;

    // Matched pairs (man, woman), ascending by man.
    std::vector<std::pair<int, int>> pairs() const;

    // Restriction to the given men and their partners.
    Matching restricted_to_men(const std::vector<bool>& keep) const;

    // Exchanges the partners of two matched men.
    void swap_partners(std::size_t man_a, std::size_t man_b);

    friend bool operator==(const Matching&, const Matching&) = default;

private:
    Matching(std::vector<int> wife, std::vector<int> husband, std::vector<bool> men_in,
             std::vector<bool> women_in);

    std::vector<int> wife_;
    std::vector<int> husband_;
    std::vector<bool> men_in_;
    std::vector<bool> women_in_;
};

using PartialMatching = Matching;

// Per-agent welfare of a matching. Values are zero and ranks are zero for
// agents outside the support or left unmatched.
struct MatchingOutcome {
    std::vector<double> value_men;
    std::vector<double> value_women;
    std::vector<int> rank_men;    // 1 = favourite, over the full market
    std::vector<int> rank_women;
    std::size_t proposal_count = 0;
};

struct BlockingPair {
    int man;
    int woman;
    friend bool operator==(const BlockingPair&, const BlockingPair&) = default;
};

enum class Side { Men, Women };

struct DaResult {
    Matching matching;
    std::size_t proposals = 0;
};

// Proposal-queue deferred acceptance. Works on rectangular profiles; agents
// left over on the long side stay unmatched but supported.
DaResult deferred_acceptance(const PreferenceProfile& prefs, Side proposing);

// Convenience: DA on prefs_from_latent(values) plus outcome_of.
std::pair<Matching, MatchingOutcome> deferred_acceptance(const LatentValues& values,
                                                         Side proposing);

// All pairs (i, j), j != mu(i), inside the supports, where both strictly prefer
// each other to their partners. Sorted by (man, woman).
std::vector<BlockingPair> find_blocking_pairs(const Matching& mu, const LatentValues& values);
bool is_stable(const Matching& mu, const LatentValues& values);

// Same notions from preference lists alone.
std::vector<BlockingPair> find_blocking_pairs(const Matching& mu, const PreferenceProfile& prefs);
bool is_stable(const Matching& mu, const PreferenceProfile& prefs);

inline constexpr std::size_t kMaxEnumerationSize = 10;
inline constexpr std::size_t kMaxExactAlphaSize = 12;

// Every stable perfect matching of a square profile, in lexicographic order of
// the wife vector. Throws TooLarge for n > 10, NonSquare for rectangular input.
std::vector<Matching> enumerate_stable(const PreferenceProfile& prefs);

MatchingOutcome outcome_of(const Matching& mu, const LatentValues& values);

struct Truncation {
    PartialMatching matching;
    std::vector<double> x_delta;  // n entries, zero off-support
    std::vector<double> y_delta;
    std::size_t removed_per_side = 0;  // floor(delta n / 2)
};

// Drops the floor(delta n / 2) least happy men and women (largest values),
// then keeps n - floor(delta n) of the remaining men, lowest index first,
// together with their partners. Throws DeltaOutOfRange unless 0 < delta < 1.
Truncation truncate_delta(const Matching& mu, const MatchingOutcome& outcome, double delta);

// floor(x n) guarded against representation error in x n.
std::size_t floor_fraction(double x, std::size_t n);

struct AlphaCertificate {
    double alpha_upper = 0.0;
    PartialMatching stable_part;
    std::size_t removed = 0;
};

// Repeatedly removes the matched pair involved in the most blocking pairs
// (ties: lowest man index) until the remainder is stable.
AlphaCertificate greedy_alpha_certificate(const Matching& mu, const LatentValues& values);

// Exhaustive search over subsets of matched pairs. Throws TooLarge for n > 12.
bool is_alpha_stable_exact(const Matching& mu, const LatentValues& values, double alpha);

// Smallest alpha = removed / n admitting a stable sub-matching.
double min_alpha_exact(const Matching& mu, const LatentValues& values);

// Profile for a backfilled square market in which women rank the k backfill
// men (indices >= real_men) below every real man, i.e. a woman matched to a
// backfill man counts as single.
PreferenceProfile dummies_last_profile(const LatentValues& backfilled, std::size_t real_men);

// "man woman" per line, 1-based, ascending by man; unmatched men omitted.
void write_matching(std::ostream& os, const Matching& mu);
std::string format_matching(const Matching& mu);

}  // namespace mml
