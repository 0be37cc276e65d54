#include "mml/matching.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mml/errors.hpp"

namespace mml {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Position of every agent in every list: table[a * n_other + b] is b's
// position on a's list.
std::vector<int> position_table(const std::vector<std::vector<int>>& lists, std::size_t n_other) {
    std::vector<int> table(lists.size() * n_other, 0);
    for (std::size_t a = 0; a < lists.size(); ++a) {
        if (lists[a].size() != n_other)
            throw ShapeMismatch("preference list " + std::to_string(a) + " has " +
                                std::to_string(lists[a].size()) + " entries, expected " +
                                std::to_string(n_other));
        for (std::size_t pos = 0; pos < n_other; ++pos)
            table[a * n_other + static_cast<std::size_t>(lists[a][pos])] = static_cast<int>(pos);
    }
    return table;
}

void check_shapes(const Matching& mu, std::size_t n_men, std::size_t n_women) {
    if (mu.n_men() != n_men || mu.n_women() != n_women)
        throw ShapeMismatch("matching is " + std::to_string(mu.n_men()) + " x " +
                            std::to_string(mu.n_women()) + " but market is " +
                            std::to_string(n_men) + " x " + std::to_string(n_women));
}

// Returns wife vector of the proposing side.
std::vector<int> run_da(const std::vector<std::vector<int>>& proposer_lists,
                        const std::vector<std::vector<int>>& receiver_lists,
                        std::size_t& proposals) {
    const std::size_t n_prop = proposer_lists.size();
    const std::size_t n_recv = receiver_lists.size();
    const std::vector<int> recv_rank = position_table(receiver_lists, n_prop);
    for (const auto& l : proposer_lists)
        if (l.size() != n_recv) throw ShapeMismatch("preference list length mismatch");

    std::vector<std::size_t> next(n_prop, 0);
    std::vector<int> partner(n_prop, kUnmatched), held(n_recv, kUnmatched);
    std::vector<int> free;
    free.reserve(n_prop);
    for (std::size_t i = n_prop; i-- > 0;) free.push_back(static_cast<int>(i));

    proposals = 0;
    while (!free.empty()) {
        const int p = free.back();
        free.pop_back();
        const auto& list = proposer_lists[static_cast<std::size_t>(p)];
        auto& ptr = next[static_cast<std::size_t>(p)];
        if (ptr == list.size()) continue;  // exhausted: stays single
        const int r = list[ptr++];
        ++proposals;
        const std::size_t ru = static_cast<std::size_t>(r);
        const int current = held[ru];
        if (current == kUnmatched) {
            held[ru] = p;
            partner[static_cast<std::size_t>(p)] = r;
        } else if (recv_rank[ru * n_prop + static_cast<std::size_t>(p)] <
                   recv_rank[ru * n_prop + static_cast<std::size_t>(current)]) {
            held[ru] = p;
            partner[static_cast<std::size_t>(p)] = r;
            partner[static_cast<std::size_t>(current)] = kUnmatched;
            free.push_back(current);
        } else {
            free.push_back(p);
        }
    }
    return partner;
}

// Blocking pairs of mu restricted to supported agents, via a preference
// predicate prefers(agent, candidate, current) for each side.
template <class ManPrefers, class WomanPrefers>
std::vector<BlockingPair> blocking_pairs_impl(const Matching& mu, ManPrefers man_prefers,
                                              WomanPrefers woman_prefers, bool first_only) {
    std::vector<BlockingPair> out;
    for (std::size_t i = 0; i < mu.n_men(); ++i) {
        if (!mu.man_supported(i)) continue;
        for (std::size_t j = 0; j < mu.n_women(); ++j) {
            if (!mu.woman_supported(j) || mu.wife(i) == static_cast<int>(j)) continue;
            if (man_prefers(i, j, mu.wife(i)) && woman_prefers(j, i, mu.husband(j))) {
                out.push_back({static_cast<int>(i), static_cast<int>(j)});
                if (first_only) return out;
            }
        }
    }
    return out;
}

std::vector<BlockingPair> blocking_pairs_values(const Matching& mu, const LatentValues& v,
                                                bool first_only) {
    check_shapes(mu, v.n_men(), v.n_women());
    return blocking_pairs_impl(
        mu,
        [&](std::size_t i, std::size_t j, int w) {
            return v.X(i, j) < (w == kUnmatched ? kInf : v.X(i, static_cast<std::size_t>(w)));
        },
        [&](std::size_t j, std::size_t i, int h) {
            return v.Y(j, i) < (h == kUnmatched ? kInf : v.Y(j, static_cast<std::size_t>(h)));
        },
        first_only);
}

std::vector<BlockingPair> blocking_pairs_prefs(const Matching& mu, const PreferenceProfile& p,
                                               bool first_only) {
    check_shapes(mu, p.n_men(), p.n_women());
    const std::size_t nm = p.n_men(), nw = p.n_women();
    const auto man_pos = position_table(p.men, nw);
    const auto woman_pos = position_table(p.women, nm);
    return blocking_pairs_impl(
        mu,
        [&](std::size_t i, std::size_t j, int w) {
            return w == kUnmatched ||
                   man_pos[i * nw + j] < man_pos[i * nw + static_cast<std::size_t>(w)];
        },
        [&](std::size_t j, std::size_t i, int h) {
            return h == kUnmatched ||
                   woman_pos[j * nm + i] < woman_pos[j * nm + static_cast<std::size_t>(h)];
        },
        first_only);
}

// Indices into mu.pairs() whose removal covers each blocking pair: a blocking
// pair (i, j) disappears once i's pair or j's pair is removed, and the
// sub-market's blocking pairs are exactly the uncovered ones.
struct CoverProblem {
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::pair<int, int>> edges;  // (pair of man, pair of woman)
};

CoverProblem cover_problem(const Matching& mu, const LatentValues& values) {
    if (!mu.is_full()) throw Error("alpha-stability needs a full matching");
    CoverProblem cp;
    cp.pairs = mu.pairs();
    std::vector<int> pair_of_man(mu.n_men(), -1), pair_of_woman(mu.n_women(), -1);
    for (std::size_t k = 0; k < cp.pairs.size(); ++k) {
        pair_of_man[static_cast<std::size_t>(cp.pairs[k].first)] = static_cast<int>(k);
        pair_of_woman[static_cast<std::size_t>(cp.pairs[k].second)] = static_cast<int>(k);
    }
    for (const auto& bp : find_blocking_pairs(mu, values))
        cp.edges.emplace_back(pair_of_man[static_cast<std::size_t>(bp.man)],
                              pair_of_woman[static_cast<std::size_t>(bp.woman)]);
    return cp;
}

}  // namespace

Matching::Matching(std::vector<int> wife, std::vector<int> husband, std::vector<bool> men_in,
                   std::vector<bool> women_in)
    : wife_(std::move(wife)),
      husband_(std::move(husband)),
      men_in_(std::move(men_in)),
      women_in_(std::move(women_in)) {}

Matching Matching::in_market(std::vector<int> wife, std::size_t n_women) {
    std::vector<int> husband(n_women, kUnmatched);
    for (std::size_t i = 0; i < wife.size(); ++i) {
        const int w = wife[i];
        if (w == kUnmatched) continue;
        if (w < 0 || static_cast<std::size_t>(w) >= n_women ||
            husband[static_cast<std::size_t>(w)] != kUnmatched)
            throw Error("wife vector is not injective into the women");
        husband[static_cast<std::size_t>(w)] = static_cast<int>(i);
    }
    const std::size_t n_men = wife.size();
    return Matching(std::move(wife), std::move(husband), std::vector<bool>(n_men, true),
                    std::vector<bool>(n_women, true));
}

Matching Matching::full(std::vector<int> wife) {
    const std::size_t n = wife.size();
    if (std::find(wife.begin(), wife.end(), kUnmatched) != wife.end())
        throw Error("full matching must match every man");
    return in_market(std::move(wife), n);
}

Matching Matching::partial(std::size_t n_men, std::size_t n_women,
                           const std::vector<std::pair<int, int>>& pairs) {
    std::vector<int> wife(n_men, kUnmatched), husband(n_women, kUnmatched);
    std::vector<bool> men_in(n_men, false), women_in(n_women, false);
    for (const auto& [m, w] : pairs) {
        if (m < 0 || w < 0 || static_cast<std::size_t>(m) >= n_men ||
            static_cast<std::size_t>(w) >= n_women)
            throw Error("pair index out of range");
        const auto mu = static_cast<std::size_t>(m), wu = static_cast<std::size_t>(w);
        if (men_in[mu] || women_in[wu]) throw Error("agent appears in two pairs");
        wife[mu] = w;
        husband[wu] = m;
        men_in[mu] = women_in[wu] = true;
    }
    return Matching(std::move(wife), std::move(husband), std::move(men_in), std::move(women_in));
}

std::size_t Matching::matched_pairs() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(wife_.begin(), wife_.end(), [](int w) { return w != kUnmatched; }));
}

std::size_t Matching::men_support_size() const noexcept {
    return static_cast<std::size_t>(std::count(men_in_.begin(), men_in_.end(), true));
}

std::size_t Matching::women_support_size() const noexcept {
    return static_cast<std::size_t>(std::count(women_in_.begin(), women_in_.end(), true));
}

bool Matching::is_full() const noexcept {
    return n_men() == n_women() && matched_pairs() == n_men() &&
           men_support_size() == n_men() && women_support_size() == n_women();
}

std::vector<std::pair<int, int>> Matching::pairs() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < wife_.size(); ++i)
        if (wife_[i] != kUnmatched) out.emplace_back(static_cast<int>(i), wife_[i]);
    return out;
}

Matching Matching::restricted_to_men(const std::vector<bool>& keep) const {
    std::vector<std::pair<int, int>> kept;
    for (const auto& p : pairs())
        if (keep[static_cast<std::size_t>(p.first)]) kept.push_back(p);
    return partial(n_men(), n_women(), kept);
}

void Matching::swap_partners(std::size_t man_a, std::size_t man_b) {
    const int wa = wife_[man_a], wb = wife_[man_b];
    if (wa == kUnmatched || wb == kUnmatched) throw Error("can only swap matched men");
    std::swap(wife_[man_a], wife_[man_b]);
    husband_[static_cast<std::size_t>(wa)] = static_cast<int>(man_b);
    husband_[static_cast<std::size_t>(wb)] = static_cast<int>(man_a);
}

DaResult deferred_acceptance(const PreferenceProfile& prefs, Side proposing) {
    DaResult res;
    if (proposing == Side::Men) {
        auto wife = run_da(prefs.men, prefs.women, res.proposals);
        res.matching = Matching::in_market(std::move(wife), prefs.n_women());
    } else {
        auto husband = run_da(prefs.women, prefs.men, res.proposals);
        std::vector<int> wife(prefs.n_men(), kUnmatched);
        for (std::size_t j = 0; j < husband.size(); ++j)
            if (husband[j] != kUnmatched) wife[static_cast<std::size_t>(husband[j])] = static_cast<int>(j);
        res.matching = Matching::in_market(std::move(wife), prefs.n_women());
    }
    return res;
}

std::pair<Matching, MatchingOutcome> deferred_acceptance(const LatentValues& values,
                                                         Side proposing) {
    DaResult da = deferred_acceptance(prefs_from_latent(values), proposing);
    MatchingOutcome out = outcome_of(da.matching, values);
    out.proposal_count = da.proposals;
    return {std::move(da.matching), std::move(out)};
}

std::vector<BlockingPair> find_blocking_pairs(const Matching& mu, const LatentValues& values) {
    return blocking_pairs_values(mu, values, false);
}

bool is_stable(const Matching& mu, const LatentValues& values) {
    return blocking_pairs_values(mu, values, true).empty();
}

std::vector<BlockingPair> find_blocking_pairs(const Matching& mu, const PreferenceProfile& prefs) {
    return blocking_pairs_prefs(mu, prefs, false);
}

bool is_stable(const Matching& mu, const PreferenceProfile& prefs) {
    return blocking_pairs_prefs(mu, prefs, true).empty();
}

std::vector<Matching> enumerate_stable(const PreferenceProfile& prefs) {
    const std::size_t n = prefs.n_men();
    if (n != prefs.n_women()) throw NonSquare("enumeration needs a square market");
    if (n > kMaxEnumerationSize) throw TooLarge("enumerate_stable", n, kMaxEnumerationSize);
    const auto man_pos = position_table(prefs.men, n);
    const auto woman_pos = position_table(prefs.women, n);

    std::vector<Matching> out;
    std::vector<int> wife(n, kUnmatched);
    std::vector<bool> taken(n, false);

    // Depth-first over men in index order, women ascending, so complete
    // assignments come out in lexicographic order. A pair is checked as soon
    // as both of its members are assigned.
    auto compatible = [&](std::size_t k, std::size_t w) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t wi = static_cast<std::size_t>(wife[i]);
            if (man_pos[k * n + wi] < man_pos[k * n + w] && woman_pos[wi * n + k] < woman_pos[wi * n + i])
                return false;
            if (man_pos[i * n + w] < man_pos[i * n + wi] && woman_pos[w * n + i] < woman_pos[w * n + k])
                return false;
        }
        return true;
    };
    auto recurse = [&](auto&& self, std::size_t k) -> void {
        if (k == n) {
            out.push_back(Matching::full(wife));
            return;
        }
        for (std::size_t w = 0; w < n; ++w) {
            if (taken[w] || !compatible(k, w)) continue;
            taken[w] = true;
            wife[k] = static_cast<int>(w);
            self(self, k + 1);
            taken[w] = false;
            wife[k] = kUnmatched;
        }
    };
    recurse(recurse, 0);
    return out;
}

MatchingOutcome outcome_of(const Matching& mu, const LatentValues& values) {
    check_shapes(mu, values.n_men(), values.n_women());
    const std::size_t nm = values.n_men(), nw = values.n_women();
    MatchingOutcome out;
    out.value_men.assign(nm, 0.0);
    out.value_women.assign(nw, 0.0);
    out.rank_men.assign(nm, 0);
    out.rank_women.assign(nw, 0);
    for (std::size_t i = 0; i < nm; ++i) {
        const int w = mu.wife(i);
        if (!mu.man_supported(i) || w == kUnmatched) continue;
        const auto row = values.X.row(i);
        const double v = row[static_cast<std::size_t>(w)];
        out.value_men[i] = v;
        out.rank_men[i] =
            static_cast<int>(std::count_if(row.begin(), row.end(), [v](double x) { return x <= v; }));
    }
    for (std::size_t j = 0; j < nw; ++j) {
        const int h = mu.husband(j);
        if (!mu.woman_supported(j) || h == kUnmatched) continue;
        const auto row = values.Y.row(j);
        const double v = row[static_cast<std::size_t>(h)];
        out.value_women[j] = v;
        out.rank_women[j] =
            static_cast<int>(std::count_if(row.begin(), row.end(), [v](double y) { return y <= v; }));
    }
    return out;
}

std::size_t floor_fraction(double x, std::size_t n) {
    return static_cast<std::size_t>(std::floor(x * static_cast<double>(n) + 1e-9));
}

Truncation truncate_delta(const Matching& mu, const MatchingOutcome& outcome, double delta) {
    if (!(delta > 0.0 && delta < 1.0))
        throw DeltaOutOfRange("delta must lie in (0, 1); got " + std::to_string(delta));
    if (!mu.is_full()) throw Error("truncation needs a full matching");
    const std::size_t n = mu.n_men();
    const std::size_t drop = floor_fraction(delta / 2.0, n);
    const std::size_t keep = n - floor_fraction(delta, n);

    // Least happy first; ties by index.
    auto worst = [&](const std::vector<double>& v) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] > v[b]; });
        idx.resize(drop);
        return idx;
    };
    std::vector<bool> excluded(n, false);
    for (int i : worst(outcome.value_men)) excluded[static_cast<std::size_t>(i)] = true;
    for (int j : worst(outcome.value_women)) excluded[static_cast<std::size_t>(mu.husband(j))] = true;

    std::vector<bool> chosen(n, false);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n && count < keep; ++i)
        if (!excluded[i]) {
            chosen[i] = true;
            ++count;
        }

    Truncation t;
    t.matching = mu.restricted_to_men(chosen);
    t.removed_per_side = drop;
    t.x_delta.assign(n, 0.0);
    t.y_delta.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (chosen[i]) {
            const auto w = static_cast<std::size_t>(mu.wife(i));
            t.x_delta[i] = outcome.value_men[i];
            t.y_delta[w] = outcome.value_women[w];
        }
    return t;
}

AlphaCertificate greedy_alpha_certificate(const Matching& mu, const LatentValues& values) {
    const CoverProblem cp = cover_problem(mu, values);
    const std::size_t m = cp.pairs.size();
    std::vector<bool> removed(m, false);
    std::vector<std::size_t> degree(m);
    std::size_t removed_count = 0;
    while (true) {
        std::fill(degree.begin(), degree.end(), 0);
        bool any = false;
        for (const auto& [a, b] : cp.edges) {
            if (removed[static_cast<std::size_t>(a)] || removed[static_cast<std::size_t>(b)]) continue;
            any = true;
            ++degree[static_cast<std::size_t>(a)];
            ++degree[static_cast<std::size_t>(b)];
        }
        if (!any) break;
        // pairs are ordered by man, so the first maximum has the lowest index
        const auto best = static_cast<std::size_t>(
            std::max_element(degree.begin(), degree.end()) - degree.begin());
        removed[best] = true;
        ++removed_count;
    }

    std::vector<bool> keep(mu.n_men(), false);
    for (std::size_t k = 0; k < m; ++k)
        if (!removed[k]) keep[static_cast<std::size_t>(cp.pairs[k].first)] = true;

    AlphaCertificate cert;
    cert.removed = removed_count;
    cert.alpha_upper = static_cast<double>(removed_count) / static_cast<double>(mu.n_men());
    cert.stable_part = mu.restricted_to_men(keep);
    return cert;
}

double min_alpha_exact(const Matching& mu, const LatentValues& values) {
    const std::size_t n = mu.n_men();
    if (n > kMaxExactAlphaSize) throw TooLarge("exact alpha-stability", n, kMaxExactAlphaSize);
    const CoverProblem cp = cover_problem(mu, values);
    if (cp.edges.empty()) return 0.0;
    std::vector<std::uint32_t> edge_masks;
    for (const auto& [a, b] : cp.edges) edge_masks.push_back((1u << a) | (1u << b));

    std::size_t best = n;
    for (std::uint32_t s = 0; s < (1u << n); ++s) {
        const auto size = static_cast<std::size_t>(std::popcount(s));
        if (size >= best) continue;
        if (std::all_of(edge_masks.begin(), edge_masks.end(),
                        [s](std::uint32_t e) { return (e & s) != 0; }))
            best = size;
    }
    return static_cast<double>(best) / static_cast<double>(n);
}

bool is_alpha_stable_exact(const Matching& mu, const LatentValues& values, double alpha) {
    return min_alpha_exact(mu, values) <= alpha + 1e-12;
}

PreferenceProfile dummies_last_profile(const LatentValues& backfilled, std::size_t real_men) {
    PreferenceProfile p;
    for (std::size_t i = 0; i < backfilled.n_men(); ++i)
        p.men.push_back(ascending_order(backfilled.X.row(i)));
    for (std::size_t j = 0; j < backfilled.n_women(); ++j) {
        std::vector<int> order = ascending_order(backfilled.Y.row(j));
        std::stable_partition(order.begin(), order.end(),
                              [real_men](int i) { return static_cast<std::size_t>(i) < real_men; });
        p.women.push_back(std::move(order));
    }
    return p;
}

void write_matching(std::ostream& os, const Matching& mu) {
    for (const auto& [m, w] : mu.pairs()) os << (m + 1) << ' ' << (w + 1) << '\n';
}

std::string format_matching(const Matching& mu) {
    std::ostringstream os;
    write_matching(os, mu);
    return os.str();
}

}  // namespace mml
