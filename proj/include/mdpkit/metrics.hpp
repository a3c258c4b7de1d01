#pragma once

#include <optional>
#include <vector>

#include "mdpkit/mdp.hpp"
#include "mdpkit/scalar.hpp"

namespace mdpkit {

/// Real-valued partial function over a finite index set. An undefined
/// index is distinct from value 0; both are excluded from the "jointly
/// positive" sups below.
template <class T>
struct PartialValuation {
    std::vector<std::optional<T>> values;

    std::size_t size() const { return values.size(); }
};

/// sup |f(a) - g(a)| over indices where both f(a) > 0 and g(a) > 0.
/// The sup over an empty set is 0 by convention (not an error): with
/// equal supports the index set is never empty for the kernels we care
/// about, and 0 is the value the equal-support theorems need.
template <class T>
T total_variation(const PartialValuation<T>& f, const PartialValuation<T>& g) {
    T best(0);
    const std::size_t n = std::min(f.size(), g.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!f.values[i] || !g.values[i]) continue;
        const T& fv = *f.values[i];
        const T& gv = *g.values[i];
        if (fv > T(0) && gv > T(0)) {
            const T d = abs_value(T(fv - gv));
            if (d > best) best = d;
        }
    }
    return best;
}

/// sup max(f(a)/g(a), g(a)/f(a)) - 1 over jointly positive indices;
/// 0 when no index is jointly positive.
template <class T>
T ratio_distance(const PartialValuation<T>& f, const PartialValuation<T>& g) {
    T best(1);
    bool any = false;
    const std::size_t n = std::min(f.size(), g.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!f.values[i] || !g.values[i]) continue;
        const T& fv = *f.values[i];
        const T& gv = *g.values[i];
        if (fv > T(0) && gv > T(0)) {
            any = true;
            const T r = fv > gv ? fv / gv : gv / fv;
            if (r > best) best = r;
        }
    }
    if (!any) return T(0);
    return best - T(1);
}

/// Flattens a transition kernel into one valuation over (i,a,j) triples,
/// undefined where a is not available in i. One code path serves both
/// the P and the r distances.
template <class T>
PartialValuation<T> flatten_kernel(const Mdp<T>& m) {
    const int n = m.num_states();
    const int amax = m.max_actions();
    PartialValuation<T> pv;
    pv.values.assign(static_cast<std::size_t>(n) * amax * n, std::nullopt);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m.num_actions(i); ++a)
            for (int j = 0; j < n; ++j)
                pv.values[(static_cast<std::size_t>(i) * amax + a) * n + j] = m.trans[i][a][j];
    return pv;
}

template <class T>
PartialValuation<T> flatten_rewards(const Mdp<T>& m) {
    const int n = m.num_states();
    const int amax = m.max_actions();
    PartialValuation<T> pv;
    pv.values.assign(static_cast<std::size_t>(n) * amax, std::nullopt);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m.num_actions(i); ++a)
            pv.values[static_cast<std::size_t>(i) * amax + a] = m.reward[i][a];
    return pv;
}

template <class T>
void check_same_structure(const Mdp<T>& m1, const Mdp<T>& m2) {
    if (m1.num_states() != m2.num_states())
        throw std::invalid_argument("models have different state sets");
    for (int i = 0; i < m1.num_states(); ++i)
        if (m1.num_actions(i) != m2.num_actions(i))
            throw std::invalid_argument("models have different action sets at state " +
                                        std::to_string(i));
}

/// d_rat(P1,P2) * p_min <= d_tv(P1,P2). Valid whenever the kernels share
/// supports and p_min lower-bounds the nonzero entries of both. The
/// comparison is exact in rational mode and carries the usual 1e-9
/// tolerance in float mode (the relation holds with equality when the
/// minimum entry attains the ratio sup, where rounding can break ties).
template <class T>
bool check_distance_relation(const Mdp<T>& m1, const Mdp<T>& m2, const T& p_min) {
    check_same_structure(m1, m2);
    const auto p1 = flatten_kernel(m1);
    const auto p2 = flatten_kernel(m2);
    return ratio_distance(p1, p2) * p_min <=
           total_variation(p1, p2) + scalar_traits<T>::tolerance();
}

/// Witness that the ratio distance violates the triangle inequality.
template <class T>
struct RatioTriangleCounterexample {
    PartialValuation<T> f, g, h;
    T d_fg, d_gh, d_fh;
};

/// Searches two-point valuations on a small grid for a triple with
/// d(f,h) > d(f,g) + d(g,h). Such triples exist (the multiplicative gap
/// compounds: 1 -> 2 -> 4 gives 3 > 1 + 1).
template <class T>
std::optional<RatioTriangleCounterexample<T>> find_ratio_triangle_counterexample() {
    std::vector<T> grid;
    for (int k = 1; k <= 8; ++k) grid.push_back(T(k) / T(2));
    auto make = [](const T& x, const T& y) {
        PartialValuation<T> pv;
        pv.values = {x, y};
        return pv;
    };
    for (const T& f0 : grid)
        for (const T& g0 : grid)
            for (const T& h0 : grid) {
                const auto f = make(f0, T(1));
                const auto g = make(g0, T(1));
                const auto h = make(h0, T(1));
                const T dfg = ratio_distance(f, g);
                const T dgh = ratio_distance(g, h);
                const T dfh = ratio_distance(f, h);
                if (dfh > dfg + dgh)
                    return RatioTriangleCounterexample<T>{f, g, h, dfg, dgh, dfh};
            }
    return std::nullopt;
}

}  // namespace mdpkit
