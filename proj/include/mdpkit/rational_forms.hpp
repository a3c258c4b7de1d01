#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "mdpkit/mdp.hpp"
#include "mdpkit/solvers.hpp"

namespace mdpkit {

/// Quotient of two polynomial evaluations; in the hitting formula both
/// sides are sums of nonnegative monomial products.
template <class T>
struct RationalValue {
    T num = T(0);
    T den = T(0);
    T value() const {
        if (den == T(0)) throw std::runtime_error("RationalValue: zero denominator");
        return num / den;
    }
};

namespace detail {

/// Mixed-radix enumeration of maps f : U -> S. `digits[k]` is the image
/// of U[k]; advance() steps to the next map, false at wraparound.
struct SpanningMapIter {
    std::vector<int> digits;
    int base;

    SpanningMapIter(std::size_t domain, int range) : digits(domain, 0), base(range) {}
    bool advance() {
        for (std::size_t k = 0; k < digits.size(); ++k) {
            if (++digits[k] < base) return true;
            digits[k] = 0;
        }
        return false;
    }
};

/// True iff the functional graph (edges u -> f(u) for u in U, vertices
/// outside U are sinks) is acyclic.
inline bool functional_graph_acyclic(const std::vector<int>& domain, const std::vector<int>& f_of,
                                     std::vector<int>& color, int stamp_base) {
    // color: 0 untouched this call; stamp_base+u gray; -(stamp_base+u) black
    for (int u : domain) {
        int v = u;
        std::vector<int> path;
        while (f_of[v] >= 0) {
            const int mark = color[v];
            if (mark == stamp_base) {
                for (int w : path) color[w] = -stamp_base;
                return false;  // hit a gray vertex: cycle
            }
            if (mark == -stamp_base) break;  // already known acyclic from here
            color[v] = stamp_base;
            path.push_back(v);
            v = f_of[v];
        }
        for (int w : path) color[w] = -stamp_base;
    }
    return true;
}

}  // namespace detail

/// Hitting distribution by the spanning-map formula: with F the maps
/// f : S\Q -> S,
///   Pr_j(X_tau(Q) = k) = sum_f alpha_f beta_f(j,k) w_f / sum_f alpha_f w_f,
/// w_f the product of delta(l, f(l)) over l outside Q. Every
/// contribution is nonnegative. The acyclicity indicator alpha_f gates
/// both sums: on an acyclic map every path is finite and ends in Q, and
/// a map whose j-path reaches k but carries a cycle elsewhere must not
/// count, otherwise the quotient overshoots the probability. Requires
/// Pr_i(tau(Q) < inf) > 0 for all i (checked by graph reachability) and
/// |S|^|S\Q| <= term_guard.
template <class T>
RationalValue<T> fw_hitting_probability(const MarkovChain<T>& c, const std::vector<int>& target_set,
                                        int j, int k, std::uint64_t term_guard = 10'000'000) {
    const int n = c.num_states();
    std::vector<bool> in_q(n, false);
    for (int q : target_set) in_q.at(q) = true;
    if (in_q[j]) throw std::invalid_argument("start state must lie outside Q");
    if (!in_q[k]) throw std::invalid_argument("target state must lie in Q");

    // precondition: every state can reach Q
    {
        SupportGraph rev;
        rev.adj.resize(n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                if (c.trans[a][b] > T(0)) rev.adj[b].push_back(a);
        std::vector<bool> can_reach(n, false);
        std::vector<int> stack;
        for (int q : target_set) {
            can_reach[q] = true;
            stack.push_back(q);
        }
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int u : rev.adj[v])
                if (!can_reach[u]) {
                    can_reach[u] = true;
                    stack.push_back(u);
                }
        }
        for (int i = 0; i < n; ++i)
            if (!can_reach[i])
                throw std::invalid_argument("state " + std::to_string(i) + " cannot reach Q");
    }

    std::vector<int> domain;
    for (int i = 0; i < n; ++i)
        if (!in_q[i]) domain.push_back(i);

    double term_estimate = 1;
    for (std::size_t d = 0; d < domain.size(); ++d) {
        term_estimate *= n;
        if (term_estimate > static_cast<double>(term_guard))
            throw std::runtime_error("spanning-map term guard exceeded");
    }

    RationalValue<T> out;
    detail::SpanningMapIter it(domain.size(), n);
    std::vector<int> f_of(n, -1);
    std::vector<int> color(n, 0);
    int stamp = 0;
    do {
        T weight(1);
        bool zero = false;
        for (std::size_t d = 0; d < domain.size(); ++d) {
            const T& p = c.trans[domain[d]][it.digits[d]];
            if (p == T(0)) {
                zero = true;
                break;
            }
            weight *= p;
        }
        if (zero) continue;
        for (std::size_t d = 0; d < domain.size(); ++d) f_of[domain[d]] = it.digits[d];
        ++stamp;
        if (detail::functional_graph_acyclic(domain, f_of, color, stamp)) {
            out.den += weight;
            // on an acyclic map the unique path from j ends at a Q state
            int v = j;
            while (f_of[v] >= 0) v = f_of[v];
            if (v == k) out.num += weight;
        }
    } while (it.advance());
    return out;
}

/// The chain-duplication construction: 2|S| states where every original
/// state defects to its absorbing copy with probability 1-alpha and
/// follows alpha-scaled original rows otherwise. Hitting copy j_1 from i
/// has probability MT^alpha_{i,j}.
template <class T>
MarkovChain<T> duplicate_chain(const MarkovChain<T>& c, const T& alpha) {
    if (!(alpha > T(0) && alpha < T(1))) throw std::invalid_argument("alpha must be in (0,1)");
    const int n = c.num_states();
    MarkovChain<T> d;
    d.trans.assign(2 * n, std::vector<T>(2 * n, T(0)));
    d.reward.assign(2 * n, T(0));
    for (int k = 0; k < n; ++k) {
        d.trans[k][n + k] = T(1) - alpha;
        for (int l = 0; l < n; ++l) d.trans[k][l] = alpha * c.trans[k][l];
        d.trans[n + k][n + k] = T(1);
        d.reward[k] = c.reward[k];
    }
    return d;
}

/// (1-alpha) v_i^alpha assembled as sum_j rbar(j) MT^alpha_{i,j}, each
/// MT obtained from the duplicated chain through the spanning-map
/// formula over a common denominator.
template <class T>
RationalValue<T> fw_discounted_value(const Mdp<T>& m, const StationaryPolicy<T>& pi,
                                     const T& alpha, int i,
                                     std::uint64_t term_guard = 10'000'000) {
    const MarkovChain<T> c = induce_chain(m, pi);
    const MarkovChain<T> dup = duplicate_chain(c, alpha);
    const int n = c.num_states();

    double term_estimate = 1;
    for (int d = 0; d < n; ++d) {
        term_estimate *= 2.0 * n;
        if (term_estimate > static_cast<double>(term_guard))
            throw std::runtime_error("spanning-map term guard exceeded");
    }

    // one enumeration pass: the path from i ends in exactly one copy
    // state, so each map contributes its weight to a single numerator
    std::vector<T> num_per_target(n, T(0));
    T den(0);
    std::vector<int> domain(n);
    for (int d = 0; d < n; ++d) domain[d] = d;
    detail::SpanningMapIter it(static_cast<std::size_t>(n), 2 * n);
    std::vector<int> f_of(2 * n, -1);
    std::vector<int> color(2 * n, 0);
    int stamp = 0;
    do {
        T weight(1);
        bool zero = false;
        for (int d = 0; d < n; ++d) {
            const T& p = dup.trans[d][it.digits[d]];
            if (p == T(0)) {
                zero = true;
                break;
            }
            weight *= p;
        }
        if (zero) continue;
        for (int d = 0; d < n; ++d) f_of[d] = it.digits[d];
        ++stamp;
        if (detail::functional_graph_acyclic(domain, f_of, color, stamp)) {
            den += weight;
            int v = i;
            while (f_of[v] >= 0) v = f_of[v];
            num_per_target[v - n] += weight;
        }
    } while (it.advance());

    RationalValue<T> out;
    out.den = den;
    for (int j = 0; j < n; ++j) out.num += c.reward[j] * num_per_target[j];
    return out;
}

/// Degree bookkeeping for the symbolic audit: enumerates the maps once
/// and records the monomial supports (sets of kernel entries used).
struct FwDegreeAudit {
    std::size_t max_numerator_degree = 0;
    std::size_t max_denominator_degree = 0;
    std::size_t distinct_monomials = 0;
};

template <class T>
FwDegreeAudit fw_symbolic_degree_audit(const MarkovChain<T>& c, const T& alpha, int i) {
    const MarkovChain<T> dup = duplicate_chain(c, alpha);
    const int n = c.num_states();
    if (n > 4) throw std::invalid_argument("symbolic audit is limited to |S| <= 4");
    FwDegreeAudit audit;
    std::set<std::vector<int>> monomials;
    detail::SpanningMapIter it(static_cast<std::size_t>(n), 2 * n);
    std::vector<int> domain(n);
    for (int d = 0; d < n; ++d) domain[d] = d;
    std::vector<int> f_of(2 * n, -1);
    std::vector<int> color(2 * n, 0);
    int stamp = 0;
    do {
        bool zero = false;
        for (int d = 0; d < n && !zero; ++d)
            if (dup.trans[d][it.digits[d]] == T(0)) zero = true;
        if (zero) continue;
        std::vector<int> mono(n);
        for (int d = 0; d < n; ++d) mono[d] = d * 2 * n + it.digits[d];
        const std::size_t degree = mono.size();
        for (int d = 0; d < n; ++d) f_of[d] = it.digits[d];
        ++stamp;
        if (detail::functional_graph_acyclic(domain, f_of, color, stamp)) {
            audit.max_denominator_degree = std::max(audit.max_denominator_degree, degree);
            int v = i;
            while (f_of[v] >= 0) v = f_of[v];
            if (v >= n) audit.max_numerator_degree = std::max(audit.max_numerator_degree, degree);
            monomials.insert(mono);
        }
    } while (it.advance());
    audit.distinct_monomials = monomials.size();
    return audit;
}

/// Sparse multivariate polynomial with nonnegative coefficients.
template <class T>
struct Polynomial {
    struct Term {
        T coefficient;
        std::vector<unsigned> exponents;
    };
    std::vector<Term> terms;

    unsigned degree() const {
        unsigned d = 0;
        for (const auto& t : terms) {
            unsigned sum = 0;
            for (unsigned e : t.exponents) sum += e;
            d = std::max(d, sum);
        }
        return d;
    }

    T eval(const std::vector<T>& point) const {
        T acc(0);
        for (const auto& t : terms) {
            T prod = t.coefficient;
            for (std::size_t v = 0; v < t.exponents.size(); ++v)
                for (unsigned e = 0; e < t.exponents[v]; ++e) prod *= point.at(v);
            acc += prod;
        }
        return acc;
    }
};

/// For a nonnegative-coefficient polynomial of degree d and points with
/// componentwise ratios inside [(1+eps)^-1, 1+eps] (0/0 counting as 1),
/// checks (1+eps)^-d <= f(a)/f(b) <= (1+eps)^d in the cross-multiplied
/// sense, so f(a) = f(b) = 0 passes.
template <class T>
bool check_poly_ratio_bound(const Polynomial<T>& f, const std::vector<T>& a,
                            const std::vector<T>& b, const T& eps) {
    if (a.size() != b.size()) throw std::invalid_argument("point dimension mismatch");
    for (const auto& t : f.terms)
        if (t.coefficient < T(0)) throw std::invalid_argument("negative coefficient");
    const T one_plus = T(1) + eps;
    for (std::size_t v = 0; v < a.size(); ++v) {
        const T& av = a[v];
        const T& bv = b[v];
        if (av == T(0) && bv == T(0)) continue;  // 0/0 counts as 1
        // cross-multiplied (1+eps)^-1 <= av/bv <= 1+eps
        if (!(bv <= one_plus * av && av <= one_plus * bv))
            throw std::invalid_argument("componentwise ratio precondition violated");
    }
    const T fa = f.eval(a);
    const T fb = f.eval(b);
    T factor(1);
    for (unsigned k = 0; k < f.degree(); ++k) factor *= one_plus;
    // (1+eps)^-d <= fa/fb <= (1+eps)^d, cross-multiplied
    return fb <= factor * fa && fa <= factor * fb;
}

}  // namespace mdpkit
