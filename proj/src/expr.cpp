#include "hampert/expr.hpp"
#include "hampert/polyops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hampert {

std::strong_ordering mono_cmp(const Mono& a, const Mono& b) {
    int da = a.degree(), db = b.degree();
    if (da != db) return da <=> db;
    // lex on the (ascending) generator sequence: a higher exponent on an
    // earlier generator makes the monomial larger
    std::size_t i = 0, j = 0;
    while (i < a.p.size() && j < b.p.size()) {
        auto c = a.p[i].first.cmp(b.p[j].first);
        if (c == std::strong_ordering::less) return std::strong_ordering::greater;
        if (c == std::strong_ordering::greater) return std::strong_ordering::less;
        if (a.p[i].second != b.p[j].second) return a.p[i].second <=> b.p[j].second;
        ++i, ++j;
    }
    if (i < a.p.size()) return std::strong_ordering::greater;
    if (j < b.p.size()) return std::strong_ordering::less;
    return std::strong_ordering::equal;
}

std::strong_ordering poly_cmp(const Poly& a, const Poly& b) {
    if (a.t.size() != b.t.size()) return a.t.size() <=> b.t.size();
    for (std::size_t i = 0; i < a.t.size(); ++i) {
        auto c = mono_cmp(a.t[i].m, b.t[i].m);
        if (c != std::strong_ordering::equal) return c;
        int s = mpq_cmp(a.t[i].c.get_mpq_t(), b.t[i].c.get_mpq_t());
        if (s != 0) return s <=> 0;
    }
    return std::strong_ordering::equal;
}

namespace detail {

struct MonoGreater {
    bool operator()(const Mono& a, const Mono& b) const {
        return mono_cmp(a, b) == std::strong_ordering::greater;
    }
};

using Acc = std::map<Mono, Rat, MonoGreater>;

Poly from_acc(Acc&& acc) {
    Poly p;
    p.t.reserve(acc.size());
    for (auto& [m, c] : acc)
        if (c != 0) p.t.push_back({m, std::move(c)});
    return p;
}

void acc_add(Acc& acc, const Mono& m, const Rat& c) {
    auto it = acc.find(m);
    if (it == acc.end())
        acc.emplace(m, c);
    else
        it->second += c;
}

}  // namespace detail

using detail::Acc;

Poly p_zero() { return {}; }

Poly p_const(const Rat& c) {
    Poly p;
    if (c != 0) p.t.push_back({Mono{}, c});
    return p;
}

Poly p_one() { return p_const(1); }

Poly p_gen(const Gen& g, int e) {
    Poly p;
    Mono m;
    if (e != 0) m.p.push_back({g, e});
    p.t.push_back({m, Rat(1)});
    return p;
}

Poly p_var(VarRef v) { return p_gen(Gen::variable(v), 1); }

Poly padd(const Poly& a, const Poly& b) {
    Acc acc;
    for (auto& t : a.t) detail::acc_add(acc, t.m, t.c);
    for (auto& t : b.t) detail::acc_add(acc, t.m, t.c);
    return detail::from_acc(std::move(acc));
}

Poly pneg(const Poly& a) {
    Poly p = a;
    for (auto& t : p.t) t.c = -t.c;
    return p;
}

Poly psub(const Poly& a, const Poly& b) { return padd(a, pneg(b)); }

Poly pscale(const Poly& a, const Rat& c) {
    if (c == 0) return {};
    Poly p = a;
    for (auto& t : p.t) t.c *= c;
    return p;
}

static const Poly& sqrt_arg_poly(const Gen& g) { return g.arg->num(); }

static Mono mono_merge(const Mono& a, const Mono& b) {
    Mono out;
    std::size_t i = 0, j = 0;
    while (i < a.p.size() || j < b.p.size()) {
        if (j == b.p.size() || (i < a.p.size() && a.p[i].first < b.p[j].first)) {
            out.p.push_back(a.p[i++]);
        } else if (i == a.p.size() || b.p[j].first < a.p[i].first) {
            out.p.push_back(b.p[j++]);
        } else {
            int e = a.p[i].second + b.p[j].second;
            if (e != 0) out.p.push_back({a.p[i].first, e});
            ++i, ++j;
        }
    }
    return out;
}

// Multiply term (m1,c)*(m2,1) and reduce sqrt atoms: s^2 -> arg.
static void term_mul_into(Acc& acc, const Mono& m1, const Mono& m2, const Rat& c);

Poly pmul(const Poly& a, const Poly& b) {
    if (a.is_zero() || b.is_zero()) return {};
    Acc acc;
    for (auto& ta : a.t)
        for (auto& tb : b.t) term_mul_into(acc, ta.m, tb.m, ta.c * tb.c);
    return detail::from_acc(std::move(acc));
}

static void term_mul_into(Acc& acc, const Mono& m1, const Mono& m2, const Rat& c) {
    Mono merged = mono_merge(m1, m2);
    Poly extra;
    bool have_extra = false;
    Mono base;
    for (auto& [g, e] : merged.p) {
        if (g.kind == Gen::Kind::Sqrt && e >= 2) {
            if (e % 2) base.p.push_back({g, 1});
            Poly argk = sqrt_arg_poly(g);
            for (int k = 1; k < e / 2; ++k) argk = pmul(argk, sqrt_arg_poly(g));
            extra = have_extra ? pmul(extra, argk) : argk;
            have_extra = true;
        } else {
            base.p.push_back({g, e});
        }
    }
    if (!have_extra) {
        detail::acc_add(acc, base, c);
        return;
    }
    Poly rest;
    rest.t.push_back({base, c});
    Poly prod = pmul(extra, rest);
    for (auto& t : prod.t) detail::acc_add(acc, t.m, t.c);
}

Poly ppow(const Poly& a, int e) {
    Poly r = p_one();
    for (int i = 0; i < e; ++i) r = pmul(r, a);
    return r;
}

// ---------------------------------------------------------------------------
// exact division (divisors are always sqrt-free here)
// ---------------------------------------------------------------------------

static std::optional<Mono> mono_div(const Mono& a, const Mono& b) {
    Mono out;
    std::size_t i = 0, j = 0;
    while (j < b.p.size()) {
        if (i == a.p.size()) return std::nullopt;
        if (a.p[i].first < b.p[j].first) {
            out.p.push_back(a.p[i++]);
        } else if (a.p[i].first == b.p[j].first) {
            int e = a.p[i].second - b.p[j].second;
            if (e < 0) return std::nullopt;
            if (e > 0) out.p.push_back({a.p[i].first, e});
            ++i, ++j;
        } else {
            return std::nullopt;
        }
    }
    while (i < a.p.size()) out.p.push_back(a.p[i++]);
    return out;
}

std::optional<Poly> pdiv_exact(const Poly& a, const Poly& b) {
    if (b.is_zero()) return std::nullopt;
    if (a.is_zero()) return Poly{};
    if (b.is_constant()) return pscale(a, Rat(1) / b.constant_value());
    Acc qacc;
    Poly r = a;
    const Term& lb = b.t.front();
    int guard = 0;
    while (!r.is_zero()) {
        if (++guard > 100000) return std::nullopt;
        const Term& lr = r.t.front();
        auto qm = mono_div(lr.m, lb.m);
        if (!qm) return std::nullopt;
        Rat qc = lr.c / lb.c;
        detail::acc_add(qacc, *qm, qc);
        Poly qt;
        qt.t.push_back({*qm, qc});
        r = psub(r, pmul(qt, b));
    }
    return detail::from_acc(std::move(qacc));
}

static int deg_in(const Poly& p, const Gen& x);
static std::map<int, Poly> univar(const Poly& p, const Gen& x);

// fast non-divisibility check: project to a univariate image in the
// divisor's smallest generator and test the remainder there; a nonzero
// projected remainder certifies non-divisibility
static bool projected_maybe_divisible(const Poly& num, const Poly& g);

// divide every sqrt-component of num by the sqrt-free poly g
static std::optional<Poly> div_num_by_sqrtfree(const Poly& num, const Poly& g) {
    if (g.is_constant()) return pscale(num, Rat(1) / g.constant_value());
    std::map<Mono, Poly, detail::MonoGreater> groups;
    for (auto& t : num.t) {
        Mono sq, rest;
        for (auto& ge : t.m.p)
            (ge.first.kind == Gen::Kind::Sqrt ? sq : rest).p.push_back(ge);
        groups[sq].t.push_back({rest, t.c});
    }
    Acc acc;
    for (auto& [sq, comp] : groups) {
        Poly sorted = comp;
        std::sort(sorted.t.begin(), sorted.t.end(), [](const Term& a, const Term& b) {
            return mono_cmp(a.m, b.m) == std::strong_ordering::greater;
        });
        auto q = pdiv_exact(sorted, g);
        if (!q) return std::nullopt;
        for (auto& t : q->t) detail::acc_add(acc, mono_merge(t.m, sq), t.c);
    }
    return detail::from_acc(std::move(acc));
}

static bool poly_depends_gen(const Poly& p, const Gen& x) {
    for (auto& t : p.t)
        for (auto& [g, e] : t.m.p)
            if (g == x) return true;
    return false;
}

static int deg_in(const Poly& p, const Gen& x) {
    int d = 0;
    for (auto& t : p.t) d = std::max(d, t.m.exponent(x));
    return d;
}

// coefficients of p viewed as univariate in x
static std::map<int, Poly> univar(const Poly& p, const Gen& x) {
    std::map<int, Poly> out;
    for (auto& t : p.t) {
        Mono rest;
        int e = 0;
        for (auto& ge : t.m.p) {
            if (ge.first == x)
                e = ge.second;
            else
                rest.p.push_back(ge);
        }
        out[e].t.push_back({rest, t.c});
    }
    for (auto& [e, q] : out)
        std::sort(q.t.begin(), q.t.end(), [](const Term& a, const Term& b) {
            return mono_cmp(a.m, b.m) == std::strong_ordering::greater;
        });
    return out;
}

// strip rational content; primitive integer coefficients, positive leading
static Poly primitive_part(const Poly& p, Rat* content_out = nullptr) {
    if (p.is_zero()) {
        if (content_out) *content_out = 0;
        return p;
    }
    mpz_class num_gcd = 0, den_lcm = 1;
    for (auto& t : p.t) {
        mpz_gcd(num_gcd.get_mpz_t(), num_gcd.get_mpz_t(), t.c.get_num().get_mpz_t());
        mpz_lcm(den_lcm.get_mpz_t(), den_lcm.get_mpz_t(), t.c.get_den().get_mpz_t());
    }
    Rat content(num_gcd, den_lcm);
    content.canonicalize();
    if (p.t.front().c < 0) content = -content;
    if (content_out) *content_out = content;
    return pscale(p, Rat(1) / content);
}

// ---------------------------------------------------------------------------
// gcd (kept for callers outside the canonical-form hot path)
// ---------------------------------------------------------------------------

static std::optional<Gen> smallest_gen(const Poly& p) {
    std::optional<Gen> best;
    for (auto& t : p.t)
        for (auto& [g, e] : t.m.p)
            if (!best || g < *best) best = g;
    return best;
}

// projection to a univariate image: every generator except x is replaced by
// a small odd integer (deterministic by position). A constant projected gcd
// proves coprimality up to degenerate projections.
static bool projected_coprime(const Poly& a, const Poly& b, const Gen& x, int salt) {
    auto project = [&](const Poly& p) -> std::map<int, Rat> {
        std::map<int, Rat> u;
        std::vector<Gen> seen;
        for (auto& t : p.t) {
            Rat c = t.c;
            int deg = 0;
            for (auto& [g, e] : t.m.p) {
                if (g.cmp(x) == std::strong_ordering::equal) {
                    deg = e;
                    continue;
                }
                std::size_t idx = 0;
                for (; idx < seen.size(); ++idx)
                    if (seen[idx].cmp(g) == std::strong_ordering::equal) break;
                if (idx == seen.size()) seen.push_back(g);
                long val = 3 + 2 * static_cast<long>(idx) + salt;
                Rat pw(1);
                for (int k = 0; k < e; ++k) pw *= val;
                c *= pw;
            }
            u[deg] += c;
        }
        return u;
    };
    auto ua = project(a), ub = project(b);
    auto degree = [](std::map<int, Rat>& u) {
        int d = -1;
        for (auto& [e, c] : u)
            if (c != 0) d = std::max(d, e);
        return d;
    };
    int da = degree(ua), db = degree(ub);
    if (da < 0 || db < 0) return false;
    std::vector<Rat> fa(static_cast<std::size_t>(da) + 1, Rat(0));
    std::vector<Rat> fb(static_cast<std::size_t>(db) + 1, Rat(0));
    for (auto& [e, c] : ua)
        if (c != 0) fa[static_cast<std::size_t>(e)] = c;  // skip cancelled degrees
    for (auto& [e, c] : ub)
        if (c != 0) fb[static_cast<std::size_t>(e)] = c;
    auto deg_of = [](const std::vector<Rat>& f) {
        for (int i = static_cast<int>(f.size()) - 1; i >= 0; --i)
            if (f[static_cast<std::size_t>(i)] != 0) return i;
        return -1;
    };
    while (true) {
        int dA = deg_of(fa), dB = deg_of(fb);
        if (dB < 0) return dA == 0;
        if (dA < dB) {
            std::swap(fa, fb);
            continue;
        }
        Rat q = fa[static_cast<std::size_t>(dA)] / fb[static_cast<std::size_t>(dB)];
        for (int i = 0; i <= dB; ++i)
            fa[static_cast<std::size_t>(i + dA - dB)] -= q * fb[static_cast<std::size_t>(i)];
        fa[static_cast<std::size_t>(dA)] = 0;
    }
}

static bool projected_maybe_divisible(const Poly& num, const Poly& g) {
    auto gx = smallest_gen(g);
    if (!gx) return true;
    const Gen& x = *gx;
    auto project = [&](const Poly& p) -> std::vector<Rat> {
        std::map<int, Rat> u;
        std::vector<Gen> seen;
        for (auto& t : p.t) {
            Rat c = t.c;
            int deg = 0;
            for (auto& [gg, e] : t.m.p) {
                if (gg.cmp(x) == std::strong_ordering::equal) {
                    deg = e;
                    continue;
                }
                std::size_t idx = 0;
                for (; idx < seen.size(); ++idx)
                    if (seen[idx].cmp(gg) == std::strong_ordering::equal) break;
                if (idx == seen.size()) seen.push_back(gg);
                long val = 3 + 2 * static_cast<long>(idx);
                Rat pw(1);
                for (int k = 0; k < e; ++k) pw *= val;
                c *= pw;
            }
            u[deg] += c;
        }
        int d = -1;
        for (auto& [e, c] : u)
            if (c != 0) d = std::max(d, e);
        std::vector<Rat> f(static_cast<std::size_t>(std::max(d, 0)) + 1, Rat(0));
        for (auto& [e, c] : u)
            if (c != 0) f[static_cast<std::size_t>(e)] = c;  // skip cancelled degrees
        if (d < 0) f.clear();
        return f;
    };
    std::vector<Rat> fn = project(num), fg = project(g);
    if (fn.empty() || fg.empty()) return true;  // degenerate projection
    auto deg_of = [](const std::vector<Rat>& f) {
        for (int i = static_cast<int>(f.size()) - 1; i >= 0; --i)
            if (f[static_cast<std::size_t>(i)] != 0) return i;
        return -1;
    };
    int dn = deg_of(fn), dg = deg_of(fg);
    if (dg < 0) return true;
    if (dn < dg) return false;
    // remainder of fn mod fg
    for (int k = dn; k >= dg; --k) {
        Rat q = fn[static_cast<std::size_t>(k)] / fg[static_cast<std::size_t>(dg)];
        if (q == 0) continue;
        for (int i = 0; i <= dg; ++i)
            fn[static_cast<std::size_t>(k - dg + i)] -= q * fg[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < dg; ++i)
        if (fn[static_cast<std::size_t>(i)] != 0) return false;
    return true;
}

Poly pgcd(const Poly& a, const Poly& b) {
    if (a.is_zero()) return primitive_part(b);
    if (b.is_zero()) return primitive_part(a);
    if (a.is_constant() || b.is_constant()) return p_one();
    auto ga = smallest_gen(a), gb = smallest_gen(b);
    Gen x = (ga && (!gb || *ga < *gb)) ? *ga : *gb;
    if (deg_in(a, x) > 0 && deg_in(b, x) > 0 && projected_coprime(a, b, x, 0) &&
        projected_coprime(a, b, x, 2))
        return p_one();
    auto ua = univar(a, x), ub = univar(b, x);
    if (ua.rbegin()->first == 0 || ub.rbegin()->first == 0) {
        const bool a_flat = ua.rbegin()->first == 0;
        auto& uwith = a_flat ? ub : ua;
        const Poly& flat = a_flat ? a : b;
        Poly cont = p_zero();
        for (auto& [e, q] : uwith) cont = pgcd(cont, q);
        return pgcd(cont, flat);
    }
    auto content_of = [&](const std::map<int, Poly>& u) {
        Poly c = p_zero();
        for (auto& [e, q] : u) {
            c = pgcd(c, q);
            if (c.is_constant()) break;
        }
        return c;
    };
    auto divided = [&](const Poly& p, const Poly& d) {
        if (d.is_constant()) return pscale(p, Rat(1) / d.constant_value());
        auto q = pdiv_exact(p, d);
        return q ? *q : p;
    };
    if (a.t.size() > 600 || b.t.size() > 600) return p_one();
    Poly ca = content_of(ua), cb = content_of(ub);
    Poly cont = pgcd(ca, cb);
    Poly A = divided(a, ca), B = divided(b, cb);
    if (deg_in(A, x) < deg_in(B, x)) std::swap(A, B);
    // subresultant pseudo-remainder sequence
    Poly g = p_one(), h = p_one();
    for (int round = 0; round < 64; ++round) {
        int dA = deg_in(A, x), dB = deg_in(B, x);
        int delta = dA - dB;
        auto uB = univar(B, x);
        Poly lcB = uB.rbegin()->second;
        Poly R = A;
        int e = delta + 1;
        int guard = 0;
        while (!R.is_zero() && deg_in(R, x) >= dB) {
            if (++guard > 256) return p_one();
            auto uR = univar(R, x);
            Poly lcR = uR.rbegin()->second;
            int dR = uR.rbegin()->first;
            R = psub(pmul(lcB, R), pmul(pmul(lcR, p_gen(x, dR - dB)), B));
            --e;
        }
        for (int k = 0; k < e; ++k) R = pmul(R, lcB);
        if (R.is_zero()) {
            auto uBc = univar(B, x);
            Poly ppB = divided(B, content_of(uBc));
            return primitive_part(pmul(cont, ppB));
        }
        if (deg_in(R, x) == 0) return primitive_part(cont);
        Poly divisor = g;
        for (int k = 0; k < delta; ++k) divisor = pmul(divisor, h);
        Poly Bn = divided(R, divisor);
        A = B;
        B = Bn;
        g = univar(A, x).rbegin()->second;
        if (delta >= 1) {
            Poly hn = g;
            for (int k = 1; k < delta; ++k) hn = pmul(hn, g);
            for (int k = 1; k < delta; ++k) hn = divided(hn, h);
            h = hn;
        }
    }
    return p_one();
}

// ---------------------------------------------------------------------------
// factored denominators
// ---------------------------------------------------------------------------

FactorList factor_lcm(const FactorList& a, const FactorList& b) {
    FactorList out;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size()) {
            out.push_back(a[i++]);
        } else if (i == a.size()) {
            out.push_back(b[j++]);
        } else {
            auto c = poly_cmp(a[i].p, b[j].p);
            if (c == std::strong_ordering::less)
                out.push_back(a[i++]);
            else if (c == std::strong_ordering::greater)
                out.push_back(b[j++]);
            else {
                out.push_back({a[i].p, std::max(a[i].e, b[j].e)});
                ++i, ++j;
            }
        }
    }
    return out;
}

Poly factor_complement(const FactorList& lcm, const FactorList& own) {
    Poly prod = p_one();
    std::size_t j = 0;
    for (auto& f : lcm) {
        int have = 0;
        while (j < own.size() && poly_cmp(own[j].p, f.p) == std::strong_ordering::less) ++j;
        if (j < own.size() && poly_cmp(own[j].p, f.p) == std::strong_ordering::equal)
            have = own[j].e;
        for (int k = have; k < f.e; ++k) prod = pmul(prod, f.p);
    }
    return prod;
}

static FactorList factor_mul(const FactorList& a, const FactorList& b) {
    FactorList out;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size()) {
            out.push_back(a[i++]);
        } else if (i == a.size()) {
            out.push_back(b[j++]);
        } else {
            auto c = poly_cmp(a[i].p, b[j].p);
            if (c == std::strong_ordering::less)
                out.push_back(a[i++]);
            else if (c == std::strong_ordering::greater)
                out.push_back(b[j++]);
            else {
                out.push_back({a[i].p, a[i].e + b[j].e});
                ++i, ++j;
            }
        }
    }
    return out;
}

static const FactorList kEmptyFactors;

const FactorList& Expr::den_factors() const { return den_ ? *den_ : kEmptyFactors; }

Poly Expr::den() const {
    Poly d = p_one();
    for (auto& f : den_factors())
        for (int k = 0; k < f.e; ++k) d = pmul(d, f.p);
    return d;
}

// ---------------------------------------------------------------------------
// construction / normalization
// ---------------------------------------------------------------------------

struct ExprOps {
    static Expr make(const Workspace* ws, Poly num, FactorList den);
    static Expr from_poly(const Workspace* ws, Poly p) { return make(ws, std::move(p), {}); }
    static Expr pdiff(const Workspace* ws, const Poly& p, VarRef v);
    static Expr eval_poly(const Poly& p, const std::function<Expr(const Gen&)>& f,
                          const Workspace* ws);
};

Expr make_expr(const Workspace* ws, Poly num, Poly den) {
    if (den.is_zero()) throw Error(ErrKind::Domain, "division by zero");
    Rat content;
    Poly prim = primitive_part(den, &content);
    FactorList fl;
    if (!prim.is_constant()) fl.push_back({prim, 1});
    return ExprOps::make(ws, pscale(num, Rat(1) / content), std::move(fl));
}

Expr expr_from_poly(const Workspace* ws, Poly p) { return ExprOps::from_poly(ws, std::move(p)); }

static std::optional<Gen> first_sqrt_gen(const Poly& p) {
    for (auto& t : p.t)
        for (auto& [g, e] : t.m.p)
            if (g.kind == Gen::Kind::Sqrt) return g;
    return std::nullopt;
}

Expr ExprOps::make(const Workspace* ws, Poly num, FactorList den) {
    if (!ws) throw Error(ErrKind::Internal, "expression without workspace");
    Expr out;
    out.ws_ = ws;
    if (num.is_zero()) {
        out.num_ = std::make_shared<Poly>();
        out.den_ = nullptr;
        return out;
    }
    // rationalize: conjugate sqrt atoms out of denominator cores
    for (int round = 0; round < 64; ++round) {
        bool changed = false;
        for (std::size_t i = 0; i < den.size(); ++i) {
            auto s = first_sqrt_gen(den[i].p);
            if (!s) continue;
            Poly A, B;  // core = A + B*s, s stripped from B
            for (auto& t : den[i].p.t) {
                Mono rest;
                bool has = false;
                for (auto& ge : t.m.p) {
                    if (ge.first == *s)
                        has = true;
                    else
                        rest.p.push_back(ge);
                }
                if (has)
                    B.t.push_back({rest, t.c});
                else
                    A.t.push_back({t.m, t.c});
            }
            auto resort = [](Poly& p) {
                std::sort(p.t.begin(), p.t.end(), [](const Term& x, const Term& y) {
                    return mono_cmp(x.m, y.m) == std::strong_ordering::greater;
                });
            };
            resort(A);
            resort(B);
            Poly conj = psub(A, pmul(B, p_gen(*s, 1)));
            Poly core = psub(pmul(A, A), pmul(pmul(B, B), sqrt_arg_poly(*s)));
            if (core.is_zero())
                throw Error(ErrKind::Domain, "denominator vanishes under atom relations");
            for (int k = 0; k < den[i].e; ++k) num = pmul(num, conj);
            den[i].p = core;
            changed = true;
        }
        if (!changed) break;
    }
    // normalize cores: strip monomial content into single-generator factors,
    // make the rest primitive, fold rational contents and constants into num
    FactorList flat;
    Rat scale(1);
    for (auto& f : den) {
        Poly core = f.p;
        if (!core.is_zero() && !core.t.empty()) {
            Mono common = core.t.front().m;
            for (auto& t : core.t) {
                Mono next;
                std::size_t i = 0, j = 0;
                while (i < common.p.size() && j < t.m.p.size()) {
                    if (common.p[i].first < t.m.p[j].first) {
                        ++i;
                    } else if (t.m.p[j].first < common.p[i].first) {
                        ++j;
                    } else {
                        next.p.push_back(
                            {common.p[i].first, std::min(common.p[i].second, t.m.p[j].second)});
                        ++i, ++j;
                    }
                }
                common = next;
                if (common.p.empty()) break;
            }
            if (!common.p.empty()) {
                for (auto& [g, e] : common.p) flat.push_back({p_gen(g, 1), e * f.e});
                Poly stripped;
                for (auto& t : core.t) {
                    auto q = mono_div(t.m, common);
                    stripped.t.push_back({*q, t.c});
                }
                core = stripped;
            }
        }
        Rat content;
        Poly prim = primitive_part(core, &content);
        for (int k = 0; k < f.e; ++k) scale *= content;
        if (!prim.is_constant()) flat.push_back({prim, f.e});
    }
    num = pscale(num, Rat(1) / scale);
    std::sort(flat.begin(), flat.end(), [](const Factor& a, const Factor& b) {
        return poly_cmp(a.p, b.p) == std::strong_ordering::less;
    });
    FactorList merged;
    for (auto& f : flat) {
        if (!merged.empty() && poly_cmp(merged.back().p, f.p) == std::strong_ordering::equal)
            merged.back().e += f.e;
        else
            merged.push_back(f);
    }
    // reduce: trial-divide the numerator by the cores (a cheap projected
    // remainder check screens out hopeless attempts on large numerators)
    for (auto& f : merged) {
        while (f.e > 0) {
            if (num.t.size() > 24 && !projected_maybe_divisible(num, f.p)) break;
            auto q = div_num_by_sqrtfree(num, f.p);
            if (!q) break;
            num = std::move(*q);
            --f.e;
        }
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const Factor& f) { return f.e == 0; }),
                 merged.end());
    // small fractions also get a full gcd polish: a reducible core may share
    // a proper factor with the numerator that trial division cannot see
    if (!num.is_constant() && num.t.size() <= 16) {
        bool changed = false;
        for (auto& f : merged) {
            if (f.e != 1 || f.p.t.size() > 16) continue;
            for (int guard = 0; guard < 4; ++guard) {
                Poly g = f.p;
                std::map<Mono, Poly, detail::MonoGreater> groups;
                for (auto& t : num.t) {
                    Mono sq, rest;
                    for (auto& ge : t.m.p)
                        (ge.first.kind == Gen::Kind::Sqrt ? sq : rest).p.push_back(ge);
                    groups[sq].t.push_back({rest, t.c});
                }
                for (auto& [sq, comp] : groups) {
                    std::sort(comp.t.begin(), comp.t.end(), [](const Term& a, const Term& b) {
                        return mono_cmp(a.m, b.m) == std::strong_ordering::greater;
                    });
                    g = pgcd(g, comp);
                    if (g.is_constant()) break;
                }
                if (g.is_constant()) break;
                auto nq = div_num_by_sqrtfree(num, g);
                auto fq = pdiv_exact(f.p, g);
                if (!nq || !fq) break;
                num = std::move(*nq);
                Rat fcont;
                f.p = primitive_part(*fq, &fcont);
                num = pscale(num, Rat(1) / fcont);
                changed = true;
                if (f.p.is_constant()) break;
            }
        }
        if (changed) {
            FactorList alive;
            for (auto& f : merged)
                if (!f.p.is_constant()) alive.push_back(f);
            std::sort(alive.begin(), alive.end(), [](const Factor& a, const Factor& b) {
                return poly_cmp(a.p, b.p) == std::strong_ordering::less;
            });
            merged.clear();
            for (auto& f : alive) {
                if (!merged.empty() &&
                    poly_cmp(merged.back().p, f.p) == std::strong_ordering::equal)
                    merged.back().e += f.e;
                else
                    merged.push_back(f);
            }
        }
    }
    out.num_ = std::make_shared<Poly>(std::move(num));
    out.den_ = merged.empty() ? nullptr : std::make_shared<FactorList>(std::move(merged));
    return out;
}

Expr Expr::constant(const Workspace* ws, Rat c) { return ExprOps::make(ws, p_const(c), {}); }

Expr Expr::variable(const Workspace* ws, VarRef v) {
    if (v.base < 0 || v.base >= ws->size())
        throw Error(ErrKind::UnknownIdentifier, "unknown variable index");
    return ExprOps::make(ws, p_var(v), {});
}

Expr Expr::variable(const Workspace* ws, const std::string& name) {
    VarRef v = ws->lookup(name);
    if (v.base < 0) throw Error(ErrKind::UnknownIdentifier, "unknown identifier '" + name + "'");
    return variable(ws, v);
}

static bool factors_identical(const FactorList& a, const FactorList& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].e != b[i].e) return false;
        if (poly_cmp(a[i].p, b[i].p) != std::strong_ordering::equal) return false;
    }
    return true;
}

static void check_same_workspace(const Expr& a, const Expr& b) {
    if (a.ws() != b.ws())
        throw Error(ErrKind::Input, "operands belong to different workspaces");
}

Expr operator+(const Expr& a, const Expr& b) {
    check_same_workspace(a, b);
    const FactorList& da = a.den_factors();
    const FactorList& db = b.den_factors();
    if (factors_identical(da, db)) return ExprOps::make(a.ws_, padd(*a.num_, *b.num_), da);
    FactorList lcm = factor_lcm(da, db);
    Poly na = pmul(*a.num_, factor_complement(lcm, da));
    Poly nb = pmul(*b.num_, factor_complement(lcm, db));
    return ExprOps::make(a.ws_, padd(na, nb), std::move(lcm));
}

Expr operator-(const Expr& a, const Expr& b) {
    check_same_workspace(a, b);
    const FactorList& da = a.den_factors();
    const FactorList& db = b.den_factors();
    if (factors_identical(da, db)) return ExprOps::make(a.ws_, psub(*a.num_, *b.num_), da);
    FactorList lcm = factor_lcm(da, db);
    Poly na = pmul(*a.num_, factor_complement(lcm, da));
    Poly nb = pmul(*b.num_, factor_complement(lcm, db));
    return ExprOps::make(a.ws_, psub(na, nb), std::move(lcm));
}

Expr operator*(const Expr& a, const Expr& b) {
    check_same_workspace(a, b);
    return ExprOps::make(a.ws_, pmul(*a.num_, *b.num_),
                         factor_mul(a.den_factors(), b.den_factors()));
}

Expr operator/(const Expr& a, const Expr& b) {
    check_same_workspace(a, b);
    if (b.is_structurally_zero()) throw Error(ErrKind::Domain, "division by zero");
    // a / (nb/db) = a * db / nb
    Poly num = pmul(*a.num_, b.den());
    Rat content;
    Poly core = primitive_part(*b.num_, &content);
    FactorList den = a.den_factors();
    if (!core.is_constant()) {
        FactorList nb{{core, 1}};
        den = factor_mul(den, nb);
    }
    return ExprOps::make(a.ws_, pscale(num, Rat(1) / content), std::move(den));
}

Expr Expr::operator-() const { return ExprOps::make(ws_, pneg(*num_), den_factors()); }

Expr Expr::pow(int k) const {
    if (k < 0) return Expr::constant(ws_, 1) / pow(-k);
    Expr r = Expr::constant(ws_, 1);
    for (int i = 0; i < k; ++i) r = r * *this;
    return r;
}

Rat Expr::rational_value() const {
    if (!is_rational_constant()) throw Error(ErrKind::Domain, "not a rational constant");
    return num_->constant_value();
}

// ---------------------------------------------------------------------------
// assumption-based sign resolution
// ---------------------------------------------------------------------------

// tri-state: 1 positive, -1 negative, 0 unknown on the declared domain
static int poly_sign(const Workspace* ws, const Poly& q) {
    if (q.is_zero()) return 0;
    Rat content;
    Poly p = primitive_part(q, &content);
    int sign = content > 0 ? 1 : -1;
    if (p.is_constant()) return sign;
    for (int round = 0; round < 16 && !p.is_constant(); ++round) {
        bool progressed = false;
        for (const Expr& pos : ws->positives()) {
            if (!pos.den_is_one()) continue;
            Rat fc;
            Poly f = primitive_part(pos.num(), &fc);
            if (f.is_constant()) continue;
            auto quo = pdiv_exact(p, f);
            if (quo) {
                // pos.num() = fc * f > 0, so f carries the sign of fc
                p = primitive_part(*quo, &content);
                sign *= content > 0 ? 1 : -1;
                sign *= fc > 0 ? 1 : -1;
                progressed = true;
                break;
            }
        }
        if (!progressed) break;
    }
    if (p.is_constant()) return sign;
    return 0;
}

// ---------------------------------------------------------------------------
// atoms
// ---------------------------------------------------------------------------

static mpz_class int_square_part(const mpz_class& n, mpz_class& rest) {
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47,
                                 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};
    rest = n;
    if (mpz_perfect_square_p(rest.get_mpz_t())) {
        mpz_class s;
        mpz_sqrt(s.get_mpz_t(), rest.get_mpz_t());
        rest = 1;
        return s;
    }
    mpz_class s = 1;
    for (int p : primes) {
        mpz_class p2 = mpz_class(p) * p;
        while (mpz_divisible_p(rest.get_mpz_t(), p2.get_mpz_t())) {
            rest /= p2;
            s *= p;
        }
    }
    return s;
}

// perfect-square test for polynomials (free-generator view)
static std::optional<Poly> poly_sqrt(const Poly& p) {
    if (p.is_zero()) return Poly{};
    if (p.is_constant()) {
        Rat c = p.constant_value();
        if (c < 0) return std::nullopt;
        mpz_class rn, rd;
        mpz_class sn = int_square_part(c.get_num(), rn);
        mpz_class sd = int_square_part(c.get_den(), rd);
        if (rn != 1 || rd != 1) return std::nullopt;
        return p_const(Rat(sn, sd));
    }
    auto xo = smallest_gen(p);
    if (!xo) return std::nullopt;
    Gen x = *xo;
    if (x.kind == Gen::Kind::Sqrt) return std::nullopt;
    auto u = univar(p, x);
    int d = u.rbegin()->first;
    if (d == 0 || d % 2) return std::nullopt;
    auto sL = poly_sqrt(u.rbegin()->second);
    if (!sL) return std::nullopt;
    Poly q = pmul(*sL, p_gen(x, d / 2));
    Poly two_sL = pscale(*sL, 2);
    for (int guard = 0; guard < 256; ++guard) {
        Poly r = psub(p, pmul(q, q));
        if (r.is_zero()) return q;
        auto ur = univar(r, x);
        int k = ur.rbegin()->first;
        if (k < d / 2) return std::nullopt;
        auto c = pdiv_exact(ur.rbegin()->second, two_sL);
        if (!c) return std::nullopt;
        q = padd(q, pmul(*c, p_gen(x, k - d / 2)));
    }
    return std::nullopt;
}

static Gen make_atom(Gen::Kind kind, const Expr& arg) {
    Gen g;
    g.kind = kind;
    g.arg = std::make_shared<Expr>(arg);
    g.key = std::make_shared<const std::string>(arg.str());
    return g;
}

Expr Expr::sqrt_of(const Expr& e) {
    const Workspace* ws = e.ws_;
    if (e.is_structurally_zero()) return Expr::constant(ws, 0);
    // sqrt(n/d) = sqrt(n*d)/d so the radicand is a polynomial
    Poly d = e.den();
    Poly radicand = pmul(e.num(), d);
    Rat content;
    Poly prim = primitive_part(radicand, &content);  // positive leading coefficient
    bool neg = content < 0;
    Rat acontent = neg ? Rat(-content) : content;
    mpz_class rn, rd;
    mpz_class sn = int_square_part(acontent.get_num(), rn);
    mpz_class sd = int_square_part(acontent.get_den(), rd);
    Rat outer(sn, sd);
    Rat residue = Rat(rn, rd) * (neg ? -1 : 1);  // squarefree-ish leftover, carries sign
    auto root = poly_sqrt(prim);
    Expr dinv = Expr::constant(ws, 1) / ExprOps::from_poly(ws, d);
    if (root) {
        int sign = poly_sign(ws, *root);
        if (sign != 0) {
            Poly signed_root = sign > 0 ? *root : pneg(*root);
            if (residue == 1)
                return ExprOps::from_poly(ws, pscale(signed_root, outer)) * dinv;
            Expr cres = Expr::constant(ws, residue);
            Poly atom = p_gen(make_atom(Gen::Kind::Sqrt, cres), 1);
            return ExprOps::from_poly(ws, pmul(pscale(signed_root, outer), atom)) * dinv;
        }
    }
    Poly under = pscale(prim, residue);
    Expr argp = ExprOps::from_poly(ws, under);
    Gen atom_gen = make_atom(Gen::Kind::Sqrt, argp);
    atom_gen.ambiguous = root.has_value() && residue > 0;
    Poly atom = p_gen(atom_gen, 1);
    return ExprOps::from_poly(ws, pscale(atom, outer)) * dinv;
}

Expr Expr::log_of(const Expr& e) {
    const Workspace* ws = e.ws_;
    if (e.is_structurally_zero()) throw Error(ErrKind::Domain, "log of zero");
    if (e.is_rational_constant() && e.rational_value() == 1) return Expr::constant(ws, 0);
    Poly atom = p_gen(make_atom(Gen::Kind::Log, e), 1);
    return ExprOps::make(ws, atom, {});
}

// ---------------------------------------------------------------------------
// differentiation
// ---------------------------------------------------------------------------

static bool gen_depends(const Gen& g, VarRef v);

static bool poly_depends(const Poly& p, VarRef v) {
    for (auto& t : p.t)
        for (auto& [g, e] : t.m.p)
            if (gen_depends(g, v)) return true;
    return false;
}

static bool gen_depends(const Gen& g, VarRef v) {
    if (g.kind == Gen::Kind::Var) return g.var == v;
    return g.arg->depends_on(v);
}

bool Expr::depends_on(VarRef v) const {
    if (!valid()) return false;
    if (poly_depends(*num_, v)) return true;
    for (auto& f : den_factors())
        if (poly_depends(f.p, v)) return true;
    return false;
}

Expr ExprOps::pdiff(const Workspace* ws, const Poly& p, VarRef v) {
    // plain variable factors accumulate as a polynomial; only atoms need
    // rational arithmetic for their chain rule
    Acc var_acc;
    Expr atom_sum = Expr::constant(ws, 0);
    for (auto& t : p.t) {
        for (std::size_t i = 0; i < t.m.p.size(); ++i) {
            auto& [g, e] = t.m.p[i];
            if (!gen_depends(g, v)) continue;
            Mono rest;
            for (std::size_t j = 0; j < t.m.p.size(); ++j) {
                if (j == i) {
                    if (e - 1 != 0) rest.p.push_back({g, e - 1});
                } else {
                    rest.p.push_back(t.m.p[j]);
                }
            }
            if (g.kind == Gen::Kind::Var) {
                detail::acc_add(var_acc, rest, t.c * e);
                continue;
            }
            Poly restp;
            restp.t.push_back({rest, t.c * e});
            Expr factor = ExprOps::from_poly(ws, restp);
            Expr dg;
            if (g.kind == Gen::Kind::Sqrt) {
                Expr darg = ExprOps::pdiff(ws, g.arg->num(), v);
                Expr s = ExprOps::from_poly(ws, p_gen(g, 1));
                dg = darg / (Expr::constant(ws, 2) * s);
            } else {
                Expr darg = g.arg->diff(v);
                dg = darg / *g.arg;
            }
            atom_sum = atom_sum + factor * dg;
        }
    }
    Expr out = ExprOps::from_poly(ws, detail::from_acc(std::move(var_acc)));
    if (!atom_sum.is_structurally_zero()) out = out + atom_sum;
    return out;
}

Expr Expr::diff(VarRef v) const {
    if (!depends_on(v)) return Expr::constant(ws_, 0);
    // d(N / prod f_i^e_i) = dN/D - sum_i e_i N df_i / (f_i D)
    Expr selfden = ExprOps::make(ws_, p_one(), den_factors());
    Expr result = ExprOps::pdiff(ws_, *num_, v) * selfden;
    if (!den_ || den_->empty()) return result;
    Expr N = ExprOps::from_poly(ws_, *num_);
    for (auto& f : *den_) {
        if (!poly_depends(f.p, v)) continue;
        Expr df = ExprOps::pdiff(ws_, f.p, v);
        Expr fe = ExprOps::from_poly(ws_, f.p);
        result = result - Expr::constant(ws_, f.e) * N * df * selfden / fe;
    }
    return result;
}

Expr Expr::diff(const std::string& name) const {
    VarRef v = ws_->lookup(name);
    if (v.base < 0) throw Error(ErrKind::UnknownIdentifier, "unknown identifier '" + name + "'");
    return diff(v);
}

// ---------------------------------------------------------------------------
// substitution
// ---------------------------------------------------------------------------

Expr ExprOps::eval_poly(const Poly& p, const std::function<Expr(const Gen&)>& f,
                        const Workspace* ws) {
    Expr sum = Expr::constant(ws, 0);
    for (auto& t : p.t) {
        Expr acc = Expr::constant(ws, t.c);
        for (auto& [g, e] : t.m.p) acc = acc * f(g).pow(e);
        sum = sum + acc;
    }
    return sum;
}

Expr Expr::substitute(const std::map<VarRef, Expr>& bindings) const {
    for (auto& [v, e] : bindings)
        if (e.ws() != ws_)
            throw Error(ErrKind::Input, "substitution binding from a different workspace");
    std::function<Expr(const Gen&)> f = [&](const Gen& g) -> Expr {
        if (g.kind == Gen::Kind::Var) {
            auto it = bindings.find(g.var);
            if (it != bindings.end()) return it->second;
            return Expr::variable(ws_, g.var);
        }
        Expr arg = g.arg->substitute(bindings);
        return g.kind == Gen::Kind::Sqrt ? Expr::sqrt_of(arg) : Expr::log_of(arg);
    };
    Expr out = ExprOps::eval_poly(*num_, f, ws_);
    for (auto& fac : den_factors()) {
        Expr fe = ExprOps::eval_poly(fac.p, f, ws_);
        out = out / fe.pow(fac.e);
    }
    return out;
}

std::vector<VarRef> Expr::variables() const {
    std::vector<VarRef> out;
    std::function<void(const Poly&)> scan = [&](const Poly& p) {
        for (auto& t : p.t)
            for (auto& [g, e] : t.m.p) {
                if (g.kind == Gen::Kind::Var) {
                    if (std::find(out.begin(), out.end(), g.var) == out.end())
                        out.push_back(g.var);
                } else {
                    scan(g.arg->num());
                    for (auto& f : g.arg->den_factors()) scan(f.p);
                }
            }
    };
    if (valid()) {
        scan(*num_);
        for (auto& f : den_factors()) scan(f.p);
    }
    std::sort(out.begin(), out.end());
    return out;
}

int Expr::max_jet_order(int family_begin, int family_end) const {
    int m = 0;
    for (VarRef v : variables())
        if (v.base >= family_begin && v.base < family_end) m = std::max(m, v.order);
    return m;
}

// ---------------------------------------------------------------------------
// numeric evaluation
// ---------------------------------------------------------------------------

static double eval_gen(const Gen& g, const std::map<VarRef, double>& pt);

static double eval_poly_num(const Poly& p, const std::map<VarRef, double>& pt,
                            double* scale = nullptr) {
    double sum = 0, sc = 0;
    for (auto& t : p.t) {
        double v = t.c.get_d();
        for (auto& [g, e] : t.m.p) v *= std::pow(eval_gen(g, pt), e);
        if (!std::isfinite(v)) throw Error(ErrKind::Domain, "evaluation overflow");
        sum += v;
        sc += std::abs(v);
    }
    if (scale) *scale = sc;
    return sum;
}

static double eval_gen(const Gen& g, const std::map<VarRef, double>& pt) {
    if (g.kind == Gen::Kind::Var) {
        auto it = pt.find(g.var);
        if (it == pt.end()) throw Error(ErrKind::Domain, "unbound variable in evaluation");
        return it->second;
    }
    double a = g.arg->eval(pt);
    if (g.kind == Gen::Kind::Sqrt) {
        if (a < 0) throw Error(ErrKind::Domain, "sqrt of negative sample");
        return std::sqrt(a);
    }
    if (a <= 0) throw Error(ErrKind::Domain, "log of non-positive sample");
    return std::log(a);
}

double Expr::eval(const std::map<VarRef, double>& pt) const {
    double n = eval_poly_num(*num_, pt);
    double d = 1;
    for (auto& f : den_factors()) d *= std::pow(eval_poly_num(f.p, pt), f.e);
    if (std::abs(d) < 1e-280) throw Error(ErrKind::Domain, "evaluation at a pole");
    return n / d;
}

// ---------------------------------------------------------------------------
// zero testing
// ---------------------------------------------------------------------------

static void collect_atoms(const Poly& p, std::vector<std::string>& sq,
                          std::vector<std::string>& lg, bool& ambiguous) {
    for (auto& t : p.t)
        for (auto& [g, e] : t.m.p) {
            if (g.kind == Gen::Kind::Var) continue;
            ambiguous = ambiguous || g.ambiguous;
            auto& dst = g.kind == Gen::Kind::Sqrt ? sq : lg;
            if (std::find(dst.begin(), dst.end(), g.key_str()) == dst.end()) dst.push_back(g.key_str());
            collect_atoms(g.arg->num(), sq, lg, ambiguous);
            for (auto& f : g.arg->den_factors()) collect_atoms(f.p, sq, lg, ambiguous);
        }
}

ZeroVerdict Expr::zero_test() const {
    ZeroVerdict v;
    v.seed = ws_ ? ws_->zero_seed() : 0;
    if (is_structurally_zero()) {
        v.zero = true;
        return v;
    }
    std::vector<std::string> sq, lg;
    bool ambiguous = false;
    collect_atoms(*num_, sq, lg, ambiguous);
    if (sq.size() <= 1 && lg.size() <= 1 && !ambiguous) {
        v.zero = false;
        return v;
    }
    // atoms may be algebraically related: evaluate at random rational points
    v.certified = false;
    v.samples = ws_->zero_samples();
    std::mt19937_64 rng(ws_->zero_seed());
    auto vars = variables();
    for (const Expr& pos : ws_->positives())
        for (VarRef pv : pos.variables())
            if (std::find(vars.begin(), vars.end(), pv) == vars.end()) vars.push_back(pv);
    std::sort(vars.begin(), vars.end());
    double lo = ws_->box_lo().get_d(), hi = ws_->box_hi().get_d();
    int done = 0;
    bool all_zero = true;
    for (int attempt = 0; attempt < 64 * v.samples && done < v.samples; ++attempt) {
        std::map<VarRef, double> pt;
        for (VarRef var : vars) {
            double u = static_cast<double>(rng() % 65536) / 65536.0;
            pt[var] = lo + (hi - lo) * u;
        }
        try {
            bool ok = true;
            for (const Expr& pos : ws_->positives())
                if (pos.eval(pt) <= 0) ok = false;
            if (!ok) continue;
            double scale = 0;
            double n = eval_poly_num(*num_, pt, &scale);
            double d = 1;
            for (auto& f : den_factors()) d *= std::pow(eval_poly_num(f.p, pt), f.e);
            if (std::abs(d) < 1e-200) continue;
            ++done;
            if (std::abs(n) > 1e-10 * std::max(1.0, scale)) all_zero = false;
        } catch (const Error&) {
            continue;  // pole or branch cut: resample
        }
    }
    if (done < v.samples)
        throw Error(ErrKind::Domain, "could not find admissible sample points for zero test");
    v.zero = all_zero;
    return v;
}

// ---------------------------------------------------------------------------
// antiderivative (supported class only)
// ---------------------------------------------------------------------------

static bool is_sqrt_of_var(const Gen& g, VarRef x) {
    if (g.kind != Gen::Kind::Sqrt) return false;
    const Poly& a = g.arg->num();
    return g.arg->den_is_one() && a.t.size() == 1 && a.t[0].c == 1 && a.t[0].m.p.size() == 1 &&
           a.t[0].m.p[0].first.kind == Gen::Kind::Var && a.t[0].m.p[0].first.var == x &&
           a.t[0].m.p[0].second == 1;
}

Expr Expr::antiderivative(VarRef x) const {
    const Workspace* ws = ws_;
    auto unsupported = [&](const char* why) -> Error {
        return Error(ErrKind::UnsupportedClass,
                     std::string("antiderivative outside supported class: ") + why);
    };
    // classify generators of the numerator that depend on x
    bool have_sqrt_x = false;
    for (auto& t : num_->t)
        for (auto& [g, e] : t.m.p) {
            if (!gen_depends(g, x)) continue;
            if (g.kind == Gen::Kind::Var && g.var == x) continue;
            if (is_sqrt_of_var(g, x)) {
                have_sqrt_x = true;
                continue;
            }
            throw unsupported("integrand depends on the variable through an atom");
        }
    // split the denominator into x-free cores and at most one x-core
    FactorList xfree;
    std::optional<Factor> xcore;
    for (auto& f : den_factors()) {
        if (!poly_depends(f.p, x)) {
            xfree.push_back(f);
            continue;
        }
        for (auto& t : f.p.t)
            for (auto& [g, e] : t.m.p)
                if (gen_depends(g, x) && !(g.kind == Gen::Kind::Var && g.var == x))
                    throw unsupported("denominator depends on the variable through an atom");
        if (xcore) throw unsupported("denominator has several distinct factors in the variable");
        xcore = f;
    }
    Expr invfree = ExprOps::make(ws, p_one(), xfree);
    Gen xg = Gen::variable(x);

    if (!xcore) {
        // power rule termwise (with sqrt(x) support)
        Expr result = Expr::constant(ws, 0);
        for (auto& t : num_->t) {
            int a = 0, b = 0;
            Mono rest;
            for (auto& [g, e] : t.m.p) {
                if (g.kind == Gen::Kind::Var && g.var == x)
                    a = e;
                else if (is_sqrt_of_var(g, x))
                    b = e;
                else
                    rest.p.push_back({g, e});
            }
            Poly restp;
            restp.t.push_back({rest, t.c});
            Expr coeff = ExprOps::from_poly(ws, restp);
            if (!have_sqrt_x && b == 0) {
                Expr xa1 = Expr::variable(ws, x).pow(a + 1);
                result = result + coeff * xa1 / Expr::constant(ws, a + 1);
            } else {
                int e2 = 2 * a + b;
                Expr sx = Expr::sqrt_of(Expr::variable(ws, x));
                result = result + coeff * sx.pow(e2 + 2) * Expr::constant(ws, Rat(2, e2 + 2));
            }
        }
        return result * invfree;
    }

    const Poly& core = xcore->p;
    const int m = xcore->e;
    int dcore = deg_in(core, xg);
    bool core_is_x = dcore == 1 && core.t.size() == 1 && core.t[0].c == 1;

    if (have_sqrt_x) {
        if (!core_is_x) throw unsupported("sqrt(x) with a non-monomial denominator");
        Expr result = Expr::constant(ws, 0);
        for (auto& t : num_->t) {
            int a = 0, b = 0;
            Mono rest;
            for (auto& [g, e] : t.m.p) {
                if (g.kind == Gen::Kind::Var && g.var == x)
                    a = e;
                else if (is_sqrt_of_var(g, x))
                    b = e;
                else
                    rest.p.push_back({g, e});
            }
            Poly restp;
            restp.t.push_back({rest, t.c});
            Expr coeff = ExprOps::from_poly(ws, restp);
            int e2 = 2 * (a - m) + b;
            if (e2 == -2) {
                result = result + coeff * Expr::log_of(Expr::variable(ws, x));
            } else {
                Expr sx = Expr::sqrt_of(Expr::variable(ws, x));
                result = result + coeff * sx.pow(e2 + 2) * Expr::constant(ws, Rat(2, e2 + 2));
            }
        }
        return result * invfree;
    }

    if (dcore != 1) throw unsupported("denominator core is not affine in the variable");
    auto ucore = univar(core, xg);
    const Poly& c1 = ucore.rbegin()->second;  // leading coefficient in x
    if (!c1.is_constant())
        throw unsupported("denominator core has a non-constant leading coefficient");
    Rat c1v = c1.constant_value();

    // expand the numerator in powers of the affine core by synthetic division
    std::vector<Poly> l_coeffs;
    Poly rem = *num_;
    int guard = 0;
    while (!rem.is_zero()) {
        if (++guard > 512) throw unsupported("numerator expansion did not terminate");
        auto ur = univar(rem, xg);
        int dr = ur.rbegin()->first;
        if (dr == 0) {
            l_coeffs.push_back(rem);
            break;
        }
        // rem = quot * core + r0 with r0 free of x
        std::vector<Poly> coef(static_cast<std::size_t>(dr) + 1, p_zero());
        for (auto& [e, q] : ur) coef[static_cast<std::size_t>(e)] = q;
        Poly b0 = core.t.size() > 1 ? [&] {
            auto it = ucore.find(0);
            return it == ucore.end() ? p_zero() : it->second;
        }() : p_zero();
        Poly carry = p_zero();
        std::map<int, Poly> qmap;
        for (int k = dr; k >= 1; --k) {
            Poly qk = pscale(padd(coef[static_cast<std::size_t>(k)], carry), Rat(1) / c1v);
            qmap[k - 1] = qk;
            carry = pmul(pneg(b0), qk);
        }
        Poly r0 = padd(coef[0], carry);
        l_coeffs.push_back(r0);
        Poly quot = p_zero();
        for (auto& [e, q] : qmap) quot = padd(quot, pmul(q, p_gen(xg, e)));
        rem = quot;
    }
    Expr result = Expr::constant(ws, 0);
    Expr core_e = ExprOps::from_poly(ws, core);
    for (std::size_t p = 0; p < l_coeffs.size(); ++p) {
        if (l_coeffs[p].is_zero()) continue;
        if (poly_depends(l_coeffs[p], x)) throw unsupported("mixed dependence on the variable");
        Expr Np = ExprOps::from_poly(ws, l_coeffs[p]);
        int e = static_cast<int>(p) - m;
        if (e == -1) {
            result = result + Np * Expr::log_of(core_e) / Expr::constant(ws, c1v);
        } else {
            result = result + Np * core_e.pow(e + 1) /
                                  Expr::constant(ws, c1v * Rat(e + 1));
        }
    }
    return result * invfree;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

static std::string gen_str(const Workspace* ws, const Gen& g) {
    if (g.kind == Gen::Kind::Var) return ws->var_name(g.var);
    std::string inner = g.arg->str();
    return (g.kind == Gen::Kind::Sqrt ? "sqrt(" : "log(") + inner + ")";
}

std::string poly_str(const Workspace* ws, const Poly& p) {
    if (p.is_zero()) return "0";
    std::string out;
    bool first = true;
    for (auto& t : p.t) {
        Rat c = t.c;
        if (first) {
            if (c < 0) {
                out += "-";
                c = -c;
            }
        } else {
            out += c < 0 ? " - " : " + ";
            if (c < 0) c = -c;
        }
        first = false;
        std::string mono;
        for (auto& [g, e] : t.m.p) {
            if (!mono.empty()) mono += "*";
            mono += gen_str(ws, g);
            if (e != 1) mono += "^" + std::to_string(e);
        }
        if (mono.empty()) {
            out += rat_str(c);
        } else if (c == 1) {
            out += mono;
        } else {
            out += rat_str(c) + "*" + mono;
        }
    }
    return out;
}

std::string Expr::str() const {
    if (!valid()) return "<invalid>";
    std::string n = poly_str(ws_, *num_);
    if (den_is_one()) return n;
    if (num_->t.size() > 1 || (num_->t.size() == 1 && num_->t[0].c < 0)) n = "(" + n + ")";
    std::string d;
    for (auto& f : den_factors()) {
        if (!d.empty()) d += "*";
        bool simple = f.p.t.size() == 1 && f.p.t[0].c == 1 && f.p.t[0].m.p.size() == 1 &&
                      f.p.t[0].m.p[0].second == 1;
        std::string fs = poly_str(ws_, f.p);
        if (!simple) fs = "(" + fs + ")";
        if (f.e != 1) fs += "^" + std::to_string(f.e);
        d += fs;
    }
    if (den_factors().size() > 1) d = "(" + d + ")";
    return n + "/" + d;
}

}  // namespace hampert
