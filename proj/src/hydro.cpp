#include "hampert/hydro.hpp"
#include "hampert/polyops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hampert {

ExprMatrix velocity_matrix(const JetContext& ctx, const Expr& h0, const Metric& eta) {
    const int n = ctx.n;
    ExprMatrix hess(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n)));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            hess[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                h0.diff(ctx.var(Chart::V, a)).diff(ctx.var(Chart::V, b));
    ExprMatrix A(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n)));
    for (int a = 0; a < n; ++a)
        for (int g = 0; g < n; ++g) {
            Expr sum = Expr::constant(ctx.ws, 0);
            for (int b = 0; b < n; ++b) {
                Rat w = eta.up(a, b);
                if (w == 0) continue;
                sum = sum + Expr::constant(ctx.ws, w) *
                                hess[static_cast<std::size_t>(b)][static_cast<std::size_t>(g)];
            }
            A[static_cast<std::size_t>(a)][static_cast<std::size_t>(g)] = sum;
        }
    return A;
}

HydroSystem HydroSystem::make(const JetContext& ctx, Metric eta, Expr h0) {
    for (VarRef v : h0.variables())
        if (v.order != 0 || v.base < ctx.v0 || v.base >= ctx.v0 + ctx.n)
            throw Error(ErrKind::Input, "h0 must be a function of the state variables only");
    HydroSystem sys{ctx, std::move(eta), std::move(h0), {}};
    sys.A = velocity_matrix(ctx, sys.h0, sys.eta);
    return sys;
}

// one entry of the cyclic contraction; shared by the serial and OpenMP paths
static Expr haantjes_entry(const HydroSystem& sys, const ExprMatrix& hess,
                           const std::vector<ExprMatrix>& third, int a, int b, int c) {
    const JetContext& ctx = sys.ctx;
    const int n = ctx.n;
    auto delta4 = [&](int s, int nu, int ps, int f) -> Rat {
        return sys.eta.up(s, ps) * sys.eta.up(nu, f) - sys.eta.up(s, f) * sys.eta.up(nu, ps);
    };
    Expr sum = Expr::constant(ctx.ws, 0);
    const int idx[3][3] = {{a, b, c}, {b, c, a}, {c, a, b}};
    for (int rho = 0; rho < n; ++rho)
        for (int nu = 0; nu < n; ++nu)
            for (int sg = 0; sg < n; ++sg)
                for (int ps = 0; ps < n; ++ps)
                    for (int f = 0; f < n; ++f) {
                        Rat d = delta4(sg, nu, ps, f);
                        if (d == 0) continue;
                        for (auto& t : idx) {
                            Expr piece =
                                third[static_cast<std::size_t>(t[0])]
                                     [static_cast<std::size_t>(rho)][static_cast<std::size_t>(sg)] *
                                hess[static_cast<std::size_t>(t[1])][static_cast<std::size_t>(f)] *
                                hess[static_cast<std::size_t>(t[2])][static_cast<std::size_t>(ps)];
                            sum = sum + piece *
                                            sys.A[static_cast<std::size_t>(rho)]
                                                 [static_cast<std::size_t>(nu)] *
                                            Expr::constant(ctx.ws, d);
                        }
                    }
    return sum;
}

static void haantjes_prepare(const HydroSystem& sys, ExprMatrix& hess,
                             std::vector<ExprMatrix>& third) {
    const JetContext& ctx = sys.ctx;
    const int n = ctx.n;
    hess.assign(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n)));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            hess[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                sys.h0.diff(ctx.var(Chart::V, a)).diff(ctx.var(Chart::V, b));
    third.assign(static_cast<std::size_t>(n),
                 ExprMatrix(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n))));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                third[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]
                     [static_cast<std::size_t>(c)] =
                    hess[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)].diff(
                        ctx.var(Chart::V, c));
}

HaantjesTensor haantjes_tensor_serial(const HydroSystem& sys) {
    const int n = sys.ctx.n;
    ExprMatrix hess;
    std::vector<ExprMatrix> third;
    haantjes_prepare(sys, hess, third);
    HaantjesTensor H;
    H.n = n;
    H.entries.resize(static_cast<std::size_t>(n * n * n));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                H.entries[static_cast<std::size_t>((a * n + b) * n + c)] =
                    haantjes_entry(sys, hess, third, a, b, c);
    return H;
}

HaantjesTensor haantjes_tensor(const HydroSystem& sys) {
    const int n = sys.ctx.n;
    ExprMatrix hess;
    std::vector<ExprMatrix> third;
    haantjes_prepare(sys, hess, third);
    HaantjesTensor H;
    H.n = n;
    H.entries.resize(static_cast<std::size_t>(n * n * n));
    const int total = n * n * n;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int flat = 0; flat < total; ++flat) {
        int a = flat / (n * n), b = (flat / n) % n, c = flat % n;
        H.entries[static_cast<std::size_t>(flat)] = haantjes_entry(sys, hess, third, a, b, c);
    }
    return H;
}

IntegrabilityVerdict is_hydro_integrable(const HydroSystem& sys) {
    HaantjesTensor H = haantjes_tensor(sys);
    IntegrabilityVerdict v;
    v.integrable = true;
    for (int a = 0; a < H.n && v.integrable; ++a)
        for (int b = 0; b < H.n && v.integrable; ++b)
            for (int c = 0; c < H.n && v.integrable; ++c) {
                ZeroVerdict z = H.at(a, b, c).zero_test();
                v.certified = v.certified && z.certified;
                if (!z.zero) {
                    v.integrable = false;
                    v.wa = a;
                    v.wb = b;
                    v.wc = c;
                    v.witness = H.at(a, b, c).str();
                }
            }
    return v;
}

Expr RiemannChart::a(const JetContext& ctx, int i, int j) const {
    if (i == j) throw Error(ErrKind::Input, "a_ij requires i != j");
    return lambda_deriv(ctx, i, j) /
           (lambda[static_cast<std::size_t>(i)] - lambda[static_cast<std::size_t>(j)]);
}

ChartVerification verify_chart(const HydroSystem& sys, const RiemannChart& chart) {
    const JetContext& ctx = sys.ctx;
    const int n = ctx.n;
    if (static_cast<int>(chart.maps.forward.size()) != n ||
        static_cast<int>(chart.maps.inverse.size()) != n ||
        static_cast<int>(chart.lambda.size()) != n)
        throw Error(ErrKind::Input, "chart component count mismatch");
    ChartVerification out;
    out.pass = true;
    auto record = [&](const std::string& name, const Expr& residual) {
        ZeroVerdict z = residual.zero_test();
        CheckItem item{name, z.zero, z.certified, z.zero ? "" : residual.str()};
        out.pass = out.pass && z.zero;
        out.any_probabilistic = out.any_probabilistic || !z.certified;
        out.items.push_back(std::move(item));
    };

    std::map<VarRef, Expr> v_to_R, R_to_v;
    for (int i = 0; i < n; ++i) {
        v_to_R[ctx.var(Chart::V, i)] = chart.maps.inverse[static_cast<std::size_t>(i)];
        R_to_v[ctx.var(Chart::R, i)] = chart.maps.forward[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < n; ++i) {
        Expr fwd_of_inv = chart.maps.forward[static_cast<std::size_t>(i)].substitute(v_to_R);
        record("inverse_relation_R" + std::to_string(i + 1),
               fwd_of_inv - Expr::variable(ctx.ws, ctx.var(Chart::R, i)));
        Expr inv_of_fwd = chart.maps.inverse[static_cast<std::size_t>(i)].substitute(R_to_v);
        record("inverse_relation_" + ctx.ws->name(ctx.v0 + i),
               inv_of_fwd - Expr::variable(ctx.ws, ctx.var(Chart::V, i)));
    }
    for (int i = 0; i < n; ++i) {
        Expr lam_v = chart.lambda[static_cast<std::size_t>(i)].substitute(R_to_v);
        for (int b = 0; b < n; ++b) {
            Expr lhs = Expr::constant(ctx.ws, 0);
            for (int a = 0; a < n; ++a)
                lhs = lhs + sys.A[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] *
                                chart.gradient(ctx, i, a);
            Expr rhs = lam_v * chart.gradient(ctx, i, b);
            record("eigencovector_i" + std::to_string(i + 1) + "_beta" + std::to_string(b + 1),
                   lhs - rhs);
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Expr diff = chart.lambda[static_cast<std::size_t>(i)] -
                        chart.lambda[static_cast<std::size_t>(j)];
            ZeroVerdict z = diff.zero_test();
            CheckItem item{"lambda_distinct_" + std::to_string(i + 1) + std::to_string(j + 1),
                           !z.zero, z.certified, z.zero ? "identically equal" : ""};
            out.pass = out.pass && !z.zero;
            out.items.push_back(std::move(item));
        }
    {
        // Jacobian of the forward map not identically degenerate
        Expr det = Expr::constant(ctx.ws, 0);
        if (n == 1) {
            det = chart.gradient(ctx, 0, 0);
        } else if (n == 2) {
            det = chart.gradient(ctx, 0, 0) * chart.gradient(ctx, 1, 1) -
                  chart.gradient(ctx, 0, 1) * chart.gradient(ctx, 1, 0);
        } else {
            // Laplace expansion along the first row (n is small)
            std::function<Expr(std::vector<int>, std::vector<int>)> minor =
                [&](std::vector<int> rows, std::vector<int> cols) -> Expr {
                if (rows.size() == 1) return chart.gradient(ctx, rows[0], cols[0]);
                Expr acc = Expr::constant(ctx.ws, 0);
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    std::vector<int> sub_rows(rows.begin() + 1, rows.end());
                    std::vector<int> sub_cols;
                    for (std::size_t m = 0; m < cols.size(); ++m)
                        if (m != k) sub_cols.push_back(cols[m]);
                    Expr term = chart.gradient(ctx, rows[0], cols[k]) * minor(sub_rows, sub_cols);
                    acc = (k % 2 == 0) ? acc + term : acc - term;
                }
                return acc;
            };
            std::vector<int> all(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
            det = minor(all, all);
        }
        ZeroVerdict z = det.zero_test();
        CheckItem item{"jacobian_nondegenerate", !z.zero, z.certified,
                       z.zero ? "identically singular" : ""};
        out.pass = out.pass && !z.zero;
        out.items.push_back(std::move(item));
    }
    return out;
}

// ---------------------------------------------------------------------------
// n = 2 chart construction
// ---------------------------------------------------------------------------

static double eval_at_base_point(const JetContext& ctx, const Expr& e) {
    std::map<VarRef, double> pt;
    for (auto& [idx, val] : ctx.ws->base_point()) pt[VarRef{idx, 0}] = val.get_d();
    return e.eval(pt);
}

// Triangular pattern inversion of (R1, R2) = forward(v): looks for
// combinations affine in one state variable or affine in sqrt(one variable).
static std::optional<std::vector<Expr>> invert_chart_n2(const JetContext& ctx,
                                                        const std::vector<Expr>& forward) {
    std::map<VarRef, Expr> solved;  // v^a -> expression in R
    Expr R1 = Expr::variable(ctx.ws, ctx.var(Chart::R, 0));
    Expr R2 = Expr::variable(ctx.ws, ctx.var(Chart::R, 1));
    struct Combo {
        Expr c;
        Expr t;
    };
    std::vector<Combo> combos = {{forward[0], R1},
                                 {forward[1], R2},
                                 {forward[0] + forward[1], R1 + R2},
                                 {forward[0] - forward[1], R1 - R2}};
    auto depends_on_unsolved = [&](const Expr& e, VarRef skip) {
        for (VarRef v : e.variables())
            if (v.base < ctx.r0 && !solved.count(VarRef{v.base, 0}) && !(v == skip)) return true;
        return false;
    };
    for (int round = 0; round < 2; ++round) {
        for (int a = 0; a < 2 && static_cast<int>(solved.size()) < 2; ++a) {
            VarRef va = ctx.var(Chart::V, a);
            if (solved.count(va)) continue;
            for (auto& combo : combos) {
                if (!combo.c.depends_on(va)) continue;
                // sqrt atoms of the combo that involve v^a
                std::vector<Gen> sq;
                for (auto& t : combo.c.num().t)
                    for (auto& [g, e] : t.m.p)
                        if (g.kind == Gen::Kind::Sqrt && g.arg->depends_on(va)) {
                            bool seen = false;
                            for (auto& h : sq) seen = seen || h == g;
                            if (!seen) sq.push_back(g);
                        }
                bool ok = false;
                Expr va_expr;
                try {
                    if (sq.empty()) {
                        Expr m = combo.c.diff(va);
                        if (m.is_zero() || m.depends_on(va) || depends_on_unsolved(m, va)) continue;
                        Expr q = combo.c - m * Expr::variable(ctx.ws, va);
                        if (q.depends_on(va) || depends_on_unsolved(q, va)) continue;
                        Expr m_R = m.substitute(solved), q_R = q.substitute(solved);
                        va_expr = (combo.t - q_R) / m_R;
                        ok = true;
                    } else if (sq.size() == 1) {
                        const Gen& s = sq.front();
                        // combo = (A + B*s)/den with A, B, den free of v^a
                        Poly A, B;
                        for (auto& t : combo.c.num().t) {
                            Mono rest;
                            bool has = false;
                            for (auto& ge : t.m.p) {
                                if (ge.first == s)
                                    has = true;
                                else
                                    rest.p.push_back(ge);
                            }
                            (has ? B : A).t.push_back({has ? rest : t.m, t.c});
                        }
                        auto resort = [](Poly& p) {
                            std::sort(p.t.begin(), p.t.end(), [](const Term& x, const Term& y) {
                                return mono_cmp(x.m, y.m) == std::strong_ordering::greater;
                            });
                        };
                        resort(A);
                        resort(B);
                        Expr Ae = expr_from_poly(ctx.ws, A), Be = expr_from_poly(ctx.ws, B);
                        Expr dene = expr_from_poly(ctx.ws, combo.c.den());
                        if (Ae.depends_on(va) || Be.depends_on(va) || dene.depends_on(va)) continue;
                        if (depends_on_unsolved(Ae, va) || depends_on_unsolved(Be, va) ||
                            depends_on_unsolved(dene, va))
                            continue;
                        Expr arg = expr_from_poly(ctx.ws, s.arg->num());
                        Expr alpha = arg.diff(va);
                        if (alpha.is_zero() || alpha.depends_on(va) ||
                            depends_on_unsolved(alpha, va))
                            continue;
                        Expr beta = arg - alpha * Expr::variable(ctx.ws, va);
                        if (beta.depends_on(va) || depends_on_unsolved(beta, va)) continue;
                        Expr s_R = (combo.t * dene.substitute(solved) - Ae.substitute(solved)) /
                                   Be.substitute(solved);
                        va_expr = (s_R * s_R - beta.substitute(solved)) / alpha.substitute(solved);
                        ok = true;
                    }
                } catch (const Error&) {
                    continue;
                }
                if (ok) {
                    solved[va] = va_expr;
                    break;
                }
            }
        }
    }
    if (static_cast<int>(solved.size()) != 2) return std::nullopt;
    return std::vector<Expr>{solved.at(ctx.var(Chart::V, 0)), solved.at(ctx.var(Chart::V, 1))};
}

RiemannChart solve_chart_n2(const HydroSystem& sys) {
    const JetContext& ctx = sys.ctx;
    if (ctx.n != 2) throw Error(ErrKind::Precondition, "chart construction implemented for n = 2");
    if (!ctx.has_riemann())
        throw Error(ErrKind::Precondition, "workspace lacks Riemann variables");
    Expr tr = sys.A[0][0] + sys.A[1][1];
    Expr det = sys.A[0][0] * sys.A[1][1] - sys.A[0][1] * sys.A[1][0];
    Expr disc = tr * tr - Expr::constant(ctx.ws, 4) * det;
    if (disc.is_zero())
        throw Error(ErrKind::Precondition,
                    "coinciding characteristic speeds: the basic assumption fails");
    Expr sqrt_disc = Expr::sqrt_of(disc);
    Expr half = Expr::constant(ctx.ws, Rat(1, 2));
    std::vector<Expr> lam_v = {(tr - sqrt_disc) * half, (tr + sqrt_disc) * half};
    // label ascending at the declared base point
    try {
        if (eval_at_base_point(ctx, lam_v[0]) > eval_at_base_point(ctx, lam_v[1]))
            std::swap(lam_v[0], lam_v[1]);
    } catch (const Error&) {
        // keep the algebraic order when the base point is unusable
    }

    VarRef x1 = ctx.var(Chart::V, 0), x2 = ctx.var(Chart::V, 1);
    std::vector<std::vector<Expr>> candidates(2);
    for (int i = 0; i < 2; ++i) {
        const Expr& lam = lam_v[static_cast<std::size_t>(i)];
        // covector w with w_a (A^a_b - lam delta) = 0
        Expr w1 = sys.A[1][0];
        Expr w2 = lam - sys.A[0][0];
        if (w1.is_zero() && w2.is_zero()) {
            w1 = lam - sys.A[1][1];
            w2 = sys.A[0][1];
        }
        if (w1.is_zero() && w2.is_zero())
            throw Error(ErrKind::Precondition, "degenerate eigencovector");
        // simplest factors first, so plain invariants come before
        // reparametrized ones
        const int disc_pows[] = {0, 1, -1, 2, -2, 3, -3, 4, -4};
        const int var_pows[] = {0, 1, -1, 2, -2};
        for (int pa : disc_pows) {
            for (int pb : var_pows) {
                for (int pc : var_pows) {
                    if (candidates[static_cast<std::size_t>(i)].size() >= 24) break;
                    Expr f = sqrt_disc.pow(pa) * Expr::variable(ctx.ws, x1).pow(pb) *
                             Expr::variable(ctx.ws, x2).pow(pc);
                    Expr Ri;
                    try {
                        Expr o1 = f * w1;
                        Expr o2 = f * w2;
                        Expr curl = o1.diff(x2) - o2.diff(x1);
                        if (!curl.is_zero()) continue;
                        Expr F1 = o1.antiderivative(x1);
                        Expr gprime = o2 - F1.diff(x2);
                        if (gprime.depends_on(x1) && !gprime.diff(x1).is_zero()) continue;
                        Expr g = gprime.antiderivative(x2);
                        Ri = F1 + g;
                    } catch (const Error&) {
                        continue;
                    }
                    if (Ri.diff(x1).is_zero() && Ri.diff(x2).is_zero()) continue;
                    // orient: first nonzero gradient component positive at
                    // the base point (a monotone reparametrization)
                    try {
                        for (VarRef xv : {x1, x2}) {
                            double g = eval_at_base_point(ctx, Ri.diff(xv));
                            if (std::abs(g) < 1e-12) continue;
                            if (g < 0) Ri = -Ri;
                            break;
                        }
                    } catch (const Error&) {
                    }
                    candidates[static_cast<std::size_t>(i)].push_back(Ri);
                }
            }
        }
        auto& cand = candidates[static_cast<std::size_t>(i)];
        if (cand.empty())
            throw Error(ErrKind::UnsupportedClass,
                        "no integrating factor found in the candidate family; "
                        "please supply a Riemann chart");
        // prefer the simplest invariants and drop duplicates
        std::stable_sort(cand.begin(), cand.end(), [](const Expr& a, const Expr& b) {
            std::string sa = a.str(), sb = b.str();
            return sa.size() != sb.size() ? sa.size() < sb.size() : sa < sb;
        });
        cand.erase(std::unique(cand.begin(), cand.end(),
                               [](const Expr& a, const Expr& b) { return a.str() == b.str(); }),
                   cand.end());
        if (cand.size() > 6) cand.resize(6);
    }

    for (const Expr& f0 : candidates[0])
        for (const Expr& f1 : candidates[1]) {
            std::vector<Expr> forward = {f0, f1};
            auto inverse = invert_chart_n2(ctx, forward);
            if (!inverse) continue;
            RiemannChart chart;
            chart.maps.forward = forward;
            chart.maps.inverse = *inverse;
            std::map<VarRef, Expr> v_to_R;
            for (int i = 0; i < 2; ++i)
                v_to_R[ctx.var(Chart::V, i)] = chart.maps.inverse[static_cast<std::size_t>(i)];
            chart.lambda = {lam_v[0].substitute(v_to_R), lam_v[1].substitute(v_to_R)};
            return chart;
        }
    throw Error(ErrKind::UnsupportedClass,
                "could not invert the constructed chart; please supply a Riemann chart");
}

TsarevReport tsarev_check(const HydroSystem& sys, const RiemannChart& chart) {
    const JetContext& ctx = sys.ctx;
    TsarevReport rep;
    if (ctx.n <= 2) {
        rep.vacuous = true;
        return rep;
    }
    for (int i = 0; i < ctx.n; ++i)
        for (int j = 0; j < ctx.n; ++j)
            for (int k = 0; k < ctx.n; ++k) {
                if (i == j || j == k || i == k) continue;
                Expr aij = chart.a(ctx, i, j), aik = chart.a(ctx, i, k);
                Expr ajk = chart.a(ctx, j, k), akj = chart.a(ctx, k, j);
                Expr t1 = aij.diff(ctx.var(Chart::R, k)) - aik.diff(ctx.var(Chart::R, j));
                Expr t2 = aij.diff(ctx.var(Chart::R, k)) + aij * ajk + aik * akj - aij * aik;
                std::string tag = std::to_string(i + 1) + std::to_string(j + 1) +
                                  std::to_string(k + 1);
                for (auto& [name, res] :
                     std::vector<std::pair<std::string, Expr>>{{"symmetry_" + tag, t1},
                                                               {"tsarev_" + tag, t2}}) {
                    ZeroVerdict z = res.zero_test();
                    rep.pass = rep.pass && z.zero;
                    rep.items.push_back({name, z.zero, z.certified, z.zero ? "" : res.str()});
                }
            }
    return rep;
}

ConservedReport check_conserved0(const HydroSystem& sys, const RiemannChart* chart,
                                 const Expr& f0) {
    const JetContext& ctx = sys.ctx;
    const int n = ctx.n;
    ConservedReport rep;
    ExprMatrix M(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n)));
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            Expr sum = Expr::constant(ctx.ws, 0);
            for (int c = 0; c < n; ++c) {
                Rat w = sys.eta.up(a, c);
                if (w == 0) continue;
                sum = sum + Expr::constant(ctx.ws, w) *
                                f0.diff(ctx.var(Chart::V, c)).diff(ctx.var(Chart::V, b));
            }
            M[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = sum;
        }
    rep.conserved = true;
    for (int a = 0; a < n && rep.conserved; ++a)
        for (int b = 0; b < n && rep.conserved; ++b) {
            Expr comm = Expr::constant(ctx.ws, 0);
            for (int c = 0; c < n; ++c)
                comm = comm +
                       sys.A[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] *
                           M[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)] -
                       M[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] *
                           sys.A[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
            if (!comm.is_zero()) {
                rep.conserved = false;
                rep.witness = comm.str();
            }
        }
    rep.degenerate = true;
    for (int a = 0; a < n; ++a)
        rep.degenerate = rep.degenerate && f0.diff(ctx.var(Chart::V, a)).is_zero();
    if (!rep.conserved || chart == nullptr) return rep;

    std::map<VarRef, Expr> v_to_R;
    for (int i = 0; i < n; ++i)
        v_to_R[ctx.var(Chart::V, i)] = chart->maps.inverse[static_cast<std::size_t>(i)];
    for (int i = 0; i < n; ++i) {
        Expr mu_v;
        bool have = false;
        for (int b = 0; b < n && !have; ++b) {
            Expr grad = chart->gradient(ctx, i, b);
            if (grad.is_zero()) continue;
            Expr acc = Expr::constant(ctx.ws, 0);
            for (int a = 0; a < n; ++a)
                acc = acc + M[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] *
                                chart->gradient(ctx, i, a);
            mu_v = acc / grad;
            have = true;
        }
        if (!have) throw Error(ErrKind::Internal, "vanishing Riemann gradient");
        rep.mu.push_back(mu_v.substitute(v_to_R));
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            Expr dmu = rep.mu[static_cast<std::size_t>(i)] - rep.mu[static_cast<std::size_t>(j)];
            if (dmu.is_zero()) {
                rep.generic = false;
                continue;
            }
            Expr b_ij = rep.mu[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j)) / dmu;
            Expr res = chart->a(ctx, i, j) - b_ij;
            if (!res.is_zero()) {
                rep.in_chart_consistent = false;
                rep.witness = res.str();
            }
        }
    return rep;
}

std::vector<Expr> solve_claws0(const HydroSystem& sys, const std::vector<Expr>& basis) {
    const JetContext& ctx = sys.ctx;
    const int n = ctx.n;
    if (basis.empty()) throw Error(ErrKind::Input, "empty conservation-law basis");
    const std::size_t K = basis.size();
    // commutator entries are linear in the density
    std::vector<std::vector<Expr>> cond(static_cast<std::size_t>(n * n),
                                        std::vector<Expr>(K));
    for (std::size_t k = 0; k < K; ++k) {
        ExprMatrix M(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n)));
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                Expr sum = Expr::constant(ctx.ws, 0);
                for (int c = 0; c < n; ++c) {
                    Rat w = sys.eta.up(a, c);
                    if (w == 0) continue;
                    sum = sum + Expr::constant(ctx.ws, w) *
                                    basis[k].diff(ctx.var(Chart::V, c)).diff(ctx.var(Chart::V, b));
                }
                M[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = sum;
            }
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                Expr comm = Expr::constant(ctx.ws, 0);
                for (int c = 0; c < n; ++c)
                    comm = comm +
                           sys.A[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] *
                               M[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)] -
                           M[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] *
                               sys.A[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)];
                cond[static_cast<std::size_t>(a * n + b)][k] = comm;
            }
    }
    // build the exact linear system sum_k c_k cond[site][k] == 0
    struct RowKey {
        std::size_t site;
        Mono m;
    };
    std::vector<std::vector<Rat>> rows;
    for (std::size_t site = 0; site < cond.size(); ++site) {
        // common denominator across the site (factored lcm)
        FactorList lcm;
        for (std::size_t k = 0; k < K; ++k) lcm = factor_lcm(lcm, cond[site][k].den_factors());
        std::map<std::string, std::pair<Mono, std::vector<Rat>>> coeff_rows;
        for (std::size_t k = 0; k < K; ++k) {
            Poly comp = factor_complement(lcm, cond[site][k].den_factors());
            Poly scaled = pmul(cond[site][k].num(), comp);
            for (auto& t : scaled.t) {
                std::string key = poly_str(ctx.ws, Poly{{Term{t.m, Rat(1)}}});
                auto& row = coeff_rows[key];
                if (row.second.empty()) row.second.assign(K, Rat(0));
                row.first = t.m;
                row.second[k] += t.c;
            }
        }
        for (auto& [key, row] : coeff_rows) rows.push_back(row.second);
    }
    QMatrix mat(rows.size(), K);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < K; ++j) mat.at(i, j) = rows[i][j];
    auto null_basis = nullspace(std::move(mat));
    std::vector<Expr> out;
    for (auto& vec : null_basis) {
        Expr density = Expr::constant(ctx.ws, 0);
        for (std::size_t k = 0; k < K; ++k)
            if (vec[k] != 0) density = density + Expr::constant(ctx.ws, vec[k]) * basis[k];
        bool degenerate = true;
        for (int a = 0; a < n; ++a)
            degenerate = degenerate && density.diff(ctx.var(Chart::V, a)).is_zero();
        if (!degenerate && !density.is_structurally_zero()) out.push_back(density);
    }
    return out;
}

}  // namespace hampert
