#include "hampert/perturbation.hpp"
#include "hampert/polyops.hpp"

#include <algorithm>
#include <functional>

namespace hampert {

Perturbation make_perturbation(HydroSystem base, RiemannChart chart, LocalFunctional h1,
                               LocalFunctional h2) {
    const JetContext& ctx = base.ctx;
    if (!ctx.has_riemann()) throw Error(ErrKind::Input, "perturbation requires Riemann variables");
    if (h1.density.chart != Chart::V || h2.density.chart != Chart::V)
        throw Error(ErrKind::Input, "perturbation densities are given in the state chart");
    if (!h1.density.e.is_structurally_zero() && jet_degree_of(ctx, h1.density) != 1)
        throw Error(ErrKind::Input, "h1 must be homogeneous of jet degree 1");
    if (!h2.density.e.is_structurally_zero() && jet_degree_of(ctx, h2.density) != 2)
        throw Error(ErrKind::Input, "h2 must be homogeneous of jet degree 2");
    Perturbation pert{std::move(base), std::move(chart), {}};
    pert.H.orders.push_back(LocalFunctional{DiffPoly{pert.base.h0, Chart::V}});
    pert.H.orders.push_back(std::move(h1));
    pert.H.orders.push_back(std::move(h2));
    return pert;
}

// ---------------------------------------------------------------------------
// chart-side coefficients
// ---------------------------------------------------------------------------

std::vector<Expr> to_chart_first(const Perturbation& pert) {
    const JetContext& ctx = pert.base.ctx;
    DiffPoly h1R = to_chart(ctx, pert.H.at(1).density, Chart::R, pert.chart.maps);
    std::vector<Expr> p;
    Expr rebuilt = Expr::constant(ctx.ws, 0);
    for (int i = 0; i < ctx.n; ++i) {
        VarRef rx = ctx.var(Chart::R, i, 1);
        Expr pi = h1R.e.diff(rx);
        for (VarRef v : pi.variables())
            if (v.order != 0)
                throw Error(ErrKind::Input, "h1 is not of the form sum p_i(R) R_i,x");
        rebuilt = rebuilt + pi * Expr::variable(ctx.ws, rx);
        p.push_back(pi);
    }
    if (!(h1R.e - rebuilt).is_zero())
        throw Error(ErrKind::Input, "h1 is not of the form sum p_i(R) R_i,x");
    return p;
}

// symmetric d_ij with h2 = sum_{i,j} d_ij R_i,x R_j,x
static std::vector<std::vector<Expr>> chart_quadratic_coeffs(const JetContext& ctx,
                                                             const RiemannChart& chart,
                                                             const DiffPoly& h2_v) {
    DiffPoly h2R = to_chart(ctx, h2_v, Chart::R, chart.maps);
    const int n = ctx.n;
    std::vector<std::vector<Expr>> d(static_cast<std::size_t>(n),
                                     std::vector<Expr>(static_cast<std::size_t>(n)));
    Expr rebuilt = Expr::constant(ctx.ws, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Expr dij = h2R.e.diff(ctx.var(Chart::R, i, 1)).diff(ctx.var(Chart::R, j, 1)) *
                       Expr::constant(ctx.ws, Rat(1, 2));
            for (VarRef v : dij.variables())
                if (v.order != 0)
                    throw Error(ErrKind::Input,
                                "h2 is not a quadratic form in the first chart jets");
            d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = dij;
            rebuilt = rebuilt + dij * Expr::variable(ctx.ws, ctx.var(Chart::R, i, 1)) *
                                    Expr::variable(ctx.ws, ctx.var(Chart::R, j, 1));
        }
    if (!(h2R.e - rebuilt).is_zero())
        throw Error(ErrKind::Input, "h2 is not a quadratic form in the first chart jets");
    return d;
}

// ---------------------------------------------------------------------------
// first order
// ---------------------------------------------------------------------------

FirstOrderReport first_order_check(const Perturbation& pert) {
    const JetContext& ctx = pert.base.ctx;
    const RiemannChart& chart = pert.chart;
    const int n = ctx.n;
    FirstOrderReport rep;
    rep.p = to_chart_first(pert);
    rep.omega.assign(static_cast<std::size_t>(n),
                     std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(ctx.ws, 0)));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            Expr dl = chart.lambda[static_cast<std::size_t>(i)] -
                      chart.lambda[static_cast<std::size_t>(j)];
            if (dl.is_zero())
                throw Error(ErrKind::Precondition,
                            "coinciding characteristic speeds violate the basic assumption");
            Expr theta = rep.p[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j)) -
                         rep.p[static_cast<std::size_t>(j)].diff(ctx.var(Chart::R, i));
            rep.omega[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = theta / dl;
        }
    if (n <= 2) {
        rep.vacuous = true;
        return rep;
    }
    auto w = [&](int i, int j) -> const Expr& {
        return rep.omega[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                if (i == j || j == k || i == k) continue;
                Expr lhs = w(i, j).diff(ctx.var(Chart::R, k)) - w(i, k).diff(ctx.var(Chart::R, j));
                Expr rhs = chart.a(ctx, i, j) * w(i, k) + chart.a(ctx, j, i) * w(j, k) -
                           chart.a(ctx, i, k) * w(i, j) - chart.a(ctx, k, i) * w(k, j);
                Expr res = lhs - rhs;
                ZeroVerdict z = res.zero_test();
                rep.pass = rep.pass && z.zero;
                rep.items.push_back({"first_order_" + std::to_string(i + 1) +
                                         std::to_string(j + 1) + std::to_string(k + 1),
                                     z.zero, z.certified, z.zero ? "" : res.str()});
            }
    return rep;
}

// exact affine system  sum_k c_k lhs[k] == rhs  per site
static std::optional<std::vector<Rat>> solve_affine_sites(
    const Workspace* ws, const std::vector<std::pair<std::vector<Expr>, Expr>>& sites) {
    if (sites.empty()) return std::vector<Rat>{};
    const std::size_t K = sites.front().first.size();
    std::vector<std::vector<Rat>> rows;
    for (auto& [lhs, rhs] : sites) {
        FactorList lcm = rhs.den_factors();
        for (auto& e : lhs) lcm = factor_lcm(lcm, e.den_factors());
        std::map<std::string, std::vector<Rat>> by_mono;
        auto add_scaled = [&](const Expr& e, std::size_t col) {
            Poly comp = factor_complement(lcm, e.den_factors());
            Poly scaled = pmul(e.num(), comp);
            for (auto& t : scaled.t) {
                std::string key = poly_str(ws, Poly{{Term{t.m, Rat(1)}}});
                auto& row = by_mono[key];
                if (row.empty()) row.assign(K + 1, Rat(0));
                row[col] += t.c;
            }
        };
        for (std::size_t k = 0; k < K; ++k) add_scaled(lhs[k], k);
        add_scaled(rhs, K);
        for (auto& [key, row] : by_mono) rows.push_back(row);
    }
    QMatrix m(rows.size(), K);
    std::vector<Rat> b(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < K; ++j) m.at(i, j) = rows[i][j];
        b[i] = rows[i][K];
    }
    return solve(std::move(m), std::move(b));
}

FirstOrderTrivialization first_order_trivialize(const Perturbation& pert,
                                                const std::vector<Expr>& basis_R) {
    const JetContext& ctx = pert.base.ctx;
    const RiemannChart& chart = pert.chart;
    const int n = ctx.n;
    if (basis_R.empty()) throw Error(ErrKind::Input, "empty k0 basis");
    std::vector<Expr> p = to_chart_first(pert);
    std::vector<std::pair<std::vector<Expr>, Expr>> sites;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Expr dl = chart.lambda[static_cast<std::size_t>(i)] -
                      chart.lambda[static_cast<std::size_t>(j)];
            // the defining property is {H0, K0} = H1: with this bracket
            // orientation the chart equations pick up -omega on the right
            Expr omega = (p[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j)) -
                          p[static_cast<std::size_t>(j)].diff(ctx.var(Chart::R, i))) /
                         dl;
            std::vector<Expr> lhs;
            for (auto& beta : basis_R) {
                lhs.push_back(beta.diff(ctx.var(Chart::R, i)).diff(ctx.var(Chart::R, j)) +
                              chart.a(ctx, i, j) * beta.diff(ctx.var(Chart::R, i)) +
                              chart.a(ctx, j, i) * beta.diff(ctx.var(Chart::R, j)));
            }
            sites.push_back({std::move(lhs), -omega});
        }
    auto sol = solve_affine_sites(ctx.ws, sites);
    if (!sol)
        throw Error(ErrKind::BasisInsufficient,
                    "no k0 in the supplied basis solves the chart equations");
    FirstOrderTrivialization out;
    out.k0 = Expr::constant(ctx.ws, 0);
    for (std::size_t k = 0; k < basis_R.size(); ++k)
        if ((*sol)[k] != 0)
            out.k0 = out.k0 + Expr::constant(ctx.ws, (*sol)[k]) * basis_R[k];
    // verify {H0, K0} = H1
    std::map<VarRef, Expr> R_to_v;
    for (int i = 0; i < n; ++i)
        R_to_v[ctx.var(Chart::R, i)] = chart.maps.forward[static_cast<std::size_t>(i)];
    LocalFunctional K0{DiffPoly{out.k0.substitute(R_to_v), Chart::V}};
    LocalFunctional br = poisson_bracket(ctx, pert.H.at(0), K0, pert.base.eta);
    out.bracket_verified = br.equals(ctx, pert.H.at(1));
    if (!out.bracket_verified)
        throw Error(ErrKind::Internal,
                    "k0 solves the chart equations but the bracket identity fails");
    // optional gauge function psi by sequential quadrature:
    // p_i = -lambda_i k0_{,i} + psi_{,i} in this orientation
    try {
        Expr psi = Expr::constant(ctx.ws, 0);
        std::vector<Expr> tau;
        for (int i = 0; i < n; ++i)
            tau.push_back(p[static_cast<std::size_t>(i)] +
                          chart.lambda[static_cast<std::size_t>(i)] *
                              out.k0.diff(ctx.var(Chart::R, i)));
        for (int i = 0; i < n; ++i) {
            Expr rem = tau[static_cast<std::size_t>(i)] - psi.diff(ctx.var(Chart::R, i));
            if (rem.is_structurally_zero()) continue;
            psi = psi + rem.antiderivative(ctx.var(Chart::R, i));
        }
        bool ok = true;
        for (int i = 0; i < n; ++i)
            ok = ok &&
                 (psi.diff(ctx.var(Chart::R, i)) - tau[static_cast<std::size_t>(i)]).is_zero();
        if (ok) out.psi = psi;
    } catch (const Error&) {
        // psi is a convenience output; the bracket identity above is the gate
    }
    return out;
}

// ---------------------------------------------------------------------------
// second order
// ---------------------------------------------------------------------------

SecondOrderReport second_order_check(const Perturbation& pert) {
    const JetContext& ctx = pert.base.ctx;
    const RiemannChart& chart = pert.chart;
    const int n = ctx.n;
    if (!pert.H.at(1).density.e.is_structurally_zero() && !pert.H.at(1).is_zero_functional(ctx))
        throw Error(ErrKind::Precondition,
                    "reduce the first-order term before the second-order analysis");
    SecondOrderReport rep;
    rep.d = chart_quadratic_coeffs(ctx, chart, pert.H.at(2).density);
    for (int i = 0; i < n; ++i) {
        Expr lii = chart.lambda_deriv(ctx, i, i);
        if (lii.is_zero())
            throw Error(ErrKind::Precondition,
                        "lambda_{i,i} vanishes identically for i = " + std::to_string(i + 1));
        rep.c_candidate.push_back(
            -(rep.d[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]) / lii);
    }
    rep.pass = true;
    // (a) each diagonal candidate depends on its own invariant only
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            Expr res = rep.c_candidate[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j));
            ZeroVerdict z = res.zero_test();
            rep.pass = rep.pass && z.zero;
            rep.items.push_back({"diagonal_C" + std::to_string(i + 1) + "_R" +
                                     std::to_string(j + 1),
                                 z.zero, z.certified, z.zero ? "" : res.str()});
        }
    // (b) cyclic closedness over unordered triples
    rep.vacuous_cyclic = n <= 2;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                auto ratio = [&](int a, int b) {
                    return rep.d[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] /
                           (chart.lambda[static_cast<std::size_t>(a)] -
                            chart.lambda[static_cast<std::size_t>(b)]);
                };
                Expr res = ratio(i, j).diff(ctx.var(Chart::R, k)) +
                           ratio(j, k).diff(ctx.var(Chart::R, i)) +
                           ratio(k, i).diff(ctx.var(Chart::R, j));
                ZeroVerdict z = res.zero_test();
                rep.pass = rep.pass && z.zero;
                rep.items.push_back({"cyclic_" + std::to_string(i + 1) + std::to_string(j + 1) +
                                         std::to_string(k + 1),
                                     z.zero, z.certified, z.zero ? "" : res.str()});
            }
    if (!rep.pass) return rep;

    rep.C = rep.c_candidate;
    rep.s.assign(static_cast<std::size_t>(n),
                 std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(ctx.ws, 0)));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            Expr num = Expr::constant(ctx.ws, 2) *
                           rep.d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +
                       rep.C[static_cast<std::size_t>(i)] * chart.lambda_deriv(ctx, i, j) +
                       rep.C[static_cast<std::size_t>(j)] * chart.lambda_deriv(ctx, j, i);
            rep.s[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                num / (chart.lambda[static_cast<std::size_t>(i)] -
                       chart.lambda[static_cast<std::size_t>(j)]);
        }
    // potentials phi with phi_{i,j} - phi_{j,i} = s_ij (gauge: see below)
    rep.phi.assign(static_cast<std::size_t>(n), Expr::constant(ctx.ws, 0));
    if (n == 2) {
        // gauge phi_1 = 0
        try {
            rep.phi[1] = -(rep.s[0][1].antiderivative(ctx.var(Chart::R, 0)));
        } catch (const Error& e) {
            if (e.kind != ErrKind::UnsupportedClass) throw;
            throw Error(ErrKind::UnsupportedClass,
                        "phi quadrature outside the supported class; s_12 = " +
                            rep.s[0][1].str());
        }
    } else {
        // closedness precheck, then the homotopy quadrature (polynomial s)
        for (int l = 0; l < n; ++l)
            for (int j = l + 1; j < n; ++j)
                for (int i = j + 1; i < n; ++i) {
                    Expr res = rep.s[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)]
                                   .diff(ctx.var(Chart::R, i)) +
                               rep.s[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]
                                   .diff(ctx.var(Chart::R, l)) +
                               rep.s[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)]
                                   .diff(ctx.var(Chart::R, j));
                    if (!res.is_zero())
                        throw Error(ErrKind::Internal, "s_ij failed the closedness precheck");
                }
        for (int m = 0; m < n; ++m) {
            Expr phi_m = Expr::constant(ctx.ws, 0);
            for (int a = 0; a < n; ++a) {
                const Expr& sma = rep.s[static_cast<std::size_t>(m)][static_cast<std::size_t>(a)];
                if (sma.is_structurally_zero()) continue;
                Expr integrand = sma * Expr::variable(ctx.ws, ctx.var(Chart::R, a));
                if (!integrand.den_is_one())
                    throw Error(ErrKind::UnsupportedClass,
                                "phi quadrature outside the polynomial class; s_" +
                                    std::to_string(m + 1) + std::to_string(a + 1) + " = " +
                                    sma.str());
                for (auto& t : integrand.num().t) {
                    int q = 0;
                    for (auto& [g, e] : t.m.p) {
                        if (g.kind != Gen::Kind::Var)
                            throw Error(ErrKind::UnsupportedClass,
                                        "phi quadrature outside the polynomial class; s_" +
                                            std::to_string(m + 1) + std::to_string(a + 1) +
                                            " = " + sma.str());
                        q += e;
                    }
                    // homotopy integral: a term of degree q picks up 1/(q+1)
                    Poly term_poly{{Term{t.m, t.c / (q + 1)}}};
                    phi_m = phi_m + expr_from_poly(ctx.ws, term_poly);
                }
            }
            rep.phi[static_cast<std::size_t>(m)] = phi_m;
        }
    }
    // the potentials must reproduce s exactly
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            Expr res = rep.phi[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j)) -
                       rep.phi[static_cast<std::size_t>(j)].diff(ctx.var(Chart::R, i)) -
                       rep.s[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (!res.is_zero())
                throw Error(ErrKind::Internal, "phi quadrature failed verification: " + res.str());
        }
    return rep;
}

LocalFunctional build_h2_canonical(const HydroSystem& sys, const RiemannChart& chart,
                                   const std::vector<Expr>& C, const std::vector<Expr>& phi) {
    const JetContext& ctx = sys.ctx;
    const int n = ctx.n;
    if (static_cast<int>(C.size()) != n || static_cast<int>(phi.size()) != n)
        throw Error(ErrKind::Input, "component count mismatch");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (!C[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j)).is_zero())
                throw Error(ErrKind::Input, "C_" + std::to_string(i + 1) + " must depend on R" +
                                                std::to_string(i + 1) + " only");
        }
    Expr density = Expr::constant(ctx.ws, 0);
    for (int i = 0; i < n; ++i) {
        Expr rix = Expr::variable(ctx.ws, ctx.var(Chart::R, i, 1));
        density =
            density - C[static_cast<std::size_t>(i)] * chart.lambda_deriv(ctx, i, i) * rix * rix;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            Expr sij = phi[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j)) -
                       phi[static_cast<std::size_t>(j)].diff(ctx.var(Chart::R, i));
            if (sij.is_structurally_zero()) continue;
            density = density + Expr::constant(ctx.ws, Rat(1, 2)) *
                                    (chart.lambda[static_cast<std::size_t>(i)] -
                                     chart.lambda[static_cast<std::size_t>(j)]) *
                                    sij * Expr::variable(ctx.ws, ctx.var(Chart::R, i, 1)) *
                                    Expr::variable(ctx.ws, ctx.var(Chart::R, j, 1));
        }
    DiffPoly dR{density, Chart::R};
    return LocalFunctional{to_chart(ctx, dR, Chart::V, chart.maps)};
}

static bool density_has_logs(const Expr& e) {
    bool found = false;
    std::function<void(const Poly&)> scan = [&](const Poly& p) {
        for (auto& t : p.t)
            for (auto& [g, ex] : t.m.p) {
                if (g.kind == Gen::Kind::Log) found = true;
                if (g.kind != Gen::Kind::Var) {
                    scan(g.arg->num());
                    scan(g.arg->den());
                }
            }
    };
    scan(e.num());
    scan(e.den());
    return found;
}

QuasiTriviality quasi_trivialize(const Perturbation& pert, const SecondOrderReport& rep) {
    const JetContext& ctx = pert.base.ctx;
    const int n = ctx.n;
    if (!rep.pass)
        throw Error(ErrKind::Precondition, "second-order conditions failed; no generator exists");
    QuasiTriviality out;
    Expr k1 = Expr::constant(ctx.ws, 0);
    for (int i = 0; i < n; ++i) {
        Expr rix = Expr::variable(ctx.ws, ctx.var(Chart::R, i, 1));
        const Expr& Ci = rep.C[static_cast<std::size_t>(i)];
        if (!Ci.is_structurally_zero()) k1 = k1 + Ci * (rix * Expr::log_of(rix) - rix);
        k1 = k1 + rep.phi[static_cast<std::size_t>(i)] * rix;
    }
    out.k1_R = DiffPoly{k1, Chart::R};
    validate_extended_ring(ctx, out.k1_R);
    DiffPoly k1v = to_chart(ctx, out.k1_R, Chart::V, pert.chart.maps);
    validate_extended_ring(ctx, k1v);
    out.K1 = LocalFunctional{k1v};
    LocalFunctional bracket = poisson_bracket(ctx, pert.H.at(0), out.K1, pert.base.eta);
    Expr residual = bracket.density.e - pert.H.at(2).density.e;
    // hard assertion: all logarithms cancel in the raw bracket density
    out.logs_cancelled = !density_has_logs(residual);
    if (!out.logs_cancelled)
        throw Error(ErrKind::Internal, "log terms failed to cancel in {H0,K1}: " + residual.str());
    out.bracket_verified = is_total_derivative(ctx, DiffPoly{residual, Chart::V});
    if (!out.bracket_verified)
        throw Error(ErrKind::Internal, "{H0,K1} != H2; residual density: " + residual.str());
    // the variational derivative of k1 is homogeneous of degree 1
    out.homogeneity = true;
    for (int b = 0; b < n; ++b) {
        Expr vd = out.K1.variational(ctx, b);
        Expr graded = Expr::constant(ctx.ws, 0);
        for (VarRef v : vd.variables())
            if (v.order >= 1 && v.base >= ctx.v0 && v.base < ctx.v0 + n)
                graded = graded +
                         Expr::constant(ctx.ws, v.order) * Expr::variable(ctx.ws, v) * vd.diff(v);
        if (!(graded - vd).is_zero()) out.homogeneity = false;
    }
    if (!out.homogeneity)
        throw Error(ErrKind::Internal, "k1 violates the degree-1 homogeneity identity");
    return out;
}

ClawExtension extend_claw(const Perturbation& pert, const SecondOrderReport& rep,
                          const QuasiTriviality& qt, const Expr& f0) {
    const JetContext& ctx = pert.base.ctx;
    const int n = ctx.n;
    ConservedReport crep = check_conserved0(pert.base, &pert.chart, f0);
    if (!crep.conserved)
        throw Error(ErrKind::Input, "f0 is not conserved at the dispersionless level");
    ClawExtension out;
    out.mu = crep.mu;
    out.generic = crep.generic;
    // closed-form density in the chart:
    //   -sum_i C_i mu_{i,x} R_i,x + (1/2) sum_{i != j} (mu_i - mu_j) s_ij R_i,x R_j,x
    Expr density = Expr::constant(ctx.ws, 0);
    for (int i = 0; i < n; ++i) {
        Expr rix = Expr::variable(ctx.ws, ctx.var(Chart::R, i, 1));
        for (int k = 0; k < n; ++k) {
            Expr muik = out.mu[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, k));
            if (muik.is_structurally_zero()) continue;
            density = density - rep.C[static_cast<std::size_t>(i)] * muik *
                                    Expr::variable(ctx.ws, ctx.var(Chart::R, k, 1)) * rix;
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const Expr& sij = rep.s[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (sij.is_structurally_zero()) continue;
            density = density + Expr::constant(ctx.ws, Rat(1, 2)) *
                                    (out.mu[static_cast<std::size_t>(i)] -
                                     out.mu[static_cast<std::size_t>(j)]) *
                                    sij * Expr::variable(ctx.ws, ctx.var(Chart::R, i, 1)) *
                                    Expr::variable(ctx.ws, ctx.var(Chart::R, j, 1));
        }
    out.F2 =
        LocalFunctional{to_chart(ctx, DiffPoly{density, Chart::R}, Chart::V, pert.chart.maps)};
    // the bracket route {F0, K1} must agree with the closed form
    LocalFunctional F0{DiffPoly{f0, Chart::V}};
    LocalFunctional route = poisson_bracket(ctx, F0, qt.K1, pert.base.eta);
    out.routes_agree = route.equals(ctx, out.F2);
    if (!out.routes_agree)
        throw Error(ErrKind::Internal, "closed-form extension disagrees with {F0,K1}");
    // final identity {H0,F2} + {H2,F0} = 0
    LocalFunctional t1 = poisson_bracket(ctx, pert.H.at(0), out.F2, pert.base.eta);
    LocalFunctional t2 = poisson_bracket(ctx, pert.H.at(2), F0, pert.base.eta);
    out.extension_identity =
        is_total_derivative(ctx, DiffPoly{t1.density.e + t2.density.e, Chart::V});
    return out;
}

ExtensionSolveResult second_order_extension_solve(const Perturbation& pert, const Expr& f0) {
    const JetContext& ctx = pert.base.ctx;
    const RiemannChart& chart = pert.chart;
    const int n = ctx.n;
    if (!pert.H.at(1).density.e.is_structurally_zero() && !pert.H.at(1).is_zero_functional(ctx))
        throw Error(ErrKind::Precondition,
                    "reduce the first-order term before extending to second order");
    ConservedReport crep = check_conserved0(pert.base, &chart, f0);
    if (!crep.conserved)
        throw Error(ErrKind::Input, "f0 is not conserved at the dispersionless level");
    ExtensionSolveResult out;
    out.generic = crep.generic;
    auto d = chart_quadratic_coeffs(ctx, chart, pert.H.at(2).density);
    const std::vector<Expr>& mu = crep.mu;
    out.D.assign(static_cast<std::size_t>(n),
                 std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(ctx.ws, 0)));
    for (int i = 0; i < n; ++i) {
        Expr lii = chart.lambda_deriv(ctx, i, i);
        if (lii.is_zero())
            throw Error(ErrKind::Precondition,
                        "lambda_{i,i} vanishes identically for i = " + std::to_string(i + 1));
        out.D[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] =
            mu[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, i)) *
            d[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] / lii;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            out.D[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                (mu[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(j)]) /
                (chart.lambda[static_cast<std::size_t>(i)] -
                 chart.lambda[static_cast<std::size_t>(j)]);
        }
    out.pass = true;
    auto record = [&](const std::string& name, const Expr& res) {
        ZeroVerdict z = res.zero_test();
        if (!z.zero && out.first_violation.empty())
            out.first_violation = name + ": " + res.str();
        out.pass = out.pass && z.zero;
        out.items.push_back({name, z.zero, z.certified, z.zero ? "" : res.str()});
    };
    auto Dm = [&](int a, int b) -> const Expr& {
        return out.D[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    };
    auto dmat = [&](int a, int b) -> const Expr& {
        return d[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    };
    auto lam = [&](int a) -> const Expr& { return chart.lambda[static_cast<std::size_t>(a)]; };
    auto muv = [&](int a) -> const Expr& { return mu[static_cast<std::size_t>(a)]; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) {
                Expr lhs = chart.lambda_deriv(ctx, i, l) * Dm(i, j) +
                           chart.lambda_deriv(ctx, j, i) * Dm(j, l) +
                           chart.lambda_deriv(ctx, i, j) * Dm(i, l) +
                           (lam(i) - lam(l)) * Dm(l, j).diff(ctx.var(Chart::R, i)) +
                           (lam(j) - lam(l)) * Dm(l, i).diff(ctx.var(Chart::R, j)) +
                           (lam(l) - lam(j)) * Dm(i, j).diff(ctx.var(Chart::R, l));
                Expr rhs = muv(i).diff(ctx.var(Chart::R, l)) * dmat(i, j) +
                           muv(j).diff(ctx.var(Chart::R, i)) * dmat(j, l) +
                           muv(i).diff(ctx.var(Chart::R, j)) * dmat(i, l) +
                           (muv(i) - muv(l)) * dmat(l, j).diff(ctx.var(Chart::R, i)) +
                           (muv(j) - muv(l)) * dmat(l, i).diff(ctx.var(Chart::R, j)) +
                           (muv(l) - muv(j)) * dmat(i, j).diff(ctx.var(Chart::R, l));
                record("chart_relation_" + std::to_string(i + 1) + std::to_string(j + 1) +
                           std::to_string(l + 1),
                       lhs - rhs);
            }
    // exact bracket identity with the constructed extension
    Expr densityR = Expr::constant(ctx.ws, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            densityR = densityR + Dm(i, j) * Expr::variable(ctx.ws, ctx.var(Chart::R, i, 1)) *
                                      Expr::variable(ctx.ws, ctx.var(Chart::R, j, 1));
    out.F2 = LocalFunctional{to_chart(ctx, DiffPoly{densityR, Chart::R}, Chart::V, chart.maps)};
    LocalFunctional F0{DiffPoly{f0, Chart::V}};
    LocalFunctional t1 = poisson_bracket(ctx, pert.H.at(0), out.F2, pert.base.eta);
    LocalFunctional t2 = poisson_bracket(ctx, pert.H.at(2), F0, pert.base.eta);
    Expr res = t1.density.e + t2.density.e;
    bool identity = is_total_derivative(ctx, DiffPoly{res, Chart::V});
    if (!identity && out.first_violation.empty())
        out.first_violation = "bracket_identity: " + res.str();
    out.items.push_back({"bracket_identity", identity, true, identity ? "" : res.str()});
    out.pass = out.pass && identity;
    return out;
}

static EpsFunctional series_shift(const JetContext& ctx, const EpsFunctional& a, int by,
                                  int trunc) {
    EpsFunctional out = EpsFunctional::zero_to(ctx, Chart::V, trunc);
    for (int k = 0; k + by <= trunc && k < static_cast<int>(a.orders.size()); ++k)
        out.orders[static_cast<std::size_t>(k + by)] = a.orders[static_cast<std::size_t>(k)];
    return out;
}

EpsFunctional canonical_transform(const JetContext& ctx, const EpsFunctional& h,
                                  const EpsFunctional& k, const Metric& eta, int order) {
    for (auto& lf : k.orders) validate_extended_ring(ctx, lf.density);
    EpsFunctional hk = series_bracket(ctx, h, k, eta, order);
    EpsFunctional hkk = series_bracket(ctx, hk, k, eta, order);
    for (auto& lf : hk.orders) validate_extended_ring(ctx, lf.density);
    for (auto& lf : hkk.orders) validate_extended_ring(ctx, lf.density);
    EpsFunctional out = series_add(ctx, h, series_shift(ctx, hk, 1, order), order);
    out = series_add(ctx, out, series_scale(series_shift(ctx, hkk, 2, order), Rat(1, 2)), order);
    return out;
}

Perturbation reduce_first_order(const Perturbation& pert, const Expr& k0_R) {
    const JetContext& ctx = pert.base.ctx;
    std::map<VarRef, Expr> R_to_v;
    for (int i = 0; i < ctx.n; ++i)
        R_to_v[ctx.var(Chart::R, i)] = pert.chart.maps.forward[static_cast<std::size_t>(i)];
    EpsFunctional K = EpsFunctional::zero_to(ctx, Chart::V, 0);
    K.orders[0] = LocalFunctional{DiffPoly{-(k0_R.substitute(R_to_v)), Chart::V}};
    EpsFunctional transformed = canonical_transform(ctx, pert.H, K, pert.base.eta, 2);
    if (!transformed.at(1).is_zero_functional(ctx))
        throw Error(ErrKind::Internal, "first-order term survived the canonical transform");
    Perturbation out = pert;
    out.H = transformed;
    out.H.orders[1] = LocalFunctional::zero(ctx, Chart::V);
    return out;
}

}  // namespace hampert
