#include "hampert/jet.hpp"
#include "hampert/polyops.hpp"

#include <algorithm>
#include <functional>

namespace hampert {

JetContext make_context(const Workspace* ws, int n) {
    JetContext ctx;
    ctx.ws = ws;
    ctx.n = n;
    ctx.v0 = 0;
    ctx.r0 = ws->size() >= 2 * n ? n : -1;
    return ctx;
}

static bool in_family(const JetContext& ctx, Chart c, int base) {
    int b = ctx.family_begin(c);
    return base >= b && base < b + ctx.n;
}

void validate_chart_purity(const JetContext& ctx, const DiffPoly& p) {
    for (VarRef v : p.e.variables())
        if (!in_family(ctx, p.chart, v.base))
            throw Error(ErrKind::Input, "density mixes variables from the other chart: " +
                                            ctx.ws->var_name(v));
}

bool is_polynomial_mode(const JetContext& ctx, const DiffPoly& p) {
    (void)ctx;
    for (auto& f : p.e.den_factors())
        for (auto& t : f.p.t)
            for (auto& [g, e] : t.m.p)
                if (g.kind == Gen::Kind::Var && g.var.order >= 1) return false;
    // atom arguments must not touch jets either
    std::function<bool(const Poly&)> scan = [&](const Poly& poly) {
        for (auto& t : poly.t)
            for (auto& [g, e] : t.m.p) {
                if (g.kind == Gen::Kind::Var) continue;
                for (VarRef v : g.arg->variables())
                    if (v.order >= 1) return false;
                if (!scan(g.arg->num())) return false;
                for (auto& f : g.arg->den_factors())
                    if (!scan(f.p)) return false;
            }
        return true;
    };
    return scan(p.e.num());
}

void validate_extended_ring(const JetContext& ctx, const DiffPoly& p) {
    for (auto& f : p.e.den_factors())
        for (auto& t : f.p.t)
            for (auto& [g, e] : t.m.p)
                if (g.kind == Gen::Kind::Var && g.var.order >= 2)
                    throw Error(ErrKind::Input,
                                "extended ring admits rational dependence on first jets only, "
                                "got " + ctx.ws->var_name(g.var));
    std::function<void(const Poly&)> scan = [&](const Poly& poly) {
        for (auto& t : poly.t)
            for (auto& [g, e] : t.m.p) {
                if (g.kind == Gen::Kind::Var) continue;
                for (VarRef v : g.arg->variables())
                    if (v.order >= 2)
                        throw Error(ErrKind::Input,
                                    "extended ring admits log dependence on first jets only, "
                                    "got " + ctx.ws->var_name(v));
                scan(g.arg->num());
                for (auto& f : g.arg->den_factors()) scan(f.p);
            }
    };
    scan(p.e.num());
}

int max_jet_order(const JetContext& ctx, const DiffPoly& p) {
    int b = ctx.family_begin(p.chart);
    return p.e.max_jet_order(b, b + ctx.n);
}

static Expr total_x_expr(const JetContext& ctx, Chart chart, const Expr& e);

// single-pass derivation lift over a polynomial: every family variable v
// contributes (d/dv) * v_next; atoms go through the chain rule
static Expr ptotal(const JetContext& ctx, Chart chart, const Expr& host, const Poly& p) {
    const Workspace* ws = host.ws();
    std::vector<Term> terms;
    Expr atom_sum = Expr::constant(ws, 0);
    for (auto& t : p.t) {
        for (std::size_t i = 0; i < t.m.p.size(); ++i) {
            auto& [g, e] = t.m.p[i];
            Mono rest;
            for (std::size_t j = 0; j < t.m.p.size(); ++j) {
                if (j == i) {
                    if (e - 1 != 0) rest.p.push_back({g, e - 1});
                } else {
                    rest.p.push_back(t.m.p[j]);
                }
            }
            if (g.kind == Gen::Kind::Var) {
                if (!in_family(ctx, chart, g.var.base)) continue;
                Mono bumped;
                Gen next = Gen::variable(VarRef{g.var.base, g.var.order + 1});
                bool inserted = false;
                for (auto& ge : rest.p) {
                    if (!inserted && next < ge.first) {
                        bumped.p.push_back({next, 1});
                        inserted = true;
                    }
                    if (ge.first == next) {
                        bumped.p.push_back({next, ge.second + 1});
                        inserted = true;
                        continue;
                    }
                    bumped.p.push_back(ge);
                }
                if (!inserted) bumped.p.push_back({next, 1});
                terms.push_back({bumped, t.c * e});
                continue;
            }
            // atoms: arg may involve family variables
            Expr darg = total_x_expr(ctx, chart, *g.arg);
            if (darg.is_structurally_zero()) continue;
            Poly restp;
            restp.t.push_back({rest, t.c * e});
            Expr factor = expr_from_poly(ws, restp);
            Expr dg;
            if (g.kind == Gen::Kind::Sqrt) {
                Expr s = expr_from_poly(ws, p_gen(g, 1));
                dg = darg / (Expr::constant(ws, 2) * s);
            } else {
                dg = darg / *g.arg;
            }
            atom_sum = atom_sum + factor * dg;
        }
    }
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
        return mono_cmp(a.m, b.m) == std::strong_ordering::greater;
    });
    Poly var_poly;
    for (auto& t : terms) {
        if (!var_poly.t.empty() &&
            mono_cmp(var_poly.t.back().m, t.m) == std::strong_ordering::equal)
            var_poly.t.back().c += t.c;
        else
            var_poly.t.push_back(t);
    }
    var_poly.t.erase(
        std::remove_if(var_poly.t.begin(), var_poly.t.end(),
                       [](const Term& t) { return t.c == 0; }),
        var_poly.t.end());
    Expr out = expr_from_poly(ws, var_poly);
    if (!atom_sum.is_structurally_zero()) out = out + atom_sum;
    return out;
}

static Expr total_x_expr(const JetContext& ctx, Chart chart, const Expr& e) {
    const Workspace* ws = e.ws();
    Expr selfden = Expr::constant(ws, 1);
    for (auto& f : e.den_factors())
        selfden = selfden / expr_from_poly(ws, f.p).pow(f.e);
    Expr out = ptotal(ctx, chart, e, e.num()) * selfden;
    if (e.den_is_one()) return out;
    Expr N = expr_from_poly(ws, e.num());
    for (auto& f : e.den_factors()) {
        Expr df = ptotal(ctx, chart, e, f.p);
        if (df.is_structurally_zero()) continue;
        out = out - Expr::constant(ws, f.e) * N * df * selfden / expr_from_poly(ws, f.p);
    }
    return out;
}

DiffPoly total_x_derivative(const JetContext& ctx, const DiffPoly& p) {
    return {total_x_expr(ctx, p.chart, p.e), p.chart};
}

Expr variational_derivative_density(const JetContext& ctx, const DiffPoly& p, int beta) {
    if (beta < 0 || beta >= ctx.n) throw Error(ErrKind::Input, "component index out of range");
    int base = ctx.family_begin(p.chart) + beta;
    int top = max_jet_order(ctx, p);
    // Horner form in (-d/dx): d_0 f - dx(d_1 f - dx(d_2 f - ...))
    Expr acc = p.e.diff(VarRef{base, top});
    for (int ell = top - 1; ell >= 0; --ell)
        acc = p.e.diff(VarRef{base, ell}) - total_x_derivative(ctx, {acc, p.chart}).e;
    return acc;
}

std::map<int, DiffPoly> jet_degree_decompose(const JetContext& ctx, const DiffPoly& p) {
    if (!is_polynomial_mode(ctx, p))
        throw Error(ErrKind::Input, "degree decomposition requires a polynomial-mode density");
    int fb = ctx.family_begin(p.chart);
    std::map<int, Poly> parts;
    for (auto& t : p.e.num().t) {
        int deg = 0;
        for (auto& [g, e] : t.m.p)
            if (g.kind == Gen::Kind::Var && g.var.base >= fb && g.var.base < fb + ctx.n)
                deg += g.var.order * e;
        parts[deg].t.push_back({t.m, t.c});
    }
    std::map<int, DiffPoly> out;
    Expr inv_den = Expr::constant(ctx.ws, 1);
    for (auto& f : p.e.den_factors())
        inv_den = inv_den / expr_from_poly(ctx.ws, f.p).pow(f.e);
    for (auto& [deg, poly] : parts) {
        Poly sorted = poly;
        std::sort(sorted.t.begin(), sorted.t.end(), [](const Term& a, const Term& b) {
            return mono_cmp(a.m, b.m) == std::strong_ordering::greater;
        });
        Expr part = expr_from_poly(ctx.ws, sorted) * inv_den;
        out[deg] = DiffPoly{part, p.chart};
    }
    return out;
}

int jet_degree_of(const JetContext& ctx, const DiffPoly& p) {
    if (p.e.is_structurally_zero()) return 0;
    auto parts = jet_degree_decompose(ctx, p);
    if (parts.size() != 1) return -1;
    return parts.begin()->first;
}

bool is_total_derivative(const JetContext& ctx, const DiffPoly& p) {
    for (int beta = 0; beta < ctx.n; ++beta)
        if (!variational_derivative_density(ctx, p, beta).is_zero()) return false;
    return true;
}

Metric Metric::from(QMatrix raised_in) {
    Metric m;
    if (raised_in.rows != raised_in.cols) throw Error(ErrKind::Input, "metric must be square");
    m.n = static_cast<int>(raised_in.rows);
    for (std::size_t i = 0; i < raised_in.rows; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (raised_in.at(i, j) != raised_in.at(j, i))
                throw Error(ErrKind::Input, "metric must be symmetric");
    auto inv = inverse(raised_in);
    if (!inv) throw Error(ErrKind::Input, "metric must be invertible");
    m.raised = raised_in;
    m.lowered = *inv;
    return m;
}

LocalFunctional LocalFunctional::zero(const JetContext& ctx, Chart chart) {
    return {DiffPoly{Expr::constant(ctx.ws, 0), chart}};
}

bool LocalFunctional::equals(const JetContext& ctx, const LocalFunctional& o) const {
    if (density.chart != o.density.chart)
        throw Error(ErrKind::Input, "functional comparison across charts; transform first");
    DiffPoly diff{density.e - o.density.e, density.chart};
    return is_total_derivative(ctx, diff);
}

bool LocalFunctional::is_zero_functional(const JetContext& ctx) const {
    return is_total_derivative(ctx, density);
}

DiffPoly LocalFunctional::normal_form(const JetContext& ctx) const {
    DiffPoly cur = density;
    int fb = ctx.family_begin(cur.chart);
    for (int round = 0; round < 64; ++round) {
        int top = max_jet_order(ctx, cur);
        if (top < 2) break;
        bool reduced = false;
        for (int i = 0; i < ctx.n && !reduced; ++i) {
            VarRef v{fb + i, top};
            if (!cur.e.depends_on(v)) continue;
            Expr coeff = cur.e.diff(v);
            if (coeff.depends_on(v)) continue;  // nonlinear in the top jet
            int cmax = 0;
            for (VarRef w : coeff.variables())
                if (w.base >= fb && w.base < fb + ctx.n) cmax = std::max(cmax, w.order);
            if (cmax >= top) continue;  // reduction would not descend
            Expr rest = cur.e - coeff * Expr::variable(ctx.ws, v);
            DiffPoly dcoeff = total_x_derivative(ctx, DiffPoly{coeff, cur.chart});
            cur.e = rest - dcoeff.e * Expr::variable(ctx.ws, VarRef{fb + i, top - 1});
            reduced = true;
        }
        if (!reduced) break;
    }
    return cur;
}

LocalFunctional poisson_bracket(const JetContext& ctx, const LocalFunctional& f,
                                const LocalFunctional& g, const Metric& eta) {
    if (f.density.chart != Chart::V || g.density.chart != Chart::V)
        throw Error(ErrKind::Input, "the Poisson bracket is computed in the state chart");
    std::vector<Expr> df(static_cast<std::size_t>(ctx.n)), dg_dx(static_cast<std::size_t>(ctx.n));
    for (int b = 0; b < ctx.n; ++b) {
        df[static_cast<std::size_t>(b)] = f.variational(ctx, b);
        Expr dgb = g.variational(ctx, b);
        dg_dx[static_cast<std::size_t>(b)] =
            total_x_derivative(ctx, DiffPoly{dgb, Chart::V}).e;
    }
    Expr density = Expr::constant(ctx.ws, 0);
    for (int a = 0; a < ctx.n; ++a)
        for (int b = 0; b < ctx.n; ++b) {
            Rat w = eta.up(a, b);
            if (w == 0) continue;
            density = density + Expr::constant(ctx.ws, w) * df[static_cast<std::size_t>(a)] *
                                    dg_dx[static_cast<std::size_t>(b)];
        }
    return {DiffPoly{density, Chart::V}};
}

EpsFunctional EpsFunctional::zero_to(const JetContext& ctx, Chart chart, int order) {
    EpsFunctional s;
    for (int k = 0; k <= order; ++k) s.orders.push_back(LocalFunctional::zero(ctx, chart));
    return s;
}

EpsFunctional series_bracket(const JetContext& ctx, const EpsFunctional& a,
                             const EpsFunctional& b, const Metric& eta, int trunc) {
    EpsFunctional out = EpsFunctional::zero_to(ctx, Chart::V, trunc);
    for (int i = 0; i < static_cast<int>(a.orders.size()); ++i)
        for (int j = 0; j < static_cast<int>(b.orders.size()); ++j) {
            if (i + j > trunc) continue;
            if (a.orders[static_cast<std::size_t>(i)].density.e.is_structurally_zero()) continue;
            if (b.orders[static_cast<std::size_t>(j)].density.e.is_structurally_zero()) continue;
            LocalFunctional br = poisson_bracket(ctx, a.orders[static_cast<std::size_t>(i)],
                                                 b.orders[static_cast<std::size_t>(j)], eta);
            auto& slot = out.orders[static_cast<std::size_t>(i + j)];
            slot.density.e = slot.density.e + br.density.e;
        }
    return out;
}

EpsFunctional series_add(const JetContext& ctx, const EpsFunctional& a, const EpsFunctional& b,
                         int trunc) {
    EpsFunctional out = EpsFunctional::zero_to(ctx, Chart::V, trunc);
    for (int k = 0; k <= trunc; ++k) {
        Expr e = Expr::constant(ctx.ws, 0);
        if (k < static_cast<int>(a.orders.size())) e = e + a.orders[static_cast<std::size_t>(k)].density.e;
        if (k < static_cast<int>(b.orders.size())) e = e + b.orders[static_cast<std::size_t>(k)].density.e;
        out.orders[static_cast<std::size_t>(k)].density.e = e;
    }
    return out;
}

EpsFunctional series_scale(const EpsFunctional& a, const Rat& c) {
    EpsFunctional out = a;
    for (auto& lf : out.orders)
        lf.density.e = lf.density.e * Expr::constant(lf.density.e.ws(), c);
    return out;
}

std::vector<std::vector<DiffPoly>> hamiltonian_flow(const JetContext& ctx,
                                                    const EpsFunctional& h, const Metric& eta,
                                                    int order) {
    std::vector<std::vector<DiffPoly>> rhs(static_cast<std::size_t>(ctx.n));
    for (int a = 0; a < ctx.n; ++a) {
        for (int k = 0; k <= order; ++k) {
            Expr e = Expr::constant(ctx.ws, 0);
            if (k < static_cast<int>(h.orders.size())) {
                for (int b = 0; b < ctx.n; ++b) {
                    Rat w = eta.up(a, b);
                    if (w == 0) continue;
                    Expr db = h.orders[static_cast<std::size_t>(k)].variational(ctx, b);
                    e = e + Expr::constant(ctx.ws, w) *
                                total_x_derivative(ctx, DiffPoly{db, Chart::V}).e;
                }
            }
            rhs[static_cast<std::size_t>(a)].push_back(DiffPoly{e, Chart::V});
        }
    }
    return rhs;
}

DiffPoly to_chart(const JetContext& ctx, const DiffPoly& p, Chart target, const ChartMaps& maps) {
    if (p.chart == target) return p;
    if (!ctx.has_riemann()) throw Error(ErrKind::Input, "no Riemann chart declared");
    const std::vector<Expr>& point_map = target == Chart::R ? maps.inverse : maps.forward;
    // point_map[i]: the source-chart variable written in the target chart
    int src0 = ctx.family_begin(p.chart);
    int top = max_jet_order(ctx, p);
    std::map<VarRef, Expr> bind;
    for (int i = 0; i < ctx.n; ++i) {
        DiffPoly prolonged{point_map[static_cast<std::size_t>(i)], target};
        bind[VarRef{src0 + i, 0}] = prolonged.e;
        for (int ell = 1; ell <= top; ++ell) {
            prolonged = total_x_derivative(ctx, prolonged);
            bind[VarRef{src0 + i, ell}] = prolonged.e;
        }
    }
    DiffPoly out{p.e.substitute(bind), target};
    validate_chart_purity(ctx, out);
    return out;
}

}  // namespace hampert
