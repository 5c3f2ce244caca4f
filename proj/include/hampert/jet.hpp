#pragma once

#include "hampert/expr.hpp"
#include "hampert/linalg.hpp"

#include <map>
#include <vector>

namespace hampert {

/// Which set of dependent variables a density is written in.
enum class Chart { V, R };

/// Variable layout: state variables v^1..v^n at indices [v0, v0+n) and,
/// when a Riemann family is declared, R_1..R_n at [r0, r0+n).
struct JetContext {
    const Workspace* ws = nullptr;
    int n = 0;
    int v0 = 0;
    int r0 = -1;

    int family_begin(Chart c) const { return c == Chart::V ? v0 : r0; }
    VarRef var(Chart c, int i, int order = 0) const { return {family_begin(c) + i, order}; }
    bool has_riemann() const { return r0 >= 0; }
};

JetContext make_context(const Workspace* ws, int n);

/// Differential-polynomial density over one chart. The expression may be
/// rational (extended ring); polynomial mode is validated where required.
struct DiffPoly {
    Expr e;
    Chart chart = Chart::V;
};

/// Checks that a density only involves its own chart family.
void validate_chart_purity(const JetContext& ctx, const DiffPoly& p);
/// Polynomial mode: denominator free of jets, no atom argument touches jets.
bool is_polynomial_mode(const JetContext& ctx, const DiffPoly& p);
/// Extended ring restriction: rational/log dependence on first jets only.
void validate_extended_ring(const JetContext& ctx, const DiffPoly& p);

DiffPoly total_x_derivative(const JetContext& ctx, const DiffPoly& p);
int max_jet_order(const JetContext& ctx, const DiffPoly& p);

/// Variational derivative delta/delta v^beta (beta is 0-based in the family).
Expr variational_derivative_density(const JetContext& ctx, const DiffPoly& p, int beta);

std::map<int, DiffPoly> jet_degree_decompose(const JetContext& ctx, const DiffPoly& p);
int jet_degree_of(const JetContext& ctx, const DiffPoly& p);  // -1 if inhomogeneous

bool is_total_derivative(const JetContext& ctx, const DiffPoly& p);

/// Constant metric; `raised` is the given matrix eta^{ab} entering the
/// Hamiltonian operator, `lowered` its inverse eta_{ab}.
struct Metric {
    int n = 0;
    QMatrix raised, lowered;
    static Metric from(QMatrix raised_in);
    Rat up(int a, int b) const { return raised.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b)); }
    Rat down(int a, int b) const { return lowered.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b)); }
};

/// Local functional: a density modulo total x-derivatives.
struct LocalFunctional {
    DiffPoly density;

    static LocalFunctional zero(const JetContext& ctx, Chart chart);
    Expr variational(const JetContext& ctx, int beta) const {
        return variational_derivative_density(ctx, density, beta);
    }
    bool equals(const JetContext& ctx, const LocalFunctional& o) const;
    bool is_zero_functional(const JetContext& ctx) const;
    /// Integration-by-parts display form (deterministic, not unique).
    DiffPoly normal_form(const JetContext& ctx) const;
};

LocalFunctional poisson_bracket(const JetContext& ctx, const LocalFunctional& f,
                                const LocalFunctional& g, const Metric& eta);

/// Truncated series in the dispersion parameter.
struct EpsFunctional {
    std::vector<LocalFunctional> orders;

    static EpsFunctional zero_to(const JetContext& ctx, Chart chart, int order);
    const LocalFunctional& at(std::size_t k) const { return orders.at(k); }
    int top_order() const { return static_cast<int>(orders.size()) - 1; }
};

EpsFunctional series_bracket(const JetContext& ctx, const EpsFunctional& a,
                             const EpsFunctional& b, const Metric& eta, int trunc);
EpsFunctional series_add(const JetContext& ctx, const EpsFunctional& a, const EpsFunctional& b,
                         int trunc);
EpsFunctional series_scale(const EpsFunctional& a, const Rat& c);

/// Per-component right-hand sides of the Hamiltonian flow, by eps order.
std::vector<std::vector<DiffPoly>> hamiltonian_flow(const JetContext& ctx,
                                                    const EpsFunctional& h, const Metric& eta,
                                                    int order);

/// Point maps between the two charts (expressions over the other family).
struct ChartMaps {
    std::vector<Expr> forward;  // R_i(v)
    std::vector<Expr> inverse;  // v^alpha(R)
};

/// Transform a density to the target chart by jet prolongation.
DiffPoly to_chart(const JetContext& ctx, const DiffPoly& p, Chart target, const ChartMaps& maps);

}  // namespace hampert
