#pragma once

#include "hampert/hydro.hpp"

#include <optional>

namespace hampert {

/// Truncated Hamiltonian perturbation H0 + eps H1 + eps^2 H2 over a verified
/// Riemann chart. Densities live in the state chart; the chart-side data
/// (p_i, d_ij, ...) is derived on demand.
struct Perturbation {
    HydroSystem base;
    RiemannChart chart;
    EpsFunctional H;  // orders 0..2, state chart
};

Perturbation make_perturbation(HydroSystem base, RiemannChart chart, LocalFunctional h1,
                               LocalFunctional h2);

/// p_i(R) with h1 = sum p_i(R) R_i,x; errors if h1 is not of first-order form.
std::vector<Expr> to_chart_first(const Perturbation& pert);

struct FirstOrderReport {
    bool pass = true;
    bool vacuous = false;  // n <= 2: no triples to check
    std::vector<Expr> p;
    std::vector<std::vector<Expr>> omega;
    std::vector<CheckItem> items;
};

FirstOrderReport first_order_check(const Perturbation& pert);

struct FirstOrderTrivialization {
    Expr k0;  // Riemann-chart expression
    bool bracket_verified = false;
    std::optional<Expr> psi;
};

/// Solves the chart equations for k0 in span(basis_R) and verifies
/// {H0, int k0 dx} = H1. Throws BasisInsufficient when no solution exists
/// in the span (not a disproof).
FirstOrderTrivialization first_order_trivialize(const Perturbation& pert,
                                                const std::vector<Expr>& basis_R);

struct SecondOrderReport {
    bool pass = false;
    bool vacuous_cyclic = false;
    std::vector<std::vector<Expr>> d;  // symmetric chart coefficients of h2
    std::vector<Expr> c_candidate;     // -d_ii / lambda_{i,i}
    std::vector<CheckItem> items;
    // populated when the verdict is integrable:
    std::vector<Expr> C;
    std::vector<std::vector<Expr>> s;  // antisymmetric
    std::vector<Expr> phi;             // gauge-fixed potentials
};

/// Second-order integrability decision; requires H1 already reduced to zero.
SecondOrderReport second_order_check(const Perturbation& pert);

/// h2 = -sum C_i lambda_{i,i} R_i,x^2
///      + (1/2) sum_{i != j} (lambda_i - lambda_j)(phi_{i,j} - phi_{j,i}) R_i,x R_j,x
LocalFunctional build_h2_canonical(const HydroSystem& sys, const RiemannChart& chart,
                                   const std::vector<Expr>& C, const std::vector<Expr>& phi);

struct QuasiTriviality {
    DiffPoly k1_R;       // extended-ring density in the Riemann chart
    LocalFunctional K1;  // state-chart functional used in brackets
    bool bracket_verified = false;
    bool logs_cancelled = false;
    bool homogeneity = false;
};

/// K1 = int sum_i [ C_i(R_i)(R_i,x log R_i,x - R_i,x) + phi_i R_i,x ] dx,
/// verified in-engine against {H0, K1} = H2 (aborts on residual: internal
/// consistency gate).
QuasiTriviality quasi_trivialize(const Perturbation& pert, const SecondOrderReport& rep);

struct ClawExtension {
    LocalFunctional F2;  // closed-form extension, state chart
    std::vector<Expr> mu;
    bool generic = true;
    bool routes_agree = false;        // {F0, K1} equals the closed form
    bool extension_identity = false;  // {H0,F2} + {H2,F0} = 0
};

ClawExtension extend_claw(const Perturbation& pert, const SecondOrderReport& rep,
                          const QuasiTriviality& qt, const Expr& f0);

struct ExtensionSolveResult {
    bool pass = false;
    bool generic = true;
    std::vector<std::vector<Expr>> D;
    std::vector<CheckItem> items;
    std::string first_violation;
    LocalFunctional F2;
};

/// Direct extension of one conserved density (no quasi-triviality needed):
/// constructs D_ij from the chart relations and verifies the remaining
/// identities plus the exact bracket identity.
ExtensionSolveResult second_order_extension_solve(const Perturbation& pert, const Expr& f0);

/// H + eps {H,K} + (eps^2/2) {{H,K},K}, truncated.
EpsFunctional canonical_transform(const JetContext& ctx, const EpsFunctional& h,
                                  const EpsFunctional& k, const Metric& eta, int order);

/// Removes a nonzero H1 by the canonical transform generated by -k0;
/// returns the perturbation with H1 = 0 and the adjusted H2.
Perturbation reduce_first_order(const Perturbation& pert, const Expr& k0_R);

}  // namespace hampert
