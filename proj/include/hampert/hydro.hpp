#pragma once

#include "hampert/jet.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hampert {

using ExprMatrix = std::vector<std::vector<Expr>>;

/// A^a_b = eta^{ac} d^2 h0 / dv^c dv^b
ExprMatrix velocity_matrix(const JetContext& ctx, const Expr& h0, const Metric& eta);

struct HydroSystem {
    JetContext ctx;
    Metric eta;
    Expr h0;  // state-chart density, no jets
    ExprMatrix A;

    static HydroSystem make(const JetContext& ctx, Metric eta, Expr h0);
};

/// Rank-3 obstruction tensor, n^3 entries flattened as ((a*n)+b)*n+c.
struct HaantjesTensor {
    int n = 0;
    std::vector<Expr> entries;
    const Expr& at(int a, int b, int c) const {
        return entries[static_cast<std::size_t>((a * n + b) * n + c)];
    }
};

HaantjesTensor haantjes_tensor(const HydroSystem& sys);         // OpenMP entrywise
HaantjesTensor haantjes_tensor_serial(const HydroSystem& sys);  // reference

struct IntegrabilityVerdict {
    bool integrable = false;
    bool certified = true;
    int wa = -1, wb = -1, wc = -1;  // first nonzero entry when not integrable
    std::string witness;
};

IntegrabilityVerdict is_hydro_integrable(const HydroSystem& sys);

struct RiemannChart {
    ChartMaps maps;             // forward R_i(v), inverse v^a(R)
    std::vector<Expr> lambda;   // characteristic speeds as R-chart expressions

    Expr gradient(const JetContext& ctx, int i, int alpha) const {
        return maps.forward[static_cast<std::size_t>(i)].diff(ctx.var(Chart::V, alpha));
    }
    Expr lambda_deriv(const JetContext& ctx, int i, int j) const {
        return lambda[static_cast<std::size_t>(i)].diff(ctx.var(Chart::R, j));
    }
    /// a_ij = lambda_{i,j} / (lambda_i - lambda_j), i != j (R-chart)
    Expr a(const JetContext& ctx, int i, int j) const;
};

struct CheckItem {
    std::string name;
    bool pass = false;
    bool certified = true;
    std::string residual;  // rendered witness when failing
};

struct ChartVerification {
    bool pass = false;
    bool any_probabilistic = false;
    std::vector<CheckItem> items;
};

ChartVerification verify_chart(const HydroSystem& sys, const RiemannChart& chart);

/// n = 2 chart construction: quadratic eigenvalues, integrating-factor
/// search, quadrature, and inversion by a small triangular pattern solver.
RiemannChart solve_chart_n2(const HydroSystem& sys);

struct TsarevReport {
    bool pass = true;
    bool vacuous = false;
    std::vector<CheckItem> items;
};

TsarevReport tsarev_check(const HydroSystem& sys, const RiemannChart& chart);

struct ConservedReport {
    bool conserved = false;
    bool degenerate = false;
    bool generic = true;            // pairwise distinct Hessian eigenvalues
    std::vector<Expr> mu;           // R-chart eigenvalues when a chart is given
    bool in_chart_consistent = true;  // a_ij == b_ij where mu_i != mu_j
    std::string witness;
};

ConservedReport check_conserved0(const HydroSystem& sys, const RiemannChart* chart,
                                 const Expr& f0);

/// Exact linear solve of the conservation conditions inside span(basis);
/// degenerate (constant) densities are removed.
std::vector<Expr> solve_claws0(const HydroSystem& sys, const std::vector<Expr>& basis);

}  // namespace hampert
