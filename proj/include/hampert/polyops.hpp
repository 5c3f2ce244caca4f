#pragma once

#include "hampert/expr.hpp"

#include <optional>

namespace hampert {

// Polynomial-level helpers shared by the analysis modules. All polynomials
// are canonical (terms sorted descending by graded-lex, no zero terms).

Poly p_zero();
Poly p_one();
Poly p_const(const Rat& c);
Poly p_gen(const Gen& g, int e);
Poly p_var(VarRef v);

Poly padd(const Poly& a, const Poly& b);
Poly psub(const Poly& a, const Poly& b);
Poly pneg(const Poly& a);
Poly pscale(const Poly& a, const Rat& c);
Poly pmul(const Poly& a, const Poly& b);
Poly ppow(const Poly& a, int e);

std::optional<Poly> pdiv_exact(const Poly& a, const Poly& b);
Poly pgcd(const Poly& a, const Poly& b);

Expr make_expr(const Workspace* ws, Poly num, Poly den);
Expr expr_from_poly(const Workspace* ws, Poly p);

/// lcm of factored denominators and the complement product lcm / own.
FactorList factor_lcm(const FactorList& a, const FactorList& b);
Poly factor_complement(const FactorList& lcm, const FactorList& own);

}  // namespace hampert
