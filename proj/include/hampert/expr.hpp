#pragma once

#include "hampert/workspace.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hampert {

class Expr;
struct Poly;

/// A polynomial generator: a variable/jet, or a sqrt/log atom over a
/// canonical argument. sqrt atoms obey s^2 -> argument; log atoms are free.
struct Gen {
    enum class Kind : std::uint8_t { Var = 0, Sqrt = 1, Log = 2 };
    Kind kind = Kind::Var;
    VarRef var;                      // Kind::Var
    std::shared_ptr<const Expr> arg; // atoms; for Sqrt the arg has denominator 1
    std::shared_ptr<const std::string> key;  // atoms: canonical rendering of arg
    // sqrt over a perfect square whose sign the assumptions cannot resolve;
    // such an atom is not algebraically independent, so zero tests must not
    // certify from the canonical form alone
    bool ambiguous = false;

    static Gen variable(VarRef v) { Gen g; g.kind = Kind::Var; g.var = v; return g; }
    const std::string& key_str() const { return *key; }

    std::strong_ordering cmp(const Gen& o) const {
        if (kind != o.kind) return kind <=> o.kind;
        if (kind == Kind::Var) return var <=> o.var;
        if (key == o.key) return std::strong_ordering::equal;
        if (key->size() != o.key->size()) return key->size() <=> o.key->size();
        return key->compare(*o.key) <=> 0;
    }
    bool operator==(const Gen& o) const { return cmp(o) == std::strong_ordering::equal; }
    bool operator<(const Gen& o) const { return cmp(o) == std::strong_ordering::less; }
};

/// Power product of generators, sorted by generator order.
struct Mono {
    std::vector<std::pair<Gen, int>> p;
    int degree() const {
        int d = 0;
        for (auto& [g, e] : p) d += e;
        return d;
    }
    bool is_one() const { return p.empty(); }
    int exponent(const Gen& g) const {
        for (auto& [h, e] : p)
            if (h == g) return e;
        return 0;
    }
};

// graded lex; larger monomials first in canonical term order
std::strong_ordering mono_cmp(const Mono& a, const Mono& b);

struct Term {
    Mono m;
    Rat c;
};

/// Canonical multivariate polynomial: terms sorted descending, no zeros.
struct Poly {
    std::vector<Term> t;
    bool is_zero() const { return t.empty(); }
    bool is_constant() const { return t.empty() || (t.size() == 1 && t[0].m.is_one()); }
    Rat constant_value() const { return t.empty() ? Rat(0) : t[0].c; }
};

std::strong_ordering poly_cmp(const Poly& a, const Poly& b);

/// One denominator core: a primitive, sqrt-free, non-constant polynomial.
struct Factor {
    Poly p;
    int e = 1;
};
using FactorList = std::vector<Factor>;  // sorted by poly_cmp, factors distinct

struct ZeroVerdict {
    bool zero = false;
    bool certified = true;  // false when the probabilistic fallback decided
    int samples = 0;
    std::uint64_t seed = 0;
};

/// Exact symbolic expression: canonical ratio num / prod(factors^e) over Q in
/// the workspace variables and sqrt/log atoms. Denominator cores are kept
/// factored; reduction is trial division of the numerator by the cores.
class Expr {
  public:
    Expr() = default;

    static Expr constant(const Workspace* ws, Rat c);
    static Expr integer(const Workspace* ws, long n) { return constant(ws, Rat(n)); }
    static Expr variable(const Workspace* ws, VarRef v);
    static Expr variable(const Workspace* ws, const std::string& name);
    static Expr sqrt_of(const Expr& e);
    static Expr log_of(const Expr& e);

    /// Parse source text over the workspace grammar (see README).
    static Expr parse(const Workspace* ws, const std::string& source);

    const Workspace* ws() const { return ws_; }
    const Poly& num() const { return *num_; }
    const FactorList& den_factors() const;
    Poly den() const;  // expanded denominator
    bool den_is_one() const { return den_factors().empty(); }
    bool valid() const { return ws_ != nullptr; }

    friend Expr operator+(const Expr& a, const Expr& b);
    friend Expr operator-(const Expr& a, const Expr& b);
    friend Expr operator*(const Expr& a, const Expr& b);
    friend Expr operator/(const Expr& a, const Expr& b);
    Expr operator-() const;
    Expr& operator+=(const Expr& b) { *this = *this + b; return *this; }
    Expr& operator-=(const Expr& b) { *this = *this - b; return *this; }
    Expr& operator*=(const Expr& b) { *this = *this * b; return *this; }
    Expr pow(int k) const;

    bool is_rational_constant() const { return num_->is_constant() && den_is_one(); }
    Rat rational_value() const;  // requires is_rational_constant

    /// Structural zero test on the canonical form (no sampling).
    bool is_structurally_zero() const { return !valid() || num_->is_zero(); }
    /// Full zero test with probabilistic fallback for related atoms.
    ZeroVerdict zero_test() const;
    bool is_zero() const { return zero_test().zero; }
    bool equals(const Expr& o) const { return (*this - o).is_zero(); }

    /// Partial derivative with chain rule through atoms.
    Expr diff(VarRef v) const;
    Expr diff(const std::string& name) const;

    /// Simultaneous substitution, then canonicalization.
    Expr substitute(const std::map<VarRef, Expr>& bindings) const;

    bool depends_on(VarRef v) const;
    /// All variables/jets occurring (including inside atom arguments).
    std::vector<VarRef> variables() const;
    int max_jet_order(int family_begin, int family_end) const;

    /// Antiderivative in the supported class; throws UnsupportedClass.
    Expr antiderivative(VarRef x) const;

    double eval(const std::map<VarRef, double>& point) const;

    std::string str() const;

  private:
    friend struct ExprOps;
    const Workspace* ws_ = nullptr;
    std::shared_ptr<const Poly> num_;
    std::shared_ptr<const FactorList> den_;
};

/// Render a polynomial in the canonical term order.
std::string poly_str(const Workspace* ws, const Poly& p);

}  // namespace hampert
