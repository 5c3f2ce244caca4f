#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hampert {

using Rat = mpq_class;

enum class ErrKind {
    Syntax,
    UnknownIdentifier,
    NonIntegerExponent,
    UnsupportedClass,
    Domain,
    Precondition,
    BasisInsufficient,
    Input,
    Internal,
};

struct Error : std::runtime_error {
    ErrKind kind;
    std::size_t pos;  // byte offset for parse errors, npos otherwise
    Error(ErrKind k, const std::string& msg, std::size_t p = std::string::npos)
        : std::runtime_error(msg), kind(k), pos(p) {}
};

/// A base variable or one of its x-jets (order 0 means the variable itself).
struct VarRef {
    int base = -1;
    int order = 0;
    friend auto operator<=>(const VarRef&, const VarRef&) = default;
};

class Expr;

/// Declared variables, ordering/sign assumptions and sampling parameters.
/// Built once per analysis context; immutable while expressions are live
/// (assumptions are attached during setup, before any concurrent use).
class Workspace {
  public:
    explicit Workspace(std::vector<std::string> names, int n_state = -1);
    ~Workspace();

    int size() const { return static_cast<int>(names_.size()); }
    int state_count() const { return n_state_; }
    const std::string& name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
    int index_of(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (names_[static_cast<std::size_t>(i)] == name) return i;
        return -1;
    }

    /// Name of a variable or jet: r, r_x, r_xx, r_3, ...
    std::string var_name(VarRef v) const;
    /// Inverse of var_name; returns base == -1 if unknown.
    VarRef lookup(const std::string& token) const;

    // --- assumptions (setup phase only) ---
    void declare_positive(const Expr& e);
    const std::vector<Expr>& positives() const;

    void set_base_point(int var, Rat value) { base_point_[var] = std::move(value); }
    const std::map<int, Rat>& base_point() const { return base_point_; }

    void set_sample_box(Rat lo, Rat hi) { box_lo_ = std::move(lo); box_hi_ = std::move(hi); }
    Rat box_lo() const { return box_lo_; }
    Rat box_hi() const { return box_hi_; }

    void set_zero_seed(std::uint64_t s) { zero_seed_ = s; }
    std::uint64_t zero_seed() const { return zero_seed_; }
    int zero_samples() const { return 8; }

  private:
    std::vector<std::string> names_;
    int n_state_ = 0;
    std::shared_ptr<std::vector<Expr>> positives_;
    std::map<int, Rat> base_point_;
    Rat box_lo_{1, 2};
    Rat box_hi_{2};
    std::uint64_t zero_seed_ = 12345;
};

std::string rat_str(const Rat& q);

}  // namespace hampert
