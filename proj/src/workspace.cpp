#include "hampert/workspace.hpp"
#include "hampert/expr.hpp"

namespace hampert {

Workspace::Workspace(std::vector<std::string> names, int n_state)
    : names_(std::move(names)), positives_(std::make_shared<std::vector<Expr>>()) {
    n_state_ = n_state < 0 ? static_cast<int>(names_.size()) : n_state;
}

Workspace::~Workspace() = default;

std::string rat_str(const Rat& q) {
    std::string s = q.get_num().get_str();
    if (q.get_den() != 1) s += "/" + q.get_den().get_str();
    return s;
}

std::string Workspace::var_name(VarRef v) const {
    const std::string& base = name(v.base);
    if (v.order == 0) return base;
    if (v.order == 1) return base + "_x";
    if (v.order == 2) return base + "_xx";
    return base + "_" + std::to_string(v.order);
}

VarRef Workspace::lookup(const std::string& token) const {
    int i = index_of(token);
    if (i >= 0) return {i, 0};
    auto us = token.rfind('_');
    if (us == std::string::npos || us == 0 || us + 1 >= token.size()) return {-1, 0};
    int base = index_of(token.substr(0, us));
    if (base < 0) return {-1, 0};
    std::string suf = token.substr(us + 1);
    bool all_x = true, all_d = true;
    for (char c : suf) {
        all_x = all_x && c == 'x';
        all_d = all_d && (c >= '0' && c <= '9');
    }
    if (all_x) return {base, static_cast<int>(suf.size())};
    if (all_d) {
        int ord = std::stoi(suf);
        if (ord >= 1) return {base, ord};
    }
    return {-1, 0};
}

void Workspace::declare_positive(const Expr& e) { positives_->push_back(e); }

const std::vector<Expr>& Workspace::positives() const { return *positives_; }

}  // namespace hampert
