#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hampert/jet.hpp"

#include <random>

using namespace hampert;

namespace {

struct WaterWave {
    Workspace ws{{"r", "v", "R1", "R2"}, 2};
    JetContext ctx;
    Metric eta;
    WaterWave() : ctx(make_context(&ws, 2)) {
        ws.declare_positive(Expr::variable(&ws, "r"));
        ws.declare_positive(Expr::parse(&ws, "R1 - R2"));
        QMatrix m(2, 2);
        m.at(0, 1) = 1;
        m.at(1, 0) = 1;
        eta = Metric::from(m);
    }
    LocalFunctional F(const std::string& density) const {
        return {DiffPoly{Expr::parse(&ws, density), Chart::V}};
    }
};

struct Pair2 {
    Workspace ws{{"u1", "u2"}, 2};
    JetContext ctx;
    Metric eta;
    Pair2() : ctx(make_context(&ws, 2)) {
        QMatrix m(2, 2);
        m.at(0, 0) = 1;
        m.at(1, 1) = 1;
        eta = Metric::from(m);
    }
};

Expr random_density(const Workspace& ws, std::mt19937_64& rng, int max_jet, int terms) {
    // polynomial density over u1, u2 and their jets up to max_jet
    Expr e = Expr::constant(&ws, 0);
    for (int t = 0; t < terms; ++t) {
        long c = static_cast<long>(rng() % 7) - 3;
        if (c == 0) c = 1;
        Expr term = Expr::constant(&ws, Rat(c));
        int factors = 1 + static_cast<int>(rng() % 3);
        for (int f = 0; f < factors; ++f) {
            int base = static_cast<int>(rng() % 2);
            int order = static_cast<int>(rng() % static_cast<unsigned long>(max_jet + 1));
            term = term * Expr::variable(&ws, VarRef{base, order});
        }
        e = e + term;
    }
    return e;
}

}  // namespace

TEST_CASE("total x derivative") {
    Pair2 s;
    Expr half_u1x2 = Expr::parse(&s.ws, "(1/2)*u1_x^2");
    DiffPoly d = total_x_derivative(s.ctx, {half_u1x2, Chart::V});
    CHECK(d.e.equals(Expr::parse(&s.ws, "u1_x*u1_xx")));

    Expr fu = Expr::parse(&s.ws, "u1^3 + u1*u2");
    DiffPoly df = total_x_derivative(s.ctx, {fu, Chart::V});
    CHECK(df.e.equals(Expr::parse(&s.ws, "(3*u1^2 + u2)*u1_x + u1*u2_x")));

    SUBCASE("extended ring: chain rule through a jet logarithm") {
        WaterWave w;
        Expr k = Expr::parse(&w.ws, "R1_x*log(R1_x)");
        DiffPoly dk = total_x_derivative(w.ctx, {k, Chart::R});
        CHECK(dk.e.equals(Expr::parse(&w.ws, "R1_xx*(log(R1_x) + 1)")));
    }
}

TEST_CASE("variational derivative") {
    Pair2 s;
    DiffPoly dirichlet{Expr::parse(&s.ws, "(1/2)*u1_x^2"), Chart::V};
    CHECK(variational_derivative_density(s.ctx, dirichlet, 0)
              .equals(Expr::parse(&s.ws, "-u1_xx")));
    DiffPoly cubic{Expr::parse(&s.ws, "u1^3/6"), Chart::V};
    CHECK(variational_derivative_density(s.ctx, cubic, 0).equals(Expr::parse(&s.ws, "u1^2/2")));
    DiffPoly tx = total_x_derivative(s.ctx, {Expr::parse(&s.ws, "u1*u1_x"), Chart::V});
    CHECK(variational_derivative_density(s.ctx, tx, 0).is_structurally_zero());
    CHECK(variational_derivative_density(s.ctx, tx, 1).is_structurally_zero());
}

TEST_CASE("euler operator annihilates total derivatives (randomized)") {
    Pair2 s;
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        Expr g = random_density(s.ws, rng, 2, 3);
        DiffPoly dg = total_x_derivative(s.ctx, {g, Chart::V});
        for (int b = 0; b < 2; ++b)
            CHECK(variational_derivative_density(s.ctx, dg, b).is_zero());
        CHECK(is_total_derivative(s.ctx, dg));
    }
}

TEST_CASE("jet degree decomposition") {
    Pair2 s;
    DiffPoly p{Expr::parse(&s.ws, "u1*u1_x + u1_x*u1_xx"), Chart::V};
    auto parts = jet_degree_decompose(s.ctx, p);
    REQUIRE(parts.size() == 2);
    CHECK(parts.at(1).e.equals(Expr::parse(&s.ws, "u1*u1_x")));
    CHECK(parts.at(3).e.equals(Expr::parse(&s.ws, "u1_x*u1_xx")));
    // Euler grading operator check: sum_l l u_l d/du_l acting on part_j = j part_j
    for (auto& [deg, part] : parts) {
        Expr graded = Expr::constant(&s.ws, 0);
        for (VarRef v : part.e.variables())
            if (v.order >= 1)
                graded = graded + Expr::variable(&s.ws, v) * part.e.diff(v) *
                                      Expr::constant(&s.ws, v.order);
        CHECK(graded.equals(part.e * Expr::constant(&s.ws, deg)));
    }

    DiffPoly f{Expr::parse(&s.ws, "u1^4 - u2"), Chart::V};
    auto parts_f = jet_degree_decompose(s.ctx, f);
    REQUIRE(parts_f.size() == 1);
    CHECK(parts_f.count(0) == 1);

    WaterWave w;
    DiffPoly h2{Expr::parse(&w.ws, "(1/6)*r^3*v_x^2"), Chart::V};
    CHECK(jet_degree_of(w.ctx, h2) == 2);
}

TEST_CASE("is_total_derivative") {
    Pair2 s;
    CHECK(is_total_derivative(s.ctx, {Expr::parse(&s.ws, "u1_x*u1_xx"), Chart::V}));
    CHECK_FALSE(is_total_derivative(s.ctx, {Expr::parse(&s.ws, "u1_x^2"), Chart::V}));
}

TEST_CASE("ring-mode validation") {
    Pair2 s;
    SUBCASE("degree decomposition rejects non-polynomial densities") {
        DiffPoly rational{Expr::parse(&s.ws, "1/u1_x"), Chart::V};
        CHECK_FALSE(is_polynomial_mode(s.ctx, rational));
        CHECK_THROWS_AS(jet_degree_decompose(s.ctx, rational), Error);
    }
    SUBCASE("the extended ring stops at first jets") {
        DiffPoly ok{Expr::parse(&s.ws, "u1_x*log(u1_x) + u1_xx/u2_x"), Chart::V};
        validate_extended_ring(s.ctx, ok);
        CHECK_THROWS_AS(
            validate_extended_ring(s.ctx, {Expr::parse(&s.ws, "log(u1_xx)"), Chart::V}), Error);
        CHECK_THROWS_AS(
            validate_extended_ring(s.ctx, {Expr::parse(&s.ws, "u1/u2_xx"), Chart::V}), Error);
    }
}

TEST_CASE("poisson bracket on the water-wave hierarchy") {
    WaterWave w;
    LocalFunctional H0 = w.F("-(1/2)*r*v^2 - (1/2)*r^2");
    SUBCASE("{F,F} = 0") {
        LocalFunctional b = poisson_bracket(w.ctx, H0, H0, w.eta);
        CHECK(b.is_zero_functional(w.ctx));
    }
    SUBCASE("{int r dx, H0} = 0 (density is a total derivative)") {
        LocalFunctional b = poisson_bracket(w.ctx, w.F("r"), H0, w.eta);
        CHECK(is_total_derivative(w.ctx, b.density));
        CHECK_FALSE(b.density.e.is_structurally_zero());
    }
    SUBCASE("{int r*v dx, H0} = 0") {
        LocalFunctional b = poisson_bracket(w.ctx, w.F("r*v"), H0, w.eta);
        CHECK(b.is_zero_functional(w.ctx));
    }
}

TEST_CASE("bracket antisymmetry and Jacobi (randomized)") {
    Pair2 s;
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        LocalFunctional F{{random_density(s.ws, rng, 1, 2), Chart::V}};
        LocalFunctional G{{random_density(s.ws, rng, 1, 2), Chart::V}};
        LocalFunctional H{{random_density(s.ws, rng, 1, 2), Chart::V}};
        LocalFunctional fg = poisson_bracket(s.ctx, F, G, s.eta);
        LocalFunctional gf = poisson_bracket(s.ctx, G, F, s.eta);
        DiffPoly anti{fg.density.e + gf.density.e, Chart::V};
        CHECK(is_total_derivative(s.ctx, anti));
        LocalFunctional j1 = poisson_bracket(s.ctx, fg, H, s.eta);
        LocalFunctional j2 =
            poisson_bracket(s.ctx, poisson_bracket(s.ctx, G, H, s.eta), F, s.eta);
        LocalFunctional j3 =
            poisson_bracket(s.ctx, poisson_bracket(s.ctx, H, F, s.eta), G, s.eta);
        DiffPoly jac{j1.density.e + j2.density.e + j3.density.e, Chart::V};
        CHECK(is_total_derivative(s.ctx, jac));
    }
}

TEST_CASE("bracket grading") {
    Pair2 s;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        Expr fa = Expr::parse(&s.ws, "u1^2*u1_x + u2*u2_x");   // degree 1
        Expr gb = Expr::parse(&s.ws, "u1_x^2*u2_x - u1*u1_x*u2_xx");  // degree 3
        LocalFunctional br = poisson_bracket(s.ctx, LocalFunctional{{fa, Chart::V}},
                                             LocalFunctional{{gb, Chart::V}}, s.eta);
        if (br.density.e.is_structurally_zero()) continue;
        CHECK(jet_degree_of(s.ctx, br.density) == 1 + 3 + 1);
    }
}

TEST_CASE("hamiltonian flow") {
    WaterWave w;
    SUBCASE("water-wave truncation at second order") {
        EpsFunctional H;
        H.orders.push_back(w.F("-(1/2)*r*v^2 - (1/2)*r^2"));
        H.orders.push_back(LocalFunctional::zero(w.ctx, Chart::V));
        H.orders.push_back(w.F("(1/6)*r^3*v_x^2"));
        auto rhs = hamiltonian_flow(w.ctx, H, w.eta, 2);
        // r_t = -(rv)_x + eps^2 (-r^2 r_x v_x - r^3 v_xx / 3)_x
        CHECK(rhs[0][0].e.equals(Expr::parse(&w.ws, "-(r_x*v + r*v_x)")));
        CHECK(rhs[0][1].e.is_structurally_zero());
        Expr expected_r2 = total_x_derivative(
                               w.ctx, {Expr::parse(&w.ws, "-r^2*r_x*v_x - (1/3)*r^3*v_xx"),
                                       Chart::V})
                               .e;
        CHECK(rhs[0][2].e.equals(expected_r2));
        // v_t = -r_x - v v_x + eps^2 ((1/2) r^2 v_x^2)_x
        CHECK(rhs[1][0].e.equals(Expr::parse(&w.ws, "-r_x - v*v_x")));
        Expr expected_v2 =
            total_x_derivative(w.ctx, {Expr::parse(&w.ws, "(1/2)*r^2*v_x^2"), Chart::V}).e;
        CHECK(rhs[1][2].e.equals(expected_v2));
    }
    SUBCASE("translation flow") {
        Pair2 s;
        EpsFunctional H;
        H.orders.push_back(
            LocalFunctional{{Expr::parse(&s.ws, "(1/2)*(u1^2 + u2^2)"), Chart::V}});
        auto rhs = hamiltonian_flow(s.ctx, H, s.eta, 0);
        CHECK(rhs[0][0].e.equals(Expr::parse(&s.ws, "u1_x")));
        CHECK(rhs[1][0].e.equals(Expr::parse(&s.ws, "u2_x")));
    }
    SUBCASE("order 0 drops the dispersive tail") {
        EpsFunctional H;
        H.orders.push_back(w.F("-(1/2)*r*v^2 - (1/2)*r^2"));
        H.orders.push_back(LocalFunctional::zero(w.ctx, Chart::V));
        H.orders.push_back(w.F("(1/6)*r^3*v_x^2"));
        auto rhs = hamiltonian_flow(w.ctx, H, w.eta, 0);
        CHECK(rhs[0].size() == 1);
        CHECK(rhs[1].size() == 1);
    }
}

TEST_CASE("chart transforms by prolongation") {
    WaterWave w;
    ChartMaps maps;
    maps.forward = {Expr::parse(&w.ws, "v/2 + sqrt(r)"), Expr::parse(&w.ws, "v/2 - sqrt(r)")};
    maps.inverse = {Expr::parse(&w.ws, "(R1-R2)^2/4"), Expr::parse(&w.ws, "R1 + R2")};
    DiffPoly h2{Expr::parse(&w.ws, "(1/6)*r^3*v_x^2"), Chart::V};
    DiffPoly h2R = to_chart(w.ctx, h2, Chart::R, maps);
    CHECK(h2R.e.equals(Expr::parse(&w.ws, "((R1-R2)^6/384)*(R1_x + R2_x)^2")));
    // and back
    DiffPoly back = to_chart(w.ctx, h2R, Chart::V, maps);
    CHECK(back.e.equals(h2.e));
}

TEST_CASE("functional equality modulo total derivatives") {
    Pair2 s;
    LocalFunctional a{{Expr::parse(&s.ws, "u1_x^2"), Chart::V}};
    DiffPoly shift = total_x_derivative(s.ctx, {Expr::parse(&s.ws, "u1^2*u2_x"), Chart::V});
    LocalFunctional b{{Expr::parse(&s.ws, "u1_x^2") + shift.e, Chart::V}};
    CHECK(a.equals(s.ctx, b));
    LocalFunctional c{{Expr::parse(&s.ws, "u1_x^2 + u1^2"), Chart::V}};
    CHECK_FALSE(a.equals(s.ctx, c));
    SUBCASE("normal form strips reducible top jets") {
        LocalFunctional messy{
            {Expr::parse(&s.ws, "u1_x^2 + u1*u1_xx"), Chart::V}};  // u1 u1_xx ~ -u1_x^2
        DiffPoly nf = messy.normal_form(s.ctx);
        CHECK(messy.equals(s.ctx, LocalFunctional{nf}));
        CHECK(max_jet_order(s.ctx, nf) <= 1);
    }
}
