// Benchmark: serial vs OpenMP entrywise evaluation of the obstruction tensor.
#include "hampert/hydro.hpp"

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace hampert;

namespace {

HydroSystem dense_system(const Workspace* ws, const JetContext& ctx, int n) {
    QMatrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) m.at(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1;
    Expr h0 = Expr::constant(ws, 0);
    // dense quartic density so every entry of the contraction is nontrivial
    for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b)
            for (int c = b; c < n; ++c) {
                Expr term = Expr::variable(ws, VarRef{a, 0}) * Expr::variable(ws, VarRef{b, 0}) *
                            Expr::variable(ws, VarRef{c, 0});
                h0 = h0 + Expr::constant(ws, Rat(a + 2 * b + 3 * c + 1)) * term;
            }
    for (int a = 0; a < n; ++a)
        h0 = h0 + Expr::variable(ws, VarRef{a, 0}).pow(4) * Expr::constant(ws, Rat(a + 1));
    return HydroSystem::make(ctx, Metric::from(std::move(m)), h0);
}

double run_ms(const std::function<HaantjesTensor()>& f, HaantjesTensor& out) {
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
        auto t0 = std::chrono::steady_clock::now();
        out = f();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

}  // namespace

int main() {
    for (int n = 3; n <= 4; ++n) {
        std::vector<std::string> names;
        for (int i = 0; i < n; ++i) names.push_back("u" + std::to_string(i + 1));
        Workspace ws(names, n);
        JetContext ctx = make_context(&ws, n);
        HydroSystem sys = dense_system(&ws, ctx, n);
        HaantjesTensor serial, parallel;
        double t_serial = run_ms([&] { return haantjes_tensor_serial(sys); }, serial);
        double t_parallel = run_ms([&] { return haantjes_tensor(sys); }, parallel);
        bool agree = true;
        for (std::size_t i = 0; i < serial.entries.size(); ++i)
            agree = agree && serial.entries[i].str() == parallel.entries[i].str();
        int threads = 1;
#ifdef _OPENMP
        threads = omp_get_max_threads();
#endif
        std::printf("n=%d  serial %8.2f ms   openmp(%d threads) %8.2f ms   speedup %.2fx   %s\n",
                    n, t_serial, threads, t_parallel, t_serial / t_parallel,
                    agree ? "entries agree" : "ENTRIES DIFFER");
        if (!agree) return 1;
    }
    return 0;
}
