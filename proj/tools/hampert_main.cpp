#include "hampert/casebook.hpp"
#include "hampert/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace hampert;

namespace {

struct OutputOptions {
    std::string out_path;
    std::string format = "report";
    bool timing = false;
};

void add_output_options(CLI::App* cmd, OutputOptions& opts) {
    cmd->add_option("--out", opts.out_path, "write the report to a file instead of stdout");
    cmd->add_option("--format", opts.format, "report (JSON) or summary (human readable)")
        ->check(CLI::IsMember({"report", "summary"}));
    cmd->add_flag("--timing", opts.timing, "include wall-clock timing in the report");
}

void emit(const OJson& report, const OutputOptions& opts, double elapsed_ms) {
    OJson final = report;
    if (opts.timing) final["timing_ms"] = elapsed_ms;
    std::string text =
        opts.format == "summary" ? render_summary(final) : final.dump(2) + "\n";
    if (opts.out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(opts.out_path);
        if (!out) throw Error(ErrKind::Input, "cannot write " + opts.out_path);
        out << text;
    }
}

int exit_code_for(const Error& e) {
    switch (e.kind) {
        case ErrKind::BasisInsufficient:
        case ErrKind::UnsupportedClass:
            return kExitBasisInsufficient;
        case ErrKind::Internal:
            return kExitInternal;
        default:
            return kExitInputError;
    }
}

Session open_with_overrides(const std::string& path, std::optional<std::uint64_t> seed) {
    Manifest m = load_manifest(path);
    if (seed) m.seed = *seed;
    if (!m.sample_box) {
        if (const char* box = std::getenv("HAMPERT_SAMPLE_BOX")) {
            std::string s = box;
            auto colon = s.find(':');
            if (colon == std::string::npos)
                throw Error(ErrKind::Input, "HAMPERT_SAMPLE_BOX must look like lo:hi");
            m.sample_box = {s.substr(0, colon), s.substr(colon + 1)};
        }
    }
    return open_session(std::move(m));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"integrability and quasi-triviality checks for Hamiltonian perturbations "
                 "of hydrodynamic-type systems"};
    app.require_subcommand(1);

    std::string manifest_path, stage = "all", basis_name;
    std::vector<std::string> f0_texts;
    std::optional<std::uint64_t> seed_override;
    OutputOptions check_opts, triv_opts, extend_opts, case_opts;

    CLI::App* check = app.add_subcommand("check", "run the analysis stages");
    check->add_option("manifest", manifest_path, "manifest file")->required();
    check->add_option("--stage", stage, "hydro, first, second or all")
        ->check(CLI::IsMember({"hydro", "first", "second", "all"}));
    check->add_option("--seed", seed_override, "override the manifest seed");
    add_output_options(check, check_opts);

    CLI::App* triv = app.add_subcommand("trivialize", "construct k0 and the generator K1");
    triv->add_option("manifest", manifest_path, "manifest file")->required();
    triv->add_option("--seed", seed_override, "override the manifest seed");
    add_output_options(triv, triv_opts);

    CLI::App* extend = app.add_subcommand("extend", "extend conservation laws to second order");
    extend->add_option("manifest", manifest_path, "manifest file")->required();
    extend->add_option("--f0", f0_texts, "density expression (repeatable)");
    extend->add_option("--basis", basis_name, "named basis from the manifest");
    extend->add_option("--seed", seed_override, "override the manifest seed");
    add_output_options(extend, extend_opts);

    CLI::App* casecmd = app.add_subcommand("case", "built-in cases");
    CLI::App* caserun = casecmd->add_subcommand("run", "run a built-in case");
    std::string case_name;
    std::uint64_t case_seed = 0;
    caserun->add_option("name", case_name, "waterwave or synthetic")->required();
    caserun->add_option("--seed", case_seed, "seed for the synthetic case");
    add_output_options(caserun, case_opts);

    CLI11_PARSE(app, argc, argv);

    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    try {
        if (*check) {
            Session s = open_with_overrides(manifest_path, seed_override);
            PipelineOutcome out = run_check(s, stage);
            emit(out.report, check_opts, elapsed());
            return out.exit_code;
        }
        if (*triv) {
            Session s = open_with_overrides(manifest_path, seed_override);
            PipelineOutcome out = run_trivialize(s);
            emit(out.report, triv_opts, elapsed());
            return out.exit_code;
        }
        if (*extend) {
            Session s = open_with_overrides(manifest_path, seed_override);
            std::vector<std::string> f0s = f0_texts;
            if (!basis_name.empty()) {
                // a basis names a search space: extend every conservation law
                // found in its span, not the raw basis elements
                auto it = s.manifest.bases.find(basis_name);
                if (it == s.manifest.bases.end())
                    throw Error(ErrKind::Input, "manifest has no basis named " + basis_name);
                std::vector<Expr> basis;
                for (auto& t : it->second) basis.push_back(Expr::parse(s.ws.get(), t));
                for (auto& density : solve_claws0(*s.sys, basis)) f0s.push_back(density.str());
            }
            if (f0s.empty())
                throw Error(ErrKind::Input, "extend requires --f0 expressions or --basis");
            PipelineOutcome out = run_extend(s, f0s);
            emit(out.report, extend_opts, elapsed());
            return out.exit_code;
        }
        if (*caserun) {
            CaseReport rep;
            if (case_name == "waterwave") {
                rep = run_waterwave_case();
            } else if (case_name == "synthetic") {
                rep = run_synthetic_integrable_case(case_seed);
            } else {
                throw Error(ErrKind::Input, "unknown case '" + case_name + "'");
            }
            OutputOptions& opts = case_opts;
            OJson final = rep.json;
            if (opts.timing) final["timing_ms"] = elapsed();
            std::string text;
            if (opts.format == "summary") {
                text = "case " + case_name + "\n";
                for (auto& a : final.at("assertions"))
                    text += "  " + a.at("name").get<std::string>() + ": " +
                            a.at("verdict").get<std::string>() + "\n";
                text += "verdict: " + final.at("verdict").get<std::string>() + "\n";
            } else {
                text = final.dump(2) + "\n";
            }
            if (opts.out_path.empty()) {
                std::cout << text;
            } else {
                std::ofstream out(opts.out_path);
                if (!out) throw Error(ErrKind::Input, "cannot write " + opts.out_path);
                out << text;
            }
            return rep.pass ? kExitPass : kExitMathFail;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInputError;
}
