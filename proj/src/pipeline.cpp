#include "hampert/pipeline.hpp"

#include <sstream>

namespace hampert {

namespace {

OJson shell(const Session& s, const std::string& command) {
    OJson r;
    r["schema_version"] = 1;
    r["tool"] = "hampert";
    r["command"] = command;
    r["manifest"] = s.manifest.name;
    r["seed"] = s.manifest.seed;
    OJson prov;
    prov["zero_test_samples"] = s.ws->zero_samples();
    prov["zero_test_seed"] = s.ws->zero_seed();
    prov["probabilistic_used"] = false;
    r["provenance"] = prov;
    r["stages"] = OJson::array();
    return r;
}

OJson check_json(const CheckItem& item) {
    OJson c;
    c["name"] = item.name;
    c["verdict"] = item.pass ? "pass" : "fail";
    c["certified"] = item.certified;
    if (!item.residual.empty()) c["residual"] = item.residual;
    return c;
}

void note_probabilistic(OJson& report, bool used) {
    if (used) report["provenance"]["probabilistic_used"] = true;
}

struct StageState {
    bool hydro_ok = false;
    bool chart_ok = false;
    bool first_ok = false;
    std::optional<Perturbation> pert;  // with H1 reduced when possible
    bool h1_warning = false;           // proceeded despite unreduced H1
    std::optional<SecondOrderReport> second;
};

void stage_hydro(Session& s, OJson& report, StageState& st, int& exit_code) {
    OJson stage;
    stage["name"] = "hydro";
    IntegrabilityVerdict v = is_hydro_integrable(*s.sys);
    stage["verdict"] = v.integrable ? "pass" : "fail";
    stage["certified"] = v.certified;
    note_probabilistic(report, !v.certified);
    if (!v.integrable) {
        OJson w;
        w["indices"] = {v.wa + 1, v.wb + 1, v.wc + 1};
        w["entry"] = v.witness;
        stage["witness"] = w;
        exit_code = std::max(exit_code, kExitMathFail);
    }
    st.hydro_ok = v.integrable;
    report["stages"].push_back(stage);
}

void stage_chart(Session& s, OJson& report, StageState& st, int& exit_code) {
    OJson stage;
    stage["name"] = "chart";
    if (!st.hydro_ok) {
        stage["verdict"] = "skipped";
        report["stages"].push_back(stage);
        return;
    }
    if (!s.chart) {
        if (s.ctx.n == 2) {
            s.chart = solve_chart_n2(*s.sys);
            stage["constructed"] = true;
            OJson fw = OJson::array();
            for (auto& e : s.chart->maps.forward) fw.push_back(e.str());
            stage["forward"] = fw;
        } else {
            throw Error(ErrKind::Input,
                        "no Riemann chart supplied; charts are only constructed for n = 2");
        }
    }
    ChartVerification rep = verify_chart(*s.sys, *s.chart);
    stage["verdict"] = rep.pass ? "pass" : "fail";
    OJson checks = OJson::array();
    for (auto& item : rep.items) checks.push_back(check_json(item));
    stage["checks"] = checks;
    note_probabilistic(report, rep.any_probabilistic);
    // the labeling is part of the contract: state it
    OJson lam = OJson::array();
    for (auto& e : s.chart->lambda) lam.push_back(e.str());
    stage["lambda"] = lam;
    if (!rep.pass) exit_code = std::max(exit_code, kExitMathFail);
    st.chart_ok = rep.pass;
    report["stages"].push_back(stage);
}

void stage_first(Session& s, OJson& report, StageState& st, int& exit_code) {
    OJson stage;
    stage["name"] = "first";
    if (!st.chart_ok) {
        stage["verdict"] = "skipped";
        report["stages"].push_back(stage);
        return;
    }
    Perturbation pert = make_perturbation(*s.sys, *s.chart, s.h1, s.h2);
    FirstOrderReport rep = first_order_check(pert);
    stage["verdict"] = rep.pass ? (rep.vacuous ? "vacuous" : "pass") : "fail";
    OJson p = OJson::array();
    for (auto& e : rep.p) p.push_back(e.str());
    stage["p"] = p;
    OJson checks = OJson::array();
    bool prob = false;
    for (auto& item : rep.items) {
        checks.push_back(check_json(item));
        prob = prob || !item.certified;
    }
    stage["checks"] = checks;
    note_probabilistic(report, prob);
    if (!rep.pass) exit_code = std::max(exit_code, kExitMathFail);
    st.first_ok = rep.pass;
    st.pert = std::move(pert);
    report["stages"].push_back(stage);
}

// reduce H1 before the second-order stage; returns false on basis failure
void reduce_h1(Session& s, OJson& stage, StageState& st) {
    Perturbation& pert = *st.pert;
    if (pert.H.at(1).density.e.is_structurally_zero()) return;
    if (pert.H.at(1).is_zero_functional(s.ctx)) {
        pert.H.orders[1] = LocalFunctional::zero(s.ctx, Chart::V);
        return;
    }
    std::vector<Expr> basis;
    auto it = s.manifest.bases.find("k0");
    if (it != s.manifest.bases.end())
        for (auto& t : it->second) basis.push_back(Expr::parse(s.ws.get(), t));
    try {
        if (basis.empty())
            throw Error(ErrKind::BasisInsufficient, "no k0 basis supplied in the manifest");
        FirstOrderTrivialization tr = first_order_trivialize(pert, basis);
        st.pert = reduce_first_order(pert, tr.k0);
        stage["h1_reduced"] = true;
        stage["k0"] = tr.k0.str();
    } catch (const Error& e) {
        if (e.kind != ErrKind::BasisInsufficient) throw;
        st.h1_warning = true;
        stage["h1_reduced"] = false;
        stage["warning"] =
            "first-order term could not be reduced (insufficient basis); "
            "second-order verdict applies to the raw h2";
    }
}

void stage_second(Session& s, OJson& report, StageState& st, int& exit_code) {
    OJson stage;
    stage["name"] = "second";
    if (!st.first_ok || !st.pert) {
        stage["verdict"] = "skipped";
        report["stages"].push_back(stage);
        return;
    }
    reduce_h1(s, stage, st);
    Perturbation analysis = *st.pert;
    if (st.h1_warning) analysis.H.orders[1] = LocalFunctional::zero(s.ctx, Chart::V);
    SecondOrderReport rep = second_order_check(analysis);
    st.pert = std::move(analysis);
    stage["verdict"] = rep.pass ? "pass" : "fail";
    OJson d = OJson::array();
    for (auto& row : rep.d) {
        OJson r = OJson::array();
        for (auto& e : row) r.push_back(e.str());
        d.push_back(r);
    }
    stage["d"] = d;
    OJson cc = OJson::array();
    for (auto& e : rep.c_candidate) cc.push_back(e.str());
    stage["c_candidate"] = cc;
    OJson checks = OJson::array();
    bool prob = false;
    for (auto& item : rep.items) {
        checks.push_back(check_json(item));
        prob = prob || !item.certified;
        if (!item.pass && !stage.contains("witness")) stage["witness"] = item.residual;
    }
    stage["checks"] = checks;
    stage["cyclic_vacuous"] = rep.vacuous_cyclic;
    note_probabilistic(report, prob);
    if (rep.pass) {
        OJson C = OJson::array(), phi = OJson::array();
        for (auto& e : rep.C) C.push_back(e.str());
        for (auto& e : rep.phi) phi.push_back(e.str());
        stage["C"] = C;
        stage["phi"] = phi;
    } else {
        exit_code = std::max(exit_code, kExitMathFail);
    }
    st.second = std::move(rep);
    report["stages"].push_back(stage);
}

std::string overall(const OJson& report) {
    for (auto& st : report.at("stages"))
        if (st.at("verdict") == "fail") return "fail";
    return "pass";
}

}  // namespace

PipelineOutcome run_check(Session& s, const std::string& stage) {
    if (stage != "hydro" && stage != "first" && stage != "second" && stage != "all")
        throw Error(ErrKind::Input, "unknown stage '" + stage + "'");
    PipelineOutcome out;
    out.report = shell(s, "check");
    out.report["stage"] = stage;
    StageState st;
    stage_hydro(s, out.report, st, out.exit_code);
    if (stage != "hydro") {
        stage_chart(s, out.report, st, out.exit_code);
        if (stage == "first" || stage == "second" || stage == "all")
            stage_first(s, out.report, st, out.exit_code);
        if (stage == "second" || stage == "all")
            stage_second(s, out.report, st, out.exit_code);
    }
    out.report["verdict"] = overall(out.report);
    return out;
}

PipelineOutcome run_trivialize(Session& s) {
    PipelineOutcome out;
    out.report = shell(s, "trivialize");
    StageState st;
    stage_hydro(s, out.report, st, out.exit_code);
    stage_chart(s, out.report, st, out.exit_code);
    stage_first(s, out.report, st, out.exit_code);
    OJson stage;
    stage["name"] = "trivialize";
    if (!st.first_ok || !st.pert) {
        stage["verdict"] = "skipped";
        out.report["stages"].push_back(stage);
        out.report["verdict"] = overall(out.report);
        return out;
    }
    // first-order generator (k0) when H1 is nonzero
    Perturbation& pert = *st.pert;
    if (!pert.H.at(1).density.e.is_structurally_zero() &&
        !pert.H.at(1).is_zero_functional(s.ctx)) {
        std::vector<Expr> basis;
        auto it = s.manifest.bases.find("k0");
        if (it != s.manifest.bases.end())
            for (auto& t : it->second) basis.push_back(Expr::parse(s.ws.get(), t));
        if (basis.empty()) {
            out.exit_code = kExitBasisInsufficient;
            stage["verdict"] = "basis-insufficient";
            stage["detail"] = "h1 is nonzero and no k0 basis was supplied";
            out.report["stages"].push_back(stage);
            out.report["verdict"] = overall(out.report);
            return out;
        }
        try {
            FirstOrderTrivialization tr = first_order_trivialize(pert, basis);
            stage["k0"] = tr.k0.str();
            if (tr.psi) stage["psi"] = tr.psi->str();
            st.pert = reduce_first_order(pert, tr.k0);
        } catch (const Error& e) {
            if (e.kind != ErrKind::BasisInsufficient) throw;
            out.exit_code = kExitBasisInsufficient;
            stage["verdict"] = "basis-insufficient";
            stage["detail"] = e.what();
            out.report["stages"].push_back(stage);
            out.report["verdict"] = overall(out.report);
            return out;
        }
    }
    SecondOrderReport rep = second_order_check(*st.pert);
    if (!rep.pass) {
        stage["verdict"] = "fail";
        stage["detail"] = "no quasi-triviality at second order: the integrability "
                          "conditions fail";
        for (auto& item : rep.items)
            if (!item.pass) {
                stage["witness"] = item.residual;
                break;
            }
        out.exit_code = std::max(out.exit_code, kExitMathFail);
        out.report["stages"].push_back(stage);
        out.report["verdict"] = "fail";
        return out;
    }
    QuasiTriviality qt = quasi_trivialize(*st.pert, rep);
    stage["verdict"] = "pass";
    stage["k1"] = qt.k1_R.e.str();
    stage["k1_state_chart"] = qt.K1.density.e.str();
    OJson residuals;
    residuals["bracket"] = "0";
    residuals["log_cancellation"] = qt.logs_cancelled ? "0" : "nonzero";
    residuals["homogeneity"] = qt.homogeneity ? "0" : "nonzero";
    stage["residuals"] = residuals;
    out.report["stages"].push_back(stage);
    out.report["verdict"] = overall(out.report);
    return out;
}

PipelineOutcome run_extend(Session& s, const std::vector<std::string>& f0_texts) {
    PipelineOutcome out;
    out.report = shell(s, "extend");
    StageState st;
    stage_hydro(s, out.report, st, out.exit_code);
    stage_chart(s, out.report, st, out.exit_code);
    stage_first(s, out.report, st, out.exit_code);
    OJson stage;
    stage["name"] = "extend";
    if (!st.first_ok || !st.pert) {
        stage["verdict"] = "skipped";
        out.report["stages"].push_back(stage);
        out.report["verdict"] = overall(out.report);
        return out;
    }
    reduce_h1(s, stage, st);
    Perturbation analysis = *st.pert;
    if (st.h1_warning) analysis.H.orders[1] = LocalFunctional::zero(s.ctx, Chart::V);
    OJson results = OJson::array();
    bool all_pass = true;
    for (auto& text : f0_texts) {
        Expr f0 = Expr::parse(s.ws.get(), text);
        // conservation is a precondition: a non-conserved input is an error
        ConservedReport crep = check_conserved0(*s.sys, &*s.chart, f0);
        if (!crep.conserved)
            throw Error(ErrKind::Input, "f0 = " + text + " is not conserved at order 0" +
                                            (crep.witness.empty() ? "" : "; commutator residual " +
                                                                             crep.witness));
        ExtensionSolveResult res = second_order_extension_solve(analysis, f0);
        OJson r;
        r["f0"] = text;
        r["verdict"] = res.pass ? "pass" : "fail";
        r["generic"] = res.generic;
        if (res.pass) {
            OJson D = OJson::array();
            for (auto& row : res.D) {
                OJson rr = OJson::array();
                for (auto& e : row) rr.push_back(e.str());
                D.push_back(rr);
            }
            r["D"] = D;
            r["F2"] = res.F2.density.e.str();
        } else {
            r["witness"] = res.first_violation;
        }
        results.push_back(r);
        all_pass = all_pass && res.pass;
    }
    stage["results"] = results;
    stage["verdict"] = all_pass ? "pass" : "fail";
    if (!all_pass) out.exit_code = std::max(out.exit_code, kExitMathFail);
    out.report["stages"].push_back(stage);
    out.report["verdict"] = overall(out.report);
    return out;
}

std::string render_summary(const OJson& report) {
    std::ostringstream os;
    os << report.at("tool").get<std::string>() << " " << report.at("command").get<std::string>()
       << " on " << report.at("manifest").get<std::string>() << "\n";
    for (auto& st : report.at("stages")) {
        os << "  " << st.at("name").get<std::string>() << ": "
           << st.at("verdict").get<std::string>();
        if (st.contains("witness")) {
            if (st.at("witness").is_string())
                os << "  [witness: " << st.at("witness").get<std::string>() << "]";
            else
                os << "  [witness: " << st.at("witness").dump() << "]";
        }
        if (st.contains("warning")) os << "  [warning: " << st.at("warning").get<std::string>() << "]";
        os << "\n";
        if (st.contains("results"))
            for (auto& r : st.at("results"))
                os << "    f0 = " << r.at("f0").get<std::string>() << ": "
                   << r.at("verdict").get<std::string>() << "\n";
    }
    os << "verdict: " << report.at("verdict").get<std::string>() << "\n";
    if (report.at("provenance").at("probabilistic_used").get<bool>())
        os << "note: probabilistic zero tests were used (samples="
           << report.at("provenance").at("zero_test_samples") << ", seed="
           << report.at("provenance").at("zero_test_seed") << ")\n";
    return os.str();
}

}  // namespace hampert
