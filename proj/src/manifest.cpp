#include "hampert/manifest.hpp"

#include <fstream>

namespace hampert {

using nlohmann::json;

Rat parse_rational(const std::string& text) {
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    if (s.empty()) throw Error(ErrKind::Input, "empty rational literal");
    try {
        Rat q(s);
        q.canonicalize();
        return q;
    } catch (const std::exception&) {
        throw Error(ErrKind::Input, "bad rational literal '" + text + "'");
    }
}

static Rat json_rational(const json& j, const std::string& what) {
    if (j.is_number_integer()) return Rat(j.get<long>());
    if (j.is_string()) return parse_rational(j.get<std::string>());
    throw Error(ErrKind::Input, what + " must be an integer or a rational string");
}

Manifest manifest_from_json(const json& j) {
    Manifest m;
    if (!j.is_object()) throw Error(ErrKind::Input, "manifest must be a JSON object");
    if (j.contains("schema_version")) m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1)
        throw Error(ErrKind::Input, "unsupported schema_version " +
                                        std::to_string(m.schema_version));
    m.name = j.value("name", std::string("unnamed"));
    if (!j.contains("variables") || !j.at("variables").is_array())
        throw Error(ErrKind::Input, "manifest requires a list of variables");
    for (auto& v : j.at("variables")) m.variables.push_back(v.get<std::string>());
    if (m.variables.empty()) throw Error(ErrKind::Input, "at least one variable is required");
    if (!j.contains("eta")) throw Error(ErrKind::Input, "manifest requires eta");
    for (auto& row : j.at("eta")) {
        std::vector<Rat> r;
        for (auto& e : row) r.push_back(json_rational(e, "eta entry"));
        m.eta.push_back(std::move(r));
    }
    if (m.eta.size() != m.variables.size())
        throw Error(ErrKind::Input, "eta dimension does not match the variable count");
    for (auto& row : m.eta)
        if (row.size() != m.variables.size())
            throw Error(ErrKind::Input, "eta must be square");
    if (!j.contains("h0")) throw Error(ErrKind::Input, "manifest requires h0");
    m.h0 = j.at("h0").get<std::string>();
    if (j.contains("h1") && !j.at("h1").is_null()) m.h1 = j.at("h1").get<std::string>();
    if (j.contains("h2") && !j.at("h2").is_null()) m.h2 = j.at("h2").get<std::string>();
    if (j.contains("chart") && !j.at("chart").is_null()) {
        Manifest::ChartSpec c;
        const json& jc = j.at("chart");
        for (auto& e : jc.at("R")) c.R.push_back(e.get<std::string>());
        for (auto& name : m.variables) {
            if (!jc.at("inverse").contains(name))
                throw Error(ErrKind::Input, "chart.inverse is missing variable " + name);
            c.inverse.push_back(jc.at("inverse").at(name).get<std::string>());
        }
        for (auto& e : jc.at("lambda")) c.lambda.push_back(e.get<std::string>());
        if (c.R.size() != m.variables.size() || c.lambda.size() != m.variables.size())
            throw Error(ErrKind::Input, "chart component count mismatch");
        m.chart = std::move(c);
    }
    if (j.contains("assumptions"))
        for (auto& a : j.at("assumptions")) m.assumptions.push_back(a.get<std::string>());
    if (j.contains("base_point"))
        for (auto& [key, val] : j.at("base_point").items())
            m.base_point[key] = val.is_string() ? val.get<std::string>()
                                                : std::to_string(val.get<long>());
    if (j.contains("sample_box")) {
        const json& b = j.at("sample_box");
        auto fmt = [](const json& v) {
            return v.is_string() ? v.get<std::string>() : std::to_string(v.get<long>());
        };
        m.sample_box = {fmt(b.at("lo")), fmt(b.at("hi"))};
    }
    if (j.contains("bases"))
        for (auto& [key, val] : j.at("bases").items()) {
            std::vector<std::string> list;
            for (auto& e : val) list.push_back(e.get<std::string>());
            m.bases[key] = std::move(list);
        }
    if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrKind::Input, "cannot open manifest file " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error(ErrKind::Input, std::string("manifest is not valid JSON: ") + e.what());
    }
    return manifest_from_json(j);
}

Session open_session(Manifest m) {
    Session s;
    const int n = static_cast<int>(m.variables.size());
    std::vector<std::string> names = m.variables;
    for (int i = 0; i < n; ++i) {
        std::string rname = "R" + std::to_string(i + 1);
        for (auto& v : m.variables)
            if (v == rname)
                throw Error(ErrKind::Input, "variable name " + rname + " is reserved");
        names.push_back(rname);
    }
    s.ws = std::make_unique<Workspace>(names, n);
    s.ws->set_zero_seed(m.seed);
    if (m.sample_box)
        s.ws->set_sample_box(parse_rational(m.sample_box->first),
                             parse_rational(m.sample_box->second));
    for (auto& [var, val] : m.base_point) {
        int idx = s.ws->index_of(var);
        if (idx < 0) throw Error(ErrKind::Input, "base point names unknown variable " + var);
        s.ws->set_base_point(idx, parse_rational(val));
    }
    for (auto& a : m.assumptions) {
        auto gt = a.find('>');
        auto lt = a.find('<');
        std::string lhs, rhs;
        bool greater = gt != std::string::npos;
        if (greater) {
            lhs = a.substr(0, gt);
            rhs = a.substr(gt + 1);
        } else if (lt != std::string::npos) {
            lhs = a.substr(0, lt);
            rhs = a.substr(lt + 1);
        } else {
            throw Error(ErrKind::Input, "assumption '" + a + "' must use > or <");
        }
        Expr l = Expr::parse(s.ws.get(), lhs);
        Expr r = Expr::parse(s.ws.get(), rhs);
        s.ws->declare_positive(greater ? l - r : r - l);
    }
    s.ctx = make_context(s.ws.get(), n);
    QMatrix eta(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            eta.at(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) =
                m.eta[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    Metric metric = Metric::from(std::move(eta));
    Expr h0 = Expr::parse(s.ws.get(), m.h0);
    s.sys = std::make_unique<HydroSystem>(HydroSystem::make(s.ctx, metric, h0));
    if (m.chart) {
        RiemannChart chart;
        for (auto& t : m.chart->R) chart.maps.forward.push_back(Expr::parse(s.ws.get(), t));
        for (auto& t : m.chart->inverse) chart.maps.inverse.push_back(Expr::parse(s.ws.get(), t));
        for (auto& t : m.chart->lambda) chart.lambda.push_back(Expr::parse(s.ws.get(), t));
        s.chart = std::move(chart);
        s.chart_supplied = true;
    }
    s.h1 = m.h1 ? LocalFunctional{DiffPoly{Expr::parse(s.ws.get(), *m.h1), Chart::V}}
                : LocalFunctional::zero(s.ctx, Chart::V);
    s.h2 = m.h2 ? LocalFunctional{DiffPoly{Expr::parse(s.ws.get(), *m.h2), Chart::V}}
                : LocalFunctional::zero(s.ctx, Chart::V);
    s.manifest = std::move(m);
    return s;
}

}  // namespace hampert
