#pragma once

#include "hampert/perturbation.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>

namespace hampert {

using OJson = nlohmann::ordered_json;

/// Parsed problem description (see README for the schema).
struct Manifest {
    int schema_version = 1;
    std::string name;
    std::vector<std::string> variables;
    std::vector<std::vector<Rat>> eta;
    std::string h0;
    std::optional<std::string> h1, h2;
    struct ChartSpec {
        std::vector<std::string> R;
        std::vector<std::string> inverse;  // aligned with `variables`
        std::vector<std::string> lambda;
    };
    std::optional<ChartSpec> chart;
    std::vector<std::string> assumptions;
    std::map<std::string, std::string> base_point;   // var -> rational text
    std::optional<std::pair<std::string, std::string>> sample_box;
    std::map<std::string, std::vector<std::string>> bases;
    std::uint64_t seed = 12345;
};

Manifest manifest_from_json(const nlohmann::json& j);
Manifest load_manifest(const std::string& path);
Rat parse_rational(const std::string& text);

/// A manifest instantiated against a live workspace. Owns the workspace;
/// everything else borrows it.
struct Session {
    Manifest manifest;
    std::unique_ptr<Workspace> ws;
    JetContext ctx;
    std::unique_ptr<HydroSystem> sys;
    std::optional<RiemannChart> chart;  // as supplied; verification is a stage
    bool chart_supplied = false;
    LocalFunctional h1, h2;

    Session() = default;
    Session(Session&&) = default;
    Session& operator=(Session&&) = default;
    Session(const Session&) = delete;
};

Session open_session(Manifest m);

}  // namespace hampert
