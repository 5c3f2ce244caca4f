#pragma once

#include "hampert/manifest.hpp"

namespace hampert {

// exit codes shared by the CLI and the test suites
inline constexpr int kExitPass = 0;
inline constexpr int kExitMathFail = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitBasisInsufficient = 3;
inline constexpr int kExitInternal = 4;

struct PipelineOutcome {
    OJson report;
    int exit_code = kExitPass;
};

/// Stages in dependency order: hydro -> chart -> first -> second.
PipelineOutcome run_check(Session& s, const std::string& stage);
PipelineOutcome run_trivialize(Session& s);
PipelineOutcome run_extend(Session& s, const std::vector<std::string>& f0_texts);

std::string render_summary(const OJson& report);

}  // namespace hampert
