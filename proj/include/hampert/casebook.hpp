#pragma once

#include "hampert/pipeline.hpp"

namespace hampert {

struct CaseReport {
    OJson json;
    bool pass = false;
};

/// Built-in manifests, byte-identical to the files shipped under data/.
const char* waterwave_manifest_text();
const char* synthetic_pass_manifest_text();

/// Full scripted reproduction of the shallow-water truncation analysis:
/// obstruction tensor, chart, chart-side h2, second-order failure witness,
/// the five-density census and the 4-of-5 extension verdict.
CaseReport run_waterwave_case();

/// Randomized sufficiency run: canonical-form h2 from seeded C_i, phi_i on
/// an n=2 or n=3 integrable base; checks, generator and sampled extensions.
CaseReport run_synthetic_integrable_case(std::uint64_t seed);

}  // namespace hampert
