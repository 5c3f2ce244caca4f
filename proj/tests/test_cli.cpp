#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hampert/casebook.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

// paths are injected by the build
#ifndef HAMPERT_CLI_PATH
#define HAMPERT_CLI_PATH "hampert"
#endif
#ifndef HAMPERT_DATA_DIR
#define HAMPERT_DATA_DIR "data"
#endif
#ifndef HAMPERT_FIXTURE_DIR
#define HAMPERT_FIXTURE_DIR "tests/fixtures"
#endif
#ifndef HAMPERT_GOLDEN_DIR
#define HAMPERT_GOLDEN_DIR "tests/golden"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    std::string out_file = std::string(std::tmpnam(nullptr)) + ".out";
    std::string cmd = std::string(HAMPERT_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    std::remove(out_file.c_str());
    return r;
}

std::string data(const std::string& name) { return std::string(HAMPERT_DATA_DIR) + "/" + name; }

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("shipped manifests match the built-in case definitions") {
    CHECK(slurp(data("waterwave.json")) == hampert::waterwave_manifest_text());
    CHECK(slurp(data("synthetic_pass.json")) == hampert::synthetic_pass_manifest_text());
}

TEST_CASE("check: stages and exit codes") {
    SUBCASE("water wave fails at second order with a witness") {
        RunResult r = run_cli("check " + data("waterwave.json") + " --stage second");
        CHECK(r.exit_code == 1);
        auto j = nlohmann::json::parse(r.output);
        CHECK(j.at("verdict") == "fail");
        bool second_failed = false;
        for (auto& st : j.at("stages"))
            if (st.at("name") == "second") {
                CHECK(st.at("verdict") == "fail");
                CHECK(st.contains("witness"));
                second_failed = true;
            }
        CHECK(second_failed);
    }
    SUBCASE("hydro stage alone passes") {
        RunResult r = run_cli("check " + data("waterwave.json") + " --stage hydro");
        CHECK(r.exit_code == 0);
        auto j = nlohmann::json::parse(r.output);
        CHECK(j.at("stages").size() == 1);
        CHECK(j.at("verdict") == "pass");
    }
    SUBCASE("synthetic canonical perturbation passes all stages") {
        RunResult r = run_cli("check " + data("synthetic_pass.json") + " --stage all");
        CHECK(r.exit_code == 0);
        auto j = nlohmann::json::parse(r.output);
        CHECK(j.at("verdict") == "pass");
        // --stage all verdict equals the conjunction of the stage verdicts
        bool all_ok = true;
        for (auto& st : j.at("stages")) {
            std::string v = st.at("verdict");
            all_ok = all_ok && (v == "pass" || v == "vacuous");
        }
        CHECK(all_ok);
    }
    SUBCASE("malformed eta is an input error") {
        RunResult r = run_cli("check " + std::string(HAMPERT_FIXTURE_DIR) + "/bad_eta.json");
        CHECK(r.exit_code == 2);
    }
    SUBCASE("nonzero h1 is reduced before the second-order analysis") {
        RunResult r =
            run_cli("check " + std::string(HAMPERT_FIXTURE_DIR) + "/with_h1.json --stage second");
        auto j = nlohmann::json::parse(r.output);
        bool reduced = false;
        for (auto& st : j.at("stages"))
            if (st.at("name") == "second") {
                reduced = st.value("h1_reduced", false);
                CHECK(st.contains("k0"));
            }
        CHECK(reduced);
        // removing a trivial h1 leaves a noncanonical eps^2 remainder here
        CHECK(r.exit_code == 1);
    }
    SUBCASE("missing manifest is an input error") {
        RunResult r = run_cli("check /nonexistent/manifest.json");
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("trivialize") {
    SUBCASE("the water wave has no second-order quasi-triviality") {
        RunResult r = run_cli("trivialize " + data("waterwave.json"));
        CHECK(r.exit_code == 1);
    }
    SUBCASE("synthetic case emits the generator with log terms") {
        RunResult r = run_cli("trivialize " + data("synthetic_pass.json"));
        CHECK(r.exit_code == 0);
        auto j = nlohmann::json::parse(r.output);
        bool found = false;
        for (auto& st : j.at("stages"))
            if (st.at("name") == "trivialize") {
                CHECK(st.at("verdict") == "pass");
                std::string k1 = st.at("k1");
                CHECK(k1.find("log(R1_x)") != std::string::npos);
                CHECK(st.at("residuals").at("bracket") == "0");
                found = true;
            }
        CHECK(found);
    }
}

TEST_CASE("extend") {
    SUBCASE("r*v extends") {
        RunResult r = run_cli("extend " + data("waterwave.json") + " --f0 r*v");
        CHECK(r.exit_code == 0);
        auto j = nlohmann::json::parse(r.output);
        for (auto& st : j.at("stages"))
            if (st.at("name") == "extend") {
                CHECK(st.at("results").at(0).at("verdict") == "pass");
                CHECK(st.at("results").at(0).contains("F2"));
            }
    }
    SUBCASE("the log-bearing census density does not extend") {
        RunResult r = run_cli("extend " + data("waterwave.json") +
                              " --f0 \"(1/2)*v^2 + r*log(r)\"");
        CHECK(r.exit_code == 1);
    }
    SUBCASE("a non-conserved density is an input error") {
        RunResult r = run_cli("extend " + data("waterwave.json") + " --f0 r^2*v");
        CHECK(r.exit_code == 2);
    }
    SUBCASE("--basis extends the conservation laws found in its span") {
        RunResult r = run_cli("extend " + data("waterwave.json") + " --basis claws");
        CHECK(r.exit_code == 1);  // the log-bearing density fails
        auto j = nlohmann::json::parse(r.output);
        for (auto& st : j.at("stages"))
            if (st.at("name") == "extend") {
                int pass = 0, fail = 0;
                for (auto& res : st.at("results"))
                    (res.at("verdict") == "pass" ? pass : fail)++;
                CHECK(pass == 4);
                CHECK(fail == 1);
            }
    }
}

TEST_CASE("case run waterwave: deterministic and matches the golden report") {
    RunResult a = run_cli("case run waterwave");
    RunResult b = run_cli("case run waterwave");
    RunResult c = run_cli("case run waterwave");
    CHECK(a.exit_code == 0);
    CHECK(a.output == b.output);
    CHECK(b.output == c.output);
    std::string golden = slurp(std::string(HAMPERT_GOLDEN_DIR) + "/waterwave_case.json");
    CHECK(a.output == golden);
}

TEST_CASE("three-component manifest with a user-supplied chart") {
    SUBCASE("all stages pass, including the genuine triple conditions") {
        RunResult r = run_cli("check " + data("diagonal3.json") + " --stage all");
        CHECK(r.exit_code == 0);
        auto j = nlohmann::json::parse(r.output);
        for (auto& st : j.at("stages")) {
            CHECK(st.at("verdict") == "pass");
            if (st.at("name") == "second") CHECK(st.at("cyclic_vacuous") == false);
        }
    }
    SUBCASE("the generator is emitted and verified") {
        RunResult r = run_cli("trivialize " + data("diagonal3.json"));
        CHECK(r.exit_code == 0);
        auto j = nlohmann::json::parse(r.output);
        for (auto& st : j.at("stages"))
            if (st.at("name") == "trivialize") {
                std::string k1 = st.at("k1");
                CHECK(k1.find("log(R1_x)") != std::string::npos);
            }
    }
    SUBCASE("charts are not constructed for n >= 3") {
        std::string tmp = std::string(std::tmpnam(nullptr)) + ".json";
        {
            auto j = nlohmann::json::parse(slurp(data("diagonal3.json")));
            j.erase("chart");
            std::ofstream out(tmp);
            out << j.dump(2);
        }
        RunResult r = run_cli("check " + tmp + " --stage all");
        CHECK(r.exit_code == 2);
        std::remove(tmp.c_str());
    }
}

TEST_CASE("case run synthetic") {
    RunResult r = run_cli("case run synthetic --seed 3 --format summary");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("verdict: pass") != std::string::npos);
}

TEST_CASE("summary format renders stage lines") {
    RunResult r = run_cli("check " + data("waterwave.json") + " --stage second --format summary");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("second: fail") != std::string::npos);
    CHECK(r.output.find("verdict: fail") != std::string::npos);
}

TEST_CASE("reports omit timing by default and include it on request") {
    RunResult without = run_cli("check " + data("waterwave.json") + " --stage hydro");
    CHECK(without.output.find("timing_ms") == std::string::npos);
    RunResult with = run_cli("check " + data("waterwave.json") + " --stage hydro --timing");
    CHECK(with.output.find("timing_ms") != std::string::npos);
}
