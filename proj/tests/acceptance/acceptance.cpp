// One pass/fail line per acceptance criterion. `--criterion k` runs a single
// one (ctest registers each separately); the exit status is nonzero on a miss.

#include "droopcert/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

using namespace droopcert;

namespace {

const char* kTitles[] = {
    "",
    "certificate reproduction",
    "certificate soundness",
    "jacobian correctness",
    "trajectory contraction",
    "autonomous tube",
    "slow-tracking bound",
    "composite bound",
    "heterogeneity sweep",
    "comparison-ODE exactness",
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> criteria;
    ReproduceOptions opts;
    opts.write_files = false;
    std::string out_dir;
    app.add_option("--criterion", criteria, "criterion number(s), default all")->check(CLI::Range(1, 9));
    app.add_option("--scenarios", opts.scenario_dir, "scenario directory")->check(CLI::ExistingDirectory);
    app.add_option("--out-dir", out_dir, "also write the figure CSVs here");
    app.add_option("--jobs", opts.jobs, "worker threads");
    CLI11_PARSE(app, argc, argv);
    if (!out_dir.empty()) {
        opts.out_dir = out_dir;
        opts.write_files = true;
    }
    if (criteria.empty())
        for (int k = 1; k <= 9; ++k) criteria.push_back(k);

    Reproduction repro(opts);
    int failed = 0;
    for (int k : criteria) {
        std::vector<Verdict> vs;
        std::string error;
        try {
            vs = repro.criterion(k);
        } catch (const std::exception& e) {
            error = e.what();
        }
        bool ok = error.empty() && !vs.empty();
        std::string line;
        for (const auto& v : vs) {
            ok = ok && v.passed;
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s%s=%.6g%s", line.empty() ? "" : "; ", v.id.c_str(), v.value,
                          v.passed ? "" : " [miss]");
            line += buf;
        }
        if (!error.empty()) line = "error: " + error;
        std::printf("AC%d %s %s | %s\n", k, ok ? "PASS" : "FAIL", kTitles[k], line.c_str());
        if (!ok) {
            ++failed;
            for (const auto& v : vs)
                if (!v.passed)
                    std::printf("    %s: value %.10g, check %s. %s\n", v.id.c_str(), v.value, v.check.c_str(),
                                v.detail.c_str());
        }
    }
    std::fflush(stdout);
    return failed == 0 ? 0 : 1;
}
