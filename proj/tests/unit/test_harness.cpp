#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "droopcert/harness.hpp"
#include "support.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace droopcert;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("droopcert_test_" + name);
    fs::remove_all(p);
    return p;
}

const Verdict& find(const RunReport& r, const std::string& id) {
    for (const auto& v : r.verdicts)
        if (v.id == id) return v;
    throw std::runtime_error("missing verdict " + id);
}

}  // namespace

TEST_CASE("oracle suite on case_3bus") {
    const auto& sc = case3();
    OracleOptions o;
    o.n_states = 1000;
    o.seed = 42;
    const auto rep = run_oracles(sc, o);
    REQUIRE(rep.verdicts.size() == 6);
    const char* order[] = {"fd_jacobian", "kernel_invariance", "basis_invariance",
                           "blockwise_dominance", "certificate_dominance", "decomposition_identity"};
    for (int k = 0; k < 6; ++k) {
        CHECK(rep.verdicts[k].id == order[k]);
        CHECK_MESSAGE(rep.verdicts[k].passed, rep.verdicts[k].id << ": " << rep.verdicts[k].detail);
        CHECK_FALSE(rep.verdicts[k].check.empty());
    }
    CHECK(rep.ok());
    CHECK(find(rep, "certificate_dominance").value > 0.0);

    // the certificate can be reused
    o.certificate = certify_scenario(sc, 1);
    o.n_states = 50;
    CHECK(run_oracles(sc, o).ok());
}

TEST_CASE("a corrupted Jacobian entry is caught and named") {
    const auto& sc = case3();
    const auto dir = scratch("fault");
    OracleOptions o;
    o.n_states = 20;
    o.out_dir = dir.string();
    o.certificate = certify_scenario(sc, 1);
    o.jacobian_override = [&](const SystemState& x) {
        auto j = jacobian(sc.net, sc.params, x);
        j.j_tv(0, 1) += 1e-3;
        return j;
    };
    const auto rep = run_oracles(sc, o);
    const auto& fd = find(rep, "fd_jacobian");
    CHECK_FALSE(fd.passed);
    CHECK(fd.detail.find("(theta,V)") != std::string::npos);
    CHECK_FALSE(rep.ok());
    REQUIRE(fs::exists(dir / "oracle_failure_fd_jacobian.json"));
    const auto j = nlohmann::json::parse(slurp(dir / "oracle_failure_fd_jacobian.json"));
    CHECK(j["theta"].size() == 3);
    CHECK(j["oracle"] == "fd_jacobian");
}

TEST_CASE("no states means no sampling") {
    OracleOptions o;
    o.n_states = 0;
    const auto rep = run_oracles(case3(), o);
    REQUIRE(rep.verdicts.size() == 6);
    for (const auto& v : rep.verdicts) CHECK(v.detail == "no sampling performed");
}

TEST_CASE("output directory precedence") {
    ::unsetenv("DROOPCERT_OUT_DIR");
    CHECK(resolve_out_dir(std::nullopt) == "out");
    ::setenv("DROOPCERT_OUT_DIR", "/tmp/from_env", 1);
    CHECK(resolve_out_dir(std::nullopt) == "/tmp/from_env");
    CHECK(resolve_out_dir(std::string("flag")) == "flag");
    ::unsetenv("DROOPCERT_OUT_DIR");
}

TEST_CASE("csv formatting") {
    const auto dir = scratch("csv");
    {
        CsvWriter w((dir / "a.csv").string(), {"x", "y", "z"});
        w.row({0.1, std::nan(""), -std::numeric_limits<double>::infinity()});
        w.row({1.0 / 3.0, 1e-20, 12345678.0});
        CHECK_THROWS(w.row({1.0}));
    }
    CHECK(slurp(dir / "a.csv") == "x,y,z\n0.1,nan,-inf\n0.333333333333,1e-20,12345678\n");
}

TEST_CASE("report json carries tolerances and version") {
    RunReport r;
    r.scenario = "s";
    Verdict v;
    v.id = "a";
    v.passed = true;
    v.tolerance = 1e-8;
    v.check = "<= 1e-8";
    r.verdicts.push_back(v);
    const auto j = r.to_json();
    CHECK(j["passed"] == true);
    CHECK(j["verdicts"][0]["tolerance"] == 1e-8);
    CHECK(j["version"].get<std::string>().find(kVersion) != std::string::npos);
}

TEST_CASE("figure csv output is byte-identical across runs and job counts") {
    const auto a = scratch("repro_a");
    const auto b = scratch("repro_b");
    ReproduceOptions oa;
    oa.scenario_dir = DROOPCERT_SCENARIO_DIR;
    oa.out_dir = a.string();
    ReproduceOptions ob = oa;
    ob.out_dir = b.string();
    ob.jobs = 2;
    Reproduction ra(oa);
    Reproduction rb(ob);
    const auto va = ra.criterion(8);
    const auto vb = rb.criterion(8);
    REQUIRE(fs::exists(a / "fig3_heterogeneity.csv"));
    CHECK(slurp(a / "fig3_heterogeneity.csv") == slurp(b / "fig3_heterogeneity.csv"));
    for (std::size_t k = 0; k < va.size(); ++k) CHECK(va[k].value == vb[k].value);
}

TEST_CASE("criterion index is validated") {
    ReproduceOptions o;
    o.write_files = false;
    Reproduction r(o);
    CHECK_THROWS_AS(r.criterion(10), std::out_of_range);
    const auto v = r.criterion(9);
    REQUIRE(v.size() == 1);
    CHECK(v[0].passed);
}
