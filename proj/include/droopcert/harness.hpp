#pragma once

#include "droopcert/certify.hpp"
#include "droopcert/pipelines.hpp"
#include "droopcert/scenario.hpp"
#include "droopcert/tubes.hpp"

#include <json.hpp>

#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace droopcert {

inline constexpr const char* kVersion = "0.1.0";

/// One checked quantity. `check` spells out the comparison and tolerance.
struct Verdict {
    std::string id;
    std::string name;
    bool passed = false;
    double value = 0.0;
    double reference = 0.0;
    double tolerance = 0.0;
    std::string check;
    std::string detail;
};

struct RunReport {
    std::string scenario;
    std::string kind;
    nlohmann::json certificate;
    nlohmann::json tubes = nlohmann::json::array();
    nlohmann::json extra = nlohmann::json::object();
    std::vector<Verdict> verdicts;
    std::vector<std::string> files;
    std::string version = kVersion;
    std::string timestamp;

    bool ok() const;
    nlohmann::json to_json() const;
};

nlohmann::json to_json(const SystemState& x);
nlohmann::json to_json(const ContractionCertificate& c);
nlohmann::json to_json(const TubeCertificate& t);
nlohmann::json to_json(const SensitivityEstimate& h);
nlohmann::json to_json(const LipschitzEstimate& l);
nlohmann::json to_json(const Verdict& v);

void write_json(const std::string& path, const nlohmann::json& j);
std::string timestamp_utc();

/// --out-dir flag, else the DROOPCERT_OUT_DIR environment variable, else "out".
std::string resolve_out_dir(const std::optional<std::string>& flag);

/// Fixed-format CSV writer (byte-identical output for identical values).
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<double>& values);
    void row(const std::string& label, const std::vector<double>& values);

private:
    std::FILE* f_ = nullptr;
    std::size_t columns_ = 0;
};

using JacobianFn = std::function<JacobianBlocks(const SystemState&)>;

struct FdCheck {
    double worst_relative = 0.0;   // max |J - J_fd| / max|J_fd| over states
    std::string worst_block;       // "(theta,theta)", "(theta,V)", ...
    SystemState worst_state;
    double worst_kernel = 0.0;     // max |J [1; 0]|_inf
    SystemState worst_kernel_state;
    std::size_t states = 0;
};

/// Central finite differences of the vector field (step 1e-6) against `jac`.
FdCheck finite_difference_check(const NetworkModel& net, const DroopParams& params,
                                 const std::vector<SystemState>& states, const JacobianFn& jac,
                                 double step = 1e-6);

struct DominanceCheck {
    std::size_t states = 0;
    double worst_tt = -1e300;       // max lambda_max(S_tt) + c_theta
    double worst_vv = -1e300;       // max lambda_max(S_vv) + c_V
    double worst_tv = -1e300;       // max |S_tv| - beta
    double worst_measure = -1e300;  // max lambda_max(S)
    double worst_mc = -1e300;       // max lambda_max(S) - lambda_max(M_c)
    SystemState worst_measure_state;
};

DominanceCheck dominance_check(const NetworkModel& net, const DroopParams& params,
                               const ContractionCertificate& cert,
                               const std::vector<SystemState>& states, std::size_t jobs,
                               const JacobianFn& jac);

struct OracleOptions {
    std::size_t n_states = 1000;
    std::uint64_t seed = 42;
    std::size_t jobs = 1;
    JacobianFn jacobian_override;          // fault injection
    std::optional<ContractionCertificate> certificate;  // reuse instead of recomputing
    std::string out_dir;                   // failing states are written here when set
};

/// Finite-difference Jacobian, kernel invariance, basis invariance, blockwise
/// and certificate dominance, decomposition identity, in that order.
RunReport run_oracles(const Scenario& sc, const OracleOptions& opts);

struct ReproduceOptions {
    std::string scenario_dir = "scenarios";
    std::string out_dir = "out";
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
    bool write_files = true;
};

/// Acceptance criteria on the shipped case studies. Each method returns its
/// verdicts and, when files are enabled, writes the figure CSV it feeds.
class Reproduction {
public:
    explicit Reproduction(ReproduceOptions opts);

    std::vector<Verdict> certificate_rate();        // 1
    std::vector<Verdict> certificate_soundness();   // 2
    std::vector<Verdict> jacobian_correctness();    // 3
    std::vector<Verdict> trajectory_contraction();  // 4
    std::vector<Verdict> autonomous_tube();         // 5
    std::vector<Verdict> slow_tracking();           // 6
    std::vector<Verdict> composite_bound();         // 7
    std::vector<Verdict> heterogeneity_sweep();     // 8
    std::vector<Verdict> comparison_exactness();    // 9

    std::vector<Verdict> criterion(int k);
    RunReport run_all();

    const std::vector<std::string>& files() const { return files_; }

private:
    const Scenario& scenario(const std::string& name);
    const ContractionCertificate& cert();
    double cert_seconds();
    const AutonomousRun& autonomous();
    RunOptions run_options() const;
    std::string path(const std::string& file);

    ReproduceOptions opts_;
    std::map<std::string, Scenario> scenarios_;
    std::optional<ContractionCertificate> cert_;
    double cert_seconds_ = 0.0;
    std::optional<AutonomousRun> auto_;
    std::vector<std::string> files_;
    nlohmann::json extra_ = nlohmann::json::object();
    nlohmann::json tubes_ = nlohmann::json::array();
};

RunReport reproduce(const ReproduceOptions& opts);

}  // namespace droopcert
