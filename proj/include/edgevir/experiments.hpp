#pragma once

#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgevir/gaussian.hpp"
#include "edgevir/geometry.hpp"

namespace edgevir {

enum class Model { pip, semion, oracle };

enum class ExperimentKind {
    axioms,
    full_boundary_axioms,
    modular_commutator,
    fixed_point,
    fidelity_flow,
    virasoro_commutators,
    double_commutators,
    variance_alpha,
    improvement,
    semion_suite,
    oracle_suite,
};

std::string to_string(ExperimentKind kind);
std::string to_string(Model model);
ExperimentKind experiment_from_string(const std::string& name);
std::vector<std::string> experiment_names();

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct MemoryGuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Any subset of the bounds; rel_dev is the record's deviation, abs_dev = |measured - predicted|.
struct Threshold {
    std::optional<double> max_rel_dev;
    std::optional<double> max_abs_dev;
    std::optional<double> min_measured;
    std::optional<double> max_measured;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::virasoro_commutators;
    Model model = Model::pip;
    LatticeGeometry lattice{120, 16};
    // Tried in order when the main lattice cannot host a mode (4n must divide Lx).
    std::vector<LatticeGeometry> fallback_lattices;
    BdGParams bdg;
    std::string preset;
    nlohmann::json preset_params = nlohmann::json::object();
    L0Params l0;
    std::vector<int> ells;
    std::vector<int> modes;
    std::vector<std::array<int, 3>> triples;
    std::vector<double> times;
    double bad_time = 0.5;    // fidelity_flow: probe time of the bad generators
    std::vector<int> tests;   // fidelity_flow: 1 and/or 2
    std::vector<int> legs;    // semion_suite: 2 and/or 3
    int edge_rows = 5;
    int steps = 1;
    int instances = 60;
    unsigned seed = 1;
    double fit_min = 1e-7;    // residuals below this are left out of decay fits
    double memory_limit_gb = 0;  // 0: 80% of physical memory
    bool record_runtime = false;
    std::map<std::string, Threshold> thresholds;  // keyed by "quantity" or "quantity@param"
    std::string out = "results";
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig default_config(ExperimentKind kind, bool paper_scale = false);

// Throws ConfigError for unsupported combinations; otherwise returns the resolved geometry.
nlohmann::json validate(const ExperimentConfig& cfg);

struct PredictionRecord {
    std::string experiment;
    std::string quantity;
    std::string param;
    double ell_or_n = 0;
    double measured = 0;
    double predicted = 0;  // NaN when there is no prediction
    std::string source;    // cft_oracle, virasoro_algebra, cft_formula, reference_table, exactdiag, lattice, exact, none
    double rel_dev = 0;
    double runtime_s = 0;
    std::optional<bool> passed;
};

// |m - p| / |p|, or |m - p| when p = 0; NaN without a prediction.
double deviation(double measured, double predicted);

struct RunResult {
    std::vector<PredictionRecord> records;
    std::vector<std::pair<std::string, double>> cell_times;
    double wall_time_s = 0;
    bool all_passed = true;
};

RunResult run(const ExperimentConfig& cfg, int workers = 1);
// run() plus results.csv and manifest.json in out_dir.
RunResult run_and_write(const ExperimentConfig& cfg, const std::string& out_dir, int workers = 1);

void write_results_csv(std::ostream& os, const std::vector<PredictionRecord>& records, bool with_runtime);
nlohmann::json run_manifest(const ExperimentConfig& cfg, const RunResult& result, int workers);

struct ExponentialFit {
    double rate = 0;
    double r2 = 0;
};
struct PowerLawFit {
    double exponent = 0;
    double r2 = 0;
};
// ln y = a - rate x.
ExponentialFit fit_exponential(const std::vector<std::pair<double, double>>& series);
// ln y = a + exponent ln x.
PowerLawFit fit_powerlaw(const std::vector<std::pair<double, double>>& series);

double extract_ctot(double expectation, double eta);

// Preset names accepted by the runner, including the ladder presets.
std::vector<std::string> runner_presets();

}  // namespace edgevir
