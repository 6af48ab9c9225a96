#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lqrtune/auto_tuner.hpp"

namespace lqrtune {

/// Bad preset name, malformed config file or invalid parameter value.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Named experiment setup: which pole is simulated, which pole the nominal
/// model comes from, and the search settings that go with it.
struct ExperimentPreset {
  std::string name;
  TunerConfig config;
};

/// good2d: short pole simulated and modeled. poor2d / poor4d: long pole
/// simulated, short-pole nominal model.
ExperimentPreset make_preset(std::string_view name);
std::vector<std::string> preset_names();

HyperPriors priors_2d();
HyperPriors priors_4d();

/// Q = diag(1, 100, 10, 200), R = 10.
WeightPair performance_weights();

/// Resolved configuration, every key written out.
nlohmann::json config_to_json(const TunerConfig& config, std::string_view preset);

/// Applies the keys present in `j` on top of `base`. A "preset" key selects
/// the base instead. Unknown keys are rejected.
TunerConfig config_from_json(const nlohmann::json& j, TunerConfig base);
/// Preset named in the JSON (or `fallback`) with the file's keys applied.
/// With `force_preset` the file's "preset" key is ignored.
ExperimentPreset load_config_file(const std::string& path, std::string_view fallback_preset,
                                  bool force_preset = false);

nlohmann::json surrogate_to_json(const Hyperparams& hyper, const Dataset& data, const Box& domain);
nlohmann::json trace_to_json(const AcquisitionTrace& trace);

/// `iter,theta1..D,j_hat,stable,bg_theta1..D,bg_mean,lambda1..D,sigma,sigma_n,wall_ms`
void write_history_header(std::ostream& out, int dim);
void write_history_row(std::ostream& out, const IterationRecord& rec, int dim);

/// Parses "a,b,c" into a vector.
Eigen::VectorXd parse_vector(const std::string& text);

}  // namespace lqrtune
