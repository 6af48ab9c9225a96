#include "lqrtune/presets.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace lqrtune {

using nlohmann::json;

HyperPriors priors_2d() { return {{2.5, 0.11}, {0.2, 0.02}, {0.033, 0.0033}}; }
HyperPriors priors_4d() { return {{2.0, 0.63}, {0.75, 0.075}, {0.033, 0.010}}; }

WeightPair performance_weights() {
  return {Eigen::Vector4d(1.0, 100.0, 10.0, 200.0).asDiagonal().toDenseMatrix(),
          Eigen::MatrixXd::Constant(1, 1, 10.0)};
}

std::vector<std::string> preset_names() { return {"good2d", "poor2d", "poor4d", "custom"}; }

ExperimentPreset make_preset(std::string_view name) {
  TunerConfig c;
  c.nominal = PoleParams::short_pole();
  c.performance = performance_weights();
  c.Fz = 0.3;
  c.seed = 0;

  if (name == "good2d" || name == "poor2d" || name == "custom") {
    c.design_map = DesignWeightMap::two_d();
    c.theta0 = Eigen::Vector2d(2.0, 4.0);
    c.priors = priors_2d();
    c.episode.j_unstable = 3.0;
    c.init_corner_evals = true;
    c.representers = 400;
    c.n_iterations = 20;
    c.plant = name == "poor2d" ? PoleParams::long_pole() : PoleParams::short_pole();
  } else if (name == "poor4d") {
    c.design_map = DesignWeightMap::four_d();
    c.theta0 = Eigen::Vector4d(1.0, 4.0, 1.0, 8.0);
    c.priors = priors_4d();
    c.episode.j_unstable = 5.0;
    c.init_corner_evals = false;
    c.representers = 1000;
    c.n_iterations = 46;
    c.plant = PoleParams::long_pole();
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  if (name == "custom") c.design_map.kind = DesignWeightMap::Kind::Custom;
  return {std::string(name), std::move(c)};
}

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_vec(const json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(std::string(key) + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(key) + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json pole_json(const PoleParams& p) { return {{"m", p.m}, {"r", p.r}, {"xi", p.xi}, {"g", p.g}}; }

void read_pole(const json& j, PoleParams& p, const std::string& where) {
  check_keys(j, {"m", "r", "xi", "g"}, where);
  read(j, "m", p.m);
  read(j, "r", p.r);
  read(j, "xi", p.xi);
  read(j, "g", p.g);
}

json prior_json(const GammaPrior& p) { return {{"mean", p.mean}, {"std", p.std}}; }

void read_prior(const json& j, GammaPrior& p, const std::string& where) {
  check_keys(j, {"mean", "std"}, where);
  read(j, "mean", p.mean);
  read(j, "std", p.std);
}

}  // namespace

json config_to_json(const TunerConfig& c, std::string_view preset) {
  const auto& m = c.design_map;
  json j;
  j["preset"] = std::string(preset);
  j["design_map"] = {{"kind", to_string(m.kind)},
                     {"offset", vec(m.offset)},
                     {"coeff", vec(m.coeff)},
                     {"index", std::vector<int>(m.index.data(), m.index.data() + 4)},
                     {"wu", m.wu},
                     {"lower", vec(m.domain.lower)},
                     {"upper", vec(m.domain.upper)}};
  j["theta0"] = vec(c.theta0);
  j["iterations"] = c.n_iterations;
  j["init_corner_evals"] = c.init_corner_evals;
  j["priors"] = {{"lengthscale", prior_json(c.priors.lengthscale)},
                 {"signal_std", prior_json(c.priors.signal_std)},
                 {"noise_std", prior_json(c.priors.noise_std)}};
  j["plant"] = pole_json(c.plant);
  j["nominal"] = pole_json(c.nominal);
  j["performance"] = {{"Q_diag", vec(c.performance.Wx.diagonal())}, {"R", c.performance.Wu(0, 0)}};
  j["Fz"] = c.Fz;
  j["episode"] = {{"dt", c.episode.dt},
                  {"horizon_s", c.episode.horizon_s},
                  {"burn_in_s", c.episode.burn_in_s},
                  {"psi0_range", c.episode.psi0_range},
                  {"noise_psi", c.episode.noise_psi},
                  {"noise_psi_dot", c.episode.noise_psi_dot},
                  {"j_unstable", c.episode.j_unstable}};
  j["safety"] = {{"s_max", c.limits.s_max}, {"u_max", c.limits.u_max}, {"psi_max", c.limits.psi_max}};
  j["search"] = {{"representers", c.representers},
                 {"mc_samples", c.mc_samples},
                 {"quadrature_order", c.quadrature_order},
                 {"extra_candidates", c.extra_candidates},
                 {"fit_restarts", c.fit.restarts},
                 {"fit_max_iterations", c.fit.max_iterations}};
  j["seed"] = c.seed;
  j["record_wall_time"] = c.record_wall_time;
  return j;
}

TunerConfig config_from_json(const json& j, TunerConfig c) {
  check_keys(j, {"preset", "design_map", "theta0", "iterations", "init_corner_evals", "priors", "plant",
                 "nominal", "performance", "Fz", "episode", "safety", "search", "seed", "record_wall_time"},
             "config");
  if (j.contains("design_map")) {
    const json& d = j["design_map"];
    check_keys(d, {"kind", "offset", "coeff", "index", "wu", "lower", "upper"}, "design_map");
    auto& m = c.design_map;
    if (d.contains("kind")) {
      const auto kind = d["kind"].get<std::string>();
      if (kind == "2d") m = DesignWeightMap::two_d();
      else if (kind == "4d") m = DesignWeightMap::four_d();
      else if (kind == "custom") m.kind = DesignWeightMap::Kind::Custom;
      else throw ConfigError("design_map.kind must be 2d, 4d or custom");
    }
    const auto read4 = [&](const char* key, auto& target) {
      if (!d.contains(key)) return;
      const Eigen::VectorXd v = to_vec(d[key], key);
      if (v.size() != 4) throw ConfigError(std::string("design_map.") + key + " needs 4 entries");
      for (int i = 0; i < 4; ++i) {
        const auto value = static_cast<std::decay_t<decltype(target[0])>>(v[i]);
        if (target[i] != value) m.kind = DesignWeightMap::Kind::Custom;
        target[i] = value;
      }
    };
    read4("offset", m.offset);
    read4("coeff", m.coeff);
    read4("index", m.index);
    read(d, "wu", m.wu);
    for (const char* key : {"lower", "upper"}) {
      if (!d.contains(key)) continue;
      Eigen::VectorXd& bound = key[0] == 'l' ? m.domain.lower : m.domain.upper;
      const Eigen::VectorXd v = to_vec(d[key], key);
      if (v.size() != bound.size() || v != bound) m.kind = DesignWeightMap::Kind::Custom;
      bound = v;
    }
  }
  if (j.contains("theta0")) c.theta0 = to_vec(j["theta0"], "theta0");
  read(j, "iterations", c.n_iterations);
  read(j, "init_corner_evals", c.init_corner_evals);
  if (j.contains("priors")) {
    const json& p = j["priors"];
    check_keys(p, {"lengthscale", "signal_std", "noise_std"}, "priors");
    if (p.contains("lengthscale")) read_prior(p["lengthscale"], c.priors.lengthscale, "priors.lengthscale");
    if (p.contains("signal_std")) read_prior(p["signal_std"], c.priors.signal_std, "priors.signal_std");
    if (p.contains("noise_std")) read_prior(p["noise_std"], c.priors.noise_std, "priors.noise_std");
  }
  if (j.contains("plant")) read_pole(j["plant"], c.plant, "plant");
  if (j.contains("nominal")) read_pole(j["nominal"], c.nominal, "nominal");
  if (j.contains("performance")) {
    const json& p = j["performance"];
    check_keys(p, {"Q_diag", "R"}, "performance");
    if (p.contains("Q_diag")) {
      const Eigen::VectorXd q = to_vec(p["Q_diag"], "Q_diag");
      if (q.size() != 4) throw ConfigError("performance.Q_diag needs 4 entries");
      c.performance.Wx = q.asDiagonal().toDenseMatrix();
    }
    if (p.contains("R")) c.performance.Wu = Eigen::MatrixXd::Constant(1, 1, p["R"].get<double>());
  }
  read(j, "Fz", c.Fz);
  if (j.contains("episode")) {
    const json& e = j["episode"];
    check_keys(e, {"dt", "horizon_s", "burn_in_s", "psi0_range", "noise_psi", "noise_psi_dot", "j_unstable"},
               "episode");
    read(e, "dt", c.episode.dt);
    read(e, "horizon_s", c.episode.horizon_s);
    read(e, "burn_in_s", c.episode.burn_in_s);
    read(e, "psi0_range", c.episode.psi0_range);
    read(e, "noise_psi", c.episode.noise_psi);
    read(e, "noise_psi_dot", c.episode.noise_psi_dot);
    read(e, "j_unstable", c.episode.j_unstable);
  }
  if (j.contains("safety")) {
    const json& s = j["safety"];
    check_keys(s, {"s_max", "u_max", "psi_max"}, "safety");
    read(s, "s_max", c.limits.s_max);
    read(s, "u_max", c.limits.u_max);
    read(s, "psi_max", c.limits.psi_max);
  }
  if (j.contains("search")) {
    const json& s = j["search"];
    check_keys(s, {"representers", "mc_samples", "quadrature_order", "extra_candidates", "fit_restarts",
                   "fit_max_iterations"},
               "search");
    read(s, "representers", c.representers);
    read(s, "mc_samples", c.mc_samples);
    read(s, "quadrature_order", c.quadrature_order);
    read(s, "extra_candidates", c.extra_candidates);
    read(s, "fit_restarts", c.fit.restarts);
    read(s, "fit_max_iterations", c.fit.max_iterations);
  }
  read(j, "seed", c.seed);
  read(j, "record_wall_time", c.record_wall_time);
  return c;
}

ExperimentPreset load_config_file(const std::string& path, std::string_view fallback_preset, bool force_preset) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  const std::string preset = force_preset ? std::string(fallback_preset) : j.value("preset", std::string(fallback_preset));
  j.erase("preset");
  ExperimentPreset p = make_preset(preset);
  p.config = config_from_json(j, std::move(p.config));
  return p;
}

json surrogate_to_json(const Hyperparams& hyper, const Dataset& data, const Box& domain) {
  json locations = json::array();
  for (int i = 0; i < data.size(); ++i) locations.push_back(vec(data.X.row(i).transpose()));
  return {{"hyperparameters",
           {{"lengthscales", vec(hyper.lengthscales)},
            {"signal_std", hyper.signal_std},
            {"noise_std", hyper.noise_std}}},
          {"dataset", {{"locations", locations}, {"values", vec(data.y)}}},
          {"domain", {{"lower", vec(domain.lower)}, {"upper", vec(domain.upper)}}}};
}

json trace_to_json(const AcquisitionTrace& t) {
  json candidates = json::array();
  for (Eigen::Index i = 0; i < t.candidates.rows(); ++i) candidates.push_back(vec(t.candidates.row(i).transpose()));
  json reps = json::array();
  for (Eigen::Index i = 0; i < t.representers.rows(); ++i) reps.push_back(vec(t.representers.row(i).transpose()));
  return {{"iteration", t.iteration},
          {"candidates", candidates},
          {"gains", vec(t.gains)},
          {"representers", reps},
          {"pmin", vec(t.pmin)},
          {"best_guess", vec(t.best_guess)}};
}

void write_history_header(std::ostream& out, int dim) {
  out << "iter";
  for (int j = 1; j <= dim; ++j) out << ",theta" << j;
  out << ",j_hat,stable";
  for (int j = 1; j <= dim; ++j) out << ",bg_theta" << j;
  out << ",bg_mean";
  for (int j = 1; j <= dim; ++j) out << ",lambda" << j;
  out << ",sigma,sigma_n,wall_ms\n";
}

void write_history_row(std::ostream& out, const IterationRecord& rec, int dim) {
  std::ostringstream row;
  row << std::setprecision(12);
  row << rec.index;
  for (int j = 0; j < dim; ++j) row << ',' << rec.theta[j];
  row << ',' << rec.j_hat << ',' << (rec.stable ? 1 : 0);
  for (int j = 0; j < dim; ++j) {
    row << ',';
    if (rec.best_guess) row << (*rec.best_guess)[j];
  }
  row << ',';
  if (rec.best_guess_mean) row << *rec.best_guess_mean;
  for (int j = 0; j < dim; ++j) row << ',' << rec.hyper.lengthscales[j];
  row << ',' << rec.hyper.signal_std << ',' << rec.hyper.noise_std;
  row << ',' << std::fixed << std::setprecision(3) << rec.wall_ms << '\n';
  out << row.str();
}

Eigen::VectorXd parse_vector(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse number '" + item + "' in '" + text + "'");
    }
  }
  if (values.empty()) throw ConfigError("empty vector '" + text + "'");
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace lqrtune
