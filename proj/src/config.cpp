#include "fafed/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fafed {

namespace {

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"problem",
       {"kind", "n_clients", "dim", "center_spread", "curvature_lo", "curvature_hi",
        "noise_sigma", "samples_per_client", "label_skew", "seed"}},
      {"algorithm",
       {"name", "beta", "rho", "c", "q", "b", "init_batch", "w", "rho_hbar", "eta_mode",
        "eta", "full_batch", "freeze_second_moment", "naive_v0", "beta1", "beta2", "tau",
        "eta_global"}},
      {"run",
       {"total_steps", "seed", "record_every", "x0", "workers", "audit", "record_wall_time",
        "output"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("invalid integer '" + v + "' for key '" + key + "'");
  return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 1) throw ConfigError(key + " must be ≥ 1");
  return static_cast<std::size_t>(n);
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("invalid seed '" + v + "' for key '" + key + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for key '" + key + "'");
}

int to_small_int(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < -1000000000LL || n > 1000000000LL) throw ConfigError(key + " is out of range");
  return static_cast<int>(n);
}

void apply_problem(ProblemConfig& p, const std::string& key, const std::string& v) {
  auto& qd = p.quadratic;
  auto& lg = p.logistic;
  if (key == "kind") {
    p.kind = parse_problem_kind(v);
  } else if (key == "n_clients") {
    qd.n_clients = lg.n_clients = to_count(key, v);
  } else if (key == "dim") {
    qd.dim = lg.dim = to_count(key, v);
  } else if (key == "center_spread") {
    qd.center_spread = to_double(key, v);
  } else if (key == "curvature_lo") {
    qd.curvature_lo = to_double(key, v);
  } else if (key == "curvature_hi") {
    qd.curvature_hi = to_double(key, v);
  } else if (key == "noise_sigma") {
    qd.noise_sigma = to_double(key, v);
  } else if (key == "samples_per_client") {
    qd.samples_per_client = lg.samples_per_client = to_count(key, v);
  } else if (key == "label_skew") {
    lg.label_skew = to_double(key, v);
  } else if (key == "seed") {
    qd.seed = lg.seed = to_seed(key, v);
  }
}

void apply_algorithm(HyperParams& hp, const std::string& key, const std::string& v) {
  if (key == "beta") hp.beta = to_double(key, v);
  else if (key == "rho") hp.rho = to_double(key, v);
  else if (key == "c") hp.c = to_double(key, v);
  else if (key == "q") hp.q = to_small_int(key, v);
  else if (key == "b") hp.b = to_small_int(key, v);
  else if (key == "init_batch") hp.init_batch = to_small_int(key, v);
  else if (key == "w") hp.w = to_double(key, v);
  else if (key == "rho_hbar") hp.rho_hbar = to_double(key, v);
  else if (key == "eta_mode") {
    if (v == "decaying") hp.eta_mode = EtaMode::Decaying;
    else if (v == "constant") hp.eta_mode = EtaMode::Constant;
    else throw ConfigError("eta_mode must be 'decaying' or 'constant', got '" + v + "'");
  } else if (key == "eta") hp.eta = to_double(key, v);
  else if (key == "full_batch") hp.full_batch = to_bool(key, v);
  else if (key == "freeze_second_moment") hp.freeze_second_moment = to_bool(key, v);
  else if (key == "naive_v0") hp.naive_v0 = to_double(key, v);
  else if (key == "beta1") hp.beta1 = to_double(key, v);
  else if (key == "beta2") hp.beta2 = to_double(key, v);
  else if (key == "tau") hp.tau = to_double(key, v);
  else if (key == "eta_global") hp.eta_global = to_double(key, v);
}

void apply_run(ExperimentConfig& cfg, const std::string& key, const std::string& v) {
  RunConfig& run = cfg.run;
  if (key == "total_steps") {
    const long long n = to_int(key, v);
    if (n < 1) throw ConfigError("total_steps must be ≥ 1");
    run.total_steps = n;
  } else if (key == "seed") {
    run.seed = to_seed(key, v);
  } else if (key == "record_every") {
    run.record_every = static_cast<std::int64_t>(to_count(key, v));
  } else if (key == "x0") {
    run.x0_fill = to_double(key, v);
  } else if (key == "workers") {
    run.workers = to_count(key, v);
  } else if (key == "audit") {
    cfg.audit_path = v;
    run.audit = !v.empty();
  } else if (key == "record_wall_time") {
    run.record_wall_time = to_bool(key, v);
  } else if (key == "output") {
    run.output_path = v;
  }
}

}  // namespace

ProblemKind parse_problem_kind(const std::string& name) {
  if (name == "counterexample") return ProblemKind::CounterExample1D;
  if (name == "quadratic") return ProblemKind::HeterogeneousQuadratic;
  if (name == "logistic") return ProblemKind::SyntheticLogistic;
  throw ConfigError("unknown problem kind '" + name +
                    "' (expected counterexample, quadratic or logistic)");
}

std::shared_ptr<const Problem> ProblemConfig::build() const {
  switch (kind) {
    case ProblemKind::CounterExample1D:
      return std::make_shared<const Problem>(make_counterexample());
    case ProblemKind::HeterogeneousQuadratic:
      return std::make_shared<const Problem>(make_quadratic(quadratic));
    case ProblemKind::SyntheticLogistic:
      return std::make_shared<const Problem>(make_logistic(logistic));
  }
  throw ConfigError("unknown problem kind");
}

const std::vector<std::string>& Settings::keys(const std::string& section) {
  const auto it = schema().find(section);
  if (it == schema().end()) throw ConfigError("unknown section [" + section + "]");
  return it->second;
}

void Settings::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto& allowed = keys(section);
  if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
    throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  values_[section + "." + key] = value;
}

bool Settings::has(const std::string& section, const std::string& key) const {
  return values_.count(section + "." + key) != 0;
}

void Settings::load_text(const std::string& text) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      keys(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
    set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Settings::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  load_text(ss.str());
}

ExperimentConfig Settings::build() const {
  ExperimentConfig cfg;
  if (const auto it = values_.find("algorithm.name"); it != values_.end()) {
    try {
      cfg.run.algorithm = parse_algorithm(it->second);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("name: ") + e.what());
    }
  }
  cfg.run.hp = default_hyper_params(cfg.run.algorithm);

  for (const auto& [full, value] : values_) {
    const auto dot = full.find('.');
    const std::string section = full.substr(0, dot);
    const std::string key = full.substr(dot + 1);
    if (section == "problem") apply_problem(cfg.problem, key, value);
    else if (section == "algorithm") apply_algorithm(cfg.run.hp, key, value);
    else apply_run(cfg, key, value);
  }

  if (has("algorithm", "eta") && !has("algorithm", "eta_mode"))
    cfg.run.hp.eta_mode = EtaMode::Constant;

  if (cfg.problem.kind == ProblemKind::CounterExample1D) {
    if (has("problem", "n_clients") && cfg.problem.quadratic.n_clients != 3)
      throw ConfigError("n_clients must be 3 for the counterexample problem");
    if (has("problem", "dim") && cfg.problem.quadratic.dim != 1)
      throw ConfigError("dim must be 1 for the counterexample problem");
  }
  try {
    cfg.run.hp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.run.record_every > cfg.run.total_steps)
    throw ConfigError("record_every must be ≤ total_steps");
  return cfg;
}

}  // namespace fafed
