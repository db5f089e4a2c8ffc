#include "coupled_is/experiments.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#ifndef COUPLED_IS_VERSION
#define COUPLED_IS_VERSION "unknown"
#endif

using json = nlohmann::ordered_json;
using namespace coupled_is;
namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    json doc = json::parse(text);
    if (!doc.is_object()) throw ConfigError(path + ": top level must be an object");
    return doc;
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

// Reads fields from one JSON object, remembering which were consumed.
class Fields {
 public:
  Fields(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("field '" + where_ + key + "': " + e.what());
    }
  }

  const json* object(const char* key) {
    seen_.insert(key);
    if (!doc_.contains(key)) return nullptr;
    if (!doc_.at(key).is_object()) throw ConfigError("field '" + where_ + key + "' must be an object");
    return &doc_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : doc_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown field '" + where_ + k + "'");
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename T>
void require(bool ok, const char* field, const T& value, const char* what) {
  if (!ok) {
    std::ostringstream o;
    o << "field '" << field << "' = " << value << ": " << what;
    throw ConfigError(o.str());
  }
}

void read_adapt(const json* doc, AdaptConfig& c, const std::string& where) {
  if (doc == nullptr) return;
  Fields f(*doc, where);
  f.get("iterations", c.iterations);
  f.get("batch", c.batch);
  f.get("lr_start", c.lr_start);
  f.get("lr_end", c.lr_end);
  std::string gradient = c.gradient == GradientKind::kScore ? "score" : "pathwise";
  f.get("gradient", gradient);
  if (gradient != "pathwise" && gradient != "score") {
    throw ConfigError("field '" + where + "gradient' must be \"pathwise\" or \"score\"");
  }
  c.gradient = gradient == "score" ? GradientKind::kScore : GradientKind::kPathwise;
  f.get("amsgrad", c.amsgrad);
  f.get("start_v", c.start_v);
  f.get("selection_samples", c.selection_samples);
  f.get("smoothing_window", c.smoothing_window);
  f.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json adapt_json(const AdaptConfig& c) {
  return {{"iterations", c.iterations},
          {"batch", c.batch},
          {"lr_start", c.lr_start},
          {"lr_end", c.lr_end},
          {"gradient", c.gradient == GradientKind::kScore ? "score" : "pathwise"},
          {"amsgrad", c.amsgrad},
          {"start_v", c.start_v},
          {"selection_samples", c.selection_samples},
          {"smoothing_window", c.smoothing_window}};
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
};

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& header) : out_(path), path_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out_ << header << '\n' << std::setprecision(17);
  }
  template <typename... Ts>
  void row(const Ts&... values) {
    std::size_t k = 0;
    ((out_ << (k++ ? "," : "") << values), ...);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  fs::path path_;
};

void write_manifest(const fs::path& dir, const std::string& experiment, std::uint64_t seed, const json& config,
                    const std::vector<std::string>& outputs, json extra) {
  json m;
  m["experiment"] = experiment;
  m["version"] = COUPLED_IS_VERSION;
  m["seed"] = seed;
  m["config"] = config;
  m["config_hash"] = hex(fnv1a(config.dump()));
  m["outputs"] = outputs;
  for (auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream out(dir / (experiment + "_manifest.json"));
  out << std::setw(2) << m << '\n';
}

// ---------------------------------------------------------------------------

int run_landscape(const json& doc, const Overrides& ov, const fs::path& out) {
  LandscapeConfig c;
  Fields f(doc, "");
  std::string experiment;
  f.get("experiment", experiment);
  f.get("preset", c.preset);
  f.get("n_data", c.n_data);
  f.get("sigma2", c.sigma2);
  f.get("proposal_scale", c.proposal_scale);
  f.get("grid", c.grid);
  f.get("uv_draws", c.uv_draws);
  f.get("seed", c.seed);
  f.finish();
  if (ov.seed) c.seed = *ov.seed;
  if (ov.replications) c.uv_draws = *ov.replications;
  require(c.sigma2 > 0.0, "sigma2", c.sigma2, "must be > 0");
  for (double s : c.grid) require(std::abs(s) <= 1.0, "grid", s, "singular values must lie in [-1, 1]");

  const auto rows = run_landscape(c);
  CsvWriter csv(out / "blr_landscape.csv", "sigma1,sigma2,uv_seed,chi2_num,chi2_den,c_term,rel_asym_var");
  for (const auto& r : rows) {
    csv.row(r.sigma1, r.sigma2, r.uv_seed, r.report.chi2_num, r.report.chi2_den, r.report.c_term,
            r.report.relative_asym_var);
  }
  const json cfg{{"preset", c.preset},         {"n_data", c.n_data}, {"sigma2", c.sigma2},
                 {"proposal_scale", c.proposal_scale}, {"grid", c.grid},     {"uv_draws", c.uv_draws}};
  write_manifest(out, "blr_landscape", c.seed, cfg, {"blr_landscape.csv"}, json::object());
  return 0;
}

int run_consistency(const json& doc, const Overrides& ov, const fs::path& out) {
  ConsistencyConfig c;
  Fields f(doc, "");
  std::string experiment;
  f.get("experiment", experiment);
  f.get("dim", c.dim);
  f.get("n_data", c.n_data);
  f.get("sigma2", c.sigma2);
  f.get("proposal_scale", c.proposal_scale);
  f.get("proposal_shift", c.proposal_shift);
  f.get("sample_sizes", c.sample_sizes);
  f.get("replications", c.replications);
  f.get("seed", c.seed);
  f.finish();
  if (ov.seed) c.seed = *ov.seed;
  if (ov.replications) c.replications = *ov.replications;
  require(c.dim >= 1, "dim", c.dim, "must be >= 1");
  require(c.replications >= 1, "replications", c.replications, "must be >= 1");
  require(c.proposal_scale > 0.0, "proposal_scale", c.proposal_scale, "must be > 0");
  for (auto n : c.sample_sizes) require(n >= 1, "sample_sizes", n, "must be >= 1");

  const auto rows = run_consistency(c);
  CsvWriter csv(out / "blr_consistency.csv", "estimator,n,replication,estimate,std_err,truth");
  for (const auto& r : rows) csv.row(r.estimator, r.n, r.replication, r.estimate, r.std_err, r.truth);
  const json cfg{{"dim", c.dim},
                 {"n_data", c.n_data},
                 {"sigma2", c.sigma2},
                 {"proposal_scale", c.proposal_scale},
                 {"proposal_shift", c.proposal_shift},
                 {"sample_sizes", c.sample_sizes},
                 {"replications", c.replications}};
  write_manifest(out, "blr_consistency", c.seed, cfg, {"blr_consistency.csv"},
                 {{"truth", rows.empty() ? 0.0 : rows.front().truth}, {"truth_exact", true}});
  return 0;
}

LogregConfig read_logreg(const json& doc, const Overrides& ov) {
  LogregConfig c;
  Fields f(doc, "");
  std::string experiment;
  f.get("experiment", experiment);
  bool full_size = false;
  f.get("full_size", full_size);
  if (full_size) {
    c.dim = 40;
    c.m_adapt = 5000;
    c.m_eval = 3000;
    c.reference_adapt = 800000;
  }
  f.get("dim", c.dim);
  f.get("n_data", c.n_data);
  f.get("n_test", c.n_test);
  f.get("test_dof", c.test_dof);
  f.get("test_scale2", c.test_scale2);
  f.get("m_adapt", c.m_adapt);
  f.get("adapt_rounds", c.adapt_rounds);
  std::string family = "gaussian";
  f.get("family", family);
  if (family != "gaussian" && family != "student_t") {
    throw ConfigError("field 'family' must be \"gaussian\" or \"student_t\"");
  }
  c.family = family == "student_t" ? MarginalFamily::kStudentT : MarginalFamily::kGaussian;
  f.get("family_dof", c.family_dof);
  f.get("m_eval", c.m_eval);
  f.get("replications", c.replications);
  f.get("reference_adapt", c.reference_adapt);
  f.get("reference_samples", c.reference_samples);
  f.get("seed", c.seed);
  read_adapt(f.object("coupling"), c.coupling, "coupling.");
  f.finish();
  if (ov.seed) c.seed = *ov.seed;
  if (ov.replications) c.replications = *ov.replications;
  require(c.dim >= 1, "dim", c.dim, "must be >= 1");
  require(c.n_data >= 1, "n_data", c.n_data, "must be >= 1");
  require(c.n_test >= 1, "n_test", c.n_test, "must be >= 1");
  require(c.m_adapt >= 2, "m_adapt", c.m_adapt, "must be >= 2");
  require(c.m_eval >= 2, "m_eval", c.m_eval, "must be >= 2");
  require(c.replications >= 1, "replications", c.replications, "must be >= 1");
  require(c.reference_samples >= 10 * c.m_eval, "reference_samples", c.reference_samples,
          "must be at least 10 times m_eval");
  return c;
}

json logreg_json(const LogregConfig& c) {
  return {{"dim", c.dim},
          {"n_data", c.n_data},
          {"n_test", c.n_test},
          {"test_dof", c.test_dof},
          {"test_scale2", c.test_scale2},
          {"m_adapt", c.m_adapt},
          {"adapt_rounds", c.adapt_rounds},
          {"family", c.family == MarginalFamily::kStudentT ? "student_t" : "gaussian"},
          {"family_dof", c.family_dof},
          {"m_eval", c.m_eval},
          {"replications", c.replications},
          {"reference_adapt", c.reference_adapt},
          {"reference_samples", c.reference_samples},
          {"coupling", adapt_json(c.coupling)}};
}

json truth_json(const ReferenceTruth& t) {
  return {{"value", t.value}, {"std_err", t.std_err}, {"exact", t.exact}, {"samples", t.samples},
          {"warning", t.warning}};
}

int run_logreg(const json& doc, const Overrides& ov, const fs::path& out) {
  const LogregConfig c = read_logreg(doc, ov);
  const auto res = run_logreg(c);
  CsvWriter csv(out / "logreg_boxplot.csv", "method,replication,estimate,truth,log_ratio");
  for (const auto& r : res.rows) csv.row(r.method, r.replication, r.estimate, r.truth, r.log_ratio);
  CsvWriter tr(out / "logreg_coupling_trace.csv", "iteration,log_objective,std_err,lr");
  for (std::size_t k = 0; k < res.trace.log_objective.size(); ++k) {
    tr.row(k, res.trace.log_objective[k], res.trace.std_err[k], res.trace.lr[k]);
  }
  json sel = json::object();
  for (const auto& [name, v] : res.trace.selection) sel[name] = v;
  write_manifest(out, "logreg_boxplot", c.seed, logreg_json(c), {"logreg_boxplot.csv", "logreg_coupling_trace.csv"},
                 {{"truth", truth_json(res.truth)},
                  {"chosen_coupling", res.trace.chosen_start},
                  {"coupling", res.trace.coupling.to_json()},
                  {"selection_log_objective", sel}});
  if (res.truth.warning) std::cerr << "warning: reference standard error exceeds 1% of the estimate\n";
  return 0;
}

int run_trace(const json& doc, const Overrides& ov, const fs::path& out) {
  TraceConfig c;
  Fields f(doc, "");
  std::string experiment;
  f.get("experiment", experiment);
  f.get("dim", c.dim);
  f.get("n_data", c.n_data);
  f.get("sigma2", c.sigma2);
  f.get("proposal_scale", c.proposal_scale);
  f.get("proposal_shift", c.proposal_shift);
  std::uint64_t seed = 0;
  f.get("seed", seed);
  read_adapt(f.object("coupling"), c.adapt, "coupling.");
  f.finish();
  c.adapt.seed = ov.seed ? *ov.seed : seed;
  require(c.dim >= 1, "dim", c.dim, "must be >= 1");

  const AdaptTrace t = run_trace(c);
  CsvWriter csv(out / "coupling_adapt_trace.csv", "start,iteration,log_objective,std_err,lr");
  for (const auto& s : t.starts) {
    for (std::size_t k = 0; k < s.log_objective.size(); ++k) {
      csv.row(s.label, k, s.log_objective[k], s.std_err[k], s.lr[k]);
    }
  }
  json sel = json::object();
  for (const auto& [name, v] : t.selection) sel[name] = v;
  const json cfg{{"dim", c.dim},
                 {"n_data", c.n_data},
                 {"sigma2", c.sigma2},
                 {"proposal_scale", c.proposal_scale},
                 {"proposal_shift", c.proposal_shift},
                 {"coupling", adapt_json(c.adapt)}};
  write_manifest(out, "coupling_adapt_trace", c.adapt.seed, cfg, {"coupling_adapt_trace.csv"},
                 {{"chosen_start", t.chosen_start},
                  {"final_log_objective", t.final_objective},
                  {"coupling", t.coupling.to_json()},
                  {"selection_log_objective", sel}});
  return 0;
}

int run_truth(const json& doc, const Overrides& ov) {
  std::string experiment = "logreg_boxplot";
  if (doc.contains("experiment")) experiment = doc.at("experiment").get<std::string>();
  json out;
  if (experiment == "logreg_boxplot") {
    const LogregConfig c = read_logreg(doc, ov);
    out = truth_json(logreg_reference_truth(logreg_setup(c), c));
  } else {
    // Regression experiments: the closed form.
    ConsistencyConfig c;
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
    if (ov.seed) c.seed = *ov.seed;
    c.sample_sizes = {1};
    c.replications = 1;
    const auto rows = run_consistency(c);
    ReferenceTruth t;
    t.value = rows.front().truth;
    t.exact = true;
    out = truth_json(t);
  }
  std::cout << std::setw(2) << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled importance sampling experiments"};
  app.set_version_flag("--version", std::string(COUPLED_IS_VERSION));
  app.require_subcommand(1);

  std::string experiment, config_path, out_dir = ".";
  std::uint64_t seed = 0;
  std::size_t replications = 0;
  const std::vector<std::string> experiments{"blr_landscape", "blr_consistency", "logreg_boxplot",
                                             "coupling_adapt_trace"};

  auto* run = app.add_subcommand("run", "Run one experiment and write CSV plus manifest");
  run->add_option("experiment", experiment, "Experiment name")->required()->check(CLI::IsMember(experiments));
  run->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "Master seed (overrides the config)");
  run->add_option("--out", out_dir, "Output directory");
  auto* rep_opt = run->add_option("--replications", replications, "Replications (overrides the config)")
                      ->check(CLI::PositiveNumber);

  auto* truth = app.add_subcommand("truth", "Print the reference value for a config");
  truth->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* truth_seed = truth->add_option("--seed", seed, "Master seed");

  CLI11_PARSE(app, argc, argv);

  try {
    const json doc = load_config(config_path);
    Overrides ov;
    if (*seed_opt || *truth_seed) ov.seed = seed;
    if (*rep_opt) ov.replications = replications;
    if (*truth) return run_truth(doc, ov);

    if (doc.contains("experiment") && doc.at("experiment") != experiment) {
      throw ConfigError("config is for experiment '" + doc.at("experiment").get<std::string>() + "', not '" +
                        experiment + "'");
    }
    fs::create_directories(out_dir);
    if (experiment == "blr_landscape") return run_landscape(doc, ov, out_dir);
    if (experiment == "blr_consistency") return run_consistency(doc, ov, out_dir);
    if (experiment == "logreg_boxplot") return run_logreg(doc, ov, out_dir);
    return run_trace(doc, ov, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
