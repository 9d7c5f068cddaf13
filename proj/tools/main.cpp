// Batch front end: run | impute | simulate | diagnose.
// Progress goes to stderr; data only to files/stdout.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmm/analyze.hpp"
#include "pmm/data.hpp"
#include "pmm/impute.hpp"
#include "pmm/prior.hpp"
#include "pmm/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string data_path;
  int p = 0;
  int d = 0;
  pmm::PriorSpec prior;
  pmm::ChainConfig mcmc;
  std::vector<pmm::PmmMethod> methods;
  double confidence = 0.95;
  std::string out_dir = ".";
  bool emit_draws = false;
  bool emit_replicates = false;
  bool emit_diagnostics = false;
};

pmm::MatrixXd json_matrix(const json& j) {
  const auto rows = j.size();
  const auto cols = j.at(0).size();
  pmm::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j.at(r).at(c).get<double>();
  return m;
}

pmm::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  pmm::MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

pmm::MatrixXd matrix_from(const json& j) {
  if (j.is_string()) return load_matrix_csv(j.get<std::string>());
  return json_matrix(j);
}

pmm::PriorSpec parse_prior(const json& cfg, int p, int q) {
  pmm::PriorSpec prior = pmm::jeffreys(p, q);
  if (!cfg.contains("prior")) return prior;
  const json& pj = cfg.at("prior");
  const std::string kind = pj.value("kind", "jeffreys");
  prior.nu0 = pj.value("nu0", 0.0);
  if (kind == "jeffreys") return prior;
  if (kind != "custom") throw std::runtime_error("prior.kind must be jeffreys or custom");
  if (pj.contains("A")) prior.A = matrix_from(pj.at("A"));
  if (pj.contains("alpha0")) prior.alpha0 = matrix_from(pj.at("alpha0"));
  if (pj.contains("M")) prior.M = matrix_from(pj.at("M"));
  prior.r = pj.value("rank", static_cast<int>(prior.M.fullPivLu().rank()));
  return prior;
}

pmm::VectorXd delta_vector(const json& j, int p) {
  pmm::VectorXd v(p);
  if (j.is_number()) {
    v.setConstant(j.get<double>());
  } else {
    if (static_cast<int>(j.size()) != p)
      throw std::runtime_error("delta vector must have p entries");
    for (int k = 0; k < p; ++k) v(k) = j.at(static_cast<std::size_t>(k)).get<double>();
  }
  return v;
}

std::vector<pmm::PmmMethod> parse_methods(const json& cfg, int p) {
  std::vector<pmm::PmmMethod> out;
  if (!cfg.contains("methods")) {
    out.push_back(pmm::PmmMethod::mar());
    return out;
  }
  for (const json& mj : cfg.at("methods")) {
    const std::string name = mj.at("name").get<std::string>();
    if (name == "MAR") out.push_back(pmm::PmmMethod::mar());
    else if (name == "J2R") out.push_back(pmm::PmmMethod::j2r());
    else if (name == "CIR") out.push_back(pmm::PmmMethod::cir());
    else if (name == "CR") out.push_back(pmm::PmmMethod::cr());
    else if (name == "ECR") out.push_back(pmm::PmmMethod::ecr(mj.at("phi").get<double>()));
    else if (name == "MCR") out.push_back(pmm::PmmMethod::mcr({}));  // flags from the ML fit
    else if (name == "cDelta") {
      const std::string v = mj.value("variant", "first");
      out.push_back(pmm::PmmMethod::cdelta(
          delta_vector(mj.at("delta"), p),
          v == "all" ? pmm::DeltaVariant::AllVisits : pmm::DeltaVariant::FirstVisit));
    } else if (name == "uDelta") {
      out.push_back(pmm::PmmMethod::udelta(delta_vector(mj.at("delta"), p)));
    } else {
      throw std::runtime_error("unknown method '" + name + "'");
    }
  }
  return out;
}

pmm::Algorithm parse_algorithm(const std::string& s) {
  if (s == "MDA") return pmm::Algorithm::MDA;
  if (s == "FDA") return pmm::Algorithm::FDA;
  if (s == "AUGMENTED") return pmm::Algorithm::AUGMENTED;
  if (s == "SRI") return pmm::Algorithm::SRI;
  throw std::runtime_error("mcmc.algorithm must be MDA, FDA, AUGMENTED, or SRI");
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json cfg = json::parse(in);

  RunConfig rc;
  const json& dj = cfg.at("data");
  rc.data_path = dj.at("path").get<std::string>();
  rc.p = dj.at("p").get<int>();
  rc.d = dj.at("d").get<int>();
  rc.prior = parse_prior(cfg, rc.p, rc.d + 2);
  if (cfg.contains("mcmc")) {
    const json& mj = cfg.at("mcmc");
    rc.mcmc.algorithm = parse_algorithm(mj.value("algorithm", "MDA"));
    rc.mcmc.burn_in = mj.value("burn_in", 10000);
    rc.mcmc.thin = mj.value("thin", 100);
    rc.mcmc.n_draws = mj.value("m", 100);
    rc.mcmc.seed = mj.value("seed", 0ULL);
  }
  rc.methods = parse_methods(cfg, rc.p);
  if (cfg.contains("analysis"))
    rc.confidence = cfg.at("analysis").value("confidence", 0.95);
  if (cfg.contains("output")) {
    const json& oj = cfg.at("output");
    rc.out_dir = oj.value("dir", ".");
    rc.emit_draws = oj.value("emit_draws", false);
    rc.emit_replicates = oj.value("emit_replicates", false);
    rc.emit_diagnostics = oj.value("emit_diagnostics", false);
  }
  return rc;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

void write_draws_csv(const std::vector<pmm::ParamDraw>& draws, const std::string& path) {
  std::vector<std::string> names;
  const pmm::MatrixXd flat = pmm::flatten_draws(draws, names);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "'");
  out.precision(17);
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << "\n";
  for (Eigen::Index r = 0; r < flat.rows(); ++r) {
    for (Eigen::Index c = 0; c < flat.cols(); ++c) out << (c ? "," : "") << flat(r, c);
    out << "\n";
  }
}

void write_replicates(const std::vector<pmm::ImputationReplicate>& reps,
                      const pmm::TrialDataset& ds, const std::string& dir) {
  for (const auto& rep : reps) {
    pmm::TrialDataset completed = ds;
    completed.outcomes = rep.outcomes;
    completed.observed.setConstant(true);
    const std::string path = dir + "/replicate_" + sanitize(rep.method) + "_" +
                             std::to_string(rep.replicate + 1) + ".csv";
    pmm::write_csv(completed, path);
  }
}

void write_diagnostics_csv(const std::vector<pmm::DiagnosticRow>& rows,
                           std::ostream& out) {
  out.precision(10);
  out << "param,mean,mc_se,lag1_autocorr\n";
  for (const auto& r : rows) {
    out << r.name << "," << r.mean << "," << r.mc_se << ",";
    if (std::isnan(r.lag1)) out << "NA";
    else out << r.lag1;
    out << "\n";
  }
}

int check_data_path(const std::string& path) {
  if (!fs::exists(path)) {
    std::cerr << "error: data file not found: " << path << "\n";
    return 2;
  }
  return 0;
}

int cmd_run(const RunConfig& rc, int threads) {
  if (int rcode = check_data_path(rc.data_path)) return rcode;
  const pmm::TrialDataset ds = pmm::load_csv(rc.data_path, rc.p, rc.d);
  std::cerr << "loaded " << ds.n_subjects << " subjects, p=" << rc.p
            << ", d=" << rc.d << "\n";
  fs::create_directories(rc.out_dir);

  std::vector<pmm::ParamDraw> draws;
  std::vector<pmm::ImputationReplicate> reps;
  const bool keep = rc.emit_draws || rc.emit_diagnostics;
  std::cerr << "sampling " << rc.mcmc.n_draws << " draws (burn-in "
            << rc.mcmc.burn_in << ", thin " << rc.mcmc.thin << ")...\n";
  const pmm::PipelineResult res = pmm::run_pipeline(
      ds, rc.prior, rc.mcmc, rc.methods, rc.confidence, threads,
      keep ? &draws : nullptr, rc.emit_replicates ? &reps : nullptr);

  pmm::write_results_csv(res, rc.out_dir + "/results.csv");
  std::cerr << "wrote " << rc.out_dir << "/results.csv\n";
  if (rc.emit_draws) write_draws_csv(draws, rc.out_dir + "/draws.csv");
  if (rc.emit_replicates) write_replicates(reps, ds, rc.out_dir);
  if (rc.emit_diagnostics) {
    std::vector<std::string> names;
    const pmm::MatrixXd flat = pmm::flatten_draws(draws, names);
    std::ofstream dout(rc.out_dir + "/diagnostics.csv");
    write_diagnostics_csv(pmm::diagnostics(flat, names), dout);
  }
  return 0;
}

int cmd_impute(const RunConfig& rc, int threads) {
  (void)threads;
  if (int rcode = check_data_path(rc.data_path)) return rcode;
  const pmm::TrialDataset ds = pmm::load_csv(rc.data_path, rc.p, rc.d);
  fs::create_directories(rc.out_dir);

  std::vector<pmm::PmmMethod> methods = rc.methods;
  for (auto& method : methods)
    if (method.tag == pmm::MethodTag::MCR && method.mcr_flags.size() == 0)
      method.mcr_flags = pmm::mcr_flags(pmm::fit_mle_em(ds).params);

  std::vector<pmm::ParamDraw> draws;
  switch (rc.mcmc.algorithm) {
    case pmm::Algorithm::MDA: draws = pmm::run_mda(ds, rc.prior, rc.mcmc); break;
    case pmm::Algorithm::FDA: draws = pmm::run_fda(ds, rc.prior, rc.mcmc); break;
    case pmm::Algorithm::AUGMENTED: draws = pmm::run_augmented(ds, rc.prior, rc.mcmc); break;
    case pmm::Algorithm::SRI: {
      auto params = pmm::run_sri(ds, rc.prior, rc.mcmc);
      for (auto& sp : params) draws.push_back({std::move(sp), ds.outcomes});
      break;
    }
  }
  pmm::Rng rng(pmm::derive_seed(rc.mcmc.seed, 0x1757u));
  const auto reps = pmm::build_replicates(ds, pmm::index_patterns(ds), draws, methods, rng);
  write_replicates(reps, ds, rc.out_dir);
  if (rc.emit_draws) write_draws_csv(draws, rc.out_dir + "/draws.csv");
  std::cerr << "wrote " << reps.size() << " replicate files to " << rc.out_dir << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed,
                 const std::string& out_path) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot open config: " << config_path << "\n";
    return 2;
  }
  json cfg = json::parse(in);
  const json& sj = cfg.at("simulate");
  pmm::SimSpec spec;
  spec.n_subjects = sj.at("n").get<int>();
  spec.p_visits = sj.at("p").get<int>();
  spec.d_covariates = sj.at("d").get<int>();
  spec.active_fraction = sj.value("active_fraction", 0.5);
  spec.alpha = matrix_from(sj.at("alpha"));
  spec.sigma = matrix_from(sj.at("sigma"));
  if (sj.contains("dropout_control"))
    spec.dropout_prob_control = sj.at("dropout_control").get<std::vector<double>>();
  if (sj.contains("dropout_active"))
    spec.dropout_prob_active = sj.at("dropout_active").get<std::vector<double>>();
  spec.intermittent_prob = sj.value("intermittent_prob", 0.0);

  const pmm::TrialDataset ds = pmm::simulate_trial(spec, seed);
  pmm::write_csv(ds, out_path);
  std::cerr << "wrote " << ds.n_subjects << " subjects to " << out_path << "\n";
  return 0;
}

int cmd_diagnose(const std::string& draws_path) {
  if (int rcode = check_data_path(draws_path)) return rcode;
  std::ifstream in(draws_path);
  std::string line;
  if (!std::getline(in, line)) {
    std::cerr << "error: empty draws file\n";
    return 2;
  }
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  pmm::MatrixXd draws(rows.size(), names.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < names.size(); ++c)
      draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  write_diagnostics_csv(pmm::diagnostics(draws, names), std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple imputation for longitudinal trials: MMRM, control-based and delta-adjusted pattern mixture models"};
  app.require_subcommand(1);

  std::string config_path, out_override, draws_path;
  std::int64_t seed_override = -1;
  int threads = 1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* copt = sub->add_option("--config", config_path, "JSON config file");
    if (needs_config) copt->required();
    sub->add_option("--seed", seed_override, "override config seed");
    sub->add_option("--threads", threads, "worker thread cap");
    sub->add_option("--out", out_override, "override output directory/file");
  };

  CLI::App* run = app.add_subcommand("run", "full pipeline: sample, impute, analyze, pool");
  add_common(run, true);
  CLI::App* impute = app.add_subcommand("impute", "sample and emit imputed datasets only");
  add_common(impute, true);
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic trial CSV");
  add_common(simulate, true);
  CLI::App* diagnose = app.add_subcommand("diagnose", "chain diagnostics from a draws CSV");
  diagnose->add_option("draws", draws_path, "draws CSV (from emit_draws)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (diagnose->parsed()) return cmd_diagnose(draws_path);
    if (simulate->parsed()) {
      const std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : 0;
      return cmd_simulate(config_path, seed,
                          out_override.empty() ? "simulated.csv" : out_override);
    }
    RunConfig rc = load_config(config_path);
    if (seed_override >= 0) rc.mcmc.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) rc.out_dir = out_override;
    if (run->parsed()) return cmd_run(rc, threads);
    return cmd_impute(rc, threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
