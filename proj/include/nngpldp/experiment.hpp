#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nngpldp/io.hpp"

namespace nngpldp {

// ---- config ----------------------------------------------------------------

struct GridSpec {
  std::vector<std::pair<double, double>> domain;
  int n = 16;
  std::string rule = "gauss_legendre";
  bool present = false;

  Grid make() const { return make_grid(domain, n, rule); }
};

inline void from_json(const nlohmann::json& j, GridSpec& g) {
  if (!j.contains("domain")) throw config_error("grid.domain", "missing");
  for (const auto& iv : j.at("domain")) {
    if (!iv.is_array() || iv.size() != 2)
      throw config_error("grid.domain", "each interval must be [lo, hi]");
    g.domain.emplace_back(iv[0].get<double>(), iv[1].get<double>());
  }
  g.n = j.value("n", 16);
  g.rule = j.value("rule", std::string("gauss_legendre"));
  g.present = true;
}

inline void to_json(nlohmann::json& j, const GridSpec& g) {
  nlohmann::json dom = nlohmann::json::array();
  for (const auto& [a, b] : g.domain) dom.push_back({a, b});
  j = nlohmann::json{{"domain", dom}, {"n", g.n}, {"rule", g.rule}};
}

inline void from_json(const nlohmann::json& j, NngpOptions& o) {
  o.hermite_nodes = j.value("hermite_nodes", 40);
  o.correlation_clamp = j.value("correlation_clamp", 1.0 - 1e-12);
}

inline void from_json(const nlohmann::json& j, RateOptions& o) {
  o.mc_samples = j.value("mc_samples", Eigen::Index(200000));
  o.max_iter = j.value("max_iter", 500);
  o.gtol = j.value("gtol", 1e-4);
  o.ess_floor_frac = j.value("ess_floor_frac", 0.01);
}

inline void from_json(const nlohmann::json& j, I0SearchOptions& o) {
  o.population = j.value("population", 16);
  o.elite = j.value("elite", 4);
  o.rounds = j.value("rounds", 4);
  o.search_samples = j.value("search_samples", Eigen::Index(10000));
  o.search_max_iter = j.value("search_max_iter", 150);
  o.bump_width = j.value("bump_width", 0.0);
}

namespace detail {

inline Eigen::MatrixXd json_matrix(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw config_error(field, "expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 1;
  if (cols == 0) throw config_error(field, "rows must be non-empty");
  Eigen::MatrixXd m(Eigen::Index(j.size()), Eigen::Index(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const nlohmann::json& row = j[i];
    if (row.is_array()) {
      if (row.size() != cols) throw config_error(field, "ragged rows");
      for (std::size_t c = 0; c < cols; ++c) m(Eigen::Index(i), Eigen::Index(c)) = row[c].get<double>();
    } else {
      if (cols != 1) throw config_error(field, "ragged rows");
      m(Eigen::Index(i), 0) = row.get<double>();
    }
  }
  return m;
}

}  // namespace detail

struct CltSpec {
  Eigen::MatrixXd inputs;
  Eigen::Index n_scale = 1024;
  Eigen::Index m_outputs = 1;
  Eigen::Index reps = 2000;
  double level = 0.01;
  int permutations = 199;
  Eigen::Index test_cap = 1024;
  bool present = false;
};

struct SvTailSpec {
  Eigen::Index n1 = 64, n2 = 64;
  double lambda = 1.0;
  std::vector<double> t_values;
  Eigen::Index reps = 10000;
  double c_const = 1.5;
  bool present = false;
};

struct ExperimentConfig {
  std::string kind;  // simulate | nngp | lln | rate | tail | posterior | mf | diagnostics
  NetworkConfig network;
  GridSpec grid;
  SeedSpec seed;
  std::string out_dir = "out";
  int workers = 0;  // 0 = NNGP_LDP_WORKERS or 1

  Eigen::Index n_scale = 64;            // simulate / posterior / diagnostics default chains
  std::vector<Eigen::Index> n_scales;   // lln / tail
  Eigen::Index reps = 20;               // lln / tail replicates
  NngpOptions nngp;
  RateOptions rate;                     // rate / mf (seed injected from the top level)
  std::string rate_path = "nngp";       // rate kind: "nngp" | "simulate"
  EventSpec event;                      // tail
  Eigen::Index ensemble_size = 100;     // posterior
  bool mean_field = false;              // posterior
  TrainingSet train;                    // posterior / mf
  bool train_present = false;
  I0SearchOptions i0;                   // mf
  CltSpec clt;                          // diagnostics
  SvTailSpec svtail;                    // diagnostics

  int resolved_workers() const { return workers > 0 ? workers : default_workers(); }
};

// Full parse + validation; throws config_error naming the offending field.
// No sampling happens here.
inline ExperimentConfig parse_experiment(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (!j.is_object()) throw config_error("config", "top level must be a JSON object");
  if (!j.contains("kind")) throw config_error("kind", "missing");
  cfg.kind = j.at("kind").get<std::string>();
  const std::vector<std::string> kinds{"simulate", "nngp", "lln",       "rate",
                                       "tail",     "posterior", "mf",  "diagnostics"};
  if (std::find(kinds.begin(), kinds.end(), cfg.kind) == kinds.end())
    throw config_error("kind", "unknown experiment kind '" + cfg.kind + "'");

  const bool needs_network = cfg.kind != "diagnostics" || j.contains("clt");
  if (j.contains("network"))
    cfg.network = j.at("network").get<NetworkConfig>();
  else if (needs_network)
    throw config_error("network", "missing");
  if (j.contains("network")) cfg.network.validate();

  if (j.contains("grid")) {
    cfg.grid = j.at("grid").get<GridSpec>();
    cfg.grid.make();  // surfaces malformed grids before any sampling
    if (Eigen::Index(cfg.grid.domain.size()) != cfg.network.input_dim && needs_network)
      throw config_error("grid.domain", "dimension must match network.input_dim");
  } else if (cfg.kind != "diagnostics") {
    throw config_error("grid", "missing");
  }

  if (j.contains("seed")) cfg.seed = j.at("seed").get<SeedSpec>();
  cfg.out_dir = j.value("out", std::string("out"));
  if (cfg.out_dir.empty()) throw config_error("out", "must be a non-empty path");
  cfg.workers = j.value("workers", 0);
  if (cfg.workers < 0) throw config_error("workers", "must be >= 0");
  if (j.contains("nngp")) cfg.nngp = j.at("nngp").get<NngpOptions>();
  cfg.nngp.validate();

  if (cfg.kind == "simulate" || cfg.kind == "posterior") {
    cfg.n_scale = j.value("n_scale", Eigen::Index(64));
    if (cfg.n_scale < 1) throw config_error("n_scale", "must be >= 1");
  }
  if (cfg.kind == "lln" || cfg.kind == "tail") {
    if (!j.contains("n_scales")) throw config_error("n_scales", "missing");
    cfg.n_scales = j.at("n_scales").get<std::vector<Eigen::Index>>();
    if (cfg.n_scales.empty()) throw config_error("n_scales", "must be non-empty");
    for (Eigen::Index n : cfg.n_scales)
      if (n < 1) throw config_error("n_scales", "entries must be >= 1");
    cfg.reps = j.value("reps", Eigen::Index(20));
    if (cfg.reps < 1) throw config_error("reps", "must be >= 1");
  }
  if (cfg.kind == "rate" || cfg.kind == "mf") {
    if (j.contains("rate")) cfg.rate = j.at("rate").get<RateOptions>();
    cfg.rate.seed = cfg.seed;
    cfg.rate.validate();
  }
  if (cfg.kind == "rate") {
    cfg.rate_path = j.value("path", std::string("nngp"));
    if (cfg.rate_path != "nngp" && cfg.rate_path != "simulate")
      throw config_error("path", "must be 'nngp' or 'simulate'");
    if (cfg.rate_path == "simulate") {
      cfg.n_scale = j.value("n_scale", Eigen::Index(64));
      if (cfg.n_scale < 1) throw config_error("n_scale", "must be >= 1");
    }
    cfg.network.act.require_rate_admissible("rate experiment");
  }
  if (cfg.kind == "tail") {
    if (!j.contains("event")) throw config_error("event", "missing");
    cfg.event = j.at("event").get<EventSpec>();
    cfg.event.validate();
    if (cfg.event.layer > cfg.network.depth + 1)
      throw config_error("event.layer", "exceeds depth + 1");
  }
  if (cfg.kind == "posterior" || cfg.kind == "mf") {
    if (!j.contains("train")) throw config_error("train", "missing");
    const nlohmann::json& tj = j.at("train");
    const double beta = tj.value("beta", 1.0);
    if (tj.contains("csv")) {
      cfg.train = read_training_csv(tj.at("csv").get<std::string>(),
                                    Eigen::Index(cfg.network.input_dim),
                                    Eigen::Index(cfg.network.output_dim), beta);
    } else {
      if (!tj.contains("inputs") || !tj.contains("responses"))
        throw config_error("train.inputs", "missing (or provide train.csv)");
      cfg.train.inputs = detail::json_matrix(tj.at("inputs"), "train.inputs");
      cfg.train.responses = detail::json_matrix(tj.at("responses"), "train.responses");
      cfg.train.beta = beta;
    }
    cfg.train.validate();
    if (cfg.train.response_dim() != cfg.network.output_dim)
      throw config_error("train.responses", "column count must equal network.output_dim");
    cfg.train_present = true;
  }
  if (cfg.kind == "posterior") {
    cfg.ensemble_size = j.value("ensemble_size", Eigen::Index(100));
    if (cfg.ensemble_size < 1) throw config_error("ensemble_size", "must be >= 1");
    cfg.mean_field = j.value("mean_field", false);
  }
  if (cfg.kind == "mf") {
    if (j.contains("i0")) cfg.i0 = j.at("i0").get<I0SearchOptions>();
    cfg.i0.validate();
    cfg.network.act.require_rate_admissible("mf experiment");
  }
  if (cfg.kind == "diagnostics") {
    if (!j.contains("clt") && !j.contains("svtail"))
      throw config_error("clt", "diagnostics needs a 'clt' and/or 'svtail' block");
    if (j.contains("clt")) {
      const nlohmann::json& c = j.at("clt");
      if (!c.contains("inputs")) throw config_error("clt.inputs", "missing");
      cfg.clt.inputs = detail::json_matrix(c.at("inputs"), "clt.inputs");
      cfg.clt.n_scale = c.value("n_scale", Eigen::Index(1024));
      cfg.clt.m_outputs = c.value("m_outputs", Eigen::Index(1));
      cfg.clt.reps = c.value("reps", Eigen::Index(2000));
      cfg.clt.level = c.value("level", 0.01);
      cfg.clt.permutations = c.value("permutations", 199);
      cfg.clt.test_cap = c.value("test_cap", Eigen::Index(1024));
      if (cfg.clt.n_scale < 1) throw config_error("clt.n_scale", "must be >= 1");
      if (cfg.clt.reps < 8) throw config_error("clt.reps", "must be >= 8");
      if (!(cfg.clt.level > 0.0 && cfg.clt.level < 1.0))
        throw config_error("clt.level", "must be in (0, 1)");
      cfg.clt.present = true;
    }
    if (j.contains("svtail")) {
      const nlohmann::json& s = j.at("svtail");
      cfg.svtail.n1 = s.value("n1", Eigen::Index(64));
      cfg.svtail.n2 = s.value("n2", Eigen::Index(64));
      cfg.svtail.lambda = s.value("lambda", 1.0);
      if (!s.contains("t_values")) throw config_error("svtail.t_values", "missing");
      cfg.svtail.t_values = s.at("t_values").get<std::vector<double>>();
      cfg.svtail.reps = s.value("reps", Eigen::Index(10000));
      cfg.svtail.c_const = s.value("C", 1.5);
      if (cfg.svtail.n1 < 1 || cfg.svtail.n2 < 1)
        throw config_error("svtail.n1", "matrix sides must be >= 1");
      if (!(cfg.svtail.lambda > 0.0)) throw config_error("svtail.lambda", "must be positive");
      if (cfg.svtail.t_values.empty()) throw config_error("svtail.t_values", "must be non-empty");
      if (cfg.svtail.reps < 1000) throw config_error("svtail.reps", "must be >= 1000");
      if (!(cfg.svtail.c_const > 0.0)) throw config_error("svtail.C", "must be positive");
      cfg.svtail.present = true;
    }
  }
  return cfg;
}

// ---- runner ----------------------------------------------------------------

struct RunResult {
  std::string out_dir;
  std::string config_hash;
  std::vector<std::string> artifacts;  // paths relative to out_dir, sorted
  std::string summary;                 // contents of summary.txt
};

namespace detail {

class ArtifactSink {
 public:
  explicit ArtifactSink(std::string root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }
  std::string path(const std::string& rel) {
    const std::filesystem::path p = std::filesystem::path(root_) / rel;
    std::filesystem::create_directories(p.parent_path());
    names_.push_back(rel);
    return p.string();
  }
  const std::vector<std::string>& names() const { return names_; }
  // drop partial outputs so nothing exists without a manifest entry
  void discard_all() {
    for (const std::string& rel : names_) {
      std::error_code ec;
      std::filesystem::remove(std::filesystem::path(root_) / rel, ec);
    }
  }

 private:
  std::string root_;
  std::vector<std::string> names_;
};

inline nlohmann::json rate_estimate_json(const RateEstimate& est, const std::string& dual_name) {
  return nlohmann::json{{"value", est.value},           {"mc_stderr", est.mc_stderr},
                        {"iterations", est.iterations}, {"converged", est.converged},
                        {"ess_min", est.ess_min},       {"dual_csv", dual_name}};
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw io_error("write failed for '" + path + "'");
}

}  // namespace detail

// Runs one experiment described by a JSON config. Artifacts land in out_dir,
// the manifest is written last and covers every file, reruns with the same
// config are byte-identical.
inline RunResult run_experiment(const nlohmann::json& config_json) {
  const ExperimentConfig cfg = parse_experiment(config_json);
  const int workers = cfg.resolved_workers();
  const Tolerances tol;

  RunResult res;
  res.out_dir = cfg.out_dir;
  // hash the semantic config only: output location and worker count do not
  // affect any numeric result
  nlohmann::json semantic = config_json;
  semantic.erase("out");
  semantic.erase("workers");
  res.config_hash = config_hash(semantic);
  detail::ArtifactSink sink(cfg.out_dir);
  std::ostringstream sum;
  sum << "nngp-ldp experiment: " << cfg.kind << "\n";
  sum << "config hash: " << res.config_hash << "\n";
  sum << "seed: master=" << cfg.seed.master_seed << " stream=" << cfg.seed.stream_id << "\n";

  try {
    if (cfg.kind == "simulate") {
      for (int l = 0; l < cfg.network.depth; ++l)
        sink.path("chain/layer_" + std::to_string(l + 2) + ".csv");
      sink.path("chain/chain.json");
      const ChainState st = simulate_chain(cfg.network, cfg.n_scale, cfg.grid.make(), cfg.seed,
                                           tol, workers);
      write_chain_dir((std::filesystem::path(cfg.out_dir) / "chain").string(), st);
      sum << "chain: N=" << cfg.n_scale << " depth=" << cfg.network.depth << "\n";
      for (std::size_t i = 0; i < st.ops.size(); ++i)
        sum << "  trace(K^" << (i + 2) << ") = " << fmt17(trace(st.ops[i])) << "\n";
    } else if (cfg.kind == "nngp") {
      const std::vector<OperatorRep> ops =
          nngp_chain(cfg.network, cfg.grid.make(), cfg.nngp, tol, workers);
      for (std::size_t i = 0; i < ops.size(); ++i) {
        const std::string name = "layer_" + std::to_string(i + 2) + ".csv";
        write_kernel_csv(sink.path(name), KernelGrid{ops[i].grid, ops[i].kernel_values()});
        sum << "  trace(K^" << (i + 2) << ") = " << fmt17(trace(ops[i])) << "\n";
      }
    } else if (cfg.kind == "lln") {
      const std::vector<DistanceCurveRow> rows =
          lln_distance_curve(cfg.network, cfg.grid.make(), cfg.n_scales, int(cfg.reps), cfg.seed,
                             cfg.nngp, tol, workers);
      write_distance_csv(sink.path("distance.csv"), rows);
      for (const DistanceCurveRow& r : rows)
        sum << "  N=" << r.n << " layer=" << r.layer << " median=" << fmt17(r.median) << "\n";
    } else if (cfg.kind == "rate") {
      const Grid grid = cfg.grid.make();
      std::vector<OperatorRep> ks;
      if (cfg.rate_path == "nngp") {
        ks = nngp_chain(cfg.network, grid, cfg.nngp, tol, workers);
      } else {
        ks = simulate_chain(cfg.network, cfg.n_scale, grid, cfg.seed.derive(777), tol, workers)
                 .ops;
      }
      RateOptions ropts = cfg.rate;
      ropts.workers = workers;
      const ChainRateResult cr = chain_rate(ks, cfg.network, ropts, tol);
      nlohmann::json layers = nlohmann::json::array();
      for (std::size_t l = 0; l < cr.per_layer.size(); ++l) {
        const std::string dual_name = "rate_layer_" + std::to_string(l + 1) + "_dual.csv";
        write_kernel_csv(sink.path(dual_name),
                         KernelGrid{cr.per_layer[l].dual.grid, cr.per_layer[l].dual.sym});
        layers.push_back(detail::rate_estimate_json(cr.per_layer[l], dual_name));
        sum << "  layer " << (l + 1) << ": I = " << fmt17(cr.per_layer[l].value) << " +- "
            << fmt17(cr.per_layer[l].mc_stderr) << "\n";
      }
      detail::write_json_file(sink.path("rate.json"),
                              nlohmann::json{{"total", cr.total},
                                             {"path", cfg.rate_path},
                                             {"per_layer", layers}});
      sum << "  total = " << fmt17(cr.total) << "\n";
    } else if (cfg.kind == "tail") {
      const TailSlopeResult ts = tail_slope(cfg.event, cfg.network, cfg.grid.make(), cfg.n_scales,
                                            cfg.reps, cfg.seed, tol, workers);
      write_tail_csv(sink.path("tail.csv"), ts);
      detail::write_json_file(sink.path("tail.json"),
                              nlohmann::json{{"slope", ts.slope},
                                             {"slope_stderr", ts.slope_stderr},
                                             {"stat", cfg.event.stat},
                                             {"threshold", cfg.event.threshold}});
      sum << "  slope = " << fmt17(ts.slope) << " +- " << fmt17(ts.slope_stderr) << "\n";
    } else if (cfg.kind == "posterior") {
      const Grid grid = cfg.grid.make();
      std::vector<ChainState> prior;
      prior.reserve(std::size_t(cfg.ensemble_size));
      for (Eigen::Index r = 0; r < cfg.ensemble_size; ++r)
        prior.push_back(simulate_chain(cfg.network, cfg.n_scale, grid,
                                       cfg.seed.derive(std::uint64_t(r)), tol, 1));
      const PosteriorEnsemble ens = posterior_resample(
          prior, cfg.train, cfg.mean_field, cfg.n_scale, cfg.seed.derive(999983), false, workers);
      write_ensemble_csv(sink.path("weights.csv"), ens);
      write_ensemble_json(sink.path("ensemble.json"), ens, "weights.csv");
      sum << "  ensemble: count=" << ens.samples.size() << " ess=" << fmt17(ens.ess)
          << (cfg.mean_field ? " (mean-field)" : "") << "\n";
    } else if (cfg.kind == "mf") {
      const Grid grid = cfg.grid.make();
      RateOptions ropts = cfg.rate;
      ropts.workers = workers;
      const I0Estimate est =
          estimate_I0(cfg.network, grid, cfg.train, cfg.i0, ropts, cfg.seed, tol);
      detail::write_json_file(sink.path("i0.json"),
                              nlohmann::json{{"i0_upper", est.i0_upper},
                                             {"trace", est.trace},
                                             {"exhausted", est.exhausted}});
      for (std::size_t l = 0; l < est.argmin.size(); ++l)
        write_kernel_csv(sink.path("argmin_layer_" + std::to_string(l + 2) + ".csv"),
                         KernelGrid{est.argmin[l].grid, est.argmin[l].kernel_values()});
      const MfRateResult mfr =
          mf_rate(est.argmin, cfg.train, cfg.network, est.i0_upper, ropts, tol);
      detail::write_json_file(sink.path("mf.json"),
                              nlohmann::json{{"value", mfr.value},
                                             {"quad", mfr.quad},
                                             {"chain_total", mfr.chain.total},
                                             {"i0_upper", est.i0_upper}});
      sum << "  I0 upper bound = " << fmt17(est.i0_upper) << "\n";
      sum << "  mf rate at argmin = " << fmt17(mfr.value) << "\n";
    } else if (cfg.kind == "diagnostics") {
      if (cfg.clt.present) {
        const CltReport rep = clt_diagnostic(cfg.network, cfg.clt.inputs, cfg.clt.n_scale,
                                             cfg.clt.m_outputs, cfg.clt.reps, cfg.seed,
                                             cfg.clt.level, cfg.clt.permutations,
                                             cfg.clt.test_cap, cfg.nngp, tol, workers);
        std::vector<double> skew(rep.skewness.data(), rep.skewness.data() + rep.skewness.size());
        std::vector<double> kurt(rep.excess_kurtosis.data(),
                                 rep.excess_kurtosis.data() + rep.excess_kurtosis.size());
        detail::write_json_file(sink.path("clt.json"),
                                nlohmann::json{{"pass", rep.pass},
                                               {"level", rep.level},
                                               {"p_value", rep.energy.p_value},
                                               {"energy_stat", rep.energy.stat},
                                               {"permutations", rep.energy.permutations},
                                               {"skewness", skew},
                                               {"excess_kurtosis", kurt}});
        sum << "  clt: p=" << fmt17(rep.energy.p_value) << (rep.pass ? " PASS" : " FAIL") << "\n";
      }
      if (cfg.svtail.present) {
        const std::vector<TailCheckRow> rows =
            singvalue_tail_check(cfg.svtail.n1, cfg.svtail.n2, cfg.svtail.lambda,
                                 cfg.svtail.t_values, cfg.svtail.reps, cfg.svtail.c_const,
                                 cfg.seed.derive(424242), workers);
        write_tailcheck_csv(sink.path("svtail.csv"), rows);
        bool any = false;
        for (const TailCheckRow& r : rows) any = any || r.violates;
        sum << "  svtail: " << rows.size() << " thresholds, "
            << (any ? "BOUND VIOLATED" : "bound respected") << "\n";
      }
    }
  } catch (...) {
    sink.discard_all();
    throw;
  }

  res.summary = sum.str();
  {
    std::ofstream f = detail::open_out(sink.path("summary.txt"));
    f << res.summary;
  }
  res.artifacts = sink.names();
  std::sort(res.artifacts.begin(), res.artifacts.end());

  nlohmann::json manifest{{"tool", "nngp-ldp"},
                          {"version", "0.1.0"},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"kind", cfg.kind},
                          {"config", config_json},
                          {"config_hash", res.config_hash},
                          {"workers", workers},
                          {"artifacts", res.artifacts}};
  detail::write_json_file((std::filesystem::path(cfg.out_dir) / "manifest.json").string(),
                          manifest);
  return res;
}

inline nlohmann::json load_config_file(const std::string& path) {
  std::ifstream f = detail::open_in(path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config", std::string("JSON parse failure in '") + path + "': " + e.what());
  }
  return j;
}

}  // namespace nngpldp
