#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nngpldp/chain.hpp"
#include "nngpldp/diagnostics.hpp"
#include "nngpldp/gaussian_field.hpp"
#include "nngpldp/nngp.hpp"
#include "nngpldp/posterior.hpp"
#include "nngpldp/rate.hpp"

namespace nngpldp {

// ---- csv primitives --------------------------------------------------------
//
// Matrix files carry one comment header line describing the grid:
//   # grid rule=<rule> dim=<d> n=<n> nodes=<c:c:..;c:..;..> weights=<w;w;..>
// followed by comma-separated rows, all floats at 17 significant digits.

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // LF line endings everywhere
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open '" + path + "' for reading");
  return f;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw io_error(where + ": cannot parse float '" + s + "'");
  }
}

inline std::string grid_header(const Grid& g) {
  std::ostringstream os;
  os << "# grid rule=" << g.rule << " dim=" << g.dim() << " n=" << g.size() << " nodes=";
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (i) os << ';';
    for (Eigen::Index d = 0; d < g.dim(); ++d) {
      if (d) os << ':';
      os << fmt17(g.nodes(i, d));
    }
  }
  os << " weights=";
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (i) os << ';';
    os << fmt17(g.weights[i]);
  }
  return os.str();
}

inline Grid parse_grid_header(const std::string& line, const std::string& where) {
  const std::string prefix = "# grid ";
  if (line.rfind(prefix, 0) != 0) throw io_error(where + ": missing '# grid' header line");
  std::string rule;
  Eigen::Index dim = 0, n = 0;
  std::string nodes_s, weights_s;
  for (const std::string& tok : split(line.substr(prefix.size()), ' ')) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "rule")
      rule = val;
    else if (key == "dim")
      dim = Eigen::Index(std::stoll(val));
    else if (key == "n")
      n = Eigen::Index(std::stoll(val));
    else if (key == "nodes")
      nodes_s = val;
    else if (key == "weights")
      weights_s = val;
  }
  if (dim < 1 || n < 1) throw io_error(where + ": grid header needs dim >= 1 and n >= 1");
  const std::vector<std::string> node_toks = split(nodes_s, ';');
  const std::vector<std::string> w_toks = split(weights_s, ';');
  if (Eigen::Index(node_toks.size()) != n || Eigen::Index(w_toks.size()) != n)
    throw io_error(where + ": grid header node/weight count != n");
  Grid g;
  g.rule = rule.empty() ? "explicit" : rule;
  g.nodes.resize(n, dim);
  g.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<std::string> coords = split(node_toks[std::size_t(i)], ':');
    if (Eigen::Index(coords.size()) != dim)
      throw io_error(where + ": node coordinate count != dim");
    for (Eigen::Index d = 0; d < dim; ++d)
      g.nodes(i, d) = parse_double(coords[std::size_t(d)], where);
    g.weights[i] = parse_double(w_toks[std::size_t(i)], where);
  }
  g.validate();
  return g;
}

inline void write_matrix_rows(std::ofstream& f, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) f << ',';
      f << fmt17(m(i, j));
    }
    f << '\n';
  }
}

}  // namespace detail

// ---- kernels ----------------------------------------------------------------

inline void write_kernel_csv(const std::string& path, const KernelGrid& k) {
  std::ofstream f = detail::open_out(path);
  f << detail::grid_header(k.grid) << '\n';
  detail::write_matrix_rows(f, k.values);
  if (!f) throw io_error("write failed for '" + path + "'");
}

inline KernelGrid read_kernel_csv(const std::string& path) {
  std::ifstream f = detail::open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw io_error(path + ": empty file");
  KernelGrid k;
  k.grid = detail::parse_grid_header(line, path);
  const Eigen::Index n = k.grid.size();
  k.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(f, line)) throw io_error(path + ": expected " + std::to_string(n) + " rows");
    const std::vector<std::string> cells = detail::split(line, ',');
    if (Eigen::Index(cells.size()) != n) throw io_error(path + ": row width != n");
    for (Eigen::Index j = 0; j < n; ++j)
      k.values(i, j) = detail::parse_double(cells[std::size_t(j)], path);
  }
  return k;
}

// ---- field samples (rows = samples, columns = grid nodes) --------------------

inline void write_field_csv(const std::string& path, const FieldSample& s) {
  std::ofstream f = detail::open_out(path);
  f << detail::grid_header(s.grid) << '\n';
  detail::write_matrix_rows(f, s.values);
  if (!f) throw io_error("write failed for '" + path + "'");
}

// ---- long-format tables -------------------------------------------------------

inline void write_distance_csv(const std::string& path, const std::vector<DistanceCurveRow>& rows) {
  std::ofstream f = detail::open_out(path);
  f << "n,layer,median,iqr\n";
  for (const DistanceCurveRow& r : rows)
    f << r.n << ',' << r.layer << ',' << fmt17(r.median) << ',' << fmt17(r.iqr) << '\n';
  if (!f) throw io_error("write failed for '" + path + "'");
}

inline void write_tail_csv(const std::string& path, const TailSlopeResult& res) {
  std::ofstream f = detail::open_out(path);
  f << "n,reps,hits,empirical\n";
  for (const TailCount& c : res.counts) {
    const double emp = c.reps > 0 ? double(c.hits) / double(c.reps) : 0.0;
    f << c.n << ',' << c.reps << ',' << c.hits << ',' << fmt17(emp) << '\n';
  }
  if (!f) throw io_error("write failed for '" + path + "'");
}

inline void write_tailcheck_csv(const std::string& path, const std::vector<TailCheckRow>& rows) {
  std::ofstream f = detail::open_out(path);
  f << "t,threshold,hits,empirical,bound,wilson_lo,wilson_hi,violates\n";
  for (const TailCheckRow& r : rows)
    f << fmt17(r.t) << ',' << fmt17(r.threshold) << ',' << r.hits << ',' << fmt17(r.empirical)
      << ',' << fmt17(r.bound) << ',' << fmt17(r.wilson_lo) << ',' << fmt17(r.wilson_hi) << ','
      << (r.violates ? 1 : 0) << '\n';
  if (!f) throw io_error("write failed for '" + path + "'");
}

// ---- json serializers -----------------------------------------------------------

inline void to_json(nlohmann::json& j, const SeedSpec& s) {
  j = nlohmann::json{{"master", s.master_seed}, {"stream", s.stream_id}};
}

inline void from_json(const nlohmann::json& j, SeedSpec& s) {
  s.master_seed = j.value("master", std::uint64_t(1));
  s.stream_id = j.value("stream", std::uint64_t(0));
}

inline void to_json(nlohmann::json& j, const ActivationSpec& a) {
  if (a.kind != ActKind::custom) {
    j = a.name;
    return;
  }
  j = nlohmann::json{{"kind", "custom"},
                     {"name", a.name},
                     {"x", a.table_x},
                     {"y", a.table_y},
                     {"growth_exponent", a.growth_exponent},
                     {"growth_const", a.growth_const},
                     {"lipschitz", a.lipschitz}};
}

inline void from_json(const nlohmann::json& j, ActivationSpec& a) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "identity")
      a = ActivationSpec::identity();
    else if (name == "relu")
      a = ActivationSpec::relu();
    else if (name == "tanh")
      a = ActivationSpec::tanh();
    else if (name == "erf")
      a = ActivationSpec::erf();
    else if (name == "clipped_linear")
      a = ActivationSpec::clipped_linear();
    else
      throw config_error("network.activation", "unknown activation '" + name + "'");
    return;
  }
  if (!j.is_object() || j.value("kind", "") != "custom")
    throw config_error("network.activation", "expected a name or a custom table object");
  if (!j.contains("x") || !j.contains("y"))
    throw config_error("network.activation", "custom activation needs x and y tables");
  a = ActivationSpec::custom(j.at("x").get<std::vector<double>>(),
                             j.at("y").get<std::vector<double>>(),
                             j.value("growth_exponent", 1.0), j.value("growth_const", 1.0),
                             j.value("lipschitz", 1.0), j.value("name", "custom"));
}

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"depth", c.depth},
                     {"input_dim", c.input_dim},
                     {"output_dim", c.output_dim},
                     {"width_ratios", c.width_ratios},
                     {"precisions", c.precisions},
                     {"biases", c.biases},
                     {"activation", c.act}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  if (!j.contains("depth")) throw config_error("network.depth", "missing");
  if (!j.contains("precisions")) throw config_error("network.precisions", "missing");
  if (!j.contains("width_ratios")) throw config_error("network.width_ratios", "missing");
  if (!j.contains("activation")) throw config_error("network.activation", "missing");
  c.depth = j.at("depth").get<int>();
  c.input_dim = j.value("input_dim", 1);
  c.output_dim = j.value("output_dim", 1);
  c.width_ratios = j.at("width_ratios").get<std::vector<double>>();
  c.precisions = j.at("precisions").get<std::vector<double>>();
  c.biases = j.value("biases", std::vector<double>(c.precisions.size(), 0.0));
  c.act = j.at("activation").get<ActivationSpec>();
}

inline void to_json(nlohmann::json& j, const EventSpec& e) {
  j = nlohmann::json{{"stat", e.stat},   {"layer", e.layer},         {"row", e.row},
                     {"col", e.col},     {"threshold", e.threshold}, {"geq", e.geq}};
}

inline void from_json(const nlohmann::json& j, EventSpec& e) {
  if (!j.contains("stat")) throw config_error("event.stat", "missing");
  if (!j.contains("threshold")) throw config_error("event.threshold", "missing");
  e.stat = j.at("stat").get<std::string>();
  e.layer = j.value("layer", 2);
  e.row = j.value("row", Eigen::Index(0));
  e.col = j.value("col", Eigen::Index(0));
  e.threshold = j.at("threshold").get<double>();
  e.geq = j.value("geq", true);
}

// RateEstimate: JSON next to a CSV sidecar holding the dual matrix.
inline void write_rate_json(const std::string& json_path, const RateEstimate& est,
                            const std::string& dual_csv_path) {
  write_kernel_csv(dual_csv_path, KernelGrid{est.dual.grid, est.dual.sym});
  nlohmann::json j{{"value", est.value},
                   {"mc_stderr", est.mc_stderr},
                   {"iterations", est.iterations},
                   {"converged", est.converged},
                   {"ess_min", est.ess_min},
                   {"dual_csv", std::filesystem::path(dual_csv_path).filename().string()}};
  std::ofstream f = detail::open_out(json_path);
  f << j.dump(2) << '\n';
  if (!f) throw io_error("write failed for '" + json_path + "'");
}

// ---- chain state directories ------------------------------------------------

// layer_<l>.csv for l = 2..L+1 plus chain.json carrying config, seed, N.
inline std::vector<std::string> write_chain_dir(const std::string& dir, const ChainState& st) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < st.ops.size(); ++i) {
    const std::string name = "layer_" + std::to_string(i + 2) + ".csv";
    write_kernel_csv((std::filesystem::path(dir) / name).string(),
                     KernelGrid{st.grid, st.ops[i].kernel_values()});
    names.push_back(name);
  }
  nlohmann::json j{{"network", st.cfg},
                   {"seed", st.seed},
                   {"n_scale", st.scale_n},
                   {"widths", st.widths},
                   {"layers", names}};
  std::ofstream f = detail::open_out((std::filesystem::path(dir) / "chain.json").string());
  f << j.dump(2) << '\n';
  names.push_back("chain.json");
  return names;
}

// ---- posterior ensembles ------------------------------------------------------

inline void write_ensemble_csv(const std::string& path, const PosteriorEnsemble& ens) {
  std::ofstream f = detail::open_out(path);
  f << "index,log_weight,weight,resample_index\n";
  for (std::size_t i = 0; i < ens.log_weights.size(); ++i)
    f << i << ',' << fmt17(ens.log_weights[i]) << ',' << fmt17(ens.weights[i]) << ','
      << ens.resample_index[i] << '\n';
  if (!f) throw io_error("write failed for '" + path + "'");
}

inline void write_ensemble_json(const std::string& path, const PosteriorEnsemble& ens,
                                const std::string& weights_csv_name) {
  nlohmann::json j{{"count", ens.samples.size()},
                   {"ess", ens.ess},
                   {"normalized", ens.normalized},
                   {"interpolated", ens.interpolated},
                   {"weights_csv", weights_csv_name}};
  std::ofstream f = detail::open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw io_error("write failed for '" + path + "'");
}

// ---- training sets ---------------------------------------------------------------

// Columns: input coordinates then response coordinates; a header row is
// skipped when its first cell is not numeric. beta comes from the caller.
inline TrainingSet read_training_csv(const std::string& path, Eigen::Index input_dim,
                                     Eigen::Index response_dim, double beta) {
  if (input_dim < 1 || response_dim < 1)
    throw std::invalid_argument("read_training_csv: dimensions must be >= 1");
  std::ifstream f = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> cells = detail::split(line, ',');
    if (first) {
      first = false;
      try {
        std::size_t pos = 0;
        std::stod(cells[0], &pos);
      } catch (const std::exception&) {
        continue;  // header row
      }
    }
    if (Eigen::Index(cells.size()) != input_dim + response_dim)
      throw io_error(path + ": expected " + std::to_string(input_dim + response_dim) +
                     " columns, got " + std::to_string(cells.size()));
    std::vector<double> vals;
    for (const std::string& c : cells) vals.push_back(detail::parse_double(c, path));
    rows.push_back(vals);
  }
  if (rows.empty()) throw io_error(path + ": no data rows");
  TrainingSet t;
  t.beta = beta;
  t.inputs.resize(Eigen::Index(rows.size()), input_dim);
  t.responses.resize(Eigen::Index(rows.size()), response_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index d = 0; d < input_dim; ++d) t.inputs(Eigen::Index(i), d) = rows[i][std::size_t(d)];
    for (Eigen::Index d = 0; d < response_dim; ++d)
      t.responses(Eigen::Index(i), d) = rows[i][std::size_t(input_dim + d)];
  }
  t.validate();
  return t;
}

inline void write_training_csv(const std::string& path, const TrainingSet& t) {
  std::ofstream f = detail::open_out(path);
  for (Eigen::Index d = 0; d < t.inputs.cols(); ++d) f << (d ? "," : "") << 'x' << d;
  for (Eigen::Index d = 0; d < t.responses.cols(); ++d) f << ",y" << d;
  f << '\n';
  for (Eigen::Index i = 0; i < t.count(); ++i) {
    for (Eigen::Index d = 0; d < t.inputs.cols(); ++d)
      f << (d ? "," : "") << fmt17(t.inputs(i, d));
    for (Eigen::Index d = 0; d < t.responses.cols(); ++d) f << ',' << fmt17(t.responses(i, d));
    f << '\n';
  }
  if (!f) throw io_error("write failed for '" + path + "'");
}

// ---- hashing ---------------------------------------------------------------------

// FNV-1a over the canonical (sorted-key) JSON dump; stable across runs.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string config_hash(const nlohmann::json& j) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return std::string(buf);
}

}  // namespace nngpldp
