#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dgieti/geometry.hpp"
#include "dgieti/ieti.hpp"
#include "dgieti/verify.hpp"

namespace dgieti {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DomainKind { grid, annulus, file };
enum class SmoothnessMode { multiplicity, smoothness };
enum class SweepKind { none, hoverh, q, degree };
enum class OutputFormat { csv, json, md };

struct AlphaPattern {
  enum class Kind { constant, checkerboard, random } kind = Kind::constant;
  double lo = 1.0, hi = 1.0;  // constant uses lo
};

struct ExperimentConfig {
  DomainKind domain = DomainKind::grid;
  int nx = 3, ny = 3;
  std::string geometry_file;
  int degree = 2;
  SmoothnessMode mode = SmoothnessMode::multiplicity;
  int refine = 3;
  /// Levels whose breakpoints carry the elevated multiplicity; later levels insert simple knots.
  int coarse_level = 1;
  std::map<int, int> extra_refine;
  AlphaPattern alpha;
  Algorithm alg = Algorithm::C;
  ScalingKind scaling = ScalingKind::coefficient;
  double delta = 0.0;  // 0: default penalty
  double tol = 1e-6;
  int max_it = 1000;
  SweepKind sweep = SweepKind::none;
  std::vector<double> values;
  OutputFormat format = OutputFormat::csv;
  unsigned seed = 0;
  bool parallel_rows = false;
  bool timings = false;  // off: timing columns are written as 0 so output is reproducible

  void validate() const {
    if (domain != DomainKind::file && (nx < 1 || ny < 1)) throw ConfigError("grid dimensions must be positive");
    if (domain == DomainKind::file && geometry_file.empty()) throw ConfigError("geometry file path is empty");
    if (degree < 1) throw ConfigError("degree must be >= 1");
    if (refine < 0 || coarse_level < 0) throw ConfigError("refinement levels must be non-negative");
    for (const auto& [k, r] : extra_refine)
      if (k < 0 || r < 0) throw ConfigError("extra refinements need a non-negative patch index and count");
    if (!(alpha.lo > 0.0) || !(alpha.hi > 0.0)) throw ConfigError("diffusion coefficients must be positive");
    if (delta < 0.0) throw ConfigError("penalty must be positive");
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("tol must lie in (0,1)");
    if (max_it < 1) throw ConfigError("max-it must be >= 1");
    if (sweep != SweepKind::none && values.empty()) throw ConfigError("sweep value list is empty");
    if (sweep == SweepKind::degree && domain == DomainKind::file)
      throw ConfigError("a degree sweep needs a generated domain (grid or annulus)");
    for (double v : values) {
      if (sweep == SweepKind::degree && (v < 1 || v != std::floor(v))) throw ConfigError("degrees must be positive integers");
      if ((sweep == SweepKind::hoverh || sweep == SweepKind::q) && !is_power_of_two(v))
        throw ConfigError("H/h and q sweep values must be powers of two");
    }
  }

  static bool is_power_of_two(double v) {
    if (!(v >= 1.0)) return false;
    const double l = std::log2(v);
    return std::abs(l - std::round(l)) < 1e-12;
  }
};

struct ResultRow {
  int dofs = 0;
  double H_over_h = 0.0;
  double q = 1.0;
  int p = 0;
  double kappa = 1.0;
  int iterations = 0;
  double setup_s = 0.0;
  double solve_s = 0.0;
};

struct SweepResult {
  std::vector<ResultRow> rows;       // successful rows in sweep order
  std::vector<std::string> failures; // one diagnostic per failed row
  bool ok() const { return failures.empty(); }
};

// ---------------------------------------------------------------------------
// geometry files

/// {"dim": 2, "patches": [{"degree": [p,p], "knots": [[..],[..]],
/// "control_points": [[x,y],..]}], "boundary": [{"patch", "side", "tag"}]}.
/// Control points are listed with the first parameter direction running fastest.
inline MultiPatch parse_geometry(const nlohmann::json& j) {
  try {
    if (j.at("dim").get<int>() != 2) throw ConfigError("geometry: only dim = 2 is supported");
    MultiPatch mp;
    for (const auto& pj : j.at("patches")) {
      const auto deg = pj.at("degree").get<std::vector<int>>();
      const auto knots = pj.at("knots").get<std::vector<std::vector<double>>>();
      if (deg.size() != 2 || knots.size() != 2) throw ConfigError("geometry: degree and knots need two directions");
      TensorBasis basis(KnotVector(deg[0], knots[0]), KnotVector(deg[1], knots[1]));
      std::vector<Point2> cps;
      for (const auto& c : pj.at("control_points")) {
        const auto v = c.get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError("geometry: control points need two coordinates");
        cps.push_back({v[0], v[1]});
      }
      if (static_cast<int>(cps.size()) != basis.size())
        throw ConfigError("geometry: patch " + std::to_string(mp.patches.size()) + " has " + std::to_string(cps.size()) +
                          " control points, expected " + std::to_string(basis.size()));
      mp.patches.push_back({std::move(basis), std::move(cps)});
    }
    if (mp.patches.empty()) throw ConfigError("geometry: no patches");
    std::vector<BoundarySide> tags;
    if (j.contains("boundary"))
      for (const auto& b : j.at("boundary")) {
        const int k = b.at("patch").get<int>();
        if (k < 0 || k >= mp.size()) throw ConfigError("geometry: boundary entry names a missing patch");
        const auto tag = b.at("tag").get<std::string>();
        if (tag != "dirichlet" && tag != "neumann") throw ConfigError("geometry: unknown boundary tag '" + tag + "'");
        tags.push_back({k, parse_side(b.at("side").get<std::string>()),
                        tag == "dirichlet" ? BoundaryTag::dirichlet : BoundaryTag::neumann});
      }
    mp.topology = build_topology(mp.patches, -1.0, tags);
    return mp;
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  } catch (const TopologyError& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
}

inline MultiPatch load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open geometry file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("geometry file " + path + ": " + e.what());
  }
  return parse_geometry(j);
}

inline nlohmann::json geometry_to_json(const MultiPatch& mp) {
  nlohmann::json j;
  j["dim"] = 2;
  j["patches"] = nlohmann::json::array();
  for (const auto& P : mp.patches) {
    nlohmann::json pj;
    pj["degree"] = {P.basis.direction(0).degree(), P.basis.direction(1).degree()};
    pj["knots"] = {P.basis.direction(0).knots(), P.basis.direction(1).knots()};
    pj["control_points"] = nlohmann::json::array();
    for (const auto& c : P.control_points) pj["control_points"].push_back({c[0], c[1]});
    j["patches"].push_back(pj);
  }
  j["boundary"] = nlohmann::json::array();
  for (const auto& b : mp.topology.boundary)
    j["boundary"].push_back({{"patch", b.patch},
                             {"side", side_name(b.side)},
                             {"tag", b.tag == BoundaryTag::dirichlet ? "dirichlet" : "neumann"}});
  return j;
}

// ---------------------------------------------------------------------------
// instances

/// Data of every sweep row: a smooth non-polynomial source and Dirichlet trace
/// so that no primal space reproduces the solution exactly.
inline ProblemData default_problem() {
  ProblemData d;
  d.f = [](const Point2& x) { return 1.0 + x[0] * x[1]; };
  d.g_D = [](const Point2& x) { return 1.0 + std::sin(2.0 * x[1]); };
  return d;
}

struct RunPoint {
  int p = 2;
  int refine = 0;
  int q_level = 0;  // extra refinements of the refined patch set
};

inline int patch_count(const ExperimentConfig& cfg, const MultiPatch* file_mesh) {
  return cfg.domain == DomainKind::file ? file_mesh->size() : cfg.nx * cfg.ny;
}

/// Patches refined by a q sweep: the odd cells of the checkerboard for
/// generated domains, odd indices for files.
inline bool in_refined_set(const ExperimentConfig& cfg, int k) {
  if (cfg.domain == DomainKind::file) return k % 2 == 1;
  return (k % cfg.nx + k / cfg.nx) % 2 == 1;
}

inline std::vector<double> coefficients(const ExperimentConfig& cfg, int N) {
  std::vector<double> a(N, cfg.alpha.lo);
  std::mt19937 rng(cfg.seed);
  for (int k = 0; k < N; ++k) switch (cfg.alpha.kind) {
      case AlphaPattern::Kind::constant: break;
      case AlphaPattern::Kind::checkerboard: {
        const bool odd = cfg.domain == DomainKind::file ? k % 2 == 1 : (k % cfg.nx + k / cfg.nx) % 2 == 1;
        a[k] = odd ? cfg.alpha.hi : cfg.alpha.lo;
        break;
      }
      case AlphaPattern::Kind::random: a[k] = (rng() & 1u) ? cfg.alpha.hi : cfg.alpha.lo; break;
    }
  return a;
}

inline MultiPatch build_mesh(const ExperimentConfig& cfg, const RunPoint& pt, const MultiPatch* file_mesh = nullptr) {
  const int N = patch_count(cfg, file_mesh);
  for (const auto& [k, r] : cfg.extra_refine)
    if (k >= N) throw ConfigError("extra refinement names patch " + std::to_string(k) + " but there are " + std::to_string(N));
  std::vector<int> extra(N, 0);
  for (int k = 0; k < N; ++k) {
    const auto it = cfg.extra_refine.find(k);
    extra[k] = (it == cfg.extra_refine.end() ? 0 : it->second) + (in_refined_set(cfg, k) ? pt.q_level : 0);
  }
  if (cfg.domain == DomainKind::file) {
    MultiPatch mp;
    for (int k = 0; k < N; ++k) mp.patches.push_back(refine_patch(file_mesh->patches[k], pt.refine + extra[k]));
    std::vector<BoundarySide> tags(file_mesh->topology.boundary.begin(), file_mesh->topology.boundary.end());
    mp.topology = build_topology(mp.patches, -1.0, tags);
    return mp;
  }
  const int coarse = std::min(cfg.coarse_level, pt.refine);
  const int mult = cfg.mode == SmoothnessMode::multiplicity ? std::max(1, pt.p - 1) : 1;
  for (int& e : extra) e += pt.refine - coarse;
  return cfg.domain == DomainKind::grid ? multipatch_rectangle(cfg.nx, cfg.ny, pt.p, coarse, extra, mult)
                                        : quarter_annulus(cfg.nx, cfg.ny, pt.p, coarse, extra, mult);
}

inline std::vector<RunPoint> run_points(const ExperimentConfig& cfg) {
  RunPoint base{cfg.degree, cfg.refine, 0};
  if (cfg.sweep == SweepKind::none) return {base};
  std::vector<RunPoint> pts;
  for (double v : cfg.values) {
    RunPoint pt = base;
    switch (cfg.sweep) {
      case SweepKind::hoverh: pt.refine = static_cast<int>(std::lround(std::log2(v))); break;
      case SweepKind::q: pt.q_level = static_cast<int>(std::lround(std::log2(v))); break;
      case SweepKind::degree: pt.p = static_cast<int>(v); break;
      case SweepKind::none: break;
    }
    pts.push_back(pt);
  }
  return pts;
}

/// Largest mesh-size ratio over all interfaces.
inline double max_interface_ratio(const Discretization& disc) {
  double q = 1.0;
  for (const auto& F : disc.mp.topology.interfaces)
    q = std::max({q, disc.h[F.k] / disc.h[F.l], disc.h[F.l] / disc.h[F.k]});
  return q;
}

inline Discretization make_discretization(const ExperimentConfig& cfg, const RunPoint& pt, const MultiPatch* file_mesh) {
  MultiPatch mp = build_mesh(cfg, pt, file_mesh);
  const int N = mp.size();
  DiscretizationConfig dc;
  dc.delta = cfg.delta;
  return Discretization(std::move(mp), CoefficientField(coefficients(cfg, N)), dc);
}

inline IetiConfig ieti_config(const ExperimentConfig& cfg) {
  IetiConfig ic;
  ic.alg = cfg.alg;
  ic.scaling = cfg.scaling;
  ic.tol = cfg.tol;
  ic.max_it = cfg.max_it;
  return ic;
}

inline ResultRow run_point(const ExperimentConfig& cfg, const RunPoint& pt, const MultiPatch* file_mesh) {
  const Discretization disc = make_discretization(cfg, pt, file_mesh);
  const IetiSystem sys(disc, default_problem(), ieti_config(cfg));
  const IetiSolution sol = sys.solve();
  const auto& rep = sol.report;
  if (!rep.converged) {
    std::ostringstream os;
    os << "PCG did not reach the tolerance in " << rep.iterations << " iterations (reduction " << rep.reduction << ")";
    throw SolveError(os.str());
  }
  ResultRow row;
  row.dofs = rep.dofs;
  row.H_over_h = rep.H_over_h;
  row.q = max_interface_ratio(disc);
  row.p = disc.max_degree();
  row.kappa = rep.kappa;
  row.iterations = rep.iterations;
  if (cfg.timings) {
    row.setup_s = rep.setup_seconds + rep.factorization_seconds + rep.coarse_seconds;
    row.solve_s = rep.solve_seconds;
  }
  return row;
}

inline std::string describe(const RunPoint& pt) {
  std::ostringstream os;
  os << "row p=" << pt.p << " refine=" << pt.refine << " q_level=" << pt.q_level;
  return os.str();
}

inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::unique_ptr<MultiPatch> file_mesh;
  if (cfg.domain == DomainKind::file) file_mesh = std::make_unique<MultiPatch>(load_geometry(cfg.geometry_file));
  const auto pts = run_points(cfg);

  using Outcome = std::variant<ResultRow, std::string>;
  auto attempt = [&](const RunPoint& pt) -> Outcome {
    try {
      return run_point(cfg, pt, file_mesh.get());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      return describe(pt) + ": " + e.what();
    }
  };
  std::vector<Outcome> outcomes;
  if (cfg.parallel_rows) {
    std::vector<std::future<Outcome>> futures;
    for (const auto& pt : pts) futures.push_back(std::async(std::launch::async, attempt, pt));
    for (auto& f : futures) outcomes.push_back(f.get());
  } else {
    for (const auto& pt : pts) outcomes.push_back(attempt(pt));
  }
  SweepResult res;
  for (auto& o : outcomes) {
    if (auto* r = std::get_if<ResultRow>(&o)) res.rows.push_back(*r);
    else res.failures.push_back(std::get<std::string>(o));
  }
  return res;
}

// ---------------------------------------------------------------------------
// tables

using Cell = std::variant<long long, double>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> c{"dofs", "H_over_h", "q", "p", "kappa", "iterations", "setup_s", "solve_s"};
  return c;
}

inline Table to_table(const std::vector<ResultRow>& rows) {
  Table t{result_columns(), {}};
  for (const auto& r : rows)
    t.rows.push_back({Cell(static_cast<long long>(r.dofs)), Cell(r.H_over_h), Cell(r.q), Cell(static_cast<long long>(r.p)),
                      Cell(r.kappa), Cell(static_cast<long long>(r.iterations)), Cell(r.setup_s), Cell(r.solve_s)});
  return t;
}

inline Table to_table(const std::vector<ConvergenceRow>& rows) {
  Table t{{"level", "h", "dofs", "error", "order"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({Cell(static_cast<long long>(r.level)), Cell(r.h), Cell(static_cast<long long>(r.dofs)), Cell(r.error),
                      Cell(r.order)});
  return t;
}

inline std::string format_cell(const Cell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", std::get<double>(c));
  return buf;
}

inline std::string emit_table(const Table& t, OutputFormat fmt) {
  std::ostringstream os;
  switch (fmt) {
    case OutputFormat::csv: {
      for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
      os << '\n';
      for (const auto& r : t.rows) {
        for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_cell(r[c]);
        os << '\n';
      }
      break;
    }
    case OutputFormat::md: {
      std::vector<std::size_t> w(t.columns.size());
      for (std::size_t c = 0; c < w.size(); ++c) w[c] = t.columns[c].size();
      for (const auto& r : t.rows)
        for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], format_cell(r[c]).size());
      auto line = [&](const std::vector<std::string>& cells) {
        os << '|';
        for (std::size_t c = 0; c < cells.size(); ++c) os << ' ' << std::string(w[c] - cells[c].size(), ' ') << cells[c] << " |";
        os << '\n';
      };
      line(t.columns);
      os << '|';
      for (std::size_t c = 0; c < w.size(); ++c) os << std::string(w[c] + 1, '-') << ":|";
      os << '\n';
      for (const auto& r : t.rows) {
        std::vector<std::string> cells;
        for (const auto& v : r) cells.push_back(format_cell(v));
        line(cells);
      }
      break;
    }
    case OutputFormat::json: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : t.rows) {
        nlohmann::json o = nlohmann::json::object();
        for (std::size_t c = 0; c < r.size(); ++c) std::visit([&](auto v) { o[t.columns[c]] = v; }, r[c]);
        arr.push_back(o);
      }
      os << arr.dump(2) << '\n';
      break;
    }
  }
  return os.str();
}

inline std::string emit_table(const std::vector<ResultRow>& rows, OutputFormat fmt) { return emit_table(to_table(rows), fmt); }

/// Inverse of the json emitter for result tables.
inline std::vector<ResultRow> parse_result_json(const std::string& text) {
  std::vector<ResultRow> out;
  for (const auto& o : nlohmann::json::parse(text)) {
    ResultRow r;
    r.dofs = o.at("dofs").get<int>();
    r.H_over_h = o.at("H_over_h").get<double>();
    r.q = o.at("q").get<double>();
    r.p = o.at("p").get<int>();
    r.kappa = o.at("kappa").get<double>();
    r.iterations = o.at("iterations").get<int>();
    r.setup_s = o.at("setup_s").get<double>();
    r.solve_s = o.at("solve_s").get<double>();
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// option parsing helpers shared by the CLI and tests

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty value list '" + s + "'");
  return out;
}

/// "hoverh:8,16" | "q:1,2" | "degree:2,3"
inline void parse_sweep(const std::string& s, ExperimentConfig& cfg) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("sweep must look like NAME:LIST");
  const std::string name = s.substr(0, colon);
  if (name == "hoverh") cfg.sweep = SweepKind::hoverh;
  else if (name == "q") cfg.sweep = SweepKind::q;
  else if (name == "degree") cfg.sweep = SweepKind::degree;
  else throw ConfigError("unknown sweep '" + name + "' (hoverh, q, degree)");
  cfg.values = parse_list(s.substr(colon + 1));
}

/// "constant:V" | "checkerboard:LO:HI" | "random:LO:HI"
inline AlphaPattern parse_alpha(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  auto num = [&](const std::string& v) { return parse_list(v).at(0); };
  AlphaPattern a;
  if (parts.size() == 2 && parts[0] == "constant") {
    a.lo = a.hi = num(parts[1]);
  } else if (parts.size() == 3 && (parts[0] == "checkerboard" || parts[0] == "random")) {
    a.kind = parts[0] == "checkerboard" ? AlphaPattern::Kind::checkerboard : AlphaPattern::Kind::random;
    a.lo = num(parts[1]);
    a.hi = num(parts[2]);
  } else {
    throw ConfigError("alpha must be constant:V, checkerboard:LO:HI or random:LO:HI");
  }
  return a;
}

/// "k:r,k:r"
inline std::map<int, int> parse_extra_refine(const std::string& s) {
  std::map<int, int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      std::size_t a = 0, b = 0;
      const int k = std::stoi(item.substr(0, colon), &a);
      const int r = std::stoi(item.substr(colon + 1), &b);
      if (a != colon || b != item.size() - colon - 1) throw std::invalid_argument(item);
      out[k] = r;
    } catch (const std::exception&) {
      throw ConfigError("extra refinement entries must look like PATCH:COUNT, got '" + item + "'");
    }
  }
  return out;
}

}  // namespace dgieti
