#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cle/cli.hpp"
#include "cle/errors.hpp"
#include "cle/fokker_planck.hpp"
#include "cle/kramers.hpp"

namespace cle::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads an object and remembers which keys were consumed, so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const std::string& path() const { return path_; }
  std::string at_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* j = find(key);
    if (!j) throw ConfigError(at_path(key) + ": required key is missing");
    return *j;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + at_path(it.key()) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

double as_double(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": must be finite");
  return v;
}

double as_positive(const json& j, const std::string& where) {
  const double v = as_double(j, where);
  if (!(v > 0.0)) throw ConfigError(where + ": must be positive");
  return v;
}

std::uint64_t as_u64(const json& j, const std::string& where) {
  if (!j.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
  return j.get<std::uint64_t>();
}

std::size_t as_size(const json& j, const std::string& where) { return static_cast<std::size_t>(as_u64(j, where)); }

bool as_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

std::vector<double> as_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(as_double(j[i], where + "[" + std::to_string(i) + "]"));
  return v;
}

std::vector<std::vector<double>> as_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
  std::vector<std::vector<double>> m;
  for (std::size_t i = 0; i < j.size(); ++i) m.push_back(as_vector(j[i], where + "[" + std::to_string(i) + "]"));
  for (const auto& row : m) {
    if (row.size() != m.front().size() || row.empty()) throw ConfigError(where + ": rows differ in length");
  }
  return m;
}

template <class T, class F>
T get_or(Section& s, const std::string& key, T fallback, F conv) {
  const json* j = s.find(key);
  return j ? conv(*j, s.at_path(key)) : fallback;
}

double get_positive(Section& s, const std::string& key, double fallback) {
  return get_or(s, key, fallback, as_positive);
}
std::size_t get_size(Section& s, const std::string& key, std::size_t fallback) {
  return get_or(s, key, fallback, as_size);
}
bool get_bool(Section& s, const std::string& key, bool fallback) { return get_or(s, key, fallback, as_bool); }
std::string get_string(Section& s, const std::string& key, std::string fallback) {
  return get_or(s, key, std::move(fallback), as_string);
}

std::string one_of(const std::string& value, std::initializer_list<const char*> allowed, const std::string& where) {
  std::string list;
  for (const char* a : allowed) {
    if (value == a) return value;
    list += (list.empty() ? "" : ", ") + std::string(a);
  }
  throw ConfigError(where + ": unknown value '" + value + "' (expected one of " + list + ")");
}

// Axes are written as [lower, upper, count].
std::vector<Axis> as_axes(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || j.size() > 3) throw ConfigError(where + ": expected 1 to 3 axes");
  std::vector<Axis> axes;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    const json& a = j[i];
    if (!a.is_array() || a.size() != 3) throw ConfigError(w + ": expected [lower, upper, count]");
    axes.push_back({as_double(a[0], w), as_double(a[1], w), as_size(a[2], w)});
  }
  return axes;
}

std::vector<Axis> grid_axes(const json& j, const std::string& where, Centering centering) {
  Section s(j, where);
  std::vector<Axis> axes = as_axes(s.require("axes"), s.at_path("axes"));
  s.finish();
  try {
    GridSpec check(axes, centering);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return axes;
}

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& m) {
  Eigen::MatrixXd out(m.size(), m.empty() ? 0 : m.front().size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j];
  return out;
}

void require_square(const std::vector<std::vector<double>>& m, std::size_t n, const std::string& where) {
  if (m.size() != n || m.front().size() != n)
    throw ConfigError(where + ": expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
}

void require_size(const std::vector<double>& v, std::size_t n, const std::string& where) {
  if (v.size() != n) throw ConfigError(where + ": expected " + std::to_string(n) + " entries");
}

SimConfig parse_sim(Section& s) {
  SimConfig c;
  c.dt = get_positive(s, "dt", c.dt);
  c.steps = get_size(s, "steps", c.steps);
  c.n_traj = get_size(s, "n_traj", c.n_traj);
  c.burn_in = get_size(s, "burn_in", c.burn_in);
  c.record_stride = get_size(s, "record_stride", c.record_stride);
  c.boundary_policy = boundary_policy_from_string(get_string(s, "boundary_policy", to_string(c.boundary_policy)));
  c.max_redraws = get_size(s, "max_redraws", c.max_redraws);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(s.path() + ": " + e.what());
  }
  return c;
}

void sim_to_json(ordered_json& o, const SimConfig& c) {
  o["dt"] = c.dt;
  o["steps"] = c.steps;
  o["n_traj"] = c.n_traj;
  o["burn_in"] = c.burn_in;
  o["record_stride"] = c.record_stride;
  o["boundary_policy"] = to_string(c.boundary_policy);
  o["max_redraws"] = c.max_redraws;
}

ordered_json axes_to_json(const std::vector<Axis>& axes) {
  ordered_json a = ordered_json::array();
  for (const Axis& ax : axes) a.push_back(ordered_json::array({ax.lower, ax.upper, ax.count}));
  return {{"axes", a}};
}

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(what + " '" + path.string() + "' does not exist or cannot be read");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

ModelConfig parse_model(const json& j, const fs::path& base_dir) {
  Section s(j, "model");
  ModelConfig m;
  m.type = one_of(get_string(s, "type", m.type), {"network", "linear"}, "model.type");
  m.chart = chart_from_string(get_string(s, "chart", to_string(m.chart)));
  if (m.type == "network") {
    const json* file = s.find("file");
    const json* inline_net = s.find("network");
    if ((file != nullptr) == (inline_net != nullptr))
      throw ConfigError("model: give exactly one of 'file' and 'network'");
    if (file) {
      fs::path p = as_string(*file, "model.file");
      if (p.is_relative()) p = base_dir / p;
      m.network = parse_network(read_json_file(p, "model file"));
    } else {
      m.network = parse_network(*inline_net);
    }
  } else {
    m.drift_matrix = as_matrix(s.require("drift_matrix"), "model.drift_matrix");
    const std::size_t n = m.drift_matrix.size();
    require_square(m.drift_matrix, n, "model.drift_matrix");
    m.offset = s.has("offset") ? as_vector(*s.find("offset"), "model.offset") : std::vector<double>(n, 0.0);
    require_size(m.offset, n, "model.offset");
    m.noise = as_matrix(s.require("noise"), "model.noise");
    if (m.noise.size() != n) throw ConfigError("model.noise: expected " + std::to_string(n) + " rows");
    if (m.chart != Chart::concentration) throw ConfigError("model.chart: linear models use the concentration chart");
  }
  s.finish();
  return m;
}

std::size_t model_dimension(const ModelConfig& m) {
  return m.type == "network" ? m.network->species_count() : m.drift_matrix.size();
}

SdeConfig parse_sde(const json& j, std::optional<std::size_t> n) {
  Section s(j, "sde");
  SdeConfig c;
  c.mode = one_of(get_string(s, "mode", c.mode), {"overdamped", "underdamped"}, "sde.mode");
  c.mass = get_positive(s, "mass", c.mass);
  c.sim = parse_sim(s);
  Section init(s.require("initial"), "sde.initial");
  c.initial.q = as_vector(init.require("q"), "sde.initial.q");
  if (init.has("p")) c.initial.p = as_vector(*init.find("p"), "sde.initial.p");
  if (init.has("sd")) c.initial.sd = as_vector(*init.find("sd"), "sde.initial.sd");
  init.finish();
  const std::size_t dim = n.value_or(c.initial.q.size());
  require_size(c.initial.q, dim, "sde.initial.q");
  if (!c.initial.p.empty()) require_size(c.initial.p, dim, "sde.initial.p");
  if (!c.initial.sd.empty()) {
    require_size(c.initial.sd, dim, "sde.initial.sd");
    for (double v : c.initial.sd)
      if (v < 0.0) throw ConfigError("sde.initial.sd: must be non-negative");
  }
  if (const json* h = s.find("histogram")) {
    c.histogram = grid_axes(*h, "sde.histogram", Centering::cell);
    if (c.histogram->size() != dim) throw ConfigError("sde.histogram: dimension differs from the model");
  }
  s.finish();
  return c;
}

HodgeConfig parse_hodge(const json& j, std::optional<std::size_t> n) {
  Section s(j, "hodge");
  HodgeConfig c;
  c.field = one_of(get_string(s, "field", c.field), {"model", "linear_gradient", "rotation", "constant"},
                   "hodge.field");
  c.grid = grid_axes(s.require("grid"), "hodge.grid", Centering::node);
  if (c.grid.size() < 2) throw ConfigError("hodge.grid: decomposition needs 2 or 3 axes");
  if (c.field == "constant") {
    c.constant = as_vector(s.require("constant"), "hodge.constant");
    require_size(c.constant, c.grid.size(), "hodge.constant");
  }
  if (c.field == "model") {
    if (!n) throw ConfigError("hodge.field 'model' needs a model section");
    if (*n != c.grid.size()) throw ConfigError("hodge.grid: dimension differs from the model");
  }
  c.rel_tol = get_positive(s, "rel_tol", c.rel_tol);
  c.quality_factor = get_positive(s, "quality_factor", c.quality_factor);
  c.pure_threshold = get_positive(s, "pure_threshold", c.pure_threshold);
  s.finish();
  return c;
}

FokkerPlanckConfig parse_fp(const json& j, std::optional<std::size_t> n) {
  Section s(j, "fokker_planck");
  FokkerPlanckConfig c;
  c.grid = grid_axes(s.require("grid"), "fokker_planck.grid", Centering::cell);
  const std::size_t dim = c.grid.size();
  const json& d = s.require("diffusion");
  if (d.is_string()) {
    one_of(d.get<std::string>(), {"from_model"}, "fokker_planck.diffusion");
    c.diffusion_from_model = true;
  } else {
    c.diffusion = as_matrix(d, "fokker_planck.diffusion");
    require_square(c.diffusion, dim, "fokker_planck.diffusion");
  }
  Section p(s.require("potential"), "fokker_planck.potential");
  c.potential.type = one_of(get_string(p, "type", c.potential.type), {"quadratic", "from_model"},
                            "fokker_planck.potential.type");
  if (c.potential.type == "quadratic") {
    c.potential.matrix = as_matrix(p.require("matrix"), "fokker_planck.potential.matrix");
    require_square(c.potential.matrix, dim, "fokker_planck.potential.matrix");
    c.potential.center = p.has("center") ? as_vector(*p.find("center"), "fokker_planck.potential.center")
                                         : std::vector<double>(dim, 0.0);
    require_size(c.potential.center, dim, "fokker_planck.potential.center");
  }
  p.finish();
  if ((c.diffusion_from_model || c.potential.type == "from_model")) {
    if (!n) throw ConfigError("fokker_planck: 'from_model' needs a model section");
    if (*n != dim) throw ConfigError("fokker_planck.grid: dimension differs from the model");
  }
  if (s.has("tilt")) {
    c.tilt = as_vector(*s.find("tilt"), "fokker_planck.tilt");
    require_size(c.tilt, dim, "fokker_planck.tilt");
  }
  c.fp_drift = one_of(get_string(s, "fp_drift", c.fp_drift), {"harmonic", "full"}, "fokker_planck.fp_drift");
  c.method = to_string(steady_method_from_string(get_string(s, "method", c.method)));
  c.compare_methods = get_bool(s, "compare_methods", c.compare_methods);
  c.tol = get_positive(s, "tol", c.tol);
  c.max_steps = get_size(s, "max_steps", c.max_steps);
  if (c.max_steps == 0) throw ConfigError("fokker_planck.max_steps: must be positive");
  s.finish();
  return c;
}

KramersConfig parse_kramers(const json& j, std::optional<std::size_t> n) {
  Section s(j, "kramers");
  KramersConfig c;
  if (s.has("masses")) c.masses = as_vector(*s.find("masses"), "kramers.masses");
  if (c.masses.empty()) throw ConfigError("kramers.masses: needs at least one mass");
  for (std::size_t i = 0; i < c.masses.size(); ++i) {
    if (!(c.masses[i] > 0.0)) throw ConfigError("kramers.masses: must be positive");
    if (i > 0 && !(c.masses[i] < c.masses[i - 1])) throw ConfigError("kramers.masses: must be strictly decreasing");
  }
  if (const json* g = s.find("grid")) {
    c.grid = grid_axes(*g, "kramers.grid", Centering::cell);
    if (n && *n != c.grid.size()) throw ConfigError("kramers.grid: dimension differs from the model");
  }
  c.batches = get_size(s, "batches", c.batches);
  if (c.batches < 2) throw ConfigError("kramers.batches: needs at least 2");
  c.terminal_threshold = get_positive(s, "terminal_threshold", c.terminal_threshold);
  if (const json* mc = s.find("momentum_check"); mc && !mc->is_null()) {
    Section m(*mc, "kramers.momentum_check");
    MomentumCheckConfig out;
    out.mass = get_positive(m, "mass", out.mass);
    out.tolerance = get_positive(m, "tolerance", out.tolerance);
    out.sim = parse_sim(m);
    m.finish();
    c.momentum_check = out;
  }
  if (const json* id = s.find("identities")) {
    Section t(*id, "kramers.identities");
    IdentityConfig& ic = c.identities;
    if (t.has("points")) {
      const json& pts = *t.find("points");
      if (!pts.is_array() || pts.size() < 2) throw ConfigError("kramers.identities.points: needs at least 2 sizes");
      ic.points.clear();
      for (const auto& p : pts) ic.points.push_back(as_size(p, "kramers.identities.points"));
      for (std::size_t i = 0; i < ic.points.size(); ++i) {
        if (ic.points[i] < 8) throw ConfigError("kramers.identities.points: at least 8 points per axis");
        if (i > 0 && ic.points[i] <= ic.points[i - 1])
          throw ConfigError("kramers.identities.points: must increase");
      }
    }
    ic.mass = get_positive(t, "mass", ic.mass);
    if (t.has("diffusion")) ic.diffusion = as_matrix(*t.find("diffusion"), "kramers.identities.diffusion");
    require_square(ic.diffusion, ic.diffusion.size(), "kramers.identities.diffusion");
    if (ic.diffusion.size() > 2) throw ConfigError("kramers.identities.diffusion: 1 or 2 dimensions");
    if (t.has("c")) ic.c = as_vector(*t.find("c"), "kramers.identities.c");
    require_size(ic.c, ic.diffusion.size(), "kramers.identities.c");
    ic.box_sigmas = get_positive(t, "box_sigmas", ic.box_sigmas);
    ic.centre_points = get_size(t, "centre_points", ic.centre_points);
    if (ic.centre_points % 2 == 0) throw ConfigError("kramers.identities.centre_points: must be odd");
    ic.normalization = to_string(kernel_normalization_from_string(get_string(t, "normalization", ic.normalization)));
    ic.defect_threshold = get_positive(t, "defect_threshold", ic.defect_threshold);
    ic.min_slope = get_positive(t, "min_slope", ic.min_slope);
    t.finish();
  }
  s.finish();
  return c;
}

PipelineConfig parse_pipeline(const json& j) {
  Section s(j, "pipeline");
  PipelineConfig c;
  c.count = get_size(s, "count", c.count);
  if (c.count < 4) throw ConfigError("pipeline.count: at least 4 cells per axis");
  c.sigmas = get_positive(s, "sigmas", c.sigmas);
  c.fp_drift = one_of(get_string(s, "fp_drift", c.fp_drift), {"harmonic", "full"}, "pipeline.fp_drift");
  c.threshold = get_positive(s, "threshold", c.threshold);
  c.mean_se_bound = get_positive(s, "mean_se_bound", c.mean_se_bound);
  c.write_ensemble = get_bool(s, "write_ensemble", c.write_ensemble);
  s.finish();
  return c;
}

}  // namespace

ReactionNetwork parse_network(const json& doc) {
  Section s(doc, "network");
  const json& sp = s.require("species");
  if (!sp.is_array() || sp.empty()) throw ConfigError("network.species: expected a non-empty array of names");
  std::vector<std::string> species;
  for (const auto& name : sp) species.push_back(as_string(name, "network.species"));
  const double volume = as_positive(s.require("volume"), "network.volume");
  const json& rx = s.require("reactions");
  if (!rx.is_array() || rx.empty()) throw ConfigError("network.reactions: expected a non-empty array");
  std::vector<Reaction> reactions;
  for (std::size_t r = 0; r < rx.size(); ++r) {
    Section rs(rx[r], "network.reactions[" + std::to_string(r) + "]");
    Reaction reaction;
    auto ints = [&](const char* key) {
      const json& a = rs.require(key);
      if (!a.is_array()) throw ConfigError(rs.at_path(key) + ": expected an array of integers");
      std::vector<int> v;
      for (const auto& x : a) {
        if (!x.is_number_integer()) throw ConfigError(rs.at_path(key) + ": expected integers");
        v.push_back(x.get<int>());
      }
      return v;
    };
    reaction.stoichiometry = ints("stoichiometry");
    reaction.orders = ints("orders");
    reaction.rate = as_double(rs.require("rate"), rs.at_path("rate"));
    rs.finish();
    reactions.push_back(std::move(reaction));
  }
  s.finish();
  return ReactionNetwork(std::move(species), std::move(reactions), volume);
}

ordered_json network_to_json(const ReactionNetwork& network) {
  ordered_json o;
  o["species"] = network.species();
  o["volume"] = network.volume();
  ordered_json rx = ordered_json::array();
  for (const Reaction& r : network.reactions()) {
    ordered_json e;
    e["stoichiometry"] = r.stoichiometry;
    e["rate"] = r.rate;
    e["orders"] = r.orders;
    rx.push_back(e);
  }
  o["reactions"] = rx;
  return o;
}

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
  Section s(doc, "");
  RunConfig c;
  c.seed = get_or(s, "seed", c.seed, as_u64);
  c.threads = get_size(s, "threads", c.threads);
  std::optional<std::size_t> n;
  if (const json* m = s.find("model")) {
    c.model = parse_model(*m, base_dir);
    n = model_dimension(*c.model);
  }
  if (const json* j = s.find("sde")) c.sde = parse_sde(*j, n);
  if (const json* j = s.find("hodge")) c.hodge = parse_hodge(*j, n);
  if (const json* j = s.find("fokker_planck")) c.fokker_planck = parse_fp(*j, n);
  if (const json* j = s.find("kramers")) c.kramers = parse_kramers(*j, n);
  if (const json* j = s.find("pipeline")) c.pipeline = parse_pipeline(*j);
  s.finish();
  return c;
}

RunConfig load_config(const fs::path& path) {
  const json doc = read_json_file(path, "config file");
  return parse_config(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

ordered_json to_json(const RunConfig& c) {
  ordered_json o;
  o["seed"] = c.seed;
  o["threads"] = c.threads;
  if (c.model) {
    const ModelConfig& m = *c.model;
    ordered_json j;
    j["type"] = m.type;
    j["chart"] = to_string(m.chart);
    if (m.type == "network") {
      j["network"] = network_to_json(*m.network);
    } else {
      j["drift_matrix"] = m.drift_matrix;
      j["offset"] = m.offset;
      j["noise"] = m.noise;
    }
    o["model"] = j;
  }
  if (c.sde) {
    const SdeConfig& s = *c.sde;
    ordered_json j;
    j["mode"] = s.mode;
    j["mass"] = s.mass;
    sim_to_json(j, s.sim);
    ordered_json init;
    init["q"] = s.initial.q;
    if (!s.initial.p.empty()) init["p"] = s.initial.p;
    if (!s.initial.sd.empty()) init["sd"] = s.initial.sd;
    j["initial"] = init;
    if (s.histogram) j["histogram"] = axes_to_json(*s.histogram);
    o["sde"] = j;
  }
  if (c.hodge) {
    const HodgeConfig& h = *c.hodge;
    ordered_json j;
    j["field"] = h.field;
    if (h.field == "constant") j["constant"] = h.constant;
    j["grid"] = axes_to_json(h.grid);
    j["rel_tol"] = h.rel_tol;
    j["quality_factor"] = h.quality_factor;
    j["pure_threshold"] = h.pure_threshold;
    o["hodge"] = j;
  }
  if (c.fokker_planck) {
    const FokkerPlanckConfig& f = *c.fokker_planck;
    ordered_json j;
    j["grid"] = axes_to_json(f.grid);
    if (f.diffusion_from_model) {
      j["diffusion"] = "from_model";
    } else {
      j["diffusion"] = f.diffusion;
    }
    ordered_json p;
    p["type"] = f.potential.type;
    if (f.potential.type == "quadratic") {
      p["matrix"] = f.potential.matrix;
      p["center"] = f.potential.center;
    }
    j["potential"] = p;
    if (!f.tilt.empty()) j["tilt"] = f.tilt;
    j["fp_drift"] = f.fp_drift;
    j["method"] = f.method;
    j["compare_methods"] = f.compare_methods;
    j["tol"] = f.tol;
    j["max_steps"] = f.max_steps;
    o["fokker_planck"] = j;
  }
  if (c.kramers) {
    const KramersConfig& k = *c.kramers;
    ordered_json j;
    j["masses"] = k.masses;
    if (!k.grid.empty()) j["grid"] = axes_to_json(k.grid);
    j["batches"] = k.batches;
    j["terminal_threshold"] = k.terminal_threshold;
    if (k.momentum_check) {
      ordered_json m;
      m["mass"] = k.momentum_check->mass;
      m["tolerance"] = k.momentum_check->tolerance;
      sim_to_json(m, k.momentum_check->sim);
      j["momentum_check"] = m;
    }
    const IdentityConfig& ic = k.identities;
    ordered_json t;
    t["points"] = ic.points;
    t["mass"] = ic.mass;
    t["diffusion"] = ic.diffusion;
    t["c"] = ic.c;
    t["box_sigmas"] = ic.box_sigmas;
    t["centre_points"] = ic.centre_points;
    t["normalization"] = ic.normalization;
    t["defect_threshold"] = ic.defect_threshold;
    t["min_slope"] = ic.min_slope;
    j["identities"] = t;
    o["kramers"] = j;
  }
  if (c.pipeline) {
    const PipelineConfig& p = *c.pipeline;
    ordered_json j;
    j["count"] = p.count;
    j["sigmas"] = p.sigmas;
    j["fp_drift"] = p.fp_drift;
    j["threshold"] = p.threshold;
    j["mean_se_bound"] = p.mean_se_bound;
    j["write_ensemble"] = p.write_ensemble;
    o["pipeline"] = j;
  }
  return o;
}

SDESystem build_model(const ModelConfig& m) {
  if (m.type == "network") {
    if (!m.network) throw ConfigError("model: network type without a network");
    const SDESystem base = build_cle(*m.network);
    return m.chart == Chart::concentration ? base : to_chart(base, m.chart);
  }
  return linear_system(to_eigen(m.drift_matrix),
                       Eigen::Map<const Eigen::VectorXd>(m.offset.data(), static_cast<Eigen::Index>(m.offset.size())),
                       to_eigen(m.noise));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  // FNV-1a over the stage name.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : stage) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

}  // namespace cle::cli
