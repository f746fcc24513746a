#include "bounce/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bounce/bounds.hpp"
#include "bounce/continuation.hpp"
#include "bounce/errors.hpp"
#include "bounce/svg.hpp"

namespace bounce {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing

struct RawValue {
  std::string value;
  int line = 0;
  mutable bool used = false;
};

using Section = std::map<std::string, RawValue>;
using RawConfig = std::map<std::string, Section>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

RawConfig parse_ini(const std::string& text, const std::string& origin) {
  RawConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      cfg[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (cfg[section].count(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg[section][key] = RawValue{val, lineno};
  }
  return cfg;
}

class ConfigReader {
 public:
  ConfigReader(RawConfig cfg, std::string origin) : cfg_(std::move(cfg)), origin_(std::move(origin)) {}

  bool has(const std::string& sec, const std::string& key) const {
    const auto s = cfg_.find(sec);
    return s != cfg_.end() && s->second.count(key);
  }

  std::string get_string(const std::string& sec, const std::string& key,
                         const std::string& fallback) const {
    if (!has(sec, key)) return fallback;
    const RawValue& rv = cfg_.at(sec).at(key);
    rv.used = true;
    return rv.value;
  }

  std::string require_string(const std::string& sec, const std::string& key) const {
    if (!has(sec, key))
      throw ConfigError(origin_ + ": missing required key '" + key + "' in section [" + sec + "]");
    return get_string(sec, key, "");
  }

  double get_double(const std::string& sec, const std::string& key, double fallback) const {
    if (!has(sec, key)) return fallback;
    return parse_double(sec, key);
  }

  double require_double(const std::string& sec, const std::string& key) const {
    if (!has(sec, key))
      throw ConfigError(origin_ + ": missing required key '" + key + "' in section [" + sec + "]");
    return parse_double(sec, key);
  }

  long long get_int(const std::string& sec, const std::string& key, long long fallback) const {
    if (!has(sec, key)) return fallback;
    const RawValue& rv = cfg_.at(sec).at(key);
    rv.used = true;
    try {
      size_t pos = 0;
      const long long v = std::stoll(rv.value, &pos);
      if (pos != rv.value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ":" + std::to_string(rv.line) + ": '" + key +
                        "' is not an integer: " + rv.value);
    }
  }

  bool get_bool(const std::string& sec, const std::string& key, bool fallback) const {
    if (!has(sec, key)) return fallback;
    const RawValue& rv = cfg_.at(sec).at(key);
    rv.used = true;
    if (rv.value == "true" || rv.value == "1") return true;
    if (rv.value == "false" || rv.value == "0") return false;
    throw ConfigError(origin_ + ":" + std::to_string(rv.line) + ": '" + key +
                      "' must be true/false");
  }

  void check_all_used() const {
    for (const auto& [sec, kv] : cfg_)
      for (const auto& [key, rv] : kv)
        if (!rv.used)
          throw ConfigError(origin_ + ":" + std::to_string(rv.line) + ": unknown key '" + key +
                            "' in section [" + sec + "]");
  }

 private:
  double parse_double(const std::string& sec, const std::string& key) const {
    const RawValue& rv = cfg_.at(sec).at(key);
    rv.used = true;
    try {
      size_t pos = 0;
      const double v = std::stod(rv.value, &pos);
      if (pos != rv.value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ":" + std::to_string(rv.line) + ": '" + key +
                        "' is not a number: " + rv.value);
    }
  }

  RawConfig cfg_;
  std::string origin_;
};

Vec read_vec(const ConfigReader& r, const std::string& sec, const std::string& prefix, int dim,
             const Vec& fallback) {
  static const char* axes[] = {"x", "y", "z", "w"};
  if (!r.has(sec, prefix + axes[0])) return fallback;
  Vec v = Vec::Zero(dim);
  for (int d = 0; d < dim; ++d) v[d] = r.get_double(sec, prefix + axes[d], 0.0);
  return v;
}

}  // namespace

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
  ConfigReader r(parse_ini(text, origin), origin);

  Scenario sc;
  sc.schema_version = static_cast<int>(r.get_int("", "schema_version", -1));
  if (sc.schema_version == -1)
    sc.schema_version = static_cast<int>(r.get_int("scenario", "schema_version", -1));
  if (sc.schema_version != 1)
    throw ConfigError(origin + ": schema_version = 1 is required at the top of the file");
  sc.name = r.get_string("scenario", "name", "scenario");

  sc.domain.kind = r.require_string("domain", "kind");
  if (sc.domain.kind == "disk") {
    sc.domain.radius = r.get_double("domain", "radius", 1.0);
    sc.domain.dim = static_cast<int>(r.get_int("domain", "dim", 2));
  } else if (sc.domain.kind == "ellipse" || sc.domain.kind == "smooth_rect") {
    sc.domain.a = r.require_double("domain", "a");
    sc.domain.b = r.require_double("domain", "b");
    if (sc.domain.kind == "smooth_rect")
      sc.domain.p = static_cast<int>(r.get_int("domain", "p", 4));
    sc.domain.dim = 2;
  } else {
    throw ConfigError(origin + ": unknown domain kind '" + sc.domain.kind +
                      "' (expected disk, ellipse, or smooth_rect)");
  }
  const int dim = sc.domain.dim;

  sc.d0 = r.get_double("collar", "d0", 0.0);

  sc.potential.kind = r.get_string("potential", "kind", "zero");
  if (sc.potential.kind == "linear") {
    sc.potential.g = read_vec(r, "potential", "g", dim, Vec::Zero(dim));
  } else if (sc.potential.kind == "harmonic") {
    sc.potential.omega = r.require_double("potential", "omega");
    sc.potential.center = read_vec(r, "potential", "c", dim, Vec::Zero(dim));
  } else if (sc.potential.kind == "gaussian_bump") {
    sc.potential.amplitude = r.require_double("potential", "amplitude");
    sc.potential.width = r.require_double("potential", "width");
    sc.potential.center = read_vec(r, "potential", "c", dim, Vec::Zero(dim));
  } else if (sc.potential.kind != "zero") {
    throw ConfigError(origin + ": unknown potential kind '" + sc.potential.kind + "'");
  }

  sc.energy = r.require_double("solve", "energy");
  sc.nodes = static_cast<int>(r.get_int("solve", "nodes", 256));
  sc.eps_start = r.get_double("solve", "eps_start", 1e-1);
  sc.eps_ratio = r.get_double("solve", "eps_ratio", 0.5);
  sc.eps_floor = r.get_double("solve", "eps_floor", 1e-5);
  sc.check_regularity = r.get_bool("solve", "check_regularity", true);
  sc.grad_tol = r.get_double("solve", "grad_tol", 1e-8);
  sc.seed = static_cast<unsigned long long>(r.get_int("solve", "seed", 0));
  sc.inits = static_cast<int>(r.get_int("solve", "inits", 1));
  sc.init.rx = r.get_double("solve", "init_rx", -1.0);
  sc.init.ry = r.get_double("solve", "init_ry", -1.0);
  sc.init.angle = r.get_double("solve", "init_angle", 0.0);
  sc.init.center = read_vec(r, "solve", "init_c", dim, Vec());

  sc.oracle.start = read_vec(r, "oracle", "start_", dim, Vec());
  sc.oracle.direction = read_vec(r, "oracle", "dir_", dim, Vec());
  sc.oracle.duration = r.get_double("oracle", "duration", 0.0);

  sc.output.summary = r.get_string("output", "summary", "summary.json");
  sc.output.trace = r.get_string("output", "trace", "trace.jsonl");
  sc.output.samples = r.get_string("output", "samples", "samples.csv");
  sc.output.plot = r.get_string("output", "plot", "orbit.svg");

  r.check_all_used();

  if (sc.nodes < 16) throw ConfigError(origin + ": nodes must be at least 16");
  if (sc.inits < 1) throw ConfigError(origin + ": inits must be at least 1");
  return sc;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

namespace {

// ---------------------------------------------------------------------------
// Pipeline helpers

std::unique_ptr<Domain> build_domain(const DomainSpec& d) {
  if (d.kind == "disk") return std::make_unique<DiskDomain>(d.dim, d.radius);
  if (d.kind == "ellipse") return std::make_unique<EllipseDomain>(d.a, d.b);
  if (d.kind == "smooth_rect") return std::make_unique<SmoothRectDomain>(d.a, d.b, d.p);
  throw ConfigError("unknown domain kind: " + d.kind);
}

std::unique_ptr<PotentialField> build_potential(const PotentialSpec& p, int dim) {
  if (p.kind == "zero") return std::make_unique<ZeroPotential>(dim);
  if (p.kind == "linear") {
    Vec g = p.g.size() == dim ? p.g : Vec::Zero(dim);
    return std::make_unique<LinearPotential>(std::move(g));
  }
  if (p.kind == "harmonic") {
    Vec c = p.center.size() == dim ? p.center : Vec::Zero(dim);
    return std::make_unique<HarmonicPotential>(p.omega, std::move(c));
  }
  if (p.kind == "gaussian_bump") {
    Vec c = p.center.size() == dim ? p.center : Vec::Zero(dim);
    return std::make_unique<GaussianBumpPotential>(p.amplitude, std::move(c), p.width);
  }
  throw ConfigError("unknown potential kind: " + p.kind);
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json event_json(const BounceEvent& ev) {
  return json{{"t", ev.t},
              {"point", vec_json(ev.point)},
              {"normal", vec_json(ev.normal)},
              {"v_in", vec_json(ev.v_in)},
              {"v_out", vec_json(ev.v_out)}};
}

json orbit_json(const BounceOrbit& orbit, int samples) {
  json events = json::array();
  for (const auto& ev : orbit.events) events.push_back(event_json(ev));
  json smp = json::array();
  for (int i = 0; i <= samples; ++i) {
    const double t = orbit.period * i / samples;
    const PhaseState s = orbit.state_at(t);
    json row = json::array();
    row.push_back(t);
    for (int d = 0; d < s.q.size(); ++d) row.push_back(s.q[d]);
    smp.push_back(row);
  }
  return json{{"period", orbit.period},
              {"energy", orbit.energy},
              {"bounce_count", orbit.bounce_count()},
              {"events", std::move(events)},
              {"samples", std::move(smp)}};
}

json bounds_json(const BoundsReport& b) {
  return json{{"energy", b.energy},
              {"v_min", b.v_min},
              {"v_max", b.v_max},
              {"grad_max", b.grad_max},
              {"diameter", b.diameter},
              {"dim", b.dim},
              {"lambda", b.lambda},
              {"c_value", b.c.value},
              {"c_margin", b.c.margin},
              {"displacement_bound", b.displacement},
              {"period_upper_bound", b.period_bound},
              {"corollary_threshold", b.threshold},
              {"max_bounces", b.max_bounces}};
}

json scenario_json(const Scenario& sc) {
  json dom{{"kind", sc.domain.kind}};
  if (sc.domain.kind == "disk") {
    dom["radius"] = sc.domain.radius;
    dom["dim"] = sc.domain.dim;
  } else {
    dom["a"] = sc.domain.a;
    dom["b"] = sc.domain.b;
    if (sc.domain.kind == "smooth_rect") dom["p"] = sc.domain.p;
  }
  json pot{{"kind", sc.potential.kind}};
  if (sc.potential.kind == "linear") pot["g"] = vec_json(sc.potential.g);
  if (sc.potential.kind == "harmonic") {
    pot["omega"] = sc.potential.omega;
    pot["center"] = vec_json(sc.potential.center);
  }
  if (sc.potential.kind == "gaussian_bump") {
    pot["amplitude"] = sc.potential.amplitude;
    pot["width"] = sc.potential.width;
    pot["center"] = vec_json(sc.potential.center);
  }
  return json{{"name", sc.name},
              {"schema_version", sc.schema_version},
              {"domain", std::move(dom)},
              {"potential", std::move(pot)},
              {"energy", sc.energy},
              {"nodes", sc.nodes},
              {"eps_start", sc.eps_start},
              {"eps_ratio", sc.eps_ratio},
              {"eps_floor", sc.eps_floor},
              {"seed", sc.seed},
              {"inits", sc.inits}};
}

json plot_json(const PlotData& data) {
  auto pts_json = [](const std::vector<Vec>& pts) {
    json a = json::array();
    for (const auto& p : pts) {
      json row = json::array();
      row.push_back(p[0]);
      row.push_back(p.size() > 1 ? p[1] : 0.0);
      a.push_back(row);
    }
    return a;
  };
  json arcs = json::array();
  for (const auto& arc : data.arcs) arcs.push_back(pts_json(arc));
  return json{{"box_lo", vec_json(data.box.lo)},
              {"box_hi", vec_json(data.box.hi)},
              {"boundary", pts_json(data.boundary)},
              {"arcs", std::move(arcs)},
              {"markers", pts_json(data.markers)}};
}

PlotData plot_data_from_json(const json& pj) {
  PlotData data;
  auto to_vecs = [](const json& a) {
    std::vector<Vec> out;
    for (const auto& row : a) {
      Vec v(2);
      v[0] = row.at(0).get<double>();
      v[1] = row.at(1).get<double>();
      out.push_back(std::move(v));
    }
    return out;
  };
  const auto lo = pj.at("box_lo"), hi = pj.at("box_hi");
  data.box.lo = Vec(lo.size());
  data.box.hi = Vec(hi.size());
  for (size_t i = 0; i < lo.size(); ++i) data.box.lo[i] = lo.at(i).get<double>();
  for (size_t i = 0; i < hi.size(); ++i) data.box.hi[i] = hi.at(i).get<double>();
  data.boundary = to_vecs(pj.at("boundary"));
  for (const auto& arc : pj.at("arcs")) data.arcs.push_back(to_vecs(arc));
  data.markers = to_vecs(pj.at("markers"));
  return data;
}

std::string samples_csv_from_orbit(const BounceOrbit& orbit, int samples) {
  std::string out = "t";
  const int dim = static_cast<int>(orbit.start.q.size());
  static const char* axes[] = {"x", "y", "z", "w"};
  for (int d = 0; d < dim; ++d) out += std::string(",") + axes[d];
  out += "\n";
  char buf[64];
  for (int i = 0; i <= samples; ++i) {
    const double t = orbit.period * i / samples;
    const PhaseState s = orbit.state_at(t);
    std::snprintf(buf, sizeof(buf), "%.12e", t);
    out += buf;
    for (int d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof(buf), ",%.12e", s.q[d]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

DiscreteLoop ellipse_loop(const Vec& center, double rx, double ry, double angle, int dim,
                          int nodes) {
  Mat pts(dim, nodes);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int i = 0; i < nodes; ++i) {
    const double th = 2.0 * M_PI * i / nodes;
    const double ex = rx * std::cos(th), ey = ry * std::sin(th);
    Vec q = center;
    q[0] += ca * ex - sa * ey;
    q[1] += sa * ex + ca * ey;
    pts.col(i) = q;
  }
  return DiscreteLoop{std::move(pts), 1.0};
}

// Shrinks the initial loop towards its center until every node is strictly
// feasible and, preferably, a stationary period exists at the starting eps.
// A loop whose mean of E - V - eps U is nonpositive is still usable — the
// solver pins the period and such branches end in collapse classification —
// so it is kept as a fallback when no candidate admits a stationary period.
DiscreteLoop feasible_init(const ActionContext& ctx, const Vec& center, double rx, double ry,
                           double angle, int nodes, double eps) {
  const int dim = ctx.domain->dim();
  std::optional<DiscreteLoop> fallback;
  for (int attempt = 0; attempt < 48; ++attempt) {
    DiscreteLoop loop = ellipse_loop(center, rx, ry, angle, dim, nodes);
    bool inside = true;
    try {
      for (int i = 0; i < nodes && inside; ++i)
        (void)penalty_value(*ctx.domain, *ctx.collar, loop.nodes.col(i));
    } catch (const std::exception&) {
      inside = false;
    }
    if (inside) {
      const double ts = stationary_tau(ctx, loop.nodes, eps);
      if (ts > 0.0) {
        loop.tau = std::max(ts, 1e-3);
        return loop;
      }
      if (!fallback) {
        loop.tau = 1.0;
        fallback = std::move(loop);
      }
    }
    rx *= 0.85;
    ry *= 0.85;
  }
  if (fallback) return *fallback;
  throw SolveError(
      "could not build a feasible initial loop: every candidate leaves the domain or the "
      "collar; shrink the initial loop, lower eps_start, or shrink the collar");
}

int thread_cap() {
  if (const char* env = std::getenv("BOUNCE_SOLVE_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      return 1;
    }
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

struct PipelineParts {
  std::unique_ptr<Domain> dom;
  CollarProfile collar{0.1};
  std::unique_ptr<PotentialField> pot;
  std::optional<BoundsReport> bounds;  // absent when E <= V_max (Lambda undefined)
};

PipelineParts build_parts(const Scenario& sc, bool need_regular) {
  PipelineParts parts;
  parts.dom = build_domain(sc.domain);
  parts.collar = sc.d0 > 0.0 ? CollarProfile::with_d0(*parts.dom, sc.d0)
                             : CollarProfile::for_domain(*parts.dom);
  parts.pot = build_potential(sc.potential, parts.dom->dim());
  attach_stats(*parts.pot, *parts.dom);
  if (need_regular && !(sc.energy > parts.pot->stats().v_max)) {
    std::ostringstream os;
    os << "scenario '" << sc.name << "': regular-level criterion violated: energy " << sc.energy
       << " must strictly exceed the potential maximum " << parts.pot->stats().v_max
       << " over the closed domain, otherwise the energy level set meets the zero-velocity "
          "region. Raise the energy or set check_regularity = false.";
    throw ConfigError(os.str());
  }
  if (sc.energy > parts.pot->stats().v_max)
    parts.bounds =
        make_bounds_report(sc.energy, parts.pot->stats(), parts.dom->diameter(), parts.dom->dim());
  return parts;
}

Scenario apply_overrides(Scenario sc, const CliOverrides& ovr) {
  if (ovr.seed) sc.seed = *ovr.seed;
  if (ovr.eps_floor) sc.eps_floor = *ovr.eps_floor;
  if (ovr.nodes) sc.nodes = *ovr.nodes;
  return sc;
}

double point_to_segment(const Vec& p, const Vec& a, const Vec& b) {
  const Vec ab = b - a;
  const double den = ab.squaredNorm();
  if (den == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / den, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Hausdorff distance between closed polylines (points measured against the
// other curve's segments, so sampling density does not inflate the value).
double hausdorff_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  auto one_sided = [](const std::vector<Vec>& from, const std::vector<Vec>& to) {
    double worst = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < to.size(); ++j)
        best = std::min(best, point_to_segment(p, to[j], to[(j + 1) % to.size()]));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

std::vector<Vec> orbit_point_cloud(const BounceOrbit& orbit, int samples) {
  std::vector<Vec> pts;
  pts.reserve(samples);
  for (int i = 0; i < samples; ++i) pts.push_back(orbit.state_at(orbit.period * i / samples).q);
  return pts;
}

}  // namespace

RunSummary run_scenario(const Scenario& sc_in, const CliOverrides& ovr) {
  const Scenario sc = apply_overrides(sc_in, ovr);
  PipelineParts parts = build_parts(sc, sc.check_regularity);
  const Domain& dom = *parts.dom;
  PotentialField& pot = *parts.pot;

  ActionContext ctx{&dom, &parts.collar, &pot, sc.energy};

  // Initial loop family: a planar ellipse, shrunk to feasibility, with
  // deterministic seeded jitter for the extra inits.
  Vec center = sc.init.center.size() == dom.dim() ? sc.init.center
                                                  : Vec(0.5 * (dom.bounding_box().lo + dom.bounding_box().hi));
  const double diam = dom.diameter();
  const double rx0 = sc.init.rx >= 0.0 ? sc.init.rx : 0.35 * diam;
  const double ry0 = sc.init.ry >= 0.0 ? sc.init.ry : 0.15 * diam;

  std::mt19937_64 rng(sc.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  struct InitParams {
    double rx, ry, angle;
  };
  std::vector<InitParams> params;
  for (int i = 0; i < sc.inits; ++i) {
    InitParams p{rx0, ry0, sc.init.angle};
    if (i > 0) {
      p.angle += 2.0 * M_PI * 0.61803398875 * i + 0.1 * unit(rng);
      p.rx *= 1.0 + 0.1 * unit(rng);
      p.ry *= 1.0 + 0.1 * unit(rng);
    }
    params.push_back(p);
  }

  ContinuationOptions copts;
  copts.eps_start = sc.eps_start;
  copts.eps_ratio = sc.eps_ratio;
  copts.eps_floor = sc.eps_floor;
  copts.check_regularity = sc.check_regularity;
  copts.solve.grad_tol = sc.grad_tol;

  auto run_one = [&](const InitParams& p) -> ContinuationResult {
    const DiscreteLoop init =
        feasible_init(ctx, center, p.rx, p.ry, p.angle, sc.nodes, sc.eps_start);
    return run_continuation(ctx, init, copts);
  };

  std::vector<ContinuationResult> results(params.size());
  std::vector<std::string> errors(params.size());
  const int cap = std::min<int>(thread_cap(), static_cast<int>(params.size()));
  if (cap <= 1 || params.size() == 1) {
    for (size_t i = 0; i < params.size(); ++i) {
      try {
        results[i] = run_one(params[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  } else {
    // Bounded pool of async sub-runs; results land in fixed slots so the
    // outcome is independent of completion order.
    std::vector<std::future<void>> pool;
    size_t next = 0;
    auto launch = [&](size_t i) {
      pool.push_back(std::async(std::launch::async, [&, i] {
        try {
          results[i] = run_one(params[i]);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }));
    };
    while (next < params.size() || !pool.empty()) {
      while (next < params.size() && static_cast<int>(pool.size()) < cap) launch(next++);
      pool.front().wait();
      pool.erase(pool.begin());
    }
  }

  // Deterministic winner: best (rank, morse index, init index).
  auto rank_of = [&](size_t i) {
    if (!errors[i].empty() || results[i].records.empty()) return 2;
    if (results[i].completed) return 0;
    if (results[i].collapsed) return 1;
    return 2;
  };
  size_t win = 0;
  {
    auto key = [&](size_t i) {
      const int rank = rank_of(i);
      const int morse =
          results[i].records.empty() ? 1 << 20 : results[i].records.back().point.morse_index;
      return std::tuple<int, int, size_t>(rank, morse, i);
    };
    for (size_t i = 1; i < params.size(); ++i)
      if (key(i) < key(win)) win = i;
  }
  const ContinuationResult& cont = results[win];

  json inits_json = json::array();
  for (size_t i = 0; i < params.size(); ++i) {
    json ij{{"index", i}};
    if (!errors[i].empty()) {
      ij["error"] = errors[i];
    } else {
      ij["records"] = results[i].records.size();
      ij["completed"] = results[i].completed;
      ij["collapsed"] = results[i].collapsed;
      if (!results[i].records.empty()) {
        ij["final_action"] = results[i].records.back().point.action;
        ij["final_morse_index"] = results[i].records.back().point.morse_index;
      }
    }
    ij["winner"] = i == win;
    inits_json.push_back(std::move(ij));
  }

  RunSummary out;
  out.name = sc.name;

  json doc;
  doc["schema_version"] = 1;
  doc["mode"] = "solve";
  doc["scenario"] = scenario_json(sc);
  doc["bounds"] = parts.bounds
                      ? bounds_json(*parts.bounds)
                      : json{{"available", false},
                             {"reason", "energy does not exceed the potential maximum"}};
  doc["inits"] = std::move(inits_json);

  // Winner trace.
  json tau_hist = json::array(), morse_hist = json::array();
  std::string trace;
  for (const auto& rec : cont.records) {
    tau_hist.push_back(rec.point.loop.tau);
    morse_hist.push_back(rec.point.morse_index);
    out.morse_history.push_back(rec.point.morse_index);
    json line{{"eps", rec.eps},
              {"tau", rec.point.loop.tau},
              {"action", rec.point.action},
              {"grad_norm", rec.point.gradient_norm},
              {"energy_residual", rec.point.energy_residual},
              {"morse_index", rec.point.morse_index},
              {"density_mass", rec.density_mass},
              {"plateau_density", rec.plateau_density},
              {"excess_mass", rec.excess_mass},
              {"h1_diff_prev", rec.h1_diff_prev},
              {"status", rec.point.status}};
    trace += line.dump();
    trace += "\n";
  }
  out.trace_jsonl = trace;
  doc["continuation"] = json{{"records", cont.records.size()},
                             {"completed", cont.completed},
                             {"collapsed", cont.collapsed},
                             {"message", cont.message},
                             {"tau_floor", cont.tau_floor},
                             {"diam_floor", cont.diam_floor},
                             {"tau_history", std::move(tau_hist)},
                             {"morse_index_history", std::move(morse_hist)}};

  if (cont.records.empty() || (!cont.completed && !cont.collapsed)) {
    out.status = "failed";
    out.exit_code = 2;
    out.message = errors[win].empty() ? cont.message : errors[win];
    doc["status"] = out.status;
    doc["message"] = out.message;
    doc["exit_code"] = out.exit_code;
    out.summary_json = doc.dump(2) + "\n";
    return out;
  }

  const ContinuationRecord& final_rec = cont.records.back();

  if (cont.collapsed) {
    const CollapseReport rep =
        detect_collapse(ctx, cont.records, cont.tau_floor, cont.diam_floor);
    const char* kind = rep.kind == CollapseReport::Kind::interior_critical_point
                           ? "interior_critical_point"
                           : rep.kind == CollapseReport::Kind::boundary_equilibrium
                                 ? "boundary_equilibrium"
                                 : "unclassified";
    json cj{{"kind", kind}, {"detail", rep.detail}};
    if (rep.kind != CollapseReport::Kind::none) {
      cj["point"] = vec_json(rep.point);
      if (rep.kind == CollapseReport::Kind::interior_critical_point)
        cj["grad_norm"] = rep.grad_norm;
      else
        cj["multiplier"] = rep.multiplier;
    }
    doc["collapse"] = std::move(cj);
    out.status = "collapsed";
    out.message = cont.message + "; " + rep.detail;
    out.exit_code = rep.kind == CollapseReport::Kind::none ? 3 : 0;

    // Plot the terminal loop without markers.
    PlotData pd;
    pd.box = dom.bounding_box();
    pd.boundary = boundary_samples(dom, 256);
    std::vector<Vec> loop_pts;
    const Mat& nodes = final_rec.point.loop.nodes;
    for (int i = 0; i < nodes.cols(); ++i) loop_pts.push_back(nodes.col(i));
    loop_pts.push_back(nodes.col(0));
    pd.arcs.push_back(std::move(loop_pts));
    doc["plot"] = plot_json(pd);

    doc["status"] = out.status;
    doc["message"] = out.message;
    doc["exit_code"] = out.exit_code;
    out.summary_json = doc.dump(2) + "\n";
    return out;
  }

  // Converged branch: extraction, assembly, refinement, verification, audit.
  std::vector<std::string> problems;
  const BounceTimes times = extract_bounce_times(final_rec);
  {
    json tj{{"times", times.times}, {"masses", times.masses}, {"isolated", times.isolated}};
    doc["bounce_times"] = std::move(tj);
  }
  if (!times.isolated) problems.push_back("penalty density clusters are not isolated");

  BounceOrbit assembled;
  try {
    assembled = assemble_bounce_orbit(ctx, final_rec, times);
  } catch (const std::exception& e) {
    out.status = "failed";
    out.exit_code = 2;
    out.message = std::string("assembly failed: ") + e.what();
    doc["status"] = out.status;
    doc["message"] = out.message;
    doc["exit_code"] = out.exit_code;
    out.summary_json = doc.dump(2) + "\n";
    return out;
  }
  doc["orbit"] = orbit_json(assembled, 256);

  const BounceOrbit* final_orbit = &assembled;
  json verification;
  RefineResult refined;
  if (!times.times.empty()) {
    refined = refine_periodic_shooting(dom, pot, assembled);
    doc["refined"] = json{{"converged", refined.converged},
                          {"rejected", refined.rejected},
                          {"residual", refined.residual},
                          {"iterations", refined.iterations},
                          {"message", refined.message}};
    if (refined.converged && !refined.rejected) {
      final_orbit = &refined.orbit;
      doc["refined"]["orbit"] = orbit_json(refined.orbit, 256);
    } else {
      problems.push_back("shooting refinement failed: " + refined.message);
    }

    const ReflectionReport rr = check_reflection_law(dom, *final_orbit, 1e-9);
    verification["reflection"] = json{{"pass", rr.pass},
                                      {"max_normal_residual", rr.max_normal_residual},
                                      {"max_tangential_residual", rr.max_tangential_residual},
                                      {"min_normal_component", rr.min_normal_component},
                                      {"max_boundary_violation", rr.max_boundary_violation}};
    if (!rr.pass) problems.push_back("reflection-law check failed");

    // Agreement between the continuation-limit orbit and the refined one.
    if (final_orbit != &assembled) {
      double max_event_dist = 0.0;
      for (const auto& ev : refined.orbit.events) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& av : assembled.events) best = std::min(best, (ev.point - av.point).norm());
        max_event_dist = std::max(max_event_dist, best);
      }
      const double hd = hausdorff_distance(orbit_point_cloud(assembled, 512),
                                           orbit_point_cloud(refined.orbit, 512));
      verification["assembled_vs_refined"] =
          json{{"period_diff", std::abs(assembled.period - refined.orbit.period)},
               {"max_event_dist", max_event_dist},
               {"hausdorff", hd}};
    }
  } else {
    // Smooth orbit: no refinement; closure of the re-flown loop.
    const Vec gap = assembled.arcs.back().end.q - assembled.start.q;
    verification["closure"] = gap.norm();
    if (gap.norm() > 1e-3 * diam) problems.push_back("smooth orbit does not close up");
  }

  const EnergyReport er = check_energy_invariant(pot, *final_orbit, 1e-9);
  verification["energy"] = json{{"pass", er.pass}, {"max_deviation", er.max_deviation}};
  if (!er.pass) problems.push_back("energy-invariant check failed");

  if (parts.bounds) {
    const AuditResult audit = audit_orbit(*final_orbit, *parts.bounds);
    json aj{{"pass", audit.pass},
            {"period_margin", audit.period_margin},
            {"bounce_margin", audit.bounce_margin},
            {"corollary_applicable", audit.corollary_applicable},
            {"corollary_margin", audit.corollary_margin},
            {"failures", audit.failures}};
    doc["audit"] = std::move(aj);
    if (!audit.pass) problems.push_back("bounds audit failed");
    out.audit_pass = audit.pass;
  } else {
    doc["audit"] = json{{"skipped", "bounds undefined: energy does not exceed the potential "
                                    "maximum"}};
  }

  // Morse-count consistency: bounce count must not exceed the final index.
  if (final_orbit->bounce_count() > final_rec.point.morse_index)
    problems.push_back("bounce count exceeds the Morse index of the final critical point");

  doc["verification"] = std::move(verification);
  doc["plot"] = plot_json(plot_data_from_orbit(*final_orbit, dom));

  out.bounce_count = final_orbit->bounce_count();
  out.period = final_orbit->period;
  out.samples_csv = samples_csv_from_orbit(*final_orbit, 512);
  out.status = "converged";
  out.exit_code = problems.empty() ? 0 : 3;
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) {
      if (!msg.empty()) msg += "; ";
      msg += p;
    }
    out.message = msg;
  } else {
    out.message = "ok";
  }
  doc["status"] = out.status;
  doc["message"] = out.message;
  doc["exit_code"] = out.exit_code;
  out.summary_json = doc.dump(2) + "\n";
  return out;
}

RunSummary run_oracle(const Scenario& sc_in, const CliOverrides& ovr) {
  const Scenario sc = apply_overrides(sc_in, ovr);
  PipelineParts parts = build_parts(sc, false);
  const Domain& dom = *parts.dom;
  PotentialField& pot = *parts.pot;
  const int dim = dom.dim();

  Vec start = sc.oracle.start.size() == dim ? sc.oracle.start
                                            : Vec(0.5 * (dom.bounding_box().lo + dom.bounding_box().hi));
  if (dom.implicit(start) >= 0.0)
    throw ConfigError("oracle start point must lie strictly inside the domain");
  Vec dir = sc.oracle.direction.size() == dim ? sc.oracle.direction : Vec(Vec::Zero(dim));
  if (dir.size() == dim && dir.norm() == 0.0) dir[0] = 1.0;
  dir.normalize();
  const double gap = sc.energy - pot.value(start);
  if (!(gap > 0.0))
    throw ConfigError("oracle start point has V >= E; no motion is possible there");
  const PhaseState s0{start, std::sqrt(2.0 * gap) * dir};

  const double speed_scale = std::sqrt(2.0 * std::max(sc.energy - pot.stats().v_min, 1e-300));
  const double duration =
      sc.oracle.duration > 0.0 ? sc.oracle.duration : 6.0 * dom.diameter() / speed_scale;

  const BounceOrbit orbit = integrate_with_bounces(dom, pot, s0, duration);
  const ReflectionReport rr = check_reflection_law(dom, orbit, 1e-9);
  const EnergyReport er = check_energy_invariant(pot, orbit, 1e-9);

  RunSummary out;
  out.name = sc.name;
  out.bounce_count = orbit.bounce_count();
  out.period = orbit.period;

  json doc;
  doc["schema_version"] = 1;
  doc["mode"] = "oracle";
  doc["scenario"] = scenario_json(sc);
  doc["orbit"] = orbit_json(orbit, 512);
  doc["verification"] = json{
      {"reflection",
       json{{"pass", rr.pass},
            {"max_normal_residual", rr.max_normal_residual},
            {"max_tangential_residual", rr.max_tangential_residual},
            {"min_normal_component", rr.min_normal_component},
            {"max_boundary_violation", rr.max_boundary_violation}}},
      {"energy", json{{"pass", er.pass}, {"max_deviation", er.max_deviation}}}};
  doc["plot"] = plot_json(plot_data_from_orbit(orbit, dom));

  out.samples_csv = samples_csv_from_orbit(orbit, 512);
  out.status = "oracle";
  out.exit_code = rr.pass && er.pass ? 0 : 3;
  out.message = out.exit_code == 0 ? "ok" : "verification failed";
  doc["status"] = out.status;
  doc["message"] = out.message;
  doc["exit_code"] = out.exit_code;
  out.summary_json = doc.dump(2) + "\n";
  return out;
}

RunSummary run_bounds(const Scenario& sc_in, const CliOverrides& ovr) {
  const Scenario sc = apply_overrides(sc_in, ovr);
  PipelineParts parts = build_parts(sc, true);

  RunSummary out;
  out.name = sc.name;
  json doc;
  doc["schema_version"] = 1;
  doc["mode"] = "bounds";
  doc["scenario"] = scenario_json(sc);
  doc["bounds"] = bounds_json(*parts.bounds);
  out.status = "bounds";
  out.exit_code = 0;
  out.message = "ok";
  doc["status"] = out.status;
  doc["message"] = out.message;
  doc["exit_code"] = out.exit_code;
  out.summary_json = doc.dump(2) + "\n";
  return out;
}

std::string render_summary_svg(const std::string& summary_json) {
  const json doc = json::parse(summary_json);
  if (!doc.contains("plot"))
    throw ConfigError("summary document has no plot section; rerun solve or oracle first");
  return render_svg(plot_data_from_json(doc.at("plot")));
}

}  // namespace bounce
