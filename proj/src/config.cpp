#include "vmb/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace vmb {

using nlohmann::json;

KernelModel KernelSpec::build() const {
  KernelModel m;
  m.name = model;
  m.gamma = gamma;
  m.grad_bound_c = grad_bound_c;
  m.scale = scale;
  m.sphere = SphereQuadrature::product(sphere_polar, sphere_azimuth);
  m.mu_floor = mu_floor;
  if (model == "hard_sphere") {
    m.gamma = 1.0;
    m.angular = [](double c) { return std::abs(c); };
  } else if (model == "soft") {
    m.angular = [](double c) { return std::abs(c); };
  } else if (model == "grad_violating_flat") {
    // fault-injection profile: violates 0 <= b <= C|c|
    m.angular = [](double) { return 1.0; };
  } else {
    fail(Errc::invalid_config, "kernel model must be hard_sphere, soft or grad_violating_flat");
  }
  m.validate();
  return m;
}

namespace {

Recipe recipe_from_string(const std::string& s) {
  if (s == "single_mode_macro") return Recipe::single_mode_macro;
  if (s == "transverse_pulse") return Recipe::transverse_pulse;
  if (s == "random_band_limited") return Recipe::random_band_limited;
  if (s == "zero") return Recipe::zero;
  fail(Errc::invalid_config, "unknown initial-data recipe " + s);
}

std::string recipe_to_string(Recipe r) {
  switch (r) {
    case Recipe::single_mode_macro: return "single_mode_macro";
    case Recipe::transverse_pulse: return "transverse_pulse";
    case Recipe::random_band_limited: return "random_band_limited";
    case Recipe::zero: return "zero";
  }
  return "single_mode_macro";
}

template <class T, std::size_t N>
void read_array(const json& j, const char* key, std::array<T, N>& out) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  for (std::size_t i = 0; i < N && i < a.size(); ++i) out[i] = a[i].get<T>();
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(Errc::invalid_config, "config: malformed JSON");
  RunConfig c;
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    c.grid.dim = g.value("dim", c.grid.dim);
    read_array(g, "lengths", c.grid.lengths);
    read_array(g, "n_per_axis", c.grid.n_per_axis);
    c.grid.v_max = g.value("v_max", c.grid.v_max);
    c.grid.n_v = g.value("n_v", c.grid.n_v);
    c.grid.tol_mass = g.value("tol_mass", c.grid.tol_mass);
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    c.kernel.model = k.value("model", c.kernel.model);
    c.kernel.gamma = k.value("gamma", c.kernel.gamma);
    c.kernel.grad_bound_c = k.value("grad_bound_c", c.kernel.grad_bound_c);
    c.kernel.scale = k.value("scale", c.kernel.scale);
    c.kernel.sphere_polar = k.value("sphere_polar", c.kernel.sphere_polar);
    c.kernel.sphere_azimuth = k.value("sphere_azimuth", c.kernel.sphere_azimuth);
    c.kernel.mu_floor = k.value("mu_floor", c.kernel.mu_floor);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    c.solver.dt = s.value("dt", c.solver.dt);
    c.solver.t_end = s.value("t_end", c.solver.t_end);
    const std::string sp = s.value("splitting", std::string("strang"));
    if (sp == "strang")
      c.solver.splitting = Splitting::strang;
    else if (sp == "lie")
      c.solver.splitting = Splitting::lie;
    else
      fail(Errc::invalid_config, "splitting must be strang or lie");
    const std::string cm = s.value("collision_mode", std::string("linearized_only"));
    if (cm == "linearized_only")
      c.solver.collision_mode = CollisionMode::linearized_only;
    else if (cm == "full_bilinear")
      c.solver.collision_mode = CollisionMode::full_bilinear;
    else
      fail(Errc::invalid_config, "collision_mode must be linearized_only or full_bilinear");
    c.solver.stiff_collision = s.value("stiff_collision", c.solver.stiff_collision);
    c.solver.recorder_cadence = s.value("recorder_cadence", c.solver.recorder_cadence);
    c.solver.check_finite = s.value("check_finite", c.solver.check_finite);
  }
  if (j.contains("initial")) {
    const auto& i = j["initial"];
    c.initial.recipe = recipe_from_string(i.value("recipe", std::string("single_mode_macro")));
    c.initial.amplitude = i.value("amplitude", c.initial.amplitude);
    c.initial.eta = i.value("eta", c.initial.eta);
    c.initial.perturbation_amplitude =
        i.value("perturbation_amplitude", c.initial.perturbation_amplitude);
    read_array(i, "B_background", c.initial.B_background);
    c.initial.seed = i.value("seed", c.initial.seed);
  }
  if (j.contains("diagnostics")) {
    const auto& d = j["diagnostics"];
    c.diagnostics.n_max = d.value("n_max", c.diagnostics.n_max);
    c.diagnostics.varrho = d.value("varrho", c.diagnostics.varrho);
    if (d.contains("weights")) {
      c.diagnostics.weights.clear();
      for (const auto& w : d["weights"]) {
        WeightSpec ws;
        ws.ell = w.value("ell", 0.0);
        ws.kappa = w.value("kappa", 1.0);
        ws.q = w.value("q", 0.05);
        ws.vartheta = w.value("vartheta", 0.25);
        c.diagnostics.weights.push_back(ws);
      }
    }
    read_array(d, "weight_alpha", c.diagnostics.weight_alpha);
    read_array(d, "weight_beta", c.diagnostics.weight_beta);
  }
  c.epsilon = j.value("epsilon", c.epsilon);
  if (j.contains("epsilon_list"))
    c.epsilon_list = j["epsilon_list"].get<std::vector<double>>();
  c.expansion_order = j.value("expansion_order", c.expansion_order);
  c.expansion_norm_order = j.value("expansion_norm_order", c.expansion_norm_order);
  c.operator_cache = j.value("operator_cache", c.operator_cache);
  c.threads = j.value("threads", c.threads);
  c.checkpoint_cadence = j.value("checkpoint_cadence", c.checkpoint_cadence);
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::invalid_config, "config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
  json j;
  j["grid"] = {{"dim", grid.dim},
               {"lengths", grid.lengths},
               {"n_per_axis", grid.n_per_axis},
               {"v_max", grid.v_max},
               {"n_v", grid.n_v},
               {"tol_mass", grid.tol_mass}};
  j["kernel"] = {{"model", kernel.model},
                 {"gamma", kernel.gamma},
                 {"grad_bound_c", kernel.grad_bound_c},
                 {"scale", kernel.scale},
                 {"sphere_polar", kernel.sphere_polar},
                 {"sphere_azimuth", kernel.sphere_azimuth},
                 {"mu_floor", kernel.mu_floor}};
  j["solver"] = {
      {"dt", solver.dt},
      {"t_end", solver.t_end},
      {"splitting", solver.splitting == Splitting::strang ? "strang" : "lie"},
      {"collision_mode",
       solver.collision_mode == CollisionMode::linearized_only ? "linearized_only" : "full_bilinear"},
      {"stiff_collision", solver.stiff_collision},
      {"recorder_cadence", solver.recorder_cadence},
      {"check_finite", solver.check_finite}};
  j["initial"] = {{"recipe", recipe_to_string(initial.recipe)},
                  {"amplitude", initial.amplitude},
                  {"eta", initial.eta},
                  {"perturbation_amplitude", initial.perturbation_amplitude},
                  {"B_background", initial.B_background},
                  {"seed", initial.seed}};
  json weights = json::array();
  for (const auto& w : diagnostics.weights)
    weights.push_back({{"ell", w.ell}, {"kappa", w.kappa}, {"q", w.q}, {"vartheta", w.vartheta}});
  j["diagnostics"] = {{"n_max", diagnostics.n_max},
                      {"varrho", diagnostics.varrho},
                      {"weights", weights},
                      {"weight_alpha", diagnostics.weight_alpha},
                      {"weight_beta", diagnostics.weight_beta}};
  j["epsilon"] = epsilon;
  j["epsilon_list"] = epsilon_list;
  j["expansion_order"] = expansion_order;
  j["expansion_norm_order"] = expansion_norm_order;
  j["operator_cache"] = operator_cache;
  j["threads"] = threads;
  j["checkpoint_cadence"] = checkpoint_cadence;
  return j.dump(2);
}

std::uint64_t RunConfig::content_hash() const { return fnv1a(to_json_text()); }

void RunConfig::validate() const {
  if (grid.dim < 1 || grid.dim > 3) fail(Errc::invalid_config, "grid dim must be 1..3");
  if (grid.n_v < 4 || grid.n_v % 2) fail(Errc::invalid_config, "n_v must be even and >= 4");
  for (int a = 0; a < grid.dim; ++a)
    if (grid.n_per_axis[a] < 4 || grid.n_per_axis[a] % 2)
      fail(Errc::invalid_config, "n_per_axis must be even and >= 4 on active axes");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) fail(Errc::invalid_config, "epsilon must be in (0, 1]");
  for (std::size_t i = 0; i < epsilon_list.size(); ++i) {
    if (!(epsilon_list[i] > 0.0 && epsilon_list[i] <= 1.0))
      fail(Errc::invalid_config, "epsilon values must be in (0, 1]");
    if (i > 0 && epsilon_list[i] >= epsilon_list[i - 1])
      fail(Errc::invalid_config, "epsilon list must be strictly decreasing");
  }
  if (expansion_order < 1) fail(Errc::invalid_config, "expansion order must be >= 1");
  if (initial.amplitude < 0.0 || initial.amplitude > 0.1)
    fail(Errc::invalid_config, "initial amplitude outside the small-data regime guard (0, 0.1]");
  solver.validate();
}

Grids make_grids(const RunConfig& cfg) {
  Grids g;
  g.x = std::make_shared<SpatialGrid>(cfg.grid.dim, cfg.grid.lengths, cfg.grid.n_per_axis);
  g.v = std::make_shared<VelocityGrid>(cfg.grid.v_max, cfg.grid.n_v);
  // truncation budget on the lattice Maxwellian mass
  double mass = 0.0;
  for (double m : g.v->mu()) mass += m;
  mass *= g.v->cell_volume();
  if (mass > 1.0 + 1e-12 || mass < 1.0 - cfg.grid.tol_mass)
    fail(Errc::invalid_config, "velocity lattice mass " + std::to_string(mass) +
                                   " outside the configured truncation budget");
  return g;
}

Operators make_operators(const RunConfig& cfg, const Grids& grids) {
  Operators ops;
  ops.model = cfg.kernel.build();
  OperatorBuildOptions opts;
  opts.cache_dir = cfg.operator_cache;
  ops.lin = std::make_shared<LinearizedOperator>(
      LinearizedOperator::build(grids.v, ops.model, opts));
  ops.proj = std::make_shared<MacroProjector>(grids.v);
  return ops;
}

namespace {

// deterministic normals (the standard library distributions are not pinned
// across implementations)
struct SplitMix {
  std::uint64_t s;
  double uniform() {
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return (static_cast<double>(z >> 11) + 0.5) / 9007199254740992.0;
  }
  double normal() {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }
};

// base (VPB-side) kinetic data of the configured recipe
void fill_base_f(const RunConfig& cfg, PairDistribution& f) {
  const auto& xg = f.xgrid();
  const auto& vg = f.vgrid();
  const double A = cfg.initial.amplitude;
  const double L = xg.length(0);
  switch (cfg.initial.recipe) {
    case Recipe::zero:
    case Recipe::transverse_pulse:
      break;
    case Recipe::single_mode_macro: {
      for (std::size_t ix = 0; ix < f.nx(); ++ix) {
        const double x = xg.x(0, xg.unindex(ix)[0]);
        const double a = A * std::cos(two_pi * x / L);
        double* fp = f.block(0, ix);
        double* fm = f.block(1, ix);
        for (std::size_t iv = 0; iv < f.nv(); ++iv) {
          fp[iv] = a * vg.sqrt_mu()[iv];
          fm[iv] = -a * vg.sqrt_mu()[iv];
        }
      }
      break;
    }
    case Recipe::random_band_limited: {
      SplitMix rng{cfg.initial.seed};
      // low modes in x, smooth polynomial profiles in v, Maxwellian envelope
      const int n_modes = 2;
      for (int s = 0; s < 2; ++s)
        for (int k = 1; k <= n_modes; ++k) {
          const double cs = rng.normal(), sn = rng.normal();
          const double pv[4] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
          for (std::size_t ix = 0; ix < f.nx(); ++ix) {
            const double x = xg.x(0, xg.unindex(ix)[0]);
            const double prof = cs * std::cos(two_pi * k * x / L) + sn * std::sin(two_pi * k * x / L);
            double* fb = f.block(s, ix);
            for (std::size_t iv = 0; iv < f.nv(); ++iv) {
              const auto v = vg.node(iv);
              const double poly = pv[0] + pv[1] * v[0] + pv[2] * v[1] + pv[3] * (v[2] * v[2] - 1.0);
              fb[iv] += A * prof * poly * vg.sqrt_mu()[iv];
            }
          }
        }
      break;
    }
  }
}

// fixed perturbation shape whose size eps^eta separates VMB from VPB data
void add_perturbation(const RunConfig& cfg, double scale, PairDistribution& f, EMState& em) {
  const auto& xg = f.xgrid();
  const auto& vg = f.vgrid();
  const double L = xg.length(0);
  const double A = cfg.initial.amplitude * cfg.initial.perturbation_amplitude * scale;
  for (std::size_t ix = 0; ix < f.nx(); ++ix) {
    const double x = xg.x(0, xg.unindex(ix)[0]);
    const double prof = std::sin(two_pi * x / L);
    double* fp = f.block(0, ix);
    double* fm = f.block(1, ix);
    for (std::size_t iv = 0; iv < f.nv(); ++iv) {
      const auto v = vg.node(iv);
      // microscopic odd-in-species shape plus the transverse field pulse
      const double shape = v[0] * vg.sqrt_mu()[iv];
      fp[iv] += A * prof * shape;
      fm[iv] -= A * prof * shape;
    }
    em.E[1][ix] += A * prof;
    em.B_tilde[2][ix] += A * std::cos(two_pi * x / L);
  }
}

void add_transverse_pulse(const RunConfig& cfg, EMState& em) {
  if (cfg.initial.recipe != Recipe::transverse_pulse) return;
  const auto& xg = *em.grid;
  const double L = xg.length(0);
  for (std::size_t ix = 0; ix < xg.size(); ++ix) {
    const double x = xg.x(0, xg.unindex(ix)[0]);
    em.E[1][ix] += cfg.initial.amplitude * std::sin(two_pi * x / L);
    em.B_tilde[2][ix] += cfg.initial.amplitude * std::sin(two_pi * x / L);
  }
}

}  // namespace

VPBState make_initial_vpb(const RunConfig& cfg, const Grids& grids) {
  VPBState s(grids.x, grids.v);
  fill_base_f(cfg, s.f);
  s.epsilon = 0.0;  // exact limit system: no residual magnetic coupling
  s.B_eff = cfg.initial.B_background;
  s.E = poisson_field_centered(*grids.x, charge_density(s.f));
  return s;
}

VMBState make_initial_vmb(const RunConfig& cfg, const Grids& grids, double epsilon) {
  VMBState s(grids.x, grids.v, epsilon);
  s.em.B_background = cfg.initial.B_background;
  fill_base_f(cfg, s.f);
  add_transverse_pulse(cfg, s.em);
  const double scale = std::pow(epsilon, cfg.initial.eta);
  add_perturbation(cfg, scale, s.f, s.em);
  enforce_compatibility(s.f, s.em);
  return s;
}

CascadeState make_initial_cascade(const RunConfig& cfg, const Grids& grids, double epsilon) {
  CascadeState c(grids.x, grids.v, epsilon, cfg.expansion_order);
  c.B_P = cfg.initial.B_background;
  fill_base_f(cfg, c.leader.f);
  c.leader.epsilon = epsilon;
  c.leader.B_eff = cascade_effective_b(c);
  c.leader.E = poisson_field_centered(*grids.x, charge_density(c.leader.f));
  // intermediate levels start from zero data; the remainder carries the
  // perturbation shape so the total data match the direct VMB recipe
  c.remainder.em.B_background = {0.0, 0.0, 0.0};
  add_perturbation(cfg, cfg.initial.perturbation_amplitude > 0 ? 1.0 : 0.0, c.remainder.f,
                   c.remainder.em);
  enforce_compatibility(c.remainder.f, c.remainder.em);
  return c;
}

VMBState assemble_cascade_total(const CascadeState& c) {
  VMBState s(c.leader.f.xgrid_ptr(), c.leader.f.vgrid_ptr(), c.epsilon);
  s.t = c.t;
  s.f = c.leader.f;
  double ep = 1.0;
  for (std::size_t k = 0; k < c.f_i.size(); ++k) {
    ep *= c.epsilon;
    s.f.axpy(ep, c.f_i[k]);
  }
  const double em_scale = std::pow(c.epsilon, c.m);
  s.f.axpy(em_scale, c.remainder.f);
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < s.em.E[a].size(); ++i) {
      double e = c.leader.E[a][i];
      double b = 0.0;
      double epj = 1.0;
      for (std::size_t k = 0; k < c.E_i.size(); ++k) {
        epj *= c.epsilon;
        e += epj * c.E_i[k][a][i];
      }
      e += em_scale * c.remainder.em.E[a][i];
      b += em_scale * c.remainder.em.B_tilde[a][i];
      s.em.E[a][i] = e;
      s.em.B_tilde[a][i] = b;
    }
    double bg = c.B_P[a];
    double epj = 1.0;
    for (std::size_t k = 0; k < c.B_i.size(); ++k) {
      epj *= c.epsilon;
      bg += epj * c.B_i[k][a];
    }
    s.em.B_background[a] = bg;
  }
  return s;
}

}  // namespace vmb
