#pragma once
// Run orchestration: config schema, run directory, manifest and stages.
//
// Stages and the files they own inside the run directory:
//   enumerate    index.txt
//   estimate-q   q.snap, q.csv
//   build-model  model.snap
//   solve        solution.snap
//   report       theorem.csv, shells.csv, norms.csv, report.json
//   verify       verify.json (not digested; replayable)
// manifest.json records the resolved config, the effective noise amplitude and,
// per stage, output digests, input digests, certificates and wall time.
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <random>

#include "io.hpp"
#include "solve.hpp"

namespace mrs {

/// Defaults double as the schema: a config file may only set keys present here.
inline json default_config() {
  return json::parse(R"({
    "alpha": "3/4",
    "d": 1,
    "cutoff": "2",
    "Lambda": 0.5,
    "N0": 0.25,
    "grid": {"nx": 256, "nt": 512, "period_x": 1.0, "period_t": 0.125},
    "noise": {"eps": 0.0078125, "kernel": "gauss", "decay": null},
    "ensemble": 16,
    "eps_ladder": [0.0625, 0.03125, 0.015625, 0.0078125],
    "nonlinearity": {"kind": "sine", "coef": [1.0, 0.08, 1.3, 0.4]},
    "window": {"center": 1.0, "halfwidth": 0.25, "npts": 3, "ratio": 0.5},
    "eta": null,
    "delta": 0.5,
    "solver": {"tol": 1e-7, "max_iter": 500, "damping": 1.0, "abar": 0.0},
    "verify": {"pairs": 50, "holder_bases": 16, "holder_points": 3000, "expansion_bases": 160,
               "per_shell": 100, "norm_bases": 8, "morphism_points": 4, "morphism_trials": 40, "ablation": true,
               "shell_lo": 0.0, "shell_hi": 0.25},
    "tolerances": {"residual": 1e-7, "identity": 1e-6, "golden_rel": 0.1},
    "goldens": {},
    "seed": 1,
    "output": "runs/default"
  })");
}

/// "2", "alpha", "1+alpha", "2*alpha", "1 + 3*alpha".
inline Homogeneity parse_cutoff(const std::string& s, Rational alpha) {
  std::string t;
  for (char c : s)
    if (c != ' ') t += c;
  if (t.empty()) throw std::invalid_argument("empty cutoff");
  Homogeneity h{0, 0, alpha};
  std::istringstream ss(t);
  std::string term;
  while (std::getline(ss, term, '+')) {
    try {
      const auto pos = term.find("alpha");
      if (pos == std::string::npos) {
        std::size_t used = 0;
        h.m += std::stoi(term, &used);
        if (used != term.size()) throw std::invalid_argument(term);
      } else {
        if (pos + 5 != term.size()) throw std::invalid_argument(term);
        std::string k = term.substr(0, pos);
        if (!k.empty() && k.back() == '*') k.pop_back();
        h.n += k.empty() ? 1 : std::stoi(k);
      }
    } catch (const std::logic_error&) {
      throw std::invalid_argument("malformed cutoff '" + s + "'");
    }
  }
  return h;
}

struct VerifyOptions {
  int pairs = 50;
  int holder_bases = 16;
  std::size_t holder_points = 3000;
  std::size_t expansion_bases = 160, per_shell = 100, norm_bases = 8;
  int morphism_points = 4, morphism_trials = 40;
  bool ablation = true;
  double shell_lo = 0.0, shell_hi = 0.25;  // expansion shells; shell_lo = 0 means 4 eps
};

struct Tolerances {
  double residual = 1e-7, identity = 1e-6, golden_rel = 0.1;
};

struct RunConfig {
  json raw;
  Rational alpha{3, 4};
  int d = 1;
  Homogeneity cutoff;
  double Lambda = 0.5, N0 = 0.25;
  NoiseSpec noise;
  int ensemble = 16;
  Nonlinearity a;
  EllipticityWindow window;
  double eta = 1.5;
  SolverConfig solver;
  VerifyOptions verify;
  Tolerances tol;
  json goldens = json::object();
  std::uint64_t seed = 1;
  std::string output;

  const TorusGrid& grid() const { return solver.grid; }
  IndexSet index() const { return enumerate_populated(alpha, d, cutoff); }
  NoiseSpec noise_at(double amplitude) const {
    NoiseSpec s = noise;
    s.amplitude = amplitude;
    return s;
  }
};

/// Cross-field validation runs here, before any stage.
inline RunConfig resolve_config(const json& raw) {
  RunConfig c;
  c.raw = raw;
  try {
    c.alpha = Rational::parse(raw.at("alpha").get<std::string>());
    c.d = raw.at("d").get<int>();
    critical_integers(c.alpha);  // throws and names the resonance
    c.cutoff = parse_cutoff(raw.at("cutoff").get<std::string>(), c.alpha);
    c.Lambda = raw.at("Lambda").get<double>();
    c.N0 = raw.at("N0").get<double>();
    const auto& g = raw.at("grid");
    c.solver.grid = TorusGrid{c.d, g.at("nx").get<int>(), g.at("nt").get<int>(), g.at("period_x").get<double>(),
                              g.at("period_t").get<double>()};
    const auto& n = raw.at("noise");
    c.seed = raw.at("seed").get<std::uint64_t>();
    c.noise.seed = c.seed;
    c.noise.eps = n.at("eps").get<double>();
    c.noise.kernel_id = n.at("kernel").get<std::string>();
    c.noise.decay = n.at("decay").is_null() ? NoiseSpec::decay_for(c.alpha, c.d) : n.at("decay").get<double>();
    c.noise.amplitude = c.N0;
    c.ensemble = raw.at("ensemble").get<int>();
    c.a.kind = raw.at("nonlinearity").at("kind").get<std::string>();
    c.a.coef = raw.at("nonlinearity").at("coef").get<std::vector<double>>();
    const auto& w = raw.at("window");
    c.window = EllipticityWindow{c.Lambda, w.at("center").get<double>(), w.at("halfwidth").get<double>(),
                                 w.at("npts").get<int>(), w.at("ratio").get<double>()};
    const auto& s = raw.at("solver");
    c.solver.Lambda = c.Lambda;
    c.solver.tol = s.at("tol").get<double>();
    c.solver.max_iter = s.at("max_iter").get<int>();
    c.solver.damping = s.at("damping").get<double>();
    c.solver.abar = s.at("abar").get<double>();
    c.solver.eps_ladder = raw.at("eps_ladder").get<std::vector<double>>();
    c.solver.delta = raw.at("delta").get<double>();
    const auto& v = raw.at("verify");
    c.verify = VerifyOptions{v.at("pairs").get<int>(), v.at("holder_bases").get<int>(), v.at("holder_points").get<std::size_t>(),
                             v.at("expansion_bases").get<std::size_t>(), v.at("per_shell").get<std::size_t>(),
                             v.at("norm_bases").get<std::size_t>(), v.at("morphism_points").get<int>(),
                             v.at("morphism_trials").get<int>(), v.at("ablation").get<bool>(),
                             v.at("shell_lo").get<double>(), v.at("shell_hi").get<double>()};
    const auto& t = raw.at("tolerances");
    c.tol = Tolerances{t.at("residual").get<double>(), t.at("identity").get<double>(), t.at("golden_rel").get<double>()};
    c.goldens = raw.at("goldens");
    c.output = raw.at("output").get<std::string>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  const double amax = default_eta(c.alpha);
  const auto& je = raw.at("eta");
  c.eta = je.is_null() ? amax : je.get<double>();
  if (!(c.eta > 2.0 - c.alpha.value() && c.eta <= amax + 1e-12))
    throw std::invalid_argument("eta must lie in (2 - alpha, " + fmt_real(amax) + "]");
  c.window.validate();
  c.solver.validate();
  c.noise.validate(c.grid());
  for (double e : c.solver.eps_ladder)
    if (!(e >= 2 * c.grid().dx())) throw std::invalid_argument("eps ladder entry " + fmt_real(e) + " is below 2 dx");
  if (c.ensemble < 2) throw std::invalid_argument("ensemble must be at least 2");
  if (!(c.N0 > 0)) throw std::invalid_argument("N0 must be positive");
  if (c.verify.pairs < 1) throw std::invalid_argument("verify.pairs must be positive");
  // J budget: each a0-derivative in the model consumes one jet order; the value must survive
  int need = 1;
  for (auto& e : enumerate_populated(c.alpha, c.d, c.cutoff).entries) need = std::max(need, 1 + scaled_norm(e.beta.beta_prime));
  if (jet_order(c.alpha) < need)
    throw std::invalid_argument("jet order " + std::to_string(jet_order(c.alpha)) + " below the budget " + std::to_string(need));
  c.a.validate_on(-c.solver.delta, c.solver.delta, jet_order(c.alpha), c.Lambda);
  return c;
}

/// Defaults, then the file, then KEY=VALUE overrides; returns the raw config.
inline json load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides,
                        const json* base = nullptr) {
  json cfg = base ? *base : default_config();
  if (file) {
    json f;
    try {
      f = json::parse(read_file(*file));
    } catch (const json::exception& e) {
      throw std::invalid_argument("config " + file->string() + ": " + e.what());
    }
    merge_known(cfg, f);
  }
  for (auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

// ---------------------------------------------------------------- run directory

struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The config that determines content: everything except the output location, so that
/// identical runs in different directories produce identical bytes.
inline json content_config(const json& raw) {
  json c = raw;
  c.erase("output");
  return c;
}

struct Run {
  fs::path dir;
  RunConfig cfg;
  json manifest;

  fs::path file(const std::string& name) const { return dir / name; }
  double amplitude() const { return manifest.value(json::json_pointer("/effective/N0"), cfg.N0); }
  std::string config_sha() const { return sha256_hex(content_config(cfg.raw).dump()); }

  void save() const { write_file(file("manifest.json"), manifest.dump(2) + "\n"); }

  /// Digest of an input recorded by an earlier stage; refuses stale or foreign files.
  std::string checked_input(const std::string& name) const {
    if (!fs::exists(file(name))) throw StageError("missing input " + name + "; run the producing stage first");
    const auto sha = file_sha256(file(name));
    bool known = false;
    for (auto& [stage, rec] : manifest["stages"].items())
      if (rec.contains("outputs") && rec["outputs"].contains(name)) {
        known = true;
        if (rec["outputs"][name] != sha) throw DigestError("input " + name + " does not match its manifest digest");
      }
    if (!known) throw StageError("input " + name + " is not recorded in the manifest");
    return sha;
  }

  void record(const std::string& stage, const json& outputs, const json& inputs, const json& certs, double seconds) {
    manifest["stages"][stage] = {{"outputs", outputs}, {"inputs", inputs}, {"certificates", certs}, {"seconds", seconds}};
    save();
  }
};

/// Opens (or creates) a run directory. An existing manifest must carry the same config,
/// apart from the output location.
inline Run open_run(const fs::path& dir, const json& raw, bool fresh) {
  Run r;
  r.dir = dir;
  r.cfg = resolve_config(raw);
  const auto mf = dir / "manifest.json";
  if (!fresh && fs::exists(mf)) {
    r.manifest = json::parse(read_file(mf));
    auto diff = config_diff(r.manifest.at("config"), raw);
    std::erase(diff, "output");
    if (!diff.empty()) {
      std::string keys;
      for (auto& k : diff) keys += (keys.empty() ? "" : ", ") + k;
      throw StageError("config differs from the run directory in: " + keys);
    }
  } else {
    fs::create_directories(dir);
    r.manifest = {{"format", "mrs-manifest-1"}, {"config", raw}, {"stages", json::object()}};
    r.save();
  }
  return r;
}

/// Dotted config keys that differ between two run manifests (output location excluded).
inline std::vector<std::string> manifest_diff(const fs::path& a, const fs::path& b) {
  auto ma = json::parse(read_file(a / "manifest.json")), mb = json::parse(read_file(b / "manifest.json"));
  auto d = config_diff(ma.at("config"), mb.at("config"));
  std::erase(d, "output");
  return d;
}

// ---------------------------------------------------------------- serialization helpers

inline void put_affine(Snapshot& s, const std::string& prefix, const AffineField& f) {
  for (std::size_t m = 0; m < f.h.c.size(); ++m) s.arrays[prefix + ":h:" + std::to_string(m)] = f.h.c[m];
  for (std::size_t i = 0; i < f.g.size(); ++i)
    for (std::size_t m = 0; m < f.g[i].c.size(); ++m) s.arrays[prefix + ":g" + std::to_string(i) + ":" + std::to_string(m)] = f.g[i].c[m];
}

inline Snapshot q_snapshot(const RunConfig& c, const RenormVector& q, double amplitude) {
  Snapshot s;
  json keys = json::array();
  for (auto& [k, j] : q.q) {
    keys.push_back(k.str());
    s.arrays["q:" + k.str()] = j.c;
    s.arrays["stderr:" + k.str()] = q.stderr_.at(k).c;
  }
  s.header = {{"kind", "q"}, {"config", content_config(c.raw)}, {"amplitude", amplitude}, {"ensemble", q.ensemble_size},
              {"center", c.window.center}, {"keys", keys}};
  return s;
}

inline RenormVector q_from_snapshot(const Snapshot& s, const IndexSet& index, double center) {
  if (s.header.value("kind", "") != "q") throw FormatError("not a q snapshot");
  RenormVector q;
  q.ensemble_size = s.header.at("ensemble").get<int>();
  for (auto& k : renorm_keys(index)) {
    const auto it = s.arrays.find("q:" + k.str());
    if (it == s.arrays.end()) continue;
    AJet j(center, static_cast<int>(it->second.size()) - 1), e = j;
    j.c = it->second;
    e.c = s.arrays.at("stderr:" + k.str());
    q.q[k] = j;
    q.stderr_[k] = e;
  }
  return q;
}

inline Snapshot model_snapshot(const RunConfig& c, const ModelField& M) {
  Snapshot s;
  s.header = {{"kind", "model"}, {"config", content_config(c.raw)}, {"amplitude", M.noise.amplitude}, {"eps", M.noise.eps}};
  s.arrays["xi"] = M.xi;
  for (auto& [k, f] : M.Pi) put_affine(s, "Pi:" + k.str(), f);
  return s;
}

inline Snapshot solution_snapshot(const RunConfig& c, const SolveResult& r, double amplitude) {
  Snapshot s;
  s.header = {{"kind", "solution"}, {"config", content_config(c.raw)}, {"amplitude", amplitude}, {"residual", r.residual},
              {"mu", r.mu}, {"iterations", r.iterations}};
  s.arrays["u"] = r.u;
  s.arrays["history"] = r.history;
  return s;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- stages

inline void stage_enumerate(Run& r) {
  const auto t0 = std::chrono::steady_clock::now();
  auto idx = r.cfg.index();
  std::ostringstream os;
  write_index_set(os, idx);
  write_file(r.file("index.txt"), os.str());
  r.record("enumerate", {{"index.txt", sha256_hex(os.str())}}, json::object(), {{"size", idx.size()}}, seconds_since(t0));
}

inline IndexSet load_index(const Run& r, json& inputs) {
  inputs["index.txt"] = r.checked_input("index.txt");
  std::istringstream is(read_file(r.file("index.txt")));
  return read_index_set(is);
}

inline void stage_estimate_q(Run& r) {
  const auto t0 = std::chrono::steady_clock::now();
  json inputs = json::object();
  auto idx = load_index(r, inputs);
  const double amp = r.amplitude();
  auto q = estimate_q(EnsembleTemplate{r.cfg.noise_at(amp), r.cfg.grid(), idx, r.cfg.window.center}, r.cfg.ensemble);
  const auto sha = write_snapshot(r.file("q.snap"), q_snapshot(r.cfg, q, amp));
  CsvTable t{{"key", "homogeneity", "order", "value", "stderr"}, {}};
  for (auto& [k, j] : q.q)
    for (std::size_t m = 0; m < j.c.size(); ++m)
      t.add({k.str(), fmt_real(homogeneity(k, idx.alpha).value()), std::to_string(m), fmt_real(j.c[m]), fmt_real(q.stderr_.at(k).c[m])});
  write_file(r.file("q.csv"), t.str());
  r.record("estimate-q", {{"q.snap", sha}, {"q.csv", sha256_hex(t.str())}}, inputs,
           {{"max_abs", q.max_abs()}, {"ensemble", q.ensemble_size}, {"amplitude", amp}}, seconds_since(t0));
}

/// The realization used by solve, report and verify; rebuilt deterministically.
inline ModelField rebuild_model(const Run& r, const IndexSet& idx, const RenormVector& q) {
  BuildOptions o;
  o.center = r.cfg.window.center;
  return build_stationary(r.cfg.noise_at(r.amplitude()), r.cfg.grid(), idx, q, o);
}

inline RenormVector load_q(const Run& r, const IndexSet& idx, json& inputs) {
  inputs["q.snap"] = r.checked_input("q.snap");
  return q_from_snapshot(read_snapshot(r.file("q.snap")), idx, r.cfg.window.center);
}

inline void stage_build_model(Run& r) {
  const auto t0 = std::chrono::steady_clock::now();
  json inputs = json::object();
  auto idx = load_index(r, inputs);
  auto q = load_q(r, idx, inputs);
  auto M = rebuild_model(r, idx, q);
  const auto sha = write_snapshot(r.file("model.snap"), model_snapshot(r.cfg, M));
  r.record("build-model", {{"model.snap", sha}}, inputs,
           {{"xi_mean", field_mean(M.xi)}, {"xi_max", field_max_abs(M.xi)}, {"components", M.Pi.size()}}, seconds_since(t0));
}

/// Solves; while ||u|| exceeds delta the amplitude halves and q and the model are rebuilt.
inline void stage_solve(Run& r) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kMaxHalvings = 8;
  for (int h = 0;; ++h) {
    json inputs = json::object();
    auto idx = load_index(r, inputs);
    auto q = load_q(r, idx, inputs);
    inputs["model.snap"] = r.checked_input("model.snap");
    auto snap = read_snapshot(r.file("model.snap"));
    SolveResult res;
    try {
      res = solve_renormalized(r.cfg.solver, snap.arrays.at("xi"), q, r.cfg.a, r.cfg.window);
    } catch (const std::exception& e) {
      throw StageError(std::string("solve: ") + e.what());
    }
    const double un = field_max_abs(res.u);
    if (un <= r.cfg.solver.delta) {
      const auto sha = write_snapshot(r.file("solution.snap"), solution_snapshot(r.cfg, res, r.amplitude()));
      r.record("solve", {{"solution.snap", sha}}, inputs,
               {{"residual", res.residual}, {"mu", res.mu}, {"iterations", res.iterations}, {"u_norm", un},
                {"amplitude", r.amplitude()}, {"halvings", h}},
               seconds_since(t0));
      return;
    }
    if (h == kMaxHalvings) throw StageError("solve: ||u|| = " + fmt_real(un) + " exceeds delta after amplitude halving");
    r.manifest["effective"]["N0"] = r.amplitude() / 2;
    r.save();
    stage_estimate_q(r);
    stage_build_model(r);
  }
}

struct Loaded {
  IndexSet index;
  RenormVector q;
  ModelField M;
  SolveResult sol;
  json inputs = json::object();
};

inline Loaded load_all(const Run& r) {
  Loaded L;
  L.index = load_index(r, L.inputs);
  L.q = load_q(r, L.index, L.inputs);
  L.M = rebuild_model(r, L.index, L.q);
  L.inputs["model.snap"] = r.checked_input("model.snap");
  L.inputs["solution.snap"] = r.checked_input("solution.snap");
  auto s = read_snapshot(r.file("solution.snap"));
  L.sol.u = s.arrays.at("u");
  L.sol.history = s.arrays.at("history");
  L.sol.residual = s.header.at("residual").get<double>();
  L.sol.mu = s.header.at("mu").get<double>();
  L.sol.iterations = s.header.at("iterations").get<int>();
  return L;
}

/// Random base-point pairs with 0 < d(x, y) < rmax, from the config seed.
inline std::vector<std::pair<GridPoint, GridPoint>> random_pairs(const TorusGrid& g, int n, double rmax, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x9a1f));
  std::uniform_int_distribution<int> T(0, g.nt - 1), X(0, g.nx - 1);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<std::pair<GridPoint, GridPoint>> out;
  while (static_cast<int>(out.size()) < n) {
    GridPoint x(static_cast<std::size_t>(g.d + 1)), y;
    x[0] = T(rng);
    for (int a = 1; a <= g.d; ++a) x[static_cast<std::size_t>(a)] = X(rng);
    y = x;
    const double v = rmax * U(rng);
    y[0] += static_cast<int>(std::lround(std::copysign(v * v, v) / g.dt()));
    for (int a = 1; a <= g.d; ++a) y[static_cast<std::size_t>(a)] += static_cast<int>(std::lround(rmax * U(rng) / g.dx()));
    const double d = grid_distance(g, x, y);
    if (d > 0 && d < rmax) out.push_back({x, y});
  }
  return out;
}

inline void stage_report(Run& r) {
  const auto t0 = std::chrono::steady_clock::now();
  auto L = load_all(r);
  const auto& c = r.cfg;
  const auto& g = c.grid();
  const double amp = r.amplitude(), alpha = c.alpha.value();
  json metrics;

  // Hoelder bound and expansion on the main realization
  const HolderOptions ho{1.0 / 3, c.verify.holder_bases, c.verify.holder_points};
  auto hr = verify_holder(L.sol.u, g, alpha, amp, ho);
  auto st = make_state(g, L.sol.u, c.a, c.eta, c.window, amp);
  compute_nu(st, L.M);
  const ExpansionOptions eo{1.0 / 3, c.verify.expansion_bases, c.verify.shell_lo, c.verify.shell_hi, c.verify.per_shell};
  auto full = verify_expansion(st, L.M, c.eta, eo), empty = verify_expansion(st, L.M, 0.5 * alpha, eo);
  metrics["holder_constant"] = hr.constant;
  metrics["u_norm"] = hr.u_norm;
  metrics["eta"] = c.eta;
  metrics["expansion_exponent"] = full.expansion_exponent;
  metrics["expansion_prefactor"] = full.prefactor;
  metrics["expansion_exponent_empty"] = empty.expansion_exponent;
  CsvTable shells{{"truncation", "lo", "hi", "mean_remainder", "max_remainder", "samples"}, {}};
  for (auto* rep : {&empty, &full})
    for (auto& s : rep->shells)
      shells.add({fmt_real(rep->truncation), fmt_real(s.lo), fmt_real(s.hi), fmt_real(s.mean_remainder), fmt_real(s.max_remainder),
                  std::to_string(s.samples)});

  // lemma-level quantities
  auto bases = ball_sample(g, 1.0 / 3, c.verify.norm_bases);
  auto Neta = modelling_norms(st, L.M, bases);
  auto sk = st;
  sk.eta = alpha;
  auto Nk = modelling_norms(sk, L.M, bases);
  auto ip = check_interpolation(Nk, Neta);
  double morph = 0.0;
  auto mpts = ball_sample(g, 1.0 / 3, static_cast<std::size_t>(c.verify.morphism_points));
  for (std::size_t i = 0; i < mpts.size(); ++i)
    morph = std::max(morph, sweep_approx_morphism(st, L.M, mpts[i], c.verify.morphism_trials, 3, mix_seed(c.seed, i)));
  double gb = 0.0;
  for (auto& [x, y] : random_pairs(g, c.verify.pairs, 0.25, c.seed))
    for (auto& [h, v] : check_gamma_bound(L.M, center(L.M, x), center(L.M, y), amp, c.window)) gb = std::max(gb, v);
  metrics["rhs_bound"] = rhs_bound_constant(Neta, amp);
  metrics["interp_u"] = ip.c_u;
  metrics["interp_nu"] = ip.c_nu;
  if (std::isfinite(ip.c_nuk)) metrics["interp_nuk"] = ip.c_nuk;
  metrics["morphism"] = morph;
  metrics["gamma_bound"] = gb;
  auto where = [](const WeightedValue& w) { return w.x.empty() ? std::string() : point_label(w.x) + "->" + point_label(w.y); };
  CsvTable norms{{"quantity", "eta", "value", "location"}, {}};
  for (auto* N : {&Nk, &Neta}) {
    norms.add({"H_u", fmt_real(N->eta), fmt_real(N->H_u), where(N->H_u_at)});
    norms.add({"H_nu", fmt_real(N->eta), fmt_real(N->H_nu), where(N->H_nu_at)});
    norms.add({"I_u", fmt_real(N->eta), fmt_real(N->I_u), ""});
    norms.add({"I_nu", fmt_real(N->eta), fmt_real(N->I_nu), ""});
    norms.add({"f_opnorm_lower_bound", fmt_real(N->eta), fmt_real(N->f_opnorm), where(N->f_at)});
  }

  // eps ladder with and without the counter term
  CsvTable th{{"eps", "holder_renorm", "holder_plain", "residual_renorm", "residual_plain", "q_max", "q_divergent", "max_diff"}, {}};
  if (c.verify.ablation) {
    AblationSetup as{c.noise_at(amp), L.index, c.ensemble, c.window.center};
    auto ab = renormalization_ablation(c.solver, as, c.a, c.window, alpha);
    json rows = json::array();
    double hmin = std::numeric_limits<double>::infinity(), hmax = 0.0;
    for (auto& w : ab.rows) {
      th.add({fmt_real(w.eps), fmt_real(w.holder_renorm), fmt_real(w.holder_plain), fmt_real(w.residual_renorm),
              fmt_real(w.residual_plain), fmt_real(w.q_max), fmt_real(w.q_divergent), fmt_real(w.max_diff)});
      rows.push_back({{"eps", w.eps}, {"holder_renorm", w.holder_renorm}, {"holder_plain", w.holder_plain},
                      {"q_divergent", w.q_divergent}, {"max_diff", w.max_diff}});
      hmin = std::min(hmin, w.holder_renorm);
      hmax = std::max(hmax, w.holder_renorm);
    }
    metrics["ladder"] = rows;
    metrics["holder_ladder_ratio"] = hmax / hmin;
    metrics["slope_renorm"] = ab.slope_renorm;
    metrics["slope_plain"] = ab.slope_plain;
  }

  const json report = {{"metrics", metrics}, {"config_sha256", r.config_sha()}};
  json outputs;
  for (auto& [name, text] : std::vector<std::pair<std::string, std::string>>{
           {"theorem.csv", th.str()}, {"shells.csv", shells.str()}, {"norms.csv", norms.str()}, {"report.json", report.dump(2) + "\n"}}) {
    write_file(r.file(name), text);
    outputs[name] = sha256_hex(text);
  }
  r.record("report", outputs, L.inputs, metrics, seconds_since(t0));
}

// ---------------------------------------------------------------- verify

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0, limit = 0.0;
  std::string detail;
};

struct VerifyOutcome {
  int exit_code = 0;  // 0 pass, 1 invariant failure, 2 digest failure
  std::vector<CheckResult> checks;
  json to_json() const {
    json all = json::array(), failures = json::array();
    for (auto& c : checks) {
      json j = {{"check", c.name}, {"pass", c.pass}, {"value", c.value}, {"limit", c.limit}};
      if (!c.detail.empty()) j["detail"] = c.detail;
      all.push_back(j);
      if (!c.pass) failures.push_back(j);
    }
    return {{"status", exit_code == 0 ? "pass" : "fail"}, {"exit_code", exit_code}, {"failures", failures}, {"checks", all}};
  }
};

/// Re-derives every digest, then replays invariant suites and golden comparisons.
inline VerifyOutcome verify_run(Run& r, const std::vector<std::string>& tol_overrides = {}) {
  VerifyOutcome out;
  auto add = [&](std::string name, bool pass, double v = 0, double lim = 0, std::string detail = "") {
    out.checks.push_back({std::move(name), pass, v, lim, std::move(detail)});
  };
  // tolerance overrides apply to this verification only and are recorded
  json raw = r.cfg.raw;
  for (auto& o : tol_overrides) {
    if (o.rfind("tolerances.", 0) != 0) throw std::invalid_argument("verify accepts only tolerances.* overrides: " + o);
    apply_override(raw, o);
  }
  const auto tol = resolve_config(raw).tol;

  bool digests_ok = true;
  for (auto& [stage, rec] : r.manifest["stages"].items()) {
    if (!rec.contains("outputs")) continue;
    for (auto& [name, sha] : rec["outputs"].items()) {
      std::string detail;
      bool ok = fs::exists(r.file(name));
      if (!ok) detail = "missing";
      if (ok && file_sha256(r.file(name)) != sha.get<std::string>()) {
        ok = false;
        detail = "digest mismatch";
      }
      if (ok && name.ends_with(".snap")) {
        try {
          read_snapshot(r.file(name));
        } catch (const std::exception& e) {
          ok = false;
          detail = e.what();
        }
      }
      add("digest." + name, ok, 0, 0, detail);
      digests_ok = digests_ok && ok;
    }
  }
  for (const char* need : {"enumerate", "estimate-q", "build-model", "solve"})
    if (!r.manifest["stages"].contains(need)) {
      add(std::string("stage.") + need, false, 0, 0, "stage has not run");
      digests_ok = false;
    }
  if (!digests_ok) {
    out.exit_code = 2;
    return out;
  }

  const auto& c = r.cfg;
  auto L = load_all(r);
  {
    std::ostringstream os;
    write_index_set(os, c.index());
    add("replay.index", os.str() == read_file(r.file("index.txt")));
  }
  {
    auto snap = read_snapshot(r.file("model.snap"));
    auto again = model_snapshot(c, L.M);
    add("replay.model", encode_snapshot(again) == encode_snapshot(snap), 0, 0, "rebuilt realization equals model.snap");
  }
  // solver certificate recomputed from the stored solution
  const auto& g = c.grid();
  auto sp = spectral_for(g);
  auto res = pde_residual(*sp, L.sol.u, L.M.xi, L.sol.mu, L.q, c.a, c.window.halfwidth);
  const double rr = field_max_abs(res);
  add("certificate.residual", rr <= tol.residual, rr, tol.residual);
  // assumptions
  const double un = field_max_abs(L.sol.u);
  add("assumption.smallness", un <= c.solver.delta, un, c.solver.delta);
  double amin = std::numeric_limits<double>::infinity(), amax = 0.0, umin = amin, umax = -amin;
  for (double v : L.sol.u) {
    amin = std::min(amin, c.a(v));
    amax = std::max(amax, c.a(v));
    umin = std::min(umin, v);
    umax = std::max(umax, v);
  }
  add("assumption.ellipticity", amin >= c.Lambda && amax <= 1.0 / c.Lambda, amin, c.Lambda);
  try {
    c.a.validate_on(umin, umax, jet_order(c.alpha), c.Lambda);
    add("assumption.derivatives", true);
  } catch (const std::exception& e) {
    add("assumption.derivatives", false, 0, 0, e.what());
  }
  // model and three-point identities on random pairs
  auto st = make_state(g, L.sol.u, c.a, c.eta, c.window, r.amplitude());
  compute_nu(st, L.M);
  double re = 0, rm = 0, tp = 0, an = 0;
  for (auto& [x, y] : random_pairs(g, c.verify.pairs, 0.25, c.seed)) {
    auto Cx = center(L.M, x), Cy = center(L.M, y);
    auto gyx = gamma_yx(L.M, Cx, Cy);
    for (const auto* z : {&x, &y}) {
      re = std::max(re, reexpansion_residual(L.M, Cx, Cy, gyx, *z));
      rm = std::max(rm, reexpansion_minus_residual(L.M, Cx, Cy, gyx, *z));
    }
    tp = std::max(tp, three_point_identity_residual(st, L.M, Cx, Cy, gyx));
    an = std::max(an, anchor_residual(L.M, Cx));
  }
  add("identity.reexpansion", re <= tol.identity, re, tol.identity);
  add("identity.reexpansion_minus", rm <= tol.identity, rm, tol.identity);
  add("identity.three_point", tp <= tol.identity, tp, tol.identity);
  add("identity.anchor", an <= tol.identity, an, tol.identity);
  // goldens against the report, when both exist
  if (r.manifest["stages"].contains("report") && !c.goldens.empty()) {
    auto rep = json::parse(read_file(r.file("report.json")));
    for (auto& [k, gv] : c.goldens.items()) {
      const auto& m = rep["metrics"];
      if (!m.contains(k)) {
        add("golden." + k, false, 0, 0, "metric missing from report");
        continue;
      }
      const double v = m[k].get<double>(), lim = gv.get<double>() * (1 + tol.golden_rel);
      add("golden." + k, v <= lim, v, lim);
    }
  }
  for (auto& ch : out.checks)
    if (!ch.pass) out.exit_code = 1;
  r.manifest["verify"] = {{"overrides", tol_overrides}, {"tolerances", {{"residual", tol.residual}, {"identity", tol.identity},
                                                                         {"golden_rel", tol.golden_rel}}},
                          {"status", out.exit_code == 0 ? "pass" : "fail"}};
  r.save();
  write_file(r.file("verify.json"), out.to_json().dump(2) + "\n");
  return out;
}

}  // namespace mrs
