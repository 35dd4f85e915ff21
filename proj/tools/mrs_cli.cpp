// mrs: command-line driver for the staged pipeline.
//
// Exit codes: 0 success, 1 stage or invariant failure, 2 digest failure, 3 invalid config.
#include <CLI11.hpp>

#include <mrs/pipeline.hpp>

#include <cstdlib>
#include <iostream>

using namespace mrs;

namespace {

struct Common {
  std::string config, out;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "run directory (default: config output, or $MRS_OUTPUT)");
  cmd->add_option("--threads", c.threads, "worker cap; results do not depend on it")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", c.seed, "noise seed");
  cmd->add_option("--override", c.overrides, "KEY=VALUE on a dotted config key")->allow_extra_args(false);
}

fs::path run_dir(const Common& c, const json& raw) {
  if (!c.out.empty()) return c.out;
  if (const char* e = std::getenv("MRS_OUTPUT"); e && *e) return e;
  return raw.at("output").get<std::string>();
}

/// Config precedence: defaults < manifest of an existing run (when no --config) < file < overrides < --seed.
json resolve_raw(const Common& c) {
  std::vector<std::string> ov = c.overrides;
  if (c.seed) ov.push_back("seed=" + std::to_string(*c.seed));
  if (!c.config.empty()) return load_config(fs::path(c.config), ov);
  fs::path dir = c.out;
  if (dir.empty())
    if (const char* e = std::getenv("MRS_OUTPUT"); e && *e) dir = e;
  if (!dir.empty() && fs::exists(dir / "manifest.json")) {
    const auto m = json::parse(read_file(dir / "manifest.json"));
    return load_config(std::nullopt, ov, &m.at("config"));
  }
  return load_config(std::nullopt, ov);
}

int run_stages(const Common& c, const std::vector<std::string>& stages, bool fresh) {
  set_threads(c.threads);
  Run r;
  try {
    json raw = resolve_raw(c);
    const auto dir = run_dir(c, raw);
    raw["output"] = dir.string();
    r = open_run(dir, raw, fresh);
  } catch (const StageError& e) {
    std::cerr << "mrs: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mrs: config error: " << e.what() << "\n";
    return 3;
  }
  for (auto& s : stages) {
    try {
      if (s == "enumerate") stage_enumerate(r);
      else if (s == "estimate-q") stage_estimate_q(r);
      else if (s == "build-model") stage_build_model(r);
      else if (s == "solve") stage_solve(r);
      else if (s == "report") stage_report(r);
      std::cerr << "mrs: " << s << " done in " << r.manifest["stages"][s].value("seconds", 0.0) << " s\n";
    } catch (const DigestError& e) {
      std::cerr << "mrs: stage " << s << " failed: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "mrs: stage " << s << " failed: " << e.what() << "\n";
      return 1;
    }
  }
  return 0;
}

int run_verify(const Common& c) {
  set_threads(c.threads);
  try {
    fs::path dir = c.out;
    if (dir.empty())
      if (const char* e = std::getenv("MRS_OUTPUT"); e && *e) dir = e;
    if (dir.empty() || !fs::exists(dir / "manifest.json")) {
      std::cerr << "mrs: verify needs --out pointing at a run directory\n";
      return 3;
    }
    const auto m = json::parse(read_file(dir / "manifest.json"));
    Run r = open_run(dir, m.at("config"), false);
    auto out = verify_run(r, c.overrides);
    std::cout << out.to_json().dump(2) << "\n";
    return out.exit_code;
  } catch (const DigestError& e) {
    std::cout << json{{"status", "fail"}, {"exit_code", 2}, {"failures", {{{"check", "digest"}, {"detail", e.what()}}}}}.dump(2) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mrs: verify failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"staged pipeline for regularity-structure models of quasilinear SPDEs"};
  app.require_subcommand(1);
  Common c;
  std::string diff_a, diff_b;
  struct Verb {
    const char* name;
    const char* help;
    std::vector<std::string> stages;
  };
  const std::vector<Verb> verbs = {
      {"enumerate", "write the populated index set (starts a run)", {"enumerate"}},
      {"estimate-q", "estimate the BPHZ renormalization vector", {"estimate-q"}},
      {"build-model", "build the stationary model realization", {"build-model"}},
      {"solve", "solve the renormalized equation", {"solve"}},
      {"report", "Hoelder, expansion, lemma-level and ablation reports", {"report"}},
      {"run", "all stages from scratch, then verify", {"enumerate", "estimate-q", "build-model", "solve", "report"}},
  };
  std::map<std::string, CLI::App*> cmds;
  for (auto& v : verbs) {
    cmds[v.name] = app.add_subcommand(v.name, v.help);
    add_common(cmds[v.name], c);
  }
  auto* verify = app.add_subcommand("verify", "re-derive digests and replay invariant suites");
  add_common(verify, c);
  auto* diff = app.add_subcommand("diff", "name the config knobs that differ between two runs");
  diff->add_option("a", diff_a)->required()->check(CLI::ExistingDirectory);
  diff->add_option("b", diff_b)->required()->check(CLI::ExistingDirectory);
  CLI11_PARSE(app, argc, argv);

  if (verify->parsed()) return run_verify(c);
  if (diff->parsed()) {
    try {
      for (auto& k : manifest_diff(diff_a, diff_b)) std::cout << k << "\n";
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "mrs: diff failed: " << e.what() << "\n";
      return 1;
    }
  }
  for (auto& v : verbs) {
    if (!cmds[v.name]->parsed()) continue;
    const bool fresh = std::string(v.name) == "enumerate" || std::string(v.name) == "run";
    int rc = run_stages(c, v.stages, fresh);
    if (rc != 0 || std::string(v.name) != "run") return rc;
    Common vc = c;
    vc.overrides.clear();
    if (vc.out.empty()) {
      json raw = resolve_raw(c);
      vc.out = run_dir(c, raw).string();
    }
    return run_verify(vc);
  }
  return 0;
}
