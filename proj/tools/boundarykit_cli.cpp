// boundarykit command-line front end.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "boundarykit/boundarykit.hpp"
#include "boundarykit/gateway.hpp"

namespace bk = boundarykit;
namespace fs = std::filesystem;

namespace {

// --config, then BOUNDARYKIT_CONFIG, then the built-in station deployment.
bk::Deployment resolve_deployment(const std::string& flag) {
  std::string path = flag;
  if (path.empty()) {
    if (const char* env = std::getenv(bk::kConfigEnvVar)) path = env;
  }
  if (path.empty()) return bk::deployment_from_json(bk::fixtures::station_deployment());
  return bk::load_deployment(path);
}

int cmd_lint(const std::string& path, const std::string& format, bool fail_on_defect) {
  const bk::ArtifactStore store = bk::load_store(path);
  const bk::IntegrityReport& r = store.integrity();
  if (format == "json") {
    nlohmann::json j = bk::to_json(r);
    j["defect_count"] = r.defect_count();
    std::cout << j.dump(2) << '\n';
  } else {
    for (const auto& b : r.broken_behavior_refs) {
      std::cout << "broken-behavior-ref  " << b.skill_id << " -> " << b.behavior_id << '\n';
    }
    for (const auto& m : r.missing_knowledge_links) {
      std::cout << "missing-link         " << m.owner << " -> " << m.missing << " (" << m.via << ")\n";
    }
    for (const auto& o : r.orphan_nodes) std::cout << "orphan-node          " << o << '\n';
    std::cout << r.broken_behavior_refs.size() << " broken skill->behavior references, "
              << r.missing_knowledge_links.size() << " missing knowledge links, " << r.orphan_nodes.size()
              << " orphaned nodes (" << r.defect_count() << " defects); traversable="
              << (r.traversable ? "true" : "false") << '\n';
  }
  return fail_on_defect && r.defect_count() > 0 ? 2 : 0;
}

int cmd_run(const std::string& job_path, const std::string& config, const std::string& approve_as,
            const std::string& audit_log) {
  const nlohmann::json job_doc = bk::parse_json_file(job_path);
  bk::Deployment dep;
  if (job_doc.contains("deployment")) {
    dep = bk::load_deployment(bk::resolve_path(fs::absolute(job_path).parent_path(), job_doc["deployment"].get<std::string>()));
  } else {
    dep = resolve_deployment(config);
  }
  bk::EngineOptions opts;
  if (!audit_log.empty()) opts.audit_file = audit_log;
  auto engine = bk::make_engine(dep, opts);
  bk::Job job = bk::job_from_json(job_doc, *engine);
  bk::WorkflowRun run = engine->run_workflow(job.workflow, job.stubs, job.request);
  if (run.status == bk::RunStatus::awaiting_approval && !approve_as.empty() && run.pending_package) {
    run = *engine->approve(*run.pending_package, approve_as).run;
  }
  std::cout << bk::to_json(run).dump(2) << '\n';
  if (run.incident) std::cout << bk::to_json(*engine->incidents().get(*run.incident)).dump(2) << '\n';
  switch (run.status) {
    case bk::RunStatus::done:
    case bk::RunStatus::awaiting_approval: return 0;
    default: return 1;
  }
}

int cmd_replay(const std::string& name, std::uint64_t seed, const std::string& format, const std::string& audit_log) {
  bk::EngineOptions opts = bk::scenario_engine_options();
  if (!audit_log.empty()) opts.audit_file = audit_log;
  const bk::ScenarioResult r = bk::replay_scenario(name, seed, opts);
  if (format == "json") {
    std::cout << nlohmann::json{{"scenario", r.name}, {"ok", r.ok}, {"report", r.report},
                                {"audit_records", r.audit.size()}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << r.name << (r.ok ? "" : " (UNEXPECTED END STATE)") << '\n';
    for (const auto& line : r.summary) std::cout << "  " << line << '\n';
    std::cout << "  " << r.audit.size() << " audit records\n";
  }
  return r.ok ? 0 : 1;
}

int cmd_simulate(const bk::SimulationConfig& cfg, const std::string& format) {
  const bk::SimulationReport r = bk::run_simulation(cfg);
  if (format == "json") {
    std::cout << bk::to_json(r).dump(2) << '\n';
  } else if (format == "csv") {
    std::cout << bk::to_csv(r);
  } else {
    auto line = [](const char* label, const bk::RateEstimate& e) {
      std::printf("%-20s empirical %.6f  analytic %.6f  3-sigma [%.6f, %.6f]  n=%llu  %s\n", label, e.empirical,
                  e.analytic, e.band_lo, e.band_hi, static_cast<unsigned long long>(e.trials),
                  e.within_3sigma ? "within" : "OUTSIDE");
    };
    std::printf("p=%g n=%u q=%g k=%u trials=%llu seed=%llu\n", cfg.params.p, cfg.params.n, cfg.params.q, cfg.params.k,
                static_cast<unsigned long long>(cfg.trials), static_cast<unsigned long long>(cfg.seed));
    line("end-to-end success", r.end_to_end_success);
    line("escape rate", r.escape);
    std::printf("error-bearing %llu, caught %llu, escaped %llu\n", static_cast<unsigned long long>(r.error_bearing),
                static_cast<unsigned long long>(r.caught), static_cast<unsigned long long>(r.escaped));
  }
  return 0;
}

int cmd_audit_verify(const std::string& path) {
  const bk::ChainVerdict v = bk::verify_persisted_bytes(bk::read_file_bytes(path));
  if (v.valid) {
    std::cout << "valid\n";
    return 0;
  }
  std::cout << "invalid: first bad seq " << *v.first_bad_seq << " (" << v.reason << ")\n";
  return 1;
}

int cmd_serve(const std::string& host, int port, const std::string& config, const std::string& replay,
              const std::string& audit_log) {
  const bk::Deployment dep = resolve_deployment(config);
  bk::EngineOptions opts;
  if (!audit_log.empty()) opts.audit_file = audit_log;
  auto engine = bk::make_engine(dep, opts);
  if (!replay.empty()) {
    const auto r = bk::replay_into(*engine, replay);
    std::cerr << "replayed " << r.name << (r.ok ? "" : " (unexpected end state)") << '\n';
  }
  bk::Gateway gw(*engine, dep.sessions);
  std::cerr << "serving /v1 on " << host << ':' << port << '\n';
  return gw.listen(host, port) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boundarykit: gated multi-stage workflow engine"};
  app.require_subcommand(1);

  auto* lint = app.add_subcommand("lint-artifacts", "Check an artifact bundle for broken references and orphans");
  std::string lint_path, lint_format = "text";
  bool fail_on_defect = false;
  lint->add_option("path", lint_path, "Bundle directory or archive file")->required();
  lint->add_option("--format", lint_format)->check(CLI::IsMember({"text", "json"}));
  lint->add_flag("--fail-on-defect", fail_on_defect, "Exit nonzero when any defect is found");

  auto* run = app.add_subcommand("run", "Run a workflow job file");
  std::string job_path, run_config, approve_as, run_audit;
  run->add_option("job", job_path, "Job document")->required()->check(CLI::ExistingFile);
  run->add_option("--config", run_config, "Deployment document (default: $BOUNDARYKIT_CONFIG)");
  run->add_option("--approve-as", approve_as, "Supervisor role that approves a pending package");
  run->add_option("--audit-log", run_audit, "Persist the audit log to this file");

  auto* replay = app.add_subcommand("replay", "Replay a built-in scenario");
  std::string scenario, replay_format = "text", replay_audit;
  std::uint64_t replay_seed = 7;
  replay->add_option("scenario", scenario)->required()->check(CLI::IsMember(bk::scenario_names()));
  replay->add_option("--seed", replay_seed);
  replay->add_option("--format", replay_format)->check(CLI::IsMember({"text", "json"}));
  replay->add_option("--audit-log", replay_audit, "Persist the audit log to this file");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo check of p^n and (1-q)^k");
  bk::SimulationConfig cfg;
  std::string sim_format = "text";
  sim->add_option("--p", cfg.params.p, "Per-stage success probability")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--n", cfg.params.n, "Stage count")->check(CLI::PositiveNumber);
  sim->add_option("--q", cfg.params.q, "Per-layer catch probability")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--k", cfg.params.k, "Layer count");
  sim->add_option("--trials", cfg.trials)->check(CLI::PositiveNumber);
  sim->add_option("--seed", cfg.seed);
  sim->add_option("--threads", cfg.threads, "Worker threads (0 = all cores)");
  sim->add_option("--format", sim_format)->check(CLI::IsMember({"text", "json", "csv"}));

  auto* audit = app.add_subcommand("audit", "Audit log tools");
  audit->require_subcommand(1);
  auto* verify = audit->add_subcommand("verify", "Verify a persisted audit log");
  std::string log_path;
  verify->add_option("log", log_path)->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Serve the /v1 HTTP API");
  std::string host = "127.0.0.1", serve_config, serve_replay, serve_audit;
  int port = 8080;
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--config", serve_config, "Deployment document (default: $BOUNDARYKIT_CONFIG)");
  serve->add_option("--replay", serve_replay, "Replay a scenario into the engine before serving")
      ->check(CLI::IsMember({"iss004_chain", "audit_differential"}));
  serve->add_option("--audit-log", serve_audit, "Persist the audit log to this file");

  auto* exporter = app.add_subcommand("export-fixtures", "Write the built-in fixtures to a directory");
  exporter->group("");
  std::string export_dir;
  exporter->add_option("dir", export_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*lint) return cmd_lint(lint_path, lint_format, fail_on_defect);
    if (*run) return cmd_run(job_path, run_config, approve_as, run_audit);
    if (*replay) return cmd_replay(scenario, replay_seed, replay_format, replay_audit);
    if (*sim) return cmd_simulate(cfg, sim_format);
    if (*verify) return cmd_audit_verify(log_path);
    if (*serve) return cmd_serve(host, port, serve_config, serve_replay, serve_audit);
    if (*exporter) {
      bk::fixtures::export_fixtures(export_dir);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
