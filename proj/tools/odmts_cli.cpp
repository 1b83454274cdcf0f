// odmts: design on-demand multimodal transit systems under congestion
// scenarios, with optional dedicated bus lanes.
//
// Exit codes: 0 success, 2 validation error, 3 solver did not converge,
// 4 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "odmts/adoption.hpp"
#include "odmts/benders.hpp"
#include "odmts/io.hpp"
#include "odmts/model.hpp"
#include "odmts/report.hpp"
#include "odmts/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitIo = 4;

struct ScenarioArgs {
  std::string scenario = "baseline";
  std::string qrl_path;
  std::string queries_path;
  std::string matrix_path;
  std::string overlay_path;
};

void add_scenario_options(CLI::App* cmd, ScenarioArgs& args) {
  cmd->add_option("--scenario", args.scenario, "Congestion scenario")
      ->check(CLI::IsMember({"baseline", "expected", "50-50", "pessimistic"}))
      ->capture_default_str();
  cmd->add_option("--qrl", args.qrl_path, "Query reference locations CSV (id,lat,lon)");
  cmd->add_option("--queries", args.queries_path,
                  "Query dump CSV (from_id,to_id,baseline_min,expected_min,pessimistic_min)");
  cmd->add_option("--matrix", args.matrix_path, "Prebuilt scaling matrix JSON");
  cmd->add_option("--dbl", args.overlay_path, "Dedicated-bus-lane overlay JSON");
}

std::vector<double> parse_rho_list(const std::string& text) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cur, &used));
      if (used != cur.size()) throw std::invalid_argument(cur);
    } catch (const std::exception&) {
      throw odmts::ValidationError("--rho: '" + cur + "' is not a number");
    }
    cur.clear();
  };
  for (char c : text) {
    if (c == ',') flush();
    else cur += c;
  }
  flush();
  if (out.empty()) throw odmts::ValidationError("--rho: empty list");
  return out;
}

odmts::ExperimentConfig make_config(const std::string& instance, const ScenarioArgs& sc,
                                    const std::vector<double>& rhos, bool sync, double tolerance,
                                    int max_rounds, const std::string& out_dir) {
  odmts::ExperimentConfig cfg;
  cfg.instance_path = instance;
  cfg.scenario = odmts::parse_scenario_tag(sc.scenario);
  cfg.qrl_path = sc.qrl_path;
  cfg.queries_path = sc.queries_path;
  cfg.matrix_path = sc.matrix_path;
  cfg.overlay_path = sc.overlay_path;
  cfg.rho_values = rhos;
  cfg.sync = sync;
  cfg.tolerance = tolerance;
  cfg.max_rounds = max_rounds;
  cfg.out_dir = out_dir;
  return cfg;
}

int report_convergence(const odmts::ExperimentResult& result) {
  bool ok = true;
  for (const odmts::SweepEntry& e : result.entries) {
    if (!e.solution.converged || !e.solution.inner_converged) {
      std::fprintf(stderr, "warning: rho=%g did not converge (rounds=%d)\n", e.rho,
                   e.solution.rounds);
      ok = false;
    }
  }
  return ok ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ODMTS network design under congestion scenarios"};
  app.require_subcommand(1);

  // validate
  auto* validate = app.add_subcommand("validate", "Check an instance file");
  std::string v_instance;
  validate->add_option("--instance", v_instance, "Instance JSON")->required();

  // scale
  auto* scale = app.add_subcommand("scale", "Apply a congestion scenario to an instance");
  std::string s_instance, s_out, s_emit_matrix;
  ScenarioArgs s_args;
  scale->add_option("--instance", s_instance, "Instance JSON")->required();
  add_scenario_options(scale, s_args);
  scale->add_option("--out-instance", s_out, "Scaled instance JSON path")->required();
  scale->add_option("--emit-matrix", s_emit_matrix, "Also write the scaling matrix JSON here");

  // design
  auto* design = app.add_subcommand("design", "Fixed-demand design via Benders decomposition");
  std::string d_instance, d_out, d_checkpoint, d_riders = "existing";
  ScenarioArgs d_args;
  double d_tolerance = 1e-6;
  int d_max_iterations = 500;
  double d_time_limit = 0.0;
  design->add_option("--instance", d_instance, "Instance JSON")->required();
  add_scenario_options(design, d_args);
  design->add_option("--riders", d_riders, "Rider set to serve: existing | all")
      ->check(CLI::IsMember({"existing", "all"}))
      ->capture_default_str();
  design->add_option("--tolerance", d_tolerance, "Relative optimality gap")->capture_default_str();
  design->add_option("--max-iterations", d_max_iterations, "Benders iteration cap")
      ->capture_default_str();
  design->add_option("--time-limit", d_time_limit, "Wall-clock budget in seconds (0 = none)");
  design->add_option("--checkpoint", d_checkpoint, "Cut-pool checkpoint JSON (resume + save)");
  design->add_option("--out", d_out, "Output directory")->required();

  // solve
  auto* solve = app.add_subcommand("solve", "Bilevel design with rider adoption");
  std::string so_instance, so_out, so_rho;
  ScenarioArgs so_args;
  bool so_sync = false;
  double so_tolerance = 1e-6;
  int so_max_rounds = 20;
  solve->add_option("--instance", so_instance, "Instance JSON")->required();
  add_scenario_options(solve, so_args);
  solve->add_option("--rho", so_rho, "Adoption factor (default: instance parameters)");
  solve->add_flag("--sync", so_sync, "Fully synchronized system: no boarding waits");
  solve->add_option("--tolerance", so_tolerance, "Benders relative gap")->capture_default_str();
  solve->add_option("--max-rounds", so_max_rounds, "Adoption round cap")->capture_default_str();
  solve->add_option("--out", so_out, "Output directory")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Solve across a grid of adoption factors");
  std::string sw_instance, sw_out, sw_rho;
  ScenarioArgs sw_args;
  bool sw_sync = false;
  double sw_tolerance = 1e-6;
  int sw_max_rounds = 20;
  sweep->add_option("--instance", sw_instance, "Instance JSON")->required();
  add_scenario_options(sweep, sw_args);
  sweep->add_option("--rho", sw_rho, "Comma-separated adoption factors, e.g. 1.4,1.5,1.6")
      ->required();
  sweep->add_flag("--sync", sw_sync, "Fully synchronized system: no boarding waits");
  sweep->add_option("--tolerance", sw_tolerance, "Benders relative gap")->capture_default_str();
  sweep->add_option("--max-rounds", sw_max_rounds, "Adoption round cap")->capture_default_str();
  sweep->add_option("--out", sw_out, "Output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "Paired no-DBL vs DBL comparison tables");
  std::string r_base, r_dbl, r_out;
  report->add_option("--base", r_base, "Solution JSON of the no-DBL run")->required();
  report->add_option("--dbl-run", r_dbl, "Solution JSON of the DBL run")->required();
  report->add_option("--out", r_out, "Output directory")->required();

  // export-geojson
  auto* geo = app.add_subcommand("export-geojson", "Network map for a saved solution");
  std::string g_instance, g_solution, g_out;
  geo->add_option("--instance", g_instance, "Scaled instance JSON the run used")->required();
  geo->add_option("--solution", g_solution, "Solution JSON")->required();
  geo->add_option("--out", g_out, "GeoJSON output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (validate->parsed()) {
      const odmts::Instance inst = odmts::load_instance(v_instance);
      std::printf("OK: %zu locations, %zu arcs (%zu bus), %zu trips\n",
                  inst.network.node_count(), inst.network.arc_count(),
                  inst.network.bus_arc_ids().size(), inst.trips.size());
      return kExitOk;
    }

    if (scale->parsed()) {
      const odmts::Instance inst = odmts::load_instance(s_instance);
      if (s_args.qrl_path.empty()) throw odmts::ValidationError("scale requires --qrl");
      const odmts::QrlSet qrls = odmts::load_qrls_csv(s_args.qrl_path);
      odmts::ScalingMatrix matrix;
      if (!s_args.matrix_path.empty()) {
        matrix = odmts::load_matrix(s_args.matrix_path);
        if (scale->count("--scenario") && matrix.scenario != odmts::ScenarioTag::custom &&
            matrix.scenario != odmts::parse_scenario_tag(s_args.scenario))
          throw odmts::ValidationError(std::string("matrix file is tagged '") +
                                       odmts::to_string(matrix.scenario) +
                                       "' but --scenario asks for '" + s_args.scenario + "'");
      } else if (!s_args.queries_path.empty()) {
        matrix = odmts::build_scaling_matrix(odmts::load_query_dump_csv(s_args.queries_path),
                                             odmts::parse_scenario_tag(s_args.scenario));
      } else {
        throw odmts::ValidationError("scale requires --queries or --matrix");
      }
      std::optional<odmts::DblOverlay> overlay;
      if (!s_args.overlay_path.empty()) overlay = odmts::load_overlay(s_args.overlay_path);
      const odmts::ScenarioResult scaled = odmts::apply_scenario(inst, qrls, matrix, overlay);
      for (const std::string& w : scaled.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      odmts::save_instance(scaled.instance, s_out);
      if (!s_emit_matrix.empty()) odmts::save_matrix(matrix, s_emit_matrix);
      std::printf("wrote %s\n", s_out.c_str());
      return kExitOk;
    }

    if (design->parsed()) {
      odmts::ExperimentConfig cfg = make_config(d_instance, d_args, {1.5}, false, d_tolerance,
                                                20, d_out);
      const odmts::PreparedInputs prep = odmts::prepare_inputs(cfg);
      for (const std::string& w : prep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

      std::vector<odmts::Trip> riders;
      for (const odmts::Trip& t : prep.instance.trips)
        if (d_riders == "all" || t.rider_class == odmts::RiderClass::existing)
          riders.push_back(t);

      odmts::BendersOptions opts;
      opts.tolerance = d_tolerance;
      opts.max_iterations = d_max_iterations;
      opts.time_limit_s = d_time_limit;
      if (!d_checkpoint.empty()) {
        if (std::filesystem::exists(d_checkpoint))
          opts.resume_from = odmts::load_checkpoint(d_checkpoint, prep.instance.network);
        opts.on_iteration = [&](const odmts::BendersState& s) {
          odmts::save_checkpoint(s, d_checkpoint);
        };
      }
      const odmts::DesignSolution sol =
          odmts::solve_fixed_demand({prep.instance.network, riders, prep.instance.params}, opts);
      std::filesystem::create_directories(d_out);
      odmts::write_text_file(d_out + "/design.json",
                             odmts::design_solution_to_json(sol).dump(2) + "\n");
      std::printf("design: %zu open arcs, objective %.6f, gap %.3g (%s)\n",
                  sol.design.open_ids().size(), sol.objective.total(), sol.gap,
                  sol.converged ? "converged" : "NOT converged");
      return sol.converged ? kExitOk : kExitNotConverged;
    }

    if (solve->parsed()) {
      double rho = odmts::load_instance(so_instance).params.adoption_factor;
      if (!so_rho.empty()) {
        const std::vector<double> rhos = parse_rho_list(so_rho);
        if (rhos.size() != 1)
          throw odmts::ValidationError("solve takes a single --rho; use `sweep` for a list");
        rho = rhos.front();
      }
      const odmts::ExperimentConfig cfg =
          make_config(so_instance, so_args, {rho}, so_sync, so_tolerance, so_max_rounds, so_out);
      const odmts::ExperimentResult result = odmts::run_experiment(cfg);
      for (const std::string& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      const odmts::BilevelSolution& sol = result.entries.front().solution;
      std::printf("solve: %zu open arcs, leader objective %.6f, %d rounds (%s)\n",
                  sol.design.open_ids().size(), sol.leader_objective, sol.rounds,
                  sol.converged ? "converged" : "NOT converged");
      return report_convergence(result);
    }

    if (sweep->parsed()) {
      const std::vector<double> rhos = parse_rho_list(sw_rho);
      const odmts::ExperimentConfig cfg =
          make_config(sw_instance, sw_args, rhos, sw_sync, sw_tolerance, sw_max_rounds, sw_out);
      const odmts::ExperimentResult result = odmts::run_experiment(cfg);
      for (const std::string& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::printf("sweep: %zu runs written to %s\n", result.entries.size(), sw_out.c_str());
      return report_convergence(result);
    }

    if (report->parsed()) {
      const odmts::SolutionView base = odmts::load_solution_view(r_base);
      const odmts::SolutionView dbl = odmts::load_solution_view(r_dbl);
      std::filesystem::create_directories(r_out);
      odmts::write_text_file(r_out + "/paired_adoption_table.csv",
                             odmts::paired_adoption_table_csv(base, dbl));
      odmts::write_text_file(r_out + "/paired_mode_table.csv",
                             odmts::paired_mode_table_csv(base, dbl));
      std::printf("wrote paired tables to %s\n", r_out.c_str());
      return kExitOk;
    }

    if (geo->parsed()) {
      const odmts::Instance inst = odmts::load_instance(g_instance);
      const odmts::SolutionView view = odmts::load_solution_view(g_solution);
      odmts::write_text_file(g_out,
                             odmts::network_geojson_from_view(inst.network, view).dump(2) + "\n");
      std::printf("wrote %s\n", g_out.c_str());
      return kExitOk;
    }
  } catch (const odmts::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const odmts::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
