#include "graze/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include "graze/chaosdiag.hpp"
#include "graze/grazing.hpp"
#include "graze/orbit.hpp"
#include "graze/report_io.hpp"

namespace graze::cli {

namespace {

const std::vector<std::string> tolerance_keys = {
    "rel_tol", "abs_tol",    "tol_event",  "graze_tol", "max_impacts",
    "v_stick", "max_step",   "defect_factor", "newton_tol", "max_newton"};

system_definition build_system(const run_config& cfg) {
  const std::string name = cfg.get_string("system", "name");
  auto params = cfg.number_table("system", {"name"});
  return make_system(name, params);
}

integrator_options build_integrator_options(const run_config& cfg) {
  integrator_options o;
  o.rel_tol = cfg.get_number("tolerances", "rel_tol", o.rel_tol);
  o.abs_tol = cfg.get_number("tolerances", "abs_tol", o.abs_tol);
  o.tol_event = cfg.get_number("tolerances", "tol_event", o.tol_event);
  o.graze_tol = cfg.get_number("tolerances", "graze_tol", o.graze_tol);
  o.max_impacts = cfg.get_int("tolerances", "max_impacts", o.max_impacts);
  o.v_stick = cfg.get_number("tolerances", "v_stick", o.v_stick);
  o.max_step = cfg.get_number("tolerances", "max_step", o.max_step);
  o.defect_factor = cfg.get_number("tolerances", "defect_factor", o.defect_factor);
  for (const char* key : {"rel_tol", "abs_tol", "tol_event", "graze_tol", "v_stick"}) {
    if (cfg.get_number("tolerances", key, 1.0) <= 0.0) {
      throw config_error(std::string("tolerance \"") + key + "\" must be positive");
    }
  }
  if (o.v_stick < o.graze_tol) {
    throw config_error("v_stick must be at least graze_tol");
  }
  return o;
}

orbit_options build_orbit_options(const run_config& cfg) {
  orbit_options o;
  o.integrator = build_integrator_options(cfg);
  o.newton_tol = cfg.get_number("tolerances", "newton_tol", o.newton_tol);
  o.max_newton = cfg.get_int("tolerances", "max_newton", o.max_newton);
  return o;
}

vec parse_state_vector(const run_config& cfg, const std::string& section,
                       const std::string& key, int dim) {
  const auto values = cfg.get_numbers(section, key);
  if (static_cast<int>(values.size()) != dim) {
    throw config_error("key \"" + key + "\" in [" + section + "] must have " +
                       std::to_string(dim) + " entries");
  }
  vec z(dim);
  for (int i = 0; i < dim; ++i) z[i] = values[i];
  return z;
}

/// Collects output files, then writes them plus a manifest with content
/// hashes and the config echo.
class output_bundle {
 public:
  output_bundle(std::string command, const run_config& cfg, const cli_env& env)
      : command_(std::move(command)), cfg_(cfg), env_(env) {}

  void add(const std::string& name, std::string content) {
    files_.emplace_back(name, std::move(content));
  }

  void write() {
    namespace fs = std::filesystem;
    fs::create_directories(env_.out_dir);
    json manifest;
    manifest["command"] = command_;
    manifest["config"] = cfg_.text();
    manifest["config_hash"] = content_hash(cfg_.text());
    manifest["version"] = "0.1.0";
    json file_hashes;
    for (const auto& [name, content] : files_) {
      write_file((fs::path(env_.out_dir) / name).string(), content);
      file_hashes[name] = content_hash(content);
    }
    manifest["files"] = file_hashes;
    const std::string text = manifest.dump(2) + "\n";
    write_file((fs::path(env_.out_dir) / "manifest.json").string(), text);
  }

 private:
  std::string command_;
  const run_config& cfg_;
  const cli_env& env_;
  std::vector<std::pair<std::string, std::string>> files_;
};

double spectral_radius_of(const mat& m) {
  return m.size() ? m.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
}

json orbit_json(const periodic_orbit& orb) {
  json j;
  j["mu"] = orb.mu;
  j["theta"] = orb.theta;
  j["z_star"] = vector_json(orb.z_star);
  j["residual"] = orb.residual;
  j["impacts_per_period"] = orb.impacts_per_period;
  json imp = json::array();
  for (const auto& [tau, speed] : orb.impacts) {
    imp.push_back({{"tau", tau}, {"approach_speed", speed}});
  }
  j["impacts"] = imp;
  j["spectral_radius"] = spectral_radius_of(orb.jacobian);
  return j;
}

/// Settles onto the attractor, then refines the periodic orbit there.
periodic_orbit settle_and_find(const system_definition& sys, double theta, double mu,
                               const vec& z_init, int settle_periods,
                               const orbit_options& opts) {
  integrator_options io = opts.integrator;
  io.store_dense = false;
  vec z = z_init;
  state s(-theta, z);
  trajectory tr = simulate(sys, s, -theta + settle_periods * sys.period, mu, io);
  return find_periodic(sys, theta, mu, tr.final_state.z, opts);
}

/// Family pipeline shared by cmd_family and cmd_grazing_report.
struct family_run {
  orbit_family family;
  bool stalled = false;
};

family_run run_family(const system_definition& sys, const run_config& cfg,
                      const orbit_options& opts) {
  const double period = sys.period;
  const double theta = cfg.get_number("family", "theta", period / 4.0);
  const double mu_start = cfg.get_number("family", "mu_start");
  const double mu_end = cfg.get_number("family", "mu_end");
  for (double m : {mu_start, mu_end}) {
    if (m < sys.mu_range[0] || m > sys.mu_range[1]) {
      throw config_error("parameter grid outside mu_range: mu=" + std::to_string(m));
    }
  }

  periodic_orbit orbit0;
  if (cfg.has("family", "z_guess")) {
    const vec guess = parse_state_vector(cfg, "family", "z_guess", sys.state_dim());
    orbit0 = find_periodic(sys, theta, mu_start, guess, opts);
  } else {
    vec z_init = vec::Zero(sys.state_dim());
    z_init[0] = 1.0;
    if (cfg.has("family", "z_init")) {
      z_init = parse_state_vector(cfg, "family", "z_init", sys.state_dim());
    }
    const int settle = cfg.get_int("family", "settle_periods", 200);
    orbit0 = settle_and_find(sys, theta, mu_start, z_init, settle, opts);
  }

  family_run out;
  try {
    out.family = continue_family(sys, theta, mu_start, mu_end, orbit0, opts);
  } catch (const continuation_stall_error& err) {
    out.family = err.partial;
    out.stalled = true;
  }
  return out;
}

json grazing_record_json(const grazing_record& rec) {
  json j;
  j["mu_star"] = rec.mu_star;
  j["tau0"] = rec.tau0;
  j["tau0_normalized"] = 0.0;
  j["zbar0"] = vector_json(rec.zbar0);
  j["phi0"] = rec.phi0;
  j["z_star"] = vector_json(rec.z_star);
  j["theta"] = rec.theta;
  j["x_residual"] = rec.x_residual;
  j["y_residual"] = rec.y_residual;
  return j;
}

int classify_failure(const std::exception& err) {
  (void)err;
  return exit_integrator;
}

}  // namespace

int cmd_simulate(const run_config& cfg, const cli_env& env) {
  cfg.validate({{"system", {"*"}},
                {"tolerances", tolerance_keys},
                {"simulate", {"t0", "t1", "z0", "mu", "samples_per_step"}}});
  const auto sys = build_system(cfg);
  const auto opts = build_integrator_options(cfg);
  const double t0 = cfg.get_number("simulate", "t0", 0.0);
  const double t1 = cfg.get_number("simulate", "t1");
  const double mu = cfg.get_number("simulate", "mu", 0.0);
  const vec z0 = parse_state_vector(cfg, "simulate", "z0", sys.state_dim());
  const int samples = cfg.get_int("simulate", "samples_per_step", 4);

  try {
    trajectory tr = simulate(sys, state(t0, z0), t1, mu, opts);
    output_bundle out("simulate", cfg, env);
    out.add("trajectory.csv", trajectory_csv(tr, samples));
    out.add("impacts.csv", impacts_csv(tr));
    json summary;
    summary["t0"] = tr.t0;
    summary["t1"] = tr.t1;
    summary["impact_count"] = tr.impacts.size();
    summary["sticking_intervals"] = tr.sticking.size();
    summary["chatter_truncated"] = tr.chatter_truncated;
    summary["final_state"] = vector_json(tr.final_state.z);
    summary["min_x1"] = tr.segments.empty() ? 0.0 : tr.min_x1();
    out.add("summary.json", summary.dump(2) + "\n");
    out.write();
    return exit_ok;
  } catch (const model_error& err) {
    std::fprintf(stderr, "model error: %s\n", err.what());
    return exit_model;
  } catch (const integration_error& err) {
    std::fprintf(stderr, "integration error: %s\n", err.what());
    return exit_integrator;
  }
}

int cmd_family(const run_config& cfg, const cli_env& env) {
  cfg.validate({{"system", {"*"}},
                {"tolerances", tolerance_keys},
                {"family",
                 {"theta", "mu_start", "mu_end", "z_guess", "z_init", "settle_periods",
                  "detect_grazing"}}});
  const auto sys = build_system(cfg);
  const auto opts = build_orbit_options(cfg);

  try {
    family_run run = run_family(sys, cfg, opts);
    output_bundle out("family", cfg, env);

    if (cfg.get_bool("family", "detect_grazing", true) && !run.stalled) {
      try {
        grazing_record rec = detect_grazing(sys, run.family, opts);
        out.add("grazing.json", grazing_record_json(rec).dump(2) + "\n");
      } catch (const convergence_error& err) {
        log_info(std::string("no grazing detected: ") + err.what());
      }
    }
    out.add("family.csv", family_csv(run.family));
    json summary;
    summary["samples"] = run.family.samples.size();
    summary["theta"] = run.family.theta;
    summary["theta0"] = run.family.theta0(sys.period);
    summary["hit_grazing"] = run.family.hit_grazing;
    summary["stalled"] = run.stalled;
    out.add("family_summary.json", summary.dump(2) + "\n");
    out.write();
    return run.stalled ? exit_stall : exit_ok;
  } catch (const model_error& err) {
    std::fprintf(stderr, "model error: %s\n", err.what());
    return exit_model;
  } catch (const convergence_error& err) {
    std::fprintf(stderr, "continuation failed: %s\n", err.what());
    return exit_integrator;
  } catch (const integration_error& err) {
    std::fprintf(stderr, "integration error: %s\n", err.what());
    return exit_integrator;
  }
}

int cmd_grazing_report(const run_config& cfg, const cli_env& env) {
  cfg.validate({{"system", {"*"}},
                {"tolerances", tolerance_keys},
                {"family",
                 {"theta", "mu_start", "mu_end", "z_guess", "z_init", "settle_periods",
                  "detect_grazing"}},
                {"grazing",
                 {"theta_seq", "speed_targets", "theta_align", "leev_eps", "leev_count",
                  "leev_seed", "gamma_theta", "gamma_x1_max", "gamma_y1"}}});
  const auto sys = build_system(cfg);
  const auto opts = build_orbit_options(cfg);

  try {
    family_run run = run_family(sys, cfg, opts);
    if (run.stalled) {
      output_bundle out("grazing-report", cfg, env);
      out.add("family.csv", family_csv(run.family));
      out.write();
      return exit_stall;
    }
    grazing_record rec;
    try {
      rec = detect_grazing(sys, run.family, opts);
    } catch (const convergence_error& err) {
      std::fprintf(stderr, "no grazing detected: %s\n", err.what());
      return exit_no_grazing;
    }

    std::vector<double> theta_seq;
    if (cfg.has("grazing", "theta_seq")) theta_seq = cfg.get_numbers("grazing", "theta_seq");
    auto g = limit_matrix_A(sys, run.family, theta_seq, opts);
    auto conditions = check_conditions(g);

    std::vector<double> targets = {4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3};
    if (cfg.has("grazing", "speed_targets")) {
      targets = cfg.get_numbers("grazing", "speed_targets");
    }
    std::vector<periodic_orbit> probes;
    for (double wanted : targets) {
      probes.push_back(refine_at_speed(sys, run.family, wanted, opts));
    }
    const double theta_align = cfg.get_number("grazing", "theta_align", 0.0);
    auto spectra = spectral_asymptotics(sys, probes, g, rec, opts, theta_align);

    // quadratic boundary law near the contact
    gamma_sample_spec gspec;
    gspec.jobs = env.jobs;
    if (cfg.has("grazing", "gamma_y1")) gspec.y1_values = cfg.get_numbers("grazing", "gamma_y1");
    gspec.x1_max = cfg.get_number("grazing", "gamma_x1_max", gspec.x1_max);
    const double gamma_theta = cfg.get_number("grazing", "gamma_theta", 0.01 * sys.period);
    integrator_options gio = opts.integrator;
    gio.store_dense = false;
    const double t_section = rec.tau0 - gamma_theta;
    const vec z_ref = simulate(sys, state(rec.theta <= rec.tau0 ? -rec.theta : -rec.theta,
                                          rec.z_star),
                               t_section, rec.mu_star, gio)
                          .final_state.z;
    gamma_fit gamma;
    bool gamma_ok = true;
    std::string gamma_message;
    try {
      gamma = fit_gamma_surface(sys, t_section, rec.mu_star, state(t_section, z_ref), gspec,
                                opts.integrator);
    } catch (const std::exception& err) {
      gamma_ok = false;
      gamma_message = err.what();
    }

    const double leev_eps = cfg.get_number("grazing", "leev_eps", 0.01);
    const int leev_count = cfg.get_int("grazing", "leev_count", 100);
    std::uint64_t leev_seed = static_cast<std::uint64_t>(
        cfg.get_number("grazing", "leev_seed", 20240901.0));
    if (env.seed_override) leev_seed = *env.seed_override;
    std::vector<periodic_orbit> leev_samples(probes.end() - std::min<std::size_t>(3, probes.size()),
                                             probes.end());
    auto leev = probe_perturbed_products(sys, leev_samples, g, leev_eps, leev_count, leev_seed,
                                         opts);

    json rep;
    rep["grazing"] = grazing_record_json(rec);
    rep["theta0"] = run.family.theta0(sys.period);
    rep["A"] = matrix_json(g.A);
    rep["A_inv"] = matrix_json(g.A_inv);
    rep["det_A"] = g.det_A;
    rep["a12"] = g.a12();
    rep["alpha12"] = g.alpha12();
    rep["A_extrapolation_error"] = g.extrapolation_error;
    rep["A_converged"] = g.converged;
    rep["theta_seq"] = g.theta_seq;
    if (g.A_bar) rep["A_bar"] = matrix_json(*g.A_bar);
    if (g.A_cal_bar) rep["A_cal_bar"] = matrix_json(*g.A_cal_bar);

    auto branch_json = [](const condition_branch& br) {
      json b;
      b["vacuous_reduction"] = br.vacuous_reduction;
      b["hyperbolic"] = br.hyperbolic;
      b["inconclusive"] = br.inconclusive;
      b["margin"] = br.margin;
      b["entry12"] = br.v12;
      b["sum12"] = br.sum12;
      b["holds"] = br.holds();
      return b;
    };
    rep["condition_direct"] = branch_json(conditions.direct);
    rep["condition_inverse"] = branch_json(conditions.inverse);
    rep["chosen_branch"] = conditions.chosen_branch;

    json spec_json;
    spec_json["slope_loglog"] = spectra.slope_loglog;
    spec_json["lambda_plus_speed_extrap"] = spectra.lambda_plus_speed_extrap;
    spec_json["lambda_plus_limit_pred"] = spectra.lambda_plus_limit_pred;
    spec_json["det_d_at_smallest"] = spectra.det_d_at_smallest;
    spec_json["det_d_limit_pred"] = spectra.det_d_limit_pred;
    spec_json["pairing_ambiguous"] = spectra.pairing_ambiguous;
    spec_json["theta_align"] = spectra.theta_align;
    json samples = json::array();
    for (const auto& s : spectra.samples) {
      json sj;
      sj["mu"] = s.mu;
      sj["speed"] = s.speed;
      sj["lambda_max_re"] = s.lambda_max.real();
      sj["lambda_max_im"] = s.lambda_max.imag();
      sj["lambda_min_re"] = s.lambda_min.real();
      sj["lambda_plus_pred"] = s.lambda_plus_pred;
      sj["lambda_minus_pred"] = s.lambda_minus_pred;
      sj["dev_plus"] = s.dev_plus;
      sj["dev_minus"] = s.dev_minus;
      sj["angle_u_plus"] = s.angle_u_plus;
      sj["angle_u_minus"] = s.angle_u_minus;
      sj["det_D"] = s.det_D;
      sj["spectral_radius"] = s.spectral_radius;
      samples.push_back(std::move(sj));
    }
    spec_json["samples"] = samples;
    rep["spectral_asymptotics"] = spec_json;

    json gj;
    gj["available"] = gamma_ok;
    if (gamma_ok) {
      gj["c"] = gamma.c;
      gj["residual_rel"] = gamma.residual_rel;
      gj["f1_ref"] = gamma.f1_ref;
      gj["inv_f1"] = gamma.inv_f1;
      gj["inv_2f1"] = gamma.inv_2f1;
      gj["matched_constant"] = gamma.matched_constant;
      gj["constant_discrepancy_flag"] = (gamma.matched_constant == 2);
      json bpts = json::array();
      for (const auto& [y1, xb] : gamma.boundary) bpts.push_back({{"y1", y1}, {"x1", xb}});
      gj["boundary"] = bpts;
    } else {
      gj["error"] = gamma_message;
    }
    rep["gamma_surface"] = gj;

    json lj;
    lj["n_products"] = leev.n_products;
    lj["n_hyperbolic"] = leev.n_hyperbolic;
    lj["min_margin"] = leev.min_margin;
    lj["eps_abs"] = leev.eps_abs;
    lj["seed"] = leev.seed;
    rep["perturbed_products"] = lj;

    output_bundle out("grazing-report", cfg, env);
    out.add("grazing_report.json", rep.dump(2) + "\n");
    out.add("family.csv", family_csv(run.family));
    out.write();
    return exit_ok;
  } catch (const model_error& err) {
    std::fprintf(stderr, "model error: %s\n", err.what());
    return exit_model;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "grazing report failed: %s\n", err.what());
    return classify_failure(err);
  }
}

int cmd_chaos_report(const run_config& cfg, const cli_env& env) {
  cfg.validate({{"system", {"*"}},
                {"tolerances", tolerance_keys},
                {"chaos",
                 {"mu", "mu_stable", "anchor_mu", "theta", "settle_periods", "m_max",
                  "n_iter", "burn_in", "depth_unstable", "depth_stable", "max_gap",
                  "angle_min", "seed_half_width", "seeds_per_axis", "curve_radius",
                  "escape_radius"}}});
  const auto sys = build_system(cfg);
  const auto opts = build_orbit_options(cfg);
  const double period = sys.period;

  try {
    const double theta = cfg.get_number("chaos", "theta", period / 4.0);
    const double mu = cfg.get_number("chaos", "mu");
    const double anchor_mu = cfg.get_number("chaos", "anchor_mu", mu);
    const int settle = cfg.get_int("chaos", "settle_periods", 200);

    vec z_init = vec::Zero(sys.state_dim());
    z_init[0] = 1.0;
    periodic_orbit anchor = settle_and_find(sys, theta, anchor_mu, z_init, settle, opts);
    periodic_orbit orbit = anchor;
    if (anchor_mu != mu) {
      orbit_family path = continue_family(sys, theta, anchor_mu, mu, anchor, opts);
      orbit = path.samples.back();
      if (std::abs(orbit.mu - mu) > 1e-10) {
        throw convergence_error("could not continue the orbit to mu=" + std::to_string(mu));
      }
    }

    manifold_options mopts;
    mopts.max_gap = cfg.get_number("chaos", "max_gap", mopts.max_gap);
    mopts.curve_radius = cfg.get_number("chaos", "curve_radius", 0.0);
    mopts.escape_radius = cfg.get_number("chaos", "escape_radius", mopts.escape_radius);
    mopts.jobs = env.jobs;

    auto seeds = local_manifolds(sys, theta, mu, orbit, mopts, opts.integrator);
    const int depth_u = cfg.get_int("chaos", "depth_unstable", 4);
    const int depth_s = cfg.get_int("chaos", "depth_stable", 3);
    auto wu = grow_manifold(sys, theta, mu, seeds, false, depth_u, mopts, opts.integrator);
    auto ws = grow_manifold(sys, theta, mu, seeds, true, depth_s, mopts, opts.integrator);

    const double angle_min = cfg.get_number("chaos", "angle_min", 1e-3);
    std::vector<homoclinic_point> homoclinic;
    bool partial_certificate = false;
    if (sys.dof == 1) {
      homoclinic = find_homoclinic(sys, theta, mu, wu, ws, angle_min, opts.integrator);
    } else {
      homoclinic = find_homoclinic_projected(sys, theta, mu, wu, orbit, 4, opts.integrator);
      partial_certificate = true;
    }

    lyapunov_options lopts;
    lopts.n_periods = cfg.get_int("chaos", "n_iter", lopts.n_periods);
    lopts.burn_in = cfg.get_int("chaos", "burn_in", lopts.burn_in);
    vec z_chaotic = orbit.z_star + seeds.seed_delta_unstable * 100.0 * seeds.u_plus;
    if (z_chaotic[0] < 0.0) z_chaotic[0] = 0.0;
    auto lyap = lyapunov_exponent(sys, theta, mu, z_chaotic, lopts, opts.integrator);

    std::optional<lyapunov_result> lyap_stable;
    if (cfg.has("chaos", "mu_stable")) {
      const double mu_stable = cfg.get_number("chaos", "mu_stable");
      vec z0 = z_init;
      lyap_stable = lyapunov_exponent(sys, theta, mu_stable, z0, lopts, opts.integrator);
    }

    const int m_max = cfg.get_int("chaos", "m_max", 6);
    const double half_width = cfg.get_number("chaos", "seed_half_width", 0.5);
    const int per_axis = cfg.get_int("chaos", "seeds_per_axis", 7);
    std::vector<vec> anchors;
    for (const auto& hp : homoclinic) anchors.push_back(hp.z);
    auto seed_grid = make_seed_grid(orbit.z_star, anchors, half_width, per_axis);

    json periodic = json::array();
    int smallest_m_with_extra = 0;
    for (int m = 1; m <= m_max; ++m) {
      int failed = 0;
      auto points = find_periodic_points(sys, theta, mu, m, seed_grid, opts, &failed,
                                         env.jobs);
      int extra_saddles = 0;
      json per_m = json::array();
      for (const auto& pp : points) {
        const bool is_fixed_point = (pp.z - orbit.z_star).norm() < 1e-6;
        if (pp.classification == -1 && !is_fixed_point) ++extra_saddles;
        json pj;
        pj["z"] = vector_json(pp.z);
        pj["period"] = pp.period;
        pj["residual"] = pp.residual;
        pj["classification"] = pp.classification;
        json mults = json::array();
        for (const auto& lam : pp.multipliers) {
          mults.push_back({{"re", lam.real()}, {"im", lam.imag()}});
        }
        pj["multipliers"] = mults;
        pj["is_base_fixed_point"] = is_fixed_point;
        per_m.push_back(std::move(pj));
      }
      periodic.push_back({{"m", m},
                          {"points", per_m},
                          {"failed_seeds", failed},
                          {"extra_saddles", extra_saddles}});
      if (smallest_m_with_extra == 0 && extra_saddles > 0) smallest_m_with_extra = m;
    }

    json rep;
    rep["mu"] = mu;
    rep["theta"] = theta;
    rep["orbit"] = orbit_json(orbit);
    rep["lambda_plus"] = {{"re", seeds.lambda_plus.real()}, {"im", seeds.lambda_plus.imag()}};
    rep["lambda_minus"] = {{"re", seeds.lambda_minus.real()},
                           {"im", seeds.lambda_minus.imag()}};

    json hj = json::array();
    for (const auto& hp : homoclinic) {
      json h;
      h["z"] = vector_json(hp.z);
      h["angle"] = hp.angle;
      h["validated"] = hp.validated;
      h["refine_residual"] = hp.refine_residual;
      h["forward_distances"] = hp.forward_distances;
      h["backward_distances"] = hp.backward_distances;
      hj.push_back(std::move(h));
    }
    rep["homoclinic_points"] = hj;
    rep["partial_certificate"] = partial_certificate;
    rep["certificate_note"] =
        "numerical surrogates only: finite periodic-point census, sampled exponent and "
        "transversal intersections; no invariant-set certification";

    json lyj;
    lyj["exponent"] = lyap.exponent;
    lyj["std_error"] = lyap.std_error;
    lyj["periods"] = lyap.periods_used;
    lyj["fd_fallback_count"] = lyap.fd_fallback_count;
    lyj["sticking_detected"] = lyap.sticking_detected;
    lyj["sticking_fraction"] = lyap.sticking_fraction;
    rep["lyapunov"] = lyj;
    if (lyap_stable) {
      json ls;
      ls["exponent"] = lyap_stable->exponent;
      ls["std_error"] = lyap_stable->std_error;
      ls["mu"] = cfg.get_number("chaos", "mu_stable");
      rep["lyapunov_stable"] = ls;
    }
    rep["periodic_points"] = periodic;
    rep["smallest_m_with_extra_saddles"] = smallest_m_with_extra;

    output_bundle out("chaos-report", cfg, env);
    out.add("chaos_report.json", rep.dump(2) + "\n");
    out.add("manifold_unstable.csv", manifold_csv(wu));
    out.add("manifold_stable.csv", manifold_csv(ws));
    out.write();
    return exit_ok;
  } catch (const model_error& err) {
    std::fprintf(stderr, "model error: %s\n", err.what());
    return exit_model;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "chaos report failed: %s\n", err.what());
    return exit_integrator;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"event-driven vibro-impact dynamics toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  cli_env env;
  long long seed_override = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--out", env.out_dir, "output directory");
    sub->add_option("--jobs", env.jobs, "parallel workers for grid/seed sweeps");
    sub->add_option("--seed-override", seed_override, "override sampling seeds");
  };
  auto* simulate_cmd = app.add_subcommand("simulate", "integrate one trajectory");
  auto* family_cmd = app.add_subcommand("family", "continue a periodic family in mu");
  auto* grazing_cmd = app.add_subcommand("grazing-report", "grazing analysis report");
  auto* chaos_cmd = app.add_subcommand("chaos-report", "manifold and chaos diagnostics");
  for (auto* sub : {simulate_cmd, family_cmd, grazing_cmd, chaos_cmd}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_override >= 0) env.seed_override = static_cast<std::uint64_t>(seed_override);

  try {
    const run_config cfg = run_config::parse_file(config_path);
    if (simulate_cmd->parsed()) return cmd_simulate(cfg, env);
    if (family_cmd->parsed()) return cmd_family(cfg, env);
    if (grazing_cmd->parsed()) return cmd_grazing_report(cfg, env);
    if (chaos_cmd->parsed()) return cmd_chaos_report(cfg, env);
  } catch (const config_error& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return exit_config;
  }
  return exit_config;
}

}  // namespace graze::cli
