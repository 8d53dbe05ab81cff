use std::path::{Path, PathBuf};

use jcm_core::adiabatic::{berry_phase_numeric, build_adiabatic_scenario, BerryPhase};
use jcm_core::algebra::{algebra_residuals, build_hamiltonian, verify_algebra};
use jcm_core::aux::{adiabatic_matched_initial, residual_at, solve_aux, AuxState};
use jcm_core::coherent::{atomic_inversion, solve_block, CoherentEvolution, CoherentSpec};
use jcm_core::export::{CsvTable, BERRY_HEADER, INVERSION_HEADER, TRAJECTORY_HEADER};
use jcm_core::oracle::{fidelity, propagate, uniform_times};
use jcm_core::propagator::{BlockModel, ExactSolution, Sigma};
use jcm_core::subspace::{block_components, verify_block_closure, SubspaceBlock};
use rayon::prelude::*;

use crate::config::{InitialCondition, ScenarioConfig};
use crate::error::CliError;

pub const PHASE_HEADER: &[&str] = &[
    "t",
    "theta",
    "phi",
    "phi_d_plus",
    "phi_g_plus",
    "phi_d_minus",
    "phi_g_minus",
    "re_upper",
    "im_upper",
    "re_lower",
    "im_lower",
    "norm_error",
    "oracle_infidelity",
];

pub const ORACLE_HEADER: &[&str] = &[
    "t",
    "norm_drift",
    "population_upper",
    "population_lower",
    "leakage",
    "infidelity",
];

/// Files written by one command, in a fixed order.
pub struct Artifacts {
    dir: PathBuf,
    precision: usize,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: PathBuf, precision: usize) -> Self {
        Self {
            dir,
            precision,
            written: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, table: CsvTable) -> Result<(), CliError> {
        let path = self.dir.join(name);
        table
            .with_precision(self.precision)
            .write_file(&path)
            .map_err(|source| CliError::Output {
                path: path.display().to_string(),
                source,
            })?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn sigma_tag(sigma: Sigma) -> &'static str {
    match sigma {
        Sigma::Plus => "plus",
        Sigma::Minus => "minus",
    }
}

fn initial_for(cfg: &ScenarioConfig, block: &SubspaceBlock) -> Result<AuxState, CliError> {
    match &cfg.initial {
        InitialCondition::Fixed(s) => Ok(*s),
        InitialCondition::AdiabaticMatched => Ok(adiabatic_matched_initial(
            &cfg.params,
            block.lambda(),
            cfg.run.t_start,
        )?),
    }
}

fn solve_for(cfg: &ScenarioConfig, m: usize) -> Result<ExactSolution, CliError> {
    let model = BlockModel::for_m(cfg.space, m)?;
    let initial = initial_for(cfg, &model.block)?;
    let traj = solve_aux(
        initial,
        (cfg.run.t_start, cfg.run.t_final),
        &cfg.params,
        model.block.lambda(),
        &cfg.aux,
    )?;
    Ok(ExactSolution::new(model, cfg.params.clone(), traj)?)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| CliError::Usage(format!("cannot start worker threads: {e}")))
}

/// Outcome line printed for every command.
pub struct Summary {
    pub lines: Vec<String>,
    pub failures: Vec<String>,
}

impl Summary {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn into_result(self) -> Result<Vec<String>, CliError> {
        if self.failures.is_empty() {
            Ok(self.lines)
        } else {
            for l in &self.lines {
                println!("{l}");
            }
            Err(CliError::Verification(self.failures.join("; ")))
        }
    }
}

pub fn verify_algebra_cmd(cfg: &ScenarioConfig) -> Result<Summary, CliError> {
    let mut out = Summary::new();
    let space = cfg.space;
    let report = match verify_algebra(space, cfg.verify.tol) {
        Ok(r) => r,
        Err(jcm_core::Error::AlgebraVerification { failures, .. }) => {
            for (name, residual) in &failures {
                out.failures.push(format!("{name}: residual {residual:e}"));
            }
            algebra_residuals(space)
        }
        Err(e) => return Err(e.into()),
    };
    out.lines.push(format!(
        "superalgebra on cutoff {}, k {}, guard {} (tolerance {:e} x {})",
        space.cutoff(),
        space.k(),
        space.guard(),
        cfg.verify.tol,
        report.scale
    ));
    for e in &report.entries {
        out.lines.push(format!(
            "  {:<24} guard {:>2}  residual {:.3e}",
            e.name, e.guard, e.residual
        ));
    }

    let times = uniform_times(
        cfg.run.t_start,
        cfg.run.t_final,
        cfg.verify.hamiltonian_samples.max(1),
    );
    let hams = times
        .iter()
        .map(|&t| build_hamiltonian(space, &cfg.params, t))
        .collect::<Result<Vec<_>, _>>()?;
    for &m in &cfg.blocks {
        let block = SubspaceBlock::new(space, m)?;
        match verify_block_closure(space, &block, &hams, cfg.verify.block_tol) {
            Ok(r) => out.lines.push(format!(
                "block m = {m}: lambda {}, leakage {:.3e}, algebra residual {:.3e}",
                block.lambda(),
                r.leakage,
                r.max_residual()
            )),
            Err(e @ jcm_core::Error::BlockClosure { .. }) => out.failures.push(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

struct BlockRun {
    m: usize,
    trajectory: CsvTable,
    phases: Vec<(Sigma, CsvTable)>,
    oracle: Vec<(Sigma, CsvTable)>,
    max_residual: f64,
    max_norm_error: f64,
    /// Per σ; NaN without an oracle.
    max_infidelity: Vec<(Sigma, f64)>,
}

fn run_block(cfg: &ScenarioConfig, m: usize) -> Result<BlockRun, CliError> {
    let sol = solve_for(cfg, m)?;
    let traj = sol.trajectory();
    let times = uniform_times(cfg.run.t_start, cfg.run.t_final, cfg.run.samples);

    let mut trajectory = CsvTable::new(TRAJECTORY_HEADER);
    let mut max_residual = 0.0_f64;
    for &t in &times {
        let s = traj.state_at(t)?;
        let r = residual_at(traj, &cfg.params, t)?;
        max_residual = max_residual.max(r);
        trajectory.push(vec![t, s.theta, s.phi, r]);
    }

    let mut phases = Vec::new();
    let mut oracle_tables = Vec::new();
    let mut max_infidelity = Vec::new();
    let mut max_norm_error = 0.0_f64;
    for &sigma in &cfg.run.sigmas {
        let run = match &cfg.oracle {
            Some(opts) => Some(propagate(
                &sol.exact_state(sigma, cfg.run.t_start)?,
                &times,
                &cfg.params,
                cfg.space,
                opts,
            )?),
            None => None,
        };
        let mut table = CsvTable::new(PHASE_HEADER);
        let mut oracle_table = CsvTable::new(ORACLE_HEADER);
        let mut worst = if run.is_some() { 0.0 } else { f64::NAN };
        for (i, &t) in times.iter().enumerate() {
            let s = traj.state_at(t)?;
            let plus = sol.ledger(Sigma::Plus, t)?;
            let minus = sol.ledger(Sigma::Minus, t)?;
            let exact = sol.exact_state(sigma, t)?;
            let c = block_components(sol.block(), &exact);
            let norm_error = (exact.norm() - 1.0).abs();
            max_norm_error = max_norm_error.max(norm_error);
            let infidelity = match &run {
                Some(r) => {
                    let psi = &r.states[i];
                    let inf = 1.0 - fidelity(&exact, psi);
                    worst = f64::max(worst, inf);
                    let o = block_components(sol.block(), psi);
                    let (pu, pl) = (o[0].norm_sqr(), o[1].norm_sqr());
                    let total = psi.norm_squared();
                    oracle_table.push(vec![
                        t,
                        (psi.norm() - 1.0).abs(),
                        pu,
                        pl,
                        (total - pu - pl).max(0.0),
                        inf,
                    ]);
                    inf
                }
                None => f64::NAN,
            };
            table.push(vec![
                t,
                s.theta,
                s.phi,
                plus.phi_d,
                plus.phi_g,
                minus.phi_d,
                minus.phi_g,
                c[0].re,
                c[0].im,
                c[1].re,
                c[1].im,
                norm_error,
                infidelity,
            ]);
        }
        phases.push((sigma, table));
        if run.is_some() {
            oracle_tables.push((sigma, oracle_table));
        }
        max_infidelity.push((sigma, worst));
    }
    Ok(BlockRun {
        m,
        trajectory,
        phases,
        oracle: oracle_tables,
        max_residual,
        max_norm_error,
        max_infidelity,
    })
}

pub fn propagate_cmd(
    cfg: &ScenarioConfig,
    jobs: Option<usize>,
    out: &mut Artifacts,
) -> Result<Summary, CliError> {
    let runs: Vec<Result<BlockRun, CliError>> =
        pool(jobs)?.install(|| cfg.blocks.par_iter().map(|&m| run_block(cfg, m)).collect());
    let mut summary = Summary::new();
    for run in runs {
        let run = run?;
        let m = run.m;
        out.write(&format!("trajectory_m{m}.csv"), run.trajectory)?;
        for (sigma, table) in run.phases {
            out.write(&format!("phases_m{m}_{}.csv", sigma_tag(sigma)), table)?;
        }
        for (sigma, table) in run.oracle {
            out.write(&format!("oracle_m{m}_{}.csv", sigma_tag(sigma)), table)?;
        }
        summary.lines.push(format!(
            "block m = {m}: auxiliary residual {:.3e}, norm error {:.3e}",
            run.max_residual, run.max_norm_error
        ));
        for (sigma, inf) in run.max_infidelity {
            if inf.is_nan() {
                summary
                    .lines
                    .push(format!("  sigma {sigma}: oracle disabled"));
                continue;
            }
            summary
                .lines
                .push(format!("  sigma {sigma}: max oracle infidelity {inf:.3e}"));
            if !(inf < cfg.run.infidelity_bound) {
                summary.failures.push(format!(
                    "m = {m}, sigma {sigma}: infidelity {inf:e} exceeds {:e}",
                    cfg.run.infidelity_bound
                ));
            }
        }
    }
    Ok(summary)
}

pub fn berry_cmd(
    cfg: &ScenarioConfig,
    jobs: Option<usize>,
    out: &mut Artifacts,
) -> Result<Summary, CliError> {
    let b = &cfg.berry;
    let model = BlockModel::for_m(cfg.space, b.m)?;
    let sweep = |theta: f64| -> Result<Vec<BerryPhase>, CliError> {
        let mut sc =
            build_adiabatic_scenario(model, theta, cfg.params.omega.clone(), b.g_mod, b.phi0)?;
        if let Some(p) = b.period {
            sc = sc.with_period(p);
        }
        cfg.run
            .sigmas
            .iter()
            .map(|&s| {
                berry_phase_numeric(&sc, s, &cfg.aux)
                    .map_err(|e| CliError::Verification(format!("theta = {theta}: {e}")))
            })
            .collect()
    };
    let rows: Vec<Result<Vec<BerryPhase>, CliError>> =
        pool(jobs)?.install(|| b.thetas.par_iter().map(|&t| sweep(t)).collect());

    let mut table = CsvTable::new(BERRY_HEADER);
    let mut summary = Summary::new();
    for row in rows {
        for p in row? {
            table.push(vec![
                p.theta,
                p.sigma.sign(),
                p.numeric,
                p.formula,
                p.abs_error(),
            ]);
            summary.lines.push(format!(
                "theta {:.6} sigma {}: numeric {:.9} formula {:.9} error {:.3e}",
                p.theta,
                p.sigma,
                p.numeric,
                p.formula,
                p.abs_error()
            ));
            if !(p.abs_error() < b.tol) {
                summary.failures.push(format!(
                    "theta = {}, sigma {}: error {:e} exceeds {:e}",
                    p.theta,
                    p.sigma,
                    p.abs_error(),
                    b.tol
                ));
            }
        }
    }
    out.write("berry.csv", table)?;
    Ok(summary)
}

pub fn coherent_cmd(
    cfg: &ScenarioConfig,
    jobs: Option<usize>,
    out: &mut Artifacts,
) -> Result<Summary, CliError> {
    let c = &cfg.coherent;
    let spec = CoherentSpec::from_xi(c.xi, c.sigma)?;
    spec.check_space(cfg.space)?;
    let solve_m = |m: usize| -> Result<ExactSolution, CliError> {
        let block = SubspaceBlock::new(cfg.space, m)?;
        let initial = initial_for(cfg, &block)?;
        Ok(solve_block(
            cfg.space,
            m,
            &cfg.params,
            initial,
            (cfg.run.t_start, cfg.run.t_final),
            &cfg.aux,
        )?)
    };
    let solutions = pool(jobs)?.install(|| {
        (0..=spec.m_max)
            .into_par_iter()
            .map(solve_m)
            .collect::<Result<Vec<_>, _>>()
    })?;
    let ev = CoherentEvolution::from_solutions(spec, solutions)?;

    let times = uniform_times(cfg.run.t_start, cfg.run.t_final, cfg.run.samples);
    let run = match &cfg.oracle {
        Some(opts) => Some(propagate(
            &ev.state_at(cfg.run.t_start)?,
            &times,
            &cfg.params,
            cfg.space,
            opts,
        )?),
        None => None,
    };
    let mut table = CsvTable::new(INVERSION_HEADER);
    let mut worst_diff = if run.is_some() { 0.0 } else { f64::NAN };
    let mut worst_norm = 0.0_f64;
    for (i, &t) in times.iter().enumerate() {
        let exact = ev.state_at(t)?;
        worst_norm = worst_norm.max((exact.norm() - 1.0).abs());
        let z = atomic_inversion(cfg.space, &exact);
        let z_oracle = run
            .as_ref()
            .map_or(f64::NAN, |r| atomic_inversion(cfg.space, &r.states[i]));
        let diff = (z - z_oracle).abs();
        worst_diff = f64::max(worst_diff, diff);
        table.push(vec![t, z, z_oracle, diff]);
    }
    out.write("inversion.csv", table)?;

    let mut summary = Summary::new();
    summary.lines.push(format!(
        "coherent state xi {} sigma {}: blocks 0..={}, norm drift {:.3e}",
        c.xi, c.sigma, spec.m_max, worst_norm
    ));
    if !(worst_norm < c.norm_tol) {
        summary.failures.push(format!(
            "superposition norm drift {worst_norm:e} exceeds {:e}",
            c.norm_tol
        ));
    }
    if worst_diff.is_nan() {
        summary.lines.push("  oracle disabled".into());
    } else {
        summary
            .lines
            .push(format!("  max |<sigma_z> exact - oracle| {worst_diff:.3e}"));
        if !(worst_diff < c.tol) {
            summary.failures.push(format!(
                "inversion difference {worst_diff:e} exceeds {:e}",
                c.tol
            ));
        }
    }
    Ok(summary)
}
