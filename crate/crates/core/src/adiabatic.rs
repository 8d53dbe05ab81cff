//! Adiabatic limit: constant `θ`, `φ̇ = ω` and the Berry phase.
//!
//! Choosing `g = |g| e^{−iφ}` with `φ(t) = φ(0) + ∫ω` and
//!
//! ```text
//! (kω − ω₀ − φ̇) sin θ = 2|g|√λ cos θ
//! ```
//!
//! makes `(θ, φ)` an exact fixed point of the auxiliary equations. The
//! Hamiltonian is then an affine function of the invariant,
//! `H = ωN − ω/2 − (((k−1)ω − ω₀)/(2 cos θ)) I`, and over one cycle of `φ`
//! the geometric phase equals `−σπ(1 − cos θ)`.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::aux::{solve_aux, AuxOptions, AuxState, AuxTrajectory};
use crate::params::{ModelParams, TimeProfile};
use crate::propagator::{invariant_block, BlockModel, ExactSolution, Sigma};
use crate::{Error, Result, C64};

/// Smallest `|cos θ|` accepted by [`check_h_i_relation`].
pub const COS_GUARD: f64 = 1e-6;
/// Largest accepted `|φ(T) − φ(0) − 2π|`.
pub const CYCLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct AdiabaticScenario {
    pub model: BlockModel,
    pub theta: f64,
    pub phi0: f64,
    /// `|g|`; forced to zero when `θ` sits on a pole.
    pub g_mod: f64,
    /// Time for `φ` to advance by `2π`, unless overridden.
    pub period: f64,
    pub params: ModelParams,
    /// `∫₀ᵗ ω`.
    phase_advance: TimeProfile,
}

/// Builds the scenario for block `model` at fixed `theta`.
///
/// `ω₀ = (k−1)ω − 2|g|√λ cot θ` solves the fixed-point relation for the given
/// `|g|`. On the poles (`sin θ = 0`) the coupling is switched off and
/// `ω₀ = (k−1)ω`.
pub fn build_adiabatic_scenario(
    model: BlockModel,
    theta: f64,
    omega: TimeProfile,
    g_mod: f64,
    phi0: f64,
) -> Result<AdiabaticScenario> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Config(format!("θ = {theta} outside [0, π]")));
    }
    if !(g_mod >= 0.0 && g_mod.is_finite()) {
        return Err(Error::Config(format!(
            "|g| = {g_mod} must be a finite non-negative number"
        )));
    }
    let k = model.block.k() as f64;
    let on_pole = theta.sin().abs() < crate::aux::DEFAULT_THETA_MIN;
    let g_mod = if on_pole { 0.0 } else { g_mod };
    let offset = if g_mod == 0.0 {
        0.0
    } else {
        -2.0 * g_mod * model.block.sqrt_lambda() * theta.cos() / theta.sin()
    };

    let antiderivative = omega.antiderivative()?;
    let start = antiderivative.evaluate(0.0)?;
    let phase_advance = antiderivative.plus(TimeProfile::constant(-start));
    let period = cycle_period(&phase_advance)?;
    let params = ModelParams::new(
        omega.clone(),
        omega.scaled(k - 1.0).plus(TimeProfile::constant(offset)),
        TimeProfile::constant(g_mod),
        phase_advance
            .clone()
            .plus(TimeProfile::constant(phi0))
            .scaled(-1.0),
        model.block.k(),
    );
    Ok(AdiabaticScenario {
        model,
        theta,
        phi0,
        g_mod,
        period,
        params,
        phase_advance,
    })
}

/// Smallest `T > 0` with `∫₀ᵀ ω = 2π`.
fn cycle_period(advance: &TimeProfile) -> Result<f64> {
    let f = |t: f64| advance.evaluate(t).map(|v| v - 2.0 * PI);
    let mut hi = 1.0;
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Config(
                "∫ω never reaches 2π; the cycle period is undefined".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl AdiabaticScenario {
    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    /// `φ(t) = φ(0) + ∫₀ᵗ ω`.
    pub fn phi_at(&self, t: f64) -> Result<f64> {
        Ok(self.phi0 + self.phase_advance.evaluate(t)?)
    }

    pub fn state_at(&self, t: f64) -> Result<AuxState> {
        Ok(AuxState::new(self.theta, self.phi_at(t)?))
    }

    /// `(kω − ω₀ − ω) sin θ − 2|g|√λ cos θ`.
    pub fn constraint_residual(&self, t: f64) -> Result<f64> {
        let c = self.params.evaluate(t)?;
        let k = self.model.block.k() as f64;
        Ok((k * c.omega - c.omega0 - c.omega) * self.theta.sin()
            - 2.0 * c.g.norm() * self.model.block.sqrt_lambda() * self.theta.cos())
    }

    /// Solves the auxiliary equations over one period from `(θ, φ(0))`.
    pub fn solve(&self, opts: &AuxOptions) -> Result<AuxTrajectory> {
        solve_aux(
            AuxState::new(self.theta, self.phi0),
            (0.0, self.period),
            &self.params,
            self.model.block.lambda(),
            opts,
        )
    }

    /// `−(sin θ/(|g|√λ))(g Q + g* Q†) + cos θ σz`, the invariant written with
    /// the coupling in place of `e^{∓iφ}`.
    pub fn invariant_from_coupling(&self, t: f64) -> Result<Matrix2<C64>> {
        let c = self.params.evaluate(t)?;
        let g = &self.model.generators;
        if c.g.norm() == 0.0 {
            return Ok(g.sigma_z * C64::from(self.theta.cos()));
        }
        let unit = c.g / c.g.norm();
        Ok((g.q * unit + g.q_dag * unit.conj())
            * C64::from(-self.theta.sin() / self.model.block.sqrt_lambda())
            + g.sigma_z * C64::from(self.theta.cos()))
    }
}

/// Largest `|θ(t) − θ(0)|` and `|φ̇(t) − ω(t)|` over the trajectory's check
/// times.
pub fn fixed_point_deviation(
    scenario: &AdiabaticScenario,
    traj: &AuxTrajectory,
) -> Result<(f64, f64)> {
    let mut theta_dev = 0.0_f64;
    let mut rate_dev = 0.0_f64;
    for t in traj.check_times() {
        let (s, r) = traj.sample_at(t)?;
        let omega = scenario.params.omega.evaluate(t)?;
        theta_dev = theta_dev.max((s.theta - scenario.theta).abs());
        rate_dev = rate_dev.max((r.phi_dot - omega).abs());
    }
    Ok((theta_dev, rate_dev))
}

fn max_entry(m: &Matrix2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |H − (ωN − ω/2 − (((k−1)ω − ω₀)/(2 cos θ)) I)|` at block level.
pub fn check_h_i_relation(scenario: &AdiabaticScenario, t: f64, tol: f64) -> Result<f64> {
    let cos = scenario.theta.cos();
    if cos.abs() < COS_GUARD {
        return Err(Error::DivisionGuard {
            cos_theta: cos.abs(),
            guard: COS_GUARD,
        });
    }
    let c = scenario.params.evaluate(t)?;
    let k = scenario.model.block.k() as f64;
    let inv = invariant_block(scenario.state_at(t)?, &scenario.model);
    let g = &scenario.model.generators;
    let affine = g.n * C64::from(c.omega)
        - Matrix2::identity() * C64::from(0.5 * c.omega)
        - inv * C64::from(((k - 1.0) * c.omega - c.omega0) / (2.0 * cos));
    let residual = max_entry(&(scenario.model.hamiltonian(&c) - affine));
    if !(residual <= tol) {
        return Err(Error::Transformation {
            what: "H as an affine function of I".into(),
            residual,
            tol,
        });
    }
    Ok(residual)
}

/// `−σπ(1 − cos θ)`.
pub fn berry_phase_cycle(theta: f64, sigma: Sigma) -> f64 {
    -sigma.sign() * PI * (1.0 - theta.cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerryPhase {
    pub theta: f64,
    pub sigma: Sigma,
    pub numeric: f64,
    pub formula: f64,
    /// `φ(T) − φ(0) − 2π`.
    pub closure: f64,
}

impl BerryPhase {
    pub fn abs_error(&self) -> f64 {
        (self.numeric - self.formula).abs()
    }
}

/// Geometric phase accumulated over `[0, T]` along the solved trajectory.
pub fn berry_phase_numeric(
    scenario: &AdiabaticScenario,
    sigma: Sigma,
    opts: &AuxOptions,
) -> Result<BerryPhase> {
    let traj = scenario.solve(opts)?;
    let closure = traj.state_at(scenario.period)?.phi - scenario.phi0 - 2.0 * PI;
    if !(closure.abs() <= CYCLE_TOL) {
        return Err(Error::CycleClosure { mismatch: closure });
    }
    let solution = ExactSolution::new(scenario.model, scenario.params.clone(), traj)?;
    Ok(BerryPhase {
        theta: scenario.theta,
        sigma,
        numeric: solution.ledger(sigma, scenario.period)?.phi_g,
        formula: berry_phase_cycle(scenario.theta, sigma),
        closure,
    })
}

/// `U(t) O U†(t)`, the operator that evolves into an invariant from `O` at
/// the initial time.
pub fn evolved_invariant(
    solution: &ExactSolution,
    initial: &Matrix2<C64>,
    t: f64,
) -> Result<Matrix2<C64>> {
    let u = solution.block_evolution(t)?;
    let u0 = solution.block_evolution(solution.window().0)?;
    // U(t0) = V(t0) need not be the identity
    let w = u * u0.adjoint();
    Ok(w * initial * w.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::FockSpace;
    use crate::aux::aux_rhs;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6};

    fn model(m: usize) -> BlockModel {
        BlockModel::for_m(FockSpace::new(16, 3, 3).unwrap(), m).unwrap()
    }

    fn scenario(theta: f64) -> AdiabaticScenario {
        build_adiabatic_scenario(model(0), theta, TimeProfile::constant(1.0), 0.05, 0.0).unwrap()
    }

    #[test]
    fn detuning_solves_the_constraint() {
        let s = scenario(FRAC_PI_2);
        let c = s.params.evaluate(1.0).unwrap();
        assert!((3.0 * c.omega - c.omega0 - c.omega).abs() < 1e-15);

        let s = scenario(FRAC_PI_3);
        let expected = 2.0 - 2.0 * 0.05 * 6f64.sqrt() / FRAC_PI_3.tan();
        assert!((s.params.evaluate(3.0).unwrap().omega0 - expected).abs() < 1e-14);
        assert!((s.period - 2.0 * PI).abs() < 1e-12);
        for t in [0.0, 1.0, 4.4] {
            assert!(s.constraint_residual(t).unwrap().abs() < 1e-14);
            let r = aux_rhs(s.state_at(t).unwrap(), t, &s.params, 6, 1e-8).unwrap();
            assert!(r.theta_dot.abs() < 1e-15);
            assert!((r.phi_dot - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn fixed_point_holds_along_solutions() {
        let omega = TimeProfile::sinusoid(1.0, 0.2, 0.8, 0.0);
        for theta in [FRAC_PI_6, FRAC_PI_3, 2.0 * FRAC_PI_3] {
            let s = build_adiabatic_scenario(model(1), theta, omega.clone(), 0.07, 0.4).unwrap();
            let traj = s.solve(&AuxOptions::default()).unwrap();
            let (dt, dr) = fixed_point_deviation(&s, &traj).unwrap();
            assert!(dt < 1e-8 && dr < 1e-8, "{dt:e} {dr:e}");
        }
    }

    #[test]
    fn hamiltonian_is_affine_in_invariant() {
        let s = scenario(FRAC_PI_3);
        for i in 0..10 {
            let t = 0.77 * i as f64;
            assert!(check_h_i_relation(&s, t, 1e-10).unwrap() < 1e-10);
            let diff = s.invariant_from_coupling(t).unwrap()
                - invariant_block(s.state_at(t).unwrap(), &s.model);
            assert!(max_entry(&diff) < 1e-12);
        }
        assert!(matches!(
            check_h_i_relation(&scenario(FRAC_PI_2), 0.0, 1.0),
            Err(Error::DivisionGuard { .. })
        ));
    }

    #[test]
    fn cycle_formula_examples() {
        assert_eq!(berry_phase_cycle(0.0, Sigma::Plus), 0.0);
        assert!((berry_phase_cycle(FRAC_PI_2, Sigma::Plus) + PI).abs() < 1e-15);
        assert!((berry_phase_cycle(FRAC_PI_3, Sigma::Minus) - FRAC_PI_2).abs() < 1e-15);
        for theta in [0.1, 1.0, 2.5] {
            assert_eq!(
                berry_phase_cycle(theta, Sigma::Plus),
                -berry_phase_cycle(theta, Sigma::Minus)
            );
        }
    }

    #[test]
    fn numeric_berry_phase() {
        let opts = AuxOptions::default();
        for (theta, expected) in [(FRAC_PI_2, -PI), (FRAC_PI_3, -FRAC_PI_2)] {
            let b = berry_phase_numeric(&scenario(theta), Sigma::Plus, &opts).unwrap();
            assert!((b.numeric - expected).abs() < 1e-6, "{b:?}");
        }
        let b = berry_phase_numeric(&scenario(0.0), Sigma::Plus, &opts).unwrap();
        assert_eq!(b.numeric, 0.0);
        let short = scenario(FRAC_PI_3).with_period(6.0);
        assert!(matches!(
            berry_phase_numeric(&short, Sigma::Plus, &opts),
            Err(Error::CycleClosure { .. })
        ));
    }

    #[test]
    fn berry_phase_ignores_coupling_strength() {
        let opts = AuxOptions::default();
        let phase = |g: f64| {
            let s = build_adiabatic_scenario(model(2), 1.1, TimeProfile::constant(1.0), g, 0.3)
                .unwrap();
            berry_phase_numeric(&s, Sigma::Minus, &opts)
                .unwrap()
                .numeric
        };
        let base = phase(0.05);
        for g in [0.02, 0.08] {
            assert!((phase(g) - base).abs() < 1e-8);
        }
    }

    #[test]
    fn evolved_operator_starts_from_initial() {
        let s = scenario(FRAC_PI_3);
        let traj = s.solve(&AuxOptions::default()).unwrap();
        let sol = ExactSolution::new(s.model, s.params.clone(), traj).unwrap();
        let o = s.model.generators.sigma_z;
        assert!(max_entry(&(evolved_invariant(&sol, &o, 0.0).unwrap() - o)) < 1e-14);
        // the instantaneous invariant is its own evolution
        let i0 = sol.invariant_at(0.0).unwrap();
        for t in [1.0, 4.0] {
            let diff = evolved_invariant(&sol, &i0, t).unwrap() - sol.invariant_at(t).unwrap();
            assert!(max_entry(&diff) < 1e-8);
        }
    }
}
