//! Auxiliary equations for the invariant angles `(θ, φ)`.
//!
//! The invariant inside block `m` is
//! `I = −(sin θ/√λ)(e^{−iφ}Q + e^{iφ}Q†) + cos θ σz`, and the invariant
//! equation reduces to the two complex relations
//!
//! ```text
//! θ̇ cos θ e^{−iφ} − iφ̇ sin θ e^{−iφ} + i[(kω−ω₀) sin θ e^{−iφ} − 2g√λ cos θ] = 0
//! θ̇ − i√λ [g e^{iφ} − g* e^{−iφ}] = 0
//! ```
//!
//! Separating real and imaginary parts gives the real system integrated here:
//!
//! ```text
//! θ̇ = −2√λ Im(g e^{iφ})
//! φ̇ = (kω − ω₀) − 2√λ Re(g e^{iφ}) cot θ
//! ```
//!
//! [`residual_check`] substitutes the integrated trajectory back into the
//! complex relations, with derivatives taken from the interpolant rather than
//! from the real system.

use crate::ode::{self, Dop853Options, Dop853Solution};
use crate::params::ModelParams;
use crate::{Error, Result, C64};

/// Default lower bound on `|sin θ|`.
pub const DEFAULT_THETA_MIN: f64 = 1e-8;

/// The step controller bounds value errors, while the residual check sees
/// derivative errors of the interpolant, which run one to two orders of
/// magnitude larger. The integrator runs this much tighter than requested.
const DERIVATIVE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxState {
    pub theta: f64,
    /// Unwrapped; continuous along a trajectory.
    pub phi: f64,
}

impl AuxState {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxRate {
    pub theta_dot: f64,
    pub phi_dot: f64,
}

/// Right-hand side of the real auxiliary system.
///
/// Fails with [`Error::Singularity`] when `|sin θ| < theta_min`, except when
/// `g(t) = 0` exactly: the `cot θ` term then carries a vanishing coefficient
/// and the poles are ordinary points.
pub fn aux_rhs(
    state: AuxState,
    t: f64,
    params: &ModelParams,
    lambda: u128,
    theta_min: f64,
) -> Result<AuxRate> {
    let c = params.evaluate(t)?;
    let root = (lambda as f64).sqrt();
    let detuning = params.k() as f64 * c.omega - c.omega0;
    let rotated = c.g * C64::from_polar(1.0, state.phi);
    let (sin, cos) = state.theta.sin_cos();

    let theta_dot = -2.0 * root * rotated.im;
    let phi_dot = if c.g == C64::new(0.0, 0.0) {
        detuning
    } else {
        if sin.abs() < theta_min {
            return Err(Error::Singularity {
                t,
                sin_theta: sin.abs(),
            });
        }
        detuning - 2.0 * root * rotated.re * cos / sin
    };
    Ok(AuxRate { theta_dot, phi_dot })
}

/// Left-hand sides of the two complex auxiliary relations.
pub fn complex_residuals(
    state: AuxState,
    rate: AuxRate,
    t: f64,
    params: &ModelParams,
    lambda: u128,
) -> Result<[C64; 2]> {
    let c = params.evaluate(t)?;
    let root = (lambda as f64).sqrt();
    let i = C64::i();
    let (sin, cos) = state.theta.sin_cos();
    let e_minus = C64::from_polar(1.0, -state.phi);
    let e_plus = e_minus.conj();
    let detuning = params.k() as f64 * c.omega - c.omega0;

    let first = e_minus * (rate.theta_dot * cos) - i * e_minus * (rate.phi_dot * sin)
        + i * (e_minus * (detuning * sin) - c.g * (2.0 * root * cos));
    let second = C64::new(rate.theta_dot, 0.0) - i * root * (c.g * e_plus - c.g.conj() * e_minus);
    Ok([first, second])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxOptions {
    pub rtol: f64,
    pub atol: f64,
    pub theta_min: f64,
    pub max_steps: usize,
    pub max_step: f64,
    /// Reject trajectories whose [`residual_check`] exceeds `100·rtol`.
    pub certify: bool,
}

impl AuxOptions {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            theta_min: DEFAULT_THETA_MIN,
            max_steps: 2_000_000,
            max_step: f64::INFINITY,
            certify: true,
        }
    }
}

impl Default for AuxOptions {
    fn default() -> Self {
        Self::new(1e-10, 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub max_residual: f64,
}

/// Solution of the auxiliary system over a window.
///
/// Each accepted DOP853 step keeps its seventh-order continuous extension, so
/// states and derivatives are available at any time in the window with an
/// interpolation error below the step's local error estimate. No further
/// resampling is needed for quadrature or plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxTrajectory {
    solution: Dop853Solution<2>,
    lambda: u128,
    stats: AuxStats,
}

impl AuxTrajectory {
    pub fn lambda(&self) -> u128 {
        self.lambda
    }

    pub fn stats(&self) -> AuxStats {
        self.stats
    }

    pub fn start(&self) -> f64 {
        self.solution.start()
    }

    pub fn end(&self) -> f64 {
        self.solution.end()
    }

    /// Accepted step boundaries, starting with the initial time.
    pub fn times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.solution.steps.len() + 1);
        out.push(self.start());
        out.extend(self.solution.steps.iter().map(|s| s.t1()));
        out
    }

    /// `(start, end)` of every accepted step.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.solution.steps.iter().map(|s| (s.t0, s.t1()))
    }

    pub fn state_at(&self, t: f64) -> Result<AuxState> {
        let (y, _) = self.solution.eval(t)?;
        Ok(AuxState::new(y[0], y[1]))
    }

    /// Time derivative of the interpolant.
    pub fn rate_at(&self, t: f64) -> Result<AuxRate> {
        let (_, dy) = self.solution.eval(t)?;
        Ok(AuxRate {
            theta_dot: dy[0],
            phi_dot: dy[1],
        })
    }

    pub fn sample_at(&self, t: f64) -> Result<(AuxState, AuxRate)> {
        let (y, dy) = self.solution.eval(t)?;
        Ok((
            AuxState::new(y[0], y[1]),
            AuxRate {
                theta_dot: dy[0],
                phi_dot: dy[1],
            },
        ))
    }

    /// Copy with `(θ, φ)` offset by constants.
    pub fn shifted(&self, dtheta: f64, dphi: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.solution.steps {
            s.shift(&[dtheta, dphi]);
        }
        out
    }

    /// Times at which [`residual_check`] evaluates: every node and three
    /// interior points of every step.
    pub fn check_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.solution.steps.len() + 1);
        for s in &self.solution.steps {
            for frac in [0.0, 0.25, 0.5, 0.75] {
                out.push(s.t0 + frac * s.h);
            }
        }
        out.push(self.end());
        out
    }
}

/// Integrates the auxiliary system over `window` from `initial`.
pub fn solve_aux(
    initial: AuxState,
    window: (f64, f64),
    params: &ModelParams,
    lambda: u128,
    opts: &AuxOptions,
) -> Result<AuxTrajectory> {
    let (t0, t1) = window;
    if !(initial.theta.is_finite() && initial.phi.is_finite()) {
        return Err(Error::Config("initial angles must be finite".into()));
    }
    if lambda == 0 {
        return Err(Error::Config("λ must be a positive integer".into()));
    }
    let mut ode_opts =
        Dop853Options::new(opts.rtol * DERIVATIVE_MARGIN, opts.atol * DERIVATIVE_MARGIN);
    ode_opts.max_steps = opts.max_steps;
    ode_opts.max_step = opts.max_step;
    let rhs = |t: f64, y: &[f64; 2]| {
        let r = aux_rhs(AuxState::new(y[0], y[1]), t, params, lambda, opts.theta_min)?;
        Ok([r.theta_dot, r.phi_dot])
    };
    let solution = ode::integrate(rhs, t0, [initial.theta, initial.phi], t1, &ode_opts)?;

    let mut traj = AuxTrajectory {
        stats: AuxStats {
            accepted: solution.stats.accepted,
            rejected: solution.stats.rejected,
            rhs_evals: solution.stats.rhs_evals,
            max_residual: f64::NAN,
        },
        solution,
        lambda,
    };
    check_poles(&traj, params, opts.theta_min)?;
    let residual = residual_check(&traj, params)?;
    traj.stats.max_residual = residual;
    if opts.certify {
        let bound = 100.0 * opts.rtol;
        if !(residual <= bound) {
            return Err(Error::Certification { residual, bound });
        }
    }
    Ok(traj)
}

/// Stage evaluations can step over a pole without landing inside the
/// `θ_min` band; a sign change of `sin θ` between check points gives it away.
fn check_poles(traj: &AuxTrajectory, params: &ModelParams, theta_min: f64) -> Result<()> {
    let mut previous: Option<f64> = None;
    for t in traj.check_times() {
        let sin = traj.state_at(t)?.theta.sin();
        let coupled = params.evaluate(t)?.g != C64::new(0.0, 0.0);
        let crossed = previous.is_some_and(|p| p * sin < 0.0);
        if coupled && (sin.abs() < theta_min || crossed) {
            return Err(Error::Singularity {
                t,
                sin_theta: sin.abs(),
            });
        }
        previous = Some(sin);
    }
    Ok(())
}

/// Largest modulus of the two complex auxiliary relations at `t`, with
/// `(θ̇, φ̇)` from the interpolant.
pub fn residual_at(traj: &AuxTrajectory, params: &ModelParams, t: f64) -> Result<f64> {
    let (state, rate) = traj.sample_at(t)?;
    let r = complex_residuals(state, rate, t, params, traj.lambda)?;
    Ok(r[0].norm().max(r[1].norm()))
}

/// Maximum of [`residual_at`] over [`AuxTrajectory::check_times`].
pub fn residual_check(traj: &AuxTrajectory, params: &ModelParams) -> Result<f64> {
    let mut worst = 0.0_f64;
    for t in traj.check_times() {
        worst = worst.max(residual_at(traj, params, t)?);
    }
    Ok(worst)
}

/// Initial angles at the adiabatic fixed point.
///
/// `φ(t0) = −arg g(t0)` makes `g e^{iφ}` real and positive, and `θ(t0)` solves
/// `(kω − ω₀ − ω) sin θ = 2|g|√λ cos θ` (the fixed point with `φ̇ = ω`) by
/// bisection on `(0, π)`.
pub fn adiabatic_matched_initial(params: &ModelParams, lambda: u128, t0: f64) -> Result<AuxState> {
    let c = params.evaluate(t0)?;
    let modulus = c.g.norm();
    if modulus == 0.0 {
        return Err(Error::Config(
            "adiabatic-matched initial condition needs |g(t0)| > 0".into(),
        ));
    }
    let lhs = params.k() as f64 * c.omega - c.omega0 - c.omega;
    let rhs = 2.0 * modulus * (lambda as f64).sqrt();
    let f = |theta: f64| lhs * theta.sin() - rhs * theta.cos();

    // f(0) = −rhs < 0 < f(π) = rhs
    let (mut lo, mut hi) = (0.0_f64, std::f64::consts::PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(AuxState::new(0.5 * (lo + hi), -c.g.arg()))
}
