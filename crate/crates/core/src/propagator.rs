//! Exact solutions inside one conserved block.
//!
//! With `β = −(θ/2) e^{−iφ}/√λ` the unitary `V = exp(βQ − β*Q†)` rotates the
//! invariant onto `σz`, and the transformed Hamiltonian
//! `H_V = V†HV − iV†∂V/∂t` is diagonal along any solution of the auxiliary
//! equations. Its diagonal entries are the phase rates
//!
//! ```text
//! φ̇_d,σ = (m + k/2) ω ∓ √λ Re(g e^{iφ}) sin θ ± ((ω₀ − kω)/2) cos θ
//! φ̇_g,σ = ∓ (φ̇/2)(1 − cos θ)
//! ```
//!
//! (upper signs for `σ = +1`) and the particular solutions are
//! `ψ_σ(t) = exp(−i∫(φ̇_d,σ + φ̇_g,σ)) V(t) e_σ`.

use nalgebra::{DVector, Matrix2, Vector2};

use crate::algebra::{FockSpace, Operator};
use crate::aux::{AuxRate, AuxState, AuxTrajectory};
use crate::params::{Couplings, ModelParams};
use crate::subspace::{
    block_generators, embed_operator, embed_state, BlockGenerators, SubspaceBlock,
};
use crate::{Error, Result, C64};

/// Tolerance on `Σ|C|² − 1` accepted by [`general_solution`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Label of the two invariant eigenvectors: `+1` for `(1, 0)`, `−1` for `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sigma {
    Plus,
    Minus,
}

impl Sigma {
    pub const BOTH: [Sigma; 2] = [Sigma::Plus, Sigma::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Sigma::Plus => 1.0,
            Sigma::Minus => -1.0,
        }
    }

    pub fn from_sign(sign: i64) -> Result<Self> {
        match sign {
            1 => Ok(Sigma::Plus),
            -1 => Ok(Sigma::Minus),
            other => Err(Error::Config(format!(
                "sigma must be +1 or -1, got {other}"
            ))),
        }
    }

    pub fn column(self) -> Vector2<C64> {
        match self {
            Sigma::Plus => Vector2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            Sigma::Minus => Vector2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        }
    }

    fn index(self) -> usize {
        match self {
            Sigma::Plus => 0,
            Sigma::Minus => 1,
        }
    }
}

impl std::fmt::Display for Sigma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sigma::Plus => "+1",
            Sigma::Minus => "-1",
        })
    }
}

/// A block together with its projected generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockModel {
    pub space: FockSpace,
    pub block: SubspaceBlock,
    pub generators: BlockGenerators,
}

impl BlockModel {
    pub fn new(space: FockSpace, block: SubspaceBlock) -> Result<Self> {
        if block.k() != space.k() {
            return Err(Error::Config(format!(
                "block built for k = {} used with a k = {} space",
                block.k(),
                space.k()
            )));
        }
        Ok(Self {
            space,
            block,
            generators: block_generators(space, &block)?,
        })
    }

    pub fn for_m(space: FockSpace, m: usize) -> Result<Self> {
        Self::new(space, SubspaceBlock::new(space, m)?)
    }

    /// `ωN + (ω₀ − (k−1)ω)/2 σz + gQ + g*Q† − ω/2` restricted to the block.
    pub fn hamiltonian(&self, c: &Couplings) -> Matrix2<C64> {
        let g = &self.generators;
        let k = self.block.k() as f64;
        g.n * C64::from(c.omega)
            + g.sigma_z * C64::from(0.5 * (c.omega0 - (k - 1.0) * c.omega))
            + g.q * c.g
            + g.q_dag * c.g.conj()
            - Matrix2::identity() * C64::from(0.5 * c.omega)
    }
}

/// `β = −(θ/2) e^{−iφ}/√λ`.
pub fn beta(state: AuxState, lambda: u128) -> C64 {
    C64::from_polar(-0.5 * state.theta / (lambda as f64).sqrt(), -state.phi)
}

/// Exponential of a 2×2 complex matrix.
pub fn expm2(m: &Matrix2<C64>) -> Matrix2<C64> {
    let half_trace = (m[(0, 0)] + m[(1, 1)]) * 0.5;
    let traceless = m - Matrix2::identity() * half_trace;
    // traceless² = s² · 1
    let s2 = -(traceless[(0, 0)] * traceless[(1, 1)] - traceless[(0, 1)] * traceless[(1, 0)]);
    let s = s2.sqrt();
    let (cosh, sinhc) = if s.norm() < 1e-4 {
        (
            C64::new(1.0, 0.0) + s2 * 0.5 + s2 * s2 / 24.0,
            C64::new(1.0, 0.0) + s2 / 6.0 + s2 * s2 / 120.0,
        )
    } else {
        (s.cosh(), s.sinh() / s)
    };
    (Matrix2::identity() * cosh + traceless * sinhc) * half_trace.exp()
}

/// `V = exp(βQ − β*Q†)` at block level.
pub fn build_v(state: AuxState, model: &BlockModel) -> Matrix2<C64> {
    let b = beta(state, model.block.lambda());
    let g = &model.generators;
    expm2(&(g.q * b - g.q_dag * b.conj()))
}

/// `[[cos(θ/2), e^{iφ} sin(θ/2)], [−e^{−iφ} sin(θ/2), cos(θ/2)]]`.
pub fn v_closed_form(state: AuxState) -> Matrix2<C64> {
    let (s, c) = (0.5 * state.theta).sin_cos();
    let e = C64::from_polar(1.0, state.phi);
    Matrix2::new(C64::from(c), e * s, -e.conj() * s, C64::from(c))
}

/// Time derivative of [`v_closed_form`].
pub fn v_derivative(state: AuxState, rate: AuxRate) -> Matrix2<C64> {
    let (s, c) = (0.5 * state.theta).sin_cos();
    let e = C64::from_polar(1.0, state.phi);
    let i = C64::i();
    let half = 0.5 * rate.theta_dot;
    Matrix2::new(
        C64::from(-half * s),
        e * (half * c) + i * e * (rate.phi_dot * s),
        -e.conj() * (half * c) + i * e.conj() * (rate.phi_dot * s),
        C64::from(-half * s),
    )
}

/// `I = −(sin θ/√λ)(e^{−iφ}Q + e^{iφ}Q†) + cos θ σz` at block level.
pub fn invariant_block(state: AuxState, model: &BlockModel) -> Matrix2<C64> {
    let g = &model.generators;
    let (sin, cos) = state.theta.sin_cos();
    let e = C64::from_polar(1.0, -state.phi);
    (g.q * e + g.q_dag * e.conj()) * C64::from(-sin / model.block.sqrt_lambda())
        + g.sigma_z * C64::from(cos)
}

/// Time derivative of [`invariant_block`].
pub fn invariant_derivative(state: AuxState, rate: AuxRate, model: &BlockModel) -> Matrix2<C64> {
    let g = &model.generators;
    let (sin, cos) = state.theta.sin_cos();
    let e = C64::from_polar(1.0, -state.phi);
    let i = C64::i();
    let root = model.block.sqrt_lambda();
    let d_theta = (g.q * e + g.q_dag * e.conj()) * C64::from(-cos * rate.theta_dot / root);
    let d_phi = (g.q * (-i * e) + g.q_dag * (i * e.conj())) * C64::from(-sin * rate.phi_dot / root);
    d_theta + d_phi - g.sigma_z * C64::from(sin * rate.theta_dot)
}

fn max_entry(m: &Matrix2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |V† I V − σz|`.
pub fn check_iv(state: AuxState, model: &BlockModel, tol: f64) -> Result<f64> {
    let v = build_v(state, model);
    let rotated = v.adjoint() * invariant_block(state, model) * v;
    let residual = max_entry(&(rotated - model.generators.sigma_z));
    if !(residual <= tol) {
        return Err(Error::Transformation {
            what: "V† I V = σz".into(),
            residual,
            tol,
        });
    }
    Ok(residual)
}

/// Both evaluations of the transformed Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HvComparison {
    /// `ωN + (ω/2)(σz − 1) + {…} σz`.
    pub formula: Matrix2<C64>,
    /// `V†HV − iV†∂V/∂t`.
    pub direct: Matrix2<C64>,
}

impl HvComparison {
    pub fn max_difference(&self) -> f64 {
        max_entry(&(self.formula - self.direct))
    }

    pub fn off_diagonal(&self) -> f64 {
        self.direct[(0, 1)].norm().max(self.direct[(1, 0)].norm())
    }
}

pub fn build_hv(
    state: AuxState,
    rate: AuxRate,
    t: f64,
    params: &ModelParams,
    model: &BlockModel,
) -> Result<HvComparison> {
    let c = params.evaluate(t)?;
    let g = &model.generators;
    let k = model.block.k() as f64;
    let (sin, cos) = state.theta.sin_cos();
    let coupling = (c.g * C64::from_polar(1.0, state.phi)).re;
    let bracket = -model.block.sqrt_lambda() * coupling * sin
        + 0.5 * (c.omega0 - k * c.omega) * cos
        - 0.5 * rate.phi_dot * (1.0 - cos);
    let one = Matrix2::<C64>::identity();
    let formula = g.n * C64::from(c.omega)
        + (g.sigma_z - one) * C64::from(0.5 * c.omega)
        + g.sigma_z * C64::from(bracket);

    let v = build_v(state, model);
    let direct = v.adjoint() * model.hamiltonian(&c) * v
        - v.adjoint() * v_derivative(state, rate) * C64::i();
    Ok(HvComparison { formula, direct })
}

/// [`build_hv`] with a bound on both the formula/direct gap and the
/// off-diagonal part.
pub fn check_hv(
    state: AuxState,
    rate: AuxRate,
    t: f64,
    params: &ModelParams,
    model: &BlockModel,
    tol: f64,
) -> Result<HvComparison> {
    let hv = build_hv(state, rate, t, params, model)?;
    for (what, residual) in [
        ("H_V formula vs direct", hv.max_difference()),
        ("H_V off-diagonal", hv.off_diagonal()),
    ] {
        if !(residual <= tol) {
            return Err(Error::Transformation {
                what: what.into(),
                residual,
                tol,
            });
        }
    }
    Ok(hv)
}

fn dynamical_parts(state: AuxState, c: &Couplings, block: &SubspaceBlock) -> (f64, f64) {
    let k = block.k() as f64;
    let (sin, cos) = state.theta.sin_cos();
    let coupling = (c.g * C64::from_polar(1.0, state.phi)).re;
    let mean = (block.m() as f64 + 0.5 * k) * c.omega;
    let split = -block.sqrt_lambda() * coupling * sin + 0.5 * (c.omega0 - k * c.omega) * cos;
    (mean, split)
}

/// `φ̇_d,σ`.
pub fn phase_rate_dynamical(
    sigma: Sigma,
    t: f64,
    state: AuxState,
    params: &ModelParams,
    block: &SubspaceBlock,
) -> Result<f64> {
    let (mean, split) = dynamical_parts(state, &params.evaluate(t)?, block);
    Ok(mean + sigma.sign() * split)
}

/// `φ̇_g,σ = −σ (φ̇/2)(1 − cos θ)`. Depends on the trajectory only.
pub fn phase_rate_geometric(sigma: Sigma, state: AuxState, rate: AuxRate) -> f64 {
    -sigma.sign() * 0.5 * rate.phi_dot * (1.0 - state.theta.cos())
}

/// Accumulated phases of one particular solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLedger {
    pub sigma: Sigma,
    pub phi_d: f64,
    pub phi_g: f64,
}

impl PhaseLedger {
    /// `exp(−i(φ_d + φ_g))`.
    pub fn factor(&self) -> C64 {
        C64::from_polar(1.0, -(self.phi_d + self.phi_g))
    }
}

/// Integrals of the σ-independent and σ-odd rate parts from the start.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PhaseSums {
    mean: f64,
    split: f64,
    geometric: f64,
}

impl PhaseSums {
    fn add(self, o: Self) -> Self {
        Self {
            mean: self.mean + o.mean,
            split: self.split + o.split,
            geometric: self.geometric + o.geometric,
        }
    }

    fn scale(self, f: f64) -> Self {
        Self {
            mean: self.mean * f,
            split: self.split * f,
            geometric: self.geometric * f,
        }
    }
}

const GAUSS_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Both particular solutions of one block along a solved trajectory.
///
/// Phases are accumulated by eight-point Gauss-Legendre quadrature on every
/// accepted step of the auxiliary solver, using its continuous extension, so
/// the quadrature grid follows the solver's step control.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    model: BlockModel,
    params: ModelParams,
    trajectory: AuxTrajectory,
    nodes: Vec<f64>,
    sums: Vec<PhaseSums>,
}

impl ExactSolution {
    pub fn new(model: BlockModel, params: ModelParams, trajectory: AuxTrajectory) -> Result<Self> {
        if trajectory.lambda() != model.block.lambda() {
            return Err(Error::Config(format!(
                "trajectory solved for λ = {} used with block λ = {}",
                trajectory.lambda(),
                model.block.lambda()
            )));
        }
        let nodes = trajectory.times();
        let mut sums = Vec::with_capacity(nodes.len());
        let mut acc = PhaseSums::default();
        sums.push(acc);
        let mut out = Self {
            model,
            params,
            trajectory,
            nodes: Vec::new(),
            sums: Vec::new(),
        };
        for w in nodes.windows(2) {
            acc = acc.add(out.integrate(w[0], w[1])?);
            sums.push(acc);
        }
        out.nodes = nodes;
        out.sums = sums;
        Ok(out)
    }

    fn rates(&self, t: f64) -> Result<PhaseSums> {
        let (state, rate) = self.trajectory.sample_at(t)?;
        let c = self.params.evaluate(t)?;
        let (mean, split) = dynamical_parts(state, &c, &self.model.block);
        Ok(PhaseSums {
            mean,
            split,
            geometric: 0.5 * rate.phi_dot * (1.0 - state.theta.cos()),
        })
    }

    fn integrate(&self, a: f64, b: f64) -> Result<PhaseSums> {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = PhaseSums::default();
        for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            acc = acc.add(self.rates(mid - half * x)?.scale(w));
            acc = acc.add(self.rates(mid + half * x)?.scale(w));
        }
        Ok(acc.scale(half))
    }

    pub fn model(&self) -> &BlockModel {
        &self.model
    }

    pub fn block(&self) -> &SubspaceBlock {
        &self.model.block
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn trajectory(&self) -> &AuxTrajectory {
        &self.trajectory
    }

    pub fn window(&self) -> (f64, f64) {
        (self.trajectory.start(), self.trajectory.end())
    }

    fn sums_at(&self, t: f64) -> Result<PhaseSums> {
        let (start, end) = self.window();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let i = self.nodes.partition_point(|&n| n <= t).max(1) - 1;
        if self.nodes[i] == t {
            return Ok(self.sums[i]);
        }
        Ok(self.sums[i].add(self.integrate(self.nodes[i], t)?))
    }

    pub fn ledger(&self, sigma: Sigma, t: f64) -> Result<PhaseLedger> {
        let s = self.sums_at(t)?;
        let sign = sigma.sign();
        Ok(PhaseLedger {
            sigma,
            phi_d: s.mean + sign * s.split,
            phi_g: -sign * s.geometric,
        })
    }

    /// Two-component state in the `(upper, lower)` basis.
    pub fn block_state(&self, sigma: Sigma, t: f64) -> Result<Vector2<C64>> {
        let state = self.trajectory.state_at(t)?;
        let phase = self.ledger(sigma, t)?.factor();
        Ok(build_v(state, &self.model) * sigma.column() * phase)
    }

    pub fn exact_state(&self, sigma: Sigma, t: f64) -> Result<DVector<C64>> {
        Ok(embed_state(
            self.model.space,
            &self.model.block,
            &self.block_state(sigma, t)?,
        ))
    }

    /// `U(t) = V(t) diag(e^{−iΦ₊}, e^{−iΦ₋})`; its columns are the two
    /// particular solutions.
    pub fn block_evolution(&self, t: f64) -> Result<Matrix2<C64>> {
        let v = build_v(self.trajectory.state_at(t)?, &self.model);
        let plus = self.ledger(Sigma::Plus, t)?.factor();
        let minus = self.ledger(Sigma::Minus, t)?.factor();
        Ok(v * Matrix2::new(plus, C64::new(0.0, 0.0), C64::new(0.0, 0.0), minus))
    }

    /// [`Self::block_evolution`] embedded in the full space, zero on the
    /// complement of the block.
    pub fn evolution_operator(&self, t: f64) -> Result<Operator> {
        Ok(embed_operator(
            self.model.space,
            &self.model.block,
            &self.block_evolution(t)?,
        ))
    }

    pub fn hamiltonian_block(&self, t: f64) -> Result<Matrix2<C64>> {
        Ok(self.model.hamiltonian(&self.params.evaluate(t)?))
    }

    pub fn invariant_at(&self, t: f64) -> Result<Matrix2<C64>> {
        Ok(invariant_block(self.trajectory.state_at(t)?, &self.model))
    }

    /// `max |∂I/∂t − i[I, H]|` at block level.
    pub fn invariant_residual(&self, t: f64) -> Result<f64> {
        let (state, rate) = self.trajectory.sample_at(t)?;
        let h = self.hamiltonian_block(t)?;
        let inv = invariant_block(state, &self.model);
        let lhs = invariant_derivative(state, rate, &self.model) - (inv * h - h * inv) * C64::i();
        Ok(max_entry(&lhs))
    }

    pub fn hv_at(&self, t: f64) -> Result<HvComparison> {
        let (state, rate) = self.trajectory.sample_at(t)?;
        build_hv(state, rate, t, &self.params, &self.model)
    }

    /// Instantaneous `φ̇_d,σ + φ̇_g,σ`.
    pub fn total_rate(&self, sigma: Sigma, t: f64) -> Result<f64> {
        let (state, rate) = self.trajectory.sample_at(t)?;
        Ok(
            phase_rate_dynamical(sigma, t, state, &self.params, &self.model.block)?
                + phase_rate_geometric(sigma, state, rate),
        )
    }

    /// `|H_V e_σ − (φ̇_d,σ + φ̇_g,σ) e_σ|`.
    pub fn eigen_relation_residual(&self, sigma: Sigma, t: f64) -> Result<f64> {
        let hv = self.hv_at(t)?.direct;
        let e = sigma.column();
        let r = hv * e - e * C64::from(self.total_rate(sigma, t)?);
        Ok(r.norm())
    }

    /// `⟨ψ_σ(t0)|ψ⟩`.
    pub fn initial_overlap(&self, sigma: Sigma, psi: &DVector<C64>) -> Result<C64> {
        let start = self.exact_state(sigma, self.window().0)?;
        Ok(start.dotc(psi))
    }
}

/// One term `C · ψ_σ` of a superposition.
#[derive(Debug, Clone, Copy)]
pub struct Term<'a> {
    pub solution: &'a ExactSolution,
    pub sigma: Sigma,
    pub coefficient: C64,
}

/// `Σ C ψ_σ(t)` over particular solutions of distinct blocks or σ.
pub fn general_solution(terms: &[Term<'_>], t: f64) -> Result<DVector<C64>> {
    let Some(first) = terms.first() else {
        return Err(Error::Normalization("empty superposition".into()));
    };
    let weight: f64 = terms.iter().map(|x| x.coefficient.norm_sqr()).sum();
    if !((weight - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(Error::Normalization(format!(
            "Σ|C|² = {weight} differs from 1"
        )));
    }
    let mut seen = Vec::with_capacity(terms.len());
    let mut out = first.solution.model.space.zero_state();
    for term in terms {
        let key = (term.solution.block().m(), term.sigma.index());
        if seen.contains(&key) {
            return Err(Error::Normalization(format!(
                "solution (m = {}, σ = {}) appears twice",
                key.0, term.sigma
            )));
        }
        seen.push(key);
        out += term.solution.exact_state(term.sigma, t)? * term.coefficient;
    }
    Ok(out)
}

/// Coefficients `C = ⟨ψ_σ(t0)|ψ⟩` for every solution and both σ.
pub fn recover_coefficients<'a>(
    solutions: &[&'a ExactSolution],
    psi: &DVector<C64>,
) -> Result<Vec<Term<'a>>> {
    let mut out = Vec::with_capacity(2 * solutions.len());
    for &solution in solutions {
        for sigma in Sigma::BOTH {
            out.push(Term {
                solution,
                sigma,
                coefficient: solution.initial_overlap(sigma, psi)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::build_hamiltonian;
    use crate::aux::{solve_aux, AuxOptions};
    use crate::params::TimeProfile;
    use crate::subspace::project_block;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn model(m: usize) -> BlockModel {
        BlockModel::for_m(FockSpace::new(16, 3, 3).unwrap(), m).unwrap()
    }

    fn taylor_expm(m: &Matrix2<C64>) -> Matrix2<C64> {
        let mut term = Matrix2::<C64>::identity();
        let mut sum = term;
        for n in 1..60 {
            term = term * m / C64::from(n as f64);
            sum += term;
        }
        sum
    }

    fn close(a: &Matrix2<C64>, b: &Matrix2<C64>, tol: f64) -> bool {
        max_entry(&(a - b)) < tol
    }

    fn detuned() -> ModelParams {
        ModelParams::new(
            TimeProfile::constant(1.0),
            TimeProfile::constant(2.8),
            TimeProfile::constant(0.1),
            TimeProfile::constant(0.0),
            3,
        )
    }

    fn sinusoidal() -> ModelParams {
        ModelParams::new(
            TimeProfile::constant(1.0),
            TimeProfile::sinusoid(3.0, 0.1, 0.5, 0.0),
            TimeProfile::constant(0.1),
            TimeProfile::linear(0.2, 0.01),
            3,
        )
    }

    fn solution(params: ModelParams, m: usize, initial: AuxState) -> ExactSolution {
        let model = model(m);
        let traj = solve_aux(
            initial,
            (0.0, 20.0),
            &params,
            model.block.lambda(),
            &AuxOptions::default(),
        )
        .unwrap();
        ExactSolution::new(model, params, traj).unwrap()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta(AuxState::new(0.0, 1.0), 6).norm(), 0.0);
        let b = beta(AuxState::new(PI, 0.0), 6);
        assert!((b - C64::from(-0.5 * PI / 6f64.sqrt())).norm() < 1e-15);
        for i in 0..20 {
            let s = AuxState::new(0.15 * i as f64, 0.7 * i as f64);
            assert!((beta(s, 24).norm() - s.theta / (2.0 * 24f64.sqrt())).abs() < 1e-15);
        }
    }

    #[test]
    fn expm2_matches_taylor_series() {
        let samples = [
            Matrix2::new(
                C64::new(0.3, -0.2),
                C64::new(1.1, 0.4),
                C64::new(-0.7, 0.0),
                C64::new(0.0, 0.9),
            ),
            Matrix2::new(
                C64::new(1e-6, 0.0),
                C64::new(0.0, 1e-7),
                C64::new(2e-7, 0.0),
                C64::new(0.0, -1e-6),
            ),
            Matrix2::zeros(),
        ];
        for m in &samples {
            assert!(close(&expm2(m), &taylor_expm(m), 1e-13));
        }
    }

    #[test]
    fn v_examples() {
        let md = model(0);
        assert!(close(
            &build_v(AuxState::new(0.0, 0.4), &md),
            &Matrix2::identity(),
            1e-15
        ));
        let expected = Matrix2::new(
            C64::from(0.0),
            C64::from(1.0),
            C64::from(-1.0),
            C64::from(0.0),
        );
        let gen = md.generators.q * beta(AuxState::new(PI, 0.0), 6)
            - md.generators.q_dag * beta(AuxState::new(PI, 0.0), 6).conj();
        assert!(close(&taylor_expm(&gen), &expected, 1e-13));
        assert!(close(
            &build_v(AuxState::new(PI, 0.0), &md),
            &expected,
            1e-15
        ));
        for i in 0..50 {
            let s = AuxState::new(0.13 * i as f64 - 2.0, 0.61 * i as f64);
            let v = build_v(s, &model(i % 4));
            assert!(close(&(v.adjoint() * v), &Matrix2::identity(), 1e-13));
            assert!(close(&v, &v_closed_form(s), 1e-14));
        }
    }

    #[test]
    fn v_derivative_matches_finite_difference() {
        let h = 1e-5;
        for i in 0..10 {
            let (theta, phi) = (0.3 * i as f64, 1.0 - 0.4 * i as f64);
            let rate = AuxRate {
                theta_dot: 0.7 - 0.1 * i as f64,
                phi_dot: -0.3 + 0.2 * i as f64,
            };
            let at = |dt: f64| {
                v_closed_form(AuxState::new(
                    theta + rate.theta_dot * dt,
                    phi + rate.phi_dot * dt,
                ))
            };
            let fd = (at(h) - at(-h)) / C64::from(2.0 * h);
            assert!(close(
                &fd,
                &v_derivative(AuxState::new(theta, phi), rate),
                1e-9
            ));
        }
    }

    #[test]
    fn invariant_is_rotated_sigma_z() {
        let md = model(0);
        let r = check_iv(AuxState::new(0.7, 1.3), &md, 1e-12).unwrap();
        assert!(r < 1e-12);
        assert_eq!(check_iv(AuxState::new(0.0, 2.0), &md, 0.0).unwrap(), 0.0);
        let inv = invariant_block(AuxState::new(0.7, 1.3), &md);
        // an involution with unit trace-free part has eigenvalues ±1
        assert!(close(&(inv * inv), &Matrix2::identity(), 1e-14));
        assert!((inv[(0, 0)] + inv[(1, 1)]).norm() < 1e-15);
        assert!(close(&inv, &inv.adjoint(), 1e-15));
        let bad = check_iv(AuxState::new(0.7, 1.3), &md, 1e-30);
        assert!(bad.is_ok() || matches!(bad, Err(Error::Transformation { .. })));
    }

    #[test]
    fn invariant_derivative_matches_finite_difference() {
        let md = model(1);
        let h = 1e-5;
        let rate = AuxRate {
            theta_dot: 0.3,
            phi_dot: -1.1,
        };
        let at = |dt: f64| {
            invariant_block(
                AuxState::new(0.9 + rate.theta_dot * dt, 0.4 + rate.phi_dot * dt),
                &md,
            )
        };
        let fd = (at(h) - at(-h)) / C64::from(2.0 * h);
        assert!(close(
            &fd,
            &invariant_derivative(AuxState::new(0.9, 0.4), rate, &md),
            1e-9
        ));
    }

    #[test]
    fn block_hamiltonian_matches_full_space() {
        let md = model(2);
        let p = sinusoidal();
        for t in [0.0, 1.3, 7.0] {
            let full =
                project_block(&build_hamiltonian(md.space, &p, t).unwrap(), &md.block).unwrap();
            assert!(close(
                &full,
                &md.hamiltonian(&p.evaluate(t).unwrap()),
                1e-13
            ));
        }
    }

    #[test]
    fn decoupled_hv_diagonal() {
        let md = model(1);
        let (omega, omega0, theta) = (1.0, 2.8, 0.9);
        let p = ModelParams::new(
            TimeProfile::constant(omega),
            TimeProfile::constant(omega0),
            TimeProfile::constant(0.0),
            TimeProfile::constant(0.0),
            3,
        );
        let rate = AuxRate {
            theta_dot: 0.0,
            phi_dot: 3.0 * omega - omega0,
        };
        let hv = build_hv(AuxState::new(theta, 0.5), rate, 0.0, &p, &md).unwrap();
        let shift =
            0.5 * (omega0 - 3.0 * omega) * theta.cos() - 0.5 * rate.phi_dot * (1.0 - theta.cos());
        let mean = (1.0 + 1.5) * omega;
        assert!((hv.direct[(0, 0)] - C64::from(mean + shift)).norm() < 1e-14);
        assert!((hv.direct[(1, 1)] - C64::from(mean - shift)).norm() < 1e-14);
        assert!(hv.max_difference() < 1e-14);
        assert!(hv.off_diagonal() < 1e-15);
    }

    #[test]
    fn phase_rate_examples() {
        let md = model(2);
        let free = ModelParams::new(
            TimeProfile::constant(1.0),
            TimeProfile::constant(2.5),
            TimeProfile::constant(0.0),
            TimeProfile::constant(0.0),
            3,
        );
        let s = AuxState::new(FRAC_PI_2, 0.3);
        for sigma in Sigma::BOTH {
            let r = phase_rate_dynamical(sigma, 0.0, s, &free, &md.block).unwrap();
            assert!((r - 3.5).abs() < 1e-15);
        }
        let p = detuned();
        let s = AuxState::new(1.1, 0.4);
        let sum = phase_rate_dynamical(Sigma::Plus, 0.0, s, &p, &md.block).unwrap()
            + phase_rate_dynamical(Sigma::Minus, 0.0, s, &p, &md.block).unwrap();
        assert!((sum - 2.0 * 3.5).abs() < 1e-14);

        let resonant = ModelParams::new(
            TimeProfile::constant(1.0),
            TimeProfile::constant(3.0),
            TimeProfile::constant(0.05),
            TimeProfile::constant(0.0),
            3,
        );
        let r = phase_rate_dynamical(
            Sigma::Plus,
            0.0,
            AuxState::new(FRAC_PI_2, 0.0),
            &resonant,
            &md.block,
        )
        .unwrap();
        assert!((r - (3.5 - 60f64.sqrt() * 0.05)).abs() < 1e-14);

        let rate = AuxRate {
            theta_dot: 0.0,
            phi_dot: 1.0,
        };
        assert_eq!(
            phase_rate_geometric(Sigma::Plus, AuxState::new(0.0, 0.0), rate),
            0.0
        );
        assert!(
            (phase_rate_geometric(Sigma::Plus, AuxState::new(FRAC_PI_2, 0.0), rate) + 0.5).abs()
                < 1e-15
        );
        let s = AuxState::new(1.3, 0.2);
        assert_eq!(
            phase_rate_geometric(Sigma::Plus, s, rate)
                + phase_rate_geometric(Sigma::Minus, s, rate),
            0.0
        );
    }

    #[test]
    fn geometric_rate_ignores_frequencies() {
        let md = model(0);
        let sol = solution(detuned(), 0, AuxState::new(FRAC_PI_2, PI));
        let perturbed = ModelParams::new(
            TimeProfile::constant(1.3),
            TimeProfile::constant(2.1),
            TimeProfile::constant(0.4),
            TimeProfile::constant(0.9),
            3,
        );
        for i in 0..20 {
            let t = i as f64;
            let (s, r) = sol.trajectory().sample_at(t).unwrap();
            for sigma in Sigma::BOTH {
                assert_eq!(
                    phase_rate_geometric(sigma, s, r),
                    phase_rate_geometric(sigma, s, r)
                );
                let a = phase_rate_dynamical(sigma, t, s, &detuned(), &md.block).unwrap();
                let b = phase_rate_dynamical(sigma, t, s, &perturbed, &md.block).unwrap();
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn hv_is_diagonal_along_trajectories() {
        for (p, init) in [
            (detuned(), AuxState::new(FRAC_PI_2, PI)),
            (sinusoidal(), AuxState::new(1.0, 2.0)),
        ] {
            for m in 0..3 {
                let sol = solution(p.clone(), m, init);
                for i in 0..=80 {
                    let t = 0.25 * i as f64;
                    let hv = sol.hv_at(t).unwrap();
                    assert!(
                        hv.max_difference() < 1e-8 && hv.off_diagonal() < 1e-8,
                        "t = {t}"
                    );
                    for sigma in Sigma::BOTH {
                        assert!(sol.eigen_relation_residual(sigma, t).unwrap() < 1e-8);
                    }
                    assert!(sol.invariant_residual(t).unwrap() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn exact_states_are_normalized() {
        let sol = solution(detuned(), 1, AuxState::new(FRAC_PI_3, PI));
        let v0 = build_v(AuxState::new(FRAC_PI_3, PI), sol.model());
        for sigma in Sigma::BOTH {
            let start = sol.block_state(sigma, 0.0).unwrap();
            assert!((start - v0 * sigma.column()).norm() < 1e-15);
            for i in 0..=200 {
                let t = 0.1 * i as f64;
                assert!((sol.exact_state(sigma, t).unwrap().norm() - 1.0).abs() < 1e-12);
            }
        }
        let u = sol.block_evolution(13.7).unwrap();
        assert!(close(&(u.adjoint() * u), &Matrix2::identity(), 1e-12));
        assert!(close(&sol.block_evolution(0.0).unwrap(), &v0, 1e-15));
        assert!(sol.exact_state(Sigma::Plus, 20.5).is_err());
    }

    #[test]
    fn evolution_operator_solves_schrodinger() {
        let sol = solution(sinusoidal(), 0, AuxState::new(1.0, 2.0));
        for t in [2.0, 9.5, 17.0] {
            let hu = sol.hamiltonian_block(t).unwrap() * sol.block_evolution(t).unwrap();
            let mut errs = Vec::new();
            for h in [1e-3, 1e-4] {
                let du = (sol.block_evolution(t + h).unwrap()
                    - sol.block_evolution(t - h).unwrap())
                    * C64::new(0.0, 1.0 / (2.0 * h));
                errs.push(max_entry(&(du - hu)));
            }
            assert!(errs[0] < 1e-5, "{errs:?}");
            assert!(errs[1] < errs[0] * 0.05 || errs[1] < 1e-8, "{errs:?}");
        }
        let full = sol.evolution_operator(4.0).unwrap();
        let block = sol.block_evolution(4.0).unwrap();
        assert_eq!(project_block(&full, sol.block()).unwrap(), block);
        for sigma in Sigma::BOTH {
            let col = block * sigma.column();
            assert!((col - sol.block_state(sigma, 4.0).unwrap()).norm() < 1e-15);
        }
    }

    #[test]
    fn superposition_and_coefficient_recovery() {
        let a = solution(detuned(), 0, AuxState::new(FRAC_PI_2, PI));
        let b = solution(detuned(), 2, AuxState::new(FRAC_PI_2, PI));
        let r = 0.5f64.sqrt();
        let terms = [
            Term {
                solution: &a,
                sigma: Sigma::Plus,
                coefficient: C64::new(0.5, 0.0),
            },
            Term {
                solution: &a,
                sigma: Sigma::Minus,
                coefficient: C64::new(0.0, 0.5),
            },
            Term {
                solution: &b,
                sigma: Sigma::Minus,
                coefficient: C64::new(-r, 0.0),
            },
        ];
        let psi0 = general_solution(&terms, 0.0).unwrap();
        let recovered = recover_coefficients(&[&a, &b], &psi0).unwrap();
        let expected = [
            C64::new(0.5, 0.0),
            C64::new(0.0, 0.5),
            C64::new(0.0, 0.0),
            C64::new(-r, 0.0),
        ];
        for (term, e) in recovered.iter().zip(expected) {
            assert!((term.coefficient - e).norm() < 1e-12);
        }
        for t in [0.0, 5.5, 20.0] {
            assert!((general_solution(&terms, t).unwrap().norm() - 1.0).abs() < 1e-12);
        }
        let single = [Term {
            solution: &a,
            sigma: Sigma::Minus,
            coefficient: C64::new(1.0, 0.0),
        }];
        assert_eq!(
            general_solution(&single, 3.0).unwrap(),
            a.exact_state(Sigma::Minus, 3.0).unwrap()
        );
        let heavy = [Term {
            coefficient: C64::new(1.1, 0.0),
            ..single[0]
        }];
        assert!(matches!(
            general_solution(&heavy, 0.0),
            Err(Error::Normalization(_))
        ));
    }

    #[test]
    fn phases_match_direct_quadrature() {
        // trapezoid oracle on a fine grid
        let sol = solution(detuned(), 0, AuxState::new(FRAC_PI_2, PI));
        let t_end = 7.3;
        let n = 40_000;
        let h = t_end / n as f64;
        for sigma in Sigma::BOTH {
            let mut acc = 0.0;
            let mut prev = sol.total_rate(sigma, 0.0).unwrap();
            for i in 1..=n {
                let cur = sol.total_rate(sigma, i as f64 * h).unwrap();
                acc += 0.5 * h * (prev + cur);
                prev = cur;
            }
            let l = sol.ledger(sigma, t_end).unwrap();
            assert!((l.phi_d + l.phi_g - acc).abs() < 1e-8);
        }
    }
}
