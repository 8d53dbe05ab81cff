//! Time-dependent coherent states built from the particular solutions,
//! `Φ_σ(t) = e^{−ξ²/2} Σ_m (ξ^m/√m!) ψ_{m,σ}(t)`.

use nalgebra::DVector;

use crate::algebra::{Atom, FockSpace};
use crate::aux::{solve_aux, AuxOptions, AuxState};
use crate::params::ModelParams;
use crate::propagator::{BlockModel, ExactSolution, Sigma};
use crate::{Error, Result, C64};

/// Largest Poisson weight allowed beyond the last retained block.
pub const TAIL_TOL: f64 = 1e-10;

fn ln_poisson(xi: f64, m: usize) -> f64 {
    let mut ln_fact = 0.0;
    for j in 2..=m {
        ln_fact += (j as f64).ln();
    }
    -xi * xi + 2.0 * m as f64 * xi.ln() - ln_fact
}

/// `e^{−ξ²} Σ_{m > m_max} ξ^{2m}/m!`, summed term by term.
pub fn tail_weight(xi: f64, m_max: usize) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut m = m_max + 1;
    let mut term = ln_poisson(xi, m).exp();
    loop {
        total += term;
        m += 1;
        // ratio of successive terms is ξ²/m
        term *= xi * xi / m as f64;
        if m as f64 > xi * xi && term < 1e-18 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        if term == 0.0 {
            break;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentSpec {
    pub xi: f64,
    pub m_max: usize,
    pub sigma: Sigma,
}

impl CoherentSpec {
    /// Smallest `m_max` whose tail weight is below [`TAIL_TOL`].
    pub fn from_xi(xi: f64, sigma: Sigma) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::Config(format!(
                "ξ = {xi} must be finite and non-negative"
            )));
        }
        let mut m_max = 0;
        while tail_weight(xi, m_max) >= TAIL_TOL {
            m_max += 1;
        }
        Ok(Self { xi, m_max, sigma })
    }

    pub fn check(&self) -> Result<()> {
        let tail = tail_weight(self.xi, self.m_max);
        if !(tail < TAIL_TOL) {
            return Err(Error::Truncation(format!(
                "tail weight {tail:e} beyond m = {} exceeds {TAIL_TOL:e}",
                self.m_max
            )));
        }
        Ok(())
    }

    /// Checks that every block up to `m_max` stays `guard` levels below the
    /// cutoff.
    pub fn check_space(&self, space: FockSpace) -> Result<()> {
        let top = self.m_max + space.k();
        let ceiling = space.cutoff() - 1 - space.guard();
        if top > ceiling {
            return Err(Error::Truncation(format!(
                "ξ = {} needs blocks up to m = {} (photon level {top}) but cutoff {} with guard {} \
                 allows levels up to {ceiling}",
                self.xi,
                self.m_max,
                space.cutoff(),
                space.guard()
            )));
        }
        Ok(())
    }

    /// `e^{−ξ²/2} ξ^m/√m!` for `m = 0..=m_max`, rescaled to unit total weight.
    pub fn weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..=self.m_max)
            .map(|m| {
                if self.xi == 0.0 {
                    if m == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (0.5 * ln_poisson(self.xi, m)).exp()
                }
            })
            .collect();
        let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
        raw.into_iter().map(|w| w / norm).collect()
    }
}

/// Per-block solutions and weights of one coherent superposition.
#[derive(Debug, Clone)]
pub struct CoherentEvolution {
    pub spec: CoherentSpec,
    solutions: Vec<ExactSolution>,
    weights: Vec<f64>,
}

impl CoherentEvolution {
    /// `solutions[m]` must belong to block `m`.
    pub fn from_solutions(spec: CoherentSpec, solutions: Vec<ExactSolution>) -> Result<Self> {
        spec.check()?;
        if solutions.len() != spec.m_max + 1 {
            return Err(Error::Config(format!(
                "{} block solutions supplied for m_max = {}",
                solutions.len(),
                spec.m_max
            )));
        }
        for (m, s) in solutions.iter().enumerate() {
            if s.block().m() != m {
                return Err(Error::Config(format!(
                    "solution {m} belongs to block {}",
                    s.block().m()
                )));
            }
            spec.check_space(s.model().space)?;
        }
        Ok(Self {
            weights: spec.weights(),
            spec,
            solutions,
        })
    }

    /// Solves every block from the shared initial angles.
    pub fn solve(
        spec: CoherentSpec,
        space: FockSpace,
        params: &ModelParams,
        initial: AuxState,
        window: (f64, f64),
        opts: &AuxOptions,
    ) -> Result<Self> {
        spec.check()?;
        spec.check_space(space)?;
        let solutions = (0..=spec.m_max)
            .map(|m| solve_block(space, m, params, initial, window, opts))
            .collect::<Result<Vec<_>>>()?;
        Self::from_solutions(spec, solutions)
    }

    pub fn solutions(&self) -> &[ExactSolution] {
        &self.solutions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn state_at(&self, t: f64) -> Result<DVector<C64>> {
        build_coherent_state(&self.spec, &self.weights, &self.solutions, t)
    }
}

/// Solves the auxiliary equations for block `m` and wraps the result.
pub fn solve_block(
    space: FockSpace,
    m: usize,
    params: &ModelParams,
    initial: AuxState,
    window: (f64, f64),
    opts: &AuxOptions,
) -> Result<ExactSolution> {
    let model = BlockModel::for_m(space, m)?;
    let traj = solve_aux(initial, window, params, model.block.lambda(), opts)?;
    ExactSolution::new(model, params.clone(), traj)
}

pub fn build_coherent_state(
    spec: &CoherentSpec,
    weights: &[f64],
    solutions: &[ExactSolution],
    t: f64,
) -> Result<DVector<C64>> {
    let Some(first) = solutions.first() else {
        return Err(Error::Config("no block solutions".into()));
    };
    let mut out = first.model().space.zero_state();
    for (w, s) in weights.iter().zip(solutions) {
        if *w != 0.0 {
            out += s.exact_state(spec.sigma, t)? * C64::from(*w);
        }
    }
    Ok(out)
}

/// `⟨σz⟩`.
pub fn atomic_inversion(space: FockSpace, state: &DVector<C64>) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(i, z)| match space.locate(i).0 {
            Atom::Excited => z.norm_sqr(),
            Atom::Ground => -z.norm_sqr(),
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::TimeProfile;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|x| x as f64).product()
    }

    #[test]
    fn tail_weight_matches_complement() {
        for xi in [0.5f64, 1.0, 2.0] {
            for m_max in [0usize, 3, 8] {
                let head: f64 = (0..=m_max)
                    .map(|m| (-xi * xi).exp() * xi.powi(2 * m as i32) / factorial(m))
                    .sum();
                assert!((tail_weight(xi, m_max) - (1.0 - head)).abs() < 1e-14);
            }
        }
        assert_eq!(tail_weight(0.0, 0), 0.0);
    }

    #[test]
    fn truncation_choice() {
        let spec = CoherentSpec::from_xi(1.0, Sigma::Plus).unwrap();
        assert!(tail_weight(1.0, spec.m_max) < TAIL_TOL);
        assert!(tail_weight(1.0, spec.m_max - 1) >= TAIL_TOL);
        assert_eq!(CoherentSpec::from_xi(0.0, Sigma::Plus).unwrap().m_max, 0);
        let w = CoherentSpec::from_xi(2.0, Sigma::Plus).unwrap().weights();
        assert!((w.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-15);
        let bad = CoherentSpec {
            xi: 2.0,
            m_max: 5,
            sigma: Sigma::Plus,
        };
        assert!(matches!(bad.check(), Err(Error::Truncation(_))));
        let spec = CoherentSpec::from_xi(2.0, Sigma::Plus).unwrap();
        assert!(matches!(
            spec.check_space(FockSpace::new(16, 3, 3).unwrap()),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn inversion_examples() {
        let s = FockSpace::new(16, 3, 3).unwrap();
        assert_eq!(atomic_inversion(s, &s.basis_state(Atom::Excited, 2)), 1.0);
        assert_eq!(atomic_inversion(s, &s.basis_state(Atom::Ground, 5)), -1.0);
    }

    #[test]
    fn decoupled_start_is_textbook_coherent_state() {
        let space = FockSpace::new(32, 3, 3).unwrap();
        let params = ModelParams::new(
            TimeProfile::constant(1.0),
            TimeProfile::constant(2.9),
            TimeProfile::constant(0.0),
            TimeProfile::constant(0.0),
            3,
        );
        let spec = CoherentSpec::from_xi(1.0, Sigma::Plus).unwrap();
        let ev = CoherentEvolution::solve(
            spec,
            space,
            &params,
            AuxState::new(0.0, 0.0),
            (0.0, 5.0),
            &AuxOptions::default(),
        )
        .unwrap();
        let psi = ev.state_at(0.0).unwrap();
        let norm = (-0.5f64).exp();
        for m in 0..=spec.m_max {
            let expected = norm / factorial(m).sqrt();
            let got = psi[space.index(Atom::Excited, m)];
            assert!((got.re - expected).abs() < 1e-10 && got.im.abs() < 1e-15);
        }
        assert_eq!(atomic_inversion(space, &psi), 1.0);
    }

    #[test]
    fn superposition_is_normalized_and_reduces_at_zero_xi() {
        let space = FockSpace::new(32, 3, 3).unwrap();
        let params = ModelParams::new(
            TimeProfile::constant(1.0),
            TimeProfile::constant(2.8),
            TimeProfile::constant(0.1),
            TimeProfile::constant(0.0),
            3,
        );
        let init = AuxState::new(FRAC_PI_2, PI);
        let opts = AuxOptions::default();
        let spec = CoherentSpec::from_xi(1.0, Sigma::Minus).unwrap();
        let ev = CoherentEvolution::solve(spec, space, &params, init, (0.0, 20.0), &opts).unwrap();
        for i in 0..=40 {
            let psi = ev.state_at(0.5 * i as f64).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-10);
        }
        let zero = CoherentSpec::from_xi(0.0, Sigma::Minus).unwrap();
        let ev = CoherentEvolution::solve(zero, space, &params, init, (0.0, 20.0), &opts).unwrap();
        let single = solve_block(space, 0, &params, init, (0.0, 20.0), &opts).unwrap();
        assert_eq!(
            ev.state_at(7.0).unwrap(),
            single.exact_state(Sigma::Minus, 7.0).unwrap()
        );
    }
}
