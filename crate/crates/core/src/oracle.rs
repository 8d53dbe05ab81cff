//! Brute-force propagation of `i dψ/dt = H(t) ψ` in the truncated space.
//!
//! This module is deliberately independent of the invariant machinery: it
//! builds `H(t)` from the operator builders alone and integrates with its own
//! adaptive Dormand-Prince 5(4) scheme on complex vectors. No
//! renormalization is applied; the norm drift is reported and bounded.

use nalgebra::DVector;

use crate::algebra::{build_generators, Atom, FockSpace, HamiltonianTerms, Operator};
use crate::params::ModelParams;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Largest accepted `| ‖ψ(t)‖ − 1 |`.
    pub norm_tol: f64,
    /// Largest accepted norm outside the blocks of the initial state.
    pub leakage_tol: f64,
}

impl OracleOptions {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 5_000_000,
            norm_tol: 1e-9,
            leakage_tol: 1e-10,
        }
    }
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self::new(1e-12, 1e-14)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub times: Vec<f64>,
    pub states: Vec<DVector<C64>>,
    /// `max_t | ‖ψ(t)‖ − 1 |`.
    pub norm_drift: f64,
    /// `max_t |⟨N′⟩(t) − ⟨N′⟩(t0)|`.
    pub n_prime_drift: f64,
    /// Largest norm found outside the blocks populated at `t0`.
    pub leakage: f64,
    pub stats: OracleStats,
}

impl PropagationResult {
    pub fn final_state(&self) -> &DVector<C64> {
        self.states.last().expect("at least the initial sample")
    }
}

/// Indices reachable from the support of `initial` under any `H(t)`:
/// `(|n⟩, e)` pairs with `(|n+k⟩, g)`.
pub fn reachable_support(space: FockSpace, initial: &DVector<C64>) -> Vec<bool> {
    let k = space.k();
    let mut mask = vec![false; space.dim()];
    for (i, amp) in initial.iter().enumerate() {
        if *amp == C64::new(0.0, 0.0) {
            continue;
        }
        mask[i] = true;
        match space.locate(i) {
            (Atom::Excited, n) if n + k < space.cutoff() => {
                mask[space.index(Atom::Ground, n + k)] = true
            }
            (Atom::Ground, n) if n >= k => mask[space.index(Atom::Excited, n - k)] = true,
            _ => {}
        }
    }
    mask
}

fn leakage(state: &DVector<C64>, mask: &[bool]) -> f64 {
    state
        .iter()
        .zip(mask)
        .filter(|(_, &inside)| !inside)
        .map(|(z, _)| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Schrodinger<'a> {
    terms: HamiltonianTerms,
    params: &'a ModelParams,
    evals: usize,
}

impl Schrodinger<'_> {
    /// `−i H(t) ψ`.
    fn rhs(&mut self, t: f64, psi: &DVector<C64>) -> Result<DVector<C64>> {
        self.evals += 1;
        let c = self.params.evaluate(t)?;
        let mut out = self.terms.apply(c.omega, c.omega0, c.g, psi);
        out.iter_mut().for_each(|z| *z = C64::new(z.im, -z.re));
        Ok(out)
    }
}

fn axpy(y: &DVector<C64>, h: f64, terms: &[(f64, &DVector<C64>)]) -> DVector<C64> {
    let mut out = y.clone();
    for &(a, k) in terms {
        if a != 0.0 {
            out.axpy(C64::from(h * a), k, C64::new(1.0, 0.0));
        }
    }
    out
}

struct Stepper {
    h: f64,
    stats: OracleStats,
}

impl Stepper {
    /// Advances `(t, y, f)` to exactly `target`.
    fn advance(
        &mut self,
        sys: &mut Schrodinger<'_>,
        t: &mut f64,
        y: &mut DVector<C64>,
        f: &mut DVector<C64>,
        target: f64,
        opts: &OracleOptions,
    ) -> Result<()> {
        let dir = (target - *t).signum();
        while (target - *t) * dir > 0.0 {
            if self.stats.accepted >= opts.max_steps {
                return Err(Error::StepBudget {
                    t: *t,
                    max_steps: opts.max_steps,
                });
            }
            let remaining = (target - *t).abs();
            let mut h = self.h.min(remaining);
            // avoid a sliver of a step right before the target
            if remaining - h < 1e-3 * h {
                h = remaining;
            }
            if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: *t, h });
            }
            let hs = h * dir;
            let k1 = f.clone();
            let k2 = sys.rhs(*t + C2 * hs, &axpy(y, hs, &[(A21, &k1)]))?;
            let k3 = sys.rhs(*t + C3 * hs, &axpy(y, hs, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = sys.rhs(
                *t + C4 * hs,
                &axpy(y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            )?;
            let k5 = sys.rhs(
                *t + C5 * hs,
                &axpy(y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = sys.rhs(
                *t + hs,
                &axpy(
                    y,
                    hs,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            )?;
            let y_new = axpy(
                y,
                hs,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let t_new = if h == remaining { target } else { *t + hs };
            let k7 = sys.rhs(t_new, &y_new)?;

            let mut acc = 0.0;
            for i in 0..y.len() {
                let e =
                    (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                        * h;
                let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                acc += (e.norm() / scale).powi(2);
            }
            let err = (acc / y.len() as f64).sqrt();

            if err <= 1.0 {
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // a step truncated to hit the target says nothing about the
                // natural step size
                if h == self.h || factor < 1.0 {
                    self.h = h * factor;
                }
                *t = t_new;
                *y = y_new;
                *f = k7;
                self.stats.accepted += 1;
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).max(0.2);
                self.stats.rejected += 1;
            }
        }
        Ok(())
    }
}

/// Propagates `initial` through the sample times `times` (first entry is the
/// initial time; monotone in either direction).
pub fn propagate(
    initial: &DVector<C64>,
    times: &[f64],
    params: &ModelParams,
    space: FockSpace,
    opts: &OracleOptions,
) -> Result<PropagationResult> {
    if space.k() != params.k() {
        return Err(Error::Config(format!(
            "space has k = {} but parameters have k = {}",
            space.k(),
            params.k()
        )));
    }
    if initial.len() != space.dim() {
        return Err(Error::Config(format!(
            "initial state has dimension {} but the space has {}",
            initial.len(),
            space.dim()
        )));
    }
    let Some(&t0) = times.first() else {
        return Err(Error::Config("no sample times".into()));
    };
    let forward = times.last().is_none_or(|&l| l >= t0);
    if times
        .windows(2)
        .any(|w| if forward { w[1] < w[0] } else { w[1] > w[0] })
    {
        return Err(Error::Config("sample times must be monotone".into()));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }
    let norm0 = initial.norm();
    if (norm0 - 1.0).abs() > opts.norm_tol {
        return Err(Error::Normalization(format!(
            "initial state has norm {norm0}"
        )));
    }
    let mask = reachable_support(space, initial);
    let ceiling = space.cutoff() - 1 - space.guard();
    if let Some(i) = (0..space.dim()).find(|&i| mask[i] && space.photons(i) > ceiling) {
        return Err(Error::Truncation(format!(
            "initial state reaches photon level {} but only levels up to {ceiling} \
             keep {} guard levels below the cutoff {}",
            space.photons(i),
            space.guard(),
            space.cutoff()
        )));
    }
    let (first, last) = (t0, *times.last().unwrap());
    params.validate_window(first, last)?;

    let n_prime = build_generators(space).n_prime;
    let expect = |psi: &DVector<C64>| n_prime.expectation(psi).re;
    let n_prime0 = expect(initial);

    let mut sys = Schrodinger {
        terms: HamiltonianTerms::new(space),
        params,
        evals: 0,
    };
    let mut t = t0;
    let mut y = initial.clone();
    let mut f = sys.rhs(t, &y)?;
    let span = (last - first).abs();
    let mut stepper = Stepper {
        h: if span > 0.0 {
            (1e-3 * span).min(1e-2)
        } else {
            1e-2
        },
        stats: OracleStats::default(),
    };

    let mut result = PropagationResult {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        norm_drift: 0.0,
        n_prime_drift: 0.0,
        leakage: 0.0,
        stats: OracleStats::default(),
    };
    for &target in times {
        stepper.advance(&mut sys, &mut t, &mut y, &mut f, target, opts)?;
        result.norm_drift = result.norm_drift.max((y.norm() - 1.0).abs());
        result.n_prime_drift = result.n_prime_drift.max((expect(&y) - n_prime0).abs());
        result.leakage = result.leakage.max(leakage(&y, &mask));
        result.times.push(target);
        result.states.push(y.clone());
    }
    result.stats = OracleStats {
        rhs_evals: sys.evals,
        ..stepper.stats
    };

    if result.norm_drift > opts.norm_tol {
        return Err(Error::RejectedRun(format!(
            "norm drift {:e} exceeds {:e}",
            result.norm_drift, opts.norm_tol
        )));
    }
    if result.leakage > opts.leakage_tol {
        return Err(Error::RejectedRun(format!(
            "leakage out of the initial blocks {:e} exceeds {:e}",
            result.leakage, opts.leakage_tol
        )));
    }
    Ok(result)
}

/// `|⟨ψ₁|ψ₂⟩|`, clamped to `[0, 1]`.
pub fn fidelity(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    a.dotc(b).norm().clamp(0.0, 1.0)
}

/// `max_t |⟨ψ(t)|O(t)|ψ(t)⟩ − ⟨ψ(t0)|O(t0)|ψ(t0)⟩|` with `O(t)` rebuilt at
/// every sample.
pub fn invariant_expectation_drift<F>(result: &PropagationResult, mut op_at: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<Operator>,
{
    let mut reference = None;
    let mut worst = 0.0_f64;
    for (t, psi) in result.times.iter().zip(&result.states) {
        let value = op_at(*t)?.expectation(psi).re;
        let r = *reference.get_or_insert(value);
        worst = worst.max((value - r).abs());
    }
    Ok(worst)
}

/// [`invariant_expectation_drift`] for a time-independent operator.
pub fn constant_expectation_drift(result: &PropagationResult, op: &Operator) -> f64 {
    invariant_expectation_drift(result, |_| Ok(op.clone())).expect("infallible")
}

/// Uniform grid of `samples + 1` times from `start` to `end`.
pub fn uniform_times(start: f64, end: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                end
            } else {
                start + (end - start) * i as f64 / n as f64
            }
        })
        .collect()
}
