//! Adaptive DOP853 integration of small real systems with a seventh-order
//! continuous extension on every accepted step.
//!
//! Integration runs forward in time only. The right-hand side is fallible so
//! that domain errors (singular points) abort the run with their own error.

mod tableau;

use crate::{Error, Result};
use tableau::{A, B, C, D, E3, E5, STAGES, STAGES_EXTENDED};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dop853Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Dop853Options {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Interpolating polynomial for one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; N],
    coeffs: [[f64; N]; 7],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolated value and time derivative at `t`.
    pub fn eval(&self, t: f64) -> ([f64; N], [f64; N]) {
        let x = (t - self.t0) / self.h;
        let mut val = [0.0; N];
        let mut der = [0.0; N];
        for (i, f) in self.coeffs.iter().rev().enumerate() {
            for j in 0..N {
                val[j] += f[j];
                if i % 2 == 0 {
                    der[j] = der[j] * x + val[j];
                    val[j] *= x;
                } else {
                    der[j] = der[j] * (1.0 - x) - val[j];
                    val[j] *= 1.0 - x;
                }
            }
        }
        for j in 0..N {
            val[j] += self.y0[j];
            der[j] /= self.h;
        }
        (val, der)
    }

    /// Adds a constant offset to the interpolant.
    pub fn shift(&mut self, offset: &[f64; N]) {
        for (y, d) in self.y0.iter_mut().zip(offset) {
            *y += d;
        }
    }
}

/// All accepted steps of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dop853Solution<const N: usize> {
    pub steps: Vec<DenseStep<N>>,
    pub stats: SolverStats,
}

impl<const N: usize> Dop853Solution<N> {
    pub fn start(&self) -> f64 {
        self.steps.first().map(|s| s.t0).unwrap_or(f64::NAN)
    }

    pub fn end(&self) -> f64 {
        self.steps.last().map(|s| s.t1()).unwrap_or(f64::NAN)
    }

    /// Index of the step containing `t` (closed on both ends).
    pub fn locate(&self, t: f64) -> Result<usize> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let i = self.steps.partition_point(|s| s.t1() < t);
        Ok(i.min(self.steps.len() - 1))
    }

    pub fn eval(&self, t: f64) -> Result<([f64; N], [f64; N])> {
        let i = self.locate(t)?;
        Ok(self.steps[i].eval(t))
    }
}

fn rms_norm<const N: usize>(v: &[f64; N], scale: &[f64; N]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(a, b)| (a / b).powi(2)).sum();
    (s / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(
    f: &mut F,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    opts: &Dop853Options,
) -> Result<f64>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let scale: [f64; N] = std::array::from_fn(|j| opts.atol + y0[j].abs() * opts.rtol);
    let d0 = rms_norm(y0, &scale);
    let d1 = rms_norm(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: [f64; N] = std::array::from_fn(|j| y0[j] + h0 * f0[j]);
    let f1 = f(t0 + h0, &y1)?;
    let diff: [f64; N] = std::array::from_fn(|j| f1[j] - f0[j]);
    let d2 = rms_norm(&diff, &scale) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    Ok((100.0 * h0).min(h1).min(opts.max_step))
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end > t0`.
pub fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &Dop853Options,
) -> Result<Dop853Solution<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if !(t_end > t0) {
        return Err(Error::Config(format!(
            "integration window [{t0}, {t_end}] must have positive length"
        )));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }

    let mut stats = SolverStats::default();
    let mut steps = Vec::new();
    let mut t = t0;
    let mut y = y0;
    let mut fy = f(t, &y)?;
    stats.rhs_evals += 1;
    let mut h_abs = initial_step(&mut f, t, &y, &fy, opts)?;
    stats.rhs_evals += 1;

    let mut k = [[0.0; N]; STAGES_EXTENDED];

    while t < t_end {
        if stats.accepted >= opts.max_steps {
            return Err(Error::StepBudget {
                t,
                max_steps: opts.max_steps,
            });
        }
        let min_step = 10.0 * (next_up(t) - t);
        h_abs = h_abs.min(opts.max_step);

        let mut rejected = false;
        loop {
            if h_abs < min_step {
                return Err(Error::StepSizeUnderflow { t, h: h_abs });
            }
            let mut t_new = t + h_abs;
            if t_new > t_end {
                t_new = t_end;
            }
            let h = t_new - t;

            k[0] = fy;
            for s in 1..STAGES {
                let mut ys = y;
                for (r, kr) in k.iter().enumerate().take(s) {
                    let a = A[s][r];
                    if a != 0.0 {
                        for j in 0..N {
                            ys[j] += h * a * kr[j];
                        }
                    }
                }
                k[s] = f(t + C[s] * h, &ys)?;
            }
            let mut y_new = y;
            for (s, ks) in k.iter().enumerate().take(STAGES) {
                for j in 0..N {
                    y_new[j] += h * B[s] * ks[j];
                }
            }
            let f_new = f(t_new, &y_new)?;
            k[STAGES] = f_new;
            stats.rhs_evals += STAGES;

            let scale: [f64; N] =
                std::array::from_fn(|j| opts.atol + y[j].abs().max(y_new[j].abs()) * opts.rtol);
            let mut e5 = [0.0; N];
            let mut e3 = [0.0; N];
            for s in 0..=STAGES {
                for j in 0..N {
                    e5[j] += k[s][j] * E5[s];
                    e3[j] += k[s][j] * E3[s];
                }
            }
            let n5: f64 = (0..N).map(|j| (e5[j] / scale[j]).powi(2)).sum();
            let n3: f64 = (0..N).map(|j| (e3[j] / scale[j]).powi(2)).sum();
            let error_norm = if n5 == 0.0 && n3 == 0.0 {
                0.0
            } else {
                h * n5 / ((n5 + 0.01 * n3) * N as f64).sqrt()
            };

            if error_norm < 1.0 {
                let mut factor = if error_norm == 0.0 {
                    MAX_FACTOR
                } else {
                    MAX_FACTOR.min(SAFETY * error_norm.powf(ERROR_EXPONENT))
                };
                if rejected {
                    factor = factor.min(1.0);
                }

                // continuous extension
                for s in (STAGES + 1)..STAGES_EXTENDED {
                    let mut ys = y;
                    for (r, kr) in k.iter().enumerate().take(s) {
                        let a = A[s][r];
                        if a != 0.0 {
                            for j in 0..N {
                                ys[j] += h * a * kr[j];
                            }
                        }
                    }
                    k[s] = f(t + C[s] * h, &ys)?;
                }
                stats.rhs_evals += STAGES_EXTENDED - STAGES - 1;

                let mut coeffs = [[0.0; N]; 7];
                for j in 0..N {
                    let dy = y_new[j] - y[j];
                    coeffs[0][j] = dy;
                    coeffs[1][j] = h * fy[j] - dy;
                    coeffs[2][j] = 2.0 * dy - h * (f_new[j] + fy[j]);
                }
                for (row, d) in D.iter().enumerate() {
                    for j in 0..N {
                        coeffs[3 + row][j] = h * d
                            .iter()
                            .zip(k.iter())
                            .map(|(dc, ks)| dc * ks[j])
                            .sum::<f64>();
                    }
                }
                steps.push(DenseStep {
                    t0: t,
                    h,
                    y0: y,
                    coeffs,
                });

                t = t_new;
                y = y_new;
                fy = f_new;
                h_abs *= factor;
                stats.accepted += 1;
                break;
            }
            h_abs *= MIN_FACTOR.max(SAFETY * error_norm.powf(ERROR_EXPONENT));
            rejected = true;
            stats.rejected += 1;
        }
    }

    Ok(Dop853Solution { steps, stats })
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_accuracy() {
        let opts = Dop853Options::new(1e-12, 1e-14);
        let sol = integrate(
            |_, y: &[f64; 2]| Ok([y[1], -y[0]]),
            0.0,
            [1.0, 0.0],
            10.0,
            &opts,
        )
        .unwrap();
        assert_eq!(sol.end(), 10.0);
        let last = sol.steps.last().unwrap();
        let (y, dy) = last.eval(10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((y[1] + 10f64.sin()).abs() < 1e-10);
        assert!((dy[0] - y[1]).abs() < 1e-10);

        // dense output between nodes
        for i in 0..200 {
            let t = 0.05 * i as f64 + 0.013;
            let (y, dy) = sol.eval(t).unwrap();
            assert!((y[0] - t.cos()).abs() < 1e-10, "t = {t}");
            assert!((dy[0] + t.sin()).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn dense_output_tracks_growth() {
        let f = |_: f64, y: &[f64; 1]| Ok([y[0]]);
        let sol = integrate(f, 0.0, [1.0], 5.0, &Dop853Options::new(1e-11, 1e-13)).unwrap();
        for s in &sol.steps {
            for frac in [0.1, 0.37, 0.5, 0.9] {
                let t = s.t0 + frac * s.h;
                let (y, dy) = s.eval(t);
                assert!((y[0] / t.exp() - 1.0).abs() < 1e-9, "t = {t}");
                assert!((dy[0] / t.exp() - 1.0).abs() < 1e-8, "t = {t}");
            }
        }
    }

    #[test]
    fn rhs_errors_propagate() {
        let r = integrate(
            |t, y: &[f64; 1]| {
                if t > 0.5 {
                    Err(Error::Singularity { t, sin_theta: 0.0 })
                } else {
                    Ok([y[0]])
                }
            },
            0.0,
            [1.0],
            1.0,
            &Dop853Options::new(1e-8, 1e-10),
        );
        assert!(matches!(r, Err(Error::Singularity { .. })));
    }

    #[test]
    fn blow_up_underflows() {
        let r = integrate(
            |_, y: &[f64; 1]| Ok([y[0] * y[0]]),
            0.0,
            [1.0],
            2.0,
            &Dop853Options::new(1e-8, 1e-10),
        );
        assert!(matches!(
            r,
            Err(Error::StepSizeUnderflow { .. }) | Err(Error::StepBudget { .. })
        ));
    }
}
