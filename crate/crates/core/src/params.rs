//! Time-dependent model parameters `ω(t)`, `ω₀(t)` and `g(t) = |g|(t) e^{i arg g(t)}`.

use crate::{Error, Result, C64};

/// Scalar function of time.
///
/// The first five variants are the user-facing kinds; `Polynomial`, `Sum` and
/// `Scaled` appear when profiles are derived from others (antiderivatives,
/// adiabatic constraints).
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    Constant(f64),
    /// `offset + slope·t`
    Linear {
        offset: f64,
        slope: f64,
    },
    /// `offset + amplitude·sin(frequency·t + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// `offset + amplitude·sin(frequency·t + rate·t²/2 + phase)`; the
    /// instantaneous frequency ramps linearly as `frequency + rate·t`.
    Chirp {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        rate: f64,
        phase: f64,
    },
    /// Piecewise-linear interpolation through strictly increasing knots.
    Table(Vec<(f64, f64)>),
    /// `Σ c_j t^j`
    Polynomial(Vec<f64>),
    Sum(Vec<TimeProfile>),
    Scaled(f64, Box<TimeProfile>),
}

impl TimeProfile {
    pub fn constant(value: f64) -> Self {
        Self::Constant(value)
    }

    pub fn linear(offset: f64, slope: f64) -> Self {
        Self::Linear { offset, slope }
    }

    pub fn sinusoid(offset: f64, amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self::Sinusoid {
            offset,
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn chirp(offset: f64, amplitude: f64, frequency: f64, rate: f64, phase: f64) -> Self {
        Self::Chirp {
            offset,
            amplitude,
            frequency,
            rate,
            phase,
        }
    }

    /// Knots must have strictly increasing times; at least two are needed.
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(
                "table profile needs at least two points".into(),
            ));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Config("table profile has non-finite entries".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config(
                "table profile times must be strictly increasing".into(),
            ));
        }
        Ok(Self::Table(points))
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled(factor, Box::new(self))
    }

    pub fn plus(self, other: TimeProfile) -> Self {
        Self::Sum(vec![self, other])
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let v = match self {
            Self::Constant(c) => *c,
            Self::Linear { offset, slope } => offset + slope * t,
            Self::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (frequency * t + phase).sin(),
            Self::Chirp {
                offset,
                amplitude,
                frequency,
                rate,
                phase,
            } => offset + amplitude * (frequency * t + 0.5 * rate * t * t + phase).sin(),
            Self::Table(points) => interpolate(points, t)?,
            Self::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &cj| acc * t + cj),
            Self::Sum(parts) => {
                let mut s = 0.0;
                for p in parts {
                    s += p.evaluate(t)?;
                }
                s
            }
            Self::Scaled(f, p) => f * p.evaluate(t)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                t,
                reason: "profile value is not finite".into(),
            })
        }
    }

    /// Time interval on which the profile is defined, if bounded.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Self::Table(p) => Some((p[0].0, p[p.len() - 1].0)),
            Self::Sum(parts) => parts
                .iter()
                .filter_map(|p| p.domain())
                .reduce(|a, b| (a.0.max(b.0), a.1.min(b.1))),
            Self::Scaled(_, p) => p.domain(),
            _ => None,
        }
    }

    /// `∫₀ᵗ f(s) ds` as a profile, for the kinds that have a closed form.
    pub fn antiderivative(&self) -> Result<TimeProfile> {
        Ok(match self {
            Self::Constant(c) => Self::Polynomial(vec![0.0, *c]),
            Self::Linear { offset, slope } => Self::Polynomial(vec![0.0, *offset, slope / 2.0]),
            Self::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                if *frequency == 0.0 {
                    Self::Polynomial(vec![0.0, offset + amplitude * phase.sin()])
                } else {
                    // −(A/Ω) cos(Ωt + δ) + (A/Ω) cos δ
                    let r = amplitude / frequency;
                    Self::Sum(vec![
                        Self::Polynomial(vec![r * phase.cos(), *offset]),
                        Self::sinusoid(0.0, -r, *frequency, phase + std::f64::consts::FRAC_PI_2),
                    ])
                }
            }
            Self::Polynomial(c) => {
                let mut out = vec![0.0];
                out.extend(c.iter().enumerate().map(|(j, cj)| cj / (j + 1) as f64));
                Self::Polynomial(out)
            }
            Self::Sum(parts) => Self::Sum(
                parts
                    .iter()
                    .map(|p| p.antiderivative())
                    .collect::<Result<Vec<_>>>()?,
            ),
            Self::Scaled(f, p) => Self::Scaled(*f, Box::new(p.antiderivative()?)),
            Self::Chirp { .. } | Self::Table(_) => {
                return Err(Error::Config(
                    "closed-form antiderivative unavailable for chirp and table profiles".into(),
                ))
            }
        })
    }
}

fn interpolate(points: &[(f64, f64)], t: f64) -> Result<f64> {
    let (start, end) = (points[0].0, points[points.len() - 1].0);
    if !(t >= start && t <= end) {
        return Err(Error::OutOfRange { t, start, end });
    }
    let i = points.partition_point(|p| p.0 <= t);
    if i >= points.len() {
        return Ok(points[points.len() - 1].1);
    }
    let (t0, v0) = points[i - 1];
    let (t1, v1) = points[i];
    Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
}

/// Parameter values at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    pub omega: f64,
    pub omega0: f64,
    pub g: C64,
}

/// `ω(t)`, `ω₀(t)`, `g(t)` and the photon number `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub omega: TimeProfile,
    pub omega0: TimeProfile,
    pub g_mod: TimeProfile,
    pub g_phase: TimeProfile,
    k: usize,
}

impl ModelParams {
    pub fn new(
        omega: TimeProfile,
        omega0: TimeProfile,
        g_mod: TimeProfile,
        g_phase: TimeProfile,
        k: usize,
    ) -> Self {
        assert!(k > 0, "k must be positive");
        Self {
            omega,
            omega0,
            g_mod,
            g_phase,
            k,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn evaluate(&self, t: f64) -> Result<Couplings> {
        let modulus = self.g_mod.evaluate(t)?;
        if modulus < 0.0 {
            return Err(Error::Evaluation {
                t,
                reason: format!("|g| = {modulus} is negative"),
            });
        }
        Ok(Couplings {
            omega: self.omega.evaluate(t)?,
            omega0: self.omega0.evaluate(t)?,
            g: C64::from_polar(modulus, self.g_phase.evaluate(t)?),
        })
    }

    /// `kω(t) − ω₀(t)`.
    pub fn detuning(&self, t: f64) -> Result<f64> {
        let c = self.evaluate(t)?;
        Ok(self.k as f64 * c.omega - c.omega0)
    }

    /// Checks that every profile is defined on `[start, end]` and finite on
    /// a uniform probe grid.
    pub fn validate_window(&self, start: f64, end: f64) -> Result<()> {
        let (lo, hi) = (start.min(end), start.max(end));
        for p in [&self.omega, &self.omega0, &self.g_mod, &self.g_phase] {
            if let Some((a, b)) = p.domain() {
                if lo < a || hi > b {
                    return Err(Error::OutOfRange {
                        t: if lo < a { lo } else { hi },
                        start: a,
                        end: b,
                    });
                }
            }
        }
        const PROBES: usize = 256;
        for i in 0..=PROBES {
            self.evaluate(lo + (hi - lo) * i as f64 / PROBES as f64)?;
        }
        Ok(())
    }
}
