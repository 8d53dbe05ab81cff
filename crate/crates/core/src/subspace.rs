//! The two-dimensional sub-Hilbert-spaces `span{|m⟩⊗e, |m+k⟩⊗g}` on which
//! `N′` acts as the integer `λ_m = (m+k)!/m!`.

use nalgebra::{DVector, Matrix2, Vector2};

use crate::algebra::{build_generators, Atom, FockSpace, Operator};
use crate::{Error, Result, C64};

/// `Π_{j=1..k} (m+j)`, exact. Fails on `u128` overflow.
pub fn falling_product(m: usize, k: usize) -> Result<u128> {
    (1..=k).try_fold(1u128, |acc, j| {
        acc.checked_mul((m + j) as u128)
            .ok_or_else(|| Error::Overflow(format!("({m}+{k})!/{m}!")))
    })
}

/// `λ_m = (m+k)!/m!` by iterated integer product.
///
/// Exact for every `(m, k)` whose value fits in `u128`; for `k ≤ 3` that is
/// any `m` below roughly `7·10^12`.
pub fn lambda_value(m: usize, k: usize) -> Result<u128> {
    if k == 0 {
        return Err(Error::Config("k must be a positive integer".into()));
    }
    falling_product(m, k)
}

/// One conserved block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubspaceBlock {
    m: usize,
    k: usize,
    lambda: u128,
    upper: usize,
    lower: usize,
}

impl SubspaceBlock {
    /// Rejects blocks whose ground component `|m+k⟩` falls outside the
    /// truncated space.
    pub fn new(space: FockSpace, m: usize) -> Result<Self> {
        let k = space.k();
        if m + k > space.cutoff() - 1 {
            return Err(Error::Config(format!(
                "block m = {m} needs photon level {} but cutoff is {}",
                m + k,
                space.cutoff()
            )));
        }
        Ok(Self {
            m,
            k,
            lambda: lambda_value(m, k)?,
            upper: space.index(Atom::Excited, m),
            lower: space.index(Atom::Ground, m + k),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda(&self) -> u128 {
        self.lambda
    }

    pub fn lambda_f64(&self) -> f64 {
        self.lambda as f64
    }

    pub fn sqrt_lambda(&self) -> f64 {
        self.lambda_f64().sqrt()
    }

    /// Flat index of `(|m⟩, excited)`.
    pub fn basis_upper(&self) -> usize {
        self.upper
    }

    /// Flat index of `(|m+k⟩, ground)`.
    pub fn basis_lower(&self) -> usize {
        self.lower
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.upper >= dim || self.lower >= dim {
            return Err(Error::Config(format!(
                "block m = {} does not fit a space of dimension {dim}",
                self.m
            )));
        }
        Ok(())
    }
}

/// Matrix of `op` restricted to the block, ordered `(upper, lower)`.
pub fn project_block(op: &Operator, block: &SubspaceBlock) -> Result<Matrix2<C64>> {
    block.check(op.space().dim())?;
    let idx = [block.upper, block.lower];
    Ok(Matrix2::from_fn(|r, c| op.entry(idx[r], idx[c])))
}

/// Places a two-component vector into the full space.
pub fn embed_state(space: FockSpace, block: &SubspaceBlock, v: &Vector2<C64>) -> DVector<C64> {
    let mut out = space.zero_state();
    out[block.upper] = v[0];
    out[block.lower] = v[1];
    out
}

/// Components of a full-space vector along the block basis.
pub fn block_components(block: &SubspaceBlock, state: &DVector<C64>) -> Vector2<C64> {
    Vector2::new(state[block.upper], state[block.lower])
}

/// Embeds a block matrix into the full space, zero elsewhere.
pub fn embed_operator(space: FockSpace, block: &SubspaceBlock, m: &Matrix2<C64>) -> Operator {
    let mut out = nalgebra::DMatrix::zeros(space.dim(), space.dim());
    let idx = [block.upper, block.lower];
    for r in 0..2 {
        for c in 0..2 {
            out[(idx[r], idx[c])] = m[(r, c)];
        }
    }
    Operator::from_matrix(space, out).expect("dimension matches by construction")
}

/// Block-level matrices of the generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGenerators {
    pub n: Matrix2<C64>,
    pub n_prime: Matrix2<C64>,
    pub q: Matrix2<C64>,
    pub q_dag: Matrix2<C64>,
    pub sigma_z: Matrix2<C64>,
}

pub fn block_generators(space: FockSpace, block: &SubspaceBlock) -> Result<BlockGenerators> {
    let g = build_generators(space);
    Ok(BlockGenerators {
        n: project_block(&g.n, block)?,
        n_prime: project_block(&g.n_prime, block)?,
        q: project_block(&g.q, block)?,
        q_dag: project_block(&g.q_dag, block)?,
        sigma_z: project_block(&g.sigma_z, block)?,
    })
}

/// Outcome of [`verify_block_closure`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockClosureReport {
    /// Largest norm of `H` applied to a block basis vector, projected out of
    /// the block, over all supplied Hamiltonians.
    pub leakage: f64,
    /// `max |[Q†,Q] − λ σz|` at block level.
    pub commutator: f64,
    /// `max |{Q†,Q} − λ|`.
    pub anticommutator: f64,
    /// `max |(Q†−Q)² + λ|`.
    pub square: f64,
    /// `max |N′ − λ|`.
    pub eigenvalue: f64,
    /// `max(1, λ)`. The algebraic residuals are judged in these units since
    /// `√λ·√λ` rounds at the level of `λ·ε`.
    pub scale: f64,
}

impl BlockClosureReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.leakage,
            self.commutator,
            self.anticommutator,
            self.square,
            self.eigenvalue,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest algebraic residual in units of `scale`, or the leakage if that
    /// is larger.
    pub fn relative_residual(&self) -> f64 {
        let algebraic = [
            self.commutator,
            self.anticommutator,
            self.square,
            self.eigenvalue,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        (algebraic / self.scale).max(self.leakage)
    }
}

/// Confirms that every Hamiltonian maps the block into itself and that the
/// quasialgebra with `N′ → λ_m` holds inside it.
pub fn verify_block_closure(
    space: FockSpace,
    block: &SubspaceBlock,
    hamiltonians: &[Operator],
    tol: f64,
) -> Result<BlockClosureReport> {
    let mut leakage = 0.0_f64;
    for h in hamiltonians {
        block.check(h.space().dim())?;
        for col in [block.upper, block.lower] {
            let outside: f64 = (0..h.space().dim())
                .filter(|&r| r != block.upper && r != block.lower)
                .map(|r| h.entry(r, col).norm_sqr())
                .sum();
            leakage = leakage.max(outside.sqrt());
        }
    }

    let g = block_generators(space, block)?;
    let lambda = C64::new(block.lambda_f64(), 0.0);
    let id = Matrix2::<C64>::identity();
    let max_abs = |m: Matrix2<C64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = g.q_dag - g.q;
    let report = BlockClosureReport {
        leakage,
        commutator: max_abs(g.q_dag * g.q - g.q * g.q_dag - g.sigma_z * lambda),
        anticommutator: max_abs(g.q_dag * g.q + g.q * g.q_dag - id * lambda),
        square: max_abs(diff * diff + id * lambda),
        eigenvalue: max_abs(g.n_prime - id * lambda),
        scale: block.lambda_f64().max(1.0),
    };

    // leakage is a plain sum of Hamiltonian entries that must vanish outright
    let checks = [
        ("leakage", report.leakage, 1.0),
        ("[Q†,Q] = λσz", report.commutator, report.scale),
        ("{Q†,Q} = λ", report.anticommutator, report.scale),
        ("(Q†-Q)^2 = -λ", report.square, report.scale),
        ("N′ = λ", report.eigenvalue, report.scale),
    ];
    for (what, residual, scale) in checks {
        if !(residual <= tol * scale) {
            return Err(Error::BlockClosure {
                m: block.m,
                what: what.into(),
                residual,
                tol,
                scale,
            });
        }
    }
    Ok(report)
}
