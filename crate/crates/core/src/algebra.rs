//! Operators on the truncated two-level ⊗ Fock space and the superalgebra
//! they close.
//!
//! Basis convention: atom-major. The flat index of `(atom, n)` is `n` for the
//! excited level and `cutoff + n` for the ground level, so the upper spinor
//! component is the excited state and `σ₋` sits in the lower-left block.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::params::ModelParams;
use crate::subspace::falling_product;
use crate::{Error, Result, C64};

/// Atomic level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Atom {
    Excited,
    Ground,
}

/// Truncation of the field mode together with the photon number per
/// transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    cutoff: usize,
    k: usize,
    guard: usize,
}

impl FockSpace {
    /// `cutoff` Fock levels (photon numbers `0..cutoff`), `k` photons per
    /// atomic transition, `guard` levels below the cutoff excluded from
    /// identity checks.
    pub fn new(cutoff: usize, k: usize, guard: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be a positive integer".into()));
        }
        if guard < k {
            return Err(Error::Config(format!(
                "guard = {guard} must be at least k = {k}"
            )));
        }
        if cutoff < 2 * k + guard + 1 {
            return Err(Error::Config(format!(
                "cutoff = {cutoff} too small: need at least 2k + guard + 1 = {}",
                2 * k + guard + 1
            )));
        }
        Ok(Self { cutoff, k, guard })
    }

    /// Same as [`FockSpace::new`] with `guard = k`.
    pub fn with_default_guard(cutoff: usize, k: usize) -> Result<Self> {
        Self::new(cutoff, k, k)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    pub fn dim(&self) -> usize {
        2 * self.cutoff
    }

    /// Flat index of `(atom, n)`.
    pub fn index(&self, atom: Atom, n: usize) -> usize {
        debug_assert!(n < self.cutoff);
        match atom {
            Atom::Excited => n,
            Atom::Ground => self.cutoff + n,
        }
    }

    /// Inverse of [`FockSpace::index`].
    pub fn locate(&self, index: usize) -> (Atom, usize) {
        debug_assert!(index < self.dim());
        if index < self.cutoff {
            (Atom::Excited, index)
        } else {
            (Atom::Ground, index - self.cutoff)
        }
    }

    /// Photon number of a flat index.
    pub fn photons(&self, index: usize) -> usize {
        self.locate(index).1
    }

    /// Highest photon level that survives a guard band of `guard` levels.
    pub fn highest_checked_level(&self, guard: usize) -> usize {
        self.cutoff - 1 - guard
    }

    pub fn zero_state(&self) -> DVector<C64> {
        DVector::zeros(self.dim())
    }

    pub fn basis_state(&self, atom: Atom, n: usize) -> DVector<C64> {
        let mut v = self.zero_state();
        v[self.index(atom, n)] = C64::new(1.0, 0.0);
        v
    }
}

/// Dense operator on a [`FockSpace`].
#[derive(Clone, PartialEq)]
pub struct Operator {
    space: FockSpace,
    matrix: DMatrix<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator")
            .field("space", &self.space)
            .field("dim", &self.matrix.nrows())
            .finish()
    }
}

impl Operator {
    pub fn zeros(space: FockSpace) -> Self {
        Self {
            space,
            matrix: DMatrix::zeros(space.dim(), space.dim()),
        }
    }

    pub fn identity(space: FockSpace) -> Self {
        Self {
            space,
            matrix: DMatrix::identity(space.dim(), space.dim()),
        }
    }

    /// Wraps a matrix; its dimension must be `2·cutoff`.
    pub fn from_matrix(space: FockSpace, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::Config(format!(
                "matrix is {}x{}, space has dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                space.dim()
            )));
        }
        Ok(Self { space, matrix })
    }

    /// Diagonal operator with `f(atom, n)` on the diagonal.
    pub fn diagonal(space: FockSpace, f: impl Fn(Atom, usize) -> f64) -> Self {
        let mut op = Self::zeros(space);
        for i in 0..space.dim() {
            let (atom, n) = space.locate(i);
            op.matrix[(i, i)] = C64::new(f(atom, n), 0.0);
        }
        op
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            space: self.space,
            matrix: &self.matrix * factor,
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        &(self * other) + &(other * self)
    }

    pub fn apply(&self, state: &DVector<C64>) -> DVector<C64> {
        &self.matrix * state
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, state: &DVector<C64>) -> C64 {
        state.dotc(&(&self.matrix * state))
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry modulus among rows and columns whose photon number is
    /// at most `cutoff − 1 − guard`.
    pub fn guarded_max_abs(&self, guard: usize) -> f64 {
        let top = self.space.highest_checked_level(guard);
        let keep: Vec<usize> = (0..self.space.dim())
            .filter(|&i| self.space.photons(i) <= top)
            .collect();
        let mut worst = 0.0_f64;
        for &r in &keep {
            for &c in &keep {
                worst = worst.max(self.matrix[(r, c)].norm());
            }
        }
        worst
    }

    /// `max |A − A†|`.
    pub fn hermiticity_residual(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator {
            space: self.space,
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator {
            space: self.space,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator {
            space: self.space,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

/// Field annihilation and creation operators `(a, a†)`, acting identically on
/// both atomic levels. `a†|cutoff−1⟩ = 0`.
pub fn build_ladder(space: FockSpace) -> (Operator, Operator) {
    let mut a = Operator::zeros(space);
    for atom in [Atom::Excited, Atom::Ground] {
        for n in 1..space.cutoff() {
            a.matrix[(space.index(atom, n - 1), space.index(atom, n))] =
                C64::new((n as f64).sqrt(), 0.0);
        }
    }
    let a_dag = a.adjoint();
    (a, a_dag)
}

/// The supersymmetric generators and atomic operators.
#[derive(Debug, Clone)]
pub struct Generators {
    /// `N = a†a + (k−1)/2 σz + 1/2`.
    pub n: Operator,
    /// `N′ = diag(a^k (a†)^k, (a†)^k a^k)`, built from exact integer products.
    pub n_prime: Operator,
    /// `Q = (a†)^k σ₋`.
    pub q: Operator,
    /// `Q† = a^k σ₊`.
    pub q_dag: Operator,
    pub sigma_z: Operator,
    pub sigma_plus: Operator,
    pub sigma_minus: Operator,
}

fn sigma_operators(space: FockSpace) -> (Operator, Operator, Operator) {
    let sigma_z = Operator::diagonal(space, |atom, _| match atom {
        Atom::Excited => 1.0,
        Atom::Ground => -1.0,
    });
    let mut sigma_plus = Operator::zeros(space);
    for n in 0..space.cutoff() {
        sigma_plus.matrix[(space.index(Atom::Excited, n), space.index(Atom::Ground, n))] =
            C64::new(1.0, 0.0);
    }
    let sigma_minus = sigma_plus.adjoint();
    (sigma_z, sigma_plus, sigma_minus)
}

fn power(op: &Operator, exponent: usize) -> Operator {
    (0..exponent).fold(Operator::identity(op.space()), |acc, _| &acc * op)
}

pub fn build_generators(space: FockSpace) -> Generators {
    let k = space.k();
    let (a, a_dag) = build_ladder(space);
    let (sigma_z, sigma_plus, sigma_minus) = sigma_operators(space);

    let number = &a_dag * &a;
    let n = &(&number + &sigma_z.scale_real((k as f64 - 1.0) / 2.0))
        + &Operator::identity(space).scale_real(0.5);

    let n_prime = Operator::diagonal(space, |atom, m| match atom {
        Atom::Excited => falling_product(m, k).map(|v| v as f64).unwrap_or(f64::NAN),
        Atom::Ground if m >= k => falling_product(m - k, k)
            .map(|v| v as f64)
            .unwrap_or(f64::NAN),
        Atom::Ground => 0.0,
    });

    let q = &power(&a_dag, k) * &sigma_minus;
    let q_dag = &power(&a, k) * &sigma_plus;

    Generators {
        n,
        n_prime,
        q,
        q_dag,
        sigma_z,
        sigma_plus,
        sigma_minus,
    }
}

/// Residual of one superalgebra identity on the guarded subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResidual {
    pub name: &'static str,
    /// Guard band actually applied.
    pub guard: usize,
    pub residual: f64,
}

/// Residuals of all superalgebra identities.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraReport {
    pub entries: Vec<IdentityResidual>,
    /// Largest `|N′|` entry on the checked levels, at least 1. Products of two
    /// supercharges carry rounding of order `scale·ε`, so residuals are judged
    /// in these units.
    pub scale: f64,
}

impl AlgebraReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    /// `max_residual / scale`.
    pub fn relative_residual(&self) -> f64 {
        self.max_residual() / self.scale
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.residual)
    }
}

/// Evaluates the ten superalgebra identities without judging them.
///
/// Identities with a single power of `Q` or `Q†` use the guard `max(guard, k)`;
/// those containing a product of two supercharges use `max(guard, 2k)`.
pub fn algebra_residuals(space: FockSpace) -> AlgebraReport {
    let gen = build_generators(space);
    let k = space.k();
    let single = space.guard().max(k);
    let double = space.guard().max(2 * k);
    let (q, qd, n, np, sz) = (&gen.q, &gen.q_dag, &gen.n, &gen.n_prime, &gen.sigma_z);

    let mut entries = Vec::with_capacity(10);
    let mut push = |name: &'static str, guard: usize, ops: &[Operator]| {
        let residual = ops
            .iter()
            .map(|op| op.guarded_max_abs(guard))
            .fold(0.0, f64::max);
        entries.push(IdentityResidual {
            name,
            guard,
            residual,
        });
    };

    push("Q^2 = (Q†)^2 = 0", double, &[q * q, qd * qd]);
    push("[Q†,Q] = N′σz", double, &[&qd.commutator(q) - &(np * sz)]);
    push("[N,N′] = 0", space.guard(), &[n.commutator(np)]);
    push("[N,Q] = Q", single, &[&n.commutator(q) - q]);
    push("[N,Q†] = -Q†", single, &[&n.commutator(qd) + qd]);
    push("{Q†,Q} = N′", double, &[&qd.anticommutator(q) - np]);
    push(
        "{Q,σz} = {Q†,σz} = 0",
        single,
        &[q.anticommutator(sz), qd.anticommutator(sz)],
    );
    push(
        "[Q,σz] = 2Q",
        single,
        &[&q.commutator(sz) - &q.scale_real(2.0)],
    );
    push(
        "[Q†,σz] = -2Q†",
        single,
        &[&qd.commutator(sz) + &qd.scale_real(2.0)],
    );
    let diff = qd - q;
    push("(Q†-Q)^2 = -N′", double, &[&(&diff * &diff) + np]);

    let scale = np.guarded_max_abs(double).max(1.0);
    AlgebraReport { entries, scale }
}

/// Checks every identity against `tol` in units of the report's scale,
/// failing with the offending names and their absolute residuals.
pub fn verify_algebra(space: FockSpace, tol: f64) -> Result<AlgebraReport> {
    let report = algebra_residuals(space);
    let failures: Vec<(String, f64)> = report
        .entries
        .iter()
        .filter(|e| !(e.residual / report.scale < tol))
        .map(|e| (e.name.to_string(), e.residual))
        .collect();
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(Error::AlgebraVerification {
            failures,
            tol,
            scale: report.scale,
        })
    }
}

/// The four time-independent pieces of the Hamiltonian, cached so that
/// `H(t)` can be assembled cheaply at every time.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    space: FockSpace,
    number: Operator,
    sigma_z_half: Operator,
    raise: Operator,
    lower: Operator,
    raise_entries: Vec<(usize, usize, C64)>,
}

impl HamiltonianTerms {
    pub fn new(space: FockSpace) -> Self {
        let gen = build_generators(space);
        let (a, a_dag) = build_ladder(space);
        let dim = space.dim();
        let raise_entries = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .filter(|&(r, c)| gen.q.matrix[(r, c)] != C64::new(0.0, 0.0))
            .map(|(r, c)| (r, c, gen.q.matrix[(r, c)]))
            .collect();
        Self {
            space,
            number: &a_dag * &a,
            sigma_z_half: gen.sigma_z.scale_real(0.5),
            raise: gen.q,
            lower: gen.q_dag,
            raise_entries,
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    /// `ω a†a + ω₀/2 σz + g (a†)^k σ₋ + g* a^k σ₊`.
    pub fn assemble(&self, omega: f64, omega0: f64, g: C64) -> Operator {
        let mut m = self.number.matrix.scale(omega);
        m += self.sigma_z_half.matrix.scale(omega0);
        m += &self.raise.matrix * g;
        m += &self.lower.matrix * g.conj();
        Operator {
            space: self.space,
            matrix: m,
        }
    }

    /// `H ψ` without assembling `H`.
    pub fn apply(&self, omega: f64, omega0: f64, g: C64, psi: &DVector<C64>) -> DVector<C64> {
        let dim = self.space.dim();
        let mut out = DVector::from_fn(dim, |i, _| {
            psi[i]
                * (self.number.matrix[(i, i)] * omega + self.sigma_z_half.matrix[(i, i)] * omega0)
        });
        for &(r, c, v) in &self.raise_entries {
            out[r] += g * v * psi[c];
            out[c] += (g * v).conj() * psi[r];
        }
        out
    }
}

fn check_k(space: FockSpace, params: &ModelParams) -> Result<()> {
    if space.k() != params.k() {
        return Err(Error::Config(format!(
            "space has k = {} but parameters have k = {}",
            space.k(),
            params.k()
        )));
    }
    Ok(())
}

/// `H(t)` in the rotating-wave form.
pub fn build_hamiltonian(space: FockSpace, params: &ModelParams, t: f64) -> Result<Operator> {
    check_k(space, params)?;
    let c = params.evaluate(t)?;
    Ok(HamiltonianTerms::new(space).assemble(c.omega, c.omega0, c.g))
}

/// `H(t)` in the supersymmetric form
/// `ωN + (ω₀ − (k−1)ω)/2 σz + gQ + g*Q† − ω/2`.
pub fn build_hamiltonian_susy(space: FockSpace, params: &ModelParams, t: f64) -> Result<Operator> {
    check_k(space, params)?;
    let c = params.evaluate(t)?;
    let gen = build_generators(space);
    let k = space.k() as f64;
    let mut h = gen.n.scale_real(c.omega);
    h = &h
        + &gen
            .sigma_z
            .scale_real((c.omega0 - (k - 1.0) * c.omega) / 2.0);
    h = &h + &gen.q.scale(c.g);
    h = &h + &gen.q_dag.scale(c.g.conj());
    h = &h - &Operator::identity(space).scale_real(c.omega / 2.0);
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::TimeProfile;

    fn space() -> FockSpace {
        FockSpace::new(16, 3, 3).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::new(
            TimeProfile::sinusoid(1.0, 0.1, 0.7, 0.2),
            TimeProfile::linear(3.0, 0.01),
            TimeProfile::constant(0.1),
            TimeProfile::linear(0.3, -0.05),
            3,
        )
    }

    #[test]
    fn spec_validation() {
        assert!(FockSpace::new(4, 3, 3).is_err());
        assert!(FockSpace::new(10, 3, 2).is_err());
        assert!(FockSpace::new(10, 0, 3).is_err());
        assert!(FockSpace::new(10, 3, 3).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let s = space();
        for i in 0..s.dim() {
            let (atom, n) = s.locate(i);
            assert_eq!(s.index(atom, n), i);
        }
    }

    #[test]
    fn ladder_matrix_elements() {
        let s = space();
        let (a, a_dag) = build_ladder(s);
        let vac = s.basis_state(Atom::Excited, 0);
        assert!(a.apply(&vac).iter().all(|z| z.norm() == 0.0));

        let five = s.basis_state(Atom::Ground, 5);
        let nv = (&a_dag * &a).apply(&five);
        assert!((&nv - &five.scale(5.0)).norm() < 1e-14);

        let cube = power(&a_dag, 3);
        let z = cube.entry(s.index(Atom::Excited, 3), s.index(Atom::Excited, 0));
        assert!((z.re - 6f64.sqrt()).abs() < 1e-15 && z.im == 0.0);

        // [a, a†] = 1 below the top level
        let comm = a.commutator(&a_dag);
        for i in 0..s.dim() {
            if s.photons(i) < s.cutoff() - 1 {
                assert!((comm.entry(i, i).re - 1.0).abs() < 1e-14);
            }
        }
        // truncation: a†|cutoff−1⟩ = 0
        let top = s.basis_state(Atom::Excited, s.cutoff() - 1);
        assert_eq!(a_dag.apply(&top).norm(), 0.0);
    }

    #[test]
    fn generator_actions() {
        let s = space();
        let g = build_generators(s);
        let out = g.q.apply(&s.basis_state(Atom::Excited, 0));
        let expected = s.basis_state(Atom::Ground, 3).scale(6f64.sqrt());
        assert!((&out - &expected).norm() < 1e-14);

        for m in 0..5 {
            let v = s.basis_state(Atom::Excited, m);
            let nv = g.n.apply(&v);
            assert!((&nv - &v.scale(m as f64 + 1.5)).norm() < 1e-14);
        }
        assert_eq!((&g.q * &g.q).max_abs(), 0.0);
        assert_eq!((&g.q_dag * &g.q_dag).max_abs(), 0.0);
    }

    #[test]
    fn default_algebra_passes() {
        let report = verify_algebra(space(), 1e-12).unwrap();
        assert_eq!(report.entries.len(), 10);
        assert!(report.get("{Q†,Q} = N′").unwrap() < 1e-12);
        assert!(report.get("(Q†-Q)^2 = -N′").unwrap() < 1e-12);
    }

    #[test]
    fn truncation_shows_up_without_guard() {
        // With the guard removed the boundary spoils {Q†,Q} = N′.
        let s = space();
        let g = build_generators(s);
        let r = (&g.q_dag.anticommutator(&g.q) - &g.n_prime).max_abs();
        assert!(r > 1.0);
    }

    #[test]
    fn hamiltonian_forms_agree_and_are_hermitian() {
        let s = space();
        let p = params();
        for i in 0..10 {
            let t = 0.37 * i as f64 - 1.0;
            let h1 = build_hamiltonian(s, &p, t).unwrap();
            let h2 = build_hamiltonian_susy(s, &p, t).unwrap();
            assert!((&h1 - &h2).max_abs() < 1e-13);
            assert!(h1.hermiticity_residual() < 1e-13);
            assert!(h2.hermiticity_residual() < 1e-13);
        }
    }

    #[test]
    fn hamiltonian_matrix_elements() {
        let s = space();
        let p = params();
        let h = build_hamiltonian(s, &p, 0.4).unwrap();
        let c = p.evaluate(0.4).unwrap();
        let z = h.entry(s.index(Atom::Ground, 3), s.index(Atom::Excited, 0));
        assert!((z - c.g * 6f64.sqrt()).norm() < 1e-14);

        let decoupled = ModelParams::new(
            TimeProfile::constant(1.0),
            TimeProfile::constant(3.0),
            TimeProfile::constant(0.0),
            TimeProfile::constant(0.0),
            3,
        );
        let h0 = build_hamiltonian(s, &decoupled, 0.0).unwrap();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let (atom, n) = s.locate(i);
                let expected = if i == j {
                    n as f64
                        + match atom {
                            Atom::Excited => 1.5,
                            Atom::Ground => -1.5,
                        }
                } else {
                    0.0
                };
                assert!((h0.entry(i, j) - C64::new(expected, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn conserved_and_broken_charges() {
        let s = space();
        let p = params();
        let gen = build_generators(s);
        let double = 2 * s.k();
        for &t in &[0.0, 1.3, 7.9] {
            let h = build_hamiltonian(s, &p, t).unwrap();
            assert!(h.commutator(&gen.n_prime).guarded_max_abs(double) < 1e-12);

            let c = p.evaluate(t).unwrap();
            let expected = &gen.q_dag.scale(c.g.conj()) - &gen.q.scale(c.g);
            let hn = h.commutator(&gen.n);
            assert!((&hn - &expected).guarded_max_abs(s.k()) < 1e-12);
            assert!(hn.guarded_max_abs(s.k()) > 0.1);
        }
    }

    #[test]
    fn mismatched_k_rejected() {
        let s = FockSpace::new(16, 2, 2).unwrap();
        assert!(matches!(
            build_hamiltonian(s, &params(), 0.0),
            Err(Error::Config(_))
        ));
    }
}
