//! Symmetric dictionaries `D = {±g}` of unit-norm atoms: finite column
//! dictionaries and the implicit dictionary of normalized rank-one matrices.

use rand::Rng;
use thiserror::Error;

use crate::inner_solvers::{Restriction, SolverError};
use crate::objectives::{gaussian_vec, Objective, ObjectiveError};
use crate::vecops::{self, dot, lp_norm, norm2};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DictionaryError {
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("empty dictionary")]
    Empty,
    #[error("operation not supported: {0}")]
    Unsupported(&'static str),
    #[error("weakness unattainable: achieved ratio {achieved:e} < required {required:e}")]
    WeaknessUnattainable { achieved: f64, required: f64 },
    #[error("weakness parameter {0} outside [0, 1]")]
    InvalidWeakness(f64),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of<T: Scalar>(x: T) -> Self {
        if x < T::zero() {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value<T: Scalar>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom<T> {
    /// Column `id` of a finite dictionary.
    Indexed { id: usize, sign: Sign },
    /// `sign · u vᵀ` with unit `u`, `v`.
    RankOne { u: Vec<T>, v: Vec<T>, sign: Sign },
}

impl<T: Scalar> Atom<T> {
    pub fn indexed(id: usize, sign: Sign) -> Self {
        Atom::Indexed { id, sign }
    }

    pub fn sign(&self) -> Sign {
        match self {
            Atom::Indexed { sign, .. } | Atom::RankOne { sign, .. } => *sign,
        }
    }

    pub fn id(&self) -> Option<usize> {
        match self {
            Atom::Indexed { id, .. } => Some(*id),
            Atom::RankOne { .. } => None,
        }
    }

    pub fn flip_sign(&self) -> Self {
        let mut a = self.clone();
        match &mut a {
            Atom::Indexed { sign, .. } | Atom::RankOne { sign, .. } => *sign = sign.flip(),
        }
        a
    }

    /// Same underlying ±pair, ignoring the sign.
    pub fn same_key(&self, other: &Self) -> bool {
        match (self, other) {
            (Atom::Indexed { id: a, .. }, Atom::Indexed { id: b, .. }) => a == b,
            (Atom::RankOne { u: u1, v: v1, .. }, Atom::RankOne { u: u2, v: v2, .. }) => u1 == u2 && v1 == v2,
            _ => false,
        }
    }
}

/// Result of `sup_{g ∈ D} ⟨w, g⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupInnerProduct<T> {
    /// Reference value `S`: exact sup for finite dictionaries, certified
    /// value for rank-one (Rayleigh value, or the upper bound if power
    /// iteration did not converge).
    pub value: T,
    pub witness: Atom<T>,
    /// `⟨w, witness⟩`
    pub witness_score: T,
    pub upper_bound: T,
    pub converged: bool,
    pub iterations: usize,
}

pub trait Dictionary<T: Scalar>: Send + Sync {
    /// Dimension of realized atoms.
    fn ambient_dim(&self) -> usize;

    fn realize(&self, atom: &Atom<T>) -> Result<Vec<T>, DictionaryError>;

    fn sup_inner_product(&self, w: &[T]) -> Result<SupInnerProduct<T>, DictionaryError>;

    /// `⟨w, realize(atom)⟩`
    fn score(&self, atom: &Atom<T>, w: &[T]) -> Result<T, DictionaryError> {
        Ok(dot(&self.realize(atom)?, w))
    }

    fn as_finite(&self) -> Option<&FiniteDictionary<T>> {
        None
    }

    fn describe(&self) -> String;
}

impl<T: Scalar, D: Dictionary<T> + ?Sized> Dictionary<T> for &D {
    fn ambient_dim(&self) -> usize {
        (**self).ambient_dim()
    }
    fn realize(&self, atom: &Atom<T>) -> Result<Vec<T>, DictionaryError> {
        (**self).realize(atom)
    }
    fn sup_inner_product(&self, w: &[T]) -> Result<SupInnerProduct<T>, DictionaryError> {
        (**self).sup_inner_product(w)
    }
    fn score(&self, atom: &Atom<T>, w: &[T]) -> Result<T, DictionaryError> {
        (**self).score(atom, w)
    }
    fn as_finite(&self) -> Option<&FiniteDictionary<T>> {
        (**self).as_finite()
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

fn check_input<T: Scalar>(w: &[T], dim: usize, what: &'static str) -> Result<(), DictionaryError> {
    if w.len() != dim {
        return Err(DictionaryError::DimensionMismatch { expected: dim, got: w.len() });
    }
    if !vecops::all_finite(w) {
        return Err(DictionaryError::NonFinite(what));
    }
    Ok(())
}

/// `n` unit columns in `R^k`, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDictionary<T> {
    k: usize,
    n: usize,
    data: Vec<T>,
    norm_exponent: T,
}

impl<T: Scalar> FiniteDictionary<T> {
    /// Builds from column-major data, normalizing every column to unit ℓ₂ norm.
    pub fn from_column_major(k: usize, n: usize, data: Vec<T>) -> Result<Self, DictionaryError> {
        Self::with_norm(k, n, data, T::lit(2.0))
    }

    /// As [`FiniteDictionary::from_column_major`] with ℓ_r normalization.
    pub fn with_norm(k: usize, n: usize, mut data: Vec<T>, r: T) -> Result<Self, DictionaryError> {
        if k == 0 || n == 0 {
            return Err(DictionaryError::Empty);
        }
        if data.len() != k * n {
            return Err(DictionaryError::DimensionMismatch { expected: k * n, got: data.len() });
        }
        if !vecops::all_finite(&data) {
            return Err(DictionaryError::NonFinite("dictionary columns"));
        }
        if !(r >= T::one()) || !r.is_finite() {
            return Err(DictionaryError::InvalidAtom(format!("norm exponent {r} must be >= 1")));
        }
        for (i, col) in data.chunks_mut(k).enumerate() {
            let nrm = lp_norm(col, r);
            if nrm == T::zero() {
                return Err(DictionaryError::ZeroColumn(i));
            }
            for c in col.iter_mut() {
                *c /= nrm;
            }
        }
        Ok(Self { k, n, data, norm_exponent: r })
    }

    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self, DictionaryError> {
        let n = columns.len();
        let k = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != k) {
            return Err(DictionaryError::InvalidAtom("columns of unequal length".into()));
        }
        Self::from_column_major(k, n, columns.concat())
    }

    /// Canonical basis `{e_1, …, e_k}`.
    pub fn identity(k: usize) -> Result<Self, DictionaryError> {
        let mut data = vec![T::zero(); k * k];
        for i in 0..k {
            data[i * k + i] = T::one();
        }
        Self::from_column_major(k, k, data)
    }

    /// `k x n` standard Gaussian matrix drawn column by column, then
    /// column-normalized.
    pub fn gaussian<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Result<Self, DictionaryError> {
        Self::from_column_major(k, n, gaussian_vec(rng, k * n))
    }

    pub fn rows(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn norm_exponent(&self) -> T {
        self.norm_exponent
    }

    pub fn column(&self, i: usize) -> &[T] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.k)
    }

    /// `Φ c` for a coefficient vector of length `n`.
    pub fn synthesize(&self, coeffs: &[T]) -> Result<Vec<T>, DictionaryError> {
        if coeffs.len() != self.n {
            return Err(DictionaryError::DimensionMismatch { expected: self.n, got: coeffs.len() });
        }
        let mut out = vec![T::zero(); self.k];
        for (col, &c) in self.columns().zip(coeffs) {
            if c != T::zero() {
                vecops::axpy(c, col, &mut out);
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> Dictionary<T> for FiniteDictionary<T> {
    fn ambient_dim(&self) -> usize {
        self.k
    }

    fn realize(&self, atom: &Atom<T>) -> Result<Vec<T>, DictionaryError> {
        match atom {
            Atom::Indexed { id, sign } if *id < self.n => Ok(vecops::scaled(sign.value(), self.column(*id))),
            Atom::Indexed { id, .. } => Err(DictionaryError::InvalidAtom(format!("id {id} out of range 0..{}", self.n))),
            Atom::RankOne { .. } => Err(DictionaryError::InvalidAtom("rank-one atom for a finite dictionary".into())),
        }
    }

    fn score(&self, atom: &Atom<T>, w: &[T]) -> Result<T, DictionaryError> {
        check_input(w, self.k, "score")?;
        match atom {
            Atom::Indexed { id, sign } if *id < self.n => Ok(sign.value::<T>() * dot(self.column(*id), w)),
            _ => self.realize(atom).map(|_| T::zero()),
        }
    }

    /// Exact `max_i |⟨w, φ_i⟩|`, ties to the lowest index.
    fn sup_inner_product(&self, w: &[T]) -> Result<SupInnerProduct<T>, DictionaryError> {
        check_input(w, self.k, "sup_inner_product")?;
        let mut best = T::zero();
        let mut witness = Atom::indexed(0, Sign::Plus);
        for (i, col) in self.columns().enumerate() {
            let ip = dot(col, w);
            if ip.abs() > best {
                best = ip.abs();
                witness = Atom::indexed(i, Sign::of(ip));
            }
        }
        Ok(SupInnerProduct { value: best, witness, witness_score: best, upper_bound: best, converged: true, iterations: 0 })
    }

    fn as_finite(&self) -> Option<&FiniteDictionary<T>> {
        Some(self)
    }

    fn describe(&self) -> String {
        format!("finite(k={}, n={}, l{})", self.k, self.n, self.norm_exponent)
    }
}

/// Power-iteration budget for the rank-one sup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// `None` means `max(10 n, 1000)`.
    pub max_iter: Option<usize>,
    pub rel_tol: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { max_iter: None, rel_tol: 1e-10 }
    }
}

/// Implicit dictionary `{±u vᵀ : ‖u‖₂ = ‖v‖₂ = 1}` of `n x n` matrices,
/// flattened row-major, under the Frobenius inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneDictionary {
    n: usize,
    power: PowerIteration,
}

impl RankOneDictionary {
    pub fn new(n: usize) -> Result<Self, DictionaryError> {
        if n == 0 {
            return Err(DictionaryError::Empty);
        }
        Ok(Self { n, power: PowerIteration::default() })
    }

    pub fn with_power_iteration(mut self, power: PowerIteration) -> Self {
        self.power = power;
        self
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn power_iteration(&self) -> PowerIteration {
        self.power
    }

    fn cap(&self) -> usize {
        self.power.max_iter.unwrap_or((10 * self.n).max(1000))
    }
}

/// `W v` for row-major `W`.
fn mat_vec<T: Scalar>(w: &[T], n: usize, v: &[T]) -> Vec<T> {
    w.chunks(n).map(|row| dot(row, v)).collect()
}

/// `Wᵀ u` for row-major `W`.
fn mat_t_vec<T: Scalar>(w: &[T], n: usize, u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for (row, &ui) in w.chunks(n).zip(u) {
        vecops::axpy(ui, row, &mut out);
    }
    out
}

/// `min(‖W‖_F, sqrt(‖W‖₁ ‖W‖_∞))`, an upper bound on `σ_max(W)`.
pub fn spectral_upper_bound<T: Scalar>(w: &[T], n: usize) -> T {
    let fro = norm2(w);
    let row_max = w.chunks(n).map(|r| r.iter().map(|x| x.abs()).sum::<T>()).fold(T::zero(), T::max);
    let mut col_sums = vec![T::zero(); n];
    for row in w.chunks(n) {
        for (c, x) in col_sums.iter_mut().zip(row) {
            *c += x.abs();
        }
    }
    let col_max = col_sums.into_iter().fold(T::zero(), T::max);
    fro.min((row_max * col_max).sqrt())
}

fn unit<T: Scalar>(n: usize, i: usize) -> Vec<T> {
    let mut e = vec![T::zero(); n];
    e[i] = T::one();
    e
}

impl<T: Scalar> Dictionary<T> for RankOneDictionary {
    fn ambient_dim(&self) -> usize {
        self.n * self.n
    }

    fn realize(&self, atom: &Atom<T>) -> Result<Vec<T>, DictionaryError> {
        match atom {
            Atom::RankOne { u, v, sign } => {
                if u.len() != self.n || v.len() != self.n {
                    return Err(DictionaryError::InvalidAtom(format!("factor length differs from side {}", self.n)));
                }
                let tol = T::tol(1e-12);
                if (norm2(u) - T::one()).abs() > tol || (norm2(v) - T::one()).abs() > tol {
                    return Err(DictionaryError::InvalidAtom("factors must be unit vectors".into()));
                }
                let s = sign.value::<T>();
                let mut out = Vec::with_capacity(self.n * self.n);
                for &ui in u {
                    out.extend(v.iter().map(|&vj| s * ui * vj));
                }
                Ok(out)
            }
            Atom::Indexed { .. } => Err(DictionaryError::InvalidAtom("indexed atom for the rank-one dictionary".into())),
        }
    }

    /// `⟨W, u vᵀ⟩ = uᵀ W v`
    fn score(&self, atom: &Atom<T>, w: &[T]) -> Result<T, DictionaryError> {
        check_input(w, self.n * self.n, "score")?;
        match atom {
            Atom::RankOne { u, v, sign } if u.len() == self.n && v.len() == self.n => {
                Ok(sign.value::<T>() * dot(u, &mat_vec(w, self.n, v)))
            }
            _ => self.realize(atom).map(|_| T::zero()),
        }
    }

    /// Top singular pair of `W` by power iteration on `WᵀW`, started from
    /// the normalized sum of the rows of `W`.
    fn sup_inner_product(&self, w: &[T]) -> Result<SupInnerProduct<T>, DictionaryError> {
        let n = self.n;
        check_input(w, n * n, "sup_inner_product")?;
        let upper = spectral_upper_bound(w, n);
        if upper == T::zero() {
            return Ok(SupInnerProduct {
                value: T::zero(),
                witness: Atom::RankOne { u: unit(n, 0), v: unit(n, 0), sign: Sign::Plus },
                witness_score: T::zero(),
                upper_bound: T::zero(),
                converged: true,
                iterations: 0,
            });
        }
        let mut v = mat_t_vec(w, n, &vec![T::one(); n]);
        if norm2(&v) <= T::epsilon() * upper {
            // Rows cancel; start from the largest row instead.
            let (i, _) = w
                .chunks(n)
                .map(norm2)
                .enumerate()
                .fold((0, T::zero()), |(bi, bv), (i, x)| if x > bv { (i, x) } else { (bi, bv) });
            v = w[i * n..(i + 1) * n].to_vec();
        }
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);

        let tol = T::tol(self.power.rel_tol);
        let cap = self.cap();
        let mut wv = mat_vec(w, n, &v);
        let mut rayleigh = dot(&wv, &wv);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cap {
            iterations += 1;
            let mut next = mat_t_vec(w, n, &wv);
            let nn = norm2(&next);
            if nn == T::zero() {
                break;
            }
            next.iter_mut().for_each(|x| *x /= nn);
            let next_wv = mat_vec(w, n, &next);
            let next_rayleigh = dot(&next_wv, &next_wv);
            let change = (next_rayleigh - rayleigh).abs();
            v = next;
            wv = next_wv;
            rayleigh = next_rayleigh;
            if change <= tol * rayleigh {
                converged = true;
                break;
            }
        }
        let sigma = norm2(&wv);
        let u = vecops::scaled(T::one() / sigma, &wv);
        let value = if converged { sigma } else { upper };
        Ok(SupInnerProduct {
            value,
            witness: Atom::RankOne { u, v, sign: Sign::Plus },
            witness_score: sigma,
            upper_bound: upper,
            converged,
            iterations,
        })
    }

    fn describe(&self) -> String {
        format!("rank-one(n={})", self.n)
    }
}

/// How the gradient-greedy step picks among admissible atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionPolicy {
    /// The (certified) argmax.
    #[default]
    Exact,
    /// The admissible atom with the smallest score, i.e. the weakest choice
    /// the weakness inequality still allows. Finite dictionaries only.
    WorstAdmissible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionCertificate<T> {
    pub atom: Atom<T>,
    /// Achieved score `s`.
    pub score: T,
    /// Reference score `S`.
    pub reference: T,
    pub upper_bound: T,
    /// `s / S` (1 when `S = 0`).
    pub weakness: T,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> SelectionCertificate<T> {
    /// `s >= t S − 1e−10`
    pub fn satisfies(&self, t: T) -> bool {
        self.score >= t * self.reference - T::lit(1e-10)
    }
}

/// Weak gradient-greedy step: an atom with `⟨g_neg, φ⟩ >= t sup_g ⟨g_neg, g⟩`.
pub fn select_gradient_greedy<T: Scalar, D: Dictionary<T> + ?Sized>(
    dict: &D,
    g_neg: &[T],
    t: T,
) -> Result<SelectionCertificate<T>, DictionaryError> {
    select_gradient_greedy_with(dict, g_neg, t, T::zero(), SelectionPolicy::Exact)
}

/// Gradient-greedy step for the shifted functional `⟨g_neg, φ⟩ − shift`
/// (the relaxed algorithm uses `shift = ⟨g_neg, G⟩`). The certificate's
/// `score` and `reference` both include the shift.
pub fn select_gradient_greedy_with<T: Scalar, D: Dictionary<T> + ?Sized>(
    dict: &D,
    g_neg: &[T],
    t: T,
    shift: T,
    policy: SelectionPolicy,
) -> Result<SelectionCertificate<T>, DictionaryError> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(DictionaryError::InvalidWeakness(t.to_f64_lossy()));
    }
    let sup = dict.sup_inner_product(g_neg)?;
    let reference = sup.value - shift;
    let (atom, raw) = match policy {
        SelectionPolicy::Exact => (sup.witness, sup.witness_score),
        SelectionPolicy::WorstAdmissible => {
            let fd = dict.as_finite().ok_or(DictionaryError::Unsupported("t-weak selection needs a finite dictionary"))?;
            let threshold = t * reference + shift;
            let mut pick: Option<(T, Atom<T>)> = None;
            for (i, col) in fd.columns().enumerate() {
                let ip = dot(col, g_neg);
                for (sign, s) in [(Sign::Plus, ip), (Sign::Minus, -ip)] {
                    if s >= threshold && pick.as_ref().is_none_or(|(b, _)| s < *b) {
                        pick = Some((s, Atom::indexed(i, sign)));
                    }
                }
            }
            let (s, a) = pick.unwrap_or((sup.witness_score, sup.witness));
            (a, s)
        }
    };
    let score = raw - shift;
    let weakness = if reference > T::zero() { score / reference } else { T::one() };
    let cert = SelectionCertificate {
        atom,
        score,
        reference,
        upper_bound: sup.upper_bound - shift,
        weakness,
        converged: sup.converged,
        iterations: sup.iterations,
    };
    if !cert.satisfies(t) {
        return Err(DictionaryError::WeaknessUnattainable { achieved: weakness.to_f64_lossy(), required: t.to_f64_lossy() });
    }
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EGreedyChoice<T> {
    pub atom: Atom<T>,
    /// Step along the realized (signed) atom, non-negative.
    pub c: T,
    pub energy: T,
}

/// E-greedy step: the atom whose line-searched energy
/// `inf_c E(G + c φ_i)` is smallest. Ties go to the lowest id; the sign is
/// the sign of the optimal step (positive when the step is 0).
pub fn select_e_greedy<T: Scalar, O: Objective<T> + ?Sized>(
    dict: &FiniteDictionary<T>,
    obj: &O,
    g: &[T],
    tol: T,
) -> Result<EGreedyChoice<T>, DictionaryError> {
    check_input(g, dict.rows(), "select_e_greedy")?;
    let mut best: Option<EGreedyChoice<T>> = None;
    for (i, col) in dict.columns().enumerate() {
        let r = Restriction::new(obj, g, col).search_line(tol)?;
        if best.as_ref().is_none_or(|b| r.value < b.energy) {
            let sign = Sign::of(r.argmin);
            best = Some(EGreedyChoice { atom: Atom::indexed(i, sign), c: r.argmin.abs(), energy: r.value });
        }
    }
    best.ok_or(DictionaryError::Empty)
}

/// E-greedy selection at a prescribed step `c`: minimizes `E(G + c g)` over
/// `g ∈ D` (both signs). Ties go to the lowest id, then the positive sign.
pub fn select_e_greedy_prescribed<T: Scalar, O: Objective<T> + ?Sized>(
    dict: &FiniteDictionary<T>,
    obj: &O,
    g: &[T],
    c: T,
) -> Result<EGreedyChoice<T>, DictionaryError> {
    check_input(g, dict.rows(), "select_e_greedy_prescribed")?;
    let mut best: Option<EGreedyChoice<T>> = None;
    for (i, col) in dict.columns().enumerate() {
        for sign in [Sign::Plus, Sign::Minus] {
            let x = vecops::lin_comb(T::one(), g, sign.value::<T>() * c, col);
            let e = obj.eval(&x)?;
            if best.as_ref().is_none_or(|b| e < b.energy) {
                best = Some(EGreedyChoice { atom: Atom::indexed(i, sign), c, energy: e });
            }
        }
    }
    best.ok_or(DictionaryError::Empty)
}

/// `Σ |c_i|`, an upper bound on the atomic norm of `Σ c_i g_i`.
pub fn synthesis_l1<T: Scalar>(coeffs: &[(Atom<T>, T)]) -> T {
    coeffs.iter().map(|(_, c)| c.abs()).sum()
}
