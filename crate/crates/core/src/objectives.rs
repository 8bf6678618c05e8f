//! Convex energies `E` with gradients, plus sampling-based checks of the
//! smoothness machinery (modulus of smoothness, the two-sided first-order
//! sandwich, gradient/finite-difference agreement).
//!
//! Points are flat vectors; matrix-valued problems are flattened row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::vecops::{self, dot, lp_norm, norm2};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("objective declares no smoothness parameters")]
    MissingSmoothness,
    #[error("point outside the sublevel set: E(x) = {energy:e} > E(0) = {bound:e}")]
    OutsideSublevelSet { energy: f64, bound: f64 },
    #[error("direction is not a unit vector (norm {0:e})")]
    NotUnit(f64),
    #[error("objective has no finite sublevel radius")]
    NoSublevelRadius,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Power-type bound `ρ(E, u) <= gamma * u^q` with `p = q / (q - 1)` cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessParams<T> {
    gamma: T,
    q: T,
    p: T,
}

impl<T: Scalar> SmoothnessParams<T> {
    pub fn new(gamma: T, q: T) -> Result<Self, ObjectiveError> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(ObjectiveError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        if !(q > T::one() && q <= T::lit(2.0)) {
            return Err(ObjectiveError::InvalidParameter(format!("q must lie in (1, 2], got {q}")));
        }
        Ok(Self { gamma, q, p: q / (q - T::one()) })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// The envelope `gamma * |u|^q`.
    pub fn envelope(&self, u: T) -> T {
        self.gamma * u.abs().powf(self.q)
    }
}

/// A differentiable convex energy on `R^dimension`.
///
/// Implementors provide the unchecked `value` / `gradient_into`; callers use
/// [`Objective::eval`] and [`Objective::gradient`], which validate input and
/// refuse to return non-finite results.
pub trait Objective<T: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    fn value(&self, x: &[T]) -> T;

    fn gradient_into(&self, x: &[T], out: &mut [T]);

    fn smoothness(&self) -> Option<SmoothnessParams<T>> {
        None
    }

    /// Bound `C1` on `‖x‖` over the sublevel set `{x : E(x) <= E(0)}`,
    /// measured in [`Objective::ambient_norm`].
    fn sublevel_radius(&self) -> Option<T> {
        None
    }

    /// Exponent `r` of the ℓ_r norm the objective lives in.
    fn norm_exponent(&self) -> T {
        T::lit(2.0)
    }

    fn ambient_norm(&self, x: &[T]) -> T {
        lp_norm(x, self.norm_exponent())
    }

    /// Hessian-vector product. The default differentiates the gradient
    /// centrally along `v`.
    fn hessian_vec(&self, x: &[T], v: &[T]) -> Vec<T> {
        let vn = norm2(v);
        let n = self.dimension();
        if vn == T::zero() {
            return vec![T::zero(); n];
        }
        let h = T::epsilon().cbrt() * (T::one() + norm2(x)) / vn;
        let xp = vecops::lin_comb(T::one(), x, h, v);
        let xm = vecops::lin_comb(T::one(), x, -h, v);
        let mut gp = vec![T::zero(); n];
        let mut gm = vec![T::zero(); n];
        self.gradient_into(&xp, &mut gp);
        self.gradient_into(&xm, &mut gm);
        let inv = T::one() / (h + h);
        gp.iter().zip(&gm).map(|(&a, &b)| (a - b) * inv).collect()
    }

    fn describe(&self) -> String;

    fn eval(&self, x: &[T]) -> Result<T, ObjectiveError> {
        self.check_point(x)?;
        let v = self.value(x);
        if !v.is_finite() {
            return Err(ObjectiveError::NonFinite("energy"));
        }
        Ok(v)
    }

    fn gradient(&self, x: &[T]) -> Result<Vec<T>, ObjectiveError> {
        self.check_point(x)?;
        let mut g = vec![T::zero(); self.dimension()];
        self.gradient_into(x, &mut g);
        if !vecops::all_finite(&g) {
            return Err(ObjectiveError::NonFinite("gradient"));
        }
        Ok(g)
    }

    fn check_point(&self, x: &[T]) -> Result<(), ObjectiveError> {
        if x.len() != self.dimension() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dimension(), got: x.len() });
        }
        if !vecops::all_finite(x) {
            return Err(ObjectiveError::NonFinite("input point"));
        }
        Ok(())
    }
}

/// `E(z) = ½‖y − z‖₂²`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    target: Vec<T>,
}

impl<T: Scalar> LeastSquares<T> {
    pub fn target(&self) -> &[T] {
        &self.target
    }
}

pub fn make_least_squares<T: Scalar>(y: Vec<T>) -> Result<LeastSquares<T>, ObjectiveError> {
    if !vecops::all_finite(&y) {
        return Err(ObjectiveError::NonFinite("target"));
    }
    Ok(LeastSquares { target: y })
}

impl<T: Scalar> Objective<T> for LeastSquares<T> {
    fn dimension(&self) -> usize {
        self.target.len()
    }

    fn value(&self, x: &[T]) -> T {
        let s: T = self.target.iter().zip(x).map(|(&y, &z)| (y - z) * (y - z)).sum();
        T::lit(0.5) * s
    }

    fn gradient_into(&self, x: &[T], out: &mut [T]) {
        for ((o, &z), &y) in out.iter_mut().zip(x).zip(&self.target) {
            *o = z - y;
        }
    }

    fn smoothness(&self) -> Option<SmoothnessParams<T>> {
        SmoothnessParams::new(T::lit(0.5), T::lit(2.0)).ok()
    }

    fn sublevel_radius(&self) -> Option<T> {
        Some(T::lit(2.0) * norm2(&self.target))
    }

    fn hessian_vec(&self, _x: &[T], v: &[T]) -> Vec<T> {
        v.to_vec()
    }

    fn describe(&self) -> String {
        format!("least_squares(dim={})", self.target.len())
    }
}

/// `E(x) = ‖f − x‖_r^q` on ℓ_r.
#[derive(Debug, Clone)]
pub struct NormPower<T> {
    target: Vec<T>,
    r: T,
    q: T,
    gamma: T,
}

/// Builds `‖f − x‖_r^q`. The declared smoothness constant is
/// `gamma = max(1, r − 1)`; it is an empirical calibration (sharp for the
/// Hilbert case and for `q = 2, r >= 2`), override it with
/// [`NormPower::with_gamma`].
pub fn make_norm_power<T: Scalar>(f: Vec<T>, r: T, q: T) -> Result<NormPower<T>, ObjectiveError> {
    if !(r >= T::one()) || !r.is_finite() {
        return Err(ObjectiveError::InvalidParameter(format!("norm exponent r must be >= 1, got {r}")));
    }
    if !(q > T::one() && q <= T::lit(2.0)) {
        return Err(ObjectiveError::InvalidParameter(format!("power q must lie in (1, 2], got {q}")));
    }
    if !vecops::all_finite(&f) {
        return Err(ObjectiveError::NonFinite("target"));
    }
    let gamma = (r - T::one()).max(T::one());
    Ok(NormPower { target: f, r, q, gamma })
}

impl<T: Scalar> NormPower<T> {
    pub fn with_gamma(mut self, gamma: T) -> Result<Self, ObjectiveError> {
        SmoothnessParams::new(gamma, self.q)?;
        self.gamma = gamma;
        Ok(self)
    }

    pub fn target(&self) -> &[T] {
        &self.target
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn q(&self) -> T {
        self.q
    }
}

/// Norming functional of `v` in ℓ_r: `sign(v_i)|v_i|^{r−1} / ‖v‖_r^{r−1}`.
/// Zero for `v = 0`.
pub fn norming_functional<T: Scalar>(v: &[T], r: T) -> Vec<T> {
    let nv = lp_norm(v, r);
    if nv == T::zero() {
        return vec![T::zero(); v.len()];
    }
    if r == T::one() {
        return v.iter().map(|&x| if x == T::zero() { T::zero() } else { x.signum() }).collect();
    }
    let rm1 = r - T::one();
    v.iter()
        .map(|&x| {
            if x == T::zero() {
                T::zero()
            } else {
                x.signum() * (x.abs() / nv).powf(rm1)
            }
        })
        .collect()
}

impl<T: Scalar> Objective<T> for NormPower<T> {
    fn dimension(&self) -> usize {
        self.target.len()
    }

    fn value(&self, x: &[T]) -> T {
        let v = vecops::sub(&self.target, x);
        if self.r == T::lit(2.0) {
            // avoids the sqrt round trip, exact for q = 2
            return dot(&v, &v).powf(self.q / T::lit(2.0));
        }
        lp_norm(&v, self.r).powf(self.q)
    }

    fn gradient_into(&self, x: &[T], out: &mut [T]) {
        let v = vecops::sub(&self.target, x);
        let nv = lp_norm(&v, self.r);
        if nv == T::zero() {
            out.iter_mut().for_each(|o| *o = T::zero());
            return;
        }
        let scale = -self.q * nv.powf(self.q - T::one());
        for (o, fv) in out.iter_mut().zip(norming_functional(&v, self.r)) {
            *o = scale * fv;
        }
    }

    fn smoothness(&self) -> Option<SmoothnessParams<T>> {
        SmoothnessParams::new(self.gamma, self.q).ok()
    }

    fn sublevel_radius(&self) -> Option<T> {
        Some(T::lit(2.0) * lp_norm(&self.target, self.r))
    }

    fn norm_exponent(&self) -> T {
        self.r
    }

    fn describe(&self) -> String {
        format!("norm_power(dim={}, r={}, q={})", self.target.len(), self.r, self.q)
    }
}

/// Regularized logistic loss
/// `E(x) = (1/N) Σ log(1 + exp(−y_i ⟨a_i, x⟩)) + (μ/2)‖x‖₂²`.
#[derive(Debug, Clone)]
pub struct Logistic<T> {
    labels: Vec<T>,
    /// Row-major `N x d`.
    features: Vec<T>,
    dim: usize,
    mu: T,
    gamma: T,
}

pub fn make_logistic<T: Scalar>(labels: Vec<T>, features: Vec<Vec<T>>, mu: T) -> Result<Logistic<T>, ObjectiveError> {
    if labels.is_empty() || features.is_empty() {
        return Err(ObjectiveError::InvalidParameter("empty data".into()));
    }
    if labels.len() != features.len() {
        return Err(ObjectiveError::DimensionMismatch { expected: labels.len(), got: features.len() });
    }
    if !(mu > T::zero()) {
        return Err(ObjectiveError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    if labels.iter().any(|&l| l != T::one() && l != -T::one()) {
        return Err(ObjectiveError::InvalidParameter("labels must be -1 or +1".into()));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(ObjectiveError::InvalidParameter("empty feature rows".into()));
    }
    let mut flat = Vec::with_capacity(dim * features.len());
    for row in &features {
        if row.len() != dim {
            return Err(ObjectiveError::DimensionMismatch { expected: dim, got: row.len() });
        }
        if !vecops::all_finite(row) {
            return Err(ObjectiveError::NonFinite("feature"));
        }
        flat.extend_from_slice(row);
    }
    let n = T::from_count(labels.len());
    // λ_max(AᵀA) <= ‖A‖_F², σ' <= 1/4.
    let frob2: T = flat.iter().map(|&a| a * a).sum();
    let lipschitz = frob2 / (T::lit(4.0) * n) + mu;
    Ok(Logistic { labels, features: flat, dim, mu, gamma: T::lit(0.5) * lipschitz })
}

fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Logistic<T> {
    fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn samples(&self) -> T {
        T::from_count(self.labels.len())
    }
}

impl<T: Scalar> Objective<T> for Logistic<T> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        let loss: T = (0..self.labels.len()).map(|i| softplus(-self.labels[i] * dot(self.row(i), x))).sum();
        loss / self.samples() + T::lit(0.5) * self.mu * dot(x, x)
    }

    fn gradient_into(&self, x: &[T], out: &mut [T]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.mu * xi;
        }
        let inv_n = T::one() / self.samples();
        for i in 0..self.labels.len() {
            let y = self.labels[i];
            let a = self.row(i);
            let coef = -y * sigmoid(-y * dot(a, x)) * inv_n;
            vecops::axpy(coef, a, out);
        }
    }

    fn hessian_vec(&self, x: &[T], v: &[T]) -> Vec<T> {
        let mut out: Vec<T> = v.iter().map(|&vi| self.mu * vi).collect();
        let inv_n = T::one() / self.samples();
        for i in 0..self.labels.len() {
            let a = self.row(i);
            let s = sigmoid(dot(a, x));
            vecops::axpy(s * (T::one() - s) * dot(a, v) * inv_n, a, &mut out);
        }
        out
    }

    fn smoothness(&self) -> Option<SmoothnessParams<T>> {
        SmoothnessParams::new(self.gamma, T::lit(2.0)).ok()
    }

    /// From `E(x) >= (μ/2)‖x‖²` and `E(0) = log 2`.
    fn sublevel_radius(&self) -> Option<T> {
        Some((T::lit(2.0) * T::lit(2.0).ln() / self.mu).sqrt())
    }

    fn describe(&self) -> String {
        format!("logistic(samples={}, dim={}, mu={})", self.labels.len(), self.dim, self.mu)
    }
}

impl<T: Scalar, O: Objective<T> + ?Sized> Objective<T> for &O {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn value(&self, x: &[T]) -> T {
        (**self).value(x)
    }
    fn gradient_into(&self, x: &[T], out: &mut [T]) {
        (**self).gradient_into(x, out)
    }
    fn smoothness(&self) -> Option<SmoothnessParams<T>> {
        (**self).smoothness()
    }
    fn sublevel_radius(&self) -> Option<T> {
        (**self).sublevel_radius()
    }
    fn norm_exponent(&self) -> T {
        (**self).norm_exponent()
    }
    fn hessian_vec(&self, x: &[T], v: &[T]) -> Vec<T> {
        (**self).hessian_vec(x, v)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Checks `0 <= E(x+uy) − E(x) − u⟨E'(x), y⟩ <= 2γ|u|^q` at one triple.
/// Returns `(lhs, rhs − lhs)`; the inequality holds when both are
/// `>= −1e−10`.
pub fn check_smoothness_inequality<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    x: &[T],
    y: &[T],
    u: T,
) -> Result<(T, T), ObjectiveError> {
    let params = obj.smoothness().ok_or(ObjectiveError::MissingSmoothness)?;
    let ex = obj.eval(x)?;
    let e0 = obj.eval(&vec![T::zero(); obj.dimension()])?;
    if ex > e0 + T::tol(1e-12) * (T::one() + e0.abs()) {
        return Err(ObjectiveError::OutsideSublevelSet { energy: ex.to_f64_lossy(), bound: e0.to_f64_lossy() });
    }
    obj.check_point(y)?;
    let ny = obj.ambient_norm(y);
    if (ny - T::one()).abs() > T::tol(1e-12) {
        return Err(ObjectiveError::NotUnit(ny.to_f64_lossy()));
    }
    let g = obj.gradient(x)?;
    let shifted = vecops::lin_comb(T::one(), x, u, y);
    let lhs = obj.eval(&shifted)? - ex - u * dot(&g, y);
    let rhs = T::lit(2.0) * params.envelope(u);
    Ok((lhs, rhs - lhs))
}

/// `E(y) − E(x) − ⟨E'(x), y − x⟩`, non-negative for convex `E`.
pub fn convexity_gap<T: Scalar, O: Objective<T> + ?Sized>(obj: &O, x: &[T], y: &[T]) -> Result<T, ObjectiveError> {
    let g = obj.gradient(x)?;
    let d = vecops::sub(y, x);
    Ok(obj.eval(y)? - obj.eval(x)? - dot(&g, &d))
}

/// Largest componentwise deviation between the analytic gradient and central
/// differences with step `1e−6 (1 + ‖x‖)`, relative to `max(1, ‖E'(x)‖_∞)`.
pub fn gradient_fd_error<T: Scalar, O: Objective<T> + ?Sized>(obj: &O, x: &[T]) -> Result<T, ObjectiveError> {
    let g = obj.gradient(x)?;
    let h = T::lit(1e-6) * (T::one() + norm2(x));
    let mut xp = x.to_vec();
    let mut worst = T::zero();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = obj.eval(&xp)?;
        xp[i] = x[i] - h;
        let fm = obj.eval(&xp)?;
        xp[i] = x[i];
        let fd = (fp - fm) / (h + h);
        worst = worst.max((fd - g[i]).abs());
    }
    Ok(worst / vecops::max_abs(&g).max(T::one()))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Random direction with unit norm in the objective's ambient norm.
pub fn sample_unit_direction<T: Scalar, O: Objective<T> + ?Sized, R: Rng + ?Sized>(obj: &O, rng: &mut R) -> Vec<T> {
    loop {
        let g: Vec<T> = gaussian_vec(rng, obj.dimension());
        let n = obj.ambient_norm(&g);
        if n > T::zero() {
            return vecops::scaled(T::one() / n, &g);
        }
    }
}

/// Draws a point of the sublevel set `D = {x : E(x) <= E(0)}` by picking a
/// random ray from the origin, locating where it leaves `D` (bisection within
/// the declared sublevel radius; `D` is convex and contains 0) and choosing a
/// uniform position along the feasible segment.
pub fn sample_sublevel_point<T: Scalar, O: Objective<T> + ?Sized, R: Rng + ?Sized>(
    obj: &O,
    rng: &mut R,
) -> Result<Vec<T>, ObjectiveError> {
    let radius = obj.sublevel_radius().filter(|r| r.is_finite()).ok_or(ObjectiveError::NoSublevelRadius)?;
    let e0 = obj.eval(&vec![T::zero(); obj.dimension()])?;
    let d = sample_unit_direction(obj, rng);
    let inside = |t: T| -> Result<bool, ObjectiveError> { Ok(obj.eval(&vecops::scaled(t, &d))? <= e0) };
    let (mut lo, mut hi) = (T::zero(), radius);
    if inside(hi)? {
        lo = hi;
    } else {
        for _ in 0..60 {
            let mid = T::lit(0.5) * (lo + hi);
            if inside(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let t = lo * T::lit(rng.random::<f64>());
    Ok(vecops::scaled(t, &d))
}

/// Sampled lower estimate of
/// `ρ(E, u) = ½ sup_{x ∈ D, ‖y‖ = 1} |E(x+uy) + E(x−uy) − 2E(x)|`.
pub fn empirical_modulus<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    u: T,
    sample_count: usize,
    rng_seed: u64,
) -> Result<T, ObjectiveError> {
    if u < T::zero() || !u.is_finite() {
        return Err(ObjectiveError::InvalidParameter(format!("u must be non-negative, got {u}")));
    }
    obj.sublevel_radius().filter(|r| r.is_finite()).ok_or(ObjectiveError::NoSublevelRadius)?;
    if u == T::zero() {
        return Ok(T::zero());
    }
    let mut rng = seeded_rng(rng_seed);
    let mut best = T::zero();
    for _ in 0..sample_count {
        let x = sample_sublevel_point(obj, &mut rng)?;
        let y = sample_unit_direction(obj, &mut rng);
        let ex = obj.eval(&x)?;
        let plus = obj.eval(&vecops::lin_comb(T::one(), &x, u, &y))?;
        let minus = obj.eval(&vecops::lin_comb(T::one(), &x, -u, &y))?;
        best = best.max(T::lit(0.5) * (plus + minus - ex - ex).abs());
    }
    Ok(best)
}
