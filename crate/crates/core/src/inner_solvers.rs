//! Inner minimizations used by the update steps: 1-D line searches on rays
//! and intervals, the two-variable free-relaxation problem, and convex
//! minimization over the span of the selected atoms.

use thiserror::Error;

use crate::objectives::{Objective, ObjectiveError};
use crate::vecops::{self, dot};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("derivative is not monotone near {at:e}; the restricted function is not convex")]
    NonConvex { at: f64 },
    #[error("bracketing exceeded 2^60 without the derivative turning non-negative; unbounded below")]
    UnboundedBelow,
    #[error("non-finite value encountered in line search")]
    NonFinite,
    #[error("invalid interval [{lo:e}, {hi:e}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("free relaxation energy increased at sweep {sweep}")]
    SweepOscillation { sweep: usize },
    #[error("subspace minimization stopped after {iterations} iterations with projected gradient {residual:e}")]
    SubspaceCap { residual: f64, iterations: usize },
    #[error("subspace has no atoms")]
    EmptySubspace,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult<T> {
    pub argmin: T,
    pub value: T,
    pub derivative_at_argmin: T,
    pub evaluations: usize,
    /// True when the minimizer sits on a finite end of the feasible interval
    /// with the derivative pointing outward.
    pub on_boundary: bool,
}

/// Default derivative tolerance for a line search starting from energy `phi0`.
pub fn default_line_tol<T: Scalar>(phi0: T) -> T {
    T::tol(1e-10) * (T::one() + phi0.abs())
}

/// Central-difference derivative of `phi`, for callers without an analytic one.
pub fn central_difference<T: Scalar, F: Fn(T) -> T>(phi: F) -> impl Fn(T) -> T {
    move |c: T| {
        let h = T::epsilon().cbrt() * (T::one() + c.abs());
        (phi(c + h) - phi(c - h)) / (h + h)
    }
}

/// Minimizes a convex `phi` over `[lo, hi]` (`hi = None` for the ray
/// `[lo, ∞)`) by locating a zero of the derivative `dphi`.
///
/// Unbounded rays are bracketed by doubling a step that starts at 1. The
/// bracket is then shrunk by safeguarded false position on the derivative,
/// falling back to bisection whenever an interpolation step fails to halve
/// the bracket, until `|dphi| <= tol`.
pub fn line_search_ray<T, F, D>(phi: F, dphi: D, lo: T, hi: Option<T>, tol: T) -> Result<LineSearchResult<T>, SolverError>
where
    T: Scalar,
    F: Fn(T) -> T,
    D: Fn(T) -> T,
{
    if let Some(h) = hi {
        if !(h > lo) || !lo.is_finite() || !h.is_finite() {
            return Err(SolverError::InvalidInterval { lo: lo.to_f64_lossy(), hi: h.to_f64_lossy() });
        }
    }
    let mut evals = 0usize;
    let mut deriv = |c: T| -> Result<T, SolverError> {
        evals += 1;
        let d = dphi(c);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(SolverError::NonFinite)
        }
    };

    let d_lo = deriv(lo)?;
    if d_lo >= -tol {
        return finish(&phi, lo, d_lo, evals, d_lo > tol);
    }
    let (mut a, mut da) = (lo, d_lo);
    let (mut b, mut db);
    match hi {
        Some(h) => {
            b = h;
            db = deriv(h)?;
            if db <= tol {
                if db < da - tol {
                    return Err(SolverError::NonConvex { at: h.to_f64_lossy() });
                }
                return finish(&phi, h, db, evals, db < -tol);
            }
        }
        None => {
            let cap = T::lit(2f64.powi(60));
            let mut step = T::one();
            loop {
                b = lo + step;
                db = deriv(b)?;
                if db < da - tol {
                    return Err(SolverError::NonConvex { at: b.to_f64_lossy() });
                }
                if db >= -tol {
                    break;
                }
                a = b;
                da = db;
                step = step + step;
                if step > cap {
                    return Err(SolverError::UnboundedBelow);
                }
            }
            if db <= tol {
                return finish(&phi, b, db, evals, false);
            }
        }
    }

    // da < -tol < tol < db
    let slack = tol + T::epsilon() * (da.abs() + db.abs());
    let mut bisect = false;
    let (mut best, mut dbest) = if -da < db { (a, da) } else { (b, db) };
    for _ in 0..400 {
        let width = b - a;
        let mid = a + T::lit(0.5) * width;
        let mut x = if bisect { mid } else { a - da * width / (db - da) };
        if !(x > a && x < b) {
            x = mid;
        }
        let dx = deriv(x)?;
        if dx < da - slack || dx > db + slack {
            return Err(SolverError::NonConvex { at: x.to_f64_lossy() });
        }
        if dx.abs() < dbest.abs() {
            best = x;
            dbest = dx;
        }
        if dx.abs() <= tol {
            break;
        }
        if dx < T::zero() {
            a = x;
            da = dx;
        } else {
            b = x;
            db = dx;
        }
        bisect = (b - a) > T::lit(0.5) * width;
        if b - a <= T::epsilon() * (T::one() + a.abs() + b.abs()) {
            break;
        }
    }
    finish(&phi, best, dbest, evals, false)
}

fn finish<T: Scalar, F: Fn(T) -> T>(
    phi: &F,
    x: T,
    d: T,
    evals: usize,
    on_boundary: bool,
) -> Result<LineSearchResult<T>, SolverError> {
    let value = phi(x);
    if !value.is_finite() {
        return Err(SolverError::NonFinite);
    }
    Ok(LineSearchResult { argmin: x, value, derivative_at_argmin: d, evaluations: evals + 1, on_boundary })
}

/// Minimizes a convex `phi` over the whole real line by searching the ray
/// the derivative at 0 points into.
pub fn line_search_line<T, F, D>(phi: F, dphi: D, tol: T) -> Result<LineSearchResult<T>, SolverError>
where
    T: Scalar,
    F: Fn(T) -> T,
    D: Fn(T) -> T,
{
    let d0 = dphi(T::zero());
    if !d0.is_finite() {
        return Err(SolverError::NonFinite);
    }
    if d0 <= T::zero() {
        line_search_ray(&phi, &dphi, T::zero(), None, tol)
    } else {
        let r = line_search_ray(|s: T| phi(-s), |s: T| -dphi(-s), T::zero(), None, tol)?;
        Ok(LineSearchResult { argmin: -r.argmin, derivative_at_argmin: -r.derivative_at_argmin, ..r })
    }
}

/// Constrained minimizer of a convex `phi` over `[0, 1]`.
pub fn minimize_interval_01<T, F, D>(phi: F, dphi: D, tol: T) -> Result<LineSearchResult<T>, SolverError>
where
    T: Scalar,
    F: Fn(T) -> T,
    D: Fn(T) -> T,
{
    line_search_ray(phi, dphi, T::zero(), Some(T::one()), tol)
}

/// Restriction `c ↦ E(base + c·dir)` together with its derivative.
pub struct Restriction<'a, T, O: ?Sized> {
    pub obj: &'a O,
    pub base: &'a [T],
    pub dir: &'a [T],
}

impl<'a, T: Scalar, O: Objective<T> + ?Sized> Restriction<'a, T, O> {
    pub fn new(obj: &'a O, base: &'a [T], dir: &'a [T]) -> Self {
        Self { obj, base, dir }
    }

    pub fn point(&self, c: T) -> Vec<T> {
        vecops::lin_comb(T::one(), self.base, c, self.dir)
    }

    pub fn value(&self, c: T) -> T {
        self.obj.value(&self.point(c))
    }

    pub fn derivative(&self, c: T) -> T {
        let mut g = vec![T::zero(); self.base.len()];
        self.obj.gradient_into(&self.point(c), &mut g);
        dot(&g, self.dir)
    }

    pub fn search_ray(&self, lo: T, hi: Option<T>, tol: T) -> Result<LineSearchResult<T>, SolverError> {
        line_search_ray(|c| self.value(c), |c| self.derivative(c), lo, hi, tol)
    }

    pub fn search_line(&self, tol: T) -> Result<LineSearchResult<T>, SolverError> {
        line_search_line(|c| self.value(c), |c| self.derivative(c), tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeRelaxation<T> {
    /// `G_m = (1 − w) G_{m−1} + λ φ_m`
    pub w: T,
    pub lambda: T,
    pub point: Vec<T>,
    pub energy: T,
    /// Best step along `φ_m` with `w = 0`.
    pub best_step: LineSearchResult<T>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Minimizes `(w, λ) ↦ E((1 − w)G + λφ)` by alternating exact line searches
/// (λ, then w), with a line search along the displacement between
/// consecutive sweeps. Stops once both partial derivatives are within `tol`
/// or after 100 sweeps. The result never has higher energy than the best
/// step with `w = 0` or the restart with `w = 1`.
pub fn minimize_free_relaxation<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    g: &[T],
    phi: &[T],
    tol: T,
) -> Result<FreeRelaxation<T>, SolverError> {
    const MAX_SWEEPS: usize = 100;
    obj.check_point(g)?;
    obj.check_point(phi)?;
    let point = |w: T, l: T| vecops::lin_comb(T::one() - w, g, l, phi);
    let partials = |w: T, l: T| -> (T, T) {
        let mut grad = vec![T::zero(); g.len()];
        obj.gradient_into(&point(w, l), &mut grad);
        (-dot(&grad, g), dot(&grad, phi))
    };
    let lambda_search = |w: T| -> Result<LineSearchResult<T>, SolverError> {
        let base = vecops::scaled(T::one() - w, g);
        Restriction::new(obj, &base, phi).search_line(tol)
    };
    let best_step = lambda_search(T::zero())?;

    if vecops::max_abs(g) == T::zero() {
        let p = point(T::zero(), best_step.argmin);
        return Ok(FreeRelaxation {
            w: T::zero(),
            lambda: best_step.argmin,
            energy: obj.eval(&p)?,
            point: p,
            best_step,
            sweeps: 0,
            converged: true,
        });
    }

    let restart = lambda_search(T::one())?;
    let (mut w, mut l, mut e) = if restart.value < best_step.value {
        (T::one(), restart.argmin, restart.value)
    } else {
        (T::zero(), best_step.argmin, best_step.value)
    };
    let mut prev: Option<(T, T)> = None;
    let mut sweeps = 0;
    let mut converged = false;
    let increase_tol = |e: T| T::tol(1e-12) * (T::one() + e.abs());

    while sweeps < MAX_SWEEPS {
        let (dw, dl) = partials(w, l);
        if dw.abs() <= tol && dl.abs() <= tol {
            converged = true;
            break;
        }
        sweeps += 1;
        let e_start = e;

        // w-step along -G
        let base = vecops::scaled(l, phi);
        let neg_g = vecops::scaled(-T::one(), g);
        let shifted: Vec<T> = vecops::lin_comb(T::one(), &base, T::one(), g);
        let rw = Restriction::new(obj, &shifted, &neg_g).search_line(tol)?;
        if rw.value <= e {
            w = rw.argmin;
            e = rw.value;
        }
        let rl = lambda_search(w)?;
        if rl.value <= e {
            l = rl.argmin;
            e = rl.value;
        }
        // Extrapolate along the displacement of the λ-optimal points.
        if let Some((pw, pl)) = prev {
            let (sw, sl) = (w - pw, l - pl);
            if sw != T::zero() || sl != T::zero() {
                let base = point(w, l);
                let dir = vecops::lin_comb(-sw, g, sl, phi);
                let rp = Restriction::new(obj, &base, &dir).search_line(tol)?;
                if rp.value < e {
                    w += sw * rp.argmin;
                    l += sl * rp.argmin;
                    e = rp.value;
                }
            }
        }
        prev = Some((w, l));
        if e > e_start + increase_tol(e_start) {
            return Err(SolverError::SweepOscillation { sweep: sweeps });
        }
        if e_start - e <= T::epsilon() * (T::one() + e.abs()) && sweeps > 1 {
            let (dw, dl) = partials(w, l);
            converged = dw.abs() <= tol && dl.abs() <= tol;
            break;
        }
    }
    let p = point(w, l);
    let energy = obj.eval(&p)?;
    Ok(FreeRelaxation { w, lambda: l, point: p, energy, best_step, sweeps, converged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSolution<T> {
    pub coeffs: Vec<T>,
    pub point: Vec<T>,
    pub energy: T,
    /// `max_j |⟨E'(x), φ_j⟩|` at the returned point.
    pub residual: T,
    pub iterations: usize,
}

fn combine<T: Scalar>(atoms: &[Vec<T>], coeffs: &[T], dim: usize) -> Vec<T> {
    let mut x = vec![T::zero(); dim];
    for (a, &c) in atoms.iter().zip(coeffs) {
        if c != T::zero() {
            vecops::axpy(c, a, &mut x);
        }
    }
    x
}

/// Minimizes `E` over `span(atoms)` until the projected gradient
/// `max_j |⟨E'(x), φ_j⟩|` is at most `tol`.
///
/// Damped Newton iterations in coefficient space (the reduced Hessian is
/// assembled from [`Objective::hessian_vec`]) with a unit step accepted under
/// an Armijo test and an exact line search otherwise. A cyclic pass of exact
/// coordinate line searches is used whenever the Newton step makes no
/// progress. `init` warm-starts the coefficients (missing trailing entries
/// are zero).
pub fn minimize_subspace<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    atoms: &[Vec<T>],
    init: Option<&[T]>,
    tol: T,
) -> Result<SubspaceSolution<T>, SolverError> {
    const MAX_ITER: usize = 100;
    let m = atoms.len();
    if m == 0 {
        return Err(SolverError::EmptySubspace);
    }
    let dim = obj.dimension();
    for a in atoms {
        obj.check_point(a)?;
    }
    let mut c = vec![T::zero(); m];
    if let Some(init) = init {
        for (ci, &v) in c.iter_mut().zip(init) {
            *ci = v;
        }
    }
    let mut x = combine(atoms, &c, dim);
    let mut e = obj.eval(&x)?;
    let line_tol = |e: T| default_line_tol(e);
    let mut residual = T::infinity();

    for iter in 0..MAX_ITER {
        let g = obj.gradient(&x)?;
        let gc: Vec<T> = atoms.iter().map(|a| dot(&g, a)).collect();
        residual = vecops::max_abs(&gc);
        if residual <= tol {
            return Ok(SubspaceSolution { coeffs: c, point: x, energy: e, residual, iterations: iter });
        }

        let mut h = vec![T::zero(); m * m];
        let hv: Vec<Vec<T>> = atoms.iter().map(|a| obj.hessian_vec(&x, a)).collect();
        for i in 0..m {
            for j in 0..m {
                h[i * m + j] = dot(&atoms[i], &hv[j]);
            }
        }
        for i in 0..m {
            for j in 0..i {
                let s = T::lit(0.5) * (h[i * m + j] + h[j * m + i]);
                h[i * m + j] = s;
                h[j * m + i] = s;
            }
        }
        let neg_g: Vec<T> = gc.iter().map(|&v| -v).collect();
        let trace = (0..m).map(|i| h[i * m + i].abs()).fold(T::zero(), |a, b| a.max(b)).max(T::min_positive_value());
        let mut damping = T::zero();
        let mut step = None;
        for _ in 0..40 {
            let mut hd = h.clone();
            for i in 0..m {
                hd[i * m + i] += damping;
            }
            if let Some(d) = vecops::cholesky_solve(&hd, m, &neg_g) {
                if vecops::all_finite(&d) && dot(&d, &gc) < T::zero() {
                    step = Some(d);
                    break;
                }
            }
            damping = if damping == T::zero() { T::epsilon() * trace * T::lit(16.0) } else { damping * T::lit(10.0) };
        }

        let mut progressed = false;
        if let Some(d) = step {
            let dx = combine(atoms, &d, dim);
            let slope = dot(&d, &gc);
            let trial = vecops::lin_comb(T::one(), &x, T::one(), &dx);
            let e1 = obj.value(&trial);
            let (alpha, e_new) = if e1.is_finite() && e1 <= e + T::lit(1e-4) * slope {
                (T::one(), e1)
            } else {
                let r = Restriction::new(obj, &x, &dx).search_ray(T::zero(), None, line_tol(e))?;
                (r.argmin, r.value)
            };
            if e_new <= e && alpha > T::zero() {
                progressed = e_new < e || alpha == T::one();
                vecops::axpy(alpha, &d, &mut c);
                x = combine(atoms, &c, dim);
                e = obj.eval(&x)?;
            }
        }
        if !progressed {
            let e_before = e;
            for j in 0..m {
                let r = Restriction::new(obj, &x, &atoms[j]).search_line(line_tol(e))?;
                if r.value <= e {
                    c[j] += r.argmin;
                    x = combine(atoms, &c, dim);
                    e = obj.eval(&x)?;
                }
            }
            if !(e < e_before) {
                let g = obj.gradient(&x)?;
                let residual = atoms.iter().map(|a| dot(&g, a).abs()).fold(T::zero(), |a, b| a.max(b));
                if residual <= tol {
                    return Ok(SubspaceSolution { coeffs: c, point: x, energy: e, residual, iterations: iter + 1 });
                }
                return Err(SolverError::SubspaceCap { residual: residual.to_f64_lossy(), iterations: iter + 1 });
            }
        }
    }
    let g = obj.gradient(&x)?;
    residual = atoms.iter().map(|a| dot(&g, a).abs()).fold(T::zero(), |a, b| a.max(b)).min(residual.max(T::zero()));
    if residual <= tol {
        return Ok(SubspaceSolution { coeffs: c, point: x, energy: e, residual, iterations: MAX_ITER });
    }
    Err(SolverError::SubspaceCap { residual: residual.to_f64_lossy(), iterations: MAX_ITER })
}
