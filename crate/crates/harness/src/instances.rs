//! Seeded instance generators. Every target is planted as an explicit
//! synthesis `Σ c_i g_i`, so membership in the scaled atomic ball is
//! certified by `Σ |c_i|`.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use sparsegreedy::objectives::{gaussian_vec, seeded_rng};
use sparsegreedy::vecops::{self, norm2};
use sparsegreedy::{
    make_norm_power, synthesis_l1, Atom64, Dictionary, DictionaryError, FiniteDictionary64, NormPower64,
    ObjectiveError, RankOneDictionary, Sign,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("sparsity {s} exceeds the number of atoms {n}")]
    SparsityTooLarge { s: usize, n: usize },
    #[error("rank {r} exceeds the side {n}")]
    RankTooLarge { r: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Planted synthesis of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCertificate {
    pub terms: Vec<(Atom64, f64)>,
    /// `Σ |c_i|`, the certified atomic mass `A`.
    pub l1_mass: f64,
    /// `inf E` when known (exact-fit instances: 0).
    pub reference: Option<f64>,
}

impl InstanceCertificate {
    fn new(terms: Vec<(Atom64, f64)>, reference: Option<f64>) -> Self {
        let l1_mass = synthesis_l1(&terms);
        Self { terms, l1_mass, reference }
    }

    /// `Σ c_i realize(g_i)` in the given dictionary.
    pub fn realize<D: Dictionary<f64> + ?Sized>(&self, dict: &D) -> Result<Vec<f64>, DictionaryError> {
        let mut out = vec![0.0; dict.ambient_dim()];
        for (atom, c) in &self.terms {
            vecops::axpy(*c, &dict.realize(atom)?, &mut out);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct FiniteInstance {
    pub dictionary: FiniteDictionary64,
    pub target: Vec<f64>,
    pub certificate: InstanceCertificate,
}

#[derive(Debug, Clone)]
pub struct LowRankInstance {
    pub dictionary: RankOneDictionary,
    /// Row-major `n x n`.
    pub target: Vec<f64>,
    pub certificate: InstanceCertificate,
}

#[derive(Debug, Clone)]
pub struct LpInstance {
    pub dictionary: FiniteDictionary64,
    pub objective: NormPower64,
    pub target: Vec<f64>,
    pub certificate: InstanceCertificate,
}

/// Flat Dirichlet(1, …, 1) weights scaled to sum to `mass`, each at least
/// `floor · mass` (requires `s · floor < 1`).
fn dirichlet_magnitudes(rng: &mut ChaCha8Rng, s: usize, mass: f64, floor: f64) -> Vec<f64> {
    let draws: Vec<f64> = (0..s).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let free = 1.0 - floor * s as f64;
    draws.iter().map(|d| mass * (floor + free * d / total)).collect()
}

/// Signs, magnitudes and support of an `s`-sparse coefficient vector.
fn planted_terms(rng: &mut ChaCha8Rng, n: usize, s: usize, mass: f64, floor: f64) -> Vec<(usize, f64)> {
    let mags = dirichlet_magnitudes(rng, s, mass, floor);
    let signs: Vec<bool> = (0..s).map(|_| rng.random::<bool>()).collect();
    let mut support = index::sample(rng, n, s).into_vec();
    support.sort_unstable();
    support.into_iter().zip(mags.into_iter().zip(signs)).map(|(i, (m, neg))| (i, if neg { -m } else { m })).collect()
}

fn finite_instance(
    k: usize,
    n: usize,
    s: usize,
    mass: f64,
    seed: u64,
    min_coef: f64,
    norm_r: f64,
) -> Result<FiniteInstance, InstanceError> {
    if s > n {
        return Err(InstanceError::SparsityTooLarge { s, n });
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(InstanceError::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    if !(min_coef >= 0.0) || min_coef * s as f64 >= 1.0 {
        return Err(InstanceError::InvalidParameter(format!("min_coef {min_coef} must satisfy 0 <= s*min_coef < 1")));
    }
    if k == 0 || n == 0 {
        return Err(InstanceError::InvalidParameter("k and n must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let planted = planted_terms(&mut rng, n, s, mass, min_coef);
    let dictionary = FiniteDictionary64::with_norm(k, n, gaussian_vec(&mut rng, k * n), norm_r)?;
    let mut x = vec![0.0; n];
    for &(i, c) in &planted {
        x[i] = c;
    }
    let target = dictionary.synthesize(&x)?;
    let terms = planted
        .into_iter()
        .map(|(i, c)| (Atom64::Indexed { id: i, sign: Sign::Plus }, c))
        .collect();
    Ok(FiniteInstance { dictionary, target, certificate: InstanceCertificate::new(terms, Some(0.0)) })
}

/// Gaussian `k x n` dictionary with unit columns and `y = Φx`, `x` being
/// `s`-sparse with `‖x‖₁ = mass`: Dirichlet magnitudes (optionally floored
/// at `min_coef · mass`), uniform signs, uniform support.
pub fn gen_compressed_sensing(
    k: usize,
    n: usize,
    s: usize,
    mass: f64,
    seed: u64,
    min_coef: f64,
) -> Result<FiniteInstance, InstanceError> {
    finite_instance(k, n, s, mass, seed, min_coef, 2.0)
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    while basis.len() < r {
        let mut v: Vec<f64> = gaussian_vec(rng, n);
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = vecops::dot(&v, b);
                vecops::axpy(-c, b, &mut v);
            }
        }
        let nv = norm2(&v);
        if nv > 1e-8 {
            basis.push(vecops::scaled(1.0 / nv, &v));
        }
    }
    basis
}

/// `F = Σ_{i<=r} σ_i u_i v_iᵀ` with orthonormal `{u_i}`, `{v_i}` and
/// Dirichlet `σ` summing to `mass` (the nuclear norm of `F`).
pub fn gen_low_rank(n: usize, r: usize, mass: f64, seed: u64) -> Result<LowRankInstance, InstanceError> {
    if r > n {
        return Err(InstanceError::RankTooLarge { r, n });
    }
    if !(mass > 0.0) || !mass.is_finite() || r == 0 {
        return Err(InstanceError::InvalidParameter(format!("need mass > 0 and r >= 1, got mass={mass}, r={r}")));
    }
    let mut rng = seeded_rng(seed);
    let sigma = dirichlet_magnitudes(&mut rng, r, mass, 0.0);
    let us = orthonormal_columns(&mut rng, n, r);
    let vs = orthonormal_columns(&mut rng, n, r);
    let dictionary = RankOneDictionary::new(n)?;
    let terms: Vec<(Atom64, f64)> = us
        .into_iter()
        .zip(vs)
        .zip(&sigma)
        .map(|((u, v), &s)| (Atom64::RankOne { u, v, sign: Sign::Plus }, s))
        .collect();
    let certificate = InstanceCertificate::new(terms, Some(0.0));
    let target = certificate.realize(&dictionary)?;
    Ok(LowRankInstance { dictionary, target, certificate })
}

/// Dictionary of `2n` Gaussian atoms normalized in ℓ_r^n, target planted
/// with `max(1, n/4)` atoms and mass 1, energy `‖f − x‖_r^q`. For `r = 2`
/// this is [`gen_compressed_sensing`]`(n, 2n, n/4, 1, seed, 0)`.
pub fn gen_lp_approx(n: usize, r: f64, q: f64, seed: u64) -> Result<LpInstance, InstanceError> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(InstanceError::InvalidParameter(format!("r must lie in (1, inf), got {r}")));
    }
    if !(q > 1.0 && q <= 2.0) {
        return Err(InstanceError::InvalidParameter(format!("q must lie in (1, 2], got {q}")));
    }
    let s = (n / 4).max(1);
    let inst = finite_instance(n, 2 * n, s, 1.0, seed, 0.0, r)?;
    let objective = make_norm_power(inst.target.clone(), r, q)?;
    Ok(LpInstance { dictionary: inst.dictionary, objective, target: inst.target, certificate: inst.certificate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsegreedy::vecops::lp_norm;

    #[test]
    fn compressed_sensing_certificate() {
        let inst = gen_compressed_sensing(64, 256, 8, 1.0, 7, 0.0).unwrap();
        assert!((inst.certificate.l1_mass - 1.0).abs() < 1e-15);
        assert_eq!(inst.certificate.terms.len(), 8);
        let y = inst.certificate.realize(&inst.dictionary).unwrap();
        assert!(vecops::max_abs(&vecops::sub(&y, &inst.target)) <= 1e-12);
        assert!(gen_compressed_sensing(4, 4, 5, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn min_coef_floor() {
        let inst = gen_compressed_sensing(16, 32, 4, 2.0, 3, 0.1).unwrap();
        assert!(inst.certificate.terms.iter().all(|(_, c)| c.abs() >= 0.2 - 1e-15));
        assert!(gen_compressed_sensing(16, 32, 4, 2.0, 3, 0.3).is_err());
    }

    #[test]
    fn low_rank_certificate() {
        let inst = gen_low_rank(8, 2, 1.0, 4).unwrap();
        assert!((inst.certificate.l1_mass - 1.0).abs() < 1e-15);
        for (a, _) in &inst.certificate.terms {
            if let Atom64::RankOne { u, v, .. } = a {
                assert!((norm2(u) - 1.0).abs() < 1e-12 && (norm2(v) - 1.0).abs() < 1e-12);
            }
        }
        assert!(gen_low_rank(2, 3, 1.0, 1).is_err());
        let single = gen_low_rank(2, 1, 1.0, 9).unwrap();
        assert!((norm2(&single.target) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_reduces_to_compressed_sensing_for_r2() {
        let lp = gen_lp_approx(16, 2.0, 2.0, 5).unwrap();
        let cs = gen_compressed_sensing(16, 32, 4, 1.0, 5, 0.0).unwrap();
        assert_eq!(lp.target, cs.target);
        assert_eq!(lp.dictionary, cs.dictionary);
        let l4 = gen_lp_approx(16, 4.0, 2.0, 5).unwrap();
        for c in l4.dictionary.columns() {
            assert!((lp_norm(c, 4.0) - 1.0).abs() < 1e-12);
        }
        assert!(gen_lp_approx(16, 1.0, 2.0, 5).is_err());
        assert!(gen_lp_approx(16, 4.0, 2.5, 5).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_compressed_sensing(8, 16, 3, 1.0, 11, 0.0).unwrap();
        let b = gen_compressed_sensing(8, 16, 3, 1.0, 11, 0.0).unwrap();
        assert_eq!(a.target, b.target);
        let c = gen_compressed_sensing(8, 16, 3, 1.0, 12, 0.0).unwrap();
        assert_ne!(a.target, c.target);
    }
}
