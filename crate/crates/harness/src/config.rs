//! Flat JSON experiment configuration. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// Gaussian dictionary, sparse planted target.
    Cs,
    /// Rank-one matrix dictionary, planted low-rank target.
    LowRank,
    /// ℓ_r-normalized dictionary with the norm-power energy.
    Lp,
    /// Dictionary and target read from CSV files.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    LeastSquares,
    NormPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Wcga,
    Wrga,
    Wgafr,
    BestStep,
    ReducedStep,
    FixedRelaxation,
    Prescribed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTargetKind {
    /// `log(E(G_m) − reference)`
    Gap,
    /// `log ‖f − G_m‖`, recovered from the energy.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeChoice {
    Chebyshev,
    Relaxed,
    FreeRelaxation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrescribedSelectionKind {
    Gradient,
    EGreedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub instance: InstanceKind,
    pub k: usize,
    pub n: usize,
    pub s: usize,
    pub mass: f64,
    pub min_coef: f64,
    pub rank: usize,
    /// Norm exponent of the ambient space.
    pub r: f64,
    /// Power of the norm in the norm-power energy.
    pub q: f64,
    pub objective: Option<ObjectiveKind>,
    pub dictionary_csv: Option<PathBuf>,
    pub target_csv: Option<PathBuf>,
    pub algorithm: Algorithm,
    pub b: Option<f64>,
    pub relax_r: Option<f64>,
    pub prescribed_c: Option<f64>,
    /// `c_k = prescribed_c · k^{−prescribed_exponent}`.
    pub prescribed_exponent: Option<f64>,
    pub prescribed_selection: PrescribedSelectionKind,
    pub weakness: f64,
    /// Power-law weakness `t_k = k^{−a}`; overrides `weakness`.
    pub weakness_exponent: Option<f64>,
    pub max_m: usize,
    pub sup_tol: f64,
    pub gap_tol: Option<f64>,
    pub seed: u64,
    pub fit_m_min: usize,
    pub fit_m_max: Option<usize>,
    pub fit_target: FitTargetKind,
    pub envelope: Option<EnvelopeChoice>,
    pub trace_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceKind::Cs,
            k: 64,
            n: 256,
            s: 8,
            mass: 1.0,
            min_coef: 0.0,
            rank: 2,
            r: 2.0,
            q: 2.0,
            objective: None,
            dictionary_csv: None,
            target_csv: None,
            algorithm: Algorithm::Wcga,
            b: None,
            relax_r: None,
            prescribed_c: None,
            prescribed_exponent: None,
            prescribed_selection: PrescribedSelectionKind::Gradient,
            weakness: 1.0,
            weakness_exponent: None,
            max_m: 500,
            sup_tol: 1e-10,
            gap_tol: None,
            seed: 1,
            fit_m_min: 4,
            fit_m_max: None,
            fit_target: FitTargetKind::Residual,
            envelope: None,
            trace_csv: None,
            summary_json: None,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative CSV input paths resolve against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::MissingInput(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.dictionary_csv, &mut cfg.target_csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Energy implied by the instance unless overridden.
    pub fn objective_kind(&self) -> ObjectiveKind {
        self.objective.unwrap_or(match self.instance {
            InstanceKind::Lp => ObjectiveKind::NormPower,
            _ => ObjectiveKind::LeastSquares,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(self.weakness > 0.0 && self.weakness <= 1.0) {
            return bad(format!("weakness must lie in (0, 1], got {}", self.weakness));
        }
        if let Some(a) = self.weakness_exponent {
            if !(a >= 0.0) || !a.is_finite() {
                return bad(format!("weakness_exponent must be non-negative, got {a}"));
            }
        }
        if !(self.sup_tol >= 0.0) {
            return bad(format!("sup_tol must be non-negative, got {}", self.sup_tol));
        }
        if self.gap_tol.is_some_and(|g| !(g >= 0.0)) {
            return bad("gap_tol must be non-negative".into());
        }
        if self.fit_m_min == 0 {
            return bad("fit_m_min must be at least 1".into());
        }
        if self.fit_m_max.is_some_and(|mx| mx < self.fit_m_min) {
            return bad("fit_m_max is below fit_m_min".into());
        }
        match self.algorithm {
            Algorithm::ReducedStep if self.b.is_none() => return bad("reduced_step needs b".into()),
            Algorithm::FixedRelaxation if self.relax_r.is_none() => return bad("fixed_relaxation needs relax_r".into()),
            Algorithm::Prescribed if self.prescribed_c.is_none() => return bad("prescribed needs prescribed_c".into()),
            _ => {}
        }
        if self.instance == InstanceKind::File && (self.dictionary_csv.is_none() || self.target_csv.is_none()) {
            return bad("file instance needs dictionary_csv and target_csv".into());
        }
        if self.instance == InstanceKind::LowRank && self.prescribed_selection == PrescribedSelectionKind::EGreedy {
            return bad("E-greedy selection needs a finite dictionary".into());
        }
        if self.instance == InstanceKind::LowRank && self.objective_kind() != ObjectiveKind::LeastSquares {
            return bad("low_rank instances use the least-squares energy".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization (all fields, fixed order).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
