//! Experiment configuration: JSON file plus flag overrides.

use ewt_lab::{DegreePmf, GridSpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// "geo", "poisson_shifted", or "explicit".
    pub family: String,
    pub p: f64,
    pub lambda: f64,
    /// Explicit pmf, probs[0] = P(1).
    pub probs: Vec<f64>,
    pub seed: u64,
    pub replicates: usize,
    pub depth_cap: u32,
    pub n: usize,
    pub graphs: usize,
    pub grid_points: Option<usize>,
    pub x_max: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: "geo".into(),
            p: 0.08,
            lambda: 10.0,
            probs: Vec::new(),
            seed: 1,
            replicates: 100_000,
            depth_cap: 2,
            n: 2_000,
            graphs: 10,
            grid_points: None,
            x_max: None,
            tol: 1e-8,
            max_iter: 50_000,
            threads: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self.family.as_str() {
            "geo" => {
                if !(self.p > 0.0 && self.p < 1.0) {
                    return Err("p must lie in (0,1)".into());
                }
            }
            "poisson_shifted" => {
                if !(self.lambda > 0.0) {
                    return Err("lambda must be > 0".into());
                }
            }
            "explicit" => {
                if self.probs.is_empty() {
                    return Err("explicit family needs probs".into());
                }
            }
            other => return Err(format!("unknown family '{other}'")),
        }
        if !(self.tol > 0.0) {
            return Err("tol must be > 0".into());
        }
        if self.n < 3 {
            return Err("n must be >= 3".into());
        }
        Ok(())
    }

    pub fn pmf(&self) -> Result<DegreePmf, String> {
        let pmf = match self.family.as_str() {
            "geo" => DegreePmf::geometric(self.p),
            "poisson_shifted" => DegreePmf::poisson_shifted(self.lambda),
            "explicit" => DegreePmf::from_probs(&self.probs),
            other => return Err(format!("unknown family '{other}'")),
        };
        pmf.map_err(|e| e.to_string())
    }

    pub fn grid(&self, pmf: &DegreePmf) -> GridSpec {
        let base = pmf.default_grid();
        let x_max = self.x_max.unwrap_or(base.x_max);
        let n_points = self.grid_points.unwrap_or_else(|| {
            if self.x_max.is_some() {
                ((x_max / base.step).round() as usize + 1).clamp(4001, 240_001)
            } else {
                base.n_points
            }
        });
        GridSpec::new(x_max, n_points)
    }

    /// 64-bit FNV-1a over the canonical JSON; tags every output file.
    /// Fields that cannot affect results (output path, thread count) are
    /// normalized out so identical experiments hash identically.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        canonical.threads = 0;
        let canon = serde_json::to_string(&canonical).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in canon.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }
}
