use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LpScaling,
    LinfLogn,
    Figiel,
    Concentration,
    JamesDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::LpScaling,
        ExperimentKind::LinfLogn,
        ExperimentKind::Figiel,
        ExperimentKind::Concentration,
        ExperimentKind::JamesDemo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::LpScaling => "lp-scaling",
            ExperimentKind::LinfLogn => "linf-logn",
            ExperimentKind::Figiel => "figiel",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::JamesDemo => "james-demo",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown experiment {s:?}")))
    }
}

/// Everything an experiment run depends on. Re-running an identical config
/// reproduces identical numeric output.
///
/// `norms` holds norm shorthands (`l1`, `lp:4`, `linf`, ...) instantiated at
/// each `n`; for `james-demo` it names the generated systems instead
/// (`linf-basis`, `aligned`, `random-l2`, `perturbed-linf`). For
/// `concentration`, `eps_grid` lists tail thresholds as multiples of the
/// spherical mean `E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub norms: Vec<String>,
    pub n_grid: Vec<usize>,
    pub eps: f64,
    pub eps_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    /// Monte-Carlo samples per measurement.
    pub samples: usize,
    /// Random sections tried per dimension.
    pub attempts: usize,
    /// Optimizer restarts per distortion measurement.
    pub restarts: usize,
    /// System length for `james-demo`.
    pub m: usize,
    /// Where the CLI writes outputs when `--out` is not given.
    pub output: Option<String>,
}

impl ExperimentConfig {
    /// Desk-scale defaults.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            experiment: kind,
            seed: 0,
            norms: Vec::new(),
            n_grid: Vec::new(),
            eps: 0.5,
            eps_grid: Vec::new(),
            k_grid: Vec::new(),
            samples: 64,
            attempts: 4,
            restarts: 2,
            m: 0,
            output: None,
        };
        match kind {
            ExperimentKind::LpScaling => ExperimentConfig {
                norms: vec!["lp:4".into(), "l1".into()],
                n_grid: vec![64, 128, 256, 512, 1024],
                ..base
            },
            ExperimentKind::LinfLogn => ExperimentConfig {
                norms: vec!["linf".into()],
                n_grid: vec![64, 256, 1024, 4096],
                ..base
            },
            ExperimentKind::Figiel => ExperimentConfig {
                norms: vec!["figiel".into()],
                n_grid: vec![4096],
                eps: 0.25,
                k_grid: vec![1, 4, 16, 64, 256, 1024],
                attempts: 3,
                ..base
            },
            ExperimentKind::Concentration => ExperimentConfig {
                norms: vec!["l2".into(), "l1".into(), "lp:4".into(), "linf".into()],
                n_grid: vec![256, 1024],
                eps_grid: vec![0.25, 0.5, 1.0],
                samples: 100_000,
                ..base
            },
            ExperimentKind::JamesDemo => ExperimentConfig {
                norms: vec![
                    "linf-basis".into(),
                    "aligned".into(),
                    "random-l2".into(),
                    "perturbed-linf".into(),
                ],
                eps: 1.0,
                m: 256,
                ..base
            },
        }
    }

    /// Parse a JSON config. Missing fields take the defaults of the named
    /// experiment; unknown fields are rejected.
    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let obj = value
            .as_object()
            .ok_or_else(|| invalid("config must be a JSON object"))?;
        let kind: ExperimentKind = obj
            .get("experiment")
            .and_then(|v| v.as_str())
            .ok_or_else(|| invalid("config needs an \"experiment\" name"))?
            .parse()?;
        Self::default_for(kind).merged(&value)
    }

    /// Overlay the fields present in `patch` on `self`.
    pub fn merged(&self, patch: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        let (Some(target), Some(fields)) = (base.as_object_mut(), patch.as_object()) else {
            return Err(invalid("config must be a JSON object"));
        };
        for (key, v) in fields {
            if !target.contains_key(key) {
                return Err(invalid(format!("unknown config field {key:?}")));
            }
            target.insert(key.clone(), v.clone());
        }
        let cfg: ExperimentConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.experiment;
        if self.norms.is_empty() {
            return Err(invalid(format!("{kind}: norms must be nonempty")));
        }
        if kind != ExperimentKind::JamesDemo {
            if self.n_grid.is_empty() {
                return Err(invalid(format!("{kind}: n_grid must be nonempty")));
            }
            if self.n_grid.contains(&0) {
                return Err(invalid("n_grid entries must be positive"));
            }
        }
        if self.samples < 2 {
            return Err(invalid("samples must be at least 2"));
        }
        let eps_ok = match kind {
            ExperimentKind::JamesDemo => self.eps > 0.0 && self.eps <= 1.0,
            _ => self.eps > 0.0 && self.eps < 1.0,
        };
        if !eps_ok {
            return Err(invalid(format!("{kind}: eps = {} out of range", self.eps)));
        }
        match kind {
            ExperimentKind::LpScaling | ExperimentKind::LinfLogn | ExperimentKind::Figiel => {
                if self.attempts == 0 || self.restarts == 0 {
                    return Err(invalid("attempts and restarts must be at least 1"));
                }
            }
            ExperimentKind::Concentration => {
                if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0)) {
                    return Err(invalid("concentration: eps_grid must hold positive multiples of E"));
                }
            }
            ExperimentKind::JamesDemo => {
                if self.m < 4 {
                    return Err(invalid("james-demo: m must be at least 4"));
                }
            }
        }
        if kind == ExperimentKind::LinfLogn {
            let (lo, hi) = self
                .n_grid
                .iter()
                .fold((usize::MAX, 0), |(lo, hi), &n| (lo.min(n), hi.max(n)));
            if hi < 4 * lo {
                return Err(invalid("linf-logn: n_grid must span at least two octaves"));
            }
        }
        if kind == ExperimentKind::Figiel && self.k_grid.is_empty() {
            return Err(invalid("figiel: k_grid must be nonempty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::default_for(kind);
            cfg.validate().unwrap();
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn partial_configs_take_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment":"lp-scaling","n_grid":[16,32],"seed":9}"#).unwrap();
        assert_eq!(cfg.n_grid, vec![16, 32]);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.norms, ExperimentConfig::default_for(ExperimentKind::LpScaling).norms);
    }

    #[test]
    fn bad_configs_are_input_errors() {
        for bad in [
            r#"{"experiment":"nope"}"#,
            r#"{"experiment":"figiel","colour":1}"#,
            r#"{"experiment":"linf-logn","n_grid":[64,128]}"#,
            r#"{"experiment":"lp-scaling","n_grid":[]}"#,
            r#"{"n_grid":[1]}"#,
            r#"[1,2]"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).unwrap_err().is_input(), "{bad}");
        }
    }
}
