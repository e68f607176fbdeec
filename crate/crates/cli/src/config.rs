//! JSON scenario documents.
//!
//! ```json
//! {
//!   "potential": { "kind": "harmonic", "stiffness": 1.0 },
//!   "physics": { "hbar": 1.0, "mu": 1.0, "energy": 0.8 },
//!   "quantum": { "a": 1.5, "b": -0.2, "kappa": 0.0 },
//!   "run": { "law": "velocity", "x_start": 0.0, "t0": 0.0, "t1": 10.0, "samples": 201 },
//!   "integrator": { "rel_tol": 1e-10, "abs_tol": 1e-12 },
//!   "output": { "path": "out.csv", "format": "csv" }
//! }
//! ```
//!
//! `integrator` and `output` are optional. `run` also accepts `domain`,
//! `anchor`, `grid_step` (solution pair) and `newton_init` (`[ẍ₀, x⃛₀]`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qnewton::numerics::IntegratorSettings;
use qnewton::reduced_action::QuantumStateParams;
use qnewton::schrodinger::{PhysParams, PotentialModel, TabulatedPotential};
use qnewton::trajectory::{Law, ScenarioConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSection {
    Free,
    Linear {
        slope: f64,
    },
    Harmonic {
        stiffness: f64,
    },
    /// Two-column `x,V` CSV; relative paths resolve against the config file.
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub hbar: f64,
    pub mu: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumSection {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub law: Law,
    pub x_start: f64,
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
    #[serde(default)]
    pub domain: Option<(f64, f64)>,
    #[serde(default)]
    pub anchor: Option<f64>,
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default)]
    pub newton_init: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorSettings::default();
        IntegratorSection { rel_tol: d.rel_tol, abs_tol: d.abs_tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    /// Summary plus samples as one JSON document.
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub potential: PotentialSection,
    pub physics: PhysicsSection,
    pub quantum: QuantumSection,
    pub run: RunSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

/// Default pair domain: wide for the analytic free pair, moderate for
/// Numerov pairs whose solutions grow in forbidden regions.
fn default_domain(p: &PotentialModel) -> (f64, f64) {
    match p {
        PotentialModel::Free => (-100.0, 100.0),
        PotentialModel::Tabulated(t) => t.range(),
        _ => (-6.0, 6.0),
    }
}

impl ConfigDocument {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut doc: ConfigDocument =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let PotentialSection::Tabulated { path: p } = &mut doc.potential {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(doc)
    }

    pub fn potential_model(&self) -> Result<PotentialModel> {
        Ok(match &self.potential {
            PotentialSection::Free => PotentialModel::Free,
            PotentialSection::Linear { slope } => PotentialModel::Linear { slope: *slope },
            PotentialSection::Harmonic { stiffness } => PotentialModel::Harmonic { stiffness: *stiffness },
            PotentialSection::Tabulated { path } => PotentialModel::Tabulated(
                TabulatedPotential::from_csv_path(path).with_context(|| format!("loading {}", path.display()))?,
            ),
        })
    }

    /// Validated scenario; `tol_scale` multiplies the integrator tolerances.
    pub fn scenario(&self, tol_scale: f64) -> Result<ScenarioConfig> {
        if !(tol_scale > 0.0 && tol_scale.is_finite()) {
            bail!("--tol-scale must be positive, got {tol_scale}");
        }
        let potential = self.potential_model()?;
        let params = PhysParams::new(self.physics.hbar, self.physics.mu, self.physics.energy)?;
        let q = QuantumStateParams::new(self.quantum.a, self.quantum.b, self.quantum.kappa)?;
        let r = &self.run;
        let s = ScenarioConfig {
            domain: r.domain.unwrap_or_else(|| default_domain(&potential)),
            potential,
            params,
            q,
            anchor: r.anchor.unwrap_or(0.0),
            grid_step: r.grid_step.unwrap_or(1e-3),
            x_start: r.x_start,
            t_span: (r.t0, r.t1),
            law: r.law,
            integrator: IntegratorSettings::with_tolerances(
                self.integrator.rel_tol * tol_scale,
                self.integrator.abs_tol * tol_scale,
            ),
            newton_init: r.newton_init,
            samples: r.samples,
            output: self.output.as_ref().and_then(|o| o.path.clone()),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn format(&self) -> OutputFormat {
        self.output.as_ref().map(|o| o.format).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "potential": {"kind": "harmonic", "stiffness": 1.0},
        "physics": {"hbar": 1.0, "mu": 1.0, "energy": 0.8},
        "quantum": {"a": 1.5, "b": -0.2},
        "run": {"law": "newton", "x_start": 0.0, "t0": 0.0, "t1": 5.0, "samples": 11}
    }"#;

    #[test]
    fn parses_minimal_document() {
        let d: ConfigDocument = serde_json::from_str(DOC).unwrap();
        let s = d.scenario(1.0).unwrap();
        assert_eq!(s.law, Law::Newton);
        assert_eq!(s.domain, (-6.0, 6.0));
        assert_eq!(s.integrator.rel_tol, 1e-10);
        assert_eq!(d.format(), OutputFormat::Csv);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = DOC.replace("\"stiffness\": 1.0", "\"stiffness\": 1.0, \"spring\": 2");
        assert!(serde_json::from_str::<ConfigDocument>(&bad).is_err());
        let bad = DOC.replace("\"a\": 1.5", "\"a\": 1.5, \"c\": 0");
        assert!(serde_json::from_str::<ConfigDocument>(&bad).is_err());
        let bad = DOC.replace("\"samples\": 11", "\"samples\": 11, \"seed\": 3");
        assert!(serde_json::from_str::<ConfigDocument>(&bad).is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let d: ConfigDocument = serde_json::from_str(&DOC.replace("\"a\": 1.5", "\"a\": 0.0")).unwrap();
        assert!(d.scenario(1.0).is_err());
        let d: ConfigDocument = serde_json::from_str(&DOC.replace("\"t1\": 5.0", "\"t1\": -1.0")).unwrap();
        assert!(d.scenario(1.0).is_err());
        let d: ConfigDocument = serde_json::from_str(DOC).unwrap();
        assert!(d.scenario(0.0).is_err());
    }
}
