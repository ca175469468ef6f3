//! TOML study configuration.
//!
//! ```toml
//! base_seed = 42          # optional, default 0
//! n = 72                  # default sample size
//! replicates = 100        # default replicates per design
//! lambda_scale = 2.0
//! c = 1e-3
//! # mu_sq = 1e-6          # default: mu_default(n)^2
//! noise_scale = "oracle"  # or "estimated": σ̂ used in λ
//! dependence_noise_sd = 0.5
//!
//! [[design]]
//! id = 17                 # optional, default: position (1-based)
//! p = 250
//! s0 = 5
//! lsnr = 8
//! g = "G2"
//! dependent = true        # optional, default true
//! # n = 100, replicates = 50, csv = "matrix.csv" override per design
//! ```
//!
//! Relative `csv` paths are resolved against the config file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sim::design::{DesignSpec, NuisanceFn, XSource, DEFAULT_DEPENDENCE_NOISE_SD, DEFAULT_N};
use crate::sim::runner::{FitSettings, NoiseScale};
use crate::tuning::DEFAULT_LAMBDA_SCALE;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    base_seed: u64,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_replicates")]
    replicates: usize,
    #[serde(default = "default_lambda_scale")]
    lambda_scale: f64,
    #[serde(default = "default_c")]
    c: f64,
    mu_sq: Option<f64>,
    #[serde(default)]
    noise_scale: NoiseScale,
    #[serde(default = "default_dependence_sd")]
    dependence_noise_sd: f64,
    #[serde(default)]
    design: Vec<RawDesign>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    id: Option<u32>,
    p: usize,
    s0: usize,
    lsnr: f64,
    g: String,
    #[serde(default = "default_true")]
    dependent: bool,
    n: Option<usize>,
    replicates: Option<usize>,
    csv: Option<PathBuf>,
}

fn default_n() -> usize {
    DEFAULT_N
}
fn default_replicates() -> usize {
    100
}
fn default_lambda_scale() -> f64 {
    DEFAULT_LAMBDA_SCALE
}
fn default_c() -> f64 {
    1e-3
}
fn default_dependence_sd() -> f64 {
    DEFAULT_DEPENDENCE_NOISE_SD
}
fn default_true() -> bool {
    true
}

/// A parsed study: designs plus shared tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub base_seed: u64,
    pub settings: FitSettings,
    pub designs: Vec<DesignSpec>,
}

impl StudyConfig {
    /// Parses TOML text; `base_dir` anchors relative CSV paths.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if raw.design.is_empty() {
            return Err(Error::Config("config defines no [[design]] entries".into()));
        }
        if !(raw.lambda_scale.is_finite() && raw.lambda_scale > 0.0) {
            return Err(Error::Config(format!(
                "lambda_scale must be positive, got {}",
                raw.lambda_scale
            )));
        }
        if !(raw.c.is_finite() && raw.c >= 0.0) {
            return Err(Error::Config(format!("c must be >= 0, got {}", raw.c)));
        }
        if let Some(m) = raw.mu_sq {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::Config(format!("mu_sq must be >= 0, got {m}")));
            }
        }
        let mut seen = HashSet::new();
        let mut designs = Vec::with_capacity(raw.design.len());
        for (pos, d) in raw.design.into_iter().enumerate() {
            let id = d.id.unwrap_or(pos as u32 + 1);
            if !seen.insert(id) {
                return Err(Error::Config(format!("duplicate design id {id}")));
            }
            let g: NuisanceFn =
                d.g.parse()
                    .map_err(|e: Error| Error::Config(format!("design {id}: {e}")))?;
            let source = match d.csv {
                Some(p) if p.is_relative() => XSource::Csv(base_dir.join(p)),
                Some(p) => XSource::Csv(p),
                None => XSource::Synthetic,
            };
            let spec = DesignSpec {
                id,
                p: d.p,
                s0: d.s0,
                lsnr: d.lsnr,
                g,
                dependent: d.dependent,
                n: d.n.unwrap_or(raw.n),
                replicates: d.replicates.unwrap_or(raw.replicates),
                base_seed: raw.base_seed,
                source,
                dependence_noise_sd: raw.dependence_noise_sd,
            };
            spec.validate()
                .map_err(|e| Error::Config(format!("design {id}: {e}")))?;
            designs.push(spec);
        }
        Ok(Self {
            base_seed: raw.base_seed,
            settings: FitSettings {
                lambda_scale: raw.lambda_scale,
                mu_sq: raw.mu_sq,
                c: raw.c,
                noise: raw.noise_scale,
            },
            designs,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, dir)
    }

    /// Replaces the seed of every design.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        for d in &mut self.designs {
            d.base_seed = seed;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
base_seed = 9
replicates = 3

[[design]]
p = 250
s0 = 5
lsnr = 8
g = "G2"

[[design]]
id = 40
p = 20
s0 = 2
lsnr = 2
g = "g1"
dependent = false
n = 30
csv = "m.csv"
"#;

    #[test]
    fn parses_defaults_and_overrides() {
        let cfg = StudyConfig::parse(SAMPLE, Path::new("/data")).unwrap();
        assert_eq!(cfg.designs.len(), 2);
        let a = &cfg.designs[0];
        assert_eq!((a.id, a.n, a.replicates, a.base_seed), (1, 72, 3, 9));
        assert!(a.dependent);
        let b = &cfg.designs[1];
        assert_eq!((b.id, b.n, b.g), (40, 30, NuisanceFn::G1));
        assert_eq!(b.source, XSource::Csv(PathBuf::from("/data/m.csv")));
        assert_eq!(cfg.settings, FitSettings::default());
        assert_eq!(cfg.with_seed(5).designs[1].base_seed, 5);
    }

    #[test]
    fn noise_scale_key() {
        let text = "noise_scale = \"estimated\"\n[[design]]\np = 5\ns0 = 1\nlsnr = 2\ng = \"G1\"\n";
        let cfg = StudyConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.settings.noise, NoiseScale::Estimated);
        assert!(StudyConfig::parse(&text.replace("estimated", "guess"), Path::new(".")).is_err());
    }

    #[test]
    fn malformed_reports_line() {
        let err = StudyConfig::parse("base_seed = 1\n[[design]]\np = \"x\"\n", Path::new("."))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn semantic_errors() {
        for text in [
            "base_seed = 1\n",
            "[[design]]\np = 5\ns0 = 6\nlsnr = 2\ng = \"G1\"\n",
            "[[design]]\np = 5\ns0 = 1\nlsnr = 2\ng = \"G7\"\n",
            "[[design]]\np = 5\ns0 = 1\nlsnr = 2\ng = \"G1\"\nbogus = 1\n",
            "[[design]]\nid = 1\np = 5\ns0 = 1\nlsnr = 2\ng = \"G1\"\n[[design]]\nid = 1\np = 5\ns0 = 1\nlsnr = 2\ng = \"G1\"\n",
        ] {
            assert!(matches!(StudyConfig::parse(text, Path::new(".")), Err(Error::Config(_))), "{text}");
        }
    }
}
