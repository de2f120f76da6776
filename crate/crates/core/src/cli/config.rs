use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{Environment, TrigPolynomial};
use crate::error::{Error, Result};
use crate::rotation::Frequency;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaSpec {
    Float(f64),
    Quotients(Vec<u64>),
}

impl AlphaSpec {
    /// A preset name (`golden`, `silver`, `liouville-demo`) or a float.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "golden" => Ok(AlphaSpec::Quotients(vec![1])),
            "silver" => Ok(AlphaSpec::Float(std::f64::consts::SQRT_2 - 1.0)),
            "liouville-demo" => Ok(AlphaSpec::Quotients(vec![1, 10, 100, 1000])),
            other => other
                .parse::<f64>()
                .map(AlphaSpec::Float)
                .map_err(|_| Error::Config(format!("unknown frequency `{other}`"))),
        }
    }

    pub fn frequency(&self) -> Result<Frequency> {
        match self {
            AlphaSpec::Float(v) => Frequency::from_float(*v),
            AlphaSpec::Quotients(q) => Frequency::from_quotients(q.clone()),
        }
    }
}

/// `{"alpha": {"float": r} | {"quotients": [..]}, "cos": [..], "sin": [..]}`
/// with an optional constant `drift` added to the log-odds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub alpha: AlphaSpec,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub drift: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Default for EnvironmentSpec {
    /// `cos 2πx` with the golden frequency.
    fn default() -> Self {
        EnvironmentSpec {
            alpha: AlphaSpec::Quotients(vec![1]),
            cos: vec![1.0],
            sin: vec![],
            drift: 0.0,
        }
    }
}

impl EnvironmentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!(
                "cannot read environment file {}: {e}",
                path.display()
            ))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "malformed environment file {}: {e}",
                path.display()
            ))
        })
    }

    pub fn build(&self) -> Result<Environment> {
        if !self.drift.is_finite() {
            return Err(Error::Config("drift must be finite".into()));
        }
        let f = TrigPolynomial::new(self.cos.clone(), self.sin.clone())?;
        Ok(Environment::with_drift(
            f,
            self.alpha.frequency()?,
            self.drift,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ChainArg {
    Walk,
    TwoStep,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    TwoStep,
    Frozen,
}

/// Command parameters; unset fields take per-command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_max: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taboo: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

macro_rules! merge_fields {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Params {
    /// Fields set in `other` win.
    pub fn merge(&mut self, other: &Params) {
        merge_fields!(
            self,
            other,
            x,
            x2,
            n,
            q,
            q_max,
            window,
            depth,
            grid,
            horizon,
            taboo,
            chain,
            kernel,
            sites,
            harmonics,
            paths,
            checkpoints,
            deltas
        );
    }
}

/// Everything a run depends on. Embedded in every artifact; feeding it
/// back through `--config` reproduces the artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub environment: EnvironmentSpec,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Contents of a `--config` file: any subset of [`ExperimentConfig`].
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: Option<u32>,
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub environment: Option<EnvironmentSpec>,
    #[serde(default)]
    pub params: Params,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("malformed config {}: {e}", path.display())))?;
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                return Err(Error::Config(format!(
                    "config schema version {v}, expected {SCHEMA_VERSION}"
                )));
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn environment_json_forms() {
        let spec: EnvironmentSpec =
            serde_json::from_str(r#"{"alpha": {"float": 0.25}, "cos": [1.0]}"#).unwrap();
        assert_eq!(spec.alpha, AlphaSpec::Float(0.25));
        assert!(spec.sin.is_empty());
        let spec: EnvironmentSpec =
            serde_json::from_str(r#"{"alpha": {"quotients": [1, 10]}, "cos": [], "sin": [0.5]}"#)
                .unwrap();
        assert_eq!(spec.alpha, AlphaSpec::Quotients(vec![1, 10]));
        assert!(spec.build().is_ok());
        assert!(serde_json::from_str::<EnvironmentSpec>(
            r#"{"alpha": {"float": 0.25}, "tan": []}"#
        )
        .is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(
            AlphaSpec::parse("golden").unwrap(),
            AlphaSpec::Quotients(vec![1])
        );
        assert_eq!(
            AlphaSpec::parse("liouville-demo").unwrap(),
            AlphaSpec::Quotients(vec![1, 10, 100, 1000])
        );
        assert_eq!(AlphaSpec::parse("0.3").unwrap(), AlphaSpec::Float(0.3));
        assert!(AlphaSpec::parse("bronze").is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            command: "mix".into(),
            seed: u64::MAX,
            environment: EnvironmentSpec {
                alpha: AlphaSpec::Float(std::f64::consts::SQRT_2 - 1.0),
                cos: vec![0.1, -1e-300],
                sin: vec![std::f64::consts::PI],
                drift: 0.2,
            },
            params: Params {
                x: Some(0.37),
                harmonics: Some(vec!["cos1".into()]),
                kernel: Some(KernelArg::Frozen),
                ..Params::default()
            },
        };
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn merge_prefers_later() {
        let mut a = Params {
            x: Some(0.1),
            n: Some(5),
            ..Params::default()
        };
        a.merge(&Params {
            n: Some(7),
            ..Params::default()
        });
        assert_eq!((a.x, a.n), (Some(0.1), Some(7)));
    }
}
