//! Run configuration, read from TOML or JSON and overridden by CLI flags.
//!
//! ```toml
//! precision_b = 12      # picks the preset ring and gadget unless overridden
//! gamma = 1
//! delta_noise = "2^-51"
//! D = 65536
//! l = 2
//! threads = 4
//! listen = "127.0.0.1:7410"
//! seed = 7
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::params::{parse_delta, FheParams};
use crate::trace_pack::default_beta;
use crate::{Error, Result};

/// A noise level written either as a number or as `"2^-36"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevel {
    Value(f64),
    Text(String),
}

impl NoiseLevel {
    pub fn value(&self) -> Result<f64> {
        match self {
            NoiseLevel::Value(v) => Ok(*v),
            NoiseLevel::Text(s) => parse_delta(s),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub t: Option<usize>,
    pub alpha: Option<u32>,
    pub precision_b: Option<u32>,
    pub delta_noise: Option<NoiseLevel>,
    /// Gadget base.
    #[serde(rename = "D")]
    pub base: Option<u64>,
    /// Gadget levels.
    #[serde(rename = "l")]
    pub levels: Option<u32>,
    pub gamma: Option<u32>,
    pub beta: Option<u32>,
    pub threads: Option<usize>,
    pub listen: Option<String>,
    pub connect: Option<String>,
    pub seed: Option<u64>,
}

impl Config {
    /// `.json` files parse as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: Config) -> Config {
        Config {
            t: other.t.or(self.t),
            alpha: other.alpha.or(self.alpha),
            precision_b: other.precision_b.or(self.precision_b),
            delta_noise: other.delta_noise.or(self.delta_noise),
            base: other.base.or(self.base),
            levels: other.levels.or(self.levels),
            gamma: other.gamma.or(self.gamma),
            beta: other.beta.or(self.beta),
            threads: other.threads.or(self.threads),
            listen: other.listen.or(self.listen),
            connect: other.connect.or(self.connect),
            seed: other.seed.or(self.seed),
        }
    }

    /// Scheme parameters: the preset for `precision_b` (default 8) at the
    /// chosen `gamma` (default 1), with every explicitly set field applied
    /// on top. `beta` follows `alpha` unless set.
    pub fn params(&self) -> Result<FheParams> {
        let b = self.precision_b.unwrap_or(8);
        let gamma = self.gamma.unwrap_or(1);
        if gamma > crate::trace_pack::MAX_GAMMA {
            return Err(Error::Config(format!("gamma = {gamma} exceeds the maximum extraction level 2")));
        }
        let mut p = match FheParams::preset(b, gamma) {
            Ok(p) => p,
            // no preset for this width: the ring must then be given explicitly
            Err(_) if self.t.is_some() && self.alpha.is_some() => FheParams::preset(8, gamma).map(|mut p| {
                p.precision_bits = b;
                p
            })?,
            Err(e) => return Err(e),
        };
        if let Some(t) = self.t {
            p.t = t;
        }
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        if let Some(d) = &self.delta_noise {
            p.delta = d.value()?;
        }
        if let Some(base) = self.base {
            p.base = base;
        }
        if let Some(l) = self.levels {
            p.levels = l;
        }
        let ring = p.ring()?;
        p.beta = match self.beta {
            Some(beta) => {
                if beta == 0 || beta >= p.alpha {
                    return Err(Error::Config(format!("beta = {beta} must satisfy 1 <= beta < alpha = {}", p.alpha)));
                }
                beta
            }
            None => default_beta(&ring),
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_overrides() {
        let c = Config::from_toml("precision_b = 12\ngamma = 1\n").unwrap();
        assert_eq!(c.params().unwrap(), FheParams::preset(12, 1).unwrap());
        let c = Config::from_toml("precision_b = 16\ngamma = 0\nbeta = 2\nD = 1024\nl = 4\ndelta_noise = \"2^-50\"\n")
            .unwrap();
        let p = c.params().unwrap();
        assert_eq!((p.t, p.alpha, p.beta, p.base, p.levels, p.gamma), (5, 5, 2, 1024, 4, 0));
        assert_eq!(p.delta, 2f64.powi(-50));
        let j =
            Config::from_json(r#"{"t": 3, "alpha": 4, "precision_b": 8, "delta_noise": 1e-11, "gamma": 2, "seed": 3}"#)
                .unwrap();
        let p = j.params().unwrap();
        assert_eq!((p.t, p.alpha, p.beta, p.delta), (3, 4, 3, 1e-11));
        let flags = Config { gamma: Some(0), ..Default::default() };
        assert_eq!(j.clone().merge(flags).params().unwrap().gamma, 0);
        assert_eq!(j.merge(Config::default()).seed, Some(3));
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        let msg = |s: &str| Config::from_toml(s).and_then(|c| c.params()).unwrap_err().to_string();
        assert!(msg("gamma = 3").contains("gamma"));
        assert!(msg("beta = 7").contains("beta"));
        assert!(msg("beta = 0").contains("beta"));
        assert!(msg("precision_b = 10").contains("preset"));
        assert!(msg("delta_noise = \"two\"").contains("noise"));
        assert!(Config::from_toml("colour = 1").is_err());
        // γ cannot exceed α
        assert!(Config::from_toml("t = 5\nalpha = 1\ngamma = 2\nbeta = 1").unwrap().params().is_err());
    }

    #[test]
    fn loads_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "threads = 2\nlisten = \"0.0.0.0:1\"").unwrap();
        assert_eq!(Config::load(&t).unwrap().threads, Some(2));
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"connect": "h:2"}"#).unwrap();
        assert_eq!(Config::load(&j).unwrap().connect.as_deref(), Some("h:2"));
    }
}
