//! Flag/config-file merging and the exit-code taxonomy.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use hadv_core::corpus::CorpusError;
use hadv_core::curation::CurationError;
use hadv_core::editdist::DistanceError;
use hadv_core::kdao::KdaoError;
use hadv_core::rates::RateError;
use hadv_core::relgen::RelgenError;
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

/// A command failure and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub const INPUT: u8 = 2;
    pub const SEMANTIC: u8 = 3;
    pub const INFEASIBLE: u8 = 4;

    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: Self::INPUT,
            error: error.into(),
        }
    }

    pub fn semantic(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: Self::SEMANTIC,
            error: error.into(),
        }
    }

    pub fn infeasible(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: Self::INFEASIBLE,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::input(e)
    }
}

impl From<DistanceError> for Failure {
    fn from(e: DistanceError) -> Self {
        Failure::input(e)
    }
}

impl From<RateError> for Failure {
    fn from(e: RateError) -> Self {
        Failure::semantic(e)
    }
}

impl From<KdaoError> for Failure {
    fn from(e: KdaoError) -> Self {
        match e {
            KdaoError::InsufficientCorpus { .. } => Failure::infeasible(e),
            KdaoError::InvalidConfig(_) | KdaoError::InvalidRate(_) | KdaoError::Corpus(_) => Failure::input(e),
            _ => Failure::semantic(e),
        }
    }
}

impl From<RelgenError> for Failure {
    fn from(e: RelgenError) -> Self {
        match e {
            RelgenError::NoAlternativePair { .. } => Failure::semantic(e),
            _ => Failure::input(e),
        }
    }
}

impl From<CurationError> for Failure {
    fn from(e: CurationError) -> Self {
        match e {
            CurationError::Infeasible(_)
            | CurationError::PoolExhausted { .. }
            | CurationError::TooManyRejections { .. } => Failure::infeasible(e),
            CurationError::InvalidSpec(_) | CurationError::Corpus(_) => Failure::input(e),
            _ => Failure::semantic(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Values from an optional JSON config object. Keys mirror the long flag
/// names (`pos-rate` or `pos_rate`); a flag given on the command line wins.
#[derive(Debug, Default)]
pub struct Settings {
    config: Map<String, Value>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> CmdResult<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let raw = fs::read_to_string(path)
            .map_err(|e| Failure::input(anyhow::anyhow!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&raw) {
            Ok(Value::Object(config)) => Ok(Settings { config }),
            Ok(_) => Err(Failure::input(anyhow::anyhow!(
                "config {} must hold a JSON object",
                path.display()
            ))),
            Err(e) => Err(Failure::input(anyhow::anyhow!("config {}: {e}", path.display()))),
        }
    }

    fn lookup(&self, key: &str) -> Option<&Value> {
        self.config
            .get(key)
            .or_else(|| self.config.get(&key.replace('-', "_")))
    }

    pub fn opt<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> CmdResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.lookup(key)
            .map(|v| {
                serde_json::from_value(v.clone())
                    .map_err(|e| Failure::input(anyhow::anyhow!("config key {key:?}: {e}")))
            })
            .transpose()
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str, flag: Option<T>, default: T) -> CmdResult<T> {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }

    pub fn req<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> CmdResult<T> {
        self.opt(key, flag)?
            .ok_or_else(|| Failure::input(anyhow::anyhow!("--{key} is required (flag or config key)")))
    }

    /// A boolean switch: set by the flag, else by the config, else false.
    pub fn switch(&self, key: &str, flag: bool) -> CmdResult<bool> {
        self.get(key, flag.then_some(true), false)
    }

    pub fn path(&self, key: &str, flag: Option<PathBuf>) -> CmdResult<PathBuf> {
        self.req(key, flag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"epsilon": 0.3, "pos_rate": 0.5, "no-far-check": true}"#).unwrap();
        let s = Settings::load(Some(&p)).unwrap();
        assert_eq!(s.get("epsilon", None, 0.25).unwrap(), 0.3);
        assert_eq!(s.get("epsilon", Some(0.1), 0.25).unwrap(), 0.1);
        assert_eq!(s.get("pos-rate", None, 0.25).unwrap(), 0.5);
        assert!(s.switch("no-far-check", false).unwrap());
        assert!(!s.switch("body-variant", false).unwrap());
        assert_eq!(s.get::<u64>("seed", None, 7).unwrap(), 7);
        assert_eq!(s.req::<usize>("size", None).unwrap_err().code, Failure::INPUT);
    }

    #[test]
    fn bad_config_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, "[1, 2]").unwrap();
        assert_eq!(Settings::load(Some(&p)).unwrap_err().code, Failure::INPUT);
        fs::write(&p, r#"{"epsilon": "high"}"#).unwrap();
        let s = Settings::load(Some(&p)).unwrap();
        assert_eq!(s.get("epsilon", None, 0.25).unwrap_err().code, Failure::INPUT);
    }
}
