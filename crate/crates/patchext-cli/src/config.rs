use std::path::Path;

use serde::Deserialize;

use crate::report::Failure;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_DELTA: usize = 6;

/// Run settings read from a TOML file. A command-line flag (or `PATCHEXT_SEED`)
/// overrides the file, which overrides the built-in default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Degree offset of the proxy solution.
    pub delta: Option<usize>,
    pub orthogonality_tol: Option<f64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {}", path.display(), e.message())))
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn delta(&self, flag: Option<usize>) -> usize {
        flag.or(self.delta).unwrap_or(DEFAULT_DELTA)
    }

    pub fn threads(&self, flag: Option<usize>) -> usize {
        flag.or(self.threads).unwrap_or(0)
    }

    pub fn orthogonality_tol(&self, flag: Option<f64>, default: f64) -> f64 {
        flag.or(self.orthogonality_tol).unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let c: Config = toml::from_str("seed = 5\ndelta = 8").unwrap();
        assert_eq!(c.seed(Some(1)), 1);
        assert_eq!(c.seed(None), 5);
        assert_eq!(c.delta(None), 8);
        assert_eq!(Config::default().delta(None), DEFAULT_DELTA);
        assert_eq!(c.threads(None), 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("sede = 5").is_err());
    }
}
