//! Declarative experiment grids.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokenlens::infometrics::{AnalysisOptions, ContextBoundary, MAX_K};
use tokenlens::{Compressor, Estimator, Family};

/// A configuration problem detected before any work starts.
#[derive(Debug, thiserror::Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsToggles {
    /// Highest k-gram order; 1 disables conditional entropies.
    pub max_k: usize,
    pub estimator: Estimator,
    pub boundary: ContextBoundary,
    /// Rényi order for the head-weighted utilization.
    pub alpha: f64,
    /// Raw and token compressed bpc for every configured compressor.
    pub lz: bool,
}

impl Default for MetricsToggles {
    fn default() -> Self {
        let a = AnalysisOptions::default();
        MetricsToggles {
            max_k: a.max_k,
            estimator: a.estimator,
            boundary: a.boundary,
            alpha: a.alpha,
            lz: true,
        }
    }
}

impl MetricsToggles {
    pub fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            max_k: self.max_k,
            estimator: self.estimator,
            boundary: self.boundary,
            alpha: self.alpha,
        }
    }
}

fn default_compressors() -> Vec<String> {
    vec!["gzip".into()]
}

fn default_jobs() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_separator() -> String {
    "\n".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domains: Vec<DomainSpec>,
    pub families: Vec<Family>,
    pub vocab_sizes: Vec<usize>,
    /// Training prefix lengths in characters, ascending.
    pub train_sizes: Vec<usize>,
    /// Length of the held-out tail every cell of a domain is scored on.
    pub test_chars: usize,
    /// `(train_domain, test_domain)`: score models of the first domain on
    /// the test tail of the second.
    #[serde(default)]
    pub mismatch_pairs: Vec<(String, String)>,
    #[serde(default)]
    pub metrics: MetricsToggles,
    /// Specs such as `gzip`, `zstd:19` or `lzma-9`.
    #[serde(default = "default_compressors")]
    pub compressors: Vec<String>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on concurrently running cells.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_true")]
    pub nfkc: bool,
    /// Inserted between consecutive documents of a domain.
    #[serde(default = "default_separator")]
    pub separator: String,
}

impl ExperimentConfig {
    /// Reads a TOML or JSON config. Relative paths are resolved against the
    /// directory holding the file.
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?,
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.domains {
            d.inputs.iter_mut().for_each(fix);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.domains.is_empty() {
            return Err(bad("no domains declared"));
        }
        for (i, d) in self.domains.iter().enumerate() {
            if d.name.is_empty() || !d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(bad(format!("domain name `{}` must be nonempty ASCII alphanumerics, - or _", d.name)));
            }
            if self.domains[..i].iter().any(|o| o.name == d.name) {
                return Err(bad(format!("domain `{}` declared twice", d.name)));
            }
            if d.inputs.is_empty() {
                return Err(bad(format!("domain `{}` has no inputs", d.name)));
            }
            for p in &d.inputs {
                if !p.is_file() {
                    return Err(bad(format!("input {} of domain `{}` does not exist", p.display(), d.name)));
                }
            }
        }
        if self.families.is_empty() || self.vocab_sizes.is_empty() || self.train_sizes.is_empty() {
            return Err(bad("families, vocab_sizes and train_sizes must be nonempty"));
        }
        if self.families.contains(&Family::ExternalRankList) {
            return Err(bad("rank lists cannot be trained in a grid; use bench-ranklist"));
        }
        if !self.train_sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(bad("train_sizes must be strictly ascending"));
        }
        if self.train_sizes[0] == 0 {
            return Err(bad("train sizes must be positive"));
        }
        if self.test_chars == 0 {
            return Err(bad("test_chars must be positive"));
        }
        for (a, b) in &self.mismatch_pairs {
            for name in [a, b] {
                if !self.domains.iter().any(|d| &d.name == name) {
                    return Err(bad(format!("mismatch pair references undeclared domain `{name}`")));
                }
            }
        }
        if self.metrics.max_k == 0 || self.metrics.max_k > MAX_K {
            return Err(bad(format!("metrics.max_k must be in 1..={MAX_K}")));
        }
        if self.jobs == 0 {
            return Err(bad("jobs must be at least 1"));
        }
        self.parsed_compressors()?;
        Ok(())
    }

    pub fn parsed_compressors(&self) -> anyhow::Result<Vec<Compressor>> {
        self.compressors
            .iter()
            .map(|s| s.parse().map_err(|e| bad(format!("{e}"))))
            .collect()
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    /// Hash of everything that affects results. `jobs` and `output_dir`
    /// are excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.jobs = 1;
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dir: &Path) -> ExperimentConfig {
        let input = dir.join("a.txt");
        std::fs::write(&input, "hello").unwrap();
        ExperimentConfig {
            domains: vec![DomainSpec {
                name: "english".into(),
                inputs: vec![input],
            }],
            families: vec![Family::Bpe],
            vocab_sizes: vec![300],
            train_sizes: vec![10, 100],
            test_chars: 10,
            mismatch_pairs: vec![],
            metrics: MetricsToggles::default(),
            compressors: default_compressors(),
            output_dir: dir.join("out"),
            seed: 0,
            jobs: 1,
            nfkc: true,
            separator: "\n".into(),
        }
    }

    #[test]
    fn toml_round_trip_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "x").unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            r#"
families = ["bpe", "unigram"]
vocab_sizes = [300]
train_sizes = [10, 100]
test_chars = 50
output_dir = "out"

[[domains]]
name = "english"
inputs = ["a.txt"]
"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.compressors, ["gzip"]);
        assert_eq!(cfg.metrics.max_k, 5);
        assert!(cfg.nfkc);
    }

    #[test]
    fn validation_failures() {
        let dir = tempfile::tempdir().unwrap();
        let ok = sample(dir.path());
        ok.validate().unwrap();

        let mut c = ok.clone();
        c.train_sizes = vec![100, 10];
        assert!(c.validate().unwrap_err().is::<ConfigError>());

        let mut c = ok.clone();
        c.mismatch_pairs = vec![("english".into(), "code".into())];
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.domains[0].inputs = vec![dir.path().join("missing.txt")];
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.compressors = vec!["brotli".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_scheduling() {
        let dir = tempfile::tempdir().unwrap();
        let a = sample(dir.path());
        let mut b = a.clone();
        b.jobs = 4;
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
