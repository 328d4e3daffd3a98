use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use msntf::clustering::Method;
use msntf::ingest::CalendarConfig;
use msntf::parafac::FitConfig;
use msntf::stats::Bonferroni;
use msntf::synth::SyntheticSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const OUT_DIR_ENV: &str = "MSNTF_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "msntf-out";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub receipts: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub ranks: Vec<usize>,
    pub threshold: f64,
    /// `run` fits at the selected rank instead of `fit.rank` when one exists.
    pub use_selected: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            ranks: (1..=6).collect(),
            threshold: msntf::corcondia::DEFAULT_CC_THRESHOLD,
            use_selected: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub method: Method,
    pub k: usize,
    pub k_range: Vec<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            method: Method::KMedoids,
            k: 5,
            k_range: (1..=10).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub fraction: f64,
    pub bonferroni: Bonferroni,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            fraction: msntf::groups::DEFAULT_FRACTION,
            bonferroni: Bonferroni::Pairs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    /// Derived from the earliest and latest receipt when absent.
    pub calendar: Option<CalendarConfig>,
    /// `fit.seed` is replaced by the global `seed` at run time.
    pub fit: FitConfig,
    /// Restarts per rank for the scan and for the final fit.
    pub n_runs: usize,
    pub scan: ScanConfig,
    pub cluster: ClusterConfig,
    pub stats: StatsConfig,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: InputConfig::default(),
            calendar: None,
            fit: FitConfig::default(),
            n_runs: 20,
            scan: ScanConfig::default(),
            cluster: ClusterConfig::default(),
            stats: StatsConfig::default(),
            output_dir: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => serde_json::to_value(PipelineConfig::default())?,
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: PipelineConfig = serde_json::from_value(value).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            bail!("n_runs must be >= 1");
        }
        if self.scan.ranks.is_empty() || self.scan.ranks.contains(&0) {
            bail!("scan.ranks must be non-empty and positive");
        }
        if self.cluster.k == 0 || self.cluster.k_range.contains(&0) {
            bail!("cluster.k and cluster.k_range must be positive");
        }
        if !(self.stats.fraction > 0.0 && self.stats.fraction < 1.0) {
            bail!("stats.fraction must lie in (0, 1)");
        }
        self.fit_config(self.fit.rank).validate()?;
        Ok(())
    }

    pub fn fit_config(&self, rank: usize) -> FitConfig {
        FitConfig {
            rank,
            seed: self.seed,
            ..self.fit.clone()
        }
    }

    /// `--out`, then `output_dir`, then the environment, then the default.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON, falling back to a
/// plain string; missing objects along the path are created.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let Some((path, raw)) = spec.split_once('=') else {
        bail!("override {spec:?} is not of the form key=value");
    };
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override key {path:?} has an empty segment");
    }
    let mut cur = root;
    for key in &keys[..keys.len() - 1] {
        if cur.get(*key).is_none_or(Value::is_null) {
            cur[*key] = Value::Object(Default::default());
        }
        cur = cur.get_mut(*key).filter(|v| v.is_object()).with_context(|| format!("{key:?} in {path:?} is not an object"))?;
    }
    cur[keys[keys.len() - 1]] = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.n_runs, 20);
        assert_eq!(c.scan.threshold, 85.0);
        assert_eq!(c.cluster.method, Method::KMedoids);
        assert_eq!(c.cluster.k, 5);
        assert_eq!(c.stats.fraction, 0.10);
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig::default();
        c.input.synthetic = Some(SyntheticSpec::three_patterns(10, 4, 1));
        c.calendar = Some(CalendarConfig::new(
            chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            chrono::NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
        ));
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&s).unwrap(), c);
    }

    #[test]
    fn overrides() {
        let mut v = serde_json::to_value(PipelineConfig::default()).unwrap();
        apply_override(&mut v, "cluster.k=4").unwrap();
        apply_override(&mut v, "cluster.method=k-means").unwrap();
        apply_override(&mut v, "input.receipts=data/r.csv").unwrap();
        apply_override(&mut v, "scan.ranks=[1,2,3]").unwrap();
        let c: PipelineConfig = serde_json::from_value(v).unwrap();
        assert_eq!(c.cluster.k, 4);
        assert_eq!(c.cluster.method, Method::KMeans);
        assert_eq!(c.input.receipts, Some(PathBuf::from("data/r.csv")));
        assert_eq!(c.scan.ranks, vec![1, 2, 3]);
        let mut v = serde_json::to_value(PipelineConfig::default()).unwrap();
        assert!(apply_override(&mut v, "nokey").is_err());
        apply_override(&mut v, "clusterr.k=3").unwrap();
        assert!(serde_json::from_value::<PipelineConfig>(v).is_err());
    }
}
