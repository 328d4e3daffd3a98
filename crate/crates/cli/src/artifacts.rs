use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use msntf::persist::{read_matrix_csv, read_tensor_csv, write_tensor_csv};
use msntf::{DenseTensor3, Matrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const TENSOR: &str = "tensor.csv";
pub const TENSOR_META: &str = "tensor.json";
pub const DEMOGRAPHICS: &str = "demographics.csv";
pub const TRUTH_A: &str = "truth_A.csv";
pub const TRUTH_B: &str = "truth_B.csv";
pub const TRUTH_C: &str = "truth_C.csv";
pub const TRUTH_GROUPS: &str = "truth_groups.csv";
pub const CC_RUNS: &str = "cc_runs.csv";
pub const CC_SUMMARY: &str = "cc_summary.csv";
pub const FACTOR_A: &str = "factors_A.csv";
pub const FACTOR_B: &str = "factors_B.csv";
pub const FACTOR_C: &str = "factors_C.csv";
pub const WEIGHTS: &str = "weights.csv";
pub const FIT_RUNS: &str = "fit_runs.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const SILHOUETTE: &str = "silhouette.csv";
pub const ELBOW: &str = "elbow.csv";
pub const CHI2_NULL: &str = "chi2_vs_null.csv";
pub const CHI2_PAIRWISE: &str = "chi2_pairwise.csv";
pub const CLUSTER_DEMOGRAPHICS: &str = "cluster_demographics.csv";
pub const GROUPS: &str = "groups.csv";
pub const GROUP_THRESHOLDS: &str = "group_thresholds.csv";
pub const JACCARD: &str = "jaccard.csv";
pub const REPORT_DIR: &str = "report";

/// Row, day and week labels for a persisted tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub shape: (usize, usize, usize),
    pub users: Vec<String>,
    pub days: Vec<String>,
    pub weeks: Vec<String>,
    pub source: String,
}

pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn create(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Workspace { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(BufWriter::new(f))
    }

    pub fn reader(&self, name: &str) -> Result<BufReader<File>> {
        open(&self.path(name))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, v)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        serde_json::from_reader(self.reader(name)?).with_context(|| format!("parsing {}", self.path(name).display()))
    }

    /// Writes rows of already-formatted fields.
    pub fn write_table(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.writer(name)?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_tensor(&self, t: &DenseTensor3, meta: &TensorMeta) -> Result<()> {
        let mut w = self.writer(TENSOR)?;
        write_tensor_csv(t, &mut w)?;
        w.flush()?;
        self.write_json(TENSOR_META, meta)
    }

    pub fn read_tensor(&self) -> Result<(DenseTensor3, TensorMeta)> {
        let meta: TensorMeta = self.read_json(TENSOR_META)?;
        let t = read_tensor_csv(self.reader(TENSOR)?, meta.shape)
            .with_context(|| format!("reading {}", self.path(TENSOR).display()))?;
        Ok((t, meta))
    }

    pub fn read_matrix(&self, name: &str) -> Result<(Vec<String>, Matrix)> {
        read_matrix_csv(self.reader(name)?).with_context(|| format!("reading {}", self.path(name).display()))
    }

    pub fn hash(&self, name: &str) -> Result<String> {
        sha256_file(&self.path(name))
    }
}

pub fn open(p: &Path) -> Result<BufReader<File>> {
    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
    Ok(BufReader::new(f))
}

pub fn sha256_file(p: &Path) -> Result<String> {
    let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Per-command record of what went in and what came out. No timestamps, so
/// identical runs produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    /// Input name to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
            warnings: Vec::new(),
        }
    }

    pub fn input(&mut self, ws: &Workspace, name: &str) -> Result<()> {
        self.inputs.insert(name.to_string(), ws.hash(name)?);
        Ok(())
    }

    pub fn external_input(&mut self, p: &Path) -> Result<()> {
        self.inputs.insert(p.display().to_string(), sha256_file(p)?);
        Ok(())
    }

    pub fn save(&self, ws: &Workspace) -> Result<()> {
        ws.write_json(&format!("{}.json", self.command), self)
    }
}

pub fn f(v: f64) -> String {
    msntf::persist::fmt_f64(v)
}
