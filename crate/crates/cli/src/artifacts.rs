//! File layout of a run directory and crash-safe writes into it.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use beamseq_core::dataset::{Dataset, FeatureStats};
use beamseq_core::scene::BsId;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// Paths of every artifact a run produces.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn create(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.root).map_err(|e| CliError::data(self.root.display(), e))
    }

    fn file(&self, name: impl AsRef<Path>) -> PathBuf {
        self.root.join(name)
    }

    pub fn config(&self) -> PathBuf {
        self.file("config.toml")
    }

    pub fn scene(&self) -> PathBuf {
        self.file("scene.toml")
    }

    pub fn grid(&self) -> PathBuf {
        self.file("grid.bmgr")
    }

    pub fn dataset(&self, source: BsId) -> PathBuf {
        self.file(format!("dataset_{source}.bmsq"))
    }

    pub fn label_histogram(&self, source: BsId) -> PathBuf {
        self.file(format!("labels_{source}.csv"))
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.file(format!("{name}.bmck"))
    }

    pub fn train_state(&self, name: &str) -> PathBuf {
        self.file(format!("{name}.state.bmck"))
    }

    pub fn history(&self, name: &str) -> PathBuf {
        self.file(format!("history_{name}.csv"))
    }

    pub fn records(&self) -> PathBuf {
        self.file("records.csv")
    }

    pub fn summary_csv(&self) -> PathBuf {
        self.file("summary.csv")
    }

    pub fn summary_txt(&self) -> PathBuf {
        self.file("summary.txt")
    }

    pub fn cdf(&self, scheme: &str) -> PathBuf {
        self.file(format!("cdf_{scheme}.csv"))
    }

    pub fn sweep_records(&self) -> PathBuf {
        self.file("sweep_records.csv")
    }

    pub fn delay_sweep(&self) -> PathBuf {
        self.file("delay_sweep.csv")
    }
}

/// Model names used for checkpoints and scheme tags.
pub fn seq2seq_name(source: BsId) -> String {
    format!("seq2seq_{source}")
}

pub fn ffn_name(source: BsId) -> String {
    format!("ffn_{source}")
}

/// Write `path` through a temporary file in the same directory, so a failed
/// command never leaves a truncated artifact behind.
pub fn atomic_write<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<&mut fs::File>) -> Result<(), CliError>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::data(dir.display(), e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(|e| CliError::data(path.display(), e))?;
    }
    tmp.persist(path).map_err(|e| CliError::data(path.display(), e.error))?;
    Ok(())
}

/// Provenance lines embedded in every text artifact.
pub fn provenance(config: &RunConfig, command: &str) -> Vec<String> {
    vec![format!("beamseq {command}"), format!("config_hash = {}", config.hash()), format!("seed = {}", config.seed)]
}

pub fn write_text(path: &Path, provenance: &[String], body: &str) -> Result<(), CliError> {
    atomic_write(path, |w| {
        for line in provenance {
            writeln!(w, "# {line}")?;
        }
        w.write_all(body.as_bytes())?;
        Ok(())
    })
}

/// SHA-256 of the normalization statistics a model is tied to.
pub fn stats_hash(stats: &FeatureStats) -> String {
    let mut h = Sha256::new();
    for v in stats.mean.iter().chain(&stats.std) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Load a generated dataset and check it was produced by this configuration.
pub fn load_dataset(run: &RunDir, config: &RunConfig, source: BsId) -> Result<Dataset, CliError> {
    let path = run.dataset(source);
    if !path.exists() {
        return Err(CliError::Data(format!("{} not found; run `beamseq gen` first", path.display())));
    }
    let ds = Dataset::load(&path).map_err(|e| CliError::data(path.display(), e))?;
    if ds.meta.seed != config.seed || ds.meta.dataset != config.dataset_for(source) || ds.meta.scene != config.scene {
        return Err(CliError::Data(format!(
            "{} was generated with a different configuration or seed; rerun `beamseq gen`",
            path.display()
        )));
    }
    Ok(ds)
}
