//! Supervised windows pairing a source BS's past features with a target
//! RSU's future optimal beams, and the `BMSQ` file format that stores them.
//!
//! File layout (all little-endian):
//!
//! ```text
//! "BMSQ"  version:u32  beams:u32  features:u32  input_len:u32  output_len:u32  count:u32
//! mean:f64 x features   std:f64 x features
//! meta_len:u32  meta:UTF-8 TOML (seed, scene config, dataset config, census)
//! count x { features:f32 x (input_len*features) row-major, labels:u16 x output_len,
//!           trajectory_id:u32, start_slot:u32 }
//! ```
//!
//! Features are stored unstandardized; `mean`/`std` come from the training
//! split and are applied by [`FeatureStats::standardize`].

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Preprocessor;
use crate::phy::{self, Codebook, PhyError};
use crate::scene::{
    sample_trajectory, snap_to_grid, BsId, ChannelGrid, Point2, Scene, SceneConfig, SceneError, Trajectory,
    TrajectoryConfig,
};

pub const MAGIC: &[u8; 4] = b"BMSQ";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Input window length `T` in slots.
    pub input_len: usize,
    /// Predicted horizon `K` in slots.
    pub output_len: usize,
    /// Slots between consecutive window starts.
    pub stride: usize,
    pub num_trajectories: usize,
    pub slots_per_trajectory: usize,
    pub num_beams: usize,
    pub source: BsId,
    pub target: BsId,
    /// Train/val/test fractions, assigned per trajectory.
    pub split: [f64; 3],
    pub trajectory: TrajectoryConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            input_len: 50,
            output_len: 50,
            stride: 50,
            num_trajectories: 2000,
            slots_per_trajectory: 100,
            num_beams: 256,
            source: BsId::Rsu0,
            target: BsId::Rsu1,
            split: [0.8, 0.1, 0.1],
            trajectory: TrajectoryConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatasetError::InvalidConfig(m));
        if self.input_len == 0 || self.output_len == 0 || self.stride == 0 {
            return bad("input_len, output_len and stride must be >= 1".into());
        }
        if self.slots_per_trajectory < self.input_len + self.output_len {
            return bad(format!(
                "slots_per_trajectory {} shorter than input_len + output_len",
                self.slots_per_trajectory
            ));
        }
        if self.source == self.target {
            return bad("source and target must differ".into());
        }
        if self.target == BsId::Mbs {
            return bad("target must be an RSU".into());
        }
        if self.num_beams > u16::MAX as usize + 1 {
            return bad("num_beams does not fit u16 labels".into());
        }
        let s = self.split;
        if s.iter().any(|&f| !(f >= 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must be non-negative and sum to 1".into());
        }
        Ok(())
    }
}

/// Everything needed to regenerate the windows of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub dropped_trajectories: usize,
    pub dataset: DatasetConfig,
    pub scene: SceneConfig,
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Z-score a row-major `rows x F` block in place.
    pub fn standardize(&self, values: &mut [f64]) {
        let f = self.mean.len();
        for row in values.chunks_mut(f) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// Raw log-amplitude features, `input_len x F` row-major.
    pub features: Vec<f32>,
    pub labels: Vec<u16>,
    pub trajectory_id: u32,
    /// First input slot; the last observed slot is `start_slot + input_len - 1`.
    pub start_slot: u32,
    /// True positions for the input and target slots. Only populated at
    /// generation time, not stored on disk.
    pub positions: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_beams: usize,
    pub num_features: usize,
    pub input_len: usize,
    pub output_len: usize,
    pub stats: FeatureStats,
    pub meta: DatasetMeta,
    pub samples: Vec<TrainingSample>,
    splits: Vec<Split>,
}

/// Counter-based stream for trajectory `id`: independent of generation order.
pub fn trajectory_rng(seed: u64, id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7EA1_EC70_0000_0000);
    rng.set_stream(id as u64);
    rng
}

/// Regenerate trajectory `id` exactly as [`make_dataset`] drew it.
pub fn regenerate_trajectory(scene: &Scene, config: &DatasetConfig, seed: u64, id: u32) -> Result<Trajectory> {
    let mut rng = trajectory_rng(seed, id);
    Ok(sample_trajectory(&scene.grid, &config.trajectory, config.slots_per_trajectory, &mut rng)?)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Assign kept trajectories to splits by ranking a seeded hash of their id,
/// so split sizes follow the fractions exactly.
fn assign_splits(ids: &[u32], seed: u64, fractions: [f64; 3]) -> BTreeMap<u32, Split> {
    let mut ranked: Vec<u32> = ids.to_vec();
    ranked.sort_by_key(|&id| (splitmix64(seed ^ splitmix64(id as u64)), id));
    let n = ranked.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train.min(n));
    ranked
        .into_iter()
        .enumerate()
        .map(|(rank, id)| {
            let split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id, split)
        })
        .collect()
}

/// Census of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Census {
    pub samples: usize,
    pub dropped_trajectories: usize,
    pub per_split: [usize; 3],
    pub label_histogram: Vec<usize>,
}

/// Slide windows over seeded trajectories: source-BS features for the input
/// slots, target-RSU exhaustive-search labels for the following slots.
/// Trajectories that cross an outage point of any base station are dropped.
pub fn make_dataset(
    scene: &Scene,
    grid: &ChannelGrid,
    config: &DatasetConfig,
    scene_config: &SceneConfig,
    codebook: &Codebook<f64>,
    seed: u64,
) -> Result<Dataset> {
    config.validate()?;
    let target_n = scene.bs(config.target).geometry.num_antennas;
    if codebook.num_antennas() != target_n {
        return Err(DatasetError::InvalidConfig(format!(
            "codebook has {} antennas, target {} has {target_n}",
            codebook.num_antennas(),
            config.target
        )));
    }
    if codebook.num_beams() != config.num_beams {
        return Err(DatasetError::InvalidConfig("codebook size differs from num_beams".into()));
    }
    let num_features = scene.bs(config.source).geometry.num_antennas;
    let (t_in, k_out) = (config.input_len, config.output_len);
    let source = grid.channels(config.source);
    let target = grid.channels(config.target);
    let mut pre = Preprocessor::<f64>::new(num_features);
    let mut feat = Vec::with_capacity(num_features);

    let mut samples = Vec::new();
    let mut dropped = 0usize;
    for id in 0..config.num_trajectories as u32 {
        let traj = regenerate_trajectory(scene, config, seed, id)?;
        let positions = traj.positions();
        let cells = positions
            .iter()
            .map(|&p| snap_to_grid(p, &scene.grid).map(|g| scene.grid.linear(g)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if cells.iter().any(|&c| BsId::ALL.iter().any(|&b| grid.channels(b).is_outage(c))) {
            dropped += 1;
            continue;
        }
        let slot_features: Vec<Vec<f32>> = cells
            .iter()
            .map(|&c| {
                pre.apply_into(source.coefficients(c), &mut feat);
                feat.iter().map(|&v| v as f32).collect()
            })
            .collect();
        let mut start = 0;
        while start + t_in + k_out <= traj.num_slots {
            let last = start + t_in - 1;
            let labels = (last + 1..=last + k_out)
                .map(|slot| {
                    let h = target.snapshot(cells[slot], slot as u64).expect("outage filtered above");
                    phy::optimal_beam(&h, codebook).map(|b| b.index() as u16)
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            samples.push(TrainingSample {
                features: slot_features[start..=last].concat(),
                labels,
                trajectory_id: id,
                start_slot: start as u32,
                positions: positions[start..=last + k_out].to_vec(),
            });
            start += config.stride;
        }
    }

    let meta = DatasetMeta {
        seed,
        dropped_trajectories: dropped,
        dataset: config.clone(),
        scene: scene_config.clone(),
    };
    let mut ds = Dataset {
        num_beams: config.num_beams,
        num_features,
        input_len: t_in,
        output_len: k_out,
        stats: FeatureStats { mean: vec![0.0; num_features], std: vec![1.0; num_features] },
        meta,
        samples,
        splits: Vec::new(),
    };
    ds.assign_splits();
    ds.stats = ds.compute_train_stats();
    Ok(ds)
}

impl Dataset {
    fn assign_splits(&mut self) {
        let mut ids: Vec<u32> = self.samples.iter().map(|s| s.trajectory_id).collect();
        ids.dedup();
        let map = assign_splits(&ids, self.meta.seed, self.meta.dataset.split);
        self.splits = self.samples.iter().map(|s| map[&s.trajectory_id]).collect();
    }

    fn compute_train_stats(&self) -> FeatureStats {
        let f = self.num_features;
        let mut sum = vec![0.0f64; f];
        let mut count = 0usize;
        for (s, _) in self.iter_split(Split::Train) {
            for row in s.features.chunks(f) {
                for (acc, &v) in sum.iter_mut().zip(row) {
                    *acc += v as f64;
                }
                count += 1;
            }
        }
        if count == 0 {
            return FeatureStats { mean: vec![0.0; f], std: vec![1.0; f] };
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0f64; f];
        for (s, _) in self.iter_split(Split::Train) {
            for row in s.features.chunks(f) {
                for ((acc, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = v as f64 - m;
                    *acc += d * d;
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        FeatureStats { mean, std }
    }

    pub fn split_of(&self, index: usize) -> Split {
        self.splits[index]
    }

    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = (&TrainingSample, usize)> {
        self.samples.iter().enumerate().filter(move |(i, _)| self.splits[*i] == split).map(|(i, s)| (s, i))
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Standardized `input_len x F` features of sample `index`, row-major.
    pub fn standardized(&self, index: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.samples[index].features.iter().map(|&x| x as f64).collect();
        self.stats.standardize(&mut v);
        v
    }

    /// Last observed slot of sample `index` within its trajectory.
    pub fn last_input_slot(&self, index: usize) -> usize {
        self.samples[index].start_slot as usize + self.input_len - 1
    }

    pub fn census(&self) -> Census {
        let mut hist = vec![0usize; self.num_beams];
        for s in &self.samples {
            for &l in &s.labels {
                hist[l as usize] += 1;
            }
        }
        let mut per_split = [0usize; 3];
        for s in &self.splits {
            per_split[*s as usize] += 1;
        }
        Census {
            samples: self.samples.len(),
            dropped_trajectories: self.meta.dropped_trajectories,
            per_split,
            label_histogram: hist,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.num_beams as u32,
            self.num_features as u32,
            self.input_len as u32,
            self.output_len as u32,
            self.samples.len() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            w.write_all(&v.to_le_bytes())?;
        }
        let meta = toml::to_string(&self.meta).map_err(|e| DatasetError::Format(e.to_string()))?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        let mut buf = Vec::new();
        for s in &self.samples {
            buf.clear();
            for v in &s.features {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for l in &s.labels {
                buf.extend_from_slice(&l.to_le_bytes());
            }
            buf.extend_from_slice(&s.trajectory_id.to_le_bytes());
            buf.extend_from_slice(&s.start_slot.to_le_bytes());
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(DatasetError::Format("bad magic (expected BMSQ)".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(DatasetError::Format(format!("unsupported version {version}")));
        }
        let num_beams = cur.u32()? as usize;
        let num_features = cur.u32()? as usize;
        let input_len = cur.u32()? as usize;
        let output_len = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        let mean = (0..num_features).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let std = (0..num_features).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let meta_len = cur.u32()? as usize;
        let meta_text = std::str::from_utf8(cur.take(meta_len)?)
            .map_err(|e| DatasetError::Format(format!("metadata is not UTF-8: {e}")))?;
        let meta: DatasetMeta =
            toml::from_str(meta_text).map_err(|e| DatasetError::Format(format!("metadata: {e}")))?;
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let features = (0..input_len * num_features).map(|_| cur.f32()).collect::<Result<Vec<_>>>()?;
            let labels = (0..output_len).map(|_| cur.u16()).collect::<Result<Vec<_>>>()?;
            let trajectory_id = cur.u32()?;
            let start_slot = cur.u32()?;
            samples.push(TrainingSample { features, labels, trajectory_id, start_slot, positions: Vec::new() });
        }
        if cur.pos != bytes.len() {
            return Err(DatasetError::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        let mut ds = Dataset {
            num_beams,
            num_features,
            input_len,
            output_len,
            stats: FeatureStats { mean, std },
            meta,
            samples,
            splits: Vec::new(),
        };
        ds.assign_splits();
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(io::BufReader::new(file))
    }

    /// Re-check the structural invariants of a loaded dataset.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.input_len * self.num_features {
                return Err(format!("sample {i}: feature block has wrong length"));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(format!("sample {i}: non-finite feature"));
            }
            if s.labels.len() != self.output_len || s.labels.iter().any(|&l| l as usize >= self.num_beams) {
                return Err(format!("sample {i}: label out of range"));
            }
        }
        let mut owner: BTreeMap<u32, Split> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            if let Some(prev) = owner.insert(s.trajectory_id, self.splits[i]) {
                if prev != self.splits[i] {
                    return Err(format!("trajectory {} appears in two splits", s.trajectory_id));
                }
            }
        }
        if self.stats.std.iter().any(|&s| !(s > 0.0)) || self.stats.mean.iter().any(|m| !m.is_finite()) {
            return Err("invalid normalization statistics".into());
        }
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(DatasetError::Format("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::build_dft_codebook;
    use crate::scene::{build_channel_grid, generate_scene};

    fn small_scene_config() -> SceneConfig {
        SceneConfig { grid_extent: [6.0, 3.0], grid_spacing: 0.05, ..SceneConfig::default() }
    }

    fn small_dataset(source: BsId, n: usize) -> Dataset {
        let sc = small_scene_config();
        let scene = generate_scene(&sc, 3).unwrap();
        let grid = build_channel_grid(&scene).unwrap();
        let cfg = DatasetConfig {
            input_len: 10,
            output_len: 8,
            stride: 8,
            slots_per_trajectory: 34,
            num_trajectories: n,
            source,
            ..DatasetConfig::default()
        };
        let cb = build_dft_codebook(256, 32).unwrap();
        make_dataset(&scene, &grid, &cfg, &sc, &cb, 11).unwrap()
    }

    #[test]
    fn shapes_follow_the_source_array() {
        let rsu = small_dataset(BsId::Rsu0, 20);
        assert_eq!(rsu.num_features, 32);
        // (34 - 18) / 8 + 1 windows per trajectory.
        assert_eq!(rsu.samples.len(), 20 * 3);
        assert!(rsu.samples.iter().all(|s| s.features.len() == 10 * 32 && s.labels.len() == 8));
        let mbs = small_dataset(BsId::Mbs, 5);
        assert_eq!(mbs.num_features, 128);
        assert!(mbs.samples.iter().all(|s| s.features.len() == 10 * 128));
        rsu.check_invariants().unwrap();
    }

    #[test]
    fn default_dimensions() {
        let cfg = DatasetConfig::default();
        assert_eq!((cfg.input_len, cfg.output_len, cfg.num_beams), (50, 50, 256));
    }

    #[test]
    fn train_split_is_standardized() {
        let ds = small_dataset(BsId::Rsu0, 30);
        let f = ds.num_features;
        let mut sum = vec![0.0; f];
        let mut sq = vec![0.0; f];
        let mut n = 0.0;
        for i in ds.indices(Split::Train) {
            for row in ds.standardized(i).chunks(f) {
                for j in 0..f {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
                n += 1.0;
            }
        }
        for j in 0..f {
            let m = sum[j] / n;
            let s = (sq[j] / n - m * m).sqrt();
            assert!(m.abs() < 1e-9, "mean {m}");
            assert!((s - 1.0).abs() < 1e-6, "std {s}");
        }
    }

    #[test]
    fn splits_are_disjoint_and_sized() {
        let ds = small_dataset(BsId::Rsu0, 50);
        let census = ds.census();
        assert_eq!(census.per_split, [40 * 3, 5 * 3, 5 * 3]);
        ds.check_invariants().unwrap();
    }

    #[test]
    fn file_roundtrip_is_byte_stable() {
        let ds = small_dataset(BsId::Rsu0, 10);
        let mut a = Vec::new();
        ds.write_to(&mut a).unwrap();
        let back = Dataset::read_from(a.as_slice()).unwrap();
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.samples[3].labels, ds.samples[3].labels);
        assert_eq!((0..ds.samples.len()).map(|i| back.split_of(i)).collect::<Vec<_>>(),
                   (0..ds.samples.len()).map(|i| ds.split_of(i)).collect::<Vec<_>>());
        // Same inputs, same bytes.
        let mut c = Vec::new();
        small_dataset(BsId::Rsu0, 10).write_to(&mut c).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn corrupt_files_rejected() {
        let ds = small_dataset(BsId::Rsu0, 4);
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::read_from(bad.as_slice()), Err(DatasetError::Format(_))));
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(Dataset::read_from(truncated), Err(DatasetError::Format(_))));
    }

    #[test]
    fn los_pass_labels_are_monotone_steps() {
        // Slow pass along the road in a LoS-only scene: the target angle
        // sweeps monotonically, so quantized labels are a monotone staircase.
        let sc = SceneConfig { num_reflectors: 0, num_scatterers: 0, ..small_scene_config() };
        let scene = generate_scene(&sc, 1).unwrap();
        let grid = build_channel_grid(&scene).unwrap();
        let cb = build_dft_codebook(256, 32).unwrap();
        let bs = scene.bs(BsId::Rsu1);
        let mut labels = Vec::new();
        for k in 0..100 {
            let p = [0.5 + 0.05 * k as f64, 1.5];
            let lin = scene.grid.linear(snap_to_grid(p, &scene.grid).unwrap());
            let h = grid.channels(BsId::Rsu1).snapshot(lin, 0).unwrap();
            let label = phy::optimal_beam(&h, &cb).unwrap().index();
            // Geometry oracle: quantize the direct-link sine onto the codebook grid.
            let q = scene.grid.point(snap_to_grid(p, &scene.grid).unwrap());
            let sine = bs.aod_to(q).unwrap().sin();
            let expected = ((sine * 0.5 * 256.0).round() as i64).rem_euclid(256) as usize;
            assert_eq!(label, expected);
            labels.push(label as i64);
        }
        let signed: Vec<i64> = labels.iter().map(|&l| if l >= 128 { l - 256 } else { l }).collect();
        let increasing = signed.windows(2).all(|w| w[1] >= w[0]);
        let decreasing = signed.windows(2).all(|w| w[1] <= w[0]);
        assert!(increasing || decreasing, "{signed:?}");
        assert!(signed.first() != signed.last());
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = DatasetConfig { slots_per_trajectory: 10, ..DatasetConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = DatasetConfig { target: BsId::Rsu0, ..DatasetConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = DatasetConfig { split: [0.5, 0.1, 0.1], ..DatasetConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
