//! Per-sample, per-delay evaluation of beam decisions on the target RSU.
//!
//! A window's last observed slot is `t`. A decision made with delay `d`
//! is applied at slot `t + 1 + d`, for `d` in `[0, K)`:
//!
//! - per-slot schemes (the sequence predictor) use their decoded entry `d`;
//! - stale schemes (the snapshot predictor and location baselines) apply one
//!   decision fixed at slot `t`;
//! - the genie applies the exhaustive-search beam of the applied slot.

use std::collections::BTreeMap;

use beamseq_core::dataset::{regenerate_trajectory, Dataset, DatasetConfig, Split};
use beamseq_core::phy::{beam_powers, check_snr, se_from_rss};
use beamseq_core::scene::{snap_to_grid, BsId, ChannelGrid, Scene, Trajectory};
use beamseq_core::Codebook;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{location_beam, PositioningErrorModel};
use crate::error::{EvalError, Result};
use crate::metrics::loss_from_rss;

pub const GENIE: &str = "genie";

const LOCATION_SALT: u64 = 0x10CA_7104_0000_0000;

/// Identifies a window across datasets built from the same trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleId {
    pub trajectory_id: u32,
    pub start_slot: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub id: SampleId,
    /// Last observed slot `t`.
    pub last_slot: usize,
}

/// Windows of one split, in dataset order.
pub fn windows_from_dataset(dataset: &Dataset, split: Split) -> Vec<Window> {
    dataset
        .indices(split)
        .into_iter()
        .map(|i| {
            let s = &dataset.samples[i];
            Window {
                id: SampleId { trajectory_id: s.trajectory_id, start_slot: s.start_slot },
                last_slot: dataset.last_input_slot(i),
            }
        })
        .collect()
}

/// What a scheme decided for every window.
#[derive(Debug, Clone, PartialEq)]
pub enum Decisions {
    /// One label per future slot; delay `d` applies entry `d`.
    PerSlot(Vec<Vec<usize>>),
    /// One label per window, applied unchanged at every delay.
    Stale(Vec<usize>),
    /// Exhaustive search at the applied slot.
    Genie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub name: String,
    pub decisions: Decisions,
}

impl SchemeRun {
    pub fn new(name: impl Into<String>, decisions: Decisions) -> Self {
        Self { name: name.into(), decisions }
    }

    pub fn genie() -> Self {
        Self::new(GENIE, Decisions::Genie)
    }

    fn check(&self, windows: usize, horizon: usize, num_beams: usize) -> Result<()> {
        let bad = |reason: String| Err(EvalError::BadPredictions { scheme: self.name.clone(), reason });
        let labels: Vec<&usize> = match &self.decisions {
            Decisions::Genie => return Ok(()),
            Decisions::Stale(v) => {
                if v.len() != windows {
                    return bad(format!("{} decisions for {windows} windows", v.len()));
                }
                v.iter().collect()
            }
            Decisions::PerSlot(v) => {
                if v.len() != windows {
                    return bad(format!("{} decisions for {windows} windows", v.len()));
                }
                if let Some(seq) = v.iter().find(|s| s.len() != horizon) {
                    return bad(format!("sequence of length {} for horizon {horizon}", seq.len()));
                }
                v.iter().flatten().collect()
            }
        };
        match labels.into_iter().find(|&&l| l >= num_beams) {
            Some(l) => bad(format!("label {l} outside a {num_beams}-beam codebook")),
            None => Ok(()),
        }
    }

    fn label(&self, window: usize, delay: usize, genie: usize) -> usize {
        match &self.decisions {
            Decisions::PerSlot(v) => v[window][delay],
            Decisions::Stale(v) => v[window],
            Decisions::Genie => genie,
        }
    }
}

/// One scheme's outcome on one window at one delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub trajectory_id: u32,
    pub start_slot: u32,
    pub scheme: String,
    pub delay: usize,
    pub pred: usize,
    pub opt: usize,
    pub rss_pred: f64,
    pub rss_opt: f64,
    pub norm_loss: f64,
    pub se_pred: f64,
    pub se_opt: f64,
}

impl EvalRecord {
    pub fn sample(&self) -> SampleId {
        SampleId { trajectory_id: self.trajectory_id, start_slot: self.start_slot }
    }
}

/// Scene, channels and trajectory parameters of the evaluated dataset.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub scene: &'a Scene,
    pub grid: &'a ChannelGrid,
    /// Codebook of the target RSU.
    pub codebook: &'a Codebook,
    pub config: &'a DatasetConfig,
    /// Seed the dataset's trajectories were drawn with.
    pub dataset_seed: u64,
    pub tx_snr: f64,
}

impl EvalContext<'_> {
    pub fn target(&self) -> BsId {
        self.config.target
    }

    pub fn horizon(&self) -> usize {
        self.config.output_len
    }

    fn trajectories(&self, windows: &[Window]) -> Result<BTreeMap<u32, Trajectory>> {
        let mut out = BTreeMap::new();
        for w in windows {
            let id = w.id.trajectory_id;
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(id) {
                e.insert(regenerate_trajectory(self.scene, self.config, self.dataset_seed, id)?);
            }
        }
        Ok(out)
    }
}

fn check_delays(delays: &[usize], horizon: usize) -> Result<()> {
    if delays.is_empty() {
        return Err(EvalError::Empty("delay list"));
    }
    match delays.iter().find(|&&d| d >= horizon) {
        Some(&delay) => Err(EvalError::DelayOutOfRange { delay, horizon }),
        None => Ok(()),
    }
}

/// Records for every scheme, delay and window, ordered scheme-major, then by
/// delay, then by window.
pub fn evaluate(ctx: &EvalContext, windows: &[Window], schemes: &[SchemeRun], delays: &[usize]) -> Result<Vec<EvalRecord>> {
    if windows.is_empty() {
        return Err(EvalError::Empty("window list"));
    }
    if schemes.is_empty() {
        return Err(EvalError::Empty("scheme list"));
    }
    check_delays(delays, ctx.horizon())?;
    check_snr(ctx.tx_snr)?;
    for s in schemes {
        s.check(windows.len(), ctx.horizon(), ctx.codebook.num_beams())?;
    }
    let trajectories = ctx.trajectories(windows)?;
    let channels = ctx.grid.channels(ctx.target());

    let mut per_scheme: Vec<Vec<EvalRecord>> = vec![Vec::with_capacity(windows.len() * delays.len()); schemes.len()];
    for &delay in delays {
        for (wi, w) in windows.iter().enumerate() {
            let slot = w.last_slot + 1 + delay;
            let outage = || EvalError::Outage { trajectory_id: w.id.trajectory_id, slot };
            let traj = &trajectories[&w.id.trajectory_id];
            if slot >= traj.num_slots {
                return Err(EvalError::Invariant(format!(
                    "slot {slot} lies past the end of trajectory {}",
                    w.id.trajectory_id
                )));
            }
            let lin = ctx.grid.grid.linear(snap_to_grid(traj.position(slot), &ctx.grid.grid)?);
            let h = channels.snapshot(lin, slot as u64).ok_or_else(outage)?;
            if h.is_zero() {
                return Err(outage());
            }
            let powers = beam_powers(&h, ctx.codebook)?;
            let opt = argmax(&powers);
            let rss_opt = powers[opt];
            let se_opt = se_from_rss(rss_opt, ctx.tx_snr);
            for (scheme, out) in schemes.iter().zip(per_scheme.iter_mut()) {
                let pred = scheme.label(wi, delay, opt);
                let rss_pred = powers[pred];
                out.push(EvalRecord {
                    trajectory_id: w.id.trajectory_id,
                    start_slot: w.id.start_slot,
                    scheme: scheme.name.clone(),
                    delay,
                    pred,
                    opt,
                    rss_pred,
                    rss_opt,
                    norm_loss: loss_from_rss(rss_pred, rss_opt),
                    se_pred: se_from_rss(rss_pred, ctx.tx_snr),
                    se_opt,
                });
            }
        }
    }
    Ok(per_scheme.into_iter().flatten().collect())
}

/// First maximum, matching the exhaustive search's tie rule.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Location-baseline decisions from the position fix at each window's last
/// observed slot. Each window draws its error from its own seeded stream.
pub fn location_decisions(
    ctx: &EvalContext,
    windows: &[Window],
    error: &PositioningErrorModel,
    seed: u64,
) -> Result<Vec<usize>> {
    let trajectories = ctx.trajectories(windows)?;
    windows
        .iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ LOCATION_SALT);
            rng.set_stream(((w.id.trajectory_id as u64) << 32) | w.id.start_slot as u64);
            let position = trajectories[&w.id.trajectory_id].position(w.last_slot);
            Ok(location_beam(ctx.scene, ctx.target(), position, error, ctx.codebook, &mut rng)?.label.index())
        })
        .collect()
}
