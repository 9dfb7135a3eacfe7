//! The pipeline stages behind each subcommand.

use std::collections::BTreeMap;
use std::io::Write;

use beamseq_core::dataset::{make_dataset, Dataset, Split};
use beamseq_core::gridcache::{load_grid_cache, write_grid_cache};
use beamseq_core::phy::build_dft_codebook;
use beamseq_core::scene::{build_channel_grid, generate_scene, BsId, ChannelGrid, Scene};
use beamseq_core::Codebook;
use beamseq_eval::report::{write_summary_csv, SummaryRow};
use beamseq_eval::{
    check_cdf, check_records, check_sweep, delay_sweep, empirical_cdf, evaluate, format_summary, location_decisions,
    read_csv, summarize, windows_from_dataset, write_csv, CdfPoint, Decisions, EvalContext, EvalRecord,
    PositioningErrorModel, SampleId, SchemeRun, SweepRow, Window,
};
use beamseq_nn::data::{SeqSamples, SnapshotSamples};
use beamseq_nn::ffn::Ffn;
use beamseq_nn::seq2seq::{Seq2Seq, Seq2SeqConfig};
use beamseq_nn::{
    model_checkpoint, model_from_checkpoint, write_history, Architecture, Checkpoint, Examples, FfnConfig,
    TrainConfig, TrainState, Trainable, Trainer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::artifacts::{
    atomic_write, ffn_name, load_dataset, provenance, seq2seq_name, stats_hash, write_text, RunDir,
};
use crate::config::RunConfig;
use crate::error::CliError;

const INIT_SALT: u64 = 0x1A17_5EED_0000_0000;

/// Scalar used for training and inference. Checkpoints store `f64`, which
/// holds every `f32` value exactly.
type Float = f32;

fn scene_of(config: &RunConfig) -> Result<Scene, CliError> {
    generate_scene(&config.scene, config.seed).map_err(|e| CliError::Usage(format!("scene: {e}")))
}

fn target_codebook(config: &RunConfig, scene: &Scene) -> Result<Codebook, CliError> {
    let n = scene.bs(config.dataset.target).geometry.num_antennas;
    build_dft_codebook(config.dataset.num_beams, n).map_err(|e| CliError::Usage(format!("codebook: {e}")))
}

fn save_checkpoint(path: &std::path::Path, ckpt: &Checkpoint) -> Result<(), CliError> {
    atomic_write(path, |w| Ok(ckpt.write_to(w)?))
}

/// Generate the scene, channel grid and datasets.
pub fn gen(config: &RunConfig, run: &RunDir, out: &mut dyn Write) -> Result<(), CliError> {
    run.create()?;
    let scene = scene_of(config)?;
    let grid = build_channel_grid(&scene).map_err(|e| CliError::Usage(format!("channel grid: {e}")))?;
    let codebook = target_codebook(config, &scene)?;
    let datasets = config
        .sources()
        .into_iter()
        .map(|source| {
            make_dataset(&scene, &grid, &config.dataset_for(source), &config.scene, &codebook, config.seed)
                .map(|ds| (source, ds))
                .map_err(|e| CliError::data(format!("dataset ({source} source)"), e))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let prov = provenance(config, "gen");
    let mut written = Vec::new();
    let result = (|| {
        written.push(run.config());
        write_text(&run.config(), &prov, &config.to_toml())?;
        written.push(run.scene());
        write_text(&run.scene(), &prov, &scene.to_toml())?;
        written.push(run.grid());
        atomic_write(&run.grid(), |w| write_grid_cache(&scene, &grid, w).map_err(|e| CliError::data("grid cache", e)))?;
        for (source, ds) in &datasets {
            written.push(run.dataset(*source));
            atomic_write(&run.dataset(*source), |w| ds.write_to(w).map_err(|e| CliError::data("dataset", e)))?;
            let census = ds.census();
            let body: String = std::iter::once("beam,count\n".to_string())
                .chain(census.label_histogram.iter().enumerate().map(|(b, c)| format!("{b},{c}\n")))
                .collect();
            written.push(run.label_histogram(*source));
            write_text(&run.label_histogram(*source), &prov, &body)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for path in written {
            let _ = std::fs::remove_file(path);
        }
        return Err(e);
    }

    for (source, ds) in &datasets {
        let c = ds.census();
        let used = c.label_histogram.iter().filter(|&&n| n > 0).count();
        let (mode, mode_count) =
            c.label_histogram.iter().enumerate().max_by_key(|&(b, n)| (*n, std::cmp::Reverse(b))).unwrap_or((0, &0));
        writeln!(
            out,
            "dataset {source} -> {}: {} samples (train {}, val {}, test {}), dropped trajectories {}, \
             T {} K {} F {} X {}, beams used {used}, most frequent beam {mode} ({mode_count} labels)",
            config.dataset.target,
            c.samples,
            c.per_split[0],
            c.per_split[1],
            c.per_split[2],
            c.dropped_trajectories,
            ds.input_len,
            ds.output_len,
            ds.num_features,
            ds.num_beams,
        )?;
    }
    Ok(())
}

fn seq2seq_config(config: &RunConfig, ds: &Dataset) -> Seq2SeqConfig {
    Seq2SeqConfig {
        hidden: config.model.hidden,
        input_width: config.model.input_width,
        embed_dim: config.model.embed_dim,
        dropout: config.model.dropout,
        ..Seq2SeqConfig::new(ds.num_features, ds.input_len, ds.output_len, ds.num_beams)
    }
}

fn ffn_config(config: &RunConfig, ds: &Dataset) -> FfnConfig {
    FfnConfig { width: config.ffn.width, ..FfnConfig::new(ds.num_features, ds.num_beams) }
}

struct TrainJob<'a> {
    name: String,
    config: &'a RunConfig,
    run: &'a RunDir,
    stats_hash: String,
    resume: bool,
}

impl TrainJob<'_> {
    fn run<M, E>(&self, fresh: M, train: &E, val: &E, out: &mut dyn Write) -> Result<(), CliError>
    where
        M: Architecture<Float>,
        E: Examples<<M as Trainable<Float>>::Batch>,
    {
        let train_cfg: TrainConfig = self.config.train.clone();
        let state_path = self.run.train_state(&self.name);
        let trainer = if self.resume && state_path.exists() {
            let ckpt = Checkpoint::load(&state_path).map_err(|e| CliError::data(state_path.display(), e))?;
            let (state, meta) = TrainState::<Float, M>::from_checkpoint(&ckpt)?;
            if meta.seed != self.config.seed || meta.stats_hash != self.stats_hash {
                return Err(CliError::Data(format!(
                    "{} belongs to a different seed or dataset",
                    state_path.display()
                )));
            }
            if toml::to_string(&meta.config).ok() != toml::to_string(&fresh.config()).ok() {
                return Err(CliError::Data(format!("{} has a different model configuration", state_path.display())));
            }
            writeln!(out, "{}: resuming after epoch {}", self.name, state.epoch)?;
            Trainer::resume(state, train_cfg)?
        } else {
            Trainer::new(fresh, train_cfg)?
        };
        let name = self.name.clone();
        let seed = self.config.seed;
        let hash = self.stats_hash.clone();
        let outcome = trainer.fit(train, val, |r, state| {
            let ckpt = state.to_checkpoint(seed, &hash)?;
            save_checkpoint(&state_path, &ckpt).map_err(|e| beamseq_nn::NnError::Checkpoint(e.to_string()))?;
            let _ = writeln!(
                out,
                "{name} epoch {:>3}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4} | clipped {}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.clip_events
            );
            Ok(())
        })?;
        let ckpt = model_checkpoint(&outcome.model, seed, &self.stats_hash)?;
        save_checkpoint(&self.run.model(&self.name), &ckpt)?;
        let prov = provenance(self.config, "train");
        atomic_write(&self.run.history(&self.name), |w| {
            for line in &prov {
                writeln!(w, "# {line}")?;
            }
            write_history(w, &outcome.history)?;
            Ok(())
        })?;
        writeln!(
            out,
            "{}: best epoch {} of {}{}",
            self.name,
            outcome.best_epoch,
            outcome.history.len(),
            if outcome.stopped_early { " (early stop)" } else { "" }
        )?;
        Ok(())
    }
}

fn init_rng(config: &RunConfig, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ INIT_SALT);
    rng.set_stream(stream);
    rng
}

fn source_stream(source: BsId) -> u64 {
    match source {
        BsId::Rsu0 => 0,
        BsId::Rsu1 => 1,
        BsId::Mbs => 2,
    }
}

/// Train the sequence predictor for every source and the snapshot baseline.
pub fn train(config: &RunConfig, run: &RunDir, resume: bool, out: &mut dyn Write) -> Result<(), CliError> {
    for source in config.sources() {
        let ds = load_dataset(run, config, source)?;
        let job = TrainJob { name: seq2seq_name(source), config, run, stats_hash: stats_hash(&ds.stats), resume };
        let model = Seq2Seq::<Float>::new(seq2seq_config(config, &ds), &mut init_rng(config, source_stream(source)))?;
        let train = SeqSamples::from_dataset(&ds, Split::Train);
        let val = SeqSamples::from_dataset(&ds, Split::Val);
        job.run(model, &train, &val, out)?;

        if config.ffn.enabled && source == config.dataset.source {
            let job = TrainJob { name: ffn_name(source), ..job };
            let model = Ffn::<Float>::new(ffn_config(config, &ds), &mut init_rng(config, 16 + source_stream(source)))?;
            let train = SnapshotSamples::from_dataset(&ds, Split::Train);
            let val = SnapshotSamples::from_dataset(&ds, Split::Val);
            job.run(model, &train, &val, out)?;
        }
    }
    Ok(())
}

/// Everything the evaluation stages share.
struct EvalSetup {
    scene: Scene,
    grid: ChannelGrid,
    codebook: Codebook,
    dataset: Dataset,
    windows: Vec<Window>,
}

impl EvalSetup {
    fn load(config: &RunConfig, run: &RunDir) -> Result<Self, CliError> {
        let scene = scene_of(config)?;
        let path = run.grid();
        if !path.exists() {
            return Err(CliError::Data(format!("{} not found; run `beamseq gen` first", path.display())));
        }
        let grid = load_grid_cache(&scene, &path).map_err(|e| CliError::data(path.display(), e))?;
        let codebook = target_codebook(config, &scene)?;
        let dataset = load_dataset(run, config, config.dataset.source)?;
        let windows = windows_from_dataset(&dataset, Split::Test);
        if windows.is_empty() {
            return Err(CliError::Data("the test split is empty".into()));
        }
        Ok(Self { scene, grid, codebook, dataset, windows })
    }

    fn context<'a>(&'a self, config: &RunConfig) -> EvalContext<'a> {
        EvalContext {
            scene: &self.scene,
            grid: &self.grid,
            codebook: &self.codebook,
            config: &self.dataset.meta.dataset,
            dataset_seed: self.dataset.meta.seed,
            tx_snr: config.eval.tx_snr(),
        }
    }
}

fn load_model<M: Architecture<Float>>(run: &RunDir, name: &str, ds: &Dataset) -> Result<M, CliError> {
    let path = run.model(name);
    if !path.exists() {
        return Err(CliError::Data(format!("{} not found; run `beamseq train` first", path.display())));
    }
    let ckpt = Checkpoint::load(&path).map_err(|e| CliError::data(path.display(), e))?;
    let (model, meta) = model_from_checkpoint::<Float, M>(&ckpt)?;
    if meta.stats_hash != stats_hash(&ds.stats) {
        return Err(CliError::Data(format!("{} was trained on different feature statistics", path.display())));
    }
    Ok(model)
}

/// Reorder per-sample decisions from `ds`'s test split onto `windows`.
fn align<T: Clone>(ds: &Dataset, source_index: &[usize], values: Vec<T>, windows: &[Window]) -> Result<Vec<T>, CliError> {
    let by_id: BTreeMap<SampleId, T> = source_index
        .iter()
        .zip(values)
        .map(|(&i, v)| {
            let s = &ds.samples[i];
            (SampleId { trajectory_id: s.trajectory_id, start_slot: s.start_slot }, v)
        })
        .collect();
    if by_id.len() != windows.len() {
        return Err(CliError::Data(format!("{} test windows against {} expected", by_id.len(), windows.len())));
    }
    windows
        .iter()
        .map(|w| {
            by_id.get(&w.id).cloned().ok_or_else(|| {
                CliError::Data(format!("test window {:?} missing from the {} dataset", w.id, ds.meta.dataset.source))
            })
        })
        .collect()
}

fn seq2seq_run(config: &RunConfig, run: &RunDir, setup: &EvalSetup, source: BsId) -> Result<SchemeRun, CliError> {
    let name = seq2seq_name(source);
    let owned;
    let ds = if source == config.dataset.source {
        &setup.dataset
    } else {
        owned = load_dataset(run, config, source)?;
        &owned
    };
    let model: Seq2Seq<Float> = load_model(run, &name, ds)?;
    let samples = SeqSamples::from_dataset(ds, Split::Test);
    let positions: Vec<usize> = (0..samples.len()).collect();
    let mut decoded = Vec::with_capacity(samples.len());
    for chunk in positions.chunks(config.eval.batch_size) {
        let batch = samples.batch(chunk);
        let labels = model.predict(batch.features.view())?;
        decoded.extend(labels.rows().into_iter().map(|r| r.to_vec()));
    }
    let decoded = align(ds, &samples.source_index, decoded, &setup.windows)?;
    Ok(SchemeRun::new(name, Decisions::PerSlot(decoded)))
}

fn ffn_run(config: &RunConfig, run: &RunDir, setup: &EvalSetup) -> Result<SchemeRun, CliError> {
    let name = ffn_name(config.dataset.source);
    let model: Ffn<Float> = load_model(run, &name, &setup.dataset)?;
    let samples = SnapshotSamples::from_dataset(&setup.dataset, Split::Test);
    let positions: Vec<usize> = (0..samples.len()).collect();
    let mut labels = Vec::with_capacity(samples.len());
    for chunk in positions.chunks(config.eval.batch_size) {
        labels.extend(model.predict(samples.batch(chunk).features.view())?);
    }
    let labels = align(&setup.dataset, &samples.source_index, labels, &setup.windows)?;
    Ok(SchemeRun::new("ffn", Decisions::Stale(labels)))
}

/// Every scheme that has its artifacts; missing ones are reported and skipped.
fn scheme_runs(config: &RunConfig, run: &RunDir, setup: &EvalSetup, err: &mut dyn Write) -> Result<Vec<SchemeRun>, CliError> {
    let mut runs = Vec::new();
    let mut report = |name: &str, r: Result<SchemeRun, CliError>, runs: &mut Vec<SchemeRun>| match r {
        Ok(s) => runs.push(s),
        Err(e) => {
            let _ = writeln!(err, "skipping {name}: {e}");
        }
    };
    for source in config.sources() {
        report(&seq2seq_name(source), seq2seq_run(config, run, setup, source), &mut runs);
    }
    let ctx = setup.context(config);
    for &m in &config.eval.positioning_errors {
        let model = PositioningErrorModel::new(m, config.eval.error_distribution)?;
        let labels = location_decisions(&ctx, &setup.windows, &model, config.seed)?;
        runs.push(SchemeRun::new(format!("location_{m}m"), Decisions::Stale(labels)));
    }
    if config.ffn.enabled {
        report("ffn", ffn_run(config, run, setup), &mut runs);
    }
    runs.push(SchemeRun::genie());
    Ok(runs)
}

fn scheme_order(records: &[EvalRecord]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        if !names.contains(&r.scheme) {
            names.push(r.scheme.clone());
        }
    }
    names
}

fn cdf_of(records: &[EvalRecord], scheme: &str) -> Result<Vec<CdfPoint>, CliError> {
    let losses: Vec<f64> = records.iter().filter(|r| r.scheme == scheme).map(|r| r.norm_loss).collect();
    Ok(empirical_cdf(&losses)?)
}

fn summary_csv_body(rows: &[SummaryRow]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &[], rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Loss CDFs and the comparison summary at the summary delay.
pub fn eval(config: &RunConfig, run: &RunDir, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let setup = EvalSetup::load(config, run)?;
    let runs = scheme_runs(config, run, &setup, err)?;
    let records = evaluate(&setup.context(config), &setup.windows, &runs, &[config.eval.summary_delay])?;
    check_records(&records)?;
    let prov = provenance(config, "eval");
    atomic_write(&run.records(), |w| Ok(write_csv(w, &prov, &records)?))?;
    for scheme in scheme_order(&records) {
        let cdf = cdf_of(&records, &scheme)?;
        atomic_write(&run.cdf(&scheme), |w| Ok(write_csv(w, &prov, &cdf)?))?;
    }
    let rows = summarize(&records, config.eval.summary_delay)?;
    atomic_write(&run.summary_csv(), |w| Ok(write_summary_csv(w, &prov, &rows)?))?;
    let table = format_summary(&rows);
    write_text(&run.summary_txt(), &prov, &table)?;
    write!(out, "{table}")?;
    Ok(())
}

/// Mean spectral efficiency of every scheme against prediction delay.
pub fn sweep(config: &RunConfig, run: &RunDir, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let setup = EvalSetup::load(config, run)?;
    let runs = scheme_runs(config, run, &setup, err)?;
    let records = evaluate(&setup.context(config), &setup.windows, &runs, &config.eval.delays)?;
    check_records(&records)?;
    let slot_ms = setup.dataset.meta.dataset.trajectory.dt * 1e3;
    let rows = delay_sweep(&records, slot_ms)?;
    check_sweep(&rows)?;
    let prov = provenance(config, "sweep");
    atomic_write(&run.sweep_records(), |w| Ok(write_csv(w, &prov, &records)?))?;
    atomic_write(&run.delay_sweep(), |w| Ok(write_csv(w, &prov, &rows)?))?;
    writeln!(out, "{:<16} {:>9} {:>10} {:>10} {:>6}", "scheme", "delay ms", "mean SE", "std SE", "n")?;
    for r in &rows {
        writeln!(out, "{:<16} {:>9} {:>10.4} {:>10.4} {:>6}", r.scheme, r.delay_ms, r.mean_se, r.std_se, r.n)?;
    }
    Ok(())
}

fn read_records(path: &std::path::Path) -> Result<Vec<EvalRecord>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::data(path.display(), e))?;
    read_csv(file).map_err(|e| CliError::data(path.display(), e))
}

fn strip_provenance(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).flat_map(|l| [l, "\n"]).collect()
}

/// Re-check every invariant on the artifacts present in the run directory.
pub fn validate(config: &RunConfig, run: &RunDir, out: &mut dyn Write) -> Result<(), CliError> {
    let invalid = |what: &std::path::Path, e: &dyn std::fmt::Display| CliError::Data(format!("{}: {e}", what.display()));
    for source in config.sources() {
        let ds = load_dataset(run, config, source)?;
        ds.check_invariants().map_err(|e| invalid(&run.dataset(source), &e))?;
        writeln!(out, "ok {}", run.dataset(source).display())?;
    }

    let mut checked = 0;
    if run.records().exists() {
        let records = read_records(&run.records())?;
        check_records(&records).map_err(|e| invalid(&run.records(), &e))?;
        writeln!(out, "ok {} ({} records)", run.records().display(), records.len())?;
        for scheme in scheme_order(&records) {
            let path = run.cdf(&scheme);
            let file = std::fs::File::open(&path).map_err(|e| invalid(&path, &e))?;
            let saved: Vec<CdfPoint> = read_csv(file).map_err(|e| invalid(&path, &e))?;
            check_cdf(&saved).map_err(|e| invalid(&path, &e))?;
            if saved != cdf_of(&records, &scheme)? {
                return Err(invalid(&path, &"does not match the CDF of the saved records"));
            }
            writeln!(out, "ok {}", path.display())?;
        }
        let delay = records[0].delay;
        let expected = summary_csv_body(&summarize(&records, delay)?)?;
        let saved = std::fs::read_to_string(run.summary_csv()).map_err(|e| invalid(&run.summary_csv(), &e))?;
        if strip_provenance(&saved) != expected {
            return Err(invalid(&run.summary_csv(), &"does not match the summary of the saved records"));
        }
        writeln!(out, "ok {}", run.summary_csv().display())?;
        checked += 1;
    }
    if run.sweep_records().exists() {
        let records = read_records(&run.sweep_records())?;
        check_records(&records).map_err(|e| invalid(&run.sweep_records(), &e))?;
        writeln!(out, "ok {} ({} records)", run.sweep_records().display(), records.len())?;
        let path = run.delay_sweep();
        let file = std::fs::File::open(&path).map_err(|e| invalid(&path, &e))?;
        let saved: Vec<SweepRow> = read_csv(file).map_err(|e| invalid(&path, &e))?;
        check_sweep(&saved).map_err(|e| invalid(&path, &e))?;
        let slot_ms = config.dataset.trajectory.dt * 1e3;
        if saved != delay_sweep(&records, slot_ms)? {
            return Err(invalid(&path, &"does not match the saved sweep records"));
        }
        writeln!(out, "ok {}", path.display())?;
        checked += 1;
    }
    if checked == 0 {
        writeln!(out, "no evaluation outputs to check yet")?;
    }
    Ok(())
}
