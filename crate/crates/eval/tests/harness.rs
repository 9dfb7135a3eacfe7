use beamseq_core::dataset::{make_dataset, Dataset, DatasetConfig, Split};
use beamseq_core::phy::build_dft_codebook;
use beamseq_core::scene::{build_channel_grid, generate_scene, ChannelGrid, Scene, SceneConfig};
use beamseq_core::Codebook;
use beamseq_eval::report::check_sweep;
use beamseq_eval::{
    check_records, delay_sweep, evaluate, location_decisions, summarize, windows_from_dataset, write_csv, Decisions,
    EvalContext, EvalError, EvalRecord, PositioningErrorModel, SchemeRun, GENIE,
};

struct Fixture {
    scene: Scene,
    grid: ChannelGrid,
    codebook: Codebook,
    dataset: Dataset,
}

impl Fixture {
    fn new() -> Self {
        let sc = SceneConfig { grid_extent: [8.0, 3.0], ..SceneConfig::default() };
        let scene = generate_scene(&sc, 5).unwrap();
        let grid = build_channel_grid(&scene).unwrap();
        let config = DatasetConfig {
            input_len: 5,
            output_len: 8,
            stride: 8,
            slots_per_trajectory: 29,
            num_trajectories: 30,
            ..DatasetConfig::default()
        };
        let codebook = build_dft_codebook(256, 32).unwrap();
        let dataset = make_dataset(&scene, &grid, &config, &sc, &codebook, 9).unwrap();
        Self { scene, grid, codebook, dataset }
    }

    fn ctx(&self) -> EvalContext<'_> {
        EvalContext {
            scene: &self.scene,
            grid: &self.grid,
            codebook: &self.codebook,
            config: &self.dataset.meta.dataset,
            dataset_seed: self.dataset.meta.seed,
            tx_snr: 1e9,
        }
    }

    fn labels(&self, split: Split) -> Vec<Vec<usize>> {
        self.dataset
            .indices(split)
            .into_iter()
            .map(|i| self.dataset.samples[i].labels.iter().map(|&l| l as usize).collect())
            .collect()
    }
}

#[test]
fn dataset_labels_are_optimal_at_every_delay() {
    let fx = Fixture::new();
    let windows = windows_from_dataset(&fx.dataset, Split::Test);
    assert!(!windows.is_empty());
    let runs = [SchemeRun::new("oracle", Decisions::PerSlot(fx.labels(Split::Test))), SchemeRun::genie()];
    let delays: Vec<usize> = (0..8).collect();
    let records = evaluate(&fx.ctx(), &windows, &runs, &delays).unwrap();
    assert_eq!(records.len(), 2 * windows.len() * delays.len());
    check_records(&records).unwrap();
    for r in &records {
        assert_eq!(r.pred, r.opt, "{r:?}");
        assert_eq!(r.norm_loss, 0.0);
    }
}

#[test]
fn stale_first_label_is_exact_only_without_delay() {
    let fx = Fixture::new();
    let windows = windows_from_dataset(&fx.dataset, Split::Train);
    let first: Vec<usize> = fx.labels(Split::Train).iter().map(|l| l[0]).collect();
    let runs = [SchemeRun::new("stale", Decisions::Stale(first)), SchemeRun::genie()];
    let records = evaluate(&fx.ctx(), &windows, &runs, &[0, 7]).unwrap();
    check_records(&records).unwrap();
    let at = |d: usize| records.iter().filter(move |r| r.scheme == "stale" && r.delay == d);
    assert!(at(0).all(|r| r.norm_loss == 0.0));
    let late_mean = at(7).map(|r| r.norm_loss).sum::<f64>() / windows.len() as f64;
    assert!(late_mean > 0.0);
    let rows = delay_sweep(&records, 1.0).unwrap();
    check_sweep(&rows).unwrap();
    let genie: Vec<&EvalRecord> = records.iter().filter(|r| r.scheme == GENIE).collect();
    assert!(genie.iter().all(|r| r.norm_loss == 0.0 && r.se_pred == r.se_opt));
}

#[test]
fn delays_beyond_the_horizon_are_rejected() {
    let fx = Fixture::new();
    let windows = windows_from_dataset(&fx.dataset, Split::Test);
    let err = evaluate(&fx.ctx(), &windows, &[SchemeRun::genie()], &[8]).unwrap_err();
    assert!(matches!(err, EvalError::DelayOutOfRange { delay: 8, horizon: 8 }));
}

#[test]
fn malformed_predictions_are_rejected() {
    let fx = Fixture::new();
    let windows = windows_from_dataset(&fx.dataset, Split::Test);
    let n = windows.len();
    let cases = [
        Decisions::Stale(vec![0; n + 1]),
        Decisions::Stale(vec![256; n]),
        Decisions::PerSlot(vec![vec![0; 7]; n]),
    ];
    for d in cases {
        let err = evaluate(&fx.ctx(), &windows, &[SchemeRun::new("bad", d)], &[0]).unwrap_err();
        assert!(matches!(err, EvalError::BadPredictions { .. }));
    }
}

#[test]
fn location_decisions_are_per_window_and_seeded() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let windows = windows_from_dataset(&fx.dataset, Split::Train);
    let model = PositioningErrorModel::fixed(1.0).unwrap();
    let a = location_decisions(&ctx, &windows, &model, 1).unwrap();
    let mut reversed = windows.clone();
    reversed.reverse();
    let mut b = location_decisions(&ctx, &reversed, &model, 1).unwrap();
    b.reverse();
    assert_eq!(a, b);
    let c = location_decisions(&ctx, &windows, &model, 2).unwrap();
    assert_ne!(a, c);
}

#[test]
fn summary_and_records_are_reproducible() {
    let fx = Fixture::new();
    let ctx = fx.ctx();
    let windows = windows_from_dataset(&fx.dataset, Split::Train);
    let csv = || {
        let exact = location_decisions(&ctx, &windows, &PositioningErrorModel::exact(), 0).unwrap();
        let noisy = location_decisions(&ctx, &windows, &PositioningErrorModel::fixed(1.0).unwrap(), 0).unwrap();
        let runs = [
            SchemeRun::new("location_0m", Decisions::Stale(exact)),
            SchemeRun::new("location_1m", Decisions::Stale(noisy)),
            SchemeRun::genie(),
        ];
        let records = evaluate(&ctx, &windows, &runs, &[0, 3]).unwrap();
        check_records(&records).unwrap();
        let rows = summarize(&records, 0).unwrap();
        assert_eq!(rows.len(), 3);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[], &records).unwrap();
        buf
    };
    assert_eq!(csv(), csv());
}
