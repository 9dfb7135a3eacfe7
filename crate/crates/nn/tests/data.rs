use beamseq_core::dataset::{make_dataset, Dataset, DatasetConfig, Split};
use beamseq_core::phy::build_dft_codebook;
use beamseq_core::scene::{build_channel_grid, generate_scene, SceneConfig};
use beamseq_nn::{Examples, SeqSamples, SnapshotSamples};

fn dataset() -> Dataset {
    let sc = SceneConfig { grid_extent: [6.0, 3.0], ..SceneConfig::default() };
    let scene = generate_scene(&sc, 5).unwrap();
    let grid = build_channel_grid(&scene).unwrap();
    let cfg = DatasetConfig {
        input_len: 6,
        output_len: 4,
        stride: 4,
        slots_per_trajectory: 18,
        num_trajectories: 20,
        ..DatasetConfig::default()
    };
    let cb = build_dft_codebook(256, 32).unwrap();
    make_dataset(&scene, &grid, &cfg, &sc, &cb, 9).unwrap()
}

#[test]
fn windows_are_standardized_copies() {
    let ds = dataset();
    let train = SeqSamples::from_dataset(&ds, Split::Train);
    assert_eq!(train.len(), ds.indices(Split::Train).len());
    let batch = train.batch(&[1, 0]);
    assert_eq!(batch.features.dim(), (2, 6, 32));
    let src = train.source_index[1];
    let expected = ds.standardized(src);
    for (a, b) in batch.features.index_axis(ndarray::Axis(0), 0).iter().zip(&expected) {
        assert_eq!(a, b);
    }
    let labels: Vec<usize> = ds.samples[src].labels.iter().map(|&l| l as usize).collect();
    assert_eq!(batch.targets.row(0).to_vec(), labels);
}

#[test]
fn snapshots_use_the_latest_slot_and_next_label() {
    let ds = dataset();
    let test = SnapshotSamples::from_dataset(&ds, Split::Test);
    assert!(!test.is_empty());
    let src = test.source_index[0];
    let x = ds.standardized(src);
    assert_eq!(test.features[0].to_vec(), x[5 * 32..].to_vec());
    assert_eq!(test.labels[0], ds.samples[src].labels[0] as usize);
    let batch = test.batch(&[0]);
    assert_eq!(batch.features.dim(), (1, 32));
}
