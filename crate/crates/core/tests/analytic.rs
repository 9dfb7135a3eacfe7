use beamseq_core::phy::{
    build_dft_codebook, optimal_beam, received_signal_strength, spectral_efficiency, steering_vector,
    synthesize_channel, BeamLabel,
};
use beamseq_core::scene::{build_channel_grid, generate_scene, BsId, SceneConfig};
use beamseq_core::{ArrayGeometry, ChannelSnapshot, Complex, PathComponent};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

const TOL: f64 = 1e-12;

fn close(a: &[Complex], b: &[Complex]) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).norm() < TOL, "element {i}: {x} vs {y}");
    }
}

fn ula(n: usize) -> ArrayGeometry {
    ArrayGeometry::half_wavelength(n, 28e9).unwrap()
}

#[test]
fn steering_vector_hand_values() {
    close(&steering_vector(&ula(4), 0.0).unwrap(), &[Complex::new(1.0, 0.0); 4]);
    close(&steering_vector(&ula(2), FRAC_PI_2).unwrap(), &[Complex::new(1.0, 0.0), Complex::new(-1.0, 0.0)]);
    let expected: Vec<Complex> = (0..8).map(|i| Complex::from_polar(1.0, -PI * i as f64 * 0.5)).collect();
    close(&steering_vector(&ula(8), FRAC_PI_6).unwrap(), &expected);
}

#[test]
fn channel_superposition_hand_values() {
    let one = PathComponent { gain: Complex::new(1.0, 0.0), aod: 0.0, aoa: 0.0 };
    close(&synthesize_channel(&[one], &ula(4), 0).unwrap().coefficients, &[Complex::new(1.0, 0.0); 4]);
    let g = Complex::new(0.3, -0.7);
    let pair = [PathComponent { gain: g, aod: 0.4, aoa: 0.1 }, PathComponent { gain: -g, aod: 0.4, aoa: -0.2 }];
    close(&synthesize_channel(&pair, &ula(16), 0).unwrap().coefficients, &[Complex::new(0.0, 0.0); 16]);
}

#[test]
fn dft_codebook_hand_values() {
    let cb = build_dft_codebook(256, 32).unwrap();
    let s = 1.0 / 32f64.sqrt();
    close(cb.codeword(BeamLabel(0)).unwrap(), &[Complex::new(s, 0.0); 32]);
    for f in cb.codewords() {
        let norm: f64 = f.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < TOL);
    }
    // Columns of the unitary 4-point DFT, W = exp(-j 2 pi / 4) = -j.
    let c = |re: f64, im: f64| Complex::new(0.5 * re, 0.5 * im);
    let dft4 = [
        [c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)],
        [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)],
        [c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)],
        [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)],
    ];
    let cb4 = build_dft_codebook(4, 4).unwrap();
    for (x, col) in dft4.iter().enumerate() {
        close(cb4.codeword(BeamLabel(x)).unwrap(), col);
    }
}

#[test]
fn rss_and_spectral_efficiency_hand_values() {
    let cb = build_dft_codebook(8, 8).unwrap();
    let f = cb.codeword(BeamLabel(3)).unwrap();
    let matched = ChannelSnapshot::new(f.to_vec(), 0);
    assert!((received_signal_strength(&matched, f).unwrap() - 1.0).abs() < TOL);
    assert!(received_signal_strength(&matched, cb.codeword(BeamLabel(4)).unwrap()).unwrap() < TOL);
    assert!((spectral_efficiency(&matched, f, 1.0).unwrap() - 1.0).abs() < TOL);
    assert!((spectral_efficiency(&matched, f, 3.0).unwrap() - 2.0).abs() < TOL);
    let zero = ChannelSnapshot::new(vec![Complex::new(0.0, 0.0); 8], 0);
    assert_eq!(spectral_efficiency(&zero, f, 5.0).unwrap(), 0.0);
}

#[test]
fn matched_and_steered_channels_pick_the_expected_beam() {
    let cb = build_dft_codebook(256, 32).unwrap();
    let h = ChannelSnapshot::new(cb.codeword(BeamLabel(17)).unwrap().to_vec(), 0);
    assert_eq!(optimal_beam(&h, &cb).unwrap(), BeamLabel(17));
    let h = ChannelSnapshot::new(steering_vector(&ula(32), 0.0).unwrap(), 0);
    assert_eq!(optimal_beam(&h, &cb).unwrap(), BeamLabel(0));
}

#[test]
fn los_only_grid_is_a_scaled_steering_vector() {
    let config = SceneConfig { num_reflectors: 0, num_scatterers: 0, grid_extent: [6.0, 2.0], grid_spacing: 0.25, ..SceneConfig::default() };
    let scene = generate_scene(&config, 3).unwrap();
    let grid = build_channel_grid(&scene).unwrap();
    for bs in BsId::ALL {
        let channels = grid.channels(bs);
        let geometry = scene.bs(bs).geometry;
        for lin in 0..scene.grid.len() {
            let p = scene.grid.point(scene.grid.unlinear(lin));
            let paths = channels.paths(lin);
            assert_eq!(paths.len(), 1);
            let aod = scene.los_aod(bs, p).unwrap();
            assert!((paths[0].aod - aod).abs() < TOL);
            let expected: Vec<Complex> =
                steering_vector(&geometry, aod).unwrap().into_iter().map(|a| paths[0].gain * a).collect();
            close(channels.coefficients(lin), &expected);
        }
    }
}
