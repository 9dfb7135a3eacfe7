use beamseq_core::phy::{build_dft_codebook, optimal_beam, synthesize_channel, BeamLabel};
use beamseq_core::scene::{snap_to_grid, GridIndex, GridSpec};
use beamseq_core::{ArrayGeometry, ChannelSnapshot, Complex, PathComponent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent exhaustive scan: recomputes |h^H f|^2 from the DFT formula
/// rather than reading the stored codewords.
fn scan(h: &[Complex], num_beams: usize) -> usize {
    let n = h.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut best = (0, f64::NEG_INFINITY);
    for x in 0..num_beams {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, hi) in h.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * (i * x) as f64 / num_beams as f64;
            let (fr, fi) = (scale * phase.cos(), scale * phase.sin());
            // conj(h) * f
            re += hi.re * fr + hi.im * fi;
            im += hi.re * fi - hi.im * fr;
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (x, p);
        }
    }
    best.0
}

#[test]
fn optimal_beam_agrees_with_an_exhaustive_scan() {
    let cb = build_dft_codebook(256, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let h: Vec<Complex> = (0..32).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let expected = scan(&h, 256);
        let got = optimal_beam(&ChannelSnapshot::new(h, 0), &cb).unwrap();
        assert_eq!(got, BeamLabel(expected));
    }
}

#[test]
fn optimal_beam_agrees_on_multipath_channels() {
    let geom = ArrayGeometry::half_wavelength(32, 28e9).unwrap();
    let cb = build_dft_codebook(256, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let paths: Vec<PathComponent> = (0..rng.gen_range(1..5))
            .map(|_| PathComponent {
                gain: Complex::from_polar(rng.gen_range(0.01..1.0), rng.gen_range(-3.0..3.0)),
                aod: rng.gen_range(-1.5..1.5),
                aoa: 0.0,
            })
            .collect();
        let h = synthesize_channel(&paths, &geom, 0).unwrap();
        assert_eq!(optimal_beam(&h, &cb).unwrap().0, scan(&h.coefficients, 256));
    }
}

fn brute_force_nearest(p: [f64; 2], grid: &GridSpec) -> GridIndex {
    let mut best = (GridIndex { ix: 0, iy: 0 }, f64::INFINITY);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let q = [grid.origin[0] + ix as f64 * grid.spacing, grid.origin[1] + iy as f64 * grid.spacing];
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d < best.1 {
                best = (GridIndex { ix, iy }, d);
            }
        }
    }
    best.0
}

#[test]
fn snap_to_grid_agrees_with_brute_force() {
    let grid = GridSpec::from_extent([0.0, 0.0], [30.0, 10.0], 0.05);
    assert_eq!((grid.nx, grid.ny), (600, 200));
    let (lo, hi) = grid.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        assert_eq!(snap_to_grid(p, &grid).unwrap(), brute_force_nearest(p, &grid), "{p:?}");
    }
}

#[test]
fn snap_to_grid_rejects_outside_points() {
    let grid = GridSpec::from_extent([0.0, 0.0], [30.0, 10.0], 0.05);
    for p in [[-0.1, 5.0], [30.1, 5.0], [5.0, 10.5], [f64::NAN, 1.0]] {
        assert!(snap_to_grid(p, &grid).is_err());
    }
}
