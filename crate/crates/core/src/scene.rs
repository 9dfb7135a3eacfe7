//! Synthetic V2I scene: base stations, reflecting walls, point scatterers
//! and the receiver sampling grid, plus a first-order image-source tracer.
//!
//! Coordinates are metres in the ground plane. `x` runs along the road and
//! `y` across it. Heights are only used for path lengths and wall blockage.
//! Every base station carries a horizontal ULA whose broadside points at the
//! centre of the grid; departure angles are azimuths relative to that
//! broadside.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::{self, ArrayGeometry, PathComponent, PhyError};

pub type Point2 = [f64; 2];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("grid is not covered by any base station")]
    NoCoverage,
    #[error("position ({0:.4}, {1:.4}) is outside the grid")]
    OutOfGrid(f64, f64),
    #[error("no trajectory stayed inside the grid after {0} attempts")]
    TrajectoryRetriesExhausted(usize),
    #[error(transparent)]
    Phy(#[from] PhyError),
}

pub type Result<T> = std::result::Result<T, SceneError>;

/// Which base station of the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BsId {
    Rsu0,
    Rsu1,
    Mbs,
}

impl BsId {
    pub const ALL: [BsId; 3] = [BsId::Rsu0, BsId::Rsu1, BsId::Mbs];

    fn slot(self) -> usize {
        match self {
            BsId::Rsu0 => 0,
            BsId::Rsu1 => 1,
            BsId::Mbs => 2,
        }
    }
}

impl fmt::Display for BsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BsId::Rsu0 => "rsu0",
            BsId::Rsu1 => "rsu1",
            BsId::Mbs => "mbs",
        })
    }
}

impl std::str::FromStr for BsId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rsu0" => Ok(BsId::Rsu0),
            "rsu1" => Ok(BsId::Rsu1),
            "mbs" => Ok(BsId::Mbs),
            other => Err(format!("unknown base station '{other}' (expected rsu0, rsu1 or mbs)")),
        }
    }
}

/// Scene generation parameters. Ranges are `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub carrier_frequency_hz: f64,
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    pub rx_height: f64,
    pub rsu_antennas: usize,
    pub rsu_height: f64,
    pub rsu_positions: [Point2; 2],
    pub mbs_antennas: usize,
    pub mbs_height: f64,
    pub mbs_position: Point2,
    pub grid_origin: Point2,
    /// Along-road (x) and across-road (y) size.
    pub grid_extent: [f64; 2],
    pub grid_spacing: f64,
    /// Walls parallel to the road on the far side of the grid.
    pub num_reflectors: usize,
    pub reflector_offset: [f64; 2],
    pub reflector_length: [f64; 2],
    pub reflector_loss_db: [f64; 2],
    pub reflector_height: f64,
    /// Roadside point scatterers between the grid and the walls.
    pub num_scatterers: usize,
    pub scatterer_offset: [f64; 2],
    pub scatterer_gain_db: [f64; 2],
    pub scatterer_height: f64,
    /// Maximum BS-to-grid-corner distance still counted as coverage.
    pub coverage_radius: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 28e9,
            antenna_spacing: 0.5,
            rx_height: 1.5,
            rsu_antennas: 32,
            rsu_height: 3.0,
            rsu_positions: [[-6.0, -4.0], [36.0, -4.0]],
            mbs_antennas: 128,
            mbs_height: 22.0,
            mbs_position: [15.0, -60.0],
            grid_origin: [0.0, 0.0],
            grid_extent: [30.0, 10.0],
            grid_spacing: 0.05,
            num_reflectors: 2,
            reflector_offset: [4.0, 12.0],
            reflector_length: [25.0, 50.0],
            reflector_loss_db: [6.0, 12.0],
            reflector_height: 12.0,
            num_scatterers: 3,
            scatterer_offset: [0.5, 3.0],
            scatterer_gain_db: [-20.0, -10.0],
            scatterer_height: 1.0,
            coverage_radius: 250.0,
        }
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SceneError::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SceneError::InvalidConfig(msg.to_string()));
        if !(self.grid_spacing > 0.0) {
            return bad("grid_spacing must be > 0");
        }
        if !(self.grid_extent[0] > 0.0 && self.grid_extent[1] > 0.0) {
            return bad("grid_extent must be positive");
        }
        if self.rsu_antennas == 0 || self.mbs_antennas == 0 {
            return bad("antenna counts must be >= 1");
        }
        if !(self.rx_height >= 0.0 && self.rsu_height >= 0.0 && self.mbs_height >= 0.0) {
            return bad("heights must be non-negative");
        }
        for (name, r) in [
            ("reflector_offset", self.reflector_offset),
            ("reflector_length", self.reflector_length),
            ("reflector_loss_db", self.reflector_loss_db),
            ("scatterer_offset", self.scatterer_offset),
            ("scatterer_gain_db", self.scatterer_gain_db),
        ] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(SceneError::InvalidConfig(format!("{name} must be an ordered finite range")));
            }
        }
        if !(self.coverage_radius > 0.0) {
            return bad("coverage_radius must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: BsId,
    pub position: Point2,
    pub height: f64,
    /// Azimuth of the array broadside, radians from +x.
    pub broadside: f64,
    pub geometry: ArrayGeometry<f64>,
}

impl BaseStation {
    /// Departure angle toward `target` relative to broadside, wrapped to (-pi, pi].
    pub fn relative_azimuth(&self, target: Point2) -> f64 {
        let az = (target[1] - self.position[1]).atan2(target[0] - self.position[0]);
        wrap_angle(az - self.broadside)
    }

    /// Departure angle toward `target`, if it lies in front of the array.
    pub fn aod_to(&self, target: Point2) -> Option<f64> {
        let rel = self.relative_azimuth(target);
        (rel.abs() <= FRAC_PI_2).then_some(rel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub start: Point2,
    pub end: Point2,
    pub loss_db: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Point2,
    pub height: f64,
    pub gain_db: f64,
}

/// Receiver sampling grid. Points sit at `origin + (ix, iy) * spacing` with
/// `ix < nx`, `iy < ny`; the origin is a grid point and the far edges are not
/// (half-open extent), so a 30 m x 10 m grid at 0.05 m has 600 x 200 points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point2,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridIndex {
    pub ix: usize,
    pub iy: usize,
}

impl GridSpec {
    pub fn from_extent(origin: Point2, extent: [f64; 2], spacing: f64) -> Self {
        // Rounding guards against 30/0.05 = 599.999...
        let nx = ((extent[0] / spacing) + 1e-9).floor() as usize;
        let ny = ((extent[1] / spacing) + 1e-9).floor() as usize;
        Self { origin, spacing, nx: nx.max(1), ny: ny.max(1) }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linear(&self, idx: GridIndex) -> usize {
        idx.iy * self.nx + idx.ix
    }

    pub fn unlinear(&self, linear: usize) -> GridIndex {
        GridIndex { ix: linear % self.nx, iy: linear / self.nx }
    }

    pub fn point(&self, idx: GridIndex) -> Point2 {
        [
            self.origin[0] + idx.ix as f64 * self.spacing,
            self.origin[1] + idx.iy as f64 * self.spacing,
        ]
    }

    /// Snappable region: the grid points' bounding box grown by half a spacing.
    pub fn bounds(&self) -> (Point2, Point2) {
        let h = 0.5 * self.spacing;
        (
            [self.origin[0] - h, self.origin[1] - h],
            [
                self.origin[0] + (self.nx - 1) as f64 * self.spacing + h,
                self.origin[1] + (self.ny - 1) as f64 * self.spacing + h,
            ],
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (lo, hi) = self.bounds();
        p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1]
    }

    pub fn center(&self) -> Point2 {
        [
            self.origin[0] + 0.5 * (self.nx - 1) as f64 * self.spacing,
            self.origin[1] + 0.5 * (self.ny - 1) as f64 * self.spacing,
        ]
    }

    pub fn corners(&self) -> [Point2; 4] {
        let last = GridIndex { ix: self.nx - 1, iy: self.ny - 1 };
        let far = self.point(last);
        [self.origin, [far[0], self.origin[1]], [self.origin[0], far[1]], far]
    }
}

/// Nearest grid point; exact midpoints go to the lower index.
pub fn snap_to_grid(position: Point2, grid: &GridSpec) -> Result<GridIndex> {
    if !position[0].is_finite() || !position[1].is_finite() || !grid.contains(position) {
        return Err(SceneError::OutOfGrid(position[0], position[1]));
    }
    let axis = |p: f64, o: f64, n: usize| {
        let u = (p - o) / grid.spacing;
        let lower = u.floor();
        // Ties (frac == 0.5) stay on the lower point.
        let i = if u - lower > 0.5 { lower + 1.0 } else { lower };
        (i.max(0.0) as usize).min(n - 1)
    };
    Ok(GridIndex {
        ix: axis(position[0], grid.origin[0], grid.nx),
        iy: axis(position[1], grid.origin[1], grid.ny),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub carrier_frequency: f64,
    pub rx_height: f64,
    pub rsus: [BaseStation; 2],
    pub mbs: BaseStation,
    pub reflectors: Vec<Reflector>,
    pub scatterers: Vec<Scatterer>,
    pub grid: GridSpec,
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

const SCENE_STREAM: u64 = 0x5CE7E;

/// Deterministic scene construction from `(config, seed)`.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let grid = GridSpec::from_extent(config.grid_origin, config.grid_extent, config.grid_spacing);
    let center = grid.center();
    let make_bs = |id: BsId, position: Point2, height: f64, antennas: usize| -> Result<BaseStation> {
        let geometry = ArrayGeometry::new(antennas, config.antenna_spacing, config.carrier_frequency_hz)?;
        let broadside = (center[1] - position[1]).atan2(center[0] - position[0]);
        Ok(BaseStation { id, position, height, broadside, geometry })
    };
    let rsus = [
        make_bs(BsId::Rsu0, config.rsu_positions[0], config.rsu_height, config.rsu_antennas)?,
        make_bs(BsId::Rsu1, config.rsu_positions[1], config.rsu_height, config.rsu_antennas)?,
    ];
    let mbs = make_bs(BsId::Mbs, config.mbs_position, config.mbs_height, config.mbs_antennas)?;

    let covered = |bs: &BaseStation| {
        grid.corners().iter().all(|&c| bs.aod_to(c).is_some() && dist2(bs.position, c) <= config.coverage_radius)
    };
    if !(rsus.iter().any(covered) || covered(&mbs)) {
        return Err(SceneError::NoCoverage);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SCENE_STREAM);
    let top = grid.origin[1] + grid.ny as f64 * grid.spacing;
    let x_lo = grid.origin[0];
    let x_hi = grid.origin[0] + grid.nx as f64 * grid.spacing;
    let reflectors = (0..config.num_reflectors)
        .map(|_| {
            let y = top + uniform(&mut rng, config.reflector_offset);
            let len = uniform(&mut rng, config.reflector_length);
            let mid = uniform(&mut rng, [x_lo, x_hi]);
            Reflector {
                start: [mid - 0.5 * len, y],
                end: [mid + 0.5 * len, y],
                loss_db: uniform(&mut rng, config.reflector_loss_db),
                height: config.reflector_height,
            }
        })
        .collect();
    let scatterers = (0..config.num_scatterers)
        .map(|_| {
            let x = uniform(&mut rng, [x_lo, x_hi]);
            let y = top + uniform(&mut rng, config.scatterer_offset);
            Scatterer {
                position: [x, y],
                height: config.scatterer_height,
                gain_db: uniform(&mut rng, config.scatterer_gain_db),
            }
        })
        .collect();

    Ok(Scene {
        seed,
        carrier_frequency: config.carrier_frequency_hz,
        rx_height: config.rx_height,
        rsus,
        mbs,
        reflectors,
        scatterers,
        grid,
    })
}

impl Scene {
    pub fn bs(&self, id: BsId) -> &BaseStation {
        match id {
            BsId::Rsu0 => &self.rsus[0],
            BsId::Rsu1 => &self.rsus[1],
            BsId::Mbs => &self.mbs,
        }
    }

    pub fn wavelength(&self) -> f64 {
        phy::SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    /// Direct-link departure angle from `bs` toward a ground position.
    pub fn los_aod(&self, bs: BsId, point: Point2) -> Option<f64> {
        self.bs(bs).aod_to(point)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn dist2(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn dist3(a: Point2, ha: f64, b: Point2, hb: f64) -> f64 {
    let d = dist2(a, b);
    (d * d + (ha - hb) * (ha - hb)).sqrt()
}

/// Parameters `(s, u)` where segment `p0->p1` at `s` meets `q0->q1` at `u`.
fn segment_intersection(p0: Point2, p1: Point2, q0: Point2, q1: Point2) -> Option<(f64, f64)> {
    let r = [p1[0] - p0[0], p1[1] - p0[1]];
    let d = [q1[0] - q0[0], q1[1] - q0[1]];
    let denom = r[0] * d[1] - r[1] * d[0];
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = [q0[0] - p0[0], q0[1] - p0[1]];
    let s = (w[0] * d[1] - w[1] * d[0]) / denom;
    let u = (w[0] * r[1] - w[1] * r[0]) / denom;
    ((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&u)).then_some((s, u))
}

fn mirror(p: Point2, a: Point2, b: Point2) -> Point2 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2;
    let foot = [a[0] + t * d[0], a[1] + t * d[1]];
    [2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1]]
}

fn side(p: Point2, a: Point2, b: Point2) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn fold_aoa(arrival_azimuth: f64) -> f64 {
    // Single-antenna receiver: report the arrival azimuth relative to the
    // across-road normal folded into [-pi/2, pi/2].
    wrap_angle(arrival_azimuth - FRAC_PI_2).sin().asin()
}

/// Kind of a traced path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    LineOfSight,
    Reflection(usize),
    Scatter(usize),
}

/// A traced path with its unfolded 3D length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracedPath {
    pub kind: PathKind,
    pub length: f64,
    pub component: PathComponent<f64>,
}

impl Scene {
    /// Whether the straight leg from `(a, ha)` to `(b, hb)` passes through a
    /// wall below its top edge. `skip` excludes the wall a leg ends on.
    fn leg_blocked(&self, a: Point2, ha: f64, b: Point2, hb: f64, skip: Option<usize>) -> bool {
        self.reflectors.iter().enumerate().any(|(i, w)| {
            if Some(i) == skip {
                return false;
            }
            match segment_intersection(a, b, w.start, w.end) {
                Some((s, _)) if s > 1e-9 && s < 1.0 - 1e-9 => ha + (hb - ha) * s < w.height,
                _ => false,
            }
        })
    }

    fn path_gain(&self, amplitude_db: f64, length: f64) -> Complex64 {
        let lambda = self.wavelength();
        let amp = 10f64.powf(amplitude_db / 20.0) * lambda / (4.0 * PI * length);
        let phase = -2.0 * PI * (length / lambda).fract();
        Complex64::from_polar(amp, phase)
    }

    /// All propagation paths from `bs` to a ground point, with geometry detail.
    pub fn trace_paths_detailed(&self, bs_id: BsId, point: Point2) -> Vec<TracedPath> {
        let bs = self.bs(bs_id);
        let hb = bs.height;
        let hr = self.rx_height;
        let mut out = Vec::new();

        if !self.leg_blocked(bs.position, hb, point, hr, None) {
            if let Some(aod) = bs.aod_to(point) {
                let length = dist3(bs.position, hb, point, hr);
                let arrival = (bs.position[1] - point[1]).atan2(bs.position[0] - point[0]);
                out.push(TracedPath {
                    kind: PathKind::LineOfSight,
                    length,
                    component: PathComponent { gain: self.path_gain(0.0, length), aod, aoa: fold_aoa(arrival) },
                });
            }
        }

        for (i, wall) in self.reflectors.iter().enumerate() {
            let sb = side(bs.position, wall.start, wall.end);
            let sp = side(point, wall.start, wall.end);
            if sb * sp <= 0.0 {
                continue;
            }
            let image = mirror(bs.position, wall.start, wall.end);
            let Some((s, u)) = segment_intersection(image, point, wall.start, wall.end) else {
                continue;
            };
            let _ = s;
            let hit = [
                wall.start[0] + u * (wall.end[0] - wall.start[0]),
                wall.start[1] + u * (wall.end[1] - wall.start[1]),
            ];
            let flat = dist2(image, point);
            let first_leg = dist2(bs.position, hit);
            let h_hit = hb + (hr - hb) * (first_leg / flat);
            if h_hit > wall.height {
                continue;
            }
            if self.leg_blocked(bs.position, hb, hit, h_hit, Some(i))
                || self.leg_blocked(hit, h_hit, point, hr, Some(i))
            {
                continue;
            }
            let Some(aod) = bs.aod_to(hit) else { continue };
            let length = (flat * flat + (hb - hr) * (hb - hr)).sqrt();
            let arrival = (hit[1] - point[1]).atan2(hit[0] - point[0]);
            out.push(TracedPath {
                kind: PathKind::Reflection(i),
                length,
                component: PathComponent { gain: self.path_gain(-wall.loss_db, length), aod, aoa: fold_aoa(arrival) },
            });
        }

        for (i, sc) in self.scatterers.iter().enumerate() {
            if self.leg_blocked(bs.position, hb, sc.position, sc.height, None)
                || self.leg_blocked(sc.position, sc.height, point, hr, None)
            {
                continue;
            }
            let Some(aod) = bs.aod_to(sc.position) else { continue };
            let length = dist3(bs.position, hb, sc.position, sc.height) + dist3(sc.position, sc.height, point, hr);
            let arrival = (sc.position[1] - point[1]).atan2(sc.position[0] - point[0]);
            out.push(TracedPath {
                kind: PathKind::Scatter(i),
                length,
                component: PathComponent { gain: self.path_gain(sc.gain_db, length), aod, aoa: fold_aoa(arrival) },
            });
        }
        out
    }

    /// LoS, first-order wall reflections and single-bounce scatter paths.
    /// An empty list means the point is fully blocked.
    pub fn trace_paths(&self, bs: BsId, point: Point2) -> Vec<PathComponent<f64>> {
        self.trace_paths_detailed(bs, point).into_iter().map(|p| p.component).collect()
    }
}

/// Per-BS path lists and cached snapshots for every grid point.
#[derive(Debug, Clone)]
pub struct BsChannels {
    pub bs: BsId,
    pub num_antennas: usize,
    path_offsets: Vec<usize>,
    paths: Vec<PathComponent<f64>>,
    coefficients: Vec<Complex64>,
    outage: Vec<bool>,
}

impl BsChannels {
    fn from_paths(bs: &BaseStation, per_point: Vec<Vec<PathComponent<f64>>>) -> Result<Self> {
        let n = bs.geometry.num_antennas;
        let mut path_offsets = Vec::with_capacity(per_point.len() + 1);
        let mut paths = Vec::new();
        let mut coefficients = Vec::with_capacity(per_point.len() * n);
        let mut outage = Vec::with_capacity(per_point.len());
        path_offsets.push(0);
        for list in per_point {
            match phy::synthesize_channel(&list, &bs.geometry, 0) {
                Ok(h) => {
                    coefficients.extend_from_slice(&h.coefficients);
                    outage.push(false);
                }
                Err(PhyError::NoPropagationPath) => {
                    coefficients.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), n));
                    outage.push(true);
                }
                Err(e) => return Err(e.into()),
            }
            paths.extend_from_slice(&list);
            path_offsets.push(paths.len());
        }
        Ok(Self { bs: bs.id, num_antennas: n, path_offsets, paths, coefficients, outage })
    }

    pub fn paths(&self, linear: usize) -> &[PathComponent<f64>] {
        &self.paths[self.path_offsets[linear]..self.path_offsets[linear + 1]]
    }

    pub fn is_outage(&self, linear: usize) -> bool {
        self.outage[linear]
    }

    pub fn coefficients(&self, linear: usize) -> &[Complex64] {
        &self.coefficients[linear * self.num_antennas..(linear + 1) * self.num_antennas]
    }

    /// Cached snapshot at a grid point, `None` in outage.
    pub fn snapshot(&self, linear: usize, slot: u64) -> Option<phy::ChannelSnapshot<f64>> {
        (!self.outage[linear]).then(|| phy::ChannelSnapshot::new(self.coefficients(linear).to_vec(), slot))
    }

    pub fn outage_count(&self) -> usize {
        self.outage.iter().filter(|&&o| o).count()
    }
}

/// Traced paths and synthesized CSI for every grid point and base station.
#[derive(Debug, Clone)]
pub struct ChannelGrid {
    pub grid: GridSpec,
    per_bs: Vec<BsChannels>,
}

impl ChannelGrid {
    pub fn channels(&self, bs: BsId) -> &BsChannels {
        &self.per_bs[bs.slot()]
    }

    /// Rebuild from stored path lists (e.g. a grid cache file).
    pub fn from_paths(scene: &Scene, per_bs: Vec<Vec<Vec<PathComponent<f64>>>>) -> Result<Self> {
        if per_bs.len() != 3 || per_bs.iter().any(|v| v.len() != scene.grid.len()) {
            return Err(SceneError::InvalidConfig("grid cache does not match the scene grid".into()));
        }
        let per_bs = BsId::ALL
            .iter()
            .zip(per_bs)
            .map(|(&id, lists)| BsChannels::from_paths(scene.bs(id), lists))
            .collect::<Result<_>>()?;
        Ok(Self { grid: scene.grid, per_bs })
    }
}

/// Trace and synthesize every grid point for all three base stations.
pub fn build_channel_grid(scene: &Scene) -> Result<ChannelGrid> {
    let per_bs = BsId::ALL
        .iter()
        .map(|&id| {
            (0..scene.grid.len())
                .map(|lin| scene.trace_paths(id, scene.grid.point(scene.grid.unlinear(lin))))
                .collect()
        })
        .collect();
    ChannelGrid::from_paths(scene, per_bs)
}

/// Straight-line constant-acceleration vehicle track sampled every `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: Point2,
    pub heading: f64,
    pub initial_speed: f64,
    pub acceleration: f64,
    pub dt: f64,
    pub num_slots: usize,
}

impl Trajectory {
    pub fn distance_at(&self, slot: usize) -> f64 {
        let t = slot as f64 * self.dt;
        self.initial_speed * t + 0.5 * self.acceleration * t * t
    }

    pub fn position(&self, slot: usize) -> Point2 {
        let s = self.distance_at(slot);
        [self.start[0] + self.heading.cos() * s, self.start[1] + self.heading.sin() * s]
    }

    pub fn positions(&self) -> Vec<Point2> {
        (0..self.num_slots).map(|k| self.position(k)).collect()
    }
}

/// Vehicle kinematics distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub speed: [f64; 2],
    pub acceleration: [f64; 2],
    pub dt: f64,
    /// Headings are drawn along the road (+x or -x) plus a uniform deviation
    /// of at most this many degrees.
    pub heading_jitter_deg: f64,
    pub bidirectional: bool,
    pub max_retries: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            speed: [10.0, 15.0],
            acceleration: [-3.0, 3.0],
            dt: 1e-3,
            heading_jitter_deg: 10.0,
            bidirectional: true,
            max_retries: 1000,
        }
    }
}

/// Draw a trajectory whose every slot stays inside the grid.
pub fn sample_trajectory<R: Rng>(
    grid: &GridSpec,
    config: &TrajectoryConfig,
    num_slots: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let (lo, hi) = grid.bounds();
    for _ in 0..config.max_retries.max(1) {
        let start = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        let base = if config.bidirectional && rng.gen_bool(0.5) { PI } else { 0.0 };
        let jitter = config.heading_jitter_deg.to_radians();
        let heading = base + if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
        let traj = Trajectory {
            start,
            heading,
            initial_speed: rng.gen_range(config.speed[0]..=config.speed[1]),
            acceleration: rng.gen_range(config.acceleration[0]..=config.acceleration[1]),
            dt: config.dt,
            num_slots,
        };
        if (0..num_slots).all(|k| grid.contains(traj.position(k))) {
            return Ok(traj);
        }
    }
    Err(SceneError::TrajectoryRetriesExhausted(config.max_retries))
}
