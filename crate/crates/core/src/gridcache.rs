//! `BMGR` grid cache: the traced path lists of every grid point per base
//! station, so a run can reload the channel grid without re-tracing.
//!
//! ```text
//! "BMGR"  version:u32  scene_len:u32  scene:UTF-8 TOML  points:u32
//! for bs in [rsu0, rsu1, mbs], for each point:
//!     n:u16  n x { gain_re:f64  gain_im:f64  aod:f64  aoa:f64 }
//! ```

use std::io::{self, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::phy::PathComponent;
use crate::scene::{BsId, ChannelGrid, Scene, SceneError};

pub const MAGIC: &[u8; 4] = b"BMGR";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum GridCacheError {
    #[error("malformed grid cache: {0}")]
    Format(String),
    #[error("grid cache was built for a different scene")]
    SceneMismatch,
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_grid_cache<W: Write>(scene: &Scene, grid: &ChannelGrid, mut w: W) -> Result<(), GridCacheError> {
    let text = scene.to_toml();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    w.write_all(&(scene.grid.len() as u32).to_le_bytes())?;
    let mut buf = Vec::new();
    for id in BsId::ALL {
        let ch = grid.channels(id);
        for lin in 0..scene.grid.len() {
            buf.clear();
            let paths = ch.paths(lin);
            buf.extend_from_slice(&(paths.len() as u16).to_le_bytes());
            for p in paths {
                for v in [p.gain.re, p.gain.im, p.aod, p.aoa] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_cache<R: Read>(scene: &Scene, mut r: R) -> Result<ChannelGrid, GridCacheError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], GridCacheError> {
        if pos + n > bytes.len() {
            return Err(GridCacheError::Format("truncated file".into()));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(GridCacheError::Format("bad magic (expected BMGR)".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(GridCacheError::Format(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if take(len)? != scene.to_toml().as_bytes() {
        return Err(GridCacheError::SceneMismatch);
    }
    let points = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if points != scene.grid.len() {
        return Err(GridCacheError::SceneMismatch);
    }
    let mut per_bs = Vec::with_capacity(3);
    for _ in BsId::ALL {
        let mut lists = Vec::with_capacity(points);
        for _ in 0..points {
            let n = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let mut v = [0.0f64; 4];
                for x in &mut v {
                    *x = f64::from_le_bytes(take(8)?.try_into().unwrap());
                }
                list.push(PathComponent { gain: Complex64::new(v[0], v[1]), aod: v[2], aoa: v[3] });
            }
            lists.push(list);
        }
        per_bs.push(lists);
    }
    drop(take);
    if pos != bytes.len() {
        return Err(GridCacheError::Format("trailing bytes".into()));
    }
    Ok(ChannelGrid::from_paths(scene, per_bs)?)
}

pub fn save_grid_cache(scene: &Scene, grid: &ChannelGrid, path: &Path) -> Result<(), GridCacheError> {
    write_grid_cache(scene, grid, io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_grid_cache(scene: &Scene, path: &Path) -> Result<ChannelGrid, GridCacheError> {
    read_grid_cache(scene, io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_channel_grid, generate_scene, SceneConfig};

    #[test]
    fn roundtrip_reproduces_snapshots() {
        let cfg = SceneConfig { grid_extent: [2.0, 1.0], grid_spacing: 0.1, ..SceneConfig::default() };
        let scene = generate_scene(&cfg, 8).unwrap();
        let grid = build_channel_grid(&scene).unwrap();
        let mut bytes = Vec::new();
        write_grid_cache(&scene, &grid, &mut bytes).unwrap();
        let back = read_grid_cache(&scene, bytes.as_slice()).unwrap();
        for id in BsId::ALL {
            for lin in 0..scene.grid.len() {
                assert_eq!(back.channels(id).coefficients(lin), grid.channels(id).coefficients(lin));
            }
        }
        let other = generate_scene(&cfg, 9).unwrap();
        assert!(matches!(read_grid_cache(&other, bytes.as_slice()), Err(GridCacheError::SceneMismatch)));
        assert!(matches!(read_grid_cache(&scene, &bytes[..bytes.len() - 1]), Err(GridCacheError::Format(_))));
    }
}
