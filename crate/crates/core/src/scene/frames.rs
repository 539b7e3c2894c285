//! Binary state frames.
//!
//! Layout, all little-endian:
//!
//! | bytes          | content                          |
//! |----------------|----------------------------------|
//! | 8              | magic `TACSTATE`                 |
//! | 4              | `u32` format version (1)         |
//! | 4              | `u32` reserved, 0                |
//! | 8              | `u64` step                       |
//! | 8              | `f64` time (s)                   |
//! | 8              | `u64` gel vertex count           |
//! | 8              | `u64` total vertex count `n`     |
//! | 24·n           | positions, `f64` xyz per vertex  |
//! | 24·n           | velocities, `f64` xyz per vertex |
//! | 96             | indenter pose, row-major R then t|

use std::path::Path;

use super::SceneError;
use crate::geometry::Vec3;
use crate::solver::{Diagnostics, Pose, SimState};

pub const FRAME_MAGIC: &[u8; 8] = b"TACSTATE";
pub const FRAME_VERSION: u32 = 1;

pub fn encode_frame(state: &SimState, n_gel: usize) -> Vec<u8> {
    let n = state.x.len();
    let mut b = Vec::with_capacity(48 + 48 * n + 96);
    b.extend_from_slice(FRAME_MAGIC);
    b.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    b.extend_from_slice(&0u32.to_le_bytes());
    b.extend_from_slice(&state.step.to_le_bytes());
    b.extend_from_slice(&state.time.to_le_bytes());
    b.extend_from_slice(&(n_gel as u64).to_le_bytes());
    b.extend_from_slice(&(n as u64).to_le_bytes());
    for p in state.x.iter().chain(&state.v) {
        for c in p.iter() {
            b.extend_from_slice(&c.to_le_bytes());
        }
    }
    for c in state.indenter_pose.to_array() {
        b.extend_from_slice(&c.to_le_bytes());
    }
    b
}

/// Decoded frame plus its gel vertex count. Diagnostics are not stored.
pub fn decode_frame(bytes: &[u8]) -> Result<(SimState, usize), String> {
    let mut at = 0usize;
    let mut take = |k: usize| -> Result<&[u8], String> {
        let s = bytes.get(at..at + k).ok_or_else(|| format!("truncated at byte {at}"))?;
        at += k;
        Ok(s)
    };
    if take(8)? != FRAME_MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != FRAME_VERSION {
        return Err(format!("unsupported frame version {version}"));
    }
    take(4)?;
    let step = u64_at(take(8)?);
    let time = f64_at(take(8)?);
    let n_gel = u64_at(take(8)?) as usize;
    let n = u64_at(take(8)?) as usize;
    if n_gel > n || bytes.len() != 48 + 48 * n + 96 {
        return Err(format!("size {} does not match {n} vertices", bytes.len()));
    }
    let mut vecs = |count: usize| -> Result<Vec<Vec3>, String> {
        (0..count)
            .map(|_| {
                let s = take(24)?;
                Ok(Vec3::new(f64_at(&s[0..8]), f64_at(&s[8..16]), f64_at(&s[16..24])))
            })
            .collect()
    };
    let x = vecs(n)?;
    let v = vecs(n)?;
    let mut pose = [0.0; 12];
    for p in &mut pose {
        *p = f64_at(take(8)?);
    }
    let state =
        SimState { x, v, indenter_pose: Pose::from_array(&pose), time, step, diagnostics: Diagnostics::default() };
    Ok((state, n_gel))
}

pub fn write_frame(path: &Path, state: &SimState, n_gel: usize) -> Result<(), SceneError> {
    std::fs::write(path, encode_frame(state, n_gel)).map_err(|e| SceneError::Io { path: path.to_path_buf(), source: e })
}

pub fn read_frame(path: &Path) -> Result<(SimState, usize), SceneError> {
    let bytes = std::fs::read(path).map_err(|e| SceneError::Io { path: path.to_path_buf(), source: e })?;
    decode_frame(&bytes).map_err(|message| SceneError::Frame { path: path.to_path_buf(), message })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let x: Vec<Vec3> = (0..5).map(|i| Vec3::new(0.1 * i as f64, -1e-300, f64::MIN_POSITIVE)).collect();
        let v: Vec<Vec3> = (0..5).map(|i| Vec3::new(1.0 / 3.0, i as f64, -0.0)).collect();
        let pose = Pose::identity().rotated_about(&Vec3::new(0.1, 0.2, 0.3), &Vec3::z(), 0.7);
        let s = SimState { x, v, indenter_pose: pose, time: 0.03, step: 3, diagnostics: Diagnostics::default() };
        let bytes = encode_frame(&s, 3);
        let (back, n_gel) = decode_frame(&bytes).unwrap();
        assert_eq!(n_gel, 3);
        assert_eq!(encode_frame(&back, 3), bytes);
        assert_eq!(back, s);
        assert!(decode_frame(&bytes[..bytes.len() - 1]).is_err());
    }
}
