//! Spatial grids: label volumes, probability volumes, and crisp bit volumes.
//!
//! All volumes use x-fastest voxel ordering (`i = x + dims.x * (y + dims.y * z)`)
//! and multi-channel volumes are channel-major planar: channel `c` occupies
//! the contiguous block `[c * n_voxels, (c + 1) * n_voxels)`.
//!
//! On disk a volume is a raw little-endian array plus a text sidecar header
//! at `<path>.meta` recording dims, dtype, ordering, and a format version.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const VOLUME_FORMAT_VERSION: u32 = 1;

/// Grid extents. A 2D image is a volume with `z = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub fn new(x: usize, y: usize, z: usize) -> Result<Self> {
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::invalid(format!(
                "volume dims must be positive, got ({x}, {y}, {z})"
            )));
        }
        Ok(Dims { x, y, z })
    }

    pub fn n_voxels(&self) -> usize {
        self.x * self.y * self.z
    }

    /// Flat index of voxel (x, y, z), x-fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.x * (y + self.y * z)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.x, self.y, self.z)
    }
}

/// Per-voxel ordinal class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    pub dims: Dims,
    pub labels: Vec<u16>,
}

impl LabelVolume {
    pub fn new(dims: Dims, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != dims.n_voxels() {
            return Err(Error::DimMismatch(format!(
                "label volume {dims} needs {} voxels, got {}",
                dims.n_voxels(),
                labels.len()
            )));
        }
        Ok(LabelVolume { dims, labels })
    }

    pub fn filled(dims: Dims, label: u16) -> Self {
        LabelVolume {
            labels: vec![label; dims.n_voxels()],
            dims,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.labels.len() * 2);
        for &label in &self.labels {
            bytes.extend_from_slice(&label.to_le_bytes());
        }
        write_volume(path, &bytes, &self.header(), "label volume")
    }

    fn header(&self) -> VolumeHeader {
        VolumeHeader {
            format_version: VOLUME_FORMAT_VERSION,
            kind: "label-volume".into(),
            dtype: "uint16-le".into(),
            ordering: "x-fastest".into(),
            dims: [self.dims.x, self.dims.y, self.dims.z],
            n_channels: None,
            layout: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, bytes) = read_volume(path)?;
        header.check(path, "label-volume", "uint16-le")?;
        let dims = Dims::new(header.dims[0], header.dims[1], header.dims[2])
            .map_err(|e| Error::parse(path, e.to_string()))?;
        if bytes.len() != dims.n_voxels() * 2 {
            return Err(Error::parse(
                path,
                format!(
                    "raw size {} bytes does not match dims {dims} (expected {})",
                    bytes.len(),
                    dims.n_voxels() * 2
                ),
            ));
        }
        let labels = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        LabelVolume::new(dims, labels)
    }
}

/// Per-voxel per-channel probabilities in [0, 1], channel-major planar.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    pub dims: Dims,
    pub n_channels: usize,
    pub values: Vec<f32>,
}

impl ProbVolume {
    pub fn new(dims: Dims, n_channels: usize, values: Vec<f32>) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::invalid("probability volume needs at least 1 channel"));
        }
        if values.len() != dims.n_voxels() * n_channels {
            return Err(Error::DimMismatch(format!(
                "probability volume {dims} with {n_channels} channels needs {} values, got {}",
                dims.n_voxels() * n_channels,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!(
                "probability value {bad} outside [0, 1]"
            )));
        }
        Ok(ProbVolume {
            dims,
            n_channels,
            values,
        })
    }

    /// Value of channel `c` at flat voxel `i`.
    #[inline]
    pub fn at(&self, c: usize, i: usize) -> f32 {
        self.values[c * self.dims.n_voxels() + i]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.dims.n_voxels();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for &v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_volume(path, &bytes, &self.header(), "probability volume")
    }

    fn header(&self) -> VolumeHeader {
        VolumeHeader {
            format_version: VOLUME_FORMAT_VERSION,
            kind: "prob-volume".into(),
            dtype: "float32-le".into(),
            ordering: "x-fastest".into(),
            dims: [self.dims.x, self.dims.y, self.dims.z],
            n_channels: Some(self.n_channels),
            layout: Some("channel-major".into()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, bytes) = read_volume(path)?;
        header.check(path, "prob-volume", "float32-le")?;
        let dims = Dims::new(header.dims[0], header.dims[1], header.dims[2])
            .map_err(|e| Error::parse(path, e.to_string()))?;
        let n_channels = header.n_channels.ok_or_else(|| {
            Error::parse(path, "probability volume header lacks n_channels")
        })?;
        if bytes.len() != dims.n_voxels() * n_channels * 4 {
            return Err(Error::parse(
                path,
                format!(
                    "raw size {} bytes does not match dims {dims} x {n_channels} channels",
                    bytes.len()
                ),
            ));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        ProbVolume::new(dims, n_channels, values)
            .map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Crisp per-voxel per-channel bits, channel-major planar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVolume {
    pub dims: Dims,
    pub n_channels: usize,
    pub bits: Vec<u8>,
}

impl BitVolume {
    pub fn new(dims: Dims, n_channels: usize, bits: Vec<u8>) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::invalid("bit volume needs at least 1 channel"));
        }
        if bits.len() != dims.n_voxels() * n_channels {
            return Err(Error::DimMismatch(format!(
                "bit volume {dims} with {n_channels} channels needs {} bits, got {}",
                dims.n_voxels() * n_channels,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("bit volume entries must be 0 or 1"));
        }
        Ok(BitVolume {
            dims,
            n_channels,
            bits,
        })
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize) -> u8 {
        self.bits[c * self.dims.n_voxels() + i]
    }

    /// View as a crisp probability volume (bits become 0.0 / 1.0).
    pub fn to_probs(&self) -> ProbVolume {
        ProbVolume {
            dims: self.dims,
            n_channels: self.n_channels,
            values: self.bits.iter().map(|&b| b as f32).collect(),
        }
    }

    /// Reinterpret a crisp probability volume as bits. Errors if any value is
    /// not exactly 0.0 or 1.0.
    pub fn from_crisp_probs(probs: &ProbVolume) -> Result<Self> {
        let mut bits = Vec::with_capacity(probs.values.len());
        for &v in &probs.values {
            if v == 0.0 {
                bits.push(0);
            } else if v == 1.0 {
                bits.push(1);
            } else {
                return Err(Error::invalid(format!(
                    "volume is not crisp: value {v} is neither 0.0 nor 1.0"
                )));
            }
        }
        Ok(BitVolume {
            dims: probs.dims,
            n_channels: probs.n_channels,
            bits,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct VolumeHeader {
    format_version: u32,
    kind: String,
    dtype: String,
    ordering: String,
    dims: [usize; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    n_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    layout: Option<String>,
}

impl VolumeHeader {
    fn check(&self, path: &Path, kind: &str, dtype: &str) -> Result<()> {
        if self.format_version != VOLUME_FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported volume format version {}", self.format_version),
            ));
        }
        if self.kind != kind {
            return Err(Error::parse(
                path,
                format!("expected kind '{kind}', found '{}'", self.kind),
            ));
        }
        if self.dtype != dtype {
            return Err(Error::parse(
                path,
                format!("expected dtype '{dtype}', found '{}'", self.dtype),
            ));
        }
        if self.ordering != "x-fastest" {
            return Err(Error::parse(
                path,
                format!("unsupported ordering '{}'", self.ordering),
            ));
        }
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta");
    std::path::PathBuf::from(name)
}

fn write_volume(path: &Path, bytes: &[u8], header: &VolumeHeader, what: &str) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = toml::to_string(header)
        .map_err(|e| Error::parse(path, format!("cannot serialize {what} header: {e}")))?;
    let meta_path = sidecar_path(path);
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
}

fn read_volume(path: &Path) -> Result<(VolumeHeader, Vec<u8>)> {
    let meta_path = sidecar_path(path);
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let header: VolumeHeader =
        toml::from_str(&meta).map_err(|e| Error::parse(&meta_path, e.to_string()))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((header, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("bitseg-volume-{tag}"));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn index_is_x_fastest() {
        let dims = Dims::new(4, 3, 2).unwrap();
        assert_eq!(dims.index(0, 0, 0), 0);
        assert_eq!(dims.index(1, 0, 0), 1);
        assert_eq!(dims.index(0, 1, 0), 4);
        assert_eq!(dims.index(0, 0, 1), 12);
        assert_eq!(dims.index(3, 2, 1), 23);
    }

    #[test]
    fn label_volume_round_trips_bit_exactly() {
        let dir = temp_dir("labels");
        let dims = Dims::new(5, 4, 3).unwrap();
        let labels: Vec<u16> = (0..dims.n_voxels() as u16).collect();
        let vol = LabelVolume::new(dims, labels).unwrap();
        let path = dir.join("vol.lvol");
        vol.save(&path).unwrap();
        assert_eq!(LabelVolume::load(&path).unwrap(), vol);
        // Re-saving produces byte-identical files.
        let first = std::fs::read(&path).unwrap();
        LabelVolume::load(&path).unwrap().save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn prob_volume_round_trips_bit_exactly() {
        let dir = temp_dir("probs");
        let dims = Dims::new(3, 3, 1).unwrap();
        let values: Vec<f32> = (0..dims.n_voxels() * 2)
            .map(|i| (i as f32) / 18.0)
            .collect();
        let vol = ProbVolume::new(dims, 2, values).unwrap();
        let path = dir.join("vol.pvol");
        vol.save(&path).unwrap();
        assert_eq!(ProbVolume::load(&path).unwrap(), vol);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn prob_volume_rejects_out_of_range_values() {
        let dims = Dims::new(2, 1, 1).unwrap();
        assert!(ProbVolume::new(dims, 1, vec![0.5, 1.5]).is_err());
        assert!(ProbVolume::new(dims, 1, vec![-0.1, 0.5]).is_err());
    }

    #[test]
    fn bit_volume_checks_crispness() {
        let dims = Dims::new(2, 1, 1).unwrap();
        let crisp = ProbVolume::new(dims, 1, vec![0.0, 1.0]).unwrap();
        let bits = BitVolume::from_crisp_probs(&crisp).unwrap();
        assert_eq!(bits.bits, vec![0, 1]);
        assert_eq!(bits.to_probs(), crisp);

        let fuzzy = ProbVolume::new(dims, 1, vec![0.0, 0.5]).unwrap();
        assert!(BitVolume::from_crisp_probs(&fuzzy).is_err());
    }

    #[test]
    fn load_rejects_size_mismatch() {
        let dir = temp_dir("mismatch");
        let dims = Dims::new(2, 2, 1).unwrap();
        let vol = LabelVolume::filled(dims, 3);
        let path = dir.join("vol.lvol");
        vol.save(&path).unwrap();
        // Truncate the raw file; the sidecar still promises 4 voxels.
        std::fs::write(&path, [0u8; 6]).unwrap();
        let err = LabelVolume::load(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
