//! Trilinearly interpolated voxel grids and the `.vox3` file format.
//!
//! Layout (little-endian):
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `VOX3`                             |
//! | 4      | 4    | version, u32 = 1                         |
//! | 8      | 12   | nx, ny, nz as u32                        |
//! | 20     | 48   | bounds min xyz, max xyz as f64           |
//! | 68     | 4    | flags u32, bit 0 = colours present       |
//! | 72     | 4·n  | densities f32, x fastest                 |
//! | ...    | 12·n | optional colours, RGB f32 interleaved    |

use std::path::Path;

use thiserror::Error;

use super::{DensityField, RadianceField, Rgb, BLACK};
use crate::geometry::{Aabb, Vec3};

pub const VOX3_MAGIC: &[u8; 4] = b"VOX3";
pub const VOX3_VERSION: u32 = 1;
pub const VOX3_HEADER_LEN: usize = 72;
const FLAG_COLORS: u32 = 1;

const SNAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum VoxelFormatError {
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported version {found} at byte {offset}")]
    UnsupportedVersion { offset: usize, found: u32 },
    #[error("malformed header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },
    #[error(
        "payload truncated at byte {offset}: expected {expected} bytes in total, found {found}"
    )]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("{count} unexpected trailing bytes at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("invalid density {value} at byte {offset}")]
    BadDensity { offset: usize, value: f32 },
    #[error("invalid colour component {value} at byte {offset}")]
    BadColor { offset: usize, value: f32 },
    #[error("invalid voxel field: {0}")]
    Invalid(String),
    #[error("voxel file I/O")]
    Io(#[from] std::io::Error),
}

/// Densities (and optionally colours) stored at cell centres of a regular
/// grid over `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    resolution: [usize; 3],
    bounds: Aabb,
    densities: Vec<f32>,
    colors: Option<Vec<[f32; 3]>>,
}

impl VoxelField {
    pub fn new(
        resolution: [usize; 3],
        bounds: Aabb,
        densities: Vec<f32>,
        colors: Option<Vec<[f32; 3]>>,
    ) -> Result<Self, VoxelFormatError> {
        if resolution.iter().any(|&n| n == 0 || n > u32::MAX as usize) {
            return Err(VoxelFormatError::Invalid(format!(
                "resolution {resolution:?} must be positive"
            )));
        }
        let n = resolution[0] * resolution[1] * resolution[2];
        if densities.len() != n {
            return Err(VoxelFormatError::Invalid(format!(
                "expected {n} densities, got {}",
                densities.len()
            )));
        }
        if let Some(i) = densities.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(VoxelFormatError::Invalid(format!(
                "density #{i} = {} is not a finite non-negative number",
                densities[i]
            )));
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(VoxelFormatError::Invalid(format!(
                    "expected {n} colours, got {}",
                    c.len()
                )));
            }
            if c.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(VoxelFormatError::Invalid("colour outside [0, 1]".into()));
            }
        }
        Ok(Self {
            resolution,
            bounds,
            densities,
            colors,
        })
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn densities(&self) -> &[f32] {
        &self.densities
    }

    pub fn colors(&self) -> Option<&[[f32; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn cell_size(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / self.resolution[0] as f64,
            e.y / self.resolution[1] as f64,
            e.z / self.resolution[2] as f64,
        )
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        cell_center(&self.bounds, self.resolution, [i, j, k])
    }

    /// Trilinear weights: base cell per axis and fractional offsets.
    fn lattice_coords(&self, x: Vec3) -> Option<([usize; 3], [f64; 3])> {
        if !self.bounds.contains(x) {
            return None;
        }
        let min = self.bounds.min();
        let size = self.cell_size();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.resolution[a];
            if n == 1 {
                continue;
            }
            let u = ((x[a] - min[a]) / size[a] - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (u.floor() as usize).min(n - 2);
            let mut f = u - i0 as f64;
            if f < SNAP {
                f = 0.0;
            } else if f > 1.0 - SNAP {
                f = 1.0;
            }
            base[a] = i0;
            frac[a] = f;
        }
        Some((base, frac))
    }

    fn corner_weights(
        &self,
        base: [usize; 3],
        frac: [f64; 3],
    ) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..8).filter_map(move |c| {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let hi = (c >> a) & 1 == 1;
                if hi && self.resolution[a] == 1 {
                    return None;
                }
                idx[a] = base[a] + hi as usize;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
            }
            (w != 0.0).then(|| (self.index(idx[0], idx[1], idx[2]), w))
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(
            VOX3_HEADER_LEN + n * 4 + self.colors.as_ref().map_or(0, |_| n * 12),
        );
        out.extend_from_slice(VOX3_MAGIC);
        out.extend_from_slice(&VOX3_VERSION.to_le_bytes());
        for r in self.resolution {
            out.extend_from_slice(&(r as u32).to_le_bytes());
        }
        for v in self
            .bounds
            .min()
            .to_array()
            .into_iter()
            .chain(self.bounds.max().to_array())
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let flags = if self.colors.is_some() {
            FLAG_COLORS
        } else {
            0
        };
        out.extend_from_slice(&flags.to_le_bytes());
        for d in &self.densities {
            out.extend_from_slice(&d.to_le_bytes());
        }
        if let Some(colors) = &self.colors {
            for c in colors.iter().flatten() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VoxelFormatError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != VOX3_MAGIC {
            return Err(VoxelFormatError::BadMagic { offset: 0 });
        }
        let version = r.u32()?;
        if version != VOX3_VERSION {
            return Err(VoxelFormatError::UnsupportedVersion {
                offset: 4,
                found: version,
            });
        }
        let mut resolution = [0usize; 3];
        for (a, slot) in resolution.iter_mut().enumerate() {
            let v = r.u32()?;
            if v == 0 {
                return Err(VoxelFormatError::BadHeader {
                    offset: 8 + 4 * a,
                    reason: "zero resolution".into(),
                });
            }
            *slot = v as usize;
        }
        let mut b = [0.0f64; 6];
        for v in b.iter_mut() {
            *v = r.f64()?;
        }
        let bounds =
            Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5])).map_err(|e| {
                VoxelFormatError::BadHeader {
                    offset: 20,
                    reason: e.to_string(),
                }
            })?;
        let flags = r.u32()?;
        if flags & !FLAG_COLORS != 0 {
            return Err(VoxelFormatError::BadHeader {
                offset: 68,
                reason: format!("unknown flag bits {flags:#x}"),
            });
        }
        let n = resolution
            .iter()
            .try_fold(1usize, |acc, &v| acc.checked_mul(v))
            .ok_or_else(|| VoxelFormatError::BadHeader {
                offset: 8,
                reason: "cell count overflows".into(),
            })?;
        let has_colors = flags & FLAG_COLORS != 0;
        let expected = n
            .checked_mul(if has_colors { 16 } else { 4 })
            .and_then(|p| p.checked_add(VOX3_HEADER_LEN))
            .ok_or_else(|| VoxelFormatError::BadHeader {
                offset: 8,
                reason: "payload size overflows".into(),
            })?;
        if bytes.len() < expected {
            return Err(VoxelFormatError::Truncated {
                offset: bytes.len(),
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(VoxelFormatError::TrailingBytes {
                offset: expected,
                count: bytes.len() - expected,
            });
        }
        let mut densities = Vec::with_capacity(n);
        for _ in 0..n {
            let offset = r.pos;
            let d = r.f32()?;
            if !(d.is_finite() && d >= 0.0) {
                return Err(VoxelFormatError::BadDensity { offset, value: d });
            }
            densities.push(d);
        }
        let colors = if has_colors {
            let mut c = Vec::with_capacity(n);
            for _ in 0..n {
                let mut rgb = [0.0f32; 3];
                for v in rgb.iter_mut() {
                    let offset = r.pos;
                    *v = r.f32()?;
                    if !(0.0..=1.0).contains(v) {
                        return Err(VoxelFormatError::BadColor { offset, value: *v });
                    }
                }
                c.push(rgb);
            }
            Some(c)
        } else {
            None
        };
        Ok(Self {
            resolution,
            bounds,
            densities,
            colors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VoxelFormatError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VoxelFormatError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VoxelFormatError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(VoxelFormatError::Truncated {
                offset: self.bytes.len(),
                expected: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, VoxelFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, VoxelFormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, VoxelFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub(crate) fn cell_center(bounds: &Aabb, resolution: [usize; 3], idx: [usize; 3]) -> Vec3 {
    let min = bounds.min();
    let e = bounds.extent();
    let c = |a: usize| min[a] + (idx[a] as f64 + 0.5) * (e[a] / resolution[a] as f64);
    Vec3::new(c(0), c(1), c(2))
}

impl DensityField for VoxelField {
    fn density(&self, x: Vec3) -> f64 {
        let Some((base, frac)) = self.lattice_coords(x) else {
            return 0.0;
        };
        self.corner_weights(base, frac)
            .map(|(i, w)| w * self.densities[i] as f64)
            .sum()
    }
}

impl RadianceField for VoxelField {
    fn radiance(&self, x: Vec3, _dir: Vec3) -> (f64, Rgb) {
        let Some((base, frac)) = self.lattice_coords(x) else {
            return (0.0, BLACK);
        };
        let mut sigma = 0.0;
        let mut rgb = [0.0; 3];
        for (i, w) in self.corner_weights(base, frac) {
            sigma += w * self.densities[i] as f64;
            if let Some(colors) = &self.colors {
                for (acc, c) in rgb.iter_mut().zip(colors[i]) {
                    *acc += w * c as f64;
                }
            }
        }
        if sigma <= 0.0 {
            return (0.0, BLACK);
        }
        if self.colors.is_none() {
            rgb = [1.0; 3];
        }
        (sigma, rgb.map(|c| c.clamp(0.0, 1.0)))
    }
}

fn check_resolution(resolution: [usize; 3]) -> Result<(), VoxelFormatError> {
    if resolution.iter().any(|&n| n < 2) {
        return Err(VoxelFormatError::Invalid(format!(
            "bake resolution {resolution:?} must be at least 2 per axis"
        )));
    }
    Ok(())
}

fn lattice(resolution: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    let [nx, ny, nz] = resolution;
    (0..nz).flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| [i, j, k])))
}

/// Samples `field` at the cell centres of a `resolution` grid over `bounds`.
pub fn bake(
    field: &dyn DensityField,
    resolution: [usize; 3],
    bounds: Aabb,
) -> Result<VoxelField, VoxelFormatError> {
    check_resolution(resolution)?;
    let densities = lattice(resolution)
        .map(|idx| field.density(cell_center(&bounds, resolution, idx)) as f32)
        .collect();
    VoxelField::new(resolution, bounds, densities, None)
}

/// Like [`bake`], also storing colours.
pub fn bake_radiance(
    field: &dyn RadianceField,
    resolution: [usize; 3],
    bounds: Aabb,
) -> Result<VoxelField, VoxelFormatError> {
    check_resolution(resolution)?;
    let dir = Vec3::new(0.0, 0.0, 1.0);
    let (densities, colors) = lattice(resolution)
        .map(|idx| {
            let (s, c) = field.radiance(cell_center(&bounds, resolution, idx), dir);
            (s as f32, c.map(|v| v as f32))
        })
        .unzip();
    VoxelField::new(resolution, bounds, densities, Some(colors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Primitive;
    use proptest::prelude::*;

    fn small() -> VoxelField {
        VoxelField::new(
            [2, 2, 2],
            Aabb::cube(1.0).unwrap(),
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.5],
            Some((0..8).map(|i| [i as f32 / 8.0, 0.5, 1.0]).collect()),
        )
        .unwrap()
    }

    fn blob() -> Primitive {
        Primitive::GaussianBlob {
            mean: Vec3::new(0.1, -0.2, 0.05),
            width: 0.4,
            sigma: 6.0,
            color: [0.9, 0.3, 0.1],
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        let f = small();
        let back = VoxelField::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back, f);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.vox3");
        f.save(&path).unwrap();
        assert_eq!(VoxelField::load(&path).unwrap(), f);
    }

    #[test]
    fn header_layout() {
        let bytes = small().to_bytes();
        assert_eq!(&bytes[0..4], b"VOX3");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[68..72].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), VOX3_HEADER_LEN + 8 * 4 + 8 * 12);
    }

    #[test]
    fn short_payload_is_rejected() {
        let f = VoxelField::new([2, 2, 2], Aabb::cube(1.0).unwrap(), vec![1.0; 8], None).unwrap();
        let bytes = f.to_bytes();
        let cut = &bytes[..bytes.len() - 4];
        match VoxelField::from_bytes(cut) {
            Err(VoxelFormatError::Truncated {
                offset, expected, ..
            }) => {
                assert_eq!(offset, VOX3_HEADER_LEN + 7 * 4);
                assert_eq!(expected, VOX3_HEADER_LEN + 8 * 4);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let f = VoxelField::new([2, 2, 2], Aabb::cube(1.0).unwrap(), vec![1.0; 8], None).unwrap();
        let good = f.to_bytes();

        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(
            VoxelField::from_bytes(&b),
            Err(VoxelFormatError::BadMagic { offset: 0 })
        ));

        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(
            VoxelField::from_bytes(&b),
            Err(VoxelFormatError::UnsupportedVersion {
                offset: 4,
                found: 2
            })
        ));

        let mut b = good.clone();
        let third = VOX3_HEADER_LEN + 2 * 4;
        b[third..third + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
        match VoxelField::from_bytes(&b) {
            Err(VoxelFormatError::BadDensity { offset, value }) => {
                assert_eq!(offset, third);
                assert_eq!(value, -1.0);
            }
            other => panic!("{other:?}"),
        }

        let mut b = good.clone();
        b.push(0);
        assert!(matches!(
            VoxelField::from_bytes(&b),
            Err(VoxelFormatError::TrailingBytes { count: 1, .. })
        ));

        let mut b = good.clone();
        b[20..28].copy_from_slice(&5.0f64.to_le_bytes());
        assert!(matches!(
            VoxelField::from_bytes(&b),
            Err(VoxelFormatError::BadHeader { offset: 20, .. })
        ));

        assert!(matches!(
            VoxelField::from_bytes(&good[..10]),
            Err(VoxelFormatError::Truncated { .. })
        ));
    }

    #[test]
    fn baked_blob_matches_at_lattice_points() {
        let bounds = Aabb::cube(1.0).unwrap();
        let field = bake_radiance(&blob(), [32, 32, 32], bounds).unwrap();
        let reloaded = VoxelField::from_bytes(&field.to_bytes()).unwrap();
        for k in 0..32 {
            for j in 0..32 {
                for i in 0..32 {
                    let c = reloaded.cell_center(i, j, k);
                    let stored = reloaded.densities()[reloaded.index(i, j, k)] as f64;
                    assert_eq!(reloaded.density(c), stored, "cell {i},{j},{k}");
                    assert_eq!(stored, blob().density(c) as f32 as f64);
                }
            }
        }
    }

    #[test]
    fn outside_bounds_is_zero_and_bake_needs_two_cells() {
        let f = small();
        assert_eq!(f.density(Vec3::new(1.5, 0.0, 0.0)), 0.0);
        assert_eq!(
            f.radiance(Vec3::new(1.5, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)),
            (0.0, BLACK)
        );
        assert!(bake(&blob(), [1, 4, 4], Aabb::cube(1.0).unwrap()).is_err());
    }

    #[test]
    fn colorless_field_is_white_where_dense() {
        let f = bake(&blob(), [4, 4, 4], Aabb::cube(1.0).unwrap()).unwrap();
        let (s, c) = f.radiance(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0));
        assert!(s > 0.0);
        assert_eq!(c, [1.0; 3]);
    }

    proptest! {
        #[test]
        fn trilinear_stays_within_corner_range(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            vals in proptest::collection::vec(0.0f32..10.0, 27),
        ) {
            let f = VoxelField::new([3, 3, 3], Aabb::cube(1.0).unwrap(), vals, None).unwrap();
            let p = Vec3::new(x, y, z);
            let (base, frac) = f.lattice_coords(p).unwrap();
            let corners: Vec<f64> = (0..8).map(|c| {
                let idx: Vec<usize> = (0..3).map(|a| base[a] + ((c >> a) & 1)).collect();
                f.densities()[f.index(idx[0], idx[1], idx[2])] as f64
            }).collect();
            let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = f.density(p);
            let _ = frac;
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9, "{v} not in [{lo}, {hi}]");
        }

        #[test]
        fn voxel_queries_are_non_negative(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
            let f = small();
            prop_assert!(f.density(Vec3::new(x, y, z)) >= 0.0);
        }
    }
}
