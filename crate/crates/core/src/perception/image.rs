//! Depth images, masks and their PGM encodings.
//!
//! Depth is stored as 16-bit big-endian PGM in millimetres (0 = invalid) with
//! the camera model in a JSON sidecar. Masks are 8-bit PGM, nonzero = member.

use std::io::{self, Read, Write};

use nalgebra::Vector3;

use super::{CameraModel, PerceptionError};

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major depth along the optical axis in metres; 0 marks no return.
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, z: f64) {
        self.data[v * self.width + u] = z;
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&z| z > 0.0).count()
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.data.len() != self.width * self.height || self.data.iter().any(|z| !z.is_finite() || *z < 0.0) {
            return Err(PerceptionError::InvalidImage);
        }
        Ok(())
    }

    /// Copy quantized to whole millimetres, as stored on disk.
    pub fn quantized(&self) -> Self {
        Self {
            data: self.data.iter().map(|&z| f64::from(to_mm(z)) / 1000.0).collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Self { width, height, bits }
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u < self.width && v < self.height && self.bits[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, on: bool) {
        self.bits[v * self.width + u] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }
}

/// Back-projects every masked pixel with a valid depth into the base frame.
pub fn deproject_mask(depth: &DepthImage, mask: &Mask, cam: &CameraModel) -> Result<Vec<Vector3<f64>>, PerceptionError> {
    if depth.width != cam.width || depth.height != cam.height || mask.width != cam.width || mask.height != cam.height {
        return Err(PerceptionError::ShapeMismatch);
    }
    let cloud: Vec<_> = mask
        .pixels()
        .filter_map(|(u, v)| {
            let z = depth.get(u, v);
            (z > 0.0).then(|| cam.deproject(u as f64, v as f64, z))
        })
        .collect();
    if cloud.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    Ok(cloud)
}

/// The smallest mask containing `seed`; ties go to the earliest mask.
pub fn select_mask(masks: &[Mask], seed: (usize, usize)) -> Result<usize, PerceptionError> {
    masks
        .iter()
        .enumerate()
        .filter(|(_, m)| m.contains(seed.0, seed.1))
        .min_by_key(|(i, m)| (m.count(), *i))
        .map(|(i, _)| i)
        .ok_or(PerceptionError::NoMaskAtSeed { u: seed.0, v: seed.1 })
}

fn to_mm(z: f64) -> u16 {
    (z * 1000.0).round().clamp(0.0, 65535.0) as u16
}

pub fn write_depth_pgm<W: Write>(w: &mut W, img: &DepthImage) -> io::Result<()> {
    write!(w, "P5\n{} {}\n65535\n", img.width, img.height)?;
    let mut buf = Vec::with_capacity(img.data.len() * 2);
    for &z in &img.data {
        buf.extend_from_slice(&to_mm(z).to_be_bytes());
    }
    w.write_all(&buf)
}

pub fn write_mask_pgm<W: Write>(w: &mut W, mask: &Mask) -> io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", mask.width, mask.height)?;
    let buf: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    w.write_all(&buf)
}

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: u32,
}

fn parse_header(bytes: &[u8]) -> Result<(PgmHeader, usize), PerceptionError> {
    let bad = |m: &str| PerceptionError::Pgm(m.to_string());
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad header number"))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(bad("truncated header"));
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    Ok((
        PgmHeader {
            width: width as usize,
            height: height as usize,
            maxval,
        },
        pos + 1,
    ))
}

pub fn read_depth_pgm<R: Read>(r: &mut R) -> Result<DepthImage, PerceptionError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let (h, off) = parse_header(&bytes)?;
    if h.maxval < 256 {
        return Err(PerceptionError::Pgm("depth image must be 16-bit".into()));
    }
    let raster = &bytes[off..];
    if raster.len() != h.width * h.height * 2 {
        return Err(PerceptionError::Pgm(format!(
            "expected {} raster bytes, found {}",
            h.width * h.height * 2,
            raster.len()
        )));
    }
    let data = raster
        .chunks_exact(2)
        .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / 1000.0)
        .collect();
    Ok(DepthImage {
        width: h.width,
        height: h.height,
        data,
    })
}

pub fn read_mask_pgm<R: Read>(r: &mut R) -> Result<Mask, PerceptionError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let (h, off) = parse_header(&bytes)?;
    if h.maxval > 255 {
        return Err(PerceptionError::Pgm("mask must be 8-bit".into()));
    }
    let raster = &bytes[off..];
    if raster.len() != h.width * h.height {
        return Err(PerceptionError::Pgm(format!(
            "expected {} raster bytes, found {}",
            h.width * h.height,
            raster.len()
        )));
    }
    Ok(Mask {
        width: h.width,
        height: h.height,
        bits: raster.iter().map(|&b| b != 0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::screw::Pose;

    #[test]
    fn single_centre_pixel_deprojects_onto_axis() {
        let cam = CameraModel::new(600.0, 600.0, 2.0, 1.0, 5, 3, Pose::identity()).unwrap();
        let mut depth = DepthImage::zeros(5, 3);
        depth.set(2, 1, 1.0);
        let mask = Mask::from_fn(5, 3, |u, v| (u, v) == (2, 1));
        let cloud = deproject_mask(&depth, &mask, &cam).unwrap();
        assert_eq!(cloud, vec![Vector3::new(0.0, 0.0, 1.0)]);
        let empty = DepthImage::zeros(5, 3);
        assert_eq!(deproject_mask(&empty, &mask, &cam), Err(PerceptionError::EmptyCloud));
    }

    #[test]
    fn smallest_containing_mask_wins() {
        let big = Mask::from_fn(100, 100, |u, v| u < 100 && v < 50);
        let small = Mask::from_fn(100, 100, |u, v| u < 50 && v < 10);
        assert_eq!((big.count(), small.count()), (5000, 500));
        assert_eq!(select_mask(&[big.clone(), small.clone()], (5, 5)), Ok(1));
        assert_eq!(select_mask(&[small.clone(), big.clone()], (5, 5)), Ok(0));
        assert_eq!(select_mask(&[small.clone(), big.clone()], (70, 5)), Ok(1));
        assert!(select_mask(&[small, big], (5, 80)).is_err());
        // ties resolve to the first
        let a = Mask::from_fn(4, 4, |u, _| u < 2);
        let b = Mask::from_fn(4, 4, |_, v| v < 2);
        assert_eq!(select_mask(&[a.clone(), b.clone()], (0, 0)), Ok(0));
        assert_eq!(select_mask(&[b, a], (0, 0)), Ok(0));
    }

    #[test]
    fn depth_pgm_encoding_is_exact() {
        let img = DepthImage {
            width: 3,
            height: 2,
            data: vec![0.0, 0.001, 0.5, 1.2346, 65.535, 0.2564],
        };
        let mut buf = Vec::new();
        write_depth_pgm(&mut buf, &img).unwrap();
        let mut want = b"P5\n3 2\n65535\n".to_vec();
        for mm in [0u16, 1, 500, 1235, 65535, 256] {
            want.extend_from_slice(&mm.to_be_bytes());
        }
        assert_eq!(buf, want);
        let back = read_depth_pgm(&mut buf.as_slice()).unwrap();
        assert_eq!(back, img.quantized());
        let mut again = Vec::new();
        write_depth_pgm(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn mask_pgm_roundtrip_and_comments() {
        let m = Mask::from_fn(4, 2, |u, v| (u + v) % 2 == 0);
        let mut buf = Vec::new();
        write_mask_pgm(&mut buf, &m).unwrap();
        assert_eq!(&buf[..11], b"P5\n4 2\n255\n");
        assert_eq!(read_mask_pgm(&mut buf.as_slice()).unwrap(), m);
        let commented = b"P5 # mask\n# size\n2 1\n1\n\x01\x00".to_vec();
        let back = read_mask_pgm(&mut commented.as_slice()).unwrap();
        assert_eq!(back.bits, vec![true, false]);
    }

    #[test]
    fn malformed_pgm_is_rejected() {
        assert!(read_mask_pgm(&mut &b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_mask_pgm(&mut &b"P5\n2 2\n255\n\x00"[..]).is_err());
        assert!(read_depth_pgm(&mut &b"P5\n1 1\n255\n\x00"[..]).is_err());
    }
}
