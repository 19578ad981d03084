//! `PCQ1` binary clouds and plain-text XYZ.
//!
//! Binary layout: the four bytes `PCQ1`, a little-endian `u32` point count,
//! then `count * 3` little-endian `f32` values (x, y, z interleaved).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

pub const PCQ_MAGIC: &[u8; 4] = b"PCQ1";

pub fn write_pcq(w: &mut impl Write, cloud: &PointCloud) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(8 + cloud.len() * 12);
    buf.extend_from_slice(PCQ_MAGIC);
    buf.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in cloud.points() {
        for c in p {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

pub fn read_pcq(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 8 || &bytes[..4] != PCQ_MAGIC {
        return Err(Error::CloudFormat("missing PCQ1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != n * 12 {
        return Err(Error::CloudFormat(format!(
            "header declares {n} points but body holds {} bytes",
            body.len()
        )));
    }
    let points = body
        .chunks_exact(12)
        .map(|c| {
            std::array::from_fn(|k| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap()))
        })
        .collect();
    PointCloud::new(points)
}

pub fn write_xyz(w: &mut impl Write, cloud: &PointCloud) -> std::io::Result<()> {
    let mut s = String::with_capacity(cloud.len() * 32);
    for p in cloud.points() {
        // `{}` on f32 prints the shortest representation that round-trips.
        s.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    w.write_all(s.as_bytes())
}

pub fn read_xyz(r: impl std::io::Read) -> Result<PointCloud> {
    let mut points: Vec<Point> = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| Error::CloudFormat(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f32> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::CloudFormat(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 3 {
            return Err(Error::CloudFormat(format!(
                "line {}: expected 3 values, found {}",
                lineno + 1,
                vals.len()
            )));
        }
        points.push([vals[0], vals[1], vals[2]]);
    }
    PointCloud::new(points)
}

fn is_xyz(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("xyz") || e.eq_ignore_ascii_case("txt"))
}

/// Reads `.xyz`/`.txt` as ASCII, anything else as `PCQ1`.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let cloud = if is_xyz(path) {
        read_xyz(bytes.as_slice())
    } else {
        read_pcq(&bytes)
    };
    cloud.map_err(|e| Error::CloudFormat(format!("{}: {e}", path.display())))
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    if is_xyz(path) {
        write_xyz(&mut buf, cloud)
    } else {
        write_pcq(&mut buf, cloud)
    }
    .and_then(|_| fs::write(path, &buf))
    .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_layout_is_exact() {
        let c = PointCloud::new(vec![[1.0, -2.0, 0.5]]).unwrap();
        let mut buf = Vec::new();
        write_pcq(&mut buf, &c).unwrap();
        let mut expected = b"PCQ1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        for v in [1.0f32, -2.0, 0.5] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_bad_headers_and_lengths() {
        assert!(read_pcq(b"PCQ2\x01\0\0\0").is_err());
        let mut buf = Vec::new();
        write_pcq(&mut buf, &PointCloud::new(vec![[0.0; 3]; 3]).unwrap()).unwrap();
        assert!(read_pcq(&buf[..buf.len() - 1]).is_err());
        // a zero-point file is not a valid cloud
        assert!(read_pcq(b"PCQ1\0\0\0\0").is_err());
    }

    #[test]
    fn xyz_parse_errors() {
        assert!(read_xyz("1 2\n".as_bytes()).is_err());
        assert!(read_xyz("1 2 x\n".as_bytes()).is_err());
        let c = read_xyz("# header\n1 2 3\n\n4 5 6\n".as_bytes()).unwrap();
        assert_eq!(c.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    proptest! {
        #[test]
        fn round_trips_are_bit_exact(
            pts in prop::collection::vec(prop::array::uniform3(prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL), 1..64)
        ) {
            let c = PointCloud::new(pts).unwrap();
            let mut bin = Vec::new();
            write_pcq(&mut bin, &c).unwrap();
            let back = read_pcq(&bin).unwrap();
            prop_assert_eq!(bits(&back), bits(&c));
            let mut txt = Vec::new();
            write_xyz(&mut txt, &c).unwrap();
            let back = read_xyz(txt.as_slice()).unwrap();
            prop_assert_eq!(bits(&back), bits(&c));
        }
    }

    fn bits(c: &PointCloud) -> Vec<[u32; 3]> {
        c.points().iter().map(|p| p.map(f32::to_bits)).collect()
    }
}
