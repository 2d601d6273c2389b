//! Binary PGM (P5) read/write. Samples wider than 8 bits are stored as
//! two bytes, most significant first, per the netpbm convention.

use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn write_pgm(path: &Path, width: usize, height: usize, maxval: u16, pixels: &[u16]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "pgm pixel count {} does not match {width}x{height}",
            pixels.len()
        )));
    }
    let mut buf = Vec::with_capacity(32 + pixels.len() * 2);
    write!(buf, "P5\n{width} {height}\n{maxval}\n")?;
    if maxval > 255 {
        for &p in pixels {
            buf.extend_from_slice(&p.to_be_bytes());
        }
    } else {
        for &p in pixels {
            buf.push(p as u8);
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = fs::read(path)?;
    let malformed = |reason: &str| Error::MalformedFile {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(malformed("missing P5 magic"));
    }
    // Header: three whitespace-separated integers after the magic, with
    // `#` comments running to end of line.
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated header"));
        }
        let token = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = token.parse().map_err(|_| malformed("bad header integer"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing raster separator"));
    }
    pos += 1;
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(malformed("maxval out of range"));
    }
    let maxval = maxval as u16;
    let count = width * height;
    let pixels = if maxval > 255 {
        if bytes.len() - pos != count * 2 {
            return Err(malformed("raster size mismatch"));
        }
        bytes[pos..]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        if bytes.len() - pos != count {
            return Err(malformed("raster size mismatch"));
        }
        bytes[pos..].iter().map(|&b| b as u16).collect()
    };
    Ok(PgmImage {
        width,
        height,
        maxval,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let pixels: Vec<u16> = (0..12).map(|i| i * 300).collect();
        write_pgm(&path, 4, 3, 4095, &pixels).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (4, 3, 4095));
        assert_eq!(img.pixels, pixels);
        // big-endian on disk
        let raw = std::fs::read(&path).unwrap();
        let header_len = b"P5\n4 3\n4095\n".len();
        assert_eq!(&raw[header_len..header_len + 2], &[0, 0]);
        assert_eq!(&raw[header_len + 2..header_len + 4], &[0x01, 0x2c]);
    }

    #[test]
    fn rejects_truncated_raster() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P5\n2 2\n4095\n\x00\x01").unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn reads_headers_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# comment\n2 1\n# another\n255\n\x07\x09").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.pixels, vec![7, 9]);
    }
}
