//! Binary greymap (PGM `P5`) reading and writing, 8- or 16-bit.

use std::path::Path;

use crate::error::{Error, Result};

/// Decoded greymap: row-major samples and the declared maximum value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Greymap {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub samples: Vec<u16>,
}

pub fn encode(map: &Greymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", map.width, map.height, map.max_value).into_bytes();
    if map.max_value < 256 {
        out.extend(map.samples.iter().map(|&s| s as u8));
    } else {
        for &s in &map.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Greymap, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("unexpected end of header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| format!("bad header number {s:?}"));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let max_value = num(token()?)?;
    if max_value == 0 || max_value > 65535 {
        return Err(format!("max value {max_value} out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[pos + 1..];
    let wide = max_value > 255;
    let n = width * height;
    let need = if wide { 2 * n } else { n };
    if data.len() != need {
        return Err(format!("raster has {} bytes, expected {}", data.len(), need));
    }
    let samples: Vec<u16> = if wide {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    if let Some(&s) = samples.iter().find(|&&s| s as usize > max_value) {
        return Err(format!("sample {s} exceeds max value {max_value}"));
    }
    Ok(Greymap { width, height, max_value: max_value as u16, samples })
}

pub fn read(path: &Path) -> Result<Greymap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::format(path, msg))
}

pub fn write(path: &Path, map: &Greymap) -> Result<()> {
    std::fs::write(path, encode(map)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_8_and_16_bit() {
        for max in [255u16, 4095] {
            let map = Greymap { width: 3, height: 2, max_value: max, samples: vec![0, 1, 2, max, 7, 100] };
            assert_eq!(decode(&encode(&map)).unwrap(), map);
        }
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([9, 10]);
        assert_eq!(decode(&bytes).unwrap().samples, vec![9, 10]);
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x01").is_err());
    }
}
