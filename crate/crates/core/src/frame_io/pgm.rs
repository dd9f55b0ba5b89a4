//! Binary portable graymap (`P5`, maxval 255) frames.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Row-major 8-bit luminance image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Format(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(GrayFrame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayFrame {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&[u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("graymap header: missing {what}")));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token(what)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| {
                Error::Format(format!(
                    "graymap header: bad {what} `{}`",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayFrame> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    let magic = cur.token("magic")?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "graymap header: expected magic P5, found `{}`",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "graymap header: maxval {maxval} unsupported (expected 255)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("graymap header: zero dimension".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::Format("graymap header: missing raster separator".into())),
    }
    let need = width * height;
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        return Err(Error::Format(format!(
            "graymap truncated: {} of {need} raster bytes",
            raster.len()
        )));
    }
    GrayFrame::new(width, height, raster[..need].to_vec())
}

pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn write_pgm(path: impl AsRef<Path>, frame: &GrayFrame) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(frame)).map_err(|e| Error::io(path, e))
}

fn pgm_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|ext| ext == "pgm") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Reads every `*.pgm` file in `dir`, in filename order.
pub fn read_frames(dir: impl AsRef<Path>) -> Result<Vec<GrayFrame>> {
    let mut frames: Vec<GrayFrame> = Vec::new();
    for path in pgm_paths(dir.as_ref())? {
        let frame = read_pgm(&path)?;
        if let Some(first) = frames.first() {
            if (first.width, first.height) != (frame.width, frame.height) {
                return Err(Error::Format(format!(
                    "{}: dimensions {}x{} differ from sequence {}x{}",
                    path.display(),
                    frame.width,
                    frame.height,
                    first.width,
                    first.height
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes `frames` as `000000.pgm`, `000001.pgm`, ... into `dir`.
pub fn write_frames(dir: impl AsRef<Path>, frames: &[GrayFrame]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        write_pgm(dir.join(format!("{i:06}.pgm")), frame)?;
    }
    Ok(())
}
