//! Core raster types, histogramming, and bit-exact PGM file I/O.
//!
//! All rasters are row-major with `x` as the column index, `y` as the row
//! index, and the origin at the top-left corner.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Errors from raster construction and PGM I/O.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PGM file: expected magic P5 or P2, found {found:?}")]
    BadMagic { found: String },
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0}: only 8-bit images (maxval <= 255) are accepted")]
    MaxvalTooLarge(u32),
    #[error("truncated pixel data: expected {expected} pixels, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid pixel sample {0:?}")]
    BadSample(String),
}

/// An 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    /// Panics if `width * height != data.len()` or either dimension is zero.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert_eq!(data.len(), width * height, "pixel buffer length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

/// A binary foreground mask; data values are 0 (background) or 1 (foreground).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    /// Panics on dimension/length mismatch or a value outside {0, 1}.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        assert_eq!(data.len(), width * height, "mask buffer length mismatch");
        assert!(data.iter().all(|&v| v <= 1), "mask values must be 0 or 1");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        debug_assert!(v <= 1);
        self.data[y * self.width + x] = v;
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Foreground and background swapped.
    pub fn complement(&self) -> BinaryMask {
        let data = self.data.iter().map(|&v| 1 - v).collect();
        BinaryMask::new(self.width, self.height, data)
    }

    /// True if every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    /// Surround with a `border`-pixel ring of background.
    pub fn padded(&self, border: usize) -> BinaryMask {
        let (w, h) = (self.width + 2 * border, self.height + 2 * border);
        BinaryMask::from_fn(w, h, |x, y| {
            x >= border
                && y >= border
                && x < border + self.width
                && y < border + self.height
                && self.get(x - border, y - border) == 1
        })
    }

    /// The `w` x `h` window at (x0, y0). Panics if it exceeds the frame.
    pub fn cropped(&self, x0: usize, y0: usize, w: usize, h: usize) -> BinaryMask {
        assert!(
            x0 + w <= self.width && y0 + h <= self.height,
            "crop window out of bounds"
        );
        BinaryMask::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y) == 1)
    }
}

/// Integer component labels over a raster; 0 is background and the nonzero
/// labels are exactly `1..=count` with no gaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u32>,
    count: u32,
}

impl LabelMap {
    /// Panics if the buffer length mismatches or labels are not exactly
    /// `{1..=count}` with no gaps.
    pub fn new(width: usize, height: usize, data: Vec<u32>, count: u32) -> Self {
        assert!(
            width > 0 && height > 0,
            "label map dimensions must be positive"
        );
        assert_eq!(data.len(), width * height, "label buffer length mismatch");
        let mut seen = vec![false; count as usize];
        for &l in &data {
            if l != 0 {
                assert!(l <= count, "label {l} exceeds declared count {count}");
                seen[(l - 1) as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "label range 1..={count} has gaps");
        Self {
            width,
            height,
            data,
            count,
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0; width * height], 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    /// Number of distinct nonzero labels.
    pub fn count(&self) -> u32 {
        self.count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.data[y * self.width + x]
    }

    /// Mask of all labeled pixels.
    pub fn support(&self) -> BinaryMask {
        let data = self.data.iter().map(|&l| (l != 0) as u8).collect();
        BinaryMask::new(self.width, self.height, data)
    }
}

/// 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    bins: [u64; 256],
    total: u64,
}

impl Histogram256 {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        let total = bins.iter().sum();
        Self { bins, total }
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    /// Total pixel count (sum of all bins).
    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Count intensity occurrences over the whole image.
pub fn histogram(img: &GrayImage) -> Histogram256 {
    let mut bins = [0u64; 256];
    for &v in img.data() {
        bins[v as usize] += 1;
    }
    Histogram256::from_bins(bins)
}

/// Render a mask as an image: 0 stays 0, 1 becomes 255.
pub fn mask_to_image(mask: &BinaryMask) -> GrayImage {
    let data = mask
        .data()
        .iter()
        .map(|&v| if v == 1 { 255 } else { 0 })
        .collect();
    GrayImage::new(mask.width(), mask.height(), data)
}

/// Read a PGM file (binary `P5` or ASCII `P2`, maxval at most 255).
///
/// `#` comments in the header are skipped. Deeper-than-8-bit files are
/// rejected rather than rescaled.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_pgm(&bytes)
}

/// Decode PGM from an in-memory byte buffer. See [`load_pgm`].
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token().ok_or_else(|| RasterError::BadMagic {
        found: String::new(),
    })?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(RasterError::BadMagic {
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(RasterError::BadHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(RasterError::BadHeader("maxval must be at least 1".into()));
    }
    if maxval > 255 {
        return Err(RasterError::MaxvalTooLarge(maxval));
    }
    let expected = width as usize * height as usize;

    let data = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        match cur.bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(RasterError::BadHeader(
                    "missing whitespace before raster".into(),
                ))
            }
        }
        let raster = &cur.bytes[cur.pos..];
        if raster.len() < expected {
            return Err(RasterError::Truncated {
                expected,
                found: raster.len(),
            });
        }
        raster[..expected].to_vec()
    } else {
        let mut data = Vec::with_capacity(expected);
        while data.len() < expected {
            let tok = match cur.token() {
                Some(t) => t,
                None => {
                    return Err(RasterError::Truncated {
                        expected,
                        found: data.len(),
                    })
                }
            };
            let text = std::str::from_utf8(tok)
                .map_err(|_| RasterError::BadSample(String::from_utf8_lossy(tok).into_owned()))?;
            let v: u32 = text
                .parse()
                .map_err(|_| RasterError::BadSample(text.to_owned()))?;
            if v > maxval {
                return Err(RasterError::BadSample(format!(
                    "{v} exceeds maxval {maxval}"
                )));
            }
            data.push(v as u8);
        }
        data
    };
    Ok(GrayImage::new(width as usize, height as usize, data))
}

/// Write a binary PGM with the header `P5\n<width> <height>\n255\n`.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_pgm(img))?;
    w.flush()?;
    Ok(())
}

/// Encode to binary P5 bytes. See [`write_pgm`].
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos >= self.bytes.len() {
                return None;
            }
            if self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            let start = self.pos;
            while self.pos < self.bytes.len()
                && !self.bytes[self.pos].is_ascii_whitespace()
                && self.bytes[self.pos] != b'#'
            {
                self.pos += 1;
            }
            return Some(&self.bytes[start..self.pos]);
        }
    }

    fn header_number(&mut self, what: &str) -> Result<u32, RasterError> {
        let tok = self
            .token()
            .ok_or_else(|| RasterError::BadHeader(format!("missing {what}")))?;
        let text = std::str::from_utf8(tok)
            .map_err(|_| RasterError::BadHeader(format!("non-ASCII {what}")))?;
        text.parse()
            .map_err(|_| RasterError::BadHeader(format!("invalid {what} {text:?}")))
    }
}
