//! Label rasters, per-category binary masks, and binary PGM (P5) I/O.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::category::Category;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad PGM header: {0}")]
    Header(String),
    #[error("PGM payload has {actual} bytes, expected {expected}")]
    Truncated { expected: usize, actual: usize },
}

/// Pixel coordinate; origin top-left, x rightward, y downward.
pub type Point = (u32, u32);

/// One byte per pixel, row-major. Each value is meant to be a category id,
/// though an unvalidated raster may hold anything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0; (width as usize) * (height as usize)] }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == (width as usize) * (height as usize)).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    /// Pixel count per raw value.
    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }

    pub fn binary(&self, category: Category) -> BinaryMask {
        let id = category.id();
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.data.iter().map(|&v| v == id).collect(),
        }
    }

    pub fn read_pgm(path: &Path) -> Result<Self, PgmError> {
        let bytes = std::fs::read(path)?;
        Self::decode_pgm(&bytes)
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<Self, PgmError> {
        let mut pos = 0usize;
        let magic = next_token(bytes, &mut pos).ok_or_else(|| PgmError::Header("empty file".into()))?;
        if magic != b"P5" {
            return Err(PgmError::Header(format!("magic {:?}", String::from_utf8_lossy(magic))));
        }
        let mut field = |what: &str| -> Result<u32, PgmError> {
            let tok = next_token(bytes, &mut pos).ok_or_else(|| PgmError::Header(format!("missing {what}")))?;
            std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| PgmError::Header(format!("bad {what}")))
        };
        let width = field("width")?;
        let height = field("height")?;
        let maxval = field("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(PgmError::Header(format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let expected = (width as usize) * (height as usize);
        let payload = bytes.get(pos..).unwrap_or_default();
        if payload.len() < expected {
            return Err(PgmError::Truncated { expected, actual: payload.len() });
        }
        Ok(Self { width, height, data: payload[..expected].to_vec() })
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), PgmError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.encode_pgm())?;
        Ok(())
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; (width as usize) * (height as usize)] }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == (width as usize) * (height as usize)).then_some(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> u64 {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count() as u64
    }

    pub fn union_count(&self, other: &BinaryMask) -> u64 {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a || **b).count() as u64
    }
}

/// Per-category binary masks keyed by category name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    width: u32,
    height: u32,
    masks: BTreeMap<String, BinaryMask>,
}

impl MaskSet {
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, masks: BTreeMap::new() }
    }

    /// Splits a label raster into one mask per foreground category present.
    pub fn from_labels(labels: &LabelMask) -> Self {
        let hist = labels.histogram();
        let masks = Category::foreground()
            .filter(|c| hist[c.id() as usize] > 0)
            .map(|c| (c.name().to_string(), labels.binary(c)))
            .collect();
        Self { width: labels.width(), height: labels.height(), masks }
    }

    /// Inserts a mask, replacing any existing mask for the same category.
    pub fn insert(&mut self, category: Category, mask: BinaryMask) {
        assert_eq!(mask.dims(), (self.width, self.height), "mask dimensions differ from mask set");
        self.masks.insert(category.name().to_string(), mask);
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, category: Category) -> Option<&BinaryMask> {
        self.masks.get(category.name())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BinaryMask)> {
        self.masks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.masks.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Collapses back to a label raster. Later categories (by name order) win
    /// where masks overlap, which cannot happen for sets built by [`Self::from_labels`].
    pub fn to_labels(&self) -> LabelMask {
        let mut labels = LabelMask::new(self.width, self.height);
        for (name, mask) in &self.masks {
            let id = Category::from_name(name).map(Category::id).unwrap_or(0);
            for (i, &b) in mask.bits.iter().enumerate() {
                if b {
                    labels.data[i] = id;
                }
            }
        }
        labels
    }
}
