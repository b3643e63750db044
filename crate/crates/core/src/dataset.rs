//! Scene corpus ingestion: category registry, image decoding and a
//! deterministic synthetic corpus generator.
//!
//! A corpus is laid out as `root/<Category Name>/<file>.{ppm,png}`. An
//! optional `root/labels.txt` lists the category order, one name per line.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::resize_bilinear;
use crate::tensor::{Shape, Tensor};

/// Native camera frame: 576 wide by 384 high, RGB.
pub const CAMERA_FRAME: Shape = Shape {
    n: 1,
    h: 384,
    w: 576,
    c: 3,
};

pub const CATEGORY_COUNT: usize = 30;

const CAMSDD: [&str; CATEGORY_COUNT] = [
    "Portrait",
    "Group Portrait",
    "Kids",
    "Dog",
    "Cat",
    "Macro",
    "Gourmet",
    "Beach",
    "Mountains",
    "Waterfall",
    "Snow",
    "Landscape",
    "Underwater",
    "Architecture",
    "Sunrise & Sunset",
    "Blue Sky",
    "Overcast",
    "Greenery",
    "Autumn Plants",
    "Flowers",
    "Night Shot",
    "Stage",
    "Fireworks",
    "Candlelight",
    "Neon Lights",
    "Indoor",
    "Backlight",
    "Document",
    "QR Code",
    "Monitor Screen",
];

/// Folder-name matching key: case-insensitive, `&` and `and` equivalent.
fn normalize(name: &str) -> String {
    name.to_lowercase()
        .replace('&', " and ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryRegistry {
    names: Vec<String>,
    keys: Vec<String>,
}

impl CategoryRegistry {
    pub fn camsdd() -> Self {
        Self::from_names(CAMSDD.iter().map(|s| s.to_string()).collect())
            .expect("builtin registry is valid")
    }

    pub fn from_names(names: Vec<String>) -> Result<Self> {
        if names.len() != CATEGORY_COUNT {
            return Err(Error::InvalidRegistry(format!(
                "expected {CATEGORY_COUNT} categories, got {}",
                names.len()
            )));
        }
        let keys: Vec<String> = names.iter().map(|n| normalize(n)).collect();
        for (i, k) in keys.iter().enumerate() {
            if k.is_empty() {
                return Err(Error::InvalidRegistry(format!(
                    "category {i} has an empty name"
                )));
            }
            if keys[..i].contains(k) {
                return Err(Error::InvalidRegistry(format!(
                    "duplicate category {:?}",
                    names[i]
                )));
            }
        }
        Ok(CategoryRegistry { names, keys })
    }

    /// Registry from a `labels.txt` body; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_names(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    /// `root/labels.txt` when present, otherwise the built-in order.
    pub fn for_corpus(root: impl AsRef<Path>) -> Result<Self> {
        let path = root.as_ref().join("labels.txt");
        if path.is_file() {
            Self::parse(&fs::read_to_string(path)?)
        } else {
            Ok(Self::camsdd())
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    /// Index of the category a folder name refers to.
    pub fn index_of(&self, folder: &str) -> Option<usize> {
        let key = normalize(folder);
        self.keys.iter().position(|k| *k == key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub pixels: Tensor,
    pub label: usize,
    pub path: PathBuf,
}

/// A scanned corpus. Images are decoded lazily.
#[derive(Clone, Debug)]
pub struct Corpus {
    registry: CategoryRegistry,
    entries: Vec<(PathBuf, usize)>,
}

impl Corpus {
    pub fn registry(&self) -> &CategoryRegistry {
        &self.registry
    }

    /// `(path, label)` pairs in enumeration order.
    pub fn entries(&self) -> &[(PathBuf, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.registry.len()];
        for (_, l) in &self.entries {
            counts[*l] += 1;
        }
        counts
    }

    pub fn load(&self, i: usize) -> Result<LabeledImage> {
        let (path, label) = self
            .entries
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("image index {i} out of range")))?;
        Ok(LabeledImage {
            pixels: decode_image(path)?,
            label: *label,
            path: path.clone(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<LabeledImage>> + '_ {
        (0..self.len()).map(|i| self.load(i))
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "png"))
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut v = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

/// Lists every image under `root`, sorted by folder then file name.
pub fn scan_corpus(root: impl AsRef<Path>, registry: &CategoryRegistry) -> Result<Corpus> {
    let mut entries = Vec::new();
    for dir in sorted_dir(root.as_ref())? {
        if !dir.is_dir() {
            continue;
        }
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let label = registry
            .index_of(&name)
            .ok_or(Error::UnknownCategoryFolder(name))?;
        for file in sorted_dir(&dir)? {
            if file.is_file() && is_image(&file) {
                entries.push((file, label));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus {
        registry: registry.clone(),
        entries,
    })
}

/// Decodes a P6 or 8-bit RGB PNG file into a 384x576x3 pixel tensor.
pub fn decode_image(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_image_bytes(&fs::read(path)?)
}

pub fn decode_image_bytes(bytes: &[u8]) -> Result<Tensor> {
    let img = if bytes.starts_with(b"P6") {
        decode_p6(bytes)?
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)?
    } else {
        return Err(Error::UnsupportedFormat("not a P6 pixmap or PNG".into()));
    };
    if (img.shape().h, img.shape().w) == (CAMERA_FRAME.h, CAMERA_FRAME.w) {
        Ok(img)
    } else {
        resize_bilinear(&img, CAMERA_FRAME.h, CAMERA_FRAME.w)
    }
}

/// Decodes without resizing.
pub fn decode_p6(bytes: &[u8]) -> Result<Tensor> {
    let corrupt = |m: &str| Error::CorruptImage(m.to_string());
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        // whitespace and comments between header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(corrupt("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad header number"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(corrupt("missing separator after header"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "P6 maxval {maxval}, only 255 supported"
        )));
    }
    if w == 0 || h == 0 {
        return Err(corrupt("empty image"));
    }
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| corrupt("image too large"))?;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| corrupt("pixel data truncated"))?;
    Tensor::from_f32(
        Shape::hwc(h, w, 3),
        data.iter().map(|&b| b as f32).collect(),
    )
}

fn decode_png(bytes: &[u8]) -> Result<Tensor> {
    let corrupt = |e: png::DecodingError| Error::CorruptImage(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Rgb || depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "PNG {color:?} {depth:?}, need 8-bit RGB"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptImage("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let mut px = Vec::with_capacity(w * h * 3);
    for row in data.chunks_exact(info.line_size).take(h) {
        px.extend(row[..w * 3].iter().map(|&b| b as f32));
    }
    Tensor::from_f32(Shape::hwc(h, w, 3), px)
}

/// Encodes an HxWx3 pixel tensor as binary P6, rounding and clamping each
/// value to 0..=255.
pub fn encode_p6(t: &Tensor) -> Result<Vec<u8>> {
    let s = t.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::ShapeMismatch(format!("cannot encode {s} as RGB")));
    }
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    out.extend(
        t.as_f32()?
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

/// Signature color of category `k` in the synthetic corpus. The 30 colors
/// form a 4x3x3 grid with at least 64 levels between neighbours.
pub fn class_signature(k: usize) -> [u8; 3] {
    const R: [u8; 4] = [32, 96, 160, 224];
    const GB: [u8; 3] = [48, 128, 208];
    [R[k % 4], GB[(k / 4) % 3], GB[(k / 12) % 3]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub per_class: usize,
    /// Per-pixel uniform noise amplitude in pixel levels.
    pub noise: u8,
    pub seed: u64,
    pub signatures: Vec<[u8; 3]>,
}

impl SyntheticSpec {
    pub fn new(per_class: usize, noise: u8, seed: u64) -> Self {
        SyntheticSpec {
            per_class,
            noise,
            seed,
            signatures: (0..CATEGORY_COUNT).map(class_signature).collect(),
        }
    }
}

/// The `index`-th synthetic image of class `k` as P6 bytes.
pub fn synthetic_image(spec: &SyntheticSpec, k: usize, index: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((k * spec.per_class + index) as u64);
    let (w, h) = (CAMERA_FRAME.w, CAMERA_FRAME.h);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let a = spec.noise as i32;
    let sig = spec.signatures[k];
    out.reserve(w * h * 3);
    for _ in 0..w * h {
        for &c in &sig {
            let d = if a == 0 { 0 } else { rng.random_range(-a..=a) };
            out.push((c as i32 + d).clamp(0, 255) as u8);
        }
    }
    out
}

/// Writes `per_class` images per category under `root/<Category Name>/`.
/// Returns the written paths in corpus order.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    root: impl AsRef<Path>,
    registry: &CategoryRegistry,
) -> Result<Vec<PathBuf>> {
    if spec.signatures.len() != registry.len() {
        return Err(Error::InvalidArgument(format!(
            "{} signatures for {} categories",
            spec.signatures.len(),
            registry.len()
        )));
    }
    let mut paths = Vec::with_capacity(registry.len() * spec.per_class);
    for (k, name) in registry.names().iter().enumerate() {
        let dir = root.as_ref().join(name);
        fs::create_dir_all(&dir)?;
        for i in 0..spec.per_class {
            let path = dir.join(format!("img_{i:04}.ppm"));
            fs::write(&path, synthetic_image(spec, k, i))?;
            paths.push(path);
        }
    }
    Ok(paths)
}
