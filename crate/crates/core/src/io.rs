//! File I/O: Middlebury `.flo` interchange, 8-bit raster frames, and a small
//! binary container for raw pooled planes.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::flow::{FlowField, GrayFrame, RgbFrame};

/// Float interpretation of the `.flo` magic bytes ("PIEH" in little-endian).
pub const FLO_MAGIC: f32 = 202021.25;

/// Magic prefix of the raw float-plane container written next to rendered
/// images, see [`write_planes`].
pub const PLANES_MAGIC: &[u8; 4] = b"DYNF";

/// ITU-R 601 luma from an RGB triple, rounded half away from zero.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round() as u8
}

/// Reads a Middlebury `.flo` file. NaN/inf samples are replaced by zero;
/// use [`read_flo_counting`] if the caller wants to report them.
pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    read_flo_counting(path).map(|(field, _)| field)
}

/// Reads a `.flo` file, returning the field and the number of non-finite
/// samples that were sanitized to zero.
pub fn read_flo_counting(path: impl AsRef<Path>) -> Result<(FlowField, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

fn decode_flo(bytes: &[u8]) -> Result<(FlowField, usize)> {
    if bytes.len() < 12 {
        return Err(Error::Length(format!(
            "flo header needs 12 bytes, file has {}",
            bytes.len()
        )));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!(
            "bad flo magic: got {magic}, expected {FLO_MAGIC}"
        )));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::Dimension(format!(
            "flo dimensions must be positive, got {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let expect = 12 + width * height * 2 * 4;
    if bytes.len() != expect {
        return Err(Error::Length(format!(
            "flo payload for {width}x{height} needs {expect} bytes, file has {}",
            bytes.len()
        )));
    }
    let n = width * height;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for px in 0..n {
        let off = 12 + px * 8;
        u.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        v.push(f32::from_le_bytes(
            bytes[off + 4..off + 8].try_into().unwrap(),
        ));
    }
    FlowField::sanitized(width, height, u, v)
}

/// Writes the exact byte layout [`read_flo`] consumes; the round trip is
/// bit-exact for any finite-valued field.
pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    atomic_write(path, &encode_flo(field))
}

fn encode_flo(field: &FlowField) -> Vec<u8> {
    let n = field.len();
    let mut bytes = Vec::with_capacity(12 + n * 8);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(field.width() as i32).to_le_bytes());
    bytes.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for px in 0..n {
        bytes.extend_from_slice(&field.u()[px].to_le_bytes());
        bytes.extend_from_slice(&field.v()[px].to_le_bytes());
    }
    bytes
}

/// Loads all `.flo` files in a directory, sorted lexicographically by name.
pub fn load_flo_sequence(dir: impl AsRef<Path>) -> Result<Vec<FlowField>> {
    let dir = dir.as_ref();
    let mut paths = list_sorted(dir, &["flo"])?;
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .flo files in {}",
            dir.display()
        )));
    }
    paths.drain(..).map(read_flo).collect()
}

const RASTER_EXTENSIONS: &[&str] = &["png", "pgm", "ppm", "pnm", "bmp"];

/// Loads the frames of a directory as grayscale, in lexicographic filename
/// order. Color inputs are converted with the fixed ITU-R 601 weighting.
pub fn load_gray_sequence(dir: impl AsRef<Path>) -> Result<Vec<GrayFrame>> {
    let dir = dir.as_ref();
    let paths = list_sorted(dir, RASTER_EXTENSIONS)?;
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no raster frames in {}",
            dir.display()
        )));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in paths {
        frames.push(gray_from_image(image::open(&path)?));
    }
    check_equal_dims(frames.iter().map(|f| (f.width(), f.height())))?;
    Ok(frames)
}

/// Loads the frames of a directory as RGB, in lexicographic filename order.
/// Grayscale inputs are replicated into all three channels.
pub fn load_rgb_sequence(dir: impl AsRef<Path>) -> Result<Vec<RgbFrame>> {
    let dir = dir.as_ref();
    let paths = list_sorted(dir, RASTER_EXTENSIONS)?;
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no raster frames in {}",
            dir.display()
        )));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in paths {
        let rgb = image::open(&path)?.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut r = Vec::with_capacity(w * h);
        let mut g = Vec::with_capacity(w * h);
        let mut b = Vec::with_capacity(w * h);
        for px in rgb.pixels() {
            r.push(px.0[0]);
            g.push(px.0[1]);
            b.push(px.0[2]);
        }
        frames.push(RgbFrame::new(w, h, r, g, b)?);
    }
    check_equal_dims(frames.iter().map(|f| (f.width(), f.height())))?;
    Ok(frames)
}

fn gray_from_image(img: DynamicImage) -> GrayFrame {
    match img {
        DynamicImage::ImageLuma8(gray) => {
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            GrayFrame::new(w, h, gray.into_raw()).expect("decoded image is consistent")
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let values = rgb.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect();
            GrayFrame::new(w, h, values).expect("decoded image is consistent")
        }
    }
}

fn check_equal_dims(mut dims: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    if let Some(first) = dims.next() {
        for (i, d) in dims.enumerate() {
            if d != first {
                return Err(Error::Dimension(format!(
                    "frame {} is {}x{}, expected {}x{}",
                    i + 1,
                    d.0,
                    d.1,
                    first.0,
                    first.1
                )));
            }
        }
    }
    Ok(())
}

fn list_sorted(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if let Some(ext) = ext {
            if extensions.contains(&ext.as_str()) {
                paths.push(path);
            }
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Saves a grayscale frame as PNG.
pub fn save_gray_png(frame: &GrayFrame, path: impl AsRef<Path>) -> Result<()> {
    let img = image::GrayImage::from_raw(
        frame.width() as u32,
        frame.height() as u32,
        frame.values().to_vec(),
    )
    .expect("frame invariants guarantee the buffer size");
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)?;
    atomic_write(path.as_ref(), &buf)
}

/// Saves an RGB frame as PNG.
pub fn save_rgb_png(frame: &RgbFrame, path: impl AsRef<Path>) -> Result<()> {
    let n = frame.width() * frame.height();
    let mut raw = Vec::with_capacity(n * 3);
    for px in 0..n {
        raw.push(frame.r()[px]);
        raw.push(frame.g()[px]);
        raw.push(frame.b()[px]);
    }
    let img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, raw)
        .expect("frame invariants guarantee the buffer size");
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)?;
    atomic_write(path.as_ref(), &buf)
}

/// Persists raw 64-bit planes so downstream consumers are not limited by the
/// 8-bit renderings. Layout: `b"DYNF"`, u32 version, u32 channels, u32 width,
/// u32 height, then per-channel row-major f64 little-endian samples.
pub fn write_planes(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    planes: &[&[f64]],
) -> Result<()> {
    let n = width * height;
    for (i, p) in planes.iter().enumerate() {
        if p.len() != n {
            return Err(Error::Dimension(format!(
                "plane {i} must hold {n} samples, got {}",
                p.len()
            )));
        }
    }
    let mut bytes = Vec::with_capacity(20 + planes.len() * n * 8);
    bytes.extend_from_slice(PLANES_MAGIC);
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&(planes.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(width as u32).to_le_bytes());
    bytes.extend_from_slice(&(height as u32).to_le_bytes());
    for plane in planes {
        for s in *plane {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
    }
    atomic_write(path.as_ref(), &bytes)
}

/// Reads a raw-plane container back; returns `(width, height, planes)`.
pub fn read_planes(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 20];
    file.read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;
    if &header[0..4] != PLANES_MAGIC {
        return Err(Error::Format("bad raw-plane magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != 1 {
        return Err(Error::Format(format!("unsupported raw-plane version {version}")));
    }
    let channels = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::Dimension(format!(
            "raw-plane container has degenerate shape {channels}x{width}x{height}"
        )));
    }
    let n = width * height;
    let mut rest = Vec::new();
    file.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    if rest.len() != channels * n * 8 {
        return Err(Error::Length(format!(
            "raw-plane payload needs {} bytes, got {}",
            channels * n * 8,
            rest.len()
        )));
    }
    let mut planes = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut plane = Vec::with_capacity(n);
        for px in 0..n {
            let off = (c * n + px) * 8;
            plane.push(f64::from_le_bytes(rest[off..off + 8].try_into().unwrap()));
        }
        planes.push(plane);
    }
    Ok((width, height, planes))
}

/// Writes a file through a unique temp name plus atomic rename, so readers
/// never observe partial content and retries cannot interleave.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("output");
    let tmp = dir.join(format!(".{stem}.tmp{}", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}
