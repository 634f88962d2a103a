//! Binary PGM (P5) and PPM (P6) images, folder export, and folder ingest.
//!
//! This is the external data interface: a dataset on disk is
//! `root/<domain>/<class>/<image files>`. Class indices follow the sorted
//! class-directory names and domain ids follow the sorted domain-directory
//! names, so a folder tree alone fixes the label mapping.

use std::fs;
use std::path::Path;

use crate::error::{CtaError, Result};
use crate::numerics::Tensor;
use crate::shiftgen::dataset::SyntheticDataset;
use crate::shiftgen::render::{CHANNELS, CLASS_NAMES, IMAGE_SIZE, PIXELS_PER_IMAGE};

/// A decoded image, channel-planar, values scaled to [0,1].
#[derive(Debug, Clone)]
pub struct PnmImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a [H, W] grayscale plane as binary PGM with maxval 255.
pub fn encode_pgm(gray: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if gray.len() != height * width {
        return Err(CtaError::shape("encode_pgm", height * width, gray.len()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(gray.iter().map(|&v| to_byte(v)));
    Ok(out)
}

/// Encodes a channel-planar [3, H, W] image as binary PPM with maxval 255.
pub fn encode_ppm(planar: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    let plane = height * width;
    if planar.len() != 3 * plane {
        return Err(CtaError::shape("encode_ppm", 3 * plane, planar.len()));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for i in 0..plane {
        out.push(to_byte(planar[i]));
        out.push(to_byte(planar[plane + i]));
        out.push(to_byte(planar[2 * plane + i]));
    }
    Ok(out)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> HeaderReader<'a> {
    fn fail(&self, message: impl Into<String>) -> CtaError {
        CtaError::DatasetLayout {
            path: self.origin.to_string(),
            message: message.into(),
        }
    }

    /// Skips whitespace and `#` comment lines between header tokens.
    fn skip_separators(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail("truncated header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.fail(format!("{what} is not a number: {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Decodes binary PGM (P5) or PPM (P6) with maxval up to 255.
/// `origin` names the source (usually a path) in error messages.
pub fn decode_pnm(bytes: &[u8], origin: &str) -> Result<PnmImage> {
    let mut r = HeaderReader { bytes, pos: 0, origin };
    let magic = r.token()?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(r.fail(format!(
                "unsupported magic {:?}; only binary P5 and P6 are read",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(r.fail(format!("degenerate dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(r.fail(format!("maxval {maxval} unsupported; expected 1..=255")));
    }
    // Exactly one whitespace byte separates the header from raster data.
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return Err(r.fail("missing separator before raster data"));
    }
    r.pos += 1;
    let expected = width * height * channels;
    let raster = &bytes[r.pos..];
    if raster.len() != expected {
        return Err(r.fail(format!(
            "raster has {} byte(s), expected {expected} for {width}x{height}x{channels}",
            raster.len()
        )));
    }
    let scale = 1.0 / maxval as f64;
    let plane = width * height;
    let mut data = vec![0.0f64; channels * plane];
    for i in 0..plane {
        for c in 0..channels {
            data[c * plane + i] = f64::from(raster[i * channels + c]).min(maxval as f64) * scale;
        }
    }
    Ok(PnmImage {
        channels,
        height,
        width,
        data,
    })
}

/// Bilinear resample of one channel plane to [dh, dw], clamp-to-edge.
fn resize_plane(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; dh * dw];
    let sy = sh as f64 / dh as f64;
    let sx = sw as f64 / dw as f64;
    for row in 0..dh {
        let fy = ((row as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for col in 0..dw {
            let fx = ((col as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * sw + x0] * (1.0 - wx) + src[y0 * sw + x1] * wx;
            let bot = src[y1 * sw + x0] * (1.0 - wx) + src[y1 * sw + x1] * wx;
            out[row * dw + col] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

/// Converts a decoded image to the [3, 32, 32] network input layout:
/// grayscale is replicated across channels, then each plane is resized.
pub fn to_network_input(img: &PnmImage) -> Vec<f64> {
    let plane = img.height * img.width;
    let mut out = Vec::with_capacity(PIXELS_PER_IMAGE);
    for c in 0..CHANNELS {
        let src = if img.channels == 1 {
            &img.data[..plane]
        } else {
            &img.data[c * plane..(c + 1) * plane]
        };
        out.extend(resize_plane(src, img.height, img.width, IMAGE_SIZE, IMAGE_SIZE));
    }
    out
}

/// Class directory name for export: a sort-stable index prefix plus the
/// class name, so sorted ingest reproduces the original label order.
pub fn class_dir_name(class: usize) -> String {
    format!("{:02}_{}", class, CLASS_NAMES[class])
}

/// Writes a dataset as `root/<domain>/<class>/<index>.ppm`. Returns the
/// number of files written.
pub fn export_dataset(dataset: &SyntheticDataset, root: &Path) -> Result<usize> {
    let stride = PIXELS_PER_IMAGE;
    let mut per_class_counter = std::collections::HashMap::new();
    let mut written = 0usize;
    for (i, &label) in dataset.labels.iter().enumerate() {
        let dir = root.join(&dataset.domain_id).join(class_dir_name(label));
        fs::create_dir_all(&dir).map_err(|e| CtaError::io(dir.display().to_string(), e))?;
        let n = per_class_counter.entry(label).or_insert(0usize);
        let path = dir.join(format!("{n:04}.ppm"));
        *n += 1;
        let bytes = encode_ppm(&dataset.images.data()[i * stride..(i + 1) * stride], IMAGE_SIZE, IMAGE_SIZE)?;
        fs::write(&path, bytes).map_err(|e| CtaError::io(path.display().to_string(), e))?;
        written += 1;
    }
    Ok(written)
}

fn sorted_subdirs(path: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let entries = fs::read_dir(path).map_err(|e| CtaError::io(path.display().to_string(), e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CtaError::io(path.display().to_string(), e))?;
        let p = entry.path();
        if p.is_dir() {
            dirs.push((entry.file_name().to_string_lossy().into_owned(), p));
        }
    }
    dirs.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(dirs)
}

fn sorted_files(path: &Path) -> Result<Vec<std::path::PathBuf>> {
    let entries = fs::read_dir(path).map_err(|e| CtaError::io(path.display().to_string(), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CtaError::io(path.display().to_string(), e))?;
        let p = entry.path();
        if p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads a dataset tree `root/<domain>/<class>/<images>`.
///
/// Every domain must contain the same sorted set of class directories and
/// every class directory at least one decodable image. Images may be any
/// size; they are bilinearly resized to the 32x32 network input.
pub fn ingest_folder(root: &Path) -> Result<Vec<SyntheticDataset>> {
    let domains = sorted_subdirs(root)?;
    if domains.is_empty() {
        return Err(CtaError::DatasetLayout {
            path: root.display().to_string(),
            message: "no domain directories found (expected root/<domain>/<class>/<images>)".into(),
        });
    }
    let mut reference_classes: Option<Vec<String>> = None;
    let mut datasets = Vec::new();
    for (domain_id, domain_path) in domains {
        let classes = sorted_subdirs(&domain_path)?;
        let class_names: Vec<String> = classes.iter().map(|(n, _)| n.clone()).collect();
        if class_names.is_empty() {
            return Err(CtaError::DatasetLayout {
                path: domain_path.display().to_string(),
                message: "domain has no class directories".into(),
            });
        }
        match &reference_classes {
            None => reference_classes = Some(class_names.clone()),
            Some(reference) => {
                if *reference != class_names {
                    return Err(CtaError::DatasetLayout {
                        path: domain_path.display().to_string(),
                        message: format!(
                            "class directories {class_names:?} do not match the first domain's {reference:?}"
                        ),
                    });
                }
            }
        }
        let mut rows: Vec<f64> = Vec::new();
        let mut labels = Vec::new();
        for (class_index, (_, class_path)) in classes.iter().enumerate() {
            let files = sorted_files(class_path)?;
            if files.is_empty() {
                return Err(CtaError::DatasetLayout {
                    path: class_path.display().to_string(),
                    message: "class directory has no image files".into(),
                });
            }
            for file in files {
                let origin = file.display().to_string();
                let bytes = fs::read(&file).map_err(|e| CtaError::io(origin.clone(), e))?;
                let img = decode_pnm(&bytes, &origin)?;
                rows.extend(to_network_input(&img));
                labels.push(class_index);
            }
        }
        let count = labels.len();
        datasets.push(SyntheticDataset {
            domain_id,
            images: Tensor::from_vec(&[count, CHANNELS, IMAGE_SIZE, IMAGE_SIZE], rows)?,
            labels,
        });
    }
    Ok(datasets)
}
