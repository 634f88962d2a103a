//! Rasterization of class shapes and application of domain shifts.
//!
//! Every sample is rendered in two stages with two independent seeded
//! streams. The geometry stream (keyed by the domain's `geometry_seed`)
//! places and sizes the class shape, so paired domains agree on the shape
//! mask sample for sample. The appearance stream (keyed by the domain's
//! `seed`) drives everything painted on top: colors, background texture,
//! occluders, noise.

use rand_chacha::ChaCha8Rng;

use crate::error::{CtaError, Result};
use crate::rng::{normal, rng_from, uniform_in};
use crate::shiftgen::domain::{DomainSpec, SemanticStyle};

pub const IMAGE_SIZE: usize = 32;
pub const CHANNELS: usize = 3;
pub const NUM_CLASSES: usize = 10;
pub const PIXELS_PER_IMAGE: usize = CHANNELS * IMAGE_SIZE * IMAGE_SIZE;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "circle", "square", "triangle", "cross", "star", "ring", "bar", "ell", "diamond", "wave",
];

/// Foreground base color per class. Color is a deliberate class cue: it
/// makes channel statistics informative, which is precisely the signal a
/// contextual (photometric) shift corrupts and statistic recalibration can
/// restore. Semantic styles remap or discard the palette, so they damage
/// the classifier in a way recalibration cannot undo.
const PALETTE: [[f64; 3]; NUM_CLASSES] = [
    [0.85, 0.30, 0.30],
    [0.30, 0.70, 0.30],
    [0.30, 0.45, 0.85],
    [0.85, 0.75, 0.25],
    [0.80, 0.40, 0.80],
    [0.35, 0.80, 0.80],
    [0.90, 0.55, 0.25],
    [0.55, 0.35, 0.75],
    [0.55, 0.75, 0.35],
    [0.75, 0.55, 0.45],
];

const GEOMETRY_STREAM_TAG: u64 = 0x7368_6170;
const APPEARANCE_STREAM_TAG: u64 = 0x7061_696e;

const N_PIXELS: usize = IMAGE_SIZE * IMAGE_SIZE;
/// Supersampling grid per pixel side for anti-aliased masks.
const SS: usize = 3;

/// Point-in-shape test in shape-local coordinates. The local frame is the
/// unit disk neighbourhood: shapes are built to span roughly [-1, 1].
/// Rows grow downward, so positive y points toward the image bottom.
fn inside(class: usize, x: f64, y: f64) -> bool {
    match class {
        // circle
        0 => x * x + y * y <= 1.0,
        // square
        1 => x.abs().max(y.abs()) <= 0.82,
        // triangle, apex up
        2 => {
            let (ax, ay) = (0.0, -1.0);
            let (bx, by) = (0.9, 0.65);
            let (cx, cy) = (-0.9, 0.65);
            let e = |px: f64, py: f64, qx: f64, qy: f64| (qx - px) * (y - py) - (qy - py) * (x - px);
            let d0 = e(ax, ay, bx, by);
            let d1 = e(bx, by, cx, cy);
            let d2 = e(cx, cy, ax, ay);
            d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0
        }
        // cross
        3 => (x.abs() <= 0.30 && y.abs() <= 1.0) || (y.abs() <= 0.30 && x.abs() <= 1.0),
        // five-point star, one spike up
        4 => {
            let r = x.hypot(y);
            if r > 1.0 {
                return false;
            }
            if r <= 0.42 {
                return true;
            }
            let sector = std::f64::consts::TAU / 5.0;
            let phi = (y.atan2(x) + std::f64::consts::FRAC_PI_2).rem_euclid(sector);
            // 0 at a spike center, 1 midway between spikes
            let valley = phi.min(sector - phi) / (sector / 2.0);
            r <= 1.0 - 0.58 * valley
        }
        // ring
        5 => {
            let r = x.hypot(y);
            (0.55..=1.0).contains(&r)
        }
        // bar
        6 => x.abs() <= 1.0 && y.abs() <= 0.32,
        // ell: vertical limb on the left, horizontal limb along the bottom
        7 => ((-1.0..=-0.3).contains(&x) && y.abs() <= 1.0) || ((0.3..=1.0).contains(&y) && x.abs() <= 1.0),
        // diamond
        8 => x.abs() + y.abs() <= 1.05,
        // wave: a band around a sinusoid
        9 => x.abs() <= 1.0 && (y - 0.45 * (2.7 * x).sin()).abs() <= 0.26,
        _ => unreachable!("class index out of range"),
    }
}

/// Renders the anti-aliased coverage mask for one sample of a class.
/// Position, size, and rotation jitter come from the geometry stream only.
fn render_mask(class: usize, rng: &mut ChaCha8Rng) -> [f64; N_PIXELS] {
    let cx = uniform_in(rng, 0.38, 0.62);
    let cy = uniform_in(rng, 0.38, 0.62);
    let scale = uniform_in(rng, 0.26, 0.36);
    // Rotation stays small so square and diamond remain distinct classes.
    let theta = uniform_in(rng, -0.26, 0.26);
    let (sin_t, cos_t) = theta.sin_cos();

    let mut mask = [0.0f64; N_PIXELS];
    let inv = 1.0 / IMAGE_SIZE as f64;
    let sub = 1.0 / SS as f64;
    for row in 0..IMAGE_SIZE {
        for col in 0..IMAGE_SIZE {
            let mut hits = 0u32;
            for sy in 0..SS {
                for sx in 0..SS {
                    let u = (col as f64 + (sx as f64 + 0.5) * sub) * inv;
                    let v = (row as f64 + (sy as f64 + 0.5) * sub) * inv;
                    let dx = u - cx;
                    let dy = v - cy;
                    let qx = (cos_t * dx + sin_t * dy) / scale;
                    let qy = (-sin_t * dx + cos_t * dy) / scale;
                    if inside(class, qx, qy) {
                        hits += 1;
                    }
                }
            }
            mask[row * IMAGE_SIZE + col] = f64::from(hits) / (SS * SS) as f64;
        }
    }
    mask
}

/// 3x3 min-erosion; out-of-image neighbours count as empty.
fn erode(mask: &[f64; N_PIXELS]) -> [f64; N_PIXELS] {
    let n = IMAGE_SIZE as isize;
    let mut out = [0.0f64; N_PIXELS];
    for row in 0..n {
        for col in 0..n {
            let mut lo = f64::INFINITY;
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (r, c) = (row + dr, col + dc);
                    let v = if r < 0 || r >= n || c < 0 || c >= n {
                        0.0
                    } else {
                        mask[(r * n + c) as usize]
                    };
                    lo = lo.min(v);
                }
            }
            out[(row * n + col) as usize] = lo;
        }
    }
    out
}

/// Separable 5-tap binomial blur with clamp-to-edge boundaries.
fn blur_channel(plane: &mut [f64]) {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let n = IMAGE_SIZE as isize;
    let mut tmp = [0.0f64; N_PIXELS];
    for row in 0..n {
        for col in 0..n {
            let mut acc = 0.0;
            for (k, w) in K.iter().enumerate() {
                let c = (col + k as isize - 2).clamp(0, n - 1);
                acc += w * plane[(row * n + c) as usize];
            }
            tmp[(row * n + col) as usize] = acc;
        }
    }
    for row in 0..n {
        for col in 0..n {
            let mut acc = 0.0;
            for (k, w) in K.iter().enumerate() {
                let r = (row + k as isize - 2).clamp(0, n - 1);
                acc += w * tmp[(r * n + col) as usize];
            }
            plane[(row * n + col) as usize] = acc;
        }
    }
}

/// Snaps a value in [0,1] to one of three evenly spaced levels.
fn posterize(v: f64) -> f64 {
    (v * 2.0).round() / 2.0
}

/// Renders one sample into `out`, a [3, 32, 32] channel-planar slice.
///
/// The result is a pure function of (domain spec, class, sample index).
pub fn render_sample(domain: &DomainSpec, class: usize, sample: u64, out: &mut [f64]) -> Result<()> {
    if class >= NUM_CLASSES {
        return Err(CtaError::invalid("class", format!("{class} out of range 0..{NUM_CLASSES}")));
    }
    if out.len() != PIXELS_PER_IMAGE {
        return Err(CtaError::shape("render_sample output", PIXELS_PER_IMAGE, out.len()));
    }
    let (style, ctx) = domain.rendering();
    let mut geom = rng_from(domain.geometry_seed, &[GEOMETRY_STREAM_TAG, class as u64, sample]);
    let mut paint = rng_from(domain.seed, &[APPEARANCE_STREAM_TAG, class as u64, sample]);

    let mask = render_mask(class, &mut geom);
    let alpha: [f64; N_PIXELS] = match style {
        SemanticStyle::Solid | SemanticStyle::Smoothed => mask,
        SemanticStyle::Outline => {
            let eroded = erode(&mask);
            let mut a = [0.0f64; N_PIXELS];
            for i in 0..N_PIXELS {
                a[i] = (mask[i] - eroded[i]).clamp(0.0, 1.0);
            }
            a
        }
        SemanticStyle::Quantized => {
            let mut a = [0.0f64; N_PIXELS];
            for i in 0..N_PIXELS {
                a[i] = if mask[i] >= 0.5 { 1.0 } else { 0.0 };
            }
            a
        }
    };

    // Outline renders as a sketch: a neutral ink stroke with no class color.
    let mut color = match style {
        SemanticStyle::Outline => [0.85, 0.85, 0.85],
        _ => PALETTE[class],
    };
    for c in color.iter_mut() {
        *c = (*c + uniform_in(&mut paint, -0.10, 0.10)).clamp(0.05, 1.0);
    }
    let brightness = uniform_in(&mut paint, 0.70, 1.0);

    // Background, optionally textured with an oriented sinusoid.
    let tex_angle = uniform_in(&mut paint, 0.0, std::f64::consts::TAU);
    let tex_phase = uniform_in(&mut paint, 0.0, std::f64::consts::TAU);
    let (tex_dy, tex_dx) = tex_angle.sin_cos();
    let inv = 1.0 / IMAGE_SIZE as f64;
    let mut bg = [0.0f64; N_PIXELS];
    for row in 0..IMAGE_SIZE {
        for col in 0..IMAGE_SIZE {
            let mut b = ctx.background_level;
            if ctx.texture_freq > 0.0 {
                let u = (col as f64 + 0.5) * inv;
                let v = (row as f64 + 0.5) * inv;
                let proj = tex_dx * u + tex_dy * v;
                b += 0.18 * (std::f64::consts::TAU * ctx.texture_freq * proj + tex_phase).sin();
            }
            bg[row * IMAGE_SIZE + col] = b;
        }
    }

    for ch in 0..CHANNELS {
        let fg = color[ch] * brightness;
        let plane = &mut out[ch * N_PIXELS..(ch + 1) * N_PIXELS];
        for i in 0..N_PIXELS {
            plane[i] = bg[i] + (fg - bg[i]) * alpha[i];
        }
        if style == SemanticStyle::Quantized {
            for v in plane.iter_mut() {
                *v = posterize(*v);
            }
        }
    }

    if style == SemanticStyle::Smoothed {
        // A wash rendering: repeated binomial blurs smear the edge
        // statistics, and desaturation toward luminance discards most of
        // the class palette.
        for ch in 0..CHANNELS {
            let plane = &mut out[ch * N_PIXELS..(ch + 1) * N_PIXELS];
            for _ in 0..3 {
                blur_channel(plane);
            }
        }
        for i in 0..N_PIXELS {
            let (r, g, b) = (out[i], out[N_PIXELS + i], out[2 * N_PIXELS + i]);
            let luma = 0.299 * r + 0.587 * g + 0.114 * b;
            for ch in 0..CHANNELS {
                let v = &mut out[ch * N_PIXELS + i];
                *v = luma + 0.25 * (*v - luma);
            }
        }
    }

    if ctx.occluder_frac > 0.0 {
        let aspect = uniform_in(&mut paint, 0.5, 2.0);
        let w = (ctx.occluder_frac * aspect).sqrt().min(0.95);
        let h = (ctx.occluder_frac / aspect).sqrt().min(0.95);
        let ocx = uniform_in(&mut paint, 0.2, 0.8);
        let ocy = uniform_in(&mut paint, 0.2, 0.8);
        let shade = uniform_in(&mut paint, 0.25, 0.75);
        for row in 0..IMAGE_SIZE {
            for col in 0..IMAGE_SIZE {
                let u = (col as f64 + 0.5) * inv;
                let v = (row as f64 + 0.5) * inv;
                if (u - ocx).abs() <= w / 2.0 && (v - ocy).abs() <= h / 2.0 {
                    for ch in 0..CHANNELS {
                        out[ch * N_PIXELS + row * IMAGE_SIZE + col] = shade;
                    }
                }
            }
        }
    }

    for v in out.iter_mut() {
        *v = *v * ctx.illum_gain + ctx.illum_bias;
    }
    if ctx.noise_sigma > 0.0 {
        for v in out.iter_mut() {
            *v += ctx.noise_sigma * normal(&mut paint);
        }
    }
    for v in out.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(())
}

/// The pre-styling shape mask of one sample, exposed for invariance checks:
/// it depends only on (geometry_seed, class, sample).
pub fn shape_mask(domain: &DomainSpec, class: usize, sample: u64) -> Result<Vec<f64>> {
    if class >= NUM_CLASSES {
        return Err(CtaError::invalid("class", format!("{class} out of range 0..{NUM_CLASSES}")));
    }
    let mut geom = rng_from(domain.geometry_seed, &[GEOMETRY_STREAM_TAG, class as u64, sample]);
    Ok(render_mask(class, &mut geom).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shiftgen::domain::{contextual_domains, semantic_domains, source_domain, ShiftKind};

    #[test]
    fn rendering_is_deterministic() {
        let d = contextual_domains(11).remove(10);
        let mut a = vec![0.0; PIXELS_PER_IMAGE];
        let mut b = vec![0.0; PIXELS_PER_IMAGE];
        render_sample(&d, 4, 17, &mut a).unwrap();
        render_sample(&d, 4, 17, &mut b).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn masks_match_across_paired_domains() {
        let src = source_domain(5);
        for d in contextual_domains(5).iter().chain(&semantic_domains(5)) {
            for class in 0..NUM_CLASSES {
                let m0 = shape_mask(&src, class, 3).unwrap();
                let m1 = shape_mask(d, class, 3).unwrap();
                assert!(
                    m0.iter().zip(&m1).all(|(x, y)| x.to_bits() == y.to_bits()),
                    "mask drift in {}",
                    d.id
                );
            }
        }
        let mut other = source_domain(5);
        other.geometry_seed ^= 1;
        let m0 = shape_mask(&src, 0, 3).unwrap();
        let m1 = shape_mask(&other, 0, 3).unwrap();
        assert!(m0 != m1);
    }

    #[test]
    fn values_stay_in_unit_interval_under_extreme_params() {
        let mut d = source_domain(1);
        d.shift = ShiftKind::Contextual {
            params: crate::shiftgen::domain::ContextualParams {
                background_level: 1.0,
                texture_freq: 8.0,
                illum_gain: 3.0,
                illum_bias: 1.0,
                noise_sigma: 1.0,
                occluder_frac: 0.4,
            },
        };
        let mut img = vec![0.0; PIXELS_PER_IMAGE];
        for class in 0..NUM_CLASSES {
            render_sample(&d, class, 0, &mut img).unwrap();
            assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn styles_produce_distinct_renderings() {
        let doms = semantic_domains(9);
        let mut imgs: Vec<Vec<f64>> = Vec::new();
        for d in &doms {
            let mut img = vec![0.0; PIXELS_PER_IMAGE];
            render_sample(d, 2, 5, &mut img).unwrap();
            imgs.push(img);
        }
        for i in 0..imgs.len() {
            for j in i + 1..imgs.len() {
                let diff: f64 = imgs[i].iter().zip(&imgs[j]).map(|(a, b)| (a - b).abs()).sum();
                assert!(diff > 1.0, "styles {i} and {j} render nearly identically");
            }
        }
    }

    #[test]
    fn outline_covers_less_area_than_solid() {
        let src = source_domain(4);
        for class in 0..NUM_CLASSES {
            let mask = shape_mask(&src, class, 1).unwrap();
            let solid_area: f64 = mask.iter().sum();
            let m: [f64; N_PIXELS] = mask.try_into().unwrap();
            let eroded = erode(&m);
            let outline_area: f64 = m.iter().zip(&eroded).map(|(a, b)| (a - b).clamp(0.0, 1.0)).sum();
            assert!(outline_area > 8.0, "class {class} outline vanished");
            assert!(outline_area < 0.8 * solid_area, "class {class} outline not thinner than fill");
        }
    }

    #[test]
    fn every_class_mask_has_reasonable_area() {
        let src = source_domain(23);
        for class in 0..NUM_CLASSES {
            for sample in 0..5 {
                let mask = shape_mask(&src, class, sample).unwrap();
                let lit = mask.iter().filter(|&&v| v >= 0.5).count();
                assert!(
                    (25..700).contains(&lit),
                    "class {class} sample {sample}: {lit} lit pixels"
                );
            }
        }
    }

    #[test]
    fn posterize_snaps_to_three_levels() {
        for i in 0..=100 {
            let v = posterize(i as f64 / 100.0);
            let nearest = [0.0, 0.5, 1.0]
                .iter()
                .map(|l| (v - l).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-12);
        }
    }

    #[test]
    fn distinct_classes_render_distinct_masks() {
        let src = source_domain(2);
        for a in 0..NUM_CLASSES {
            for b in a + 1..NUM_CLASSES {
                let ma = shape_mask(&src, a, 0).unwrap();
                let mb = shape_mask(&src, b, 0).unwrap();
                let diff: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).sum();
                assert!(diff > 5.0, "classes {a} and {b} too similar");
            }
        }
    }
}
