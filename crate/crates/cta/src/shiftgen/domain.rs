//! Domain descriptions and the default benchmark tables.
//!
//! A domain is the identity rendering, a contextual shift (appearance
//! changes: lighting, background, texture, noise, occlusion), or a semantic
//! shift (the rendering style of the class geometry itself changes). The
//! default benchmark mirrors a session-style corpus with 11 contextual
//! domains and a style-transfer corpus with 4 semantic ones.

use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};
use crate::rng::derive_seed;

/// Appearance parameters applied after the class shape is rendered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextualParams {
    /// Base background intensity in [0,1].
    pub background_level: f64,
    /// Sinusoidal background texture frequency in cycles per image width;
    /// 0 disables the texture.
    pub texture_freq: f64,
    /// Multiplicative illumination gain, (0, 3].
    pub illum_gain: f64,
    /// Additive illumination bias in [-1, 1].
    pub illum_bias: f64,
    /// Per-pixel Gaussian noise standard deviation, [0, 1].
    pub noise_sigma: f64,
    /// Occluding rectangle area as a fraction of the image, [0, 0.4].
    pub occluder_frac: f64,
}

impl ContextualParams {
    /// The source-domain appearance: clean background, neutral lighting,
    /// a whisper of sensor noise.
    pub fn identity() -> Self {
        ContextualParams {
            background_level: 0.12,
            texture_freq: 0.0,
            illum_gain: 1.0,
            illum_bias: 0.0,
            noise_sigma: 0.06,
            occluder_frac: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("background_level", self.background_level, 0.0, 1.0),
            ("texture_freq", self.texture_freq, 0.0, 32.0),
            ("illum_gain", self.illum_gain, 1e-6, 3.0),
            ("illum_bias", self.illum_bias, -1.0, 1.0),
            ("noise_sigma", self.noise_sigma, 0.0, 1.0),
            ("occluder_frac", self.occluder_frac, 0.0, 0.4),
        ];
        for (name, v, lo, hi) in checks {
            if !v.is_finite() || v < lo || v > hi {
                return Err(CtaError::invalid(name, format!("must lie in [{lo}, {hi}], got {v}")));
            }
        }
        Ok(())
    }
}

/// How class geometry is turned into pixels under a semantic shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticStyle {
    /// Filled shape, anti-aliased edges (the training style).
    Solid,
    /// Only the shape boundary is drawn, like a sketch.
    Outline,
    /// Hard edges and flat posterized intensities, like clipart.
    Quantized,
    /// Soft blurred rendering, like a painting.
    Smoothed,
}

impl SemanticStyle {
    pub fn name(&self) -> &'static str {
        match self {
            SemanticStyle::Solid => "solid",
            SemanticStyle::Outline => "outline",
            SemanticStyle::Quantized => "quantized",
            SemanticStyle::Smoothed => "smoothed",
        }
    }

    pub fn all() -> [SemanticStyle; 4] {
        [SemanticStyle::Solid, SemanticStyle::Outline, SemanticStyle::Quantized, SemanticStyle::Smoothed]
    }

    /// The styles that appear as shift targets. Solid is the style the
    /// source model trains on, so it is never a semantic target itself.
    pub fn targets() -> [SemanticStyle; 3] {
        [SemanticStyle::Outline, SemanticStyle::Quantized, SemanticStyle::Smoothed]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShiftKind {
    Identity,
    Contextual { params: ContextualParams },
    Semantic { style: SemanticStyle },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub id: String,
    pub shift: ShiftKind,
    /// Drives all appearance randomness (colors, noise, occluder placement).
    pub seed: u64,
    /// Drives shape geometry. Shared across paired domains so the same
    /// sample index yields the same mask in every domain of a benchmark.
    pub geometry_seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(CtaError::invalid("domain id", format!("'{}' (use [A-Za-z0-9_-]+)", self.id)));
        }
        if let ShiftKind::Contextual { params } = &self.shift {
            params.validate()?;
        }
        Ok(())
    }

    /// Style and appearance this domain renders with.
    pub fn rendering(&self) -> (SemanticStyle, ContextualParams) {
        match &self.shift {
            ShiftKind::Identity => (SemanticStyle::Solid, ContextualParams::identity()),
            ShiftKind::Contextual { params } => (SemanticStyle::Solid, *params),
            ShiftKind::Semantic { style } => (*style, ContextualParams::identity()),
        }
    }
}

const DOMAIN_SEED_TAG: u64 = 0x646f_6d61;
const GEOMETRY_SEED_TAG: u64 = 0x6765_6f6d;

fn domain_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &[DOMAIN_SEED_TAG, index])
}

fn geometry_seed(master: u64) -> u64 {
    derive_seed(master, &[GEOMETRY_SEED_TAG])
}

/// The identity source domain of the default benchmark.
pub fn source_domain(master: u64) -> DomainSpec {
    DomainSpec {
        id: "source".into(),
        shift: ShiftKind::Identity,
        seed: domain_seed(master, 0),
        geometry_seed: geometry_seed(master),
    }
}

/// Eleven contextual target domains of graded character and severity.
pub fn contextual_domains(master: u64) -> Vec<DomainSpec> {
    let p = ContextualParams::identity;
    let table: [(&str, ContextualParams); 11] = [
        ("ctx01_dim", ContextualParams { illum_gain: 0.45, illum_bias: -0.08, ..p() }),
        ("ctx02_bright", ContextualParams { illum_gain: 1.5, illum_bias: 0.22, ..p() }),
        ("ctx03_texture", ContextualParams { background_level: 0.40, texture_freq: 3.0, ..p() }),
        ("ctx04_noise", ContextualParams { noise_sigma: 0.16, ..p() }),
        ("ctx05_occlude", ContextualParams { occluder_frac: 0.30, ..p() }),
        ("ctx06_backdrop", ContextualParams { background_level: 0.65, ..p() }),
        ("ctx07_dusk", ContextualParams { illum_gain: 0.55, noise_sigma: 0.10, ..p() }),
        ("ctx08_clutter", ContextualParams { background_level: 0.35, texture_freq: 5.0, occluder_frac: 0.18, ..p() }),
        ("ctx09_glare", ContextualParams { illum_gain: 1.7, illum_bias: 0.28, ..p() }),
        ("ctx10_static", ContextualParams { noise_sigma: 0.20, ..p() }),
        (
            "ctx11_storm",
            ContextualParams {
                background_level: 0.45,
                texture_freq: 4.0,
                illum_gain: 0.7,
                noise_sigma: 0.10,
                occluder_frac: 0.20,
                ..p()
            },
        ),
    ];
    table
        .into_iter()
        .enumerate()
        .map(|(i, (id, params))| DomainSpec {
            id: id.into(),
            shift: ShiftKind::Contextual { params },
            seed: domain_seed(master, 100 + i as u64),
            geometry_seed: geometry_seed(master),
        })
        .collect()
}

/// Three semantic target domains, one per non-training rendering style.
pub fn semantic_domains(master: u64) -> Vec<DomainSpec> {
    SemanticStyle::targets()
        .into_iter()
        .enumerate()
        .map(|(i, style)| DomainSpec {
            id: format!("sem_{}", style.name()),
            shift: ShiftKind::Semantic { style },
            seed: domain_seed(master, 200 + i as u64),
            geometry_seed: geometry_seed(master),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tables_validate_and_share_geometry() {
        let src = source_domain(7);
        src.validate().unwrap();
        for d in contextual_domains(7).iter().chain(&semantic_domains(7)) {
            d.validate().unwrap();
            assert_eq!(d.geometry_seed, src.geometry_seed, "{}", d.id);
            assert_ne!(d.seed, src.seed, "{}", d.id);
        }
        assert_eq!(contextual_domains(7).len(), 11);
        assert_eq!(semantic_domains(7).len(), 3);
        assert!(semantic_domains(7).iter().all(|d| d.shift != ShiftKind::Semantic { style: SemanticStyle::Solid }));
    }

    #[test]
    fn out_of_range_params_are_rejected() {
        let mut p = ContextualParams::identity();
        p.occluder_frac = 0.5;
        assert!(p.validate().is_err());
        p = ContextualParams::identity();
        p.background_level = -0.1;
        assert!(p.validate().is_err());
        p = ContextualParams::identity();
        p.illum_gain = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn specs_serialize_round_trip() {
        for d in contextual_domains(3).iter().chain(&semantic_domains(3)) {
            let json = serde_json::to_string(d).unwrap();
            let back: DomainSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(*d, back);
        }
    }
}
