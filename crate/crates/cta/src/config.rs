//! JSON experiment configuration: parsing, defaults, validation, hashing.
//!
//! Every section is optional; an empty document is a complete experiment
//! description. Validation walks the raw JSON so that one pass reports
//! every violation, not just the first, with dotted paths naming the
//! offending keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::adapt::{AdaptMethod, AdapterConfig, COTTA_DEFAULT_LR, TENT_DEFAULT_LR};
use crate::error::{CtaError, Result};
use crate::harness::{ProtocolKind, ProtocolSpec, DEFAULT_BATCH_SIZE, DEFAULT_SEED_REPLICAS, DEFAULT_SWEEP_BATCH_SIZES};
use crate::model::spec::ModelSpec;
use crate::numerics::optim::OptimizerKind;
use crate::shiftgen::{contextual_domains, semantic_domains, source_domain, DomainSpec, NUM_CLASSES};

pub const DEFAULT_MASTER_SEED: u64 = 42;
pub const DEFAULT_OUTPUT_DIR: &str = "runs";
pub const DEFAULT_SOURCE_PER_CLASS: usize = 100;
pub const DEFAULT_TARGET_PER_CLASS: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSection {
    pub input_shape: [usize; 3],
    pub classes: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { input_shape: [3, 32, 32], classes: 10 }
    }
}

impl ModelSection {
    /// The fixed two-block architecture at the configured size.
    pub fn spec(&self) -> ModelSpec {
        ModelSpec::desk(self.input_shape, self.classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceTrainingSection {
    /// Samples per class generated for the source domain.
    pub per_class: usize,
    /// Fraction of each class held out for validation.
    pub val_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for SourceTrainingSection {
    fn default() -> Self {
        SourceTrainingSection {
            per_class: DEFAULT_SOURCE_PER_CLASS,
            val_fraction: 0.1,
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSection {
    /// Absent means the subcommand decides (adapt-short → short, and so on).
    pub kind: Option<ProtocolKind>,
    pub source_domains: Vec<String>,
    /// Empty means the kind's default benchmark: contextual targets for
    /// short and sweep, semantic targets for long.
    pub target_domains: Vec<String>,
    pub batch_size: usize,
    pub epochs: usize,
    pub batch_sizes: Vec<usize>,
    pub seeds: usize,
    /// Samples per class generated for each target domain.
    pub per_class: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            kind: None,
            source_domains: vec!["source".into()],
            target_domains: Vec::new(),
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 10,
            batch_sizes: DEFAULT_SWEEP_BATCH_SIZES.to_vec(),
            seeds: DEFAULT_SEED_REPLICAS,
            per_class: DEFAULT_TARGET_PER_CLASS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdapterSection {
    /// Absent means the subcommand runs its full adapter roster.
    pub method: Option<AdaptMethod>,
    /// Absent means the method's tuned default.
    pub learning_rate: Option<f64>,
    pub cotta_alpha: f64,
    pub restore_prob: f64,
    /// Absent means the method's conventional optimizer.
    pub optimizer: Option<OptimizerKind>,
    pub seed: u64,
}

impl Default for AdapterSection {
    fn default() -> Self {
        AdapterSection {
            method: None,
            learning_rate: None,
            cotta_alpha: 0.99,
            restore_prob: 0.01,
            optimizer: None,
            seed: 0,
        }
    }
}

impl AdapterSection {
    /// The section's overrides applied on top of a method's defaults.
    pub fn config_for(&self, method: AdaptMethod) -> AdapterConfig {
        let mut cfg = match method {
            AdaptMethod::Source => AdapterConfig::source(),
            AdaptMethod::Bn => AdapterConfig::bn(),
            AdaptMethod::Tent => AdapterConfig::tent(self.learning_rate.unwrap_or(TENT_DEFAULT_LR)),
            AdaptMethod::Cotta => {
                AdapterConfig::cotta(self.learning_rate.unwrap_or(COTTA_DEFAULT_LR), self.seed)
            }
        };
        cfg.cotta_alpha = self.cotta_alpha;
        cfg.restore_prob = self.restore_prob;
        cfg.seed = self.seed;
        if let Some(opt) = self.optimizer {
            cfg.optimizer = opt;
        }
        cfg
    }

    /// The adapters a comparison run covers: the configured single method,
    /// or all four when none is pinned.
    pub fn roster(&self) -> Vec<AdaptMethod> {
        match self.method {
            Some(m) => vec![m],
            None => AdaptMethod::all().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub source_training: SourceTrainingSection,
    pub domains: Vec<DomainSpec>,
    pub protocol: ProtocolSection,
    pub adapter: AdapterSection,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::with_master_seed(DEFAULT_MASTER_SEED)
    }
}

impl ExperimentConfig {
    /// The default benchmark: identity source plus the full contextual and
    /// semantic domain tables, all seeded from `master_seed`.
    pub fn with_master_seed(master_seed: u64) -> Self {
        let mut domains = vec![source_domain(master_seed)];
        domains.extend(contextual_domains(master_seed));
        domains.extend(semantic_domains(master_seed));
        ExperimentConfig {
            model: ModelSection::default(),
            source_training: SourceTrainingSection::default(),
            domains,
            protocol: ProtocolSection::default(),
            adapter: AdapterSection::default(),
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            master_seed,
        }
    }

    pub fn domain(&self, id: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.id == id)
    }

    /// Target list for a protocol kind: the configured override, or the
    /// kind's default benchmark (contextual for short and sweep, semantic
    /// for long).
    pub fn targets_for(&self, kind: ProtocolKind) -> Vec<String> {
        if !self.protocol.target_domains.is_empty() {
            return self.protocol.target_domains.clone();
        }
        let pick = |prefix: &str| {
            self.domains
                .iter()
                .filter(|d| d.id.starts_with(prefix))
                .map(|d| d.id.clone())
                .collect::<Vec<_>>()
        };
        match kind {
            ProtocolKind::Short | ProtocolKind::Sweep => pick("ctx"),
            ProtocolKind::Long => pick("sem"),
        }
    }

    /// Assembles the harness protocol for one adapter under one kind.
    pub fn protocol_spec(&self, kind: ProtocolKind, adapter: AdapterConfig) -> ProtocolSpec {
        let mut spec = ProtocolSpec::new(kind, self.targets_for(kind), adapter);
        spec.source_domains = self.protocol.source_domains.clone();
        spec.batch_size = self.protocol.batch_size;
        if kind == ProtocolKind::Long {
            spec.epochs = self.protocol.epochs;
        }
        spec.batch_sizes = self.protocol.batch_sizes.clone();
        spec.seeds = self.protocol.seeds;
        spec
    }

    /// Canonical fully-populated JSON; what run directories freeze and what
    /// the content hash covers.
    pub fn effective_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    /// Hex SHA-256 of the canonical JSON. Two configs hash equal exactly
    /// when every effective setting matches.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.effective_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads and validates a config file, reporting every violation at once.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| CtaError::io(path.display().to_string(), e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let root: Value = serde_json::from_str(text)?;
    let mut issues = Vec::new();
    let mut cfg = ExperimentConfig::default();

    let Some(map) = as_object(&root, "config root", &mut issues) else {
        return Err(CtaError::ConfigInvalid(issues));
    };
    reject_unknown_keys(
        map,
        "",
        &["model", "source_training", "domains", "protocol", "adapter", "output_dir", "master_seed"],
        &mut issues,
    );

    // master_seed first: the default domain tables derive from it.
    if let Some(v) = present(map, "master_seed") {
        if let Some(s) = take_u64("master_seed", v, &mut issues) {
            cfg = ExperimentConfig::with_master_seed(s);
        }
    }

    if let Some(v) = present(map, "model") {
        parse_model(v, &mut cfg.model, &mut issues);
    }
    if let Some(v) = present(map, "source_training") {
        parse_source_training(v, &mut cfg.source_training, &mut issues);
    }
    if let Some(v) = present(map, "domains") {
        parse_domains(v, &mut cfg.domains, &mut issues);
    }
    if let Some(v) = present(map, "protocol") {
        parse_protocol(v, &mut cfg.protocol, &mut issues);
    }
    if let Some(v) = present(map, "adapter") {
        parse_adapter(v, &mut cfg.adapter, &mut issues);
    }
    if let Some(v) = present(map, "output_dir") {
        match v.as_str() {
            Some(s) if !s.is_empty() => cfg.output_dir = PathBuf::from(s),
            _ => issues.push("output_dir: expected a non-empty string".into()),
        }
    }

    cross_check(&cfg, &mut issues);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        issues.sort();
        Err(CtaError::ConfigInvalid(issues))
    }
}

fn parse_model(v: &Value, out: &mut ModelSection, issues: &mut Vec<String>) {
    let Some(map) = as_object(v, "model", issues) else { return };
    reject_unknown_keys(map, "model.", &["input_shape", "classes"], issues);
    if let Some(raw) = present(map, "input_shape") {
        match serde_json::from_value::<[usize; 3]>(raw.clone()) {
            Ok(s) if s.iter().all(|&d| d > 0) => out.input_shape = s,
            _ => issues.push("model.input_shape: expected three positive integers".into()),
        }
    }
    if let Some(raw) = present(map, "classes") {
        if let Some(c) = take_usize_min("model.classes", raw, 2, issues) {
            out.classes = c;
        }
    }
}

fn parse_source_training(v: &Value, out: &mut SourceTrainingSection, issues: &mut Vec<String>) {
    let Some(map) = as_object(v, "source_training", issues) else { return };
    reject_unknown_keys(
        map,
        "source_training.",
        &["per_class", "val_fraction", "epochs", "batch_size", "learning_rate", "momentum"],
        issues,
    );
    if let Some(raw) = present(map, "per_class") {
        if let Some(n) = take_usize_min("source_training.per_class", raw, 2, issues) {
            out.per_class = n;
        }
    }
    if let Some(raw) = present(map, "val_fraction") {
        if let Some(f) = take_f64_open("source_training.val_fraction", raw, 0.0, 1.0, issues) {
            out.val_fraction = f;
        }
    }
    if let Some(raw) = present(map, "epochs") {
        if let Some(n) = take_usize_min("source_training.epochs", raw, 1, issues) {
            out.epochs = n;
        }
    }
    if let Some(raw) = present(map, "batch_size") {
        if let Some(n) = take_usize_min("source_training.batch_size", raw, 2, issues) {
            out.batch_size = n;
        }
    }
    if let Some(raw) = present(map, "learning_rate") {
        if let Some(f) = take_f64_positive("source_training.learning_rate", raw, issues) {
            out.learning_rate = f;
        }
    }
    if let Some(raw) = present(map, "momentum") {
        if let Some(f) = take_f64_closed("source_training.momentum", raw, 0.0, 1.0, issues) {
            out.momentum = f;
        }
    }
}

fn parse_domains(v: &Value, out: &mut Vec<DomainSpec>, issues: &mut Vec<String>) {
    let Some(list) = v.as_array() else {
        issues.push("domains: expected a list of domain specs".into());
        return;
    };
    let mut parsed = Vec::with_capacity(list.len());
    for (i, raw) in list.iter().enumerate() {
        match serde_json::from_value::<DomainSpec>(raw.clone()) {
            Ok(d) => {
                if let Err(e) = d.validate() {
                    issues.push(format!("domains[{i}]: {e}"));
                }
                parsed.push(d);
            }
            Err(e) => issues.push(format!("domains[{i}]: {e}")),
        }
    }
    for (i, d) in parsed.iter().enumerate() {
        if parsed[..i].iter().any(|p| p.id == d.id) {
            issues.push(format!("domains[{i}]: duplicate id `{}`", d.id));
        }
    }
    if !parsed.is_empty() {
        *out = parsed;
    } else {
        issues.push("domains: list must not be empty".into());
    }
}

fn parse_protocol(v: &Value, out: &mut ProtocolSection, issues: &mut Vec<String>) {
    let Some(map) = as_object(v, "protocol", issues) else { return };
    reject_unknown_keys(
        map,
        "protocol.",
        &["kind", "source_domains", "target_domains", "batch_size", "epochs", "batch_sizes", "seeds", "per_class"],
        issues,
    );
    if let Some(raw) = present(map, "kind") {
        match serde_json::from_value::<ProtocolKind>(raw.clone()) {
            Ok(k) => out.kind = Some(k),
            Err(_) => issues.push("protocol.kind: expected one of `short`, `long`, `sweep`".into()),
        }
    }
    if let Some(raw) = present(map, "source_domains") {
        match serde_json::from_value::<Vec<String>>(raw.clone()) {
            Ok(ids) if !ids.is_empty() => out.source_domains = ids,
            _ => issues.push("protocol.source_domains: expected a non-empty list of domain ids".into()),
        }
    }
    if let Some(raw) = present(map, "target_domains") {
        match serde_json::from_value::<Vec<String>>(raw.clone()) {
            // An empty list means the protocol kind's default benchmark.
            Ok(ids) => out.target_domains = ids,
            _ => issues.push("protocol.target_domains: expected a list of domain ids".into()),
        }
    }
    if let Some(raw) = present(map, "batch_size") {
        if let Some(n) = take_usize_min("protocol.batch_size", raw, 2, issues) {
            out.batch_size = n;
        }
    }
    if let Some(raw) = present(map, "epochs") {
        if let Some(n) = take_usize_min("protocol.epochs", raw, 1, issues) {
            out.epochs = n;
        }
    }
    if let Some(raw) = present(map, "batch_sizes") {
        match serde_json::from_value::<Vec<usize>>(raw.clone()) {
            Ok(sizes)
                if !sizes.is_empty()
                    && sizes.iter().all(|&b| b >= 2)
                    && sizes.windows(2).all(|w| w[0] < w[1]) =>
            {
                out.batch_sizes = sizes;
            }
            _ => issues.push("protocol.batch_sizes: expected a strictly increasing list of integers >= 2".into()),
        }
    }
    if let Some(raw) = present(map, "seeds") {
        if let Some(n) = take_usize_min("protocol.seeds", raw, 1, issues) {
            out.seeds = n;
        }
    }
    if let Some(raw) = present(map, "per_class") {
        if let Some(n) = take_usize_min("protocol.per_class", raw, 2, issues) {
            out.per_class = n;
        }
    }
}

fn parse_adapter(v: &Value, out: &mut AdapterSection, issues: &mut Vec<String>) {
    let Some(map) = as_object(v, "adapter", issues) else { return };
    reject_unknown_keys(
        map,
        "adapter.",
        &["method", "learning_rate", "cotta_alpha", "restore_prob", "optimizer", "seed"],
        issues,
    );
    if let Some(raw) = present(map, "method") {
        match raw.as_str() {
            Some("source") => out.method = Some(AdaptMethod::Source),
            Some("bn") => out.method = Some(AdaptMethod::Bn),
            Some("tent") => out.method = Some(AdaptMethod::Tent),
            Some("cotta") => out.method = Some(AdaptMethod::Cotta),
            _ => issues.push("adapter.method: expected one of `source`, `bn`, `tent`, `cotta`".into()),
        }
    }
    if let Some(raw) = present(map, "learning_rate") {
        if let Some(f) = take_f64_positive("adapter.learning_rate", raw, issues) {
            out.learning_rate = Some(f);
        }
    }
    if let Some(raw) = present(map, "cotta_alpha") {
        if let Some(f) = take_f64_closed("adapter.cotta_alpha", raw, 0.0, 1.0, issues) {
            out.cotta_alpha = f;
        }
    }
    if let Some(raw) = present(map, "restore_prob") {
        if let Some(f) = take_f64_closed("adapter.restore_prob", raw, 0.0, 1.0, issues) {
            out.restore_prob = f;
        }
    }
    if let Some(raw) = present(map, "optimizer") {
        match serde_json::from_value::<OptimizerKind>(raw.clone()) {
            Ok(k) => out.optimizer = Some(k),
            Err(e) => issues.push(format!("adapter.optimizer: {e}")),
        }
    }
    if let Some(raw) = present(map, "seed") {
        if let Some(s) = take_u64("adapter.seed", raw, issues) {
            out.seed = s;
        }
    }
}

/// Relations between sections, checked after each section parsed.
fn cross_check(cfg: &ExperimentConfig, issues: &mut Vec<String>) {
    if cfg.protocol.source_domains.len() != 1 {
        issues.push(format!(
            "protocol.source_domains: exactly one source domain is supported, got {}",
            cfg.protocol.source_domains.len()
        ));
    }
    for id in &cfg.protocol.source_domains {
        if cfg.domain(id).is_none() {
            issues.push(format!("protocol.source_domains: `{id}` is not a configured domain"));
        }
    }
    for id in &cfg.protocol.target_domains {
        if cfg.domain(id).is_none() {
            issues.push(format!("protocol.target_domains: `{id}` is not a configured domain"));
        }
        if cfg.protocol.source_domains.contains(id) {
            issues.push(format!("protocol.target_domains: `{id}` is also a source domain"));
        }
    }
    if cfg.model.input_shape != [3, 32, 32] {
        issues.push(format!(
            "model.input_shape: the synthetic benchmark renders 3x32x32 images, got {:?}",
            cfg.model.input_shape
        ));
    }
    if cfg.model.classes != NUM_CLASSES {
        issues.push(format!(
            "model.classes: the synthetic benchmark renders {NUM_CLASSES} classes, got {}",
            cfg.model.classes
        ));
    }
    let max_sweep = cfg.protocol.batch_sizes.iter().copied().max().unwrap_or(0);
    let smallest_target = cfg.model.classes * cfg.protocol.per_class;
    if max_sweep > smallest_target {
        issues.push(format!(
            "protocol.batch_sizes: largest size {max_sweep} exceeds a target domain of {smallest_target} samples"
        ));
    }
}

/// A key set to `null` counts as absent, so the canonical serialized form
/// of a config parses back to itself.
fn present<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key).filter(|v| !v.is_null())
}

fn as_object<'a>(v: &'a Value, what: &str, issues: &mut Vec<String>) -> Option<&'a Map<String, Value>> {
    match v.as_object() {
        Some(m) => Some(m),
        None => {
            issues.push(format!("{what}: expected a JSON object"));
            None
        }
    }
}

fn reject_unknown_keys(map: &Map<String, Value>, prefix: &str, allowed: &[&str], issues: &mut Vec<String>) {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            issues.push(format!("{prefix}{key}: unknown key"));
        }
    }
}

fn take_u64(path: &str, v: &Value, issues: &mut Vec<String>) -> Option<u64> {
    match v.as_u64() {
        Some(s) => Some(s),
        None => {
            issues.push(format!("{path}: expected a non-negative integer"));
            None
        }
    }
}

fn take_usize_min(path: &str, v: &Value, min: usize, issues: &mut Vec<String>) -> Option<usize> {
    match v.as_u64() {
        Some(n) if n >= min as u64 && n <= usize::MAX as u64 => Some(n as usize),
        _ => {
            issues.push(format!("{path}: expected an integer >= {min}"));
            None
        }
    }
}

fn take_f64_positive(path: &str, v: &Value, issues: &mut Vec<String>) -> Option<f64> {
    match v.as_f64() {
        Some(f) if f.is_finite() && f > 0.0 => Some(f),
        _ => {
            issues.push(format!("{path}: expected a positive number"));
            None
        }
    }
}

fn take_f64_closed(path: &str, v: &Value, lo: f64, hi: f64, issues: &mut Vec<String>) -> Option<f64> {
    match v.as_f64() {
        Some(f) if f.is_finite() && f >= lo && f <= hi => Some(f),
        _ => {
            issues.push(format!("{path}: expected a number in [{lo}, {hi}]"));
            None
        }
    }
}

fn take_f64_open(path: &str, v: &Value, lo: f64, hi: f64, issues: &mut Vec<String>) -> Option<f64> {
    match v.as_f64() {
        Some(f) if f.is_finite() && f > lo && f < hi => Some(f),
        _ => {
            issues.push(format!("{path}: expected a number strictly between {lo} and {hi}"));
            None
        }
    }
}
