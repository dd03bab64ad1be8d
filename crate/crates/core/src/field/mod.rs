//! Radiance fields: (point, view direction) → (rgb, density).
//!
//! Every evaluated point is charged to a [`ForwardPassLedger`], which is the
//! cost unit all experiments report.

mod analytic;
mod mlp;

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use analytic::{AnalyticScene, Pattern, Primitive, Shape};
pub use mlp::{Mlp, MlpSpec};

/// Largest number of points sent to a field in a single call.
pub const MAX_BATCH: usize = 30_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldQuery {
    pub position: Vector3<f64>,
    /// Unit vector.
    pub direction: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutput {
    pub rgb: [f64; 3],
    pub sigma: f64,
}

/// Counts field evaluations. Shared between workers; increments are atomic.
#[derive(Debug, Default)]
pub struct ForwardPassLedger(AtomicU64);

impl ForwardPassLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub(crate) fn charge(&self, n: usize) {
        self.0.fetch_add(n as u64, Ordering::SeqCst);
    }
}

/// Positional encoding: `[x, sin(2^k π x), cos(2^k π x)]` for k in 0..L,
/// laid out as the raw coordinates followed by one (sin, cos) triple block
/// per frequency.
pub fn encode(v: &Vector3<f64>, frequencies: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 + 6 * frequencies);
    out.extend_from_slice(v.as_slice());
    for k in 0..frequencies {
        let scale = (1u64 << k) as f64 * std::f64::consts::PI;
        for x in v.iter() {
            out.push((scale * x).sin());
        }
        for x in v.iter() {
            out.push((scale * x).cos());
        }
    }
    out
}

pub fn encoded_len(frequencies: usize) -> usize {
    3 + 6 * frequencies
}

#[derive(Debug, Clone, PartialEq)]
pub enum RadianceField {
    Analytic(AnalyticScene),
    Mlp(Mlp),
}

impl RadianceField {
    /// Evaluates every query, in order, and charges the ledger once per point.
    pub fn query_batch(
        &self,
        queries: &[FieldQuery],
        ledger: &ForwardPassLedger,
    ) -> Result<Vec<FieldOutput>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        if queries
            .iter()
            .any(|q| q.position.iter().chain(q.direction.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("field query"));
        }
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(MAX_BATCH) {
            match self {
                RadianceField::Analytic(scene) => {
                    out.extend(chunk.iter().map(|q| scene.eval(&q.position)))
                }
                RadianceField::Mlp(mlp) => mlp.eval_batch(chunk, &mut out),
            }
            ledger.charge(chunk.len());
        }
        Ok(out)
    }

    /// Loads either an analytic scene (`.json`) or an MLP weights file.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Ok(RadianceField::Analytic(serde_json::from_str(&text)?))
        } else {
            Ok(RadianceField::Mlp(Mlp::load(path)?))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            RadianceField::Analytic(scene) => {
                let text = serde_json::to_string_pretty(scene)?;
                std::fs::write(path, text).map_err(|e| Error::io(path, e))
            }
            RadianceField::Mlp(mlp) => mlp.save(path),
        }
    }

    /// File extension `save` expects for this kind of field.
    pub fn file_extension(&self) -> &'static str {
        match self {
            RadianceField::Analytic(_) => "json",
            RadianceField::Mlp(_) => "weights",
        }
    }
}

pub fn load_weights(path: &Path) -> Result<RadianceField> {
    Ok(RadianceField::Mlp(Mlp::load(path)?))
}
