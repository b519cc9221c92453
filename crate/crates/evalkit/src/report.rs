//! Aggregated evaluation artifact: JSON for machines, TSV tables for eyes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::faithfulness::FaithfulnessCurve;
use crate::prdc::PrdcResult;
use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdbSummary {
    pub ndb: usize,
    pub n_bins: usize,
}

/// One experiment's complete evaluation, keyed by arm name (for example
/// "baseline" and "optimized").
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub curves: BTreeMap<String, FaithfulnessCurve>,
    pub fid: BTreeMap<String, f64>,
    pub prdc: BTreeMap<String, PrdcResult>,
    pub ndb: BTreeMap<String, NdbSummary>,
    pub augmentation_accuracy: BTreeMap<String, f64>,
    /// Wall-clock timings are inherently non-reproducible, so pipelines that
    /// promise byte-identical reports keep this empty and write timings to a
    /// sidecar file instead.
    pub timings_secs: BTreeMap<String, f64>,
    /// Free-form deterministic scalars (rank correlations, iteration means).
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text)
            .map_err(|e| EvalError::Invalid(format!("report parse: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_json())
            .map_err(|e| EvalError::Invalid(format!("write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path)
            .map_err(|e| EvalError::Invalid(format!("read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Scalar metrics as TSV: arm, metric, value — one row per entry.
    pub fn metrics_tsv(&self) -> String {
        let mut out = String::from("arm\tmetric\tvalue\n");
        for (arm, v) in &self.fid {
            out.push_str(&format!("{arm}\tfid\t{v}\n"));
        }
        for (arm, p) in &self.prdc {
            out.push_str(&format!("{arm}\tprecision\t{}\n", p.precision));
            out.push_str(&format!("{arm}\trecall\t{}\n", p.recall));
            out.push_str(&format!("{arm}\tfidelity\t{}\n", p.density));
            out.push_str(&format!("{arm}\tdiversity\t{}\n", p.coverage));
        }
        for (arm, n) in &self.ndb {
            out.push_str(&format!("{arm}\tndb\t{}\n", n.ndb));
        }
        for (arm, a) in &self.augmentation_accuracy {
            out.push_str(&format!("{arm}\taugmentation_accuracy\t{a}\n"));
        }
        for (what, secs) in &self.timings_secs {
            out.push_str(&format!("timing\t{what}\t{secs}\n"));
        }
        for (what, v) in &self.extras {
            out.push_str(&format!("extra\t{what}\t{v}\n"));
        }
        out
    }
}
