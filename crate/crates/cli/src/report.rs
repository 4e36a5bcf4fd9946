//! The JSON report artifact.
//!
//! Every float is printed with 17 significant digits so that two runs can
//! be diffed byte for byte and a parser recovers the exact f64 values.

use std::io::{self, Write};
use std::path::Path;

use anyhow::Result;
use lsq_shapley::{AttributionResult, RunConfig};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::fsio;

pub const SCHEMA_VERSION: &str = "1";

/// Everything one attribution run wants to tell the caller.
#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub schema_version: String,
    pub p: usize,
    pub feature_names: Vec<String>,
    pub shapley: Vec<f64>,
    pub per_feature_error: Vec<f64>,
    pub overall_error: f64,
    pub r2_full: f64,
    pub converged: bool,
    pub batches_used: usize,
    pub total_lift_vectors: usize,
    pub config_echo: RunConfig,
    pub wall_time_seconds: f64,
}

impl ReportDocument {
    pub fn new(
        feature_names: Vec<String>,
        result: &AttributionResult,
        config: &RunConfig,
        wall_time_seconds: f64,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            p: feature_names.len(),
            feature_names,
            shapley: result.shapley.iter().copied().collect(),
            per_feature_error: result.per_feature_error.iter().copied().collect(),
            overall_error: result.overall_error,
            r2_full: result.r2_full,
            converged: result.converged,
            batches_used: result.batches_used,
            total_lift_vectors: result.total_lift_vectors,
            config_echo: config.clone(),
            wall_time_seconds,
        }
    }
}

/// Pretty printing with round-trip-exact floats. Only `write_f64` differs
/// from the stock pretty formatter; the indentation hooks are forwarded.
struct ReportFormatter<'a> {
    pretty: PrettyFormatter<'a>,
}

impl Formatter for ReportFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

pub fn to_json_bytes(doc: &ReportDocument) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let formatter = ReportFormatter {
        pretty: PrettyFormatter::new(),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    doc.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Writes the report to `path`, or to stdout when `path` is `-`. Returns
/// true when a file was written (the caller then prints its path).
pub fn write_report(doc: &ReportDocument, path: &Path) -> Result<bool> {
    let bytes = to_json_bytes(doc)?;
    if path == Path::new("-") {
        io::stdout().write_all(&bytes)?;
        Ok(false)
    } else {
        fsio::atomic_write(path, &bytes)?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lsq_shapley::{attribute, RunConfig, SynthSpec};

    fn sample_doc() -> ReportDocument {
        let spec = SynthSpec {
            p: 3,
            n_train: 60,
            n_test: 60,
            seed: 5,
        };
        let (train, test, _) = lsq_shapley::gen_dataset(&spec).unwrap();
        let mut config = RunConfig::for_dimension(3);
        config.max_permutations = 12;
        config.batch_size = 6;
        let result = attribute(&train, &test, &config).unwrap();
        let names = vec!["a".into(), "b".into(), "c".into()];
        ReportDocument::new(names, &result, &config, 0.125)
    }

    #[test]
    fn floats_survive_a_json_round_trip_exactly() {
        let doc = sample_doc();
        let bytes = to_json_bytes(&doc).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let parsed = value["r2_full"].as_f64().unwrap();
        assert_eq!(parsed.to_bits(), doc.r2_full.to_bits());
        for (got, want) in value["shapley"]
            .as_array()
            .unwrap()
            .iter()
            .zip(&doc.shapley)
        {
            assert_eq!(got.as_f64().unwrap().to_bits(), want.to_bits());
        }
    }

    #[test]
    fn document_carries_the_full_schema() {
        let doc = sample_doc();
        let bytes = to_json_bytes(&doc).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let object = value.as_object().unwrap();
        for key in [
            "schema_version",
            "p",
            "feature_names",
            "shapley",
            "per_feature_error",
            "overall_error",
            "r2_full",
            "converged",
            "batches_used",
            "total_lift_vectors",
            "config_echo",
            "wall_time_seconds",
        ] {
            assert!(object.contains_key(key), "missing {key}");
        }
        let p = value["p"].as_u64().unwrap() as usize;
        assert_eq!(value["feature_names"].as_array().unwrap().len(), p);
        assert_eq!(value["shapley"].as_array().unwrap().len(), p);
        assert_eq!(value["per_feature_error"].as_array().unwrap().len(), p);
        assert!(value["config_echo"]["max_permutations"].is_u64());
    }
}
