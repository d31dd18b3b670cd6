//! Run manifests and the header conventions shared by every output file.
//!
//! CSV files start with `# schema: <id>` and `# manifest: <json>` lines
//! before the column header. JSON files carry `schema` and `manifest` keys.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CAMPAIGN_RECORDS_SCHEMA: &str = "fisim.campaign.records/1";
pub const CAMPAIGN_HISTOGRAM_SCHEMA: &str = "fisim.campaign.histogram/1";
pub const CAMPAIGN_SUMMARY_SCHEMA: &str = "fisim.campaign.summary/1";
pub const GLITCH_CELLS_SCHEMA: &str = "fisim.glitch.cells/1";
pub const GLITCH_ACTIONS_SCHEMA: &str = "fisim.glitch.actions/1";
pub const GLITCH_CORRELATION_SCHEMA: &str = "fisim.glitch.correlation/1";
pub const GLITCH_SUMMARY_SCHEMA: &str = "fisim.glitch.summary/1";

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies a run. Equal manifests must produce byte-identical reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario: String,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: String,
    /// SHA-256 over every input that influences the results.
    pub input_hash: String,
}

impl RunManifest {
    pub fn new(command: &str, scenario: &str, out_dir: &str, input_hash: String) -> Self {
        RunManifest {
            tool: "fisim".to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            scenario: scenario.to_string(),
            config: None,
            seed: None,
            out_dir: out_dir.to_string(),
            input_hash,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest serializes")
    }

    /// The two comment lines that open a CSV report.
    pub fn csv_preamble(&self, schema: &str) -> String {
        format!("# schema: {schema}\n# manifest: {}\n", self.to_json())
    }
}

/// Hashes labelled input parts. Each part is length-prefixed so that
/// boundaries cannot be shifted between parts.
#[derive(Default)]
pub struct InputHasher {
    inner: Sha256,
}

impl InputHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(mut self, label: &str, bytes: &[u8]) -> Self {
        for chunk in [label.as_bytes(), bytes] {
            self.inner.update((chunk.len() as u64).to_be_bytes());
            self.inner.update(chunk);
        }
        self
    }

    pub fn finish(self) -> String {
        hex::encode(self.inner.finalize())
    }
}

/// Wraps a JSON object body with the schema and manifest keys.
pub fn json_document(schema: &str, manifest: &RunManifest, body: serde_json::Value) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), schema.into());
    doc.insert("manifest".into(), manifest.to_json());
    if let serde_json::Value::Object(map) = body {
        doc.extend(map);
    }
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("json serializes");
    text.push('\n');
    text
}

/// SHA-256 of a byte string, hex encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
