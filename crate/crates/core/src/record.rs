//! JSON-lines score records shared by BLOOD and the comparison detectors.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One per-instance uncertainty score; higher means more likely OOD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub instance_id: u64,
    pub detector: String,
    /// Dataset split the instance came from (`test-id`, `ood`, `train`, ...).
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<Vec<f64>>,
    pub score: f64,
    pub seed: u64,
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[ScoreRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Scores of `detector` on `split`, in file order.
pub fn select<'a>(records: &'a [ScoreRecord], detector: &str, split: &str) -> Vec<&'a ScoreRecord> {
    records
        .iter()
        .filter(|r| r.detector == detector && r.split == split)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let recs = vec![
            ScoreRecord {
                instance_id: 3,
                detector: "blood_l".into(),
                split: "ood".into(),
                per_layer: Some(vec![0.1, 2.0 / 3.0]),
                score: 2.0 / 3.0,
                seed: 7,
            },
            ScoreRecord {
                instance_id: 4,
                detector: "msp".into(),
                split: "test-id".into(),
                per_layer: None,
                score: -0.9,
                seed: 7,
            },
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.lines().nth(1).unwrap().contains("per_layer"));
        assert_eq!(read_jsonl(&buf[..]).unwrap(), recs);
        assert_eq!(select(&recs, "msp", "test-id").len(), 1);
        assert!(matches!(read_jsonl(&b"{\n"[..]), Err(Error::Parse { line: 1, .. })));
    }
}
