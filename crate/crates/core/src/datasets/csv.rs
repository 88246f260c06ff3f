//! `# blood-dataset v1` CSV container.
//!
//! ```text
//! # blood-dataset v1
//! # dim=16
//! # num_classes=4
//! # <other metadata>=...
//! split,label,f0,f1,...
//! train,2,0.125,-1.5,...
//! ood,-1,3.25,0.5,...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so values survive a
//! save/load cycle bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &str = "# blood-dataset v1";

pub fn write_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "# dim={}", ds.dim);
    let _ = writeln!(out, "# num_classes={}", ds.num_classes);
    for (k, v) in ds.metadata.iter().filter(|(k, _)| *k != "dim" && *k != "num_classes") {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("split,label");
    for j in 0..ds.dim {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for i in 0..ds.len() {
        out.push_str(ds.splits[i].name());
        match ds.labels[i] {
            Some(c) => {
                let _ = write!(out, ",{c}");
            }
            None => out.push_str(",-1"),
        }
        for v in ds.features[i].data() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_csv(ds))?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_csv(&fs::read_to_string(path)?)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as u64,
        message: message.into(),
    }
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        None => return Err(Error::Empty("dataset file".into())),
        Some((_, l)) if l.trim().is_empty() => return Err(Error::Empty("dataset file".into())),
        Some((_, MAGIC)) => {}
        Some((n, _)) => return Err(parse_err(n, format!("expected '{MAGIC}' header"))),
    }
    let mut metadata = std::collections::BTreeMap::new();
    let mut header = None;
    for (n, line) in lines.by_ref() {
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| parse_err(n, "metadata line must be '# key=value'"))?;
            metadata.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            header = Some((n, line));
            break;
        }
    }
    let (hn, header) = header.ok_or_else(|| Error::Empty("dataset has no column header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "split" || cols[1] != "label" {
        return Err(parse_err(hn, "column header must start with 'split,label'"));
    }
    let dim = cols.len() - 2;
    let get = |k: &str| -> Result<usize> {
        metadata
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(2, format!("missing or invalid '# {k}=' metadata")))
    };
    if get("dim")? != dim {
        return Err(parse_err(
            hn,
            format!("header has {dim} feature columns, metadata says {}", get("dim")?),
        ));
    }
    let mut ds = Dataset::new(dim, get("num_classes")?);
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                n,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let split: Split = fields[0].parse().map_err(|e: String| parse_err(n, e))?;
        let label: i64 = fields[1]
            .parse()
            .map_err(|_| parse_err(n, format!("bad label '{}'", fields[1])))?;
        let label = match label {
            -1 => None,
            c if c >= 0 && (c as usize) < ds.num_classes => Some(c as usize),
            c => return Err(parse_err(n, format!("label {c} outside [0, {})", ds.num_classes))),
        };
        let x = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(n, format!("bad number '{f}'"))))
            .collect::<Result<Vec<_>>>()?;
        ds.push(Tensor::vector(x), label, split)?;
    }
    if ds.is_empty() {
        return Err(Error::Empty("dataset has no rows".into()));
    }
    metadata.remove("dim");
    metadata.remove("num_classes");
    ds.metadata = metadata;
    Ok(ds)
}
