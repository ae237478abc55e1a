use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use segcurate_core::data::{Dataset, Label, Segment};
use segcurate_core::Error;
use serde::{Deserialize, Serialize};

/// One line of a segment list; `score` and `label` come from `classify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLine {
    pub demo_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl SegmentLine {
    pub fn of(seg: &Segment) -> Self {
        SegmentLine {
            demo_id: seg.demo_id.clone(),
            start: seg.start,
            end: seg.end,
            score: None,
            label: None,
        }
    }
}

pub fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn read_segment_lines(path: &Path) -> Result<Vec<SegmentLine>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SegmentLine = serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.into(),
            line: n + 1,
            field: String::new(),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Resolves segment lines against the dataset they were cut from.
pub fn resolve(ds: &Dataset, lines: &[SegmentLine]) -> Result<Vec<Segment>> {
    lines
        .iter()
        .map(|l| {
            let demo = ds.get(&l.demo_id).ok_or_else(|| Error::InvalidDemo {
                demo: l.demo_id.clone(),
                message: "segment refers to a demonstration missing from the dataset".into(),
            })?;
            if l.start < 1 || l.start > l.end || l.end > demo.len() {
                return Err(Error::InvalidDemo {
                    demo: l.demo_id.clone(),
                    message: format!(
                        "segment {}..{} outside 1..{}",
                        l.start,
                        l.end,
                        demo.len()
                    ),
                }
                .into());
            }
            Ok(demo.slice(l.start, l.end))
        })
        .collect()
}
