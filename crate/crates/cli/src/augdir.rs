//! On-disk layout of augmented samples: flat little-endian `f32` raster
//! files plus an `index.json` describing them.
//!
//! ```text
//! aug/index.json
//! aug/pos_start.f32  aug/pos_end.f32
//! aug/neg_start.f32  aug/neg_end.f32
//! aug/orig_start.f32          expert segments from the canonical view
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Result};
use segcurate_core::render::{Augmented, RasterPair, TrajRaster};
use segcurate_core::Error;
use serde::{Deserialize, Serialize};

const FORMAT: &str = "segcurate-aug";

#[derive(Debug, Serialize, Deserialize)]
struct PairSet {
    count: usize,
    start: String,
    end: String,
    sources: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    format: String,
    version: u32,
    width: usize,
    height: usize,
    positives: PairSet,
    negatives: PairSet,
    originals: usize,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source: e,
    }
}

fn write_rasters<'a>(path: &Path, rasters: impl Iterator<Item = &'a TrajRaster>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rasters {
        for p in r.pixels() {
            w.write_all(&p.to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

fn read_rasters(path: &Path, count: usize, width: usize, height: usize) -> Result<Vec<TrajRaster>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let expected = (count * width * height * 4) as u64;
    let actual = file.metadata().map_err(|e| io_err(path, e))?.len();
    if actual != expected {
        return Err(Error::Format {
            path: path.into(),
            message: format!("expected {expected} bytes, found {actual}"),
        }
        .into());
    }
    let mut r = BufReader::new(file);
    let mut buf = vec![0u8; width * height * 4];
    (0..count)
        .map(|_| {
            r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
            let px = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(TrajRaster::from_pixels(width, height, px))
        })
        .collect()
}

pub fn write(dir: &Path, aug: &Augmented, originals: &[TrajRaster], width: usize, height: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let set = |pairs: &[RasterPair], prefix: &str| -> Result<PairSet> {
        let start = format!("{prefix}_start.f32");
        let end = format!("{prefix}_end.f32");
        write_rasters(&dir.join(&start), pairs.iter().map(|p| &p.start))?;
        write_rasters(&dir.join(&end), pairs.iter().map(|p| &p.end))?;
        Ok(PairSet {
            count: pairs.len(),
            start,
            end,
            sources: pairs.iter().map(|p| p.source).collect(),
        })
    };
    let index = Index {
        format: FORMAT.into(),
        version: 1,
        width,
        height,
        positives: set(&aug.positives, "pos")?,
        negatives: set(&aug.negatives, "neg")?,
        originals: originals.len(),
    };
    write_rasters(&dir.join("orig_start.f32"), originals.iter())?;
    let path = dir.join("index.json");
    fs::write(&path, serde_json::to_string_pretty(&index)? + "\n").map_err(|e| io_err(&path, e))?;
    Ok(())
}

/// Reads an augmentation directory: the augmented pairs and the originals.
pub fn read(dir: &Path) -> Result<(Augmented, Vec<TrajRaster>)> {
    let path = dir.join("index.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let index: Index = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if index.format != FORMAT {
        bail!(Error::Format {
            path,
            message: format!("unexpected format `{}`", index.format),
        });
    }
    let (w, h) = (index.width, index.height);
    let pairs = |set: &PairSet| -> Result<Vec<RasterPair>> {
        if set.sources.len() != set.count {
            bail!(Error::Format {
                path: dir.join("index.json"),
                message: "source list length differs from count".into(),
            });
        }
        let starts = read_rasters(&dir.join(&set.start), set.count, w, h)?;
        let ends = read_rasters(&dir.join(&set.end), set.count, w, h)?;
        Ok(starts
            .into_iter()
            .zip(ends)
            .zip(&set.sources)
            .map(|((start, end), &source)| RasterPair { start, end, source })
            .collect())
    };
    let aug = Augmented {
        positives: pairs(&index.positives)?,
        negatives: pairs(&index.negatives)?,
    };
    let originals = read_rasters(&dir.join("orig_start.f32"), index.originals, w, h)?;
    Ok((aug, originals))
}
