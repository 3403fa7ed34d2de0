//! Corpus degradation.

use std::path::{Path, PathBuf};

use eben_core::degrade::{apply_psi_fixed, apply_psi_random, DEFAULT_FIR_LENGTH};
use eben_core::{derive_seed, Pipeline, ResponseBounds};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::wav::{read_wav, write_wav, Encoding};

pub const REPORT_NAME: &str = "degrade_report.json";

#[derive(Debug, Clone, PartialEq)]
pub enum BatchMode {
    Fixed,
    Random { bounds: ResponseBounds, fir_length: usize },
}

impl BatchMode {
    pub fn random(bounds: ResponseBounds) -> Self {
        BatchMode::Random {
            bounds,
            fir_length: DEFAULT_FIR_LENGTH,
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        match self {
            BatchMode::Fixed => Pipeline::Fixed,
            BatchMode::Random { .. } => Pipeline::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the input directory, `/`-separated.
    pub path: String,
    pub seed: u64,
    pub rel_db: Option<f64>,
    pub clip_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub files: Vec<FileEntry>,
    pub pipeline: Pipeline,
    pub master_seed: u64,
}

impl CorpusReport {
    pub fn failures(&self) -> usize {
        self.files.iter().filter(|f| f.error.is_some()).count()
    }
}

fn relative_key(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Every `.wav` under `dir`, sorted by relative path.
pub fn list_wavs(dir: &Path) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in walkdir::WalkDir::new(dir).follow_links(true) {
        let e = e.map_err(std::io::Error::other)?;
        let p = e.path();
        let is_wav = p
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("wav"));
        if e.file_type().is_file() && is_wav {
            out.push((relative_key(dir, p), p.to_path_buf()));
        }
    }
    out.sort();
    Ok(out)
}

fn degrade_one(
    src: &Path,
    dst: &Path,
    mode: &BatchMode,
    seed: u64,
    encoding: Encoding,
) -> Result<(Option<f64>, usize), String> {
    let buf = read_wav(src).map_err(|e| e.to_string())?;
    let (out, report) = match mode {
        BatchMode::Fixed => apply_psi_fixed(&buf, seed),
        BatchMode::Random { bounds, fir_length } => apply_psi_random(&buf, bounds, *fir_length, seed),
    }
    .map_err(|e| e.to_string())?;
    if let Some(parent) = dst.parent() {
        std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
    }
    let clips = write_wav(dst, &out, encoding).map_err(|e| e.to_string())?;
    Ok((report.measured_noise_rel_db, clips))
}

/// Degrades every WAV under `in_dir` into the same relative location under
/// `out_dir` and writes [`REPORT_NAME`] there. Each file is seeded from
/// `(master_seed, relative path)`, so the result does not depend on the
/// processing order. Per-file failures are recorded and skipped.
pub fn batch_degrade(
    in_dir: &Path,
    out_dir: &Path,
    mode: &BatchMode,
    master_seed: u64,
    encoding: Encoding,
) -> std::io::Result<CorpusReport> {
    if !in_dir.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", in_dir.display()),
        ));
    }
    let inputs = list_wavs(in_dir)?;
    std::fs::create_dir_all(out_dir)?;
    let files = inputs
        .par_iter()
        .map(|(key, src)| {
            let seed = derive_seed(master_seed, key.as_bytes());
            let dst = out_dir.join(key);
            match degrade_one(src, &dst, mode, seed, encoding) {
                Ok((rel_db, clip_count)) => FileEntry {
                    path: key.clone(),
                    seed,
                    rel_db,
                    clip_count,
                    error: None,
                },
                Err(e) => FileEntry {
                    path: key.clone(),
                    seed,
                    rel_db: None,
                    clip_count: 0,
                    error: Some(e),
                },
            }
        })
        .collect();
    let report = CorpusReport {
        files,
        pipeline: mode.pipeline(),
        master_seed,
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(out_dir.join(REPORT_NAME), json)?;
    Ok(report)
}
