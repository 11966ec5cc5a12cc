//! Image, sidecar and CSV writers for command outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nexsplat::image::Image;
use nexsplat::Rgb;
use serde_json::Value;

use crate::{CliError, CliResult};

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn core_io(path: &Path, e: nexsplat::Error) -> CliError {
    match e {
        nexsplat::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    }
}

fn write_sidecar(dir: &Path, stem: &str, kind: &str, context: &Value) -> CliResult<()> {
    let mut meta = context.clone();
    if let Value::Object(map) = &mut meta {
        map.insert("image".into(), kind.into());
    }
    write_text(&dir.join(format!("{stem}.json")), &pretty(&meta))
}

pub fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize") + "\n"
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `stem.png` (sRGB), `stem.pfm` (linear) and `stem.json`.
pub fn write_rgb(
    dir: &Path,
    stem: &str,
    img: &Image<Rgb>,
    context: &Value,
) -> CliResult<[PathBuf; 2]> {
    let png = dir.join(format!("{stem}.png"));
    let pfm = dir.join(format!("{stem}.pfm"));
    img.write_png(&png).map_err(|e| core_io(&png, e))?;
    img.write_pfm(&pfm).map_err(|e| core_io(&pfm, e))?;
    write_sidecar(dir, stem, "rgb", context)?;
    Ok([png, pfm])
}

/// Grayscale counterpart of [`write_rgb`]; the PNG stores values in `[0, 1]`
/// without a transfer curve.
pub fn write_gray(
    dir: &Path,
    stem: &str,
    img: &Image<f64>,
    kind: &str,
    context: &Value,
) -> CliResult<[PathBuf; 2]> {
    let png = dir.join(format!("{stem}.png"));
    let pfm = dir.join(format!("{stem}.pfm"));
    img.write_png_gray(&png).map_err(|e| core_io(&png, e))?;
    img.write_pfm_gray(&pfm).map_err(|e| core_io(&pfm, e))?;
    write_sidecar(dir, stem, kind, context)?;
    Ok([png, pfm])
}

/// Overdraw counts as raw values in the PFM and normalized by `max` in the
/// PNG.
pub fn write_overdraw(
    dir: &Path,
    stem: &str,
    counts: &Image<u32>,
    max: u32,
    context: &Value,
) -> CliResult<[PathBuf; 2]> {
    let png = dir.join(format!("{stem}.png"));
    let pfm = dir.join(format!("{stem}.pfm"));
    counts
        .normalized(max)
        .write_png_gray(&png)
        .map_err(|e| core_io(&png, e))?;
    counts
        .map(|&c| c as f64)
        .write_pfm_gray(&pfm)
        .map_err(|e| core_io(&pfm, e))?;
    let mut ctx = context.clone();
    if let Value::Object(map) = &mut ctx {
        map.insert("png_normalization".into(), max.into());
    }
    write_sidecar(dir, stem, "overdraw", &ctx)?;
    Ok([png, pfm])
}

pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> CliResult<()> {
    let mut out = Vec::new();
    writeln!(out, "{}", header.join(",")).unwrap();
    for r in rows {
        writeln!(out, "{}", r.as_ref().join(",")).unwrap();
    }
    fs::write(path, out).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
