//! Raster panels, boxplots and the metrics table.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use pfrecon_core::metrics::{SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
use pfrecon_core::RealImage;

use crate::error::{Error, Result};
use crate::evaluate::{write_metrics_csv, EvalRecord, Panel};
use crate::methods::Method;

/// Magnification of difference images.
pub const DIFF_SCALE: f64 = 5.0;

const BOX_W: u32 = 40;
const BOX_GAP: u32 = 20;
const PLOT_H: u32 = 240;
const MARGIN: u32 = 20;

const PALETTE: [[u8; 3]; 8] = [
    [128, 128, 128],
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
];

fn out_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

/// Maps `v / scale` in [0, 1] to 8 bits, clipping outside.
fn to_gray(img: &RealImage, scale: f64) -> GrayImage {
    let (h, w) = img.shape();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = img.get(y as usize, x as usize) / scale;
        Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

pub fn recon_panel(p: &Panel) -> GrayImage {
    to_gray(&p.recon, p.gt.max().max(f64::MIN_POSITIVE))
}

/// `|recon - gt|` magnified by [`DIFF_SCALE`] relative to the ground-truth maximum.
pub fn diff_panel(p: &Panel) -> GrayImage {
    let (h, w) = p.gt.shape();
    let diff = RealImage::new(
        h,
        w,
        p.recon.data().iter().zip(p.gt.data()).map(|(a, b)| (a - b).abs() * DIFF_SCALE).collect(),
    )
    .expect("same shape");
    to_gray(&diff, p.gt.max().max(f64::MIN_POSITIVE))
}

/// Phase in `[-pi, pi]` mapped to `[0, 255]`.
pub fn phase_panel(p: &Panel) -> GrayImage {
    let shifted = p.phase.map(|v| v + std::f64::consts::PI);
    to_gray(&shifted, 2.0 * std::f64::consts::PI)
}

/// One box per method (interquartile range, median line, min–max whiskers).
/// Degenerate distributions collapse to a line.
pub fn boxplot(groups: &[(Method, Vec<f64>)]) -> RgbImage {
    let n = groups.len().max(1) as u32;
    let width = 2 * MARGIN + n * BOX_W + (n - 1) * BOX_GAP;
    let height = PLOT_H + 2 * MARGIN;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let finite: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return img;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let y_of = |v: f64| -> u32 { MARGIN + ((hi - v) / span * (PLOT_H - 1) as f64).round() as u32 };
    let black = Rgb([0, 0, 0]);
    for (i, (method, vals)) in groups.iter().enumerate() {
        let Some(s) = crate::stats::summarize(vals) else { continue };
        let min = vals.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let x0 = MARGIN + i as u32 * (BOX_W + BOX_GAP);
        let x1 = x0 + BOX_W - 1;
        let xm = x0 + BOX_W / 2;
        let color = Rgb(PALETTE[*method as usize % PALETTE.len()]);
        let (yq3, yq1) = (y_of(s.q3), y_of(s.q1));
        for y in yq3..=yq1 {
            for x in x0..=x1 {
                img.put_pixel(x, y, color);
            }
        }
        for y in y_of(max)..=y_of(min) {
            img.put_pixel(xm, y, black);
        }
        for x in x0..=x1 {
            img.put_pixel(x, y_of(s.median), black);
        }
        for x in x0 + BOX_W / 4..=x1 - BOX_W / 4 {
            img.put_pixel(x, y_of(min), black);
            img.put_pixel(x, y_of(max), black);
        }
    }
    img
}

fn metadata(records: &[EvalRecord]) -> serde_json::Value {
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    serde_json::json!({
        "ssim": {"window": SSIM_WINDOW, "sigma": SSIM_SIGMA, "k1": SSIM_K1, "k2": SSIM_K2},
        "data_range": "per-slice ground-truth maximum of the magnitude average",
        "difference_scale": DIFF_SCALE,
        "methods": methods,
        "table": "metrics.csv",
    })
}

/// Writes `metrics.csv`, `metadata.json`, boxplots and, per panel,
/// `slice{NNN}_{method}_{recon,diff,phase}.png`. Returns the written paths.
pub fn emit_figures(records: &[EvalRecord], panels: &[Panel], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Usage("no records to plot".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| out_err(out_dir, e))?;
    let mut written = Vec::new();

    let table = out_dir.join("metrics.csv");
    let file = fs::File::create(&table).map_err(|e| out_err(&table, e))?;
    write_metrics_csv(records, std::io::BufWriter::new(file))?;
    written.push(table);

    let meta = out_dir.join("metadata.json");
    fs::write(&meta, serde_json::to_string_pretty(&metadata(records)).expect("json")).map_err(|e| out_err(&meta, e))?;
    written.push(meta);

    for p in panels {
        for (kind, img) in [("recon", recon_panel(p)), ("diff", diff_panel(p)), ("phase", phase_panel(p))] {
            let path = out_dir.join(format!("slice{:03}_{}_{kind}.png", p.slice, p.method));
            img.save(&path).map_err(|e| out_err(&path, e))?;
            written.push(path);
        }
    }

    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    for (name, f) in [("psnr", (|r: &EvalRecord| r.psnr) as fn(&EvalRecord) -> f64), ("ssim", |r: &EvalRecord| r.ssim)] {
        let groups: Vec<(Method, Vec<f64>)> = methods
            .iter()
            .map(|&m| (m, records.iter().filter(|r| r.method == m).map(f).collect()))
            .collect();
        let path = out_dir.join(format!("boxplot_{name}.png"));
        boxplot(&groups).save(&path).map_err(|e| out_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
