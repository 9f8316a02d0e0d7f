//! Per-slice comparison of reconstruction methods against ground truth.

use std::collections::BTreeMap;
use std::io::Write;

use pfrecon_core::{psnr, ssim, ComplexImage, Pff, RealImage, RepetitionSet};
use pfrecon_net::train::{sample_set, set_magnitude_average};
use pfrecon_net::Model;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::methods::{reconstruct, Method};
use crate::stats::{summarize, wilcoxon_signed_rank, Summary, Wilcoxon};

/// Significance level for the paired tests.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalRecord {
    pub slice: usize,
    pub method: Method,
    #[serde(serialize_with = "ser_display")]
    pub pff: Pff,
    /// `f64::INFINITY` for a perfect reconstruction.
    pub psnr: f64,
    pub ssim: f64,
}

fn ser_display<S: serde::Serializer>(v: &Pff, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub psnr: Option<Summary>,
    pub ssim: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedTest {
    pub a: Method,
    pub b: Method,
    pub metric: &'static str,
    pub test: Option<Wilcoxon>,
    pub significant: bool,
}

/// Images kept for figure rendering.
#[derive(Debug, Clone)]
pub struct Panel {
    pub slice: usize,
    pub method: Method,
    /// Magnitude average of the reconstruction.
    pub recon: RealImage,
    /// Magnitude average of the ground truth.
    pub gt: RealImage,
    /// Phase of the first reconstructed repetition.
    pub phase: RealImage,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub summaries: Vec<MethodSummary>,
    pub tests: Vec<PairedTest>,
    pub panels: Vec<Panel>,
}

impl EvalReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Mean PSNR of a method over finite records.
    pub fn mean_psnr(&self, method: Method) -> Option<f64> {
        self.summary(method).and_then(|s| s.psnr).map(|s| s.mean)
    }
}

/// PF-samples each ground-truth set at `pff`, reconstructs it with every
/// method and scores magnitude averages. Reconstructions of the first
/// `keep_panels` slices are returned for figures.
pub fn evaluate(
    gt_sets: &[RepetitionSet<ComplexImage>],
    methods: &[Method],
    models: &BTreeMap<Method, Model<f32>>,
    pff: Pff,
    keep_panels: usize,
) -> Result<EvalReport> {
    if methods.is_empty() {
        return Err(Error::Usage("no methods requested".into()));
    }
    for m in methods {
        if m.is_learned() {
            let model = models.get(m).ok_or_else(|| Error::Checkpoint(format!("missing checkpoint for {m}")))?;
            m.check_model(model)?;
        }
    }
    let mut records = Vec::new();
    let mut panels = Vec::new();
    for (slice, gt) in gt_sets.iter().enumerate() {
        let y = sample_set(gt, pff)?;
        let gt_avg = set_magnitude_average(gt);
        for &m in methods {
            let rec = reconstruct(m, &y, models.get(&m))?;
            let avg = set_magnitude_average(&rec);
            records.push(EvalRecord {
                slice,
                method: m,
                pff,
                psnr: psnr(&avg, &gt_avg, None)?,
                ssim: ssim(&avg, &gt_avg, None)?,
            });
            if slice < keep_panels {
                panels.push(Panel {
                    slice,
                    method: m,
                    recon: avg,
                    gt: gt_avg.clone(),
                    phase: rec.items()[0].phase(),
                });
            }
        }
    }
    let column = |m: Method, f: fn(&EvalRecord) -> f64| -> Vec<f64> { records.iter().filter(|r| r.method == m).map(f).collect() };
    let summaries = methods
        .iter()
        .map(|&m| MethodSummary {
            method: m,
            psnr: summarize(&column(m, |r| r.psnr)),
            ssim: summarize(&column(m, |r| r.ssim)),
        })
        .collect();
    let mut tests = Vec::new();
    for (i, &a) in methods.iter().enumerate() {
        for &b in &methods[i + 1..] {
            for (metric, f) in [("psnr", (|r: &EvalRecord| r.psnr) as fn(&EvalRecord) -> f64), ("ssim", |r: &EvalRecord| r.ssim)] {
                let test = wilcoxon_signed_rank(&column(a, f), &column(b, f));
                tests.push(PairedTest {
                    a,
                    b,
                    metric,
                    significant: test.is_some_and(|t| t.p_value < ALPHA),
                    test,
                });
            }
        }
    }
    Ok(EvalReport {
        records,
        summaries,
        tests,
        panels,
    })
}

/// Writes the metrics table with header `slice,method,pff,psnr_db,ssim`.
pub fn write_metrics_csv<W: Write>(records: &[EvalRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Output(format!("metrics table: {e}"));
    w.write_record(["slice", "method", "pff", "psnr_db", "ssim"]).map_err(err)?;
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.slice, r.method));
    for r in &sorted {
        let psnr = if r.psnr.is_infinite() { "inf".to_string() } else { format!("{:.6}", r.psnr) };
        w.write_record([r.slice.to_string(), r.method.to_string(), r.pff.to_string(), psnr, format!("{:.6}", r.ssim)])
            .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pfrecon_core::synth::{generate_dataset, PhaseMode, PhantomSpec};

    fn sets(mode: PhaseMode, noise: f64, n: usize) -> Vec<RepetitionSet<ComplexImage>> {
        let spec = PhantomSpec {
            height: 32,
            width: 32,
            n_repetitions: 2,
            phase_mode: mode,
            noise_sigma: noise,
            seed: 4,
            ..PhantomSpec::default()
        };
        generate_dataset(&spec, n).unwrap().into_iter().map(|p| p.reps).collect()
    }

    #[test]
    fn full_sampling_is_perfect_for_zero_fill() {
        let gt = sets(PhaseMode::Constant, 0.0, 2);
        let r = evaluate(&gt, &[Method::ZeroFill], &BTreeMap::new(), Pff::FULL, 0).unwrap();
        assert!(r.records.iter().all(|x| x.psnr > 100.0 || x.psnr.is_infinite()));
        assert!(r.records.iter().all(|x| (x.ssim - 1.0).abs() < 1e-9));
    }

    #[test]
    fn repeated_evaluation_is_identical() {
        let gt = sets(PhaseMode::SmoothPlusPatches, 0.01, 2);
        let mut twice = gt.clone();
        twice.push(gt[0].clone());
        let methods = [Method::ZeroFill, Method::Pocs, Method::Homodyne];
        let r = evaluate(&twice, &methods, &BTreeMap::new(), Pff::FIVE_EIGHTHS, 1).unwrap();
        for m in methods {
            let a = r.records.iter().find(|x| x.slice == 0 && x.method == m).unwrap();
            let b = r.records.iter().find(|x| x.slice == 2 && x.method == m).unwrap();
            assert_eq!((a.psnr, a.ssim), (b.psnr, b.ssim));
        }
        assert_eq!(r.panels.len(), 3);
        assert_eq!(r.tests.len(), 6);
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_metrics_csv(&r.records, &mut x).unwrap();
        write_metrics_csv(&evaluate(&twice, &methods, &BTreeMap::new(), Pff::FIVE_EIGHTHS, 0).unwrap().records, &mut y).unwrap();
        assert_eq!(x, y);
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("slice,method,pff,psnr_db,ssim\n0,zero_fill,5/8,"));
    }

    #[test]
    fn learned_methods_need_checkpoints() {
        let gt = sets(PhaseMode::Constant, 0.0, 1);
        let err = evaluate(&gt, &[Method::DrpfMax], &BTreeMap::new(), Pff::FIVE_EIGHTHS, 0).unwrap_err();
        assert!(err.to_string().contains("missing checkpoint"));
    }
}
