//! Windowed structural similarity (SSIM) and ΔSSIM reporting.
//!
//! SSIM follows the classic windowed formulation: an 11×11 Gaussian
//! window (σ = 1.5) slides over every fully-interior position (no
//! padding), local means, variances and covariance are Gaussian
//! weighted, and the local map is averaged. Stabilizers use the
//! standard K1 = 0.01, K2 = 0.03 on a dynamic range of 255. Evaluation
//! happens on denormalized byte images so the score matches what would
//! be computed on saved files.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    /// Dynamic range of the pixel values.
    pub l: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            l: 255.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.l) * (self.k1 * self.l)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.l) * (self.k2 * self.l)
    }

    /// Normalized 2-D Gaussian window, row-major `window × window`.
    pub fn gaussian_window(&self) -> Vec<f64> {
        let w = self.window;
        let c = (w as f64 - 1.0) / 2.0;
        let mut win: Vec<f64> = (0..w * w)
            .map(|i| {
                let (r, col) = ((i / w) as f64, (i % w) as f64);
                (-((r - c).powi(2) + (col - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = win.iter().sum();
        win.iter_mut().for_each(|v| *v /= sum);
        win
    }

    fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.window == 0 || self.sigma <= 0.0 || self.l <= 0.0 {
            return Err(Error::Metric("invalid SSIM parameters".into()));
        }
        if width < self.window || height < self.window {
            return Err(Error::Metric(format!(
                "image {width}x{height} smaller than the {0}x{0} window",
                self.window
            )));
        }
        Ok(())
    }
}

/// SSIM between two byte images of identical geometry. Identical
/// inputs give exactly 1.0.
pub fn ssim(a: &[u8], b: &[u8], width: usize, height: usize, params: &SsimParams) -> Result<f64> {
    if a.len() != width * height || b.len() != a.len() {
        return Err(Error::Metric(format!(
            "image sizes {} / {} do not match {width}x{height}",
            a.len(),
            b.len()
        )));
    }
    params.validate(width, height)?;
    let w = params.window;
    let win = params.gaussian_window();
    let (c1, c2) = (params.c1(), params.c2());

    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=(height - w) {
        for left in 0..=(width - w) {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in 0..w {
                let row = (top + r) * width + left;
                let wrow = r * w;
                for col in 0..w {
                    let g = win[wrow + col];
                    let xv = f64::from(a[row + col]);
                    let yv = f64::from(b[row + col]);
                    sx += g * xv;
                    sy += g * yv;
                    sxx += g * (xv * xv);
                    syy += g * (yv * yv);
                    // Grouped so that swapping the images leaves the
                    // product bit-identical.
                    sxy += g * (xv * yv);
                }
            }
            let var_x = sxx - sx * sx;
            let var_y = syy - sy * sy;
            let cov = sxy - sx * sy;
            let numerator = (2.0 * (sx * sy) + c1) * (2.0 * cov + c2);
            let denominator = (sx * sx + sy * sy + c1) * (var_x + var_y + c2);
            total += numerator / denominator;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// One line of the experiment report.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub algorithm: String,
    pub dataset: String,
    pub ssim: f64,
    pub delta_ssim: f64,
    pub seed: u64,
    pub epochs: usize,
}

/// Fills in `delta_ssim = ssim(alg) - ssim(AE)` within each
/// `(dataset, seed)` run group. Every group must include an `AE`
/// baseline row, whose own delta is 0 by construction.
pub fn delta_ssim(rows: &mut [ReportRow]) -> Result<()> {
    let groups: Vec<(String, u64)> = {
        let mut g: Vec<(String, u64)> = rows.iter().map(|r| (r.dataset.clone(), r.seed)).collect();
        g.sort();
        g.dedup();
        g
    };
    for (ds, seed) in groups {
        let baseline = rows
            .iter()
            .find(|r| r.dataset == ds && r.seed == seed && r.algorithm == "AE")
            .map(|r| r.ssim)
            .ok_or_else(|| {
                Error::Metric(format!("dataset '{ds}' seed {seed} has no AE baseline row"))
            })?;
        for r in rows
            .iter_mut()
            .filter(|r| r.dataset == ds && r.seed == seed)
        {
            r.delta_ssim = r.ssim - baseline;
        }
    }
    Ok(())
}

/// Writes `algorithm,dataset,ssim,delta_ssim,seed,epochs` with metric
/// columns at five decimals.
pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut out = String::from("algorithm,dataset,ssim,delta_ssim,seed,epochs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.5},{:.5},{},{}\n",
            r.algorithm, r.dataset, r.ssim, r.delta_ssim, r.seed, r.epochs
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
