use std::io::Write;

use serde::Serialize;

use crate::ring::{RingPoly, Torus};

/// Signed torus noise of each expected value: `phase[pos] − v/p`.
pub fn packed_noise(phase: &RingPoly, positions: &[usize], expected: &[i64], p_bits: u32) -> Vec<f64> {
    positions
        .iter()
        .zip(expected)
        .map(|(&pos, &v)| (phase.coeffs()[pos] - Torus::from_message(v, p_bits)).to_f64())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
}

/// Binned noise over `[−1/(2p), 1/(2p)]`; samples outside land in
/// `violations` rather than in a bin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseReport {
    pub p_bits: u32,
    pub samples: u64,
    pub violations: u64,
    /// `max |noise| · 2p`; below 1 means every sample decodes correctly.
    pub max_scaled: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub bins: Vec<HistogramBin>,
}

impl NoiseReport {
    pub fn bound(&self) -> f64 {
        1.0 / (2.0 * (1u64 << self.p_bits) as f64)
    }
}

pub fn noise_histogram(noise: &[f64], p_bits: u32, bins: usize) -> NoiseReport {
    let bins = bins.max(1);
    let bound = 1.0 / (2.0 * (1u64 << p_bits) as f64);
    let width = 2.0 * bound / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut violations = 0;
    let mut max_abs = 0.0f64;
    for &x in noise {
        max_abs = max_abs.max(x.abs());
        if x.abs() >= bound {
            violations += 1;
            continue;
        }
        let k = (((x + bound) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = noise.len() as f64;
    let mean = if noise.is_empty() { 0.0 } else { noise.iter().sum::<f64>() / n };
    let std_dev =
        if noise.len() < 2 { 0.0 } else { (noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    NoiseReport {
        p_bits,
        samples: noise.len() as u64,
        violations,
        max_scaled: max_abs / bound,
        mean,
        std_dev,
        bins: counts
            .into_iter()
            .enumerate()
            .map(|(k, count)| HistogramBin {
                bin_left: -bound + k as f64 * width,
                bin_right: -bound + (k + 1) as f64 * width,
                count,
            })
            .collect(),
    }
}

/// CSV with header `bin_left,bin_right,count`.
pub fn write_histogram_csv(report: &NoiseReport, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in &report.bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::RingParams;

    #[test]
    fn noiseless_is_zero() {
        let params = RingParams::new(3, 2).unwrap();
        let vals = [3i64, -1, 0, 7, 2, -8];
        let poly = RingPoly::from_messages(&params, &vals, 4).unwrap();
        let noise = packed_noise(&poly, &[0, 1, 2, 3, 4, 5], &vals, 4);
        assert!(noise.iter().all(|&x| x == 0.0));
        let r = noise_histogram(&noise, 4, 8);
        assert_eq!(r.violations, 0);
        assert_eq!(r.max_scaled, 0.0);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<u64>(), 6);
        // zero sits at the left edge of the middle bin
        assert_eq!(r.bins[4].count, 6);
    }

    #[test]
    fn bins_and_violations() {
        let bound = 1.0 / 32.0;
        let xs = [-bound * 0.99, -bound * 0.01, bound * 0.5, bound * 0.99, bound, -bound * 1.5];
        let r = noise_histogram(&xs, 4, 4);
        assert_eq!(r.violations, 2);
        assert_eq!(r.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 1, 0, 2]);
        assert!((r.max_scaled - 1.5).abs() < 1e-12);
        assert_eq!(r.bins[0].bin_left, -bound);
        assert_eq!(r.bins[3].bin_right, bound);
        let mut buf = Vec::new();
        write_histogram_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bin_left,bin_right,count");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].ends_with(",2"));
    }
}
