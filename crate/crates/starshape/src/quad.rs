//! Box quadrature for pairs of weighted indicators.
//!
//! Measure ratios compare two nested regions, so both integrands are
//! accumulated in a single pass: the callback maps a point to the weights of
//! the point in each set, zero outside. The midpoint rule serves the grid
//! path, a chunk-seeded Monte Carlo sweep the high-dimensional path. Both
//! fold partial sums in fixed chunk order, which keeps every result
//! independent of the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;

/// Two-sided 99 percent normal quantile.
pub const Z99: f64 = 2.5758293035489004;

const CHUNK: u64 = 1 << 16;

fn box_dims(lo: &[f64], hi: &[f64], h: f64) -> Result<Vec<u64>> {
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(Error::validation("box bounds must have matching nonzero length"));
    }
    if !(h > 0.0) || h.is_nan() {
        return Err(Error::validation("grid spacing must be positive"));
    }
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| {
            if !(b > a) {
                return Err(Error::validation("box must have positive extent on every axis"));
            }
            Ok(((b - a) / h).ceil() as u64)
        })
        .collect()
}

/// Midpoint-rule integrals of a weight pair over a uniform grid on the box.
///
/// Cells are cubes of side `h` except for the last partial layer per axis,
/// which is clipped to the box. Returns the two integrals and the cell count.
pub fn midpoint_pair(
    lo: &[f64],
    hi: &[f64],
    h: f64,
    f: &(dyn Fn(&[f64]) -> (f64, f64) + Sync),
) -> Result<(f64, f64, u64)> {
    let dims = box_dims(lo, hi, h)?;
    let d = dims.len();
    let total: u64 = dims.iter().product();
    if total == 0 {
        return Err(Error::validation("box degenerates to zero cells"));
    }
    // Per-axis cell widths: uniform h, with the final layer clipped.
    let widths: Vec<(f64, f64)> = dims
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&m, (&a, &b))| (h, b - a - (m - 1) as f64 * h))
        .collect();

    let chunks = total.div_ceil(CHUNK) as usize;
    let partials = exec::map(chunks, |c| {
        let start = c as u64 * CHUNK;
        let end = (start + CHUNK).min(total);
        let mut x = vec![0.0; d];
        let (mut sa, mut sb) = (0.0, 0.0);
        for flat in start..end {
            let mut rem = flat;
            let mut vol = 1.0;
            for k in 0..d {
                let i = rem % dims[k];
                rem /= dims[k];
                let w = if i + 1 == dims[k] { widths[k].1 } else { widths[k].0 };
                x[k] = lo[k] + i as f64 * h + 0.5 * w;
                vol *= w;
            }
            let (a, b) = f(&x);
            sa += vol * a;
            sb += vol * b;
        }
        (sa, sb)
    });
    let (mut sa, mut sb) = (0.0, 0.0);
    for (a, b) in partials {
        sa += a;
        sb += b;
    }
    Ok((sa, sb, total))
}

/// Monte Carlo pair sums with enough second moments for a ratio interval.
#[derive(Debug, Clone, Copy)]
pub struct McPair {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
    pub samples: u64,
    pub box_volume: f64,
}

impl McPair {
    /// Integral estimates over the box.
    pub fn integrals(&self) -> (f64, f64) {
        (self.mean_a * self.box_volume, self.mean_b * self.box_volume)
    }

    /// `mean_b / mean_a` with a 99 percent delta-method half width.
    pub fn ratio(&self) -> Result<(f64, f64)> {
        if !(self.mean_a > 0.0) {
            return Err(Error::structural(
                "denominator region has zero sampled measure; the ratio is undefined",
            ));
        }
        let r = self.mean_b / self.mean_a;
        let var = (self.var_b - 2.0 * r * self.cov_ab + r * r * self.var_a)
            / (self.samples as f64 * self.mean_a * self.mean_a);
        Ok((r, Z99 * var.max(0.0).sqrt()))
    }
}

/// Seeded Monte Carlo sweep over the box. Each 2^16-sample chunk draws from
/// its own counter-addressed stream of one ChaCha generator, so the sampled
/// points are a pure function of `seed` and the chunk index.
pub fn monte_carlo_pair(
    lo: &[f64],
    hi: &[f64],
    samples: u64,
    seed: u64,
    f: &(dyn Fn(&[f64]) -> (f64, f64) + Sync),
) -> Result<McPair> {
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(Error::validation("box bounds must have matching nonzero length"));
    }
    if samples == 0 {
        return Err(Error::validation("sample count must be positive"));
    }
    let d = lo.len();
    let mut box_volume = 1.0;
    for (&a, &b) in lo.iter().zip(hi) {
        if !(b > a) {
            return Err(Error::validation("box must have positive extent on every axis"));
        }
        box_volume *= b - a;
    }

    let chunks = samples.div_ceil(CHUNK) as usize;
    let partials = exec::map(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let start = c as u64 * CHUNK;
        let end = (start + CHUNK).min(samples);
        let mut x = vec![0.0; d];
        let (mut sa, mut sb, mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in start..end {
            for k in 0..d {
                x[k] = lo[k] + (hi[k] - lo[k]) * rng.gen::<f64>();
            }
            let (a, b) = f(&x);
            sa += a;
            sb += b;
            saa += a * a;
            sab += a * b;
            sbb += b * b;
        }
        (sa, sb, saa, sab, sbb)
    });
    let (mut sa, mut sb, mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in partials {
        sa += p.0;
        sb += p.1;
        saa += p.2;
        sab += p.3;
        sbb += p.4;
    }
    let n = samples as f64;
    let (ma, mb) = (sa / n, sb / n);
    Ok(McPair {
        mean_a: ma,
        mean_b: mb,
        var_a: (saa / n - ma * ma).max(0.0),
        var_b: (sbb / n - mb * mb).max(0.0),
        cov_ab: sab / n - ma * mb,
        samples,
        box_volume,
    })
}

/// Least-squares slope of `ln y` against `ln x`. Callers guarantee positive
/// coordinates and at least two distinct abscissae.
pub(crate) fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_reproduces_half_square_exactly() {
        let (a, b, cells) = midpoint_pair(&[0.0, 0.0], &[1.0, 1.0], 0.1, &|x| {
            (1.0, if x[0] < 0.5 { 1.0 } else { 0.0 })
        })
        .unwrap();
        assert_eq!(cells, 100);
        assert!((a - 1.0).abs() < 1e-14);
        assert!((b - 0.5).abs() < 1e-14);
    }

    #[test]
    fn midpoint_disk_area_converges() {
        let inside = |x: &[f64]| {
            let r = x[0] * x[0] + x[1] * x[1];
            (1.0, if r < 1.0 { 1.0 } else { 0.0 })
        };
        let (_, area, _) =
            midpoint_pair(&[-1.0, -1.0], &[1.0, 1.0], 0.005, &inside).unwrap();
        assert!((area - std::f64::consts::PI).abs() < 0.02, "area {area:.5}");
    }

    #[test]
    fn midpoint_ball_volume_in_three_dimensions() {
        let inside = |x: &[f64]| {
            let r: f64 = x.iter().map(|c| c * c).sum();
            (1.0, if r < 1.0 { 1.0 } else { 0.0 })
        };
        let (_, vol, cells) =
            midpoint_pair(&[-1.0; 3], &[1.0; 3], 0.02, &inside).unwrap();
        assert_eq!(cells, 1_000_000);
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!((vol - exact).abs() < 0.05, "volume {vol:.5}");
    }

    #[test]
    fn midpoint_handles_clipped_final_layer() {
        // Box side 1 with spacing 0.3 leaves a 0.1-wide final layer.
        let (a, _, cells) = midpoint_pair(&[0.0], &[1.0], 0.3, &|_| (1.0, 0.0)).unwrap();
        assert_eq!(cells, 4);
        assert!((a - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_disk_ratio_within_interval() {
        let inside = |x: &[f64]| {
            let r = x[0] * x[0] + x[1] * x[1];
            (1.0, if r < 1.0 { 1.0 } else { 0.0 })
        };
        let pair = monte_carlo_pair(&[-1.0, -1.0], &[1.0, 1.0], 200_000, 7, &inside).unwrap();
        let (ratio, half) = pair.ratio().unwrap();
        let exact = std::f64::consts::PI / 4.0;
        assert!((ratio - exact).abs() < 5.0 * half.max(1e-6), "ratio {ratio:.5} +- {half:.2e}");
    }

    #[test]
    fn monte_carlo_four_ball_volume() {
        let inside = |x: &[f64]| {
            let r: f64 = x.iter().map(|c| c * c).sum();
            (1.0, if r < 1.0 { 1.0 } else { 0.0 })
        };
        let pair = monte_carlo_pair(&[-1.0; 4], &[1.0; 4], 1_000_000, 11, &inside).unwrap();
        let (_, vol) = pair.integrals();
        let exact = std::f64::consts::PI * std::f64::consts::PI / 2.0;
        let (_, half) = pair.ratio().unwrap();
        assert!((vol - exact).abs() < 5.0 * half * pair.box_volume, "volume {vol:.4}");
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let f = |x: &[f64]| (1.0, if x[0] > 0.25 { 1.0 } else { 0.0 });
        let p1 = monte_carlo_pair(&[0.0, 0.0], &[1.0, 1.0], 100_000, 42, &f).unwrap();
        let p2 = monte_carlo_pair(&[0.0, 0.0], &[1.0, 1.0], 100_000, 42, &f).unwrap();
        assert_eq!(p1.mean_a.to_bits(), p2.mean_a.to_bits());
        assert_eq!(p1.mean_b.to_bits(), p2.mean_b.to_bits());
        let p3 = monte_carlo_pair(&[0.0, 0.0], &[1.0, 1.0], 100_000, 43, &f).unwrap();
        assert_ne!(p1.mean_b.to_bits(), p3.mean_b.to_bits());
    }

    #[test]
    fn ratio_rejects_empty_denominator() {
        let pair = monte_carlo_pair(&[0.0], &[1.0], 10_000, 1, &|_| (0.0, 0.0)).unwrap();
        assert!(pair.ratio().is_err());
    }
}
