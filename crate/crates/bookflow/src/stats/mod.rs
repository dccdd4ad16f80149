//! Empirical distributions and the order flow statistics built on them.
//!
//! Density estimation is histogram-based only: log-spaced bins for broadly
//! distributed durations, unit-tick bins for spreads, plain linear bins
//! otherwise. Every distribution exports a plottable two-column CSV.

mod two_sample;

pub use two_sample::{
    cvm_two_sample, ks_one_sample, ks_two_sample, wilcoxon_mw, Direction, RankTestReport,
    TestReport,
};

use std::io::Write;

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample contains values that cannot be ordered (NaN)")]
    NotComparable,
    #[error("log binning requires strictly positive samples")]
    NonPositiveSample,
    #[error("binning needs at least one bin")]
    NoBins,
    #[error("series must be ordered by time")]
    UnorderedSeries,
    #[error("not enough data: {0}")]
    NotEnoughData(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Histogram binning rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// Equal-width bins spanning the sample range.
    Linear { bins: usize },
    /// Log-spaced bins spanning the sample range; samples must be positive.
    Log { bins: usize },
    /// Unit-width bins centred on integers (for tick-valued samples).
    UnitWidth,
}

/// Normalized histogram density: `sum(density * width) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPdf<F> {
    edges: Vec<F>,
    density: Vec<F>,
    count: usize,
}

impl<F: Scalar> EmpiricalPdf<F> {
    pub fn edges(&self) -> &[F] {
        &self.edges
    }

    pub fn density(&self) -> &[F] {
        &self.density
    }

    pub fn sample_count(&self) -> usize {
        self.count
    }

    pub fn bin_count(&self) -> usize {
        self.density.len()
    }

    /// Integral of the density over all bins; 1 up to rounding.
    pub fn integral(&self) -> F {
        let mut total = F::zero();
        for (i, d) in self.density.iter().enumerate() {
            total += *d * (self.edges[i + 1] - self.edges[i]);
        }
        total
    }

    /// Probability mass at sample values strictly below `x`, interpolating
    /// within the bin containing `x`.
    pub fn mass_below(&self, x: F) -> F {
        let mut total = F::zero();
        for (i, d) in self.density.iter().enumerate() {
            let (lo, hi) = (self.edges[i], self.edges[i + 1]);
            if x >= hi {
                total += *d * (hi - lo);
            } else if x > lo {
                total += *d * (x - lo);
            } else {
                break;
            }
        }
        total
    }

    /// Two-column CSV `x,density` with x at bin centres.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,density")?;
        for (i, d) in self.density.iter().enumerate() {
            let centre = (self.edges[i] + self.edges[i + 1]) / F::of(2.0);
            writeln!(
                w,
                "{:.9},{:.9e}",
                centre.to_f64().unwrap(),
                d.to_f64().unwrap()
            )?;
        }
        Ok(())
    }
}

/// Histogram density of `samples` under the given binning rule.
pub fn empirical_pdf<F: Scalar>(samples: &[F], binning: Binning) -> Result<EmpiricalPdf<F>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(StatsError::NotComparable);
    }
    let min = samples.iter().copied().fold(F::infinity(), F::min);
    let max = samples.iter().copied().fold(F::neg_infinity(), F::max);

    let edges: Vec<F> = match binning {
        Binning::Linear { bins } => {
            if bins == 0 {
                return Err(StatsError::NoBins);
            }
            if min == max {
                vec![min - F::of(0.5), min + F::of(0.5)]
            } else {
                let width = (max - min) / F::from_usize(bins).unwrap();
                (0..=bins)
                    .map(|i| min + width * F::from_usize(i).unwrap())
                    .collect()
            }
        }
        Binning::Log { bins } => {
            if bins == 0 {
                return Err(StatsError::NoBins);
            }
            if !(min > F::zero()) {
                return Err(StatsError::NonPositiveSample);
            }
            if min == max {
                vec![min - F::of(0.5) * min, min + F::of(0.5) * min]
            } else {
                let log_min = min.ln();
                let log_step = (max.ln() - log_min) / F::from_usize(bins).unwrap();
                (0..=bins)
                    .map(|i| (log_min + log_step * F::from_usize(i).unwrap()).exp())
                    .collect()
            }
        }
        Binning::UnitWidth => {
            let lo = min.round().to_i64().unwrap();
            let hi = max.round().to_i64().unwrap();
            (lo..=hi + 1)
                .map(|k| F::from_i64(k).unwrap() - F::of(0.5))
                .collect()
        }
    };

    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for sample in samples {
        // rightmost bin is closed so max lands inside
        let mut idx = bins - 1;
        for i in 0..bins {
            if *sample < edges[i + 1] {
                idx = i;
                break;
            }
        }
        counts[idx] += 1;
    }

    let n = F::from_usize(samples.len()).unwrap();
    let density = counts
        .iter()
        .enumerate()
        .map(|(i, c)| F::from_usize(*c).unwrap() / (n * (edges[i + 1] - edges[i])))
        .collect();
    Ok(EmpiricalPdf {
        edges,
        density,
        count: samples.len(),
    })
}

/// Discrete distribution over integer-valued observations (spreads in
/// ticks), with arbitrary non-negative weights per observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedDistribution {
    masses: std::collections::BTreeMap<i64, f64>,
    total: f64,
}

impl WeightedDistribution {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (i64, f64)>) -> Self {
        let mut masses = std::collections::BTreeMap::new();
        let mut total = 0.0;
        for (value, weight) in pairs {
            debug_assert!(weight >= 0.0, "weights must be non-negative");
            *masses.entry(value).or_insert(0.0) += weight;
            total += weight;
        }
        Self { masses, total }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0.0
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    /// Normalized mass at exactly `value`.
    pub fn mass_of(&self, value: i64) -> f64 {
        self.masses.get(&value).copied().unwrap_or(0.0) / self.total
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses.iter().map(move |(v, w)| (*v, *w / self.total))
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(v, m)| v as f64 * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.support()
            .map(|(v, m)| (v as f64 - mean).powi(2) * m)
            .sum()
    }

    /// Smallest value whose cumulative normalized mass reaches `q`.
    pub fn quantile(&self, q: f64) -> i64 {
        let mut acc = 0.0;
        let mut last = 0;
        for (value, mass) in self.support() {
            acc += mass;
            last = value;
            if acc >= q {
                return value;
            }
        }
        last
    }

    pub fn median(&self) -> i64 {
        self.quantile(0.5)
    }

    pub fn mass_at_or_below(&self, value: i64) -> f64 {
        self.support()
            .take_while(|(v, _)| *v <= value)
            .map(|(_, m)| m)
            .sum()
    }

    pub fn mass_above(&self, value: i64) -> f64 {
        1.0 - self.mass_at_or_below(value)
    }

    /// Two-column CSV `x,weight` with normalized weights.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,weight")?;
        for (value, mass) in self.support() {
            writeln!(w, "{value},{mass:.9e}")?;
        }
        Ok(())
    }
}

/// Spread distribution in physical time and in event time.
///
/// Each observation `(t_i, s_i)` of the series holds until the next event,
/// so its physical-time weight is `t_{i+1} - t_i` (the last one runs to
/// `end_time`); the event-time counterpart weights every observation
/// equally.
pub fn time_weighted_spread(
    series: &[(f64, i64)],
    end_time: f64,
) -> Result<(WeightedDistribution, WeightedDistribution), StatsError> {
    if series.len() < 2 {
        return Err(StatsError::NotEnoughData(
            "time weighting needs at least two observations".into(),
        ));
    }
    if series.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(StatsError::UnorderedSeries);
    }
    if end_time < series.last().unwrap().0 {
        return Err(StatsError::NotEnoughData(
            "end time precedes the last observation".into(),
        ));
    }
    let weighted = WeightedDistribution::from_pairs(series.iter().enumerate().map(|(i, (t, s))| {
        let next = series.get(i + 1).map_or(end_time, |(u, _)| *u);
        (*s, next - *t)
    }));
    let event = WeightedDistribution::from_pairs(series.iter().map(|(_, s)| (*s, 1.0)));
    Ok((weighted, event))
}

/// Mean waiting time until the next event, conditional on the tercile of
/// the current spread value.
///
/// Boundaries are the empirical 1/3 and 2/3 quantiles of the observed
/// spreads; intervals are closed below, ties go to the lower tercile. An
/// empty tercile (possible under heavy ties) reports NaN.
pub fn conditional_waiting_time(series: &[(f64, i64)]) -> Result<[f64; 3], StatsError> {
    if series.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(StatsError::UnorderedSeries);
    }
    if series.len() < 2 {
        return Err(StatsError::NotEnoughData(
            "waiting times need at least two observations".into(),
        ));
    }
    // observations that have a next event
    let observed: Vec<(i64, f64)> = series
        .windows(2)
        .map(|w| (w[0].1, w[1].0 - w[0].0))
        .collect();
    let mut values: Vec<i64> = observed.iter().map(|(s, _)| *s).collect();
    values.sort_unstable();
    values.dedup();
    if values.len() < 3 {
        return Err(StatsError::NotEnoughData(
            "terciles need at least three distinct spread values".into(),
        ));
    }

    let mut spreads: Vec<i64> = observed.iter().map(|(s, _)| *s).collect();
    spreads.sort_unstable();
    let quantile = |p: f64| -> i64 {
        let rank = (p * spreads.len() as f64).ceil().max(1.0) as usize;
        spreads[rank - 1]
    };
    let q1 = quantile(1.0 / 3.0);
    let q2 = quantile(2.0 / 3.0);

    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (spread, wait) in observed {
        let tercile = if spread <= q1 {
            0
        } else if spread <= q2 {
            1
        } else {
            2
        };
        sums[tercile] += wait;
        counts[tercile] += 1;
    }
    Ok([0, 1, 2].map(|i| {
        if counts[i] == 0 {
            f64::NAN
        } else {
            sums[i] / counts[i] as f64
        }
    }))
}

/// First differences of the mid price sampled on a regular grid with
/// previous-tick interpolation (last value at or before each grid point).
/// The grid starts at the first observation.
pub fn mid_price_variations(
    series: &[(f64, f64)],
    interval: f64,
) -> Result<Vec<f64>, StatsError> {
    if series.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if !(interval > 0.0) {
        return Err(StatsError::NotEnoughData("sampling interval must be positive".into()));
    }
    if series.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(StatsError::UnorderedSeries);
    }
    let t0 = series[0].0;
    let t_end = series.last().unwrap().0;
    let points = ((t_end - t0) / interval).floor() as usize + 1;
    if points < 2 {
        return Err(StatsError::NotEnoughData(format!(
            "series spans {:.3}s, need at least two grid points {interval}s apart",
            t_end - t0
        )));
    }

    let mut sampled = Vec::with_capacity(points);
    let mut idx = 0usize;
    for k in 0..points {
        let grid = t0 + k as f64 * interval;
        while idx + 1 < series.len() && series[idx + 1].0 <= grid {
            idx += 1;
        }
        sampled.push(series[idx].1);
    }
    Ok(sampled.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Writes a generic two-column CSV.
pub fn write_two_column_csv<W: Write>(
    mut w: W,
    header: (&str, &str),
    rows: impl IntoIterator<Item = (f64, f64)>,
) -> std::io::Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (x, y) in rows {
        writeln!(w, "{x:.9},{y:.9e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pdf_of_identical_samples_is_one_over_width() {
        let pdf = empirical_pdf(&[2.5_f64; 20], Binning::Linear { bins: 8 }).unwrap();
        assert_eq!(pdf.bin_count(), 1);
        let width = pdf.edges()[1] - pdf.edges()[0];
        assert_relative_eq!(pdf.density()[0], 1.0 / width);
        assert_relative_eq!(pdf.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pdf_normalizes_for_each_binning() {
        let samples: Vec<f64> = (1..500).map(|i| (i as f64 * 0.37).sin().abs() + 0.01).collect();
        for binning in [
            Binning::Linear { bins: 40 },
            Binning::Log { bins: 25 },
            Binning::UnitWidth,
        ] {
            let pdf = empirical_pdf(&samples, binning).unwrap();
            assert_relative_eq!(pdf.integral(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn pdf_mass_below_splits_bins() {
        let samples = [0.0, 1.0, 2.0, 3.0];
        let pdf = empirical_pdf(&samples, Binning::Linear { bins: 3 }).unwrap();
        assert_relative_eq!(pdf.mass_below(0.0), 0.0);
        assert_relative_eq!(pdf.mass_below(3.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(pdf.mass_below(1.5), pdf.mass_below(1.0) + 0.125);
    }

    #[test]
    fn pdf_rejects_bad_input() {
        let empty: [f64; 0] = [];
        assert!(empirical_pdf(&empty, Binning::UnitWidth).is_err());
        assert!(empirical_pdf(&[0.0, 1.0], Binning::Log { bins: 4 }).is_err());
        assert!(empirical_pdf(&[1.0], Binning::Linear { bins: 0 }).is_err());
    }

    #[test]
    fn exponential_samples_match_the_closed_form_density() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Exp};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(16);
        let exp = Exp::new(1.0).unwrap();
        let n = 1_000_000usize;
        let samples: Vec<f64> = (0..n).map(|_| exp.sample(&mut rng)).collect();
        let pdf = empirical_pdf(&samples, Binning::Log { bins: 40 }).unwrap();
        // each bin count is Poisson; compare to the closed-form bin mass
        // within 3 sigma (seeded, so deterministic)
        for i in 0..pdf.bin_count() {
            let (lo, hi) = (pdf.edges()[i], pdf.edges()[i + 1]);
            let expected_mass = (-lo).exp() - (-hi).exp();
            let observed_mass = pdf.density()[i] * (hi - lo);
            let sigma = (expected_mass * (1.0 - expected_mass) / n as f64).sqrt();
            assert!(
                (observed_mass - expected_mass).abs() <= 3.0 * sigma + 1e-12,
                "bin {i}: observed {observed_mass:.3e}, expected {expected_mass:.3e}"
            );
        }
    }

    #[test]
    fn weighted_spread_example() {
        // spread 1 held 9s, then spread 5 held 1s
        let series = [(0.0, 1), (9.0, 5)];
        let (weighted, event) = time_weighted_spread(&series, 10.0).unwrap();
        assert_relative_eq!(weighted.mass_of(1), 0.9);
        assert_relative_eq!(weighted.mass_of(5), 0.1);
        assert_relative_eq!(event.mass_of(1), 0.5);
        assert_relative_eq!(event.mass_of(5), 0.5);
    }

    #[test]
    fn constant_spread_is_a_point_mass() {
        let series = [(0.0, 3), (1.0, 3), (5.0, 3)];
        let (weighted, event) = time_weighted_spread(&series, 6.0).unwrap();
        assert_relative_eq!(weighted.mass_of(3), 1.0);
        assert_relative_eq!(event.mass_of(3), 1.0);
    }

    #[test]
    fn equal_holding_times_make_both_clocks_agree() {
        let series: Vec<(f64, i64)> = (0..50).map(|i| (i as f64, (i % 7) as i64)).collect();
        let (weighted, event) = time_weighted_spread(&series, 50.0).unwrap();
        for value in 0..7 {
            assert_relative_eq!(weighted.mass_of(value), event.mass_of(value), epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_spread_needs_two_points() {
        assert!(time_weighted_spread(&[(0.0, 1)], 5.0).is_err());
    }

    #[test]
    fn weighted_distribution_moments() {
        let dist = WeightedDistribution::from_pairs([(1, 1.0), (3, 1.0)]);
        assert_relative_eq!(dist.mean(), 2.0);
        assert_relative_eq!(dist.variance(), 1.0);
        assert_eq!(dist.median(), 1);
        assert_relative_eq!(dist.mass_above(1), 0.5);
        assert_relative_eq!(dist.mass_at_or_below(3), 1.0);
    }

    #[test]
    fn waiting_time_constant_gap_is_flat_across_terciles() {
        let series: Vec<(f64, i64)> = (0..60).map(|i| (i as f64 * 0.5, (i % 9) as i64)).collect();
        let waits = conditional_waiting_time(&series).unwrap();
        for w in waits {
            assert_relative_eq!(w, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn waiting_time_reproduces_the_synthetic_contrast() {
        // small spreads (1) wait 0.32s, large spreads (9) wait 0.2s,
        // mid spreads (5) wait 0.26s
        let mut series = Vec::new();
        let mut t = 0.0;
        for _ in 0..40 {
            for (spread, wait) in [(1, 0.32), (5, 0.26), (9, 0.2)] {
                series.push((t, spread));
                t += wait;
            }
        }
        series.push((t, 1));
        let waits = conditional_waiting_time(&series).unwrap();
        assert_relative_eq!(waits[0], 0.32, epsilon = 1e-9);
        assert_relative_eq!(waits[1], 0.26, epsilon = 1e-9);
        assert_relative_eq!(waits[2], 0.2, epsilon = 1e-9);
    }

    #[test]
    fn waiting_time_needs_three_distinct_values() {
        let series = [(0.0, 1), (1.0, 2), (2.0, 1), (3.0, 2)];
        assert!(conditional_waiting_time(&series).is_err());
    }

    #[test]
    fn mid_variations_constant_series_is_zero() {
        let series: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 20.0, 100.0)).collect();
        let vars = mid_price_variations(&series, 30.0).unwrap();
        assert_eq!(vars.len(), 6);
        assert!(vars.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mid_variations_step_per_interval() {
        // +1 tick exactly every 30s
        let series: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 30.0, 100.0 + i as f64)).collect();
        let vars = mid_price_variations(&series, 30.0).unwrap();
        assert_eq!(vars.len(), 19);
        assert!(vars.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn mid_variations_use_previous_tick_sampling() {
        let series = [(0.0, 100.0), (29.0, 101.0), (31.0, 102.0), (65.0, 104.0)];
        let vars = mid_price_variations(&series, 30.0).unwrap();
        // grid at 0, 30, 60 -> samples 100, 101, 102
        assert_eq!(vars, vec![1.0, 1.0]);
    }

    #[test]
    fn mid_variations_need_enough_span() {
        let series = [(0.0, 100.0), (10.0, 101.0)];
        assert!(mid_price_variations(&series, 30.0).is_err());
    }
}
