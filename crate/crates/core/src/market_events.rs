//! Price/volume anomaly detection over event windows.
//!
//! A window is P&D-shaped when some event day's average price and some
//! event day's volume both strictly exceed their baseline mean plus
//! `sigma_multiplier` population standard deviations, and the min-max
//! normalized rising region climbs no faster than `slope_threshold`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{EventWindow, OhlcvBar};
use crate::scalar::Scalar;

pub const DEFAULT_SIGMA_MULTIPLIER: f64 = 2.0;
pub const DEFAULT_SLOPE_THRESHOLD: f64 = 0.18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats<T> {
    pub bap: T,
    pub bav: T,
    pub sigma_price: T,
    pub sigma_volume: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVerdict<T> {
    pub price_anomaly: bool,
    pub volume_anomaly: bool,
    /// Present only when both anomalies hold.
    pub slope: Option<T>,
    pub is_pnd_shape: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyParams<T> {
    pub sigma_multiplier: T,
    pub slope_threshold: T,
}

impl<T: Scalar> Default for AnomalyParams<T> {
    fn default() -> Self {
        AnomalyParams {
            sigma_multiplier: T::of(DEFAULT_SIGMA_MULTIPLIER),
            slope_threshold: T::of(DEFAULT_SLOPE_THRESHOLD),
        }
    }
}

/// Daily average price: mean of open, high, low and close.
pub fn dap<T: Scalar>(bar: &OhlcvBar<T>) -> T {
    (bar.open + bar.high + bar.low + bar.close) / T::of(4.0)
}

fn mean_and_population_std<T: Scalar>(values: &[T]) -> (T, T) {
    let n = T::of_usize(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

pub fn baseline_stats<T: Scalar>(window: &EventWindow<T>) -> BaselineStats<T> {
    let daps: Vec<T> = window.baseline.iter().map(dap).collect();
    let volumes: Vec<T> = window.baseline.iter().map(|b| T::of(b.volume as f64)).collect();
    let (bap, sigma_price) = mean_and_population_std(&daps);
    let (bav, sigma_volume) = mean_and_population_std(&volumes);
    BaselineStats {
        bap,
        bav,
        sigma_price,
        sigma_volume,
    }
}

impl<T: Scalar> BaselineStats<T> {
    pub fn price_threshold(&self, sigma_multiplier: T) -> T {
        self.bap + sigma_multiplier * self.sigma_price
    }

    pub fn volume_threshold(&self, sigma_multiplier: T) -> T {
        self.bav + sigma_multiplier * self.sigma_volume
    }
}

/// Strict exceedance tests for price and volume. The returned verdict has
/// no slope and `is_pnd_shape == false`; see [`classify_window`].
pub fn detect_anomaly<T: Scalar>(
    window: &EventWindow<T>,
    stats: &BaselineStats<T>,
    sigma_multiplier: T,
) -> AnomalyVerdict<T> {
    let price_limit = stats.price_threshold(sigma_multiplier);
    let volume_limit = stats.volume_threshold(sigma_multiplier);
    AnomalyVerdict {
        price_anomaly: window.event.iter().any(|b| dap(b) > price_limit),
        volume_anomaly: window.event.iter().any(|b| T::of(b.volume as f64) > volume_limit),
        slope: None,
        is_pnd_shape: false,
    }
}

/// Event days from the first through the last occurrence of the maximum.
pub fn rising_region<T: Scalar>(event_prices: &[T]) -> &[T] {
    let Some(first) = event_prices.first() else {
        return event_prices;
    };
    let mut peak = 0;
    let mut best = *first;
    for (i, &p) in event_prices.iter().enumerate() {
        if p >= best {
            best = p;
            peak = i;
        }
    }
    &event_prices[..=peak]
}

/// Least-squares slope of the min-max normalized rising region, with day
/// indices also scaled to `[0, 1]`.
///
/// A flat region yields 0. When the peak falls on the first event day the
/// region is a single point; that is reported as a vertical rise, 1.0.
pub fn rising_slope<T: Scalar>(event_prices: &[T]) -> Result<T> {
    if event_prices.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: event_prices.len(),
        });
    }
    let region = rising_region(event_prices);
    if region.len() < 2 {
        return Ok(T::one());
    }
    let (lo, hi) = region
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    if hi <= lo {
        return Ok(T::zero());
    }
    let last = T::of_usize(region.len() - 1);
    let points: Vec<(T, T)> = region
        .iter()
        .enumerate()
        .map(|(i, &p)| (T::of_usize(i) / last, (p - lo) / (hi - lo)))
        .collect();
    let n = T::of_usize(points.len());
    let mx = points.iter().map(|p| p.0).sum::<T>() / n;
    let my = points.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = points.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: T = points.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Median of a list of slopes; the mean of the middle pair for even counts.
pub fn median_slope<T: Scalar>(slopes: &[T]) -> Result<T> {
    if slopes.is_empty() {
        return Err(Error::Empty("median of no slopes"));
    }
    let mut sorted = slopes.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / T::of(2.0)
    })
}

/// Full verdict: both anomalies plus a rising slope at or below the threshold.
pub fn classify_window<T: Scalar>(window: &EventWindow<T>, params: &AnomalyParams<T>) -> AnomalyVerdict<T> {
    let stats = baseline_stats(window);
    classify_with_stats(window, &stats, params)
}

pub fn classify_with_stats<T: Scalar>(
    window: &EventWindow<T>,
    stats: &BaselineStats<T>,
    params: &AnomalyParams<T>,
) -> AnomalyVerdict<T> {
    let mut verdict = detect_anomaly(window, stats, params.sigma_multiplier);
    if verdict.price_anomaly && verdict.volume_anomaly {
        let daps: Vec<T> = window.event.iter().map(dap).collect();
        // a single event day counts as a vertical rise
        let slope = rising_slope(&daps).unwrap_or_else(|_| T::one());
        verdict.slope = Some(slope);
        verdict.is_pnd_shape = slope <= params.slope_threshold;
    }
    verdict
}

/// Threshold calibration: median slope over windows that pass both
/// anomaly gates.
pub fn calibrate_slope_threshold<'a, T: Scalar>(
    windows: impl IntoIterator<Item = &'a EventWindow<T>>,
    sigma_multiplier: T,
) -> Result<T> {
    let params = AnomalyParams {
        sigma_multiplier,
        slope_threshold: T::infinity(),
    };
    let slopes: Vec<T> = windows
        .into_iter()
        .filter_map(|w| classify_window(w, &params).slope)
        .collect();
    median_slope(&slopes)
}

/// One row of the verdict report.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow<T> {
    pub post_id: String,
    pub symbol: String,
    pub stats: BaselineStats<T>,
    pub verdict: AnomalyVerdict<T>,
}

pub const VERDICT_HEADER: [&str; 10] = [
    "post_id",
    "symbol",
    "bap",
    "bav",
    "sigma_price",
    "sigma_volume",
    "price_anomaly",
    "volume_anomaly",
    "slope",
    "is_pnd_shape",
];

pub fn write_verdicts<T: Scalar, W: Write>(writer: W, rows: &[VerdictRow<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VERDICT_HEADER)?;
    for r in rows {
        w.write_record([
            r.post_id.clone(),
            r.symbol.clone(),
            r.stats.bap.to_string(),
            r.stats.bav.to_string(),
            r.stats.sigma_price.to_string(),
            r.stats.sigma_volume.to_string(),
            r.verdict.price_anomaly.to_string(),
            r.verdict.volume_anomaly.to_string(),
            r.verdict.slope.map(|s| s.to_string()).unwrap_or_default(),
            r.verdict.is_pnd_shape.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::next_business_day;
    use chrono::NaiveDate;

    fn bar(p: f64, volume: u64) -> (f64, u64) {
        (p, volume)
    }

    /// Window whose bars all have open = high = low = close = the given DAP.
    fn window(baseline: &[(f64, u64)], event: &[(f64, u64)]) -> EventWindow<f64> {
        let mut date = NaiveDate::from_ymd_opt(2020, 3, 2).unwrap();
        let mut mk = |&(p, v): &(f64, u64)| {
            let b = OhlcvBar::new(date, p, p, p, p, v).unwrap();
            date = next_business_day(date);
            b
        };
        let baseline = baseline.iter().map(&mut mk).collect();
        let event = event.iter().map(&mut mk).collect();
        EventWindow {
            symbol: "T".into(),
            post_ref: "p".into(),
            baseline,
            event,
        }
    }

    fn ohlc(o: f64, h: f64, l: f64, c: f64) -> OhlcvBar<f64> {
        OhlcvBar::new(NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(), o, h, l, c, 0).unwrap()
    }

    #[test]
    fn dap_examples() {
        assert_eq!(dap(&ohlc(1.0, 1.0, 1.0, 1.0)), 1.0);
        assert_eq!(dap(&ohlc(2.0, 4.0, 1.0, 3.0)), 2.5);
        assert!((dap(&ohlc(0.10, 0.14, 0.08, 0.12)) - 0.11).abs() < 1e-15);
    }

    #[test]
    fn flat_baseline_stats() {
        let w = window(&[bar(1.0, 100); 5], &[bar(1.0, 100)]);
        let s = baseline_stats(&w);
        assert_eq!(s, BaselineStats { bap: 1.0, bav: 100.0, sigma_price: 0.0, sigma_volume: 0.0 });
    }

    #[test]
    fn bap_of_one_through_five() {
        let base: Vec<_> = (1..=5).map(|p| bar(p as f64, 10)).collect();
        assert_eq!(baseline_stats(&window(&base, &[bar(1.0, 1)])).bap, 3.0);
    }

    #[test]
    fn zero_sigma_flags_any_strict_rise() {
        let w = window(&[bar(1.0, 100); 5], &[bar(1.2, 100)]);
        let v = detect_anomaly(&w, &baseline_stats(&w), 2.0);
        assert!(v.price_anomaly);
        assert!(!v.volume_anomaly);
        let flat = window(&[bar(1.0, 100); 5], &[bar(1.0, 100)]);
        assert!(!detect_anomaly(&flat, &baseline_stats(&flat), 2.0).price_anomaly);
    }

    #[test]
    fn two_sigma_threshold_hand_computed() {
        let base = [bar(1.0, 1), bar(1.1, 1), bar(0.9, 1), bar(1.0, 1), bar(1.0, 1)];
        let w = window(&base, &[bar(1.2, 1)]);
        let s = baseline_stats(&w);
        // population variance = (0.01 + 0.01) / 5 = 0.004
        assert!((s.bap - 1.0).abs() < 1e-12);
        assert!((s.sigma_price - 0.004_f64.sqrt()).abs() < 1e-12);
        assert!((s.price_threshold(2.0) - 1.126_491_106_4).abs() < 1e-9);
        assert!(detect_anomaly(&w, &s, 2.0).price_anomaly);
        let below = window(&base, &[bar(1.12, 1)]);
        assert!(!detect_anomaly(&below, &s, 2.0).price_anomaly);
    }

    #[test]
    fn slope_examples() {
        assert!((rising_slope::<f64>(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((rising_slope::<f64>(&[0.5, 0.6, 0.7]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rising_slope(&[1.0, 1.5]).unwrap(), 1.0);
        assert_eq!(rising_slope(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(rising_slope::<f64>(&[1.0]).is_err());
        assert_eq!(rising_slope(&[3.0, 1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn convex_ramp_matches_closed_form() {
        // Hand-normalized: x = (0, 1/3, 2/3, 1), y = (0, 0.1, 0.3, 1).
        // slope = sum((x - 1/2) y) / sum((x - 1/2)^2) = (8/15) / (5/9) = 0.96
        let s = rising_slope::<f64>(&[1.0, 1.1, 1.3, 2.0]).unwrap();
        assert!((s - 0.96).abs() < 1e-12, "{s}");
    }

    #[test]
    fn rising_region_stops_at_peak() {
        assert_eq!(rising_region(&[1.0, 3.0, 2.0, 1.0]), &[1.0, 3.0]);
        assert_eq!(rising_region(&[1.0, 3.0, 3.0, 1.0]), &[1.0, 3.0, 3.0]);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_slope(&[0.18]).unwrap(), 0.18);
        assert_eq!(median_slope(&[0.3, 0.1, 0.2]).unwrap(), 0.2);
        assert_eq!(median_slope(&[0.4, 0.1, 0.2, 0.3]).unwrap(), 0.25);
        assert!(median_slope::<f64>(&[]).is_err());
    }

    fn params(threshold: f64) -> AnomalyParams<f64> {
        AnomalyParams { sigma_multiplier: 2.0, slope_threshold: threshold }
    }

    #[test]
    fn gentle_rise_is_pnd_and_steep_is_not() {
        // region (1.95, 1.5, 2.0) normalizes to (0.9, 0, 1): slope 0.1
        let gentle = window(&[bar(1.0, 100); 5], &[bar(1.95, 900), bar(1.5, 900), bar(2.0, 900), bar(1.2, 500)]);
        let v = classify_window(&gentle, &params(0.18));
        assert!((v.slope.unwrap() - 0.1).abs() < 1e-12);
        assert!(v.is_pnd_shape);

        let steep = window(&[bar(1.0, 100); 5], &[bar(1.2, 900), bar(2.0, 900), bar(1.1, 500)]);
        let v = classify_window(&steep, &params(0.18));
        assert_eq!(v.slope, Some(1.0));
        assert!(!v.is_pnd_shape);
        assert!(classify_window(&steep, &params(1.0)).is_pnd_shape);
    }

    #[test]
    fn missing_volume_anomaly_is_never_pnd() {
        let w = window(&[bar(1.0, 100); 5], &[bar(1.95, 100), bar(1.5, 100), bar(2.0, 100)]);
        let v = classify_window(&w, &params(10.0));
        assert!(v.price_anomaly && !v.volume_anomaly);
        assert_eq!(v.slope, None);
        assert!(!v.is_pnd_shape);
    }

    #[test]
    fn verdict_report_columns() {
        let w = window(&[bar(1.0, 100); 5], &[bar(1.0, 100)]);
        let stats = baseline_stats(&w);
        let rows = vec![VerdictRow {
            post_id: "p1".into(),
            symbol: "T".into(),
            stats,
            verdict: classify_with_stats(&w, &stats, &params(0.18)),
        }];
        let mut buf = Vec::new();
        write_verdicts(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "post_id,symbol,bap,bav,sigma_price,sigma_volume,price_anomaly,volume_anomaly,slope,is_pnd_shape\n\
             p1,T,1,100,0,0,false,false,,false\n"
        );
    }
}
