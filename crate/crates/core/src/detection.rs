//! Gate-level counting: singles, same-gate coincidences, and delayed-gate
//! accidentals, plus the reduction to a [`CountingResult`].
//!
//! Streams may be tallied in chunks and merged; [`GateTally::merge`] restores
//! the delayed pairs that straddle a chunk boundary, so the merged tally is
//! identical to tallying the concatenated stream in one pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw counts from a pair of gated click streams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateStreamSummary {
    pub n_gates: u64,
    pub singles_s: u64,
    pub singles_i: u64,
    pub coincidences_raw: u64,
    /// Signal at gate `g` with idler at gate `g + offset`, summed over all
    /// configured offsets (no wrap-around).
    pub accidentals_delayed: u64,
    /// Number of gate offsets the accidental count is summed over.
    pub accidental_offsets: u32,
}

impl GateStreamSummary {
    pub fn check_invariants(&self) -> bool {
        self.coincidences_raw <= self.singles_s.min(self.singles_i)
            && self.singles_s <= self.n_gates
            && self.singles_i <= self.n_gates
            && self.accidentals_delayed
                <= self.n_gates.saturating_mul(u64::from(self.accidental_offsets.max(1)))
    }
}

/// Net coincidences and CAR over one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingResult {
    pub c_raw: u64,
    /// Accidentals per offset (an integer count for the default single offset).
    pub a: f64,
    /// `c_raw - a`.
    pub c_net: f64,
    /// `c_net / a`; `None` when there are no accidentals.
    pub car: Option<f64>,
    pub car_sigma: Option<f64>,
    pub duration_s: f64,
}

/// Tallies two equal-length click streams with the default single +1 offset.
pub fn count_coincidences(stream_s: &[bool], stream_i: &[bool]) -> Result<GateStreamSummary> {
    count_coincidences_with_offsets(stream_s, stream_i, 1)
}

/// Tallies two streams, summing delayed accidentals over offsets `1..=offsets`.
pub fn count_coincidences_with_offsets(
    stream_s: &[bool],
    stream_i: &[bool],
    offsets: u32,
) -> Result<GateStreamSummary> {
    Ok(GateTally::from_streams(stream_s, stream_i, offsets)?.summary)
}

/// A chunk's summary plus the boundary gates needed to merge delayed pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateTally {
    pub summary: GateStreamSummary,
    /// Idler clicks of the first `min(offsets, n_gates)` gates.
    head_idler: Vec<bool>,
    /// Signal clicks of the last `min(offsets, n_gates)` gates.
    tail_signal: Vec<bool>,
}

impl GateTally {
    pub fn empty(offsets: u32) -> Self {
        Self {
            summary: GateStreamSummary {
                accidental_offsets: offsets.max(1),
                ..Default::default()
            },
            head_idler: Vec::new(),
            tail_signal: Vec::new(),
        }
    }

    pub fn from_streams(stream_s: &[bool], stream_i: &[bool], offsets: u32) -> Result<Self> {
        if stream_s.len() != stream_i.len() {
            return Err(Error::LengthMismatch {
                signal: stream_s.len(),
                idler: stream_i.len(),
            });
        }
        let offsets = offsets.max(1);
        let n = stream_s.len();
        let mut summary = GateStreamSummary {
            n_gates: n as u64,
            accidental_offsets: offsets,
            ..Default::default()
        };
        for (&s, &i) in stream_s.iter().zip(stream_i) {
            summary.singles_s += u64::from(s);
            summary.singles_i += u64::from(i);
            summary.coincidences_raw += u64::from(s && i);
        }
        for off in 1..=offsets as usize {
            if off >= n {
                break;
            }
            summary.accidentals_delayed += stream_s[..n - off]
                .iter()
                .zip(&stream_i[off..])
                .filter(|(&s, &i)| s && i)
                .count() as u64;
        }
        let k = (offsets as usize).min(n);
        Ok(Self {
            summary,
            head_idler: stream_i[..k].to_vec(),
            tail_signal: stream_s[n - k..].to_vec(),
        })
    }

    /// Concatenates `self` (earlier gates) with `next` (later gates).
    pub fn merge(self, next: GateTally) -> GateTally {
        let offsets = self.summary.accidental_offsets;
        debug_assert_eq!(offsets, next.summary.accidental_offsets);
        let k = offsets as usize;
        let left_len = self.summary.n_gates as usize;

        // Cross pairs: signal at left gate g, idler at right gate h, with
        // (left_len - g) + h in 1..=offsets.
        let tail_start = left_len - self.tail_signal.len();
        let mut cross = 0u64;
        for (ti, &s) in self.tail_signal.iter().enumerate() {
            if !s {
                continue;
            }
            let dist_to_end = left_len - (tail_start + ti);
            for (h, &i) in next.head_idler.iter().enumerate() {
                if i && dist_to_end + h <= k {
                    cross += 1;
                }
            }
        }

        let mut head_idler = self.head_idler;
        if head_idler.len() < k {
            let need = k - head_idler.len();
            head_idler.extend(next.head_idler.iter().take(need));
        }
        let mut tail_signal = next.tail_signal;
        if tail_signal.len() < k {
            let need = (k - tail_signal.len()).min(self.tail_signal.len());
            let mut joined = self.tail_signal[self.tail_signal.len() - need..].to_vec();
            joined.extend(tail_signal);
            tail_signal = joined;
        }

        let a = self.summary;
        let b = next.summary;
        GateTally {
            summary: GateStreamSummary {
                n_gates: a.n_gates + b.n_gates,
                singles_s: a.singles_s + b.singles_s,
                singles_i: a.singles_i + b.singles_i,
                coincidences_raw: a.coincidences_raw + b.coincidences_raw,
                accidentals_delayed: a.accidentals_delayed + b.accidentals_delayed + cross,
                accidental_offsets: offsets,
            },
            head_idler,
            tail_signal,
        }
    }
}

/// Reduces raw counts to net coincidences and CAR.
///
/// With `c_raw` and `A` independent Poisson variables, first-order error
/// propagation of `CAR = c_raw / A - 1` gives
/// `σ² = (c_raw + A (CAR + 1)²) / A²`; when `A` is averaged over `k`
/// offsets its variance is `A / k`.
pub fn summarize(summary: &GateStreamSummary, rep_rate_hz: f64) -> CountingResult {
    let k = f64::from(summary.accidental_offsets.max(1));
    let c_raw = summary.coincidences_raw;
    let a = summary.accidentals_delayed as f64 / k;
    let c_net = c_raw as f64 - a;
    let (car, car_sigma) = if a > 0.0 {
        let car = c_net / a;
        let c = c_raw as f64;
        let var = c / (a * a) + c * c * (a / k) / a.powi(4);
        (Some(car), Some(var.sqrt()))
    } else {
        (None, None)
    };
    CountingResult {
        c_raw,
        a,
        c_net,
        car,
        car_sigma,
        duration_s: summary.n_gates as f64 / rep_rate_hz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b != 0).collect()
    }

    #[test]
    fn hand_countable_example() {
        let s = count_coincidences(&bits(&[1, 0, 1]), &bits(&[1, 1, 0])).unwrap();
        assert_eq!(s.coincidences_raw, 1);
        assert_eq!(s.accidentals_delayed, 1);
        assert_eq!(s.singles_s, 2);
        assert_eq!(s.singles_i, 2);
        assert!(s.check_invariants());
    }

    #[test]
    fn zero_streams() {
        let z = vec![false; 17];
        let s = count_coincidences(&z, &z).unwrap();
        assert_eq!(
            (s.singles_s, s.singles_i, s.coincidences_raw, s.accidentals_delayed),
            (0, 0, 0, 0)
        );
        assert_eq!(s.n_gates, 17);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            count_coincidences(&[true], &[true, false]),
            Err(Error::LengthMismatch { signal: 1, idler: 2 })
        );
    }

    #[test]
    fn summarize_examples() {
        let sum = GateStreamSummary {
            n_gates: 1_500_000_000,
            singles_s: 200_000,
            singles_i: 200_000,
            coincidences_raw: 413,
            accidentals_delayed: 30,
            accidental_offsets: 1,
        };
        let r = summarize(&sum, 5e6);
        assert_eq!(r.c_net, 383.0);
        assert!((r.car.unwrap() - 12.77).abs() < 0.005);
        assert!((r.duration_s - 300.0).abs() < 1e-9);
        let expected_sigma = ((413.0 + 30.0 * (r.car.unwrap() + 1.0).powi(2)) / 900.0).sqrt();
        assert!((r.car_sigma.unwrap() - expected_sigma).abs() < 1e-12);

        let r = summarize(
            &GateStreamSummary { coincidences_raw: 7, accidentals_delayed: 7, n_gates: 100, ..sum },
            5e6,
        );
        assert_eq!(r.c_net, 0.0);
        assert_eq!(r.car, Some(0.0));

        let r = summarize(
            &GateStreamSummary { coincidences_raw: 100, accidentals_delayed: 0, ..sum },
            5e6,
        );
        assert_eq!(r.car, None);
        assert_eq!(r.car_sigma, None);
    }

    #[test]
    fn offsets_average_accidentals() {
        let s = bits(&[1, 1, 1, 1, 1]);
        let i = bits(&[1, 1, 1, 1, 1]);
        let sum = count_coincidences_with_offsets(&s, &i, 2).unwrap();
        assert_eq!(sum.accidentals_delayed, 4 + 3);
        let r = summarize(&sum, 1.0);
        assert_eq!(r.a, 3.5);
    }

    #[test]
    fn merge_restores_boundary_pairs() {
        let s = bits(&[0, 1, 0, 1, 1, 0, 1, 0, 0, 1]);
        let i = bits(&[1, 0, 1, 1, 0, 1, 1, 0, 1, 1]);
        for offsets in 1..=3 {
            let whole = GateTally::from_streams(&s, &i, offsets).unwrap();
            for split in 0..=s.len() {
                let left = GateTally::from_streams(&s[..split], &i[..split], offsets).unwrap();
                let right = GateTally::from_streams(&s[split..], &i[split..], offsets).unwrap();
                assert_eq!(left.merge(right), whole, "offsets {offsets} split {split}");
            }
        }
    }
}
