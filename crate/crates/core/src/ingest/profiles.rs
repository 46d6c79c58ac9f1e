//! Synthetic per-period profiles: a family of normalized daily demand
//! curves and one PV availability curve, generated in closed form.
//!
//! The generator is deterministic (no randomness): every curve is a smooth
//! function of the hour of day, sampled at `horizon` equally spaced periods
//! (`hour = t · 24 / horizon`), then normalized so its maximum is exactly
//! 1.0 at exactly one period. Demand curve `k` is a night valley plus a
//! morning bump and a dominant evening bump whose hours, widths and depths
//! cycle through small parameter sets, so all curves are distinct but share
//! the same family shape. The PV curve is a half-sine between sunrise and
//! sunset and exactly zero outside daylight.
//!
//! A strictly increasing tilt of 1e-9 per period is added before
//! normalization to break exact ties (symmetric samples around a curve's
//! peak would otherwise normalize to two 1.0 entries); it is invisible at
//! reporting precision.

use serde::{Deserialize, Serialize};

/// Version string of the closed-form generator, recorded in run manifests.
pub const PROFILE_VERSION: &str = "synthetic-v1";

fn d_n_profiles() -> usize {
    17
}
fn d_morning() -> f64 {
    7.0
}
fn d_evening() -> f64 {
    18.0
}
fn d_valley() -> f64 {
    0.25
}
fn d_sunrise() -> f64 {
    6.0
}
fn d_sunset() -> f64 {
    18.0
}

/// Shape parameters of the synthetic profile family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    /// Number of demand curves in the family.
    #[serde(default = "d_n_profiles")]
    pub n_profiles: usize,
    /// Base hour of the morning demand bump (curves offset it by 0–2 h).
    #[serde(default = "d_morning")]
    pub morning_peak_hour: f64,
    /// Base hour of the dominant evening bump (curves offset it by 0–2.4 h).
    #[serde(default = "d_evening")]
    pub evening_peak_hour: f64,
    /// Base overnight demand level as a fraction of the peak.
    #[serde(default = "d_valley")]
    pub valley_depth: f64,
    /// Hour at which PV availability becomes positive.
    #[serde(default = "d_sunrise")]
    pub pv_sunrise_hour: f64,
    /// Hour at which PV availability returns to zero.
    #[serde(default = "d_sunset")]
    pub pv_sunset_hour: f64,
    /// Width (hours) of a flat top on the PV curve; 0 = pure half-sine.
    #[serde(default)]
    pub pv_noon_plateau_hours: f64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec {
            n_profiles: d_n_profiles(),
            morning_peak_hour: d_morning(),
            evening_peak_hour: d_evening(),
            valley_depth: d_valley(),
            pv_sunrise_hour: d_sunrise(),
            pv_sunset_hour: d_sunset(),
            pv_noon_plateau_hours: 0.0,
        }
    }
}

/// The synthesized curves plus the cyclic bus→curve assignment rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    /// `n_profiles` demand curves, each `horizon` long with max exactly 1.0.
    pub demand: Vec<Vec<f64>>,
    /// PV availability curve, `horizon` long, zero outside daylight,
    /// normalized to max 1.0 whenever any period falls in daylight.
    pub pv: Vec<f64>,
    /// Generator version recorded in manifests.
    pub version: &'static str,
}

impl ProfileSet {
    /// Curve index assigned to the demand bus at `position` (0-based rank of
    /// the bus among a network's demand buses, ordered by ascending id).
    pub fn assignment(&self, position: usize) -> usize {
        position % self.demand.len()
    }

    /// The demand curve assigned to `position`.
    pub fn assigned(&self, position: usize) -> &[f64] {
        &self.demand[self.assignment(position)]
    }

    /// Export as CSV with columns `period,profile_id,value`; demand curves
    /// use their index as id, the PV curve uses `pv`.
    pub fn to_csv(&self) -> String {
        let horizon = self.pv.len();
        let mut out = String::from("period,profile_id,value\n");
        for t in 0..horizon {
            for (k, curve) in self.demand.iter().enumerate() {
                out.push_str(&format!("{t},{k},{}\n", curve[t]));
            }
            out.push_str(&format!("{t},pv,{}\n", self.pv[t]));
        }
        out
    }
}

fn gauss(h: f64, mu: f64, sigma: f64) -> f64 {
    let z = (h - mu) / sigma;
    (-0.5 * z * z).exp()
}

/// Break exact ties with a strictly increasing per-period tilt, then scale
/// so the unique maximum is exactly 1.0. Zero entries stay exactly zero.
fn normalize(curve: &mut [f64]) {
    for (t, v) in curve.iter_mut().enumerate() {
        if *v > 0.0 {
            *v += 1e-9 * t as f64;
        }
    }
    let max = curve.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in curve.iter_mut() {
            *v /= max;
        }
    }
}

/// Generate the profile family sampled at `horizon` periods.
pub fn synthesize_profiles(spec: &ProfileSpec, horizon: usize) -> ProfileSet {
    assert!(horizon >= 1, "horizon must be at least 1");
    let hours: Vec<f64> = (0..horizon)
        .map(|t| t as f64 * 24.0 / horizon as f64)
        .collect();

    let mut demand = Vec::with_capacity(spec.n_profiles);
    for k in 0..spec.n_profiles {
        let mu_morning = spec.morning_peak_hour + (k % 3) as f64;
        let mu_evening = spec.evening_peak_hour + 0.8 * (k % 4) as f64;
        let valley = spec.valley_depth + 0.02 * (k % 5) as f64;
        let amp_morning = 0.35 + 0.03 * (k % 4) as f64;
        let sigma_evening = 2.5 + 0.1 * (k % 3) as f64;

        let mut curve: Vec<f64> = hours
            .iter()
            .map(|&h| {
                valley
                    + amp_morning * gauss(h, mu_morning, 2.0)
                    + gauss(h, mu_evening, sigma_evening)
            })
            .collect();
        normalize(&mut curve);
        demand.push(curve);
    }

    let rise = spec.pv_sunrise_hour;
    let set = spec.pv_sunset_hour;
    let width = (set - rise).max(f64::MIN_POSITIVE);
    let noon = 0.5 * (rise + set);
    let half_plateau = 0.5 * spec.pv_noon_plateau_hours;
    let mut pv: Vec<f64> = hours
        .iter()
        .map(|&h| {
            if h <= rise || h >= set {
                0.0
            } else if (h - noon).abs() <= half_plateau {
                1.0
            } else {
                (std::f64::consts::PI * (h - rise) / width).sin()
            }
        })
        .collect();
    normalize(&mut pv);

    ProfileSet { demand, pv, version: PROFILE_VERSION }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_stay_in_range_and_peak_exactly_once() {
        for horizon in [24usize, 96] {
            let set = synthesize_profiles(&ProfileSpec::default(), horizon);
            assert_eq!(set.demand.len(), 17);
            for (k, curve) in set.demand.iter().enumerate() {
                assert_eq!(curve.len(), horizon);
                assert!(curve.iter().all(|&v| (0.0..=1.0).contains(&v)), "curve {k}");
                let peaks = curve.iter().filter(|&&v| v == 1.0).count();
                assert_eq!(peaks, 1, "curve {k} at horizon {horizon} has {peaks} peaks");
            }
            let pv_peaks = set.pv.iter().filter(|&&v| v == 1.0).count();
            assert_eq!(pv_peaks, 1);
        }
    }

    #[test]
    fn curves_are_pairwise_distinct() {
        let set = synthesize_profiles(&ProfileSpec::default(), 24);
        for a in 0..set.demand.len() {
            for b in (a + 1)..set.demand.len() {
                assert_ne!(set.demand[a], set.demand[b], "curves {a} and {b} identical");
            }
        }
    }

    #[test]
    fn pv_is_zero_at_night_and_peaks_at_noon() {
        let set = synthesize_profiles(&ProfileSpec::default(), 24);
        for t in 0..24 {
            if t <= 6 || t >= 18 {
                assert_eq!(set.pv[t], 0.0, "t={t}");
            } else {
                assert!(set.pv[t] > 0.0, "t={t}");
            }
        }
        assert_eq!(set.pv[12], 1.0);
    }

    #[test]
    fn degenerate_horizon_gives_unit_demand() {
        let set = synthesize_profiles(&ProfileSpec::default(), 1);
        for curve in &set.demand {
            assert_eq!(curve, &vec![1.0]);
        }
        // The single sample lands at hour 0 — night, so PV is dark.
        assert_eq!(set.pv, vec![0.0]);
    }

    #[test]
    fn cyclic_assignment_wraps_after_the_family_size() {
        let set = synthesize_profiles(&ProfileSpec::default(), 24);
        assert_eq!(set.assignment(0), 0);
        assert_eq!(set.assignment(16), 16);
        assert_eq!(set.assignment(17), 0);
        // 32 demand buses: positions 17..=31 wrap onto curves 0..=14.
        assert_eq!(set.assignment(31), 14);
    }

    #[test]
    fn csv_export_lists_every_period_and_curve() {
        let set = synthesize_profiles(&ProfileSpec::default(), 4);
        let csv = set.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "period,profile_id,value");
        assert_eq!(lines.len(), 1 + 4 * 18);
        assert!(lines[18].starts_with("0,pv,"));
        assert!(lines.last().unwrap().starts_with("3,pv,"));
    }
}
