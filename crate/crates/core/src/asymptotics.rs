//! Closed-form decay constants, log-periodic fits and the matching constants that
//! predict α(a) and the shrinker sequence a_k.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FlowParams, ProfileCurve};
use crate::ode::linear::{far_field_amplitude, linear_basis, series_mode, LINEAR_R0};
use crate::ode::{integrate_phase_deviation, EquationKind, IntegratorConfig};
use crate::shooting::{companion, point_at_r, ExpanderRecord, ShrinkerRecord, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    pub n: usize,
    pub beta: f64,
    pub mu: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl DecayConstants {
    /// Ratio a_k / a_{k+1} of consecutive shrinker heights.
    pub fn a_ratio(&self) -> f64 {
        (PI / self.mu).exp()
    }

    /// Ratio of consecutive slope gaps |tan α_k − λ_s|.
    pub fn gap_ratio(&self) -> f64 {
        (PI * (self.beta + 1.0) / self.mu).exp()
    }

    /// Envelope exponent of tan α(a) − λ_s in a.
    pub fn envelope_exponent(&self) -> f64 {
        self.beta + 1.0
    }
}

pub fn decay_constants(n: usize) -> Result<DecayConstants> {
    if !(4..=7).contains(&n) {
        return Err(Error::InvalidParams(format!("decay constants need 4 <= n <= 7, got {n}")));
    }
    let nf = n as f64;
    let beta = (nf - 3.0) / 2.0;
    let mu = (8.0 - (nf - 5.0).powi(2)).sqrt() / 2.0;
    let tau = (-PI / mu).exp();
    let sigma = tau.powf(beta + 1.0);
    Ok(DecayConstants { n, beta, mu, tau, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryFit {
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    pub window: (f64, f64),
    pub residual_rms: f64,
    pub samples: usize,
}

impl OscillatoryFit {
    pub fn amplitude(&self) -> f64 {
        self.a1.hypot(self.a2)
    }

    pub fn phase(&self) -> f64 {
        self.a2.atan2(self.a1)
    }

    pub fn accepted(&self) -> bool {
        self.residual_rms <= 0.05 * self.amplitude()
    }
}

/// Least squares of r^β w(r) against cos(μ log r), sin(μ log r) over samples (r, w)
/// inside `window`.
pub fn fit_oscillation_samples(samples: &[(f64, f64)], dc: &DecayConstants, window: (f64, f64)) -> Result<OscillatoryFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParams(format!("window ({lo}, {hi}) must satisfy 0 < lo < hi")));
    }
    if dc.mu * (hi / lo).ln() < PI {
        return Err(Error::IllConditioned(format!(
            "window ({lo}, {hi}) spans less than half an oscillation period"
        )));
    }
    let pts: Vec<(f64, f64)> = samples.iter().copied().filter(|&(r, _)| r >= lo && r <= hi).collect();
    let periods = dc.mu * (hi / lo).ln() / (2.0 * PI);
    if pts.len() < 3 {
        return Err(Error::EmptyWindow(format!("{} samples in ({lo}, {hi})", pts.len())));
    }
    if (pts.len() as f64) < 50.0 * periods {
        return Err(Error::InvalidParams(format!(
            "{} samples over {periods:.2} periods; at least 50 per period required",
            pts.len()
        )));
    }
    let rows: Vec<(f64, f64, f64)> = pts
        .iter()
        .map(|&(r, w)| {
            let ph = dc.mu * r.ln();
            (ph.cos(), ph.sin(), r.powf(dc.beta) * w)
        })
        .collect();
    let (mut scc, mut scs, mut sss, mut scy, mut ssy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(c, s, y) in &rows {
        scc += c * c;
        scs += c * s;
        sss += s * s;
        scy += c * y;
        ssy += s * y;
    }
    let det = scc * sss - scs * scs;
    if det <= 1e-12 * scc * sss {
        return Err(Error::IllConditioned("singular normal equations".into()));
    }
    let a1 = (sss * scy - scs * ssy) / det;
    let a2 = (scc * ssy - scs * scy) / det;
    let ss: f64 = rows.iter().map(|&(c, s, y)| (y - a1 * c - a2 * s).powi(2)).sum();
    let residual_rms = (ss / rows.len() as f64).sqrt();
    Ok(OscillatoryFit { a1, a2, window, residual_rms, samples: rows.len() })
}

/// Fit of w = u − λ_s r along a profile, resampled at 200 points per period.
pub fn fit_oscillation(curve: &ProfileCurve, lambda_s: f64, dc: &DecayConstants, window: (f64, f64)) -> Result<OscillatoryFit> {
    let (lo, hi) = window;
    let r_min = curve.points.iter().map(|p| p.r).fold(f64::INFINITY, f64::min);
    let r_max = curve.points.iter().map(|p| p.r).fold(f64::NEG_INFINITY, f64::max);
    if lo < r_min || hi > r_max {
        return Err(Error::OutOfRange(format!("window ({lo}, {hi}) outside sampled range ({r_min}, {r_max})")));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParams(format!("window ({lo}, {hi}) must satisfy 0 < lo < hi")));
    }
    let periods = dc.mu * (hi / lo).ln() / (2.0 * PI);
    let m = ((200.0 * periods).ceil() as usize).max(200);
    let samples: Vec<(f64, f64)> = (0..=m)
        .filter_map(|i| {
            let r = lo * (hi / lo).powf(i as f64 / m as f64);
            point_at_r(curve, r).map(|p| (r, p.u - lambda_s * r))
        })
        .collect();
    fit_oscillation_samples(&samples, dc, window)
}

/// Deviation threshold |ξ| + |υ| (relative to λ_s) below which the phase trajectory is
/// treated as linear.
pub const LINEAR_REGIME: f64 = 1e-4;

/// Oscillation constants (A₁, A₂) of the companion v with v(0) = 1, fitted over two
/// periods starting where the phase trajectory has entered the linear regime.
pub fn companion_fit(params: &FlowParams, cfg: &IntegratorConfig) -> Result<OscillatoryFit> {
    let dc = decay_constants(params.n)?;
    let rep = companion(params, cfg)?;
    let lam = params.lambda_s()?;
    let last = rep.curve.last();
    let eta0 = last.r.ln();
    let init = (eta0, last.u / last.r - lam, last.theta.tan() - lam);
    let two_periods = 4.0 * PI / dc.mu;
    // amplitude decays like e^{−(β+1)η}; this horizon always reaches the linear regime
    let horizon = eta0 + (1e-3 / LINEAR_REGIME).ln() / (dc.beta + 1.0) * 4.0 + 2.0 * two_periods;
    let traj = integrate_phase_deviation(params, init, horizon, cfg.rel_tol.min(1e-12))?;
    let small = |&(_, xi, up): &(f64, f64, f64)| xi.abs() + up.abs() < LINEAR_REGIME * lam;
    let start = (0..traj.len())
        .rev()
        .find(|&i| !small(&traj[i]))
        .map(|i| i + 1)
        .unwrap_or(0);
    let eta_lo = traj.get(start).map(|t| t.0).ok_or_else(|| Error::EmptyWindow("phase trajectory too short".into()))?;
    let eta_hi = eta_lo + two_periods;
    if eta_hi > traj.last().unwrap().0 {
        return Err(Error::EmptyWindow("phase trajectory does not cover two periods".into()));
    }
    let samples: Vec<(f64, f64)> = traj
        .iter()
        .filter(|t| t.0 >= eta_lo && t.0 <= eta_hi)
        .map(|&(eta, xi, _)| {
            let r = eta.exp();
            (r, r * xi)
        })
        .collect();
    fit_oscillation_samples(&samples, &dc, (eta_lo.exp(), eta_hi.exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingConstants {
    pub lambda_s: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// Phase arg B − arg A reduced to [0, π).
    #[serde(rename = "E")]
    pub e: f64,
}

/// (D₁, D₂) from the expander slopes λ₁, λ₂ and the companion constants A₁, A₂.
pub fn assemble_d(lambda1: f64, lambda2: f64, a1: f64, a2: f64) -> (f64, f64) {
    (lambda1 * a1 + lambda2 * a2, -lambda1 * a2 + lambda2 * a1)
}

/// Coefficients (B₁, B₂) of the regular-at-infinity shrinker mode g₃ = B₁h₁ + B₂h₂,
/// solved against the series modes at the inner end of g₃.
fn shrinker_b(params: &FlowParams, g3_first: (f64, f64, f64)) -> Result<(f64, f64)> {
    let (r, g, dg) = g3_first;
    let (m, dm) = series_mode(EquationKind::LinearizedShrinker, params, r)?;
    let det = m.re * dm.im - m.im * dm.re;
    if det == 0.0 {
        return Err(Error::IllConditioned("degenerate Wronskian".into()));
    }
    Ok(((g * dm.im - m.im * dg) / det, (m.re * dg - dm.re * g) / det))
}

pub fn matching_constants(params: &FlowParams, cfg: &IntegratorConfig) -> Result<MatchingConstants> {
    let lambda_s = params.lambda_s()?;
    let expander = linear_basis(EquationKind::LinearizedExpander, params, cfg)?;
    let lambda1 = far_field_amplitude(EquationKind::LinearizedExpander, params, expander.h1.last().unwrap())?;
    let lambda2 = far_field_amplitude(EquationKind::LinearizedExpander, params, expander.h2.last().unwrap())?;
    let shrinker = linear_basis(EquationKind::LinearizedShrinker, params, cfg)?;
    let g3 = shrinker.g3.ok_or_else(|| Error::InvalidParams("missing g3".into()))?;
    let first = g3[0];
    debug_assert!((first.r - LINEAR_R0).abs() < 1e-12);
    let (b1, b2) = shrinker_b(params, (first.r, first.h, first.dh))?;
    let fit = companion_fit(params, cfg)?;
    let (a1, a2) = (fit.a1, fit.a2);
    let (d1, d2) = assemble_d(lambda1, lambda2, a1, a2);
    let a = Complex64::new(a1, a2);
    let b = Complex64::new(b1, b2);
    let d = a.norm() / b.norm();
    let e = (b.arg() - a.arg()).rem_euclid(PI);
    Ok(MatchingConstants { lambda_s, lambda1, lambda2, a1, a2, b1, b2, d1, d2, d, e })
}

/// Largest a accepted by the asymptotic slope formula.
pub const ASYMPTOTIC_A_MAX: f64 = 0.1;

/// λ(a) ≈ λ_s + a^{β+1}(D₁ cos(μ log a) + D₂ sin(μ log a)).
pub fn predict_expander_slope(a: f64, mc: &MatchingConstants, dc: &DecayConstants) -> Result<f64> {
    if !(a > 0.0 && a <= ASYMPTOTIC_A_MAX) {
        return Err(Error::OutOfRange(format!("a = {a} outside (0, {ASYMPTOTIC_A_MAX}]")));
    }
    let ph = dc.mu * a.ln();
    Ok(mc.lambda_s + a.powf(dc.beta + 1.0) * (mc.d1 * ph.cos() + mc.d2 * ph.sin()))
}

/// Envelope |D| a^{β+1} of the predicted slope oscillation.
pub fn predicted_envelope(a: f64, mc: &MatchingConstants, dc: &DecayConstants) -> f64 {
    mc.d1.hypot(mc.d2) * a.powf(dc.beta + 1.0)
}

/// Predicted shrinker phase residual: μ log a − E reduced to (−π/2, π/2].
pub fn shrinker_phase_residual(a: f64, mc: &MatchingConstants, dc: &DecayConstants) -> f64 {
    let x = (dc.mu * a.ln() - mc.e).rem_euclid(PI);
    if x > PI / 2.0 {
        x - PI
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkerSequenceReport {
    pub a_ratio_target: f64,
    pub gap_ratio_target: f64,
    /// (k, a_k / a_{k+1}, relative deviation from the target)
    pub a_ratios: Vec<(usize, f64, f64)>,
    /// (k, |gap_k| / |gap_{k+1}|, relative deviation from the target)
    pub gap_ratios: Vec<(usize, f64, f64)>,
    pub alternating: bool,
}

impl ShrinkerSequenceReport {
    /// Largest relative deviations for k ≥ k_min: (a-ratio, gap-ratio).
    pub fn max_deviation(&self, k_min: usize) -> (f64, f64) {
        let worst = |v: &[(usize, f64, f64)]| v.iter().filter(|t| t.0 >= k_min).map(|t| t.2).fold(0.0, f64::max);
        (worst(&self.a_ratios), worst(&self.gap_ratios))
    }
}

pub fn verify_shrinker_sequence(records: &[ShrinkerRecord], dc: &DecayConstants) -> Result<ShrinkerSequenceReport> {
    if records.len() < 4 {
        return Err(Error::InvalidParams(format!("need at least 4 shrinker records, got {}", records.len())));
    }
    let a_ratio_target = dc.a_ratio();
    let gap_ratio_target = dc.gap_ratio();
    let mut a_ratios = Vec::new();
    let mut gap_ratios = Vec::new();
    let mut alternating = true;
    for w in records.windows(2) {
        let ra = w[0].a_k / w[1].a_k;
        a_ratios.push((w[0].k, ra, (ra / a_ratio_target - 1.0).abs()));
        let rg = (w[0].slope_gap / w[1].slope_gap).abs();
        gap_ratios.push((w[0].k, rg, (rg / gap_ratio_target - 1.0).abs()));
        alternating &= w[0].slope_gap * w[1].slope_gap < 0.0;
    }
    Ok(ShrinkerSequenceReport { a_ratio_target, gap_ratio_target, a_ratios, gap_ratios, alternating })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// (a, tan α(a) − λ_s) at refined extrema, ascending in a.
    pub extrema: Vec<(f64, f64)>,
    /// Ratios of consecutive extremum locations; adjacent extrema are half a period
    /// apart, so the target is e^{π/μ}.
    pub location_ratios: Vec<f64>,
    /// Least-squares slope of log|gap| against log a over the extrema.
    pub envelope_slope: f64,
}

/// Extremum structure of a refined α(a) sweep inside [a_lo, a_hi].
pub fn envelope_analysis(records: &[ExpanderRecord], lambda_s: f64, a_lo: f64, a_hi: f64) -> Result<EnvelopeReport> {
    let extrema: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| matches!(r.point, SweepPoint::Maximum | SweepPoint::Minimum))
        .filter(|r| r.a >= a_lo && r.a <= a_hi && r.lambda_a.is_finite())
        .map(|r| (r.a, r.lambda_a - lambda_s))
        .collect();
    if extrema.len() < 2 {
        return Err(Error::EmptyWindow(format!("{} extrema in [{a_lo}, {a_hi}]", extrema.len())));
    }
    let location_ratios = extrema.windows(2).map(|w| w[1].0 / w[0].0).collect();
    let xs: Vec<f64> = extrema.iter().map(|e| e.0.ln()).collect();
    let ys: Vec<f64> = extrema.iter().map(|e| e.1.abs().ln()).collect();
    let nx = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nx;
    let my = ys.iter().sum::<f64>() / nx;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(EnvelopeReport { extrema, location_ratios, envelope_slope: sxy / sxx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::linear::sample_at;

    #[test]
    fn closed_forms() {
        let d5 = decay_constants(5).unwrap();
        assert_eq!(d5.beta, 1.0);
        assert!((d5.mu - 2f64.sqrt()).abs() < 1e-15);
        let d7 = decay_constants(7).unwrap();
        assert_eq!((d7.beta, d7.mu), (2.0, 1.0));
        assert!((d7.tau - 0.043214).abs() < 1e-6);
        let d4 = decay_constants(4).unwrap();
        assert!((d4.mu - 7f64.sqrt() / 2.0).abs() < 1e-15);
        for n in 4..=7 {
            let d = decay_constants(n).unwrap();
            assert!(((d.beta + 1.0).powi(2) + d.mu * d.mu - 2.0 * (n as f64 - 2.0)).abs() < 1e-12);
        }
        assert!(decay_constants(3).is_err() && decay_constants(8).is_err());
    }

    #[test]
    fn recovers_synthetic_coefficients() {
        let dc = decay_constants(4).unwrap();
        let samples: Vec<(f64, f64)> = (0..2000)
            .map(|i| {
                let r = 0.5 * 1.005f64.powi(i);
                let ph = dc.mu * r.ln();
                (r, r.powf(-dc.beta) * (3.0 * ph.cos() - 2.0 * ph.sin()))
            })
            .collect();
        let fit = fit_oscillation_samples(&samples, &dc, (0.5, 5000.0)).unwrap();
        assert!((fit.a1 - 3.0).abs() < 1e-10 && (fit.a2 + 2.0).abs() < 1e-10);
        assert!(fit.residual_rms < 1e-10);
    }

    #[test]
    fn short_window_is_ill_conditioned() {
        let dc = decay_constants(4).unwrap();
        let samples: Vec<(f64, f64)> = (0..=500).map(|i| (5.0 + 0.01 * i as f64, 1.0)).collect();
        assert!(matches!(fit_oscillation_samples(&samples, &dc, (5.0, 10.0)), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn d_assembly_is_linear() {
        let (d1, d2) = assemble_d(0.3, -1.2, 0.7, 0.4);
        let (e1, e2) = assemble_d(0.3, -1.2, 1.4, 0.8);
        assert_eq!((2.0 * d1, 2.0 * d2), (e1, e2));
    }

    #[test]
    fn indicial_exponent_from_basis() {
        let params = FlowParams::new(2, 2).unwrap();
        let cfg = IntegratorConfig::default();
        let dc = decay_constants(4).unwrap();
        let basis = linear_basis(EquationKind::LinearizedExpander, &params, &cfg).unwrap();
        let s1 = sample_at(&basis.h1, 2e-3).unwrap();
        let s2 = sample_at(&basis.h2, 2e-3).unwrap();
        let h = Complex64::new(s1.h, s2.h);
        let dh = Complex64::new(s1.dh, s2.dh);
        let s = s1.r * dh / h;
        assert!((s.re + dc.beta).abs() < 1e-4 && (s.im - dc.mu).abs() < 1e-4, "{s}");
    }

    #[test]
    fn g3_decomposition_matches_fit() {
        // the Wronskian solve agrees with a direct fit of g3 near the origin
        let params = FlowParams::new(2, 2).unwrap();
        let cfg = IntegratorConfig::default();
        let dc = decay_constants(4).unwrap();
        let basis = linear_basis(EquationKind::LinearizedShrinker, &params, &cfg).unwrap();
        let g3 = basis.g3.unwrap();
        let (b1, b2) = shrinker_b(&params, (g3[0].r, g3[0].h, g3[0].dh)).unwrap();
        let samples: Vec<(f64, f64)> = g3.iter().map(|s| (s.r, s.h)).collect();
        let fit = fit_oscillation_samples(&samples, &dc, (LINEAR_R0, 0.05));
        if let Ok(fit) = fit {
            let scale = b1.hypot(b2);
            assert!((fit.a1 - b1).abs() < 1e-2 * scale && (fit.a2 - b2).abs() < 1e-2 * scale);
        }
    }

    #[test]
    fn companion_constants_are_scale_covariant() {
        // a·v(r/a) has amplitude a^{β+1}|A| and phase rotated by μ log a
        let params = FlowParams::new(2, 2).unwrap();
        let cfg = IntegratorConfig::default();
        let dc = decay_constants(4).unwrap();
        let fit = companion_fit(&params, &cfg).unwrap();
        assert!(fit.accepted(), "{fit:?}");
        let a = 2.0f64;
        let lam = params.lambda_s().unwrap();
        let rep = companion(&params, &cfg).unwrap();
        let scaled = rep.curve.scaled(a);
        let w = |r: f64| point_at_r(&scaled, r).map(|p| p.u - lam * r).unwrap();
        let ph = Complex64::new(fit.a1, fit.a2) * Complex64::from_polar(a.powf(dc.beta + 1.0), dc.mu * a.ln());
        for r in [12.0f64, 16.0, 19.0] {
            let model = r.powf(-dc.beta) * (ph.re * (dc.mu * r.ln()).cos() + ph.im * (dc.mu * r.ln()).sin());
            assert!((w(r) - model).abs() < 0.05 * ph.norm() * r.powf(-dc.beta), "r = {r}");
        }
    }

    #[test]
    fn prediction_range() {
        let mc = MatchingConstants {
            lambda_s: 1.0,
            lambda1: 1.0,
            lambda2: 0.0,
            a1: 1.0,
            a2: 0.0,
            b1: 1.0,
            b2: 0.0,
            d1: 1.0,
            d2: 0.0,
            d: 1.0,
            e: 0.0,
        };
        let dc = decay_constants(4).unwrap();
        assert!(predict_expander_slope(0.5, &mc, &dc).is_err());
        assert!((predict_expander_slope(1e-12, &mc, &dc).unwrap() - 1.0).abs() < 1e-15);
    }
}
