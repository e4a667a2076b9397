//! Validation machinery: adaptive quadrature with conservative error
//! estimates, distribution distance statistics, and the report type the
//! validation suites emit.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

/// Controls for adaptive quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    pub max_subdivisions: usize,
}

impl QuadratureConfig {
    pub fn new(
        relative_tolerance: f64,
        absolute_tolerance: f64,
        max_subdivisions: usize,
    ) -> Result<Self> {
        if !(relative_tolerance > 0.0) || !relative_tolerance.is_finite() {
            return Err(Error::InvalidParams(format!(
                "relative_tolerance must be positive, got {relative_tolerance}"
            )));
        }
        if !(absolute_tolerance > 0.0) || !absolute_tolerance.is_finite() {
            return Err(Error::InvalidParams(format!(
                "absolute_tolerance must be positive, got {absolute_tolerance}"
            )));
        }
        if max_subdivisions < 10 {
            return Err(Error::InvalidParams(format!(
                "max_subdivisions must be at least 10, got {max_subdivisions}"
            )));
        }
        Ok(Self { relative_tolerance, absolute_tolerance, max_subdivisions })
    }
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-10,
            absolute_tolerance: 1e-14,
            max_subdivisions: 200,
        }
    }
}

/// Integration domain. Infinite domains are handled by fixed smooth maps so
/// the underlying rule only ever sees finite panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// The interval [a, b].
    Finite { a: f64, b: f64 },
    /// (0, inf) via x = scale * exp(u), u in [-40, 40]. `scale` should sit
    /// near the bulk of the integrand's mass.
    HalfLine { scale: f64 },
    /// (-inf, inf) via x = scale * tan(theta), theta in (-pi/2, pi/2).
    FullLine { scale: f64 },
}

impl Domain {
    fn validate(&self) -> Result<()> {
        match *self {
            Domain::Finite { a, b } => {
                if !a.is_finite() || !b.is_finite() || !(a < b) {
                    return Err(Error::InvalidParams(format!(
                        "finite domain requires a < b, got [{a}, {b}]"
                    )));
                }
            }
            Domain::HalfLine { scale } | Domain::FullLine { scale } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidParams(format!(
                        "domain scale must be positive, got {scale}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Result of an adaptive integration: the value and a conservative estimate
/// of the absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralEstimate {
    pub value: f64,
    pub error_estimate: f64,
}

// Gauss-Kronrod 7-15 nodes and weights on [-1, 1]. Odd-index Kronrod
// abscissae are the embedded Gauss-7 nodes.
const XGK: [f64; 7] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 7-15 panel. Returns (kronrod value, error estimate)
/// with the QUADPACK rescaling that keeps the estimate conservative for
/// rough integrands.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    let mut f1v = [0.0; 7];
    let mut f2v = [0.0; 7];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        f1v[j] = f1;
        f2v[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((f1v[j] - reskh).abs() + (f2v[j] - reskh).abs());
    }
    let value = resk * h;
    resabs *= h.abs();
    resasc *= h.abs();
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let tiny_floor = 50.0 * f64::EPSILON * resabs;
    if tiny_floor > err {
        err = tiny_floor;
    }
    (value, err)
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

/// Adaptively integrates `f` over `domain` to the requested tolerance.
///
/// On success the reported `error_estimate` satisfies
/// `error_estimate <= max(absolute_tolerance, relative_tolerance * |value|)`
/// and is itself a conservative bound in the usual Gauss-Kronrod sense.
/// Errors with `QuadratureNonConvergence` if the subdivision budget runs out
/// and with `Domain` if the integrand produces non-finite values.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(
    f: F,
    domain: Domain,
    config: &QuadratureConfig,
) -> Result<IntegralEstimate> {
    domain.validate()?;
    match domain {
        Domain::Finite { a, b } => adaptive_core(&f, &uniform_panels(a, b, 4), config),
        Domain::HalfLine { scale } => {
            let g = |u: f64| {
                let x = scale * u.exp();
                f(x) * x
            };
            adaptive_core(&g, &uniform_panels(-40.0, 40.0, 16), config)
        }
        Domain::FullLine { scale } => {
            let g = |theta: f64| {
                let t = theta.tan();
                let sec2 = 1.0 + t * t;
                f(scale * t) * scale * sec2
            };
            adaptive_core(&g, &uniform_panels(-FRAC_PI_2, FRAC_PI_2, 8), config)
        }
    }
}

/// Adaptive integration over [first, last] breakpoint with the initial panel
/// layout given explicitly. Callers use this when they know where the
/// integrand's mass sits (a sharp peak inside a wide support would otherwise
/// be invisible to the first uniform pass).
pub fn adaptive_integrate_segments<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    config: &QuadratureConfig,
) -> Result<IntegralEstimate> {
    if breakpoints.len() < 2 {
        return Err(Error::InvalidParams("need at least two breakpoints".into()));
    }
    for pair in breakpoints.windows(2) {
        if !pair[0].is_finite() || !pair[1].is_finite() || !(pair[0] < pair[1]) {
            return Err(Error::InvalidParams(format!(
                "breakpoints must be finite and strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let panels: Vec<(f64, f64)> =
        breakpoints.windows(2).map(|pair| (pair[0], pair[1])).collect();
    adaptive_core(&f, &panels, config)
}

fn uniform_panels(a: f64, b: f64, count: usize) -> Vec<(f64, f64)> {
    let step = (b - a) / count as f64;
    (0..count)
        .map(|i| {
            let sa = a + step * i as f64;
            let sb = if i + 1 == count { b } else { a + step * (i + 1) as f64 };
            (sa, sb)
        })
        .collect()
}

fn adaptive_core<F: Fn(f64) -> f64>(
    f: &F,
    panels: &[(f64, f64)],
    config: &QuadratureConfig,
) -> Result<IntegralEstimate> {
    let mut segments: Vec<Segment> = Vec::new();
    for &(sa, sb) in panels {
        let (value, err) = gk15(f, sa, sb);
        segments.push(Segment { a: sa, b: sb, value, err });
    }

    for _ in 0..config.max_subdivisions {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err_total: f64 = segments.iter().map(|s| s.err).sum();
        if !total.is_finite() || !err_total.is_finite() {
            return Err(Error::Domain(
                "integrand produced non-finite values".into(),
            ));
        }
        let target = config
            .absolute_tolerance
            .max(config.relative_tolerance * total.abs());
        if err_total <= target {
            return Ok(IntegralEstimate { value: total, error_estimate: err_total });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|(_, s), (_, t)| s.err.partial_cmp(&t.err).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Segment { a: sa, b: sb, .. } = segments[worst];
        let mid = 0.5 * (sa + sb);
        if !(sa < mid && mid < sb) {
            // Interval exhausted at floating point resolution; treat the
            // current estimate as final rather than looping forever.
            break;
        }
        let (v1, e1) = gk15(f, sa, mid);
        let (v2, e2) = gk15(f, mid, sb);
        segments[worst] = Segment { a: sa, b: mid, value: v1, err: e1 };
        segments.push(Segment { a: mid, b: sb, value: v2, err: e2 });
    }

    let total: f64 = segments.iter().map(|s| s.value).sum();
    let err_total: f64 = segments.iter().map(|s| s.err).sum();
    let target = config
        .absolute_tolerance
        .max(config.relative_tolerance * total.abs());
    if err_total <= target {
        return Ok(IntegralEstimate { value: total, error_estimate: err_total });
    }
    Err(Error::QuadratureNonConvergence(format!(
        "error estimate {err_total:.3e} above target {target:.3e} after {} subdivisions",
        config.max_subdivisions
    )))
}

/// Two-sided Kolmogorov-Smirnov distance between a sample and a continuous
/// CDF. The sample need not be pre-sorted; ties are handled by the usual
/// step-function convention.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("ks_distance needs at least one sample".into()));
    }
    let mut xs = samples.to_vec();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("ks_distance requires finite samples".into()));
    }
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let fx = cdf(x);
        if !fx.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&fx) {
            return Err(Error::Domain(format!(
                "cdf returned {fx} at {x}, outside [0, 1]"
            )));
        }
        let hi = (i as f64 + 1.0) / n - fx;
        let lo = fx - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    Ok(d)
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against model bin masses.
///
/// Masses must be nonnegative and sum to 1 within 1e-6 (they are renormalized
/// exactly); adjacent bins are merged left to right until every merged bin
/// has expected count >= 5, and the trailing remainder folds into the last
/// kept bin. Degrees of freedom = merged bins - 1.
pub fn chi_square_gof(observed: &[u64], masses: &[f64]) -> Result<ChiSquare> {
    if observed.is_empty() {
        return Err(Error::EmptyInput("chi_square_gof needs at least one bin".into()));
    }
    if observed.len() != masses.len() {
        return Err(Error::InvalidParams(format!(
            "observed has {} bins but masses has {}",
            observed.len(),
            masses.len()
        )));
    }
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::InvalidParams("bin masses must be finite and nonnegative".into()));
    }
    let mass_sum: f64 = masses.iter().sum();
    if (mass_sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParams(format!(
            "bin masses sum to {mass_sum}, expected 1 within 1e-6"
        )));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("chi_square_gof needs at least one observation".into()));
    }

    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0f64;
    let mut acc_exp = 0.0f64;
    for (&o, &m) in observed.iter().zip(masses) {
        acc_obs += o as f64;
        acc_exp += m / mass_sum * n as f64;
        if acc_exp >= 5.0 {
            merged.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += acc_obs;
                last.1 += acc_exp;
            }
            None => {
                return Err(Error::InvalidParams(
                    "expected counts too small to form any bin with >= 5".into(),
                ))
            }
        }
    }
    if merged.len() < 2 {
        return Err(Error::InvalidParams(
            "need at least two bins with expected count >= 5".into(),
        ));
    }

    let statistic: f64 = merged
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    let dof = merged.len() - 1;
    let p_value = reg_gamma_q(dof as f64 / 2.0, statistic / 2.0)?;
    Ok(ChiSquare { statistic, dof, p_value })
}

const LANCZOS_G0: f64 = 0.999_999_999_999_809_93;
const LANCZOS: [f64; 8] = [
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments (Lanczos g = 7).
pub fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Reflection keeps the approximation in its accurate range.
        (PI / (PI * z).sin()).ln() - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut x = LANCZOS_G0;
        for (i, c) in LANCZOS.iter().enumerate() {
            x += c / (z + i as f64 + 1.0);
        }
        let t = z + 7.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
    }
}

/// Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
/// Series for x < a + 1, continued fraction otherwise.
pub fn reg_gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() || x < 0.0 || !x.is_finite() {
        return Err(Error::Domain(format!("reg_gamma_q needs a > 0, x >= 0; got a={a}, x={x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                let p = sum * log_prefactor.exp();
                return Ok((1.0 - p).clamp(0.0, 1.0));
            }
        }
        Err(Error::QuadratureNonConvergence("incomplete gamma series stalled".into()))
    } else {
        // Modified Lentz evaluation of the standard continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                return Ok((log_prefactor.exp() * h).clamp(0.0, 1.0));
            }
        }
        Err(Error::QuadratureNonConvergence("incomplete gamma fraction stalled".into()))
    }
}

/// Machine-readable outcome of one validation suite. Maps are ordered so
/// serialized output is byte-stable across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub pass: bool,
    pub params: serde_json::Value,
    pub config: serde_json::Value,
}

impl ValidationReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            metrics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            pass: true,
            params: serde_json::Value::Null,
            config: serde_json::Value::Null,
        }
    }

    /// Records a metric with its tolerance and whether it passed; the report
    /// passes only if every recorded metric passed.
    pub fn metric(&mut self, key: &str, value: f64, tolerance: f64, ok: bool) {
        self.metrics.insert(key.to_string(), value);
        self.tolerances.insert(key.to_string(), tolerance);
        self.pass &= ok;
    }

    /// Metric that must stay at or below its tolerance.
    pub fn check_le(&mut self, key: &str, value: f64, tolerance: f64) {
        self.metric(key, value, tolerance, value.is_finite() && value <= tolerance);
    }

    /// Metric that must stay at or above its tolerance (p-values, ratios).
    pub fn check_ge(&mut self, key: &str, value: f64, tolerance: f64) {
        self.metric(key, value, tolerance, value.is_finite() && value >= tolerance);
    }
}

/// Formats a float with 17 significant digits, enough to round-trip f64
/// exactly; used by every CSV and report writer so output is reproducible.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
