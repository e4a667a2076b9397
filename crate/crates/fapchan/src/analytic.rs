//! Closed-form first-arrival-position densities and the two formula-level
//! oracles that cross-check them.
//!
//! Two independent evaluation routes exist on purpose. The closed forms
//! (`fap_density_2d`, `fap_density_3d`) come from the Bessel/algebraic
//! reductions; `time_marginal_oracle` rebuilds the same densities by
//! integrating the normal-coordinate first-passage time density against the
//! free tangential Gaussian motion, and `fap_via_time_integration` rebuilds
//! the longitudinal 2D case by integrating the boundary flux of the
//! absorbing Green's function over time. Agreement between routes is the
//! main correctness evidence, so none of them may be collapsed into another.

use crate::error::{Error, Result};
use crate::model::{BoundaryOffset, ChannelParams, SourceOffset};
use crate::pde::BoundaryData;
use crate::specfun::bessel_k1_scaled;
use crate::stats::{adaptive_integrate, Domain, IntegralEstimate, QuadratureConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A probability density value on the receiver plane, per unit length in 2D
/// or per unit area in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityValue {
    pub value: f64,
}

impl DensityValue {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Domain(format!(
                "density must be finite and nonnegative, got {value}"
            )));
        }
        Ok(Self { value })
    }
}

/// Drift norm below which (scaled by geometry) the exact zero-drift limit is
/// used instead of evaluating K_1 near zero, where it loses relative accuracy.
const ZERO_DRIFT_Z: f64 = 1e-8;

/// Characteristic first-passage time scale, used to center quadrature charts.
pub(crate) fn time_scale(params: &ChannelParams) -> f64 {
    let (_, vn) = params.drift_split();
    let d = params.distance;
    d * d / (params.sigma2 + d * vn.abs())
}

/// exp(v . x / sigma2), the drift weight attached to a spatial point.
pub fn drift_factor(params: &ChannelParams, point: &[f64]) -> Result<f64> {
    if point.len() != params.dimension {
        return Err(Error::InvalidParams(format!(
            "point has {} components, expected {}",
            point.len(),
            params.dimension
        )));
    }
    let exponent: f64 =
        params.drift.iter().zip(point).map(|(v, x)| v * x).sum::<f64>() / params.sigma2;
    if exponent.abs() > 700.0 {
        return Err(Error::Overflow(format!(
            "drift factor exponent {exponent:.3e} exceeds representable range"
        )));
    }
    Ok(exponent.exp())
}

/// First-arrival-position density on the receiver line in 2D.
///
/// With w = xi - x1, r = sqrt(w^2 + d^2):
/// f = (|v| d / (sigma2 pi)) exp((v1 w - v2 d)/sigma2) K1(|v| r / sigma2) / r,
/// evaluated in log space with the exp-scaled K1 so the growing drift
/// exponential and the decaying Bessel tail cancel before exponentiation.
/// The zero-drift limit is the Cauchy kernel d / (pi r^2).
/// a*b - c*d evaluated with fused multiply-adds so the result keeps full
/// precision even when the two products nearly cancel.
fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let cd = c * d;
    let err = c.mul_add(d, -cd);
    let dop = a.mul_add(b, -cd);
    dop - err
}

/// Drift exponent (v . m - |v||m|) / sigma2 where m points from the source
/// to the arrival (normal component downward). Cauchy-Schwarz bounds it by
/// zero, so the density can never overflow; the subtlety is arrivals nearly
/// aligned with the drift, where both terms are huge and their difference
/// is tiny. There the direct subtraction loses every significant digit, so
/// the identity v . m - |v||m| = -|v x m|^2 / (|v||m| + v . m) is used
/// instead; its numerator comes from cancellation-free product differences
/// and its denominator is a sum of positives.
fn drift_exponent(v: [f64; 3], m: [f64; 3], vnorm: f64, mnorm: f64, s2: f64) -> f64 {
    let dot = v[0] * m[0] + v[1] * m[1] + v[2] * m[2];
    if dot <= 0.0 {
        return (dot - vnorm * mnorm) / s2;
    }
    let c1 = diff_of_products(v[1], m[2], v[2], m[1]);
    let c2 = diff_of_products(v[2], m[0], v[0], m[2]);
    let c3 = diff_of_products(v[0], m[1], v[1], m[0]);
    let cross2 = c1 * c1 + c2 * c2 + c3 * c3;
    (-(cross2 / (vnorm * mnorm + dot)) / s2).min(0.0)
}

pub fn fap_density_2d(
    params: &ChannelParams,
    source: &SourceOffset,
    arrival: &BoundaryOffset,
) -> Result<DensityValue> {
    if params.dimension != 2 {
        return Err(Error::InvalidParams("fap_density_2d requires dimension 2".into()));
    }
    source.check_dimension(params)?;
    arrival.check_dimension(params)?;
    let x1 = source.scalar()?;
    let xi = arrival.scalar()?;
    let (vt, vn) = params.drift_split();
    let v1 = vt[0];
    let d = params.distance;
    let s2 = params.sigma2;
    let w = xi - x1;
    let r2 = w * w + d * d;
    let r = r2.sqrt();
    let vnorm = params.drift_norm();
    let z = vnorm * r / s2;
    if z < ZERO_DRIFT_Z {
        return DensityValue::new(d / (PI * r2));
    }
    let exponent = drift_exponent([v1, vn, 0.0], [w, -d, 0.0], vnorm, r, s2);
    let log_f = (vnorm * d / (s2 * PI)).ln() + exponent + bessel_k1_scaled(z)?.ln() - r.ln();
    DensityValue::new(log_f.exp())
}

/// The longitudinal-drift specialization (tangential drift exactly zero),
/// written in diffusion-coefficient form with D = sigma2 / 2. Algebraically
/// identical to `fap_density_2d` restricted to v1 = 0; kept as a separate op
/// because this restricted form is the corrected version of an earlier
/// published formula and the identity between the two is itself a test.
pub fn fap_density_2d_longitudinal(
    params: &ChannelParams,
    source: &SourceOffset,
    arrival: &BoundaryOffset,
) -> Result<DensityValue> {
    if params.dimension != 2 {
        return Err(Error::InvalidParams("requires dimension 2".into()));
    }
    let (vt, vn) = params.drift_split();
    if vt[0] != 0.0 {
        return Err(Error::InvalidParams(format!(
            "longitudinal form requires zero tangential drift, got {}",
            vt[0]
        )));
    }
    source.check_dimension(params)?;
    arrival.check_dimension(params)?;
    let w = arrival.scalar()? - source.scalar()?;
    let d = params.distance;
    let dc = params.diffusion_d();
    let r2 = w * w + d * d;
    let r = r2.sqrt();
    let speed = vn.abs();
    let z = speed * r / (2.0 * dc);
    if z < ZERO_DRIFT_Z {
        return DensityValue::new(d / (PI * r2));
    }
    let log_f =
        (speed * d / (2.0 * dc * PI)).ln() - vn * d / (2.0 * dc) - z + bessel_k1_scaled(z)?.ln()
            - r.ln();
    DensityValue::new(log_f.exp())
}

/// First-arrival-position density on the receiver plane in 3D.
///
/// With w = arrival - source tangentially, R = sqrt(|w|^2 + lambda^2):
/// f = (lambda / 2 pi) exp((v1 w1 + v2 w2 - v3 lambda)/sigma2)
///     exp(-|v| R / sigma2) (1 + |v| R / sigma2) / R^3.
/// Zero-drift limit: the half-space Poisson kernel lambda / (2 pi R^3).
pub fn fap_density_3d(
    params: &ChannelParams,
    source: &SourceOffset,
    arrival: &BoundaryOffset,
) -> Result<DensityValue> {
    if params.dimension != 3 {
        return Err(Error::InvalidParams("fap_density_3d requires dimension 3".into()));
    }
    source.check_dimension(params)?;
    arrival.check_dimension(params)?;
    let s = source.pair()?;
    let a = arrival.pair()?;
    let (vt, vn) = params.drift_split();
    let lambda = params.distance;
    let s2 = params.sigma2;
    let w1 = a[0] - s[0];
    let w2 = a[1] - s[1];
    let rr2 = w1 * w1 + w2 * w2 + lambda * lambda;
    let rr = rr2.sqrt();
    let vnorm = params.drift_norm();
    let z = vnorm * rr / s2;
    if z < ZERO_DRIFT_Z {
        return DensityValue::new(lambda / (2.0 * PI * rr2 * rr));
    }
    let exponent = drift_exponent([vt[0], vt[1], vn], [w1, w2, -lambda], vnorm, rr, s2);
    let log_f = (lambda / (2.0 * PI)).ln() + exponent + z.ln_1p() - 3.0 * rr.ln();
    DensityValue::new(log_f.exp())
}

/// Dispatches on the channel dimension.
pub fn fap_density(
    params: &ChannelParams,
    source: &SourceOffset,
    arrival: &BoundaryOffset,
) -> Result<DensityValue> {
    match params.dimension {
        2 => fap_density_2d(params, source, arrival),
        3 => fap_density_3d(params, source, arrival),
        d => Err(Error::InvalidParams(format!("unsupported dimension {d}"))),
    }
}

/// Half-space Poisson kernel z / (2 pi (rho^2 + z^2)^{3/2}); the zero-drift
/// 3D arrival density and the weight of the harmonic extension integral.
pub fn poisson_kernel_halfspace_3d(height: f64, tangential_offset: [f64; 2]) -> Result<f64> {
    if !(height > 0.0) || !height.is_finite() {
        return Err(Error::Domain(format!("height must be positive, got {height}")));
    }
    let rho2 = tangential_offset[0] * tangential_offset[0]
        + tangential_offset[1] * tangential_offset[1];
    let r2 = rho2 + height * height;
    Ok(height / (2.0 * PI * r2 * r2.sqrt()))
}

/// Bounded harmonic extension of radial boundary data into the upper half
/// space: u(p) = integral of g(|xi|) times the Poisson kernel over the plane.
/// `boundary_data` is read as a radial profile about the origin, so an
/// indicator of halfwidth 1 centered at 0 is the unit disk.
pub fn harmonic_extension_3d(
    boundary_data: &BoundaryData,
    point: [f64; 3],
    quad: &QuadratureConfig,
) -> Result<f64> {
    let z = point[2];
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("interior point needs z > 0, got {z}")));
    }
    // Polar coordinates about the origin keep the radial profile exact; the
    // inner integral runs over the radius, the outer over the angle. Inner
    // failures surface as NaN, which the outer pass reports as a domain error.
    let inner_quad = QuadratureConfig {
        relative_tolerance: quad.relative_tolerance * 0.1,
        absolute_tolerance: quad.absolute_tolerance * 0.1,
        max_subdivisions: quad.max_subdivisions,
    };
    let radial_scale = z.max(boundary_data.support_radius().max(1.0));
    let outer = |phi: f64| {
        let (sin_phi, cos_phi) = phi.sin_cos();
        let inner = adaptive_integrate(
            |rho: f64| {
                let g = boundary_data.eval(rho);
                if g == 0.0 {
                    return 0.0;
                }
                let dx = rho * cos_phi - point[0];
                let dy = rho * sin_phi - point[1];
                let r2 = dx * dx + dy * dy + z * z;
                g * z / (2.0 * PI * r2 * r2.sqrt()) * rho
            },
            Domain::HalfLine { scale: radial_scale },
            &inner_quad,
        );
        inner.map(|e| e.value).unwrap_or(f64::NAN)
    };
    let est = adaptive_integrate(outer, Domain::Finite { a: 0.0, b: 2.0 * PI }, quad)?;
    Ok(est.value)
}

/// Transition density of the absorbed process in 2D with purely longitudinal
/// drift, in the layout where the transmission axis is the FIRST coordinate:
/// the receiver is {x = 0}, the walker starts at (x0, y0) with x0 > 0.
///
/// G = free Gaussian - exp(-x0 v / D) * image Gaussian; the image exponent is
/// combined into a single exp so it stays bounded for any drift sign, and the
/// two terms cancel exactly at x = 0.
pub fn absorbing_green_2d(
    params: &ChannelParams,
    x: f64,
    y: f64,
    x0: f64,
    y0: f64,
    t: f64,
) -> Result<f64> {
    let (vt, vn) = split_longitudinal(params)?;
    debug_assert_eq!(vt, 0.0);
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if !(x0 > 0.0) || x < 0.0 {
        return Err(Error::Domain(format!(
            "requires x >= 0 and x0 > 0, got x = {x}, x0 = {x0}"
        )));
    }
    let dc = params.diffusion_d();
    let denom = 4.0 * dc * t;
    let dy2 = (y - y0) * (y - y0);
    let dx_free = x - x0 - vn * t;
    let free = (-(dx_free * dx_free + dy2) / denom).exp();
    // exp(-x0 v / D) * exp(-((x + x0 - v t)^2 + dy^2)/denom) with the
    // prefactor folded in: the combined exponent is
    // -(((x0 - x) + v t)^2 + 4 x x0 + dy^2) / denom <= 0.
    let dx_image = (x0 - x) + vn * t;
    let image = (-(dx_image * dx_image + 4.0 * x * x0 + dy2) / denom).exp();
    Ok(((free - image) / (PI * denom)).max(0.0))
}

/// Boundary arrival-rate density at (0, y) for the longitudinal 2D channel:
/// J = (x0 / (4 pi D t^2)) exp(-((x0 + v t)^2 + (y - y0)^2) / (4 D t)),
/// the magnitude of the diffusive flux D dG/dx through the receiver.
pub fn flux_2d(params: &ChannelParams, y: f64, x0: f64, y0: f64, t: f64) -> Result<f64> {
    let (_, vn) = split_longitudinal(params)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if !(x0 > 0.0) {
        return Err(Error::Domain(format!("requires x0 > 0, got {x0}")));
    }
    Ok(flux_kernel(params.diffusion_d(), vn, x0, y - y0, t))
}

fn flux_kernel(dc: f64, vn: f64, x0: f64, dy: f64, t: f64) -> f64 {
    let a = x0 + vn * t;
    x0 / (4.0 * PI * dc * t * t) * (-(a * a + dy * dy) / (4.0 * dc * t)).exp()
}

fn split_longitudinal(params: &ChannelParams) -> Result<(f64, f64)> {
    if params.dimension != 2 {
        return Err(Error::InvalidParams("requires dimension 2".into()));
    }
    let (vt, vn) = params.drift_split();
    if vt[0] != 0.0 {
        return Err(Error::InvalidParams(format!(
            "requires zero tangential drift, got {}",
            vt[0]
        )));
    }
    Ok((vt[0], vn))
}

/// Arrival density obtained by integrating the boundary flux over all time,
/// f(xi) = integral_0^inf J(0, xi, t) dt. Longitudinal 2D only (the image
/// construction behind the flux does not generalize to tangential drift).
/// Numerically independent route to `fap_density_2d_longitudinal`.
pub fn fap_via_time_integration(
    params: &ChannelParams,
    source: &SourceOffset,
    arrival: &BoundaryOffset,
    quad: &QuadratureConfig,
) -> Result<DensityValue> {
    let (_, vn) = split_longitudinal(params)?;
    source.check_dimension(params)?;
    arrival.check_dimension(params)?;
    let dy = arrival.scalar()? - source.scalar()?;
    let dc = params.diffusion_d();
    let x0 = params.distance;
    let est = adaptive_integrate(
        |t: f64| flux_kernel(dc, vn, x0, dy, t),
        Domain::HalfLine { scale: time_scale(params) },
        quad,
    )?;
    DensityValue::new(est.value)
}

/// Density of the first time the normal coordinate hits 0, started at
/// distance d: f_tau(t) = (d / sqrt(2 pi sigma2 t^3)) exp(-(d + vn t)^2 / (2 sigma2 t)).
/// Integrates to 1 for vn <= 0 and to exp(-2 vn d / sigma2) for vn > 0.
pub fn first_passage_time_density(params: &ChannelParams, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let (_, vn) = params.drift_split();
    Ok(fpt_kernel(params.distance, vn, params.sigma2, t))
}

fn fpt_kernel(d: f64, vn: f64, s2: f64, t: f64) -> f64 {
    let arg = d + vn * t;
    d / (2.0 * PI * s2 * t * t * t).sqrt() * (-arg * arg / (2.0 * s2 * t)).exp()
}

/// Total probability of ever reaching the receiver plane: 1 for drift toward
/// or parallel to it, exp(-2 vn d / sigma2) for drift away.
pub fn hitting_probability(params: &ChannelParams) -> f64 {
    let (_, vn) = params.drift_split();
    if vn <= 0.0 {
        1.0
    } else {
        (-2.0 * vn * params.distance / params.sigma2).exp()
    }
}

/// Ground-truth oracle for the arrival density at ARBITRARY drift: conditions
/// on the hit time. The normal coordinate's first passage is independent of
/// the tangential free motion, so
/// f(arrival) = integral_0^inf f_tau(t) prod_i N(w_i; v_i t, sigma2 t) dt.
/// This route shares no algebra with the closed forms beyond the SDE itself.
pub fn time_marginal_oracle(
    params: &ChannelParams,
    source: &SourceOffset,
    arrival: &BoundaryOffset,
    quad: &QuadratureConfig,
) -> Result<DensityValue> {
    source.check_dimension(params)?;
    arrival.check_dimension(params)?;
    let w: Vec<f64> = arrival
        .coords()
        .iter()
        .zip(source.coords())
        .map(|(a, s)| a - s)
        .collect();
    let (vt, vn) = params.drift_split();
    let vt = vt.to_vec();
    let d = params.distance;
    let s2 = params.sigma2;
    let integrand = move |t: f64| {
        let mut f = fpt_kernel(d, vn, s2, t);
        if f == 0.0 {
            return 0.0;
        }
        let var = s2 * t;
        for (wi, vi) in w.iter().zip(&vt) {
            let dev = wi - vi * t;
            f *= (-dev * dev / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        }
        f
    };
    let est = adaptive_integrate(
        integrand,
        Domain::HalfLine { scale: time_scale(params) },
        quad,
    )?;
    DensityValue::new(est.value)
}

/// Applies the diffusion generator A f = v . grad f + (sigma2/2) laplacian f
/// by second-order central differences at an interior point.
pub fn generator_apply<F: Fn(&[f64]) -> f64>(
    params: &ChannelParams,
    field: F,
    point: &[f64],
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParams(format!("step must be positive, got {step}")));
    }
    if point.len() != params.dimension {
        return Err(Error::InvalidParams(format!(
            "point has {} components, expected {}",
            point.len(),
            params.dimension
        )));
    }
    let normal = point[params.dimension - 1];
    if normal <= step {
        return Err(Error::Domain(format!(
            "point at height {normal} is within one step {step} of the receiver"
        )));
    }
    let f0 = field(point);
    let mut acc = 0.0;
    let mut buf = point.to_vec();
    for i in 0..params.dimension {
        let xi = point[i];
        buf[i] = xi + step;
        let fp = field(&buf);
        buf[i] = xi - step;
        let fm = field(&buf);
        buf[i] = xi;
        acc += params.drift[i] * (fp - fm) / (2.0 * step)
            + 0.5 * params.sigma2 * (fp - 2.0 * f0 + fm) / (step * step);
    }
    Ok(acc)
}

/// Integrates the arrival density over the whole receiver boundary; used by
/// normalization checks. 2D integrates the line with a tan chart; 3D uses
/// polar coordinates about the density's tangential center of mass.
pub fn normalization_integral(
    params: &ChannelParams,
    source: &SourceOffset,
    quad: &QuadratureConfig,
) -> Result<IntegralEstimate> {
    source.check_dimension(params)?;
    let (vt, _) = params.drift_split();
    let tscale = time_scale(params);
    match params.dimension {
        2 => {
            let center = source.scalar()? + vt[0] * tscale;
            let spread = params.distance + (params.sigma2 * tscale).sqrt() + vt[0].abs() * tscale;
            adaptive_integrate(
                |u: f64| {
                    let arrival = BoundaryOffset::along(center + u);
                    fap_density_2d(params, source, &arrival)
                        .map(|d| d.value)
                        .unwrap_or(f64::NAN)
                },
                Domain::FullLine { scale: spread },
                quad,
            )
        }
        3 => {
            let s = source.pair()?;
            let c = [s[0] + vt[0] * tscale, s[1] + vt[1] * tscale];
            let spread = params.distance
                + (params.sigma2 * tscale).sqrt()
                + (vt[0].abs() + vt[1].abs()) * tscale;
            let inner_quad = QuadratureConfig {
                relative_tolerance: quad.relative_tolerance * 0.1,
                absolute_tolerance: quad.absolute_tolerance * 0.1,
                max_subdivisions: quad.max_subdivisions,
            };
            let outer = |phi: f64| {
                let (sin_phi, cos_phi) = phi.sin_cos();
                adaptive_integrate(
                    |rho: f64| {
                        let arrival = BoundaryOffset::plane(
                            c[0] + rho * cos_phi,
                            c[1] + rho * sin_phi,
                        );
                        fap_density_3d(params, source, &arrival)
                            .map(|d| d.value * rho)
                            .unwrap_or(f64::NAN)
                    },
                    Domain::HalfLine { scale: spread },
                    &inner_quad,
                )
                .map(|e| e.value)
                .unwrap_or(f64::NAN)
            };
            adaptive_integrate(outer, Domain::Finite { a: 0.0, b: 2.0 * PI }, quad)
        }
        d => Err(Error::InvalidParams(format!("unsupported dimension {d}"))),
    }
}
