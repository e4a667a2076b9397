//! Channel parameterization and coordinate conventions shared by every module.
//!
//! Coordinates are arranged so the last axis is the transmission axis: the
//! receiver plane is {x_n = 0}, the source sits at (0, ..., 0, distance), and
//! the domain is x_n > 0. Public operations take tangential offsets only; the
//! normal coordinates are implied. Sign convention, used artifact-wide: a
//! positive normal drift component points away from the receiver plane, so it
//! suppresses arrival mass by exp(-2 v_n d / sigma2).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Physical parameters of a drift-diffusion channel.
///
/// `sigma2` is the variance growth rate per unit time (length^2/time); the
/// diffusion coefficient in D-form conventions is `sigma2 / 2`. `distance` is
/// the source height above the receiver plane (d in 2D, lambda in 3D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Spatial dimension, 2 or 3.
    pub dimension: usize,
    /// Drift velocity, one component per axis; the last component is normal
    /// to the receiver plane, positive pointing away from it.
    pub drift: Vec<f64>,
    /// Diffusion scale sigma^2 > 0.
    pub sigma2: f64,
    /// Source height above the receiver plane, > 0.
    pub distance: f64,
}

impl ChannelParams {
    /// Validates and builds channel parameters.
    pub fn new(dimension: usize, drift: Vec<f64>, sigma2: f64, distance: f64) -> Result<Self> {
        if dimension != 2 && dimension != 3 {
            return Err(Error::InvalidParams(format!(
                "dimension must be 2 or 3, got {dimension}"
            )));
        }
        if drift.len() != dimension {
            return Err(Error::InvalidParams(format!(
                "drift has {} components, expected {dimension}",
                drift.len()
            )));
        }
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("drift components must be finite".into()));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParams(format!(
                "sigma2 must be positive and finite, got {sigma2}"
            )));
        }
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::InvalidParams(format!(
                "distance must be positive and finite, got {distance}"
            )));
        }
        Ok(Self { dimension, drift, sigma2, distance })
    }

    /// Diffusion coefficient D = sigma^2 / 2, exactly.
    pub fn diffusion_d(&self) -> f64 {
        self.sigma2 / 2.0
    }

    /// Splits the drift into (tangential components, normal component).
    /// Recombining `[tangential..., normal]` reproduces `drift` exactly.
    pub fn drift_split(&self) -> (&[f64], f64) {
        let n = self.drift.len();
        (&self.drift[..n - 1], self.drift[n - 1])
    }

    /// Euclidean norm of the full drift vector.
    pub fn drift_norm(&self) -> f64 {
        self.drift.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Tangential coordinates of the source point; the normal coordinate is
/// implicitly the channel `distance`. Length is dimension - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceOffset(Vec<f64>);

/// Tangential coordinates of a point on the receiver plane; the normal
/// coordinate is implicitly 0. Length is dimension - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundaryOffset(Vec<f64>);

macro_rules! offset_impl {
    ($name:ident) => {
        impl $name {
            /// Builds an offset from raw tangential coordinates.
            pub fn new(coords: Vec<f64>) -> Result<Self> {
                if coords.is_empty() || coords.len() > 2 {
                    return Err(Error::InvalidParams(format!(
                        "tangential offset needs 1 or 2 components, got {}",
                        coords.len()
                    )));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParams(
                        "offset components must be finite".into(),
                    ));
                }
                Ok(Self(coords))
            }

            /// 2D offset along the receiver line.
            pub fn along(x1: f64) -> Self {
                Self(vec![x1])
            }

            /// 3D offset in the receiver plane.
            pub fn plane(x1: f64, x2: f64) -> Self {
                Self(vec![x1, x2])
            }

            /// The tangential origin for the given dimension.
            pub fn origin(dimension: usize) -> Self {
                Self(vec![0.0; dimension.saturating_sub(1).max(1)])
            }

            pub fn coords(&self) -> &[f64] {
                &self.0
            }

            /// The single tangential coordinate; errors unless 2D-shaped.
            pub fn scalar(&self) -> Result<f64> {
                match self.0.as_slice() {
                    [x] => Ok(*x),
                    _ => Err(Error::InvalidParams(format!(
                        "expected a 1-component tangential offset, got {}",
                        self.0.len()
                    ))),
                }
            }

            /// The tangential coordinate pair; errors unless 3D-shaped.
            pub fn pair(&self) -> Result<[f64; 2]> {
                match self.0.as_slice() {
                    [a, b] => Ok([*a, *b]),
                    _ => Err(Error::InvalidParams(format!(
                        "expected a 2-component tangential offset, got {}",
                        self.0.len()
                    ))),
                }
            }

            /// Checks compatibility with the channel dimension.
            pub fn check_dimension(&self, params: &ChannelParams) -> Result<()> {
                if self.0.len() != params.dimension - 1 {
                    return Err(Error::InvalidParams(format!(
                        "offset has {} components, expected {} for dimension {}",
                        self.0.len(),
                        params.dimension - 1,
                        params.dimension
                    )));
                }
                Ok(())
            }
        }
    };
}

offset_impl!(SourceOffset);
offset_impl!(BoundaryOffset);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_valid_channels() {
        let p = ChannelParams::new(2, vec![0.0, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(p.diffusion_d(), 0.5);
        let p = ChannelParams::new(3, vec![0.5, -0.2, -1.0], 2.0, 3.0).unwrap();
        assert_eq!(p.diffusion_d(), 1.0);
    }

    #[test]
    fn rejects_bad_channels() {
        assert!(ChannelParams::new(2, vec![0.0, 0.0], -1.0, 1.0).is_err());
        assert!(ChannelParams::new(4, vec![0.0; 4], 1.0, 1.0).is_err());
        assert!(ChannelParams::new(2, vec![0.0], 1.0, 1.0).is_err());
        assert!(ChannelParams::new(2, vec![0.0, f64::NAN], 1.0, 1.0).is_err());
        assert!(ChannelParams::new(2, vec![0.0, 0.0], 1.0, 0.0).is_err());
        assert!(ChannelParams::new(2, vec![0.0, 0.0], f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn drift_split_recombines() {
        let p = ChannelParams::new(2, vec![3.0, -4.0], 1.0, 1.0).unwrap();
        let (tan, normal) = p.drift_split();
        assert_eq!(tan, &[3.0]);
        assert_eq!(normal, -4.0);

        let p = ChannelParams::new(3, vec![1.0, 2.0, 5.0], 1.0, 1.0).unwrap();
        let (tan, normal) = p.drift_split();
        let mut recombined = tan.to_vec();
        recombined.push(normal);
        assert_eq!(recombined, p.drift);
    }

    #[test]
    fn json_round_trip_uses_documented_keys() {
        let p = ChannelParams::new(3, vec![0.5, -0.2, -1.0], 2.0, 3.0).unwrap();
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["dimension"], 3);
        assert_eq!(json["drift"].as_array().unwrap().len(), 3);
        assert_eq!(json["sigma2"], 2.0);
        assert_eq!(json["distance"], 3.0);
        let back: ChannelParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn offsets_validate_shape() {
        assert!(SourceOffset::new(vec![]).is_err());
        assert!(SourceOffset::new(vec![f64::NAN]).is_err());
        assert!(SourceOffset::new(vec![1.0, 2.0, 3.0]).is_err());
        let p2 = ChannelParams::new(2, vec![0.0, 0.0], 1.0, 1.0).unwrap();
        assert!(BoundaryOffset::along(1.0).check_dimension(&p2).is_ok());
        assert!(BoundaryOffset::plane(1.0, 2.0).check_dimension(&p2).is_err());
        assert_eq!(SourceOffset::origin(3).coords(), &[0.0, 0.0]);
        assert_eq!(BoundaryOffset::along(2.5).scalar().unwrap(), 2.5);
        assert!(BoundaryOffset::along(2.5).pair().is_err());
    }
}
