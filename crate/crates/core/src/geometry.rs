//! Array, user and cluster geometry.
//!
//! The array lies in the x-y plane centred at the origin with the z-axis along
//! the array normal. Linear arrays run along x. Planar arrays are indexed
//! row-major with columns along x and rows along y, so sorting elements by
//! `(y, x)` reproduces the index order.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

pub type Cartesian = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Linear,
    Planar { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    num_elements: usize,
    layout: Layout,
    spacing: f64,
    wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, layout: Layout, spacing: f64, wavelength: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::InvalidParameter("array needs at least one element".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!("element spacing must be positive, got {spacing}")));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidParameter(format!("wavelength must be positive, got {wavelength}")));
        }
        if let Layout::Planar { rows, cols } = layout {
            if rows * cols != num_elements {
                return Err(Error::InvalidParameter(format!(
                    "planar layout {rows}x{cols} does not hold {num_elements} elements"
                )));
            }
            if cols == 1 && rows > 1 {
                return Err(Error::InvalidParameter(
                    "planar layout with a single column has no x extent; use a linear layout".into(),
                ));
            }
        }
        Ok(Self { num_elements, layout, spacing, wavelength })
    }

    /// Linear array along x with half-wavelength spacing.
    pub fn linear_half_wavelength(num_elements: usize, wavelength: f64) -> Result<Self> {
        Self::new(num_elements, Layout::Linear, wavelength / 2.0, wavelength)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    fn grid(&self) -> (usize, usize) {
        match self.layout {
            Layout::Linear => (1, self.num_elements),
            Layout::Planar { rows, cols } => (rows, cols),
        }
    }

    pub fn x_extent(&self) -> f64 {
        (self.grid().1 - 1) as f64 * self.spacing
    }

    pub fn y_extent(&self) -> f64 {
        (self.grid().0 - 1) as f64 * self.spacing
    }

    /// Ratio k of the y-extent to the x-extent (0 for linear arrays).
    pub fn aspect_ratio(&self) -> f64 {
        let x = self.x_extent();
        if x == 0.0 {
            0.0
        } else {
            self.y_extent() / x
        }
    }

    /// Diagonal dimension D: distance between the two extreme corner elements.
    /// A single-element array reports its spacing so that D stays positive.
    pub fn diagonal(&self) -> f64 {
        let d = self.x_extent().hypot(self.y_extent());
        if d == 0.0 {
            self.spacing
        } else {
            d
        }
    }

    /// Index of the reference ("0-th") element nearest the centroid.
    pub fn center_index(&self) -> usize {
        self.num_elements / 2
    }

    pub fn element_position(&self, m: usize) -> Result<Cartesian> {
        if m >= self.num_elements {
            return Err(Error::IndexOutOfRange { index: m, count: self.num_elements });
        }
        let (rows, cols) = self.grid();
        let (r, c) = (m / cols, m % cols);
        let x = (c as f64 - (cols as f64 - 1.0) / 2.0) * self.spacing;
        let y = (r as f64 - (rows as f64 - 1.0) / 2.0) * self.spacing;
        Ok(Cartesian::new(x, y, 0.0))
    }

    pub fn positions(&self) -> Vec<Cartesian> {
        (0..self.num_elements)
            .map(|m| self.element_position(m).expect("index in range"))
            .collect()
    }

    /// Elements nearest the main diagonal through the two extreme corners,
    /// ordered from the (-x, -y) corner to the (+x, +y) corner.
    pub fn diagonal_elements(&self) -> Vec<usize> {
        let (rows, cols) = self.grid();
        if rows == 1 || cols == 1 {
            return (0..self.num_elements).collect();
        }
        // one element per step along the longer side, row/col picked by rounding
        if cols >= rows {
            (0..cols)
                .map(|c| {
                    let r = (c as f64 * (rows - 1) as f64 / (cols - 1) as f64).round() as usize;
                    r * cols + c
                })
                .collect()
        } else {
            (0..rows)
                .map(|r| {
                    let c = (r as f64 * (cols - 1) as f64 / (rows - 1) as f64).round() as usize;
                    r * cols + c
                })
                .collect()
        }
    }

    pub fn distance_to_point(&self, m: usize, p: &Cartesian) -> Result<f64> {
        let d = (p - self.element_position(m)?).norm();
        if d == 0.0 {
            return Err(Error::CoincidentPoint(m));
        }
        Ok(d)
    }

    /// Departure angles (zenith, azimuth) from element `m` towards a cluster.
    pub fn aod_to_cluster(&self, m: usize, cluster: &Cluster) -> Result<(f64, f64)> {
        let v = cluster.position - self.element_position(m)?;
        if v.norm() == 0.0 {
            return Err(Error::CoincidentPoint(m));
        }
        let s = SphericalPosition::from_cartesian(&v);
        Ok((s.theta, s.phi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPosition {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPosition {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::InvalidParameter(format!("zenith angle {theta} outside [0, pi]")));
        }
        Ok(Self { r, theta, phi: phi.rem_euclid(TAU) })
    }

    pub fn to_cartesian(&self) -> Cartesian {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Cartesian::new(self.r * st * cp, self.r * st * sp, self.r * ct)
    }

    /// Spherical coordinates of a non-zero vector; azimuth in [0, 2pi).
    pub fn from_cartesian(v: &Cartesian) -> Self {
        let r = v.norm();
        let theta = (v.z / r).clamp(-1.0, 1.0).acos();
        let phi = v.y.atan2(v.x).rem_euclid(TAU);
        Self { r, theta, phi }
    }

    /// Same direction at a different range.
    pub fn with_range(&self, r: f64) -> Self {
        Self { r, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub position: Cartesian,
    /// Azimuth spread in radians.
    pub azimuth_spread: f64,
    /// Truncation spread in radians.
    pub truncation_spread: f64,
}

impl Cluster {
    pub fn new(position: Cartesian, azimuth_spread: f64, truncation_spread: f64) -> Result<Self> {
        if !(azimuth_spread > 0.0 && azimuth_spread.is_finite()) {
            return Err(Error::InvalidParameter(format!("azimuth spread must be positive, got {azimuth_spread}")));
        }
        if !(truncation_spread > 0.0 && truncation_spread <= TAU) {
            return Err(Error::InvalidParameter(format!(
                "truncation spread must lie in (0, 2pi], got {truncation_spread}"
            )));
        }
        if position.norm() == 0.0 {
            return Err(Error::InvalidParameter("cluster placed at the array centre".into()));
        }
        Ok(Self { position, azimuth_spread, truncation_spread })
    }

    pub fn spherical(&self) -> SphericalPosition {
        SphericalPosition::from_cartesian(&self.position)
    }

    /// Same cluster moved along its direction to range `r`.
    pub fn at_range(&self, r: f64) -> Self {
        Self { position: self.position * (r / self.position.norm()), ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InvalidParameter("at least one cluster is required".into()));
        }
        Ok(Self { clusters })
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Cluster> {
        self.clusters.iter()
    }

    pub fn as_slice(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Each cluster moved to range `c[l] * r_u` along its own direction.
    pub fn scaled_to(&self, c_ratios: &[f64], r_u: f64) -> Result<Self> {
        if c_ratios.len() != self.clusters.len() {
            return Err(Error::Shape(format!(
                "{} distance ratios for {} clusters",
                c_ratios.len(),
                self.clusters.len()
            )));
        }
        Ok(Self {
            clusters: self
                .clusters
                .iter()
                .zip(c_ratios)
                .map(|(cl, &c)| cl.at_range(c * r_u))
                .collect(),
        })
    }
}

impl<'a> IntoIterator for &'a ClusterSet {
    type Item = &'a Cluster;
    type IntoIter = std::slice::Iter<'a, Cluster>;
    fn into_iter(self) -> Self::IntoIter {
        self.clusters.iter()
    }
}

/// Directional cosine between the user direction and the array diagonal.
pub fn delta_u(user: &SphericalPosition, k: f64) -> f64 {
    let st = user.theta.sin();
    ((st * user.phi.cos() + k * st * user.phi.sin()) / (1.0 + k * k).sqrt()).abs()
}

/// Signed cosine between the cluster azimuth and the array diagonal.
pub fn delta_l(cluster: &Cluster, k: f64) -> f64 {
    let phi0 = cluster.spherical().phi;
    (phi0.cos() + k * phi0.sin()) / (1.0 + k * k).sqrt()
}
