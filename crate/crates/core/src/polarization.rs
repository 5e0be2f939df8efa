//! XPD model: a distance term times an AoD term, and the co-/cross-polarized
//! power split it implies.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Cartesian, ClusterSet, SphericalPosition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XpdParams {
    /// Linear XPD at unit propagation distance.
    pub xpd_at_unit_distance: f64,
    /// Growth exponent of XPD with distance. Zero disables the distance term.
    pub eta: f64,
}

impl XpdParams {
    pub fn new(xpd_at_unit_distance: f64, eta: f64) -> Result<Self> {
        if !(xpd_at_unit_distance > 0.0 && xpd_at_unit_distance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "XPD at unit distance must be positive, got {xpd_at_unit_distance}"
            )));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be non-negative, got {eta}")));
        }
        Ok(Self { xpd_at_unit_distance, eta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossParams {
    /// Linear gain at unit distance.
    pub beta0: f64,
    pub alpha: f64,
}

impl PathlossParams {
    pub fn new(beta0: f64, alpha: f64) -> Result<Self> {
        if !(beta0 > 0.0 && beta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta0 must be positive, got {beta0}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { beta0, alpha })
    }

    pub fn gain(&self, d: f64) -> f64 {
        self.beta0 * d.powf(-self.alpha)
    }
}

/// Distance-dependent XPD component.
pub fn chi1(d: f64, p: &XpdParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidParameter(format!("propagation distance must be positive, got {d}")));
    }
    Ok(p.xpd_at_unit_distance * d.powf(p.eta))
}

/// Numerator and denominator of the AoD-dependent XPD term before
/// normalisation. `aods[l]` is the mean azimuth departure angle towards
/// cluster `l`.
fn chi2_parts(aods: &[f64], clusters: &ClusterSet) -> Result<(f64, f64)> {
    if aods.len() != clusters.len() {
        return Err(Error::Shape(format!("{} azimuths for {} clusters", aods.len(), clusters.len())));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&phi, cl) in aods.iter().zip(clusters) {
        let w = cl.azimuth_spread;
        let dphi = cl.truncation_spread;
        let e = (dphi / (SQRT_2 * w)).exp();
        let a = 1.0 + 2.0 * w * w;
        let c2 = (2.0 * phi).cos();
        let tail = 2.0 * dphi.cos() * c2 - 2.0 * SQRT_2 * w * dphi.sin() * c2;
        num += 2.0 * e * (a - c2) - 2.0 * a + tail;
        den += 2.0 * e * (a + c2) - 2.0 * a - tail;
    }
    if !(num > 0.0) || !(den > 0.0) {
        return Err(Error::Chi2Undefined(format!("numerator {num:e}, denominator {den:e}")));
    }
    Ok((num, den))
}

/// Unnormalised AoD-dependent XPD term.
pub fn chi2_raw(aods: &[f64], clusters: &ClusterSet) -> Result<f64> {
    let (num, den) = chi2_parts(aods, clusters)?;
    Ok(num / den)
}

pub fn chi2(aods: &[f64], clusters: &ClusterSet, normalizer: f64) -> Result<f64> {
    Ok(normalizer * chi2_raw(aods, clusters)?)
}

/// Azimuth departure angles from element `m` to every cluster.
pub fn element_aods(geom: &ArrayGeometry, m: usize, clusters: &ClusterSet) -> Result<Vec<f64>> {
    clusters
        .iter()
        .map(|c| geom.aod_to_cluster(m, c).map(|(_, phi)| phi))
        .collect()
}

/// Normaliser making the AoD term equal one at the centre element.
pub fn calibrate_chi2_normalizer(geom: &ArrayGeometry, clusters: &ClusterSet) -> Result<f64> {
    let aods = element_aods(geom, geom.center_index(), clusters)?;
    Ok(1.0 / chi2_raw(&aods, clusters)?)
}

/// Per-element XPD for a fixed array and cluster layout, with the AoD
/// normaliser computed once.
#[derive(Debug, Clone)]
pub struct XpdModel<'a> {
    geom: &'a ArrayGeometry,
    clusters: &'a ClusterSet,
    params: XpdParams,
    normalizer: f64,
}

impl<'a> XpdModel<'a> {
    pub fn new(geom: &'a ArrayGeometry, clusters: &'a ClusterSet, params: XpdParams) -> Result<Self> {
        let normalizer = calibrate_chi2_normalizer(geom, clusters)?;
        Ok(Self { geom, clusters, params, normalizer })
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn chi1_at(&self, m: usize, user: &Cartesian) -> Result<f64> {
        chi1(self.geom.distance_to_point(m, user)?, &self.params)
    }

    pub fn chi2_at(&self, m: usize) -> Result<f64> {
        chi2(&element_aods(self.geom, m, self.clusters)?, self.clusters, self.normalizer)
    }

    pub fn xpd(&self, m: usize, user: &Cartesian) -> Result<f64> {
        Ok(self.chi1_at(m, user)? * self.chi2_at(m)?)
    }
}

/// XPD of the channel from element `m` to the user.
pub fn xpd(
    m: usize,
    geom: &ArrayGeometry,
    user: &SphericalPosition,
    clusters: &ClusterSet,
    params: &XpdParams,
) -> Result<f64> {
    XpdModel::new(geom, clusters, *params)?.xpd(m, &user.to_cartesian())
}

/// Maps XPD in [0, inf) to l in [0, 1].
pub fn l_of_xpd(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("XPD must be non-negative, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 + x))
}

/// Co- and cross-polarized mean power gains for pathloss `beta` and
/// normalised cross-polar fraction `l`.
pub fn power_gains(beta: f64, l: f64) -> (f64, f64) {
    (beta * (1.0 - l), beta * l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Cluster, Layout};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn section6_clusters() -> ClusterSet {
        let w = 35f64.to_radians();
        let coords = [
            (29.3, 0.0, 6.2),
            (24.6, -4.3, 1.3),
            (39.0, -9.0, 0.0),
            (32.7, -2.9, -2.9),
            (48.5, -8.7, -8.6),
        ];
        ClusterSet::new(
            coords
                .iter()
                .map(|&(x, y, z)| Cluster::new(Cartesian::new(x, y, z), w, PI).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chi1_values() {
        let p = XpdParams::new(10f64.powf(0.5), 0.8).unwrap();
        assert_eq!(chi1(1.0, &p).unwrap(), p.xpd_at_unit_distance);
        assert!((chi1(30.0, &p).unwrap() - 48.0504).abs() < 1e-3);
        let flat = XpdParams::new(3.0, 0.0).unwrap();
        assert_eq!(chi1(2.0, &flat).unwrap(), chi1(70.0, &flat).unwrap());
        assert!(chi1(0.0, &p).is_err());
        assert!(chi1(-1.0, &p).is_err());
    }

    // Independent transcription of the AoD term, written per cluster as
    // separate numerator/denominator sums.
    fn chi2_oracle(aods: &[f64], w: f64, dphi: f64) -> f64 {
        let mut n = 0.0;
        let mut d = 0.0;
        for &p in aods {
            let k = (dphi / (2f64.sqrt() * w)).exp();
            n += 2.0 * k * (1.0 + 2.0 * w.powi(2) - (2.0 * p).cos()) - 2.0 * (1.0 + 2.0 * w.powi(2))
                + 2.0 * dphi.cos() * (2.0 * p).cos()
                - 2.0 * 2f64.sqrt() * w * dphi.sin() * (2.0 * p).cos();
            d += 2.0 * k * (1.0 + 2.0 * w.powi(2) + (2.0 * p).cos()) - 2.0 * (1.0 + 2.0 * w.powi(2))
                - 2.0 * dphi.cos() * (2.0 * p).cos()
                + 2.0 * 2f64.sqrt() * w * dphi.sin() * (2.0 * p).cos();
        }
        n / d
    }

    #[test]
    fn chi2_is_one_at_centre_after_calibration() {
        let g = ArrayGeometry::linear_half_wavelength(70, 0.1).unwrap();
        let cl = section6_clusters();
        let norm = calibrate_chi2_normalizer(&g, &cl).unwrap();
        let aods = element_aods(&g, g.center_index(), &cl).unwrap();
        assert!(rel(chi2(&aods, &cl, norm).unwrap(), 1.0) < 1e-12);
    }

    #[test]
    fn chi2_end_element_differs_from_centre() {
        let g = ArrayGeometry::linear_half_wavelength(70, 0.1).unwrap();
        let cl = section6_clusters();
        let norm = calibrate_chi2_normalizer(&g, &cl).unwrap();
        let end = element_aods(&g, 0, &cl).unwrap();
        let centre = element_aods(&g, g.center_index(), &cl).unwrap();
        let w = 35f64.to_radians();
        let expected = chi2_oracle(&end, w, PI) / chi2_oracle(&centre, w, PI);
        let got = chi2(&end, &cl, norm).unwrap();
        assert!(rel(got, expected) < 1e-12);
        assert!((got - 1.0).abs() > 1e-6);
    }

    #[test]
    fn boresight_cluster_normaliser() {
        let g = ArrayGeometry::linear_half_wavelength(5, 0.1).unwrap();
        let cl = ClusterSet::new(vec![Cluster::new(Cartesian::new(0.0, 0.0, 20.0), 0.5, PI).unwrap()]).unwrap();
        let norm = calibrate_chi2_normalizer(&g, &cl).unwrap();
        let phi = g.aod_to_cluster(g.center_index(), &cl.as_slice()[0]).unwrap().1;
        assert!(rel(norm, 1.0 / chi2_oracle(&[phi], 0.5, PI)) < 1e-12);

        // moving the cluster changes the calibration
        let moved = ClusterSet::new(vec![Cluster::new(Cartesian::new(10.0, 5.0, 20.0), 0.5, PI).unwrap()]).unwrap();
        assert!((calibrate_chi2_normalizer(&g, &moved).unwrap() - norm).abs() > 1e-9);
    }

    #[test]
    fn identical_aods_identical_chi2() {
        let cl = ClusterSet::new(vec![Cluster::new(Cartesian::new(10.0, 0.0, 0.0), 0.5, 2.0).unwrap()]).unwrap();
        assert_eq!(chi2(&[0.3], &cl, 1.7).unwrap(), chi2(&[0.3], &cl, 1.7).unwrap());
        assert!(chi2(&[0.3, 0.1], &cl, 1.0).is_err());
    }

    #[test]
    fn chi2_reports_invalid_regime() {
        // a vanishing truncation spread collapses the co-polar sum to zero
        let cl = ClusterSet::new(vec![Cluster::new(Cartesian::new(10.0, 0.0, 0.0), 0.5, 1e-10).unwrap()]).unwrap();
        assert!(matches!(chi2_raw(&[0.0], &cl), Err(Error::Chi2Undefined(_))));
    }

    #[test]
    fn xpd_is_product_of_components() {
        let g = ArrayGeometry::linear_half_wavelength(70, 0.1).unwrap();
        let cl = section6_clusters();
        let p = XpdParams::new(10f64.powf(0.5), 0.8).unwrap();
        let user = SphericalPosition::new(30.0, FRAC_PI_2, 0.0).unwrap();
        let model = XpdModel::new(&g, &cl, p).unwrap();
        let q = user.to_cartesian();
        for m in [0, 35, 69] {
            let d = g.distance_to_point(m, &q).unwrap();
            let c2 = chi2(&element_aods(&g, m, &cl).unwrap(), &cl, model.normalizer()).unwrap();
            let expected = p.xpd_at_unit_distance * d.powf(0.8) * c2;
            assert!(rel(xpd(m, &g, &user, &cl, &p).unwrap(), expected) < 1e-12);
        }
        assert!((model.xpd(0, &q).unwrap() - model.xpd(g.center_index(), &q).unwrap()).abs() > 1e-6);
    }

    #[test]
    fn xpd_unit_distance_calibration_point() {
        let g = ArrayGeometry::new(3, Layout::Linear, 0.05, 0.1).unwrap();
        let cl = section6_clusters();
        let p = XpdParams::new(3.2, 0.8).unwrap();
        let user = SphericalPosition::new(1.0, 0.0, 0.0).unwrap();
        assert!(rel(xpd(1, &g, &user, &cl, &p).unwrap(), 3.2) < 1e-12);
    }

    #[test]
    fn l_mapping() {
        assert_eq!(l_of_xpd(0.0).unwrap(), 1.0);
        assert_eq!(l_of_xpd(1.0).unwrap(), 0.5);
        assert_eq!(l_of_xpd(f64::INFINITY).unwrap(), 0.0);
        assert!(l_of_xpd(1e300).unwrap() < 1e-299);
        assert!(l_of_xpd(-0.1).is_err());
    }

    #[test]
    fn gains_split() {
        assert_eq!(power_gains(2.0, 0.0), (2.0, 0.0));
        assert_eq!(power_gains(2.0, 1.0), (0.0, 2.0));
        let (co, cross) = power_gains(1e-6, 0.25);
        assert!(rel(co, 7.5e-7) < 1e-12 && rel(cross, 2.5e-7) < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn co_over_cross_is_xpd(x in 1e-6f64..1e6, beta in 1e-12f64..1.0) {
                let (co, cross) = power_gains(beta, l_of_xpd(x).unwrap());
                prop_assert!(rel(co / cross, x) < 1e-9);
                prop_assert!(rel(co + cross, beta) < 1e-12);
            }

            #[test]
            fn chi1_increasing(d in 0.1f64..100.0, step in 1e-3f64..10.0, eta in 0.01f64..3.0) {
                let p = XpdParams::new(3.0, eta).unwrap();
                prop_assert!(chi1(d + step, &p).unwrap() > chi1(d, &p).unwrap());
            }
        }
    }
}
