//! Channel statistics and random channel draws.
//!
//! Row and column order: V-receive rows `0..N`, H-receive rows `N..2N`;
//! V-transmit columns `0..M`, H-transmit columns `M..2M`. Co-polarized blocks
//! (VV, HH) carry `β(1 − l)` and cross-polarized blocks (VH, HV) carry `β·l`.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ClusterSet, SphericalPosition};
use crate::permanent::templates_from_tied;
use crate::polarization::{l_of_xpd, PathlossParams, XpdModel, XpdParams};

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarrayConfig {
    pub s: usize,
    pub m0: usize,
}

impl SubarrayConfig {
    pub fn new(s: usize, m0: usize) -> Result<Self> {
        if s == 0 || m0 == 0 {
            return Err(Error::InvalidParameter(format!("S = {s} and M0 = {m0} must both be at least 1")));
        }
        Ok(Self { s, m0 })
    }

    pub fn num_elements(&self) -> usize {
        self.s * self.m0
    }

    fn check(&self, m: usize) -> Result<()> {
        if self.num_elements() != m {
            return Err(Error::InvalidParameter(format!(
                "S·M0 = {}·{} = {} does not equal M = {m}",
                self.s,
                self.m0,
                self.num_elements()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    n: usize,
    sub: SubarrayConfig,
    beta: Vec<f64>,
    l: Vec<f64>,
    omega: DMatrix<f64>,
    amp: DMatrix<f64>,
}

impl ChannelStats {
    /// Builds the 2N×2M statistics from per-element pathloss gains and
    /// cross-polar fractions.
    pub fn from_columns(n: usize, beta: Vec<f64>, l: Vec<f64>, sub: SubarrayConfig) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if beta.len() != l.len() {
            return Err(Error::Shape(format!("{} gains but {} XPD fractions", beta.len(), l.len())));
        }
        sub.check(beta.len())?;
        if let Some(b) = beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidParameter(format!("pathloss gain must be finite and non-negative, got {b}")));
        }
        if let Some(x) = l.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidParameter(format!("cross-polar fraction must lie in [0, 1], got {x}")));
        }
        let m = beta.len();
        let omega = DMatrix::from_fn(2 * n, 2 * m, |r, c| {
            let col = c % m;
            let co = (r < n) == (c < m);
            if co {
                beta[col] * (1.0 - l[col])
            } else {
                beta[col] * l[col]
            }
        });
        let amp = omega.map(f64::sqrt);
        Ok(Self { n, sub, beta, l, omega, amp })
    }

    pub fn num_ue_antennas(&self) -> usize {
        self.n
    }

    pub fn num_bs_antennas(&self) -> usize {
        self.beta.len()
    }

    pub fn subarrays(&self) -> SubarrayConfig {
        self.sub
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn amp(&self) -> &DMatrix<f64> {
        &self.amp
    }

    /// XPD per element, `(1 − l)/l`.
    pub fn xpd(&self) -> Vec<f64> {
        self.l.iter().map(|l| (1.0 - l) / l).collect()
    }

    /// Copy with every pathloss gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_columns(self.n, self.beta.iter().map(|b| b * factor).collect(), self.l.clone(), self.sub)
    }

    /// Mean co-polarized gain over all elements.
    pub fn mean_co_gain(&self) -> f64 {
        self.beta.iter().zip(&self.l).map(|(b, l)| b * (1.0 - l)).sum::<f64>() / self.beta.len() as f64
    }

    /// Replaces each element's pathloss and cross-polar fraction by its
    /// subarray average.
    pub fn tie_to_subarrays(&self) -> Self {
        let m0 = self.sub.m0;
        let avg = |v: &[f64]| -> Vec<f64> {
            v.chunks(m0)
                .flat_map(|c| {
                    let mean = c.iter().sum::<f64>() / m0 as f64;
                    std::iter::repeat_n(mean, m0)
                })
                .collect()
        };
        Self::from_columns(self.n, avg(&self.beta), avg(&self.l), self.sub).expect("averages of valid columns are valid")
    }

    /// The 2N×2S distinct columns of a tied Ω: V blocks then H blocks.
    pub fn templates(&self) -> Result<DMatrix<f64>> {
        templates_from_tied(&self.omega, self.sub.s, self.sub.m0)
    }

    /// Per-subarray mean of `β` and of the co-polarized gain `β(1 − l)`.
    pub fn subarray_means(&self) -> (Vec<f64>, Vec<f64>) {
        let m0 = self.sub.m0;
        let beta = self.beta.chunks(m0).map(|c| c.iter().sum::<f64>() / m0 as f64).collect();
        let co = self
            .beta
            .chunks(m0)
            .zip(self.l.chunks(m0))
            .map(|(b, l)| b.iter().zip(l).map(|(b, l)| b * (1.0 - l)).sum::<f64>() / m0 as f64)
            .collect();
        (beta, co)
    }
}

/// Channel statistics for a user at `user` with scattering from `clusters`.
pub fn build_channel_stats(
    geom: &ArrayGeometry,
    user: &SphericalPosition,
    clusters: &ClusterSet,
    xpd_params: &XpdParams,
    pathloss: &PathlossParams,
    n: usize,
    sub: SubarrayConfig,
) -> Result<ChannelStats> {
    sub.check(geom.num_elements())?;
    let model = XpdModel::new(geom, clusters, *xpd_params)?;
    let u = user.to_cartesian();
    let mut beta = Vec::with_capacity(geom.num_elements());
    let mut l = Vec::with_capacity(geom.num_elements());
    for m in 0..geom.num_elements() {
        let d = geom.distance_to_point(m, &u)?;
        beta.push(pathloss.gain(d));
        l.push(l_of_xpd(model.xpd(m, &u)?)?);
    }
    ChannelStats::from_columns(n, beta, l, sub)
}

/// Row-major matrix with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.transpose().as_slice().to_vec() }
    }
}

#[derive(Serialize, Deserialize)]
struct StatsRecord {
    num_ue_antennas: usize,
    num_bs_antennas: usize,
    subarrays: SubarrayConfig,
    beta: Vec<f64>,
    l: Vec<f64>,
    omega: MatrixRecord,
    amp: MatrixRecord,
}

impl Serialize for ChannelStats {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        StatsRecord {
            num_ue_antennas: self.n,
            num_bs_antennas: self.beta.len(),
            subarrays: self.sub,
            beta: self.beta.clone(),
            l: self.l.clone(),
            omega: (&self.omega).into(),
            amp: (&self.amp).into(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ChannelStats {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let r = StatsRecord::deserialize(de)?;
        ChannelStats::from_columns(r.num_ue_antennas, r.beta, r.l, r.subarrays).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub nakagami_mu: f64,
    pub seed: u64,
}

impl FadingParams {
    pub fn new(nakagami_mu: f64, seed: u64) -> Result<Self> {
        if !(nakagami_mu >= 0.5 && nakagami_mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("Nakagami shape must be at least 0.5, got {nakagami_mu}")));
        }
        Ok(Self { nakagami_mu, seed })
    }
}

/// One channel realisation: Nakagami amplitudes with mean power `Ω`,
/// uniform phases, every entry independent. Trial `t` uses its own stream.
pub fn sample_channel(stats: &ChannelStats, fading: &FadingParams, trial_index: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(fading.seed);
    rng.set_stream(trial_index);
    let mu = fading.nakagami_mu;
    let gamma = Gamma::new(mu, 1.0 / mu).expect("shape validated by FadingParams");
    let (rows, cols) = stats.omega.shape();
    let mut g = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let x: f64 = gamma.sample(&mut rng);
            let phase: f64 = rng.random::<f64>() * TAU;
            let w = stats.omega[(r, c)];
            if w > 0.0 {
                g[(r, c)] = Complex64::from_polar((w * x).sqrt(), phase);
            }
        }
    }
    g
}
