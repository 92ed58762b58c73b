//! Synthetic target networks.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{AbsNetwork, NetworkFile, FORMAT_VERSION};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// Weight vectors pairwise separated modulo sign.
    Separated,
    /// Near-duplicate pairs, optionally with cancelling coefficients.
    ClusteredPairs,
    /// `u_j = cos(πj/k) v + sin(πj/k) w` with alternating coefficients.
    HardCsq,
    /// I.i.d. uniform weight vectors.
    Random,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 4] =
        [InstanceKind::Separated, InstanceKind::ClusteredPairs, InstanceKind::HardCsq, InstanceKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::Separated => "separated",
            InstanceKind::ClusteredPairs => "clustered_pairs",
            InstanceKind::HardCsq => "hard_csq",
            InstanceKind::Random => "random",
        }
    }
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        InstanceKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown instance kind {s:?}")))
    }
}

fn default_separation() -> f64 {
    0.5
}

fn default_pair_distance() -> f64 {
    1e-4
}

fn default_pair_cancellation() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceKnobs {
    /// Minimum of `‖uᵢ − uⱼ‖` and `‖uᵢ + uⱼ‖` between distinct groups.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Distance between the two members of a clustered pair.
    #[serde(default = "default_pair_distance")]
    pub pair_distance: f64,
    /// The second member of a pair gets `−pair_cancellation` times the
    /// first member's coefficient.
    #[serde(default = "default_pair_cancellation")]
    pub pair_cancellation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// Draw orthonormal weight vectors (separated kind).
    #[serde(default)]
    pub orthogonal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_term: Option<Vec<f64>>,
}

impl Default for InstanceKnobs {
    fn default() -> Self {
        Self {
            separation: default_separation(),
            pair_distance: default_pair_distance(),
            pair_cancellation: default_pair_cancellation(),
            lambdas: None,
            orthogonal: false,
            linear_term: None,
        }
    }
}

/// Everything needed to regenerate an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub kind: InstanceKind,
    pub k: usize,
    pub d: usize,
    #[serde(rename = "R")]
    pub norm_bound: f64,
    pub seed: u64,
    #[serde(default)]
    pub knobs: InstanceKnobs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub descriptor: InstanceDescriptor,
    pub network: AbsNetwork,
    /// `(v, w)` for the hard instance.
    pub plane: Option<(DVector<f64>, DVector<f64>)>,
}

pub const INSTANCE_FORMAT: &str = "netlearn/instance";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format: String,
    pub version: u32,
    pub descriptor: InstanceDescriptor,
    pub network: NetworkFile,
}

impl Instance {
    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            format: INSTANCE_FORMAT.to_string(),
            version: FORMAT_VERSION,
            descriptor: self.descriptor.clone(),
            network: self.network.to_file(),
        }
    }
}

impl InstanceFile {
    pub fn into_network(self) -> Result<AbsNetwork> {
        if self.format != INSTANCE_FORMAT {
            return invalid(format!("expected format {INSTANCE_FORMAT:?}, found {:?}", self.format));
        }
        self.network.into_network()
    }
}

const MAX_REJECTIONS: usize = 10_000;

fn unit<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    let mut v = vec![0.0; d];
    loop {
        rng::fill_gaussian(rng, &mut v);
        let x = DVector::from_column_slice(&v);
        let n = x.norm();
        if n > 0.0 {
            return x / n;
        }
    }
}

fn sign_separation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm().min((a + b).norm())
}

/// `count` unit vectors, pairwise separated by `sep` modulo sign.
fn separated_units<R: Rng>(rng: &mut R, d: usize, count: usize, sep: f64) -> Result<Vec<DVector<f64>>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut placed = false;
        for _ in 0..MAX_REJECTIONS {
            let u = unit(rng, d);
            if out.iter().all(|v| sign_separation(&u, v) >= sep) {
                out.push(u);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Infeasible(format!(
                "could not place {count} unit vectors in dimension {d} with separation {sep}"
            )));
        }
    }
    Ok(out)
}

fn orthonormal_units<R: Rng>(rng: &mut R, d: usize, count: usize) -> Result<Vec<DVector<f64>>> {
    if count > d {
        return Err(Error::Infeasible(format!("{count} orthonormal vectors do not fit in dimension {d}")));
    }
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut u = unit(rng, d);
        for v in &out {
            u -= v * v.dot(&u);
        }
        let n = u.norm();
        if n > 1e-6 {
            out.push(u / n);
        }
    }
    Ok(out)
}

/// Unit vector at distance exactly `dist` from `u`.
fn partner<R: Rng>(rng: &mut R, u: &DVector<f64>, dist: f64) -> DVector<f64> {
    let mut t = unit(rng, u.len());
    t -= u * u.dot(&t);
    let t = t.normalize();
    let theta = 2.0 * (dist / 2.0).asin();
    u * theta.cos() + t * theta.sin()
}

fn default_lambdas<R: Rng>(rng: &mut R, k: usize, norm_bound: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k)
        .map(|_| {
            let a = 0.5 + 0.5 * rng.random::<f64>();
            if rng.random_bool(0.5) {
                a
            } else {
                -a
            }
        })
        .collect();
    rescale(raw, norm_bound)
}

fn rescale(raw: Vec<f64>, norm_bound: f64) -> Vec<f64> {
    let l1: f64 = raw.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return raw;
    }
    raw.into_iter().map(|v| v * norm_bound / l1).collect()
}

pub fn generate_instance(
    kind: InstanceKind,
    k: usize,
    d: usize,
    norm_bound: f64,
    seed: u64,
    knobs: &InstanceKnobs,
) -> Result<Instance> {
    if k == 0 || d == 0 {
        return invalid("k and d must be at least 1");
    }
    if !(norm_bound >= 1.0 && norm_bound.is_finite()) {
        return invalid("R must be finite and >= 1");
    }
    if !(knobs.separation > 0.0 && knobs.separation <= std::f64::consts::SQRT_2) {
        return invalid("separation must lie in (0, sqrt 2]");
    }
    if !(knobs.pair_distance > 0.0 && knobs.pair_distance < 1.0) {
        return invalid("pair distance must lie in (0, 1)");
    }
    if !(0.0..=1.0).contains(&knobs.pair_cancellation) {
        return invalid("pair cancellation must lie in [0, 1]");
    }
    let mut rng = rng::block_rng(rng::derive_seed(seed, "instance"), 0);
    let mut plane = None;
    let (us, mut lambdas) = match kind {
        InstanceKind::Random => {
            let us = (0..k).map(|_| unit(&mut rng, d)).collect();
            (us, default_lambdas(&mut rng, k, norm_bound))
        }
        InstanceKind::Separated => {
            let us = if knobs.orthogonal {
                orthonormal_units(&mut rng, d, k)?
            } else {
                separated_units(&mut rng, d, k, knobs.separation)?
            };
            (us, default_lambdas(&mut rng, k, norm_bound))
        }
        InstanceKind::ClusteredPairs => {
            if d < 2 {
                return Err(Error::Infeasible("clustered pairs need d >= 2".into()));
            }
            let groups = k.div_ceil(2);
            let centers = if knobs.orthogonal {
                orthonormal_units(&mut rng, d, groups)?
            } else {
                separated_units(&mut rng, d, groups, knobs.separation)?
            };
            let mut us = Vec::with_capacity(k);
            let mut raw = Vec::with_capacity(k);
            for (g, c) in centers.iter().enumerate() {
                let a = 0.5 + 0.5 * rng.random::<f64>();
                let a = if rng.random_bool(0.5) { a } else { -a };
                us.push(c.clone());
                raw.push(a);
                if 2 * g + 1 < k {
                    us.push(partner(&mut rng, c, knobs.pair_distance));
                    raw.push(-knobs.pair_cancellation * a);
                }
            }
            (us, rescale(raw, norm_bound))
        }
        InstanceKind::HardCsq => {
            if d < 2 {
                return Err(Error::Infeasible("the hard instance needs d >= 2".into()));
            }
            let vw = orthonormal_units(&mut rng, d, 2)?;
            let (v, w) = (vw[0].clone(), vw[1].clone());
            let kf = k as f64;
            let us = (1..=k)
                .map(|j| {
                    let angle = std::f64::consts::PI * j as f64 / kf;
                    &v * angle.cos() + &w * angle.sin()
                })
                .collect();
            let lambdas = (1..=k).map(|j| if j % 2 == 0 { norm_bound / kf } else { -norm_bound / kf }).collect();
            plane = Some((v, w));
            (us, lambdas)
        }
    };
    if let Some(given) = &knobs.lambdas {
        if given.len() != k {
            return invalid(format!("{} coefficients given for k = {k}", given.len()));
        }
        lambdas = given.clone();
    }
    let w = match &knobs.linear_term {
        Some(v) if v.len() != d => return invalid(format!("linear term has length {}, expected {d}", v.len())),
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(d),
    };
    let network = AbsNetwork::new(w, lambdas, us, norm_bound)?;
    Ok(Instance {
        descriptor: InstanceDescriptor { kind, k, d, norm_bound, seed, knobs: knobs.clone() },
        network,
        plane,
    })
}

/// Rebuilds the instance a descriptor names.
pub fn regenerate(desc: &InstanceDescriptor) -> Result<Instance> {
    generate_instance(desc.kind, desc.k, desc.d, desc.norm_bound, desc.seed, &desc.knobs)
}
