//! Seeded placement of one drop and its link gains.
//!
//! Every random quantity is drawn from its own ChaCha stream keyed by
//! `(seed, drop_index, tag)`, so a drop is reproducible on its own and two
//! configurations that differ in one parameter share every other draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{channel_gain, SystemParams};

/// Pathloss reference distance. Closer placements are re-drawn; cross links
/// that happen to be closer are evaluated at this distance.
pub const MIN_DISTANCE_M: f64 = 1.0;

const MAX_REDRAWS: usize = 10_000;

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Stream {
    Cellular(u64),
    Cluster,
    Tx(u64),
    Rx(u64),
    ShadowCell(u64),
    ShadowD2d(u64),
    ShadowD2c(u64),
    ShadowC2d(u64, u64),
}

impl Stream {
    fn words(self) -> [u64; 3] {
        match self {
            Stream::Cellular(j) => [1, j, 0],
            Stream::Cluster => [2, 0, 0],
            Stream::Tx(i) => [3, i, 0],
            Stream::Rx(i) => [4, i, 0],
            Stream::ShadowCell(j) => [5, j, 0],
            Stream::ShadowD2d(i) => [6, i, 0],
            Stream::ShadowD2c(i) => [7, i, 0],
            Stream::ShadowC2d(i, j) => [8, i, j],
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn stream_rng(seed: u64, drop_index: u64, stream: Stream) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    h = splitmix(h ^ drop_index);
    for w in stream.words() {
        h = splitmix(h ^ w);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Uniform point in the disk of `radius` around `center` (sqrt-radius polar draw).
pub fn sample_in_disk<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// Device placement of one drop. The BS sits at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bs_pos: Point,
    pub cellular_pos: Vec<Point>,
    pub d2d_tx_pos: Vec<Point>,
    pub d2d_rx_pos: Vec<Point>,
    pub cluster_center: Point,
    pub seed: u64,
    pub drop_index: u64,
}

impl Topology {
    pub fn n_cellular(&self) -> usize {
        self.cellular_pos.len()
    }

    pub fn n_d2d(&self) -> usize {
        self.d2d_tx_pos.len()
    }
}

/// Channel gains of one drop, linear scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGains {
    /// Cellular UE j to BS.
    pub g_c: Vec<f64>,
    /// Pair i, TX to its own RX.
    pub g_d2d: Vec<f64>,
    /// Pair i TX to BS.
    pub g_d2c: Vec<f64>,
    /// Cellular UE j to RX of pair i, indexed `[i][j]`.
    pub g_c2d: Vec<Vec<f64>>,
}

impl LinkGains {
    pub fn n_cellular(&self) -> usize {
        self.g_c.len()
    }

    pub fn n_d2d(&self) -> usize {
        self.g_d2d.len()
    }
}

fn redraw_until<F>(mut draw: F, accept: impl Fn(Point) -> bool, what: &str) -> Result<Point>
where
    F: FnMut() -> Point,
{
    for _ in 0..MAX_REDRAWS {
        let p = draw();
        if accept(p) {
            return Ok(p);
        }
    }
    Err(Error::Config(format!("could not place {what} after {MAX_REDRAWS} draws")))
}

pub fn generate_topology(params: &SystemParams, seed: u64, drop_index: u64) -> Result<Topology> {
    params.validate()?;
    let origin = [0.0, 0.0];
    let cell = params.cell_radius_m;
    let away_from_bs = |p: Point| distance(p, origin) > MIN_DISTANCE_M;

    let cellular_pos = (0..params.n_cellular as u64)
        .map(|j| {
            let mut rng = stream_rng(seed, drop_index, Stream::Cellular(j));
            redraw_until(|| sample_in_disk(&mut rng, origin, cell), away_from_bs, "cellular UE")
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = stream_rng(seed, drop_index, Stream::Cluster);
    let cluster_center = sample_in_disk(&mut rng, origin, cell - params.cluster_radius_m);

    let d2d_tx_pos = (0..params.n_d2d as u64)
        .map(|i| {
            let mut rng = stream_rng(seed, drop_index, Stream::Tx(i));
            redraw_until(
                || sample_in_disk(&mut rng, cluster_center, params.cluster_radius_m),
                away_from_bs,
                "D2D transmitter",
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let d2d_rx_pos = d2d_tx_pos
        .iter()
        .enumerate()
        .map(|(i, &tx)| {
            let mut rng = stream_rng(seed, drop_index, Stream::Rx(i as u64));
            redraw_until(
                || sample_in_disk(&mut rng, tx, params.d2d_max_dist_m),
                |p| {
                    distance(p, origin) <= cell
                        && away_from_bs(p)
                        && distance(p, tx) > MIN_DISTANCE_M
                },
                "D2D receiver",
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Topology {
        bs_pos: origin,
        cellular_pos,
        d2d_tx_pos,
        d2d_rx_pos,
        cluster_center,
        seed,
        drop_index,
    })
}

fn shadow_db(seed: u64, drop_index: u64, stream: Stream, sigma_db: f64) -> f64 {
    if sigma_db == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma_db).expect("finite non-negative sigma");
    normal.sample(&mut stream_rng(seed, drop_index, stream))
}

/// Gains for every link family. The TX-RX link of a pair uses the D2D
/// shadowing deviation; every other link uses the cellular one.
pub fn compute_link_gains(topo: &Topology, params: &SystemParams, seed: u64) -> Result<LinkGains> {
    let (k, alpha) = (params.pathloss_const_db, params.pathloss_exp);
    let (s_cell, s_d2d) = (params.shadow_sigma_cell_db, params.shadow_sigma_d2d_db);
    let d = topo.drop_index;
    let bs = topo.bs_pos;

    let g_c = topo
        .cellular_pos
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let sh = shadow_db(seed, d, Stream::ShadowCell(j as u64), s_cell);
            channel_gain(k, alpha, distance(p, bs), sh)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut g_d2d = Vec::with_capacity(topo.n_d2d());
    let mut g_d2c = Vec::with_capacity(topo.n_d2d());
    let mut g_c2d = Vec::with_capacity(topo.n_d2d());
    for (i, (&tx, &rx)) in topo.d2d_tx_pos.iter().zip(&topo.d2d_rx_pos).enumerate() {
        let i64_ = i as u64;
        let sh = shadow_db(seed, d, Stream::ShadowD2d(i64_), s_d2d);
        g_d2d.push(channel_gain(k, alpha, distance(tx, rx), sh)?);
        let sh = shadow_db(seed, d, Stream::ShadowD2c(i64_), s_cell);
        g_d2c.push(channel_gain(k, alpha, distance(tx, bs), sh)?);
        let row = topo
            .cellular_pos
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let sh = shadow_db(seed, d, Stream::ShadowC2d(i64_, j as u64), s_cell);
                channel_gain(k, alpha, distance(c, rx).max(MIN_DISTANCE_M), sh)
            })
            .collect::<Result<Vec<_>>>()?;
        g_c2d.push(row);
    }
    Ok(LinkGains {
        g_c,
        g_d2d,
        g_d2c,
        g_c2d,
    })
}

/// Shadowing draw of one link, exposed for statistical checks.
pub fn link_shadow_db(seed: u64, drop_index: u64, link: u64, sigma_db: f64) -> f64 {
    shadow_db(seed, drop_index, Stream::ShadowCell(link), sigma_db)
}
