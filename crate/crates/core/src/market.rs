//! Supply/demand curves, quantization and plaintext clearing: the
//! baseline the encrypted pipeline is checked against.
//!
//! Quantities live in integer units of `10^-sigma` (a value `v` means
//! `v / 10^sigma` kW); prices in units of `10^-sigma_lambda`. Keeping
//! everything integral is what makes "exactly equal" a meaningful claim
//! across the plain, pointwise-encrypted and block-encrypted pipelines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarketError {
    #[error("invalid price grid: {0}")]
    InvalidGrid(String),
    #[error("cannot aggregate curves of different kinds")]
    KindMismatch,
    #[error("curves are sampled on different grids")]
    GridMismatch,
    #[error("curve values must be {0} for its kind")]
    NotMonotone(&'static str),
}

/// The sampled price axis. Grid point `l` in `1..=n_points` carries the
/// price `lambda_min + l*tau`, so the first grid price is one step above
/// `lambda_min` (set `lambda_min` one step low to start the grid at a
/// round price).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub tau: f64,
    #[serde(skip_serializing)]
    n_points: u32,
    pub sigma: u32,
    pub sigma_lambda: u32,
    #[serde(skip_serializing)]
    min_units: i64,
    #[serde(skip_serializing)]
    tau_units: i64,
}

#[derive(Deserialize)]
struct PriceGridRaw {
    lambda_min: f64,
    lambda_max: f64,
    tau: f64,
    sigma: u32,
    sigma_lambda: u32,
}

impl<'de> Deserialize<'de> for PriceGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = PriceGridRaw::deserialize(d)?;
        PriceGrid::new(
            raw.lambda_min,
            raw.lambda_max,
            raw.tau,
            raw.sigma,
            raw.sigma_lambda,
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Checks that a price lands on an integer multiple of `10^-sigma_lambda`.
fn exact_units(price: f64, sigma_lambda: u32, what: &str) -> Result<i64, MarketError> {
    let scaled = price * 10f64.powi(sigma_lambda as i32);
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-6 {
        return Err(MarketError::InvalidGrid(format!(
            "{what} = {price} is not a multiple of 10^-{sigma_lambda}"
        )));
    }
    Ok(rounded as i64)
}

impl PriceGrid {
    pub fn new(
        lambda_min: f64,
        lambda_max: f64,
        tau: f64,
        sigma: u32,
        sigma_lambda: u32,
    ) -> Result<Self, MarketError> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(MarketError::InvalidGrid("tau must be positive".into()));
        }
        if lambda_max <= lambda_min {
            return Err(MarketError::InvalidGrid(
                "lambda_max must exceed lambda_min".into(),
            ));
        }
        let n_points = ((lambda_max - lambda_min) / tau + 1e-9).floor() as u32;
        if n_points < 1 {
            return Err(MarketError::InvalidGrid(
                "grid must contain at least one point".into(),
            ));
        }
        let min_units = exact_units(lambda_min, sigma_lambda, "lambda_min")?;
        let tau_units = exact_units(tau, sigma_lambda, "tau")?;
        if tau_units <= 0 {
            return Err(MarketError::InvalidGrid(
                "tau must be at least one price unit".into(),
            ));
        }
        if min_units + tau_units < 0 {
            return Err(MarketError::InvalidGrid(
                "the first grid price must be non-negative".into(),
            ));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            tau,
            n_points,
            sigma,
            sigma_lambda,
            min_units,
            tau_units,
        })
    }

    /// Grid with exactly `n_points` points starting at `lambda_min + tau`.
    pub fn with_points(
        lambda_min: f64,
        tau: f64,
        n_points: u32,
        sigma: u32,
        sigma_lambda: u32,
    ) -> Result<Self, MarketError> {
        Self::new(
            lambda_min,
            lambda_min + tau * (n_points as f64 + 0.5),
            tau,
            sigma,
            sigma_lambda,
        )
        .map(|mut g| {
            g.lambda_max = lambda_min + tau * n_points as f64;
            g
        })
    }

    pub fn n_points(&self) -> u32 {
        self.n_points
    }

    /// Price at grid point `l` (1-based), exact in units.
    pub fn price(&self, l: u32) -> f64 {
        self.price_units(l) as f64 / 10f64.powi(self.sigma_lambda as i32)
    }

    /// `10^sigma_lambda * price(l)` as an integer, the form prices take
    /// inside signed messages.
    pub fn price_units(&self, l: u32) -> u64 {
        debug_assert!((1..=self.n_points).contains(&l));
        (self.min_units + self.tau_units * l as i64) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Supply,
    Demand,
}

/// A quantized best-response curve over the grid: value `l` is the
/// quantity (in `10^-sigma` units) the owner would trade at `price(l)`.
/// Supply curves are non-decreasing in `l`, demand curves non-increasing.
///
/// Values cross the wire as arrays of decimal strings, like every other
/// integer in the protocol's message formats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub kind: CurveKind,
    pub owner_id: u32,
    #[serde(with = "values_dec")]
    pub values: Vec<u64>,
}

mod values_dec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

impl SampledCurve {
    pub fn new(kind: CurveKind, owner_id: u32, values: Vec<u64>) -> Result<Self, MarketError> {
        let monotone = match kind {
            CurveKind::Supply => values.windows(2).all(|w| w[0] <= w[1]),
            CurveKind::Demand => values.windows(2).all(|w| w[0] >= w[1]),
        };
        if !monotone {
            return Err(MarketError::NotMonotone(match kind {
                CurveKind::Supply => "non-decreasing",
                CurveKind::Demand => "non-increasing",
            }));
        }
        Ok(Self {
            kind,
            owner_id,
            values,
        })
    }

    pub fn max_value(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }
}

/// Truncates `x` to `sigma` decimal fraction digits and returns the
/// scaled integer `floor(x * 10^sigma)`.
pub fn quantize(x: f64, sigma: u32) -> u64 {
    assert!(x >= 0.0 && x.is_finite());
    (x * 10f64.powi(sigma as i32)).floor() as u64
}

/// Synthetic curve population: each agent trades its rated power on one
/// side of a personal threshold price and nothing on the other side,
/// which yields monotone step curves without any physical load model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub kind: CurveKind,
    pub n_agents: u32,
    /// Strict upper bound on any generated quantity (same unit as
    /// `power_range`, pre-quantization).
    pub delta: f64,
    /// Rated power is drawn uniformly from this range (inclusive),
    /// then quantized.
    pub power_range: (f64, f64),
    /// Threshold grid indices are drawn uniformly from this range
    /// (inclusive, 1-based).
    pub threshold_range: (u32, u32),
    pub seed: u64,
}

/// Deterministically generates `n_agents` step curves; owner ids are
/// `1..=n_agents` within the returned list.
pub fn gen_population(params: &PopulationParams, grid: &PriceGrid) -> Vec<SampledCurve> {
    let delta_units = quantize(params.delta, grid.sigma);
    assert!(delta_units >= 2, "delta too small for the grid precision");
    let lo = quantize(params.power_range.0, grid.sigma).min(delta_units - 1);
    let hi = quantize(params.power_range.1, grid.sigma).min(delta_units - 1);
    let (t_lo, t_hi) = params.threshold_range;
    assert!(
        1 <= t_lo && t_lo <= t_hi && t_hi <= grid.n_points(),
        "threshold range must lie within the grid"
    );
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    (1..=params.n_agents)
        .map(|id| {
            let rated = rng.gen_range(lo..=hi);
            let threshold = rng.gen_range(t_lo..=t_hi);
            let values = (1..=grid.n_points())
                .map(|l| match params.kind {
                    CurveKind::Demand => {
                        if l <= threshold {
                            rated
                        } else {
                            0
                        }
                    }
                    CurveKind::Supply => {
                        if l >= threshold {
                            rated
                        } else {
                            0
                        }
                    }
                })
                .collect();
            SampledCurve::new(params.kind, id, values).expect("step curves are monotone")
        })
        .collect()
}

/// Pointwise sum of same-kind curves sampled on the same grid.
pub fn aggregate(curves: &[SampledCurve]) -> Result<SampledCurve, MarketError> {
    let (first, rest) = curves.split_first().ok_or(MarketError::GridMismatch)?;
    let mut values = first.values.clone();
    for curve in rest {
        if curve.kind != first.kind {
            return Err(MarketError::KindMismatch);
        }
        if curve.values.len() != values.len() {
            return Err(MarketError::GridMismatch);
        }
        for (acc, v) in values.iter_mut().zip(&curve.values) {
            *acc = acc.checked_add(*v).expect("aggregate overflow");
        }
    }
    Ok(SampledCurve {
        kind: first.kind,
        owner_id: 0,
        values,
    })
}

/// Result of a clearing step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearingOutcome {
    /// 1-based grid index of the clearing price.
    pub index: u32,
    pub lambda_star: f64,
    pub price_units: u64,
    /// Whether aggregated supply and demand met exactly at `index`.
    pub exact: bool,
    /// Set when demand exceeds the capacity cap at every grid point.
    pub capacity_infeasible: bool,
}

/// Clears where aggregated supply meets aggregated demand. If one or
/// more grid points give exact equality the smallest such index wins;
/// otherwise the index minimizing |supply - demand| is chosen, preferring
/// indices adjacent to a sign change of the gap, tie-broken to the
/// lowest price.
pub fn clear_two_sided(
    agg_supply: &SampledCurve,
    agg_demand: &SampledCurve,
    grid: &PriceGrid,
) -> Result<ClearingOutcome, MarketError> {
    if agg_supply.values.len() != agg_demand.values.len()
        || agg_supply.values.len() != grid.n_points() as usize
    {
        return Err(MarketError::GridMismatch);
    }
    let diffs: Vec<i128> = agg_supply
        .values
        .iter()
        .zip(&agg_demand.values)
        .map(|(&s, &d)| s as i128 - d as i128)
        .collect();
    if let Some(pos) = diffs.iter().position(|&d| d == 0) {
        let index = pos as u32 + 1;
        return Ok(ClearingOutcome {
            index,
            lambda_star: grid.price(index),
            price_units: grid.price_units(index),
            exact: true,
            capacity_infeasible: false,
        });
    }
    let min_gap = diffs
        .iter()
        .map(|d| d.unsigned_abs())
        .min()
        .expect("non-empty grid");
    let opposite = |a: i128, b: i128| (a > 0) != (b > 0);
    let near_sign_change = |pos: usize| {
        (pos > 0 && opposite(diffs[pos - 1], diffs[pos]))
            || (pos + 1 < diffs.len() && opposite(diffs[pos], diffs[pos + 1]))
    };
    let candidates: Vec<usize> = (0..diffs.len())
        .filter(|&p| diffs[p].unsigned_abs() == min_gap)
        .collect();
    let pos = candidates
        .iter()
        .copied()
        .find(|&p| near_sign_change(p))
        .unwrap_or(candidates[0]);
    let index = pos as u32 + 1;
    Ok(ClearingOutcome {
        index,
        lambda_star: grid.price(index),
        price_units: grid.price_units(index),
        exact: false,
        capacity_infeasible: false,
    })
}

/// Capacity-cap clearing: the base price when demand at the base index
/// fits under the cap, otherwise the first (lowest-price) index whose
/// demand does. When no grid point fits, the highest grid price is
/// returned with `capacity_infeasible` set so a multi-cycle run keeps
/// going.
pub fn clear_capacity(
    agg_demand: &SampledCurve,
    capacity_units: u64,
    base_index: u32,
    grid: &PriceGrid,
) -> Result<ClearingOutcome, MarketError> {
    if agg_demand.values.len() != grid.n_points() as usize {
        return Err(MarketError::GridMismatch);
    }
    assert!(capacity_units > 0, "capacity must be positive");
    assert!((1..=grid.n_points()).contains(&base_index));
    let outcome = |index: u32, infeasible: bool| ClearingOutcome {
        index,
        lambda_star: grid.price(index),
        price_units: grid.price_units(index),
        exact: false,
        capacity_infeasible: infeasible,
    };
    if agg_demand.values[base_index as usize - 1] <= capacity_units {
        return Ok(outcome(base_index, false));
    }
    match agg_demand.values.iter().position(|&d| d <= capacity_units) {
        Some(pos) => Ok(outcome(pos as u32 + 1, false)),
        None => Ok(outcome(grid.n_points(), true)),
    }
}
