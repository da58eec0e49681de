//! Insurance pricing.
//!
//! Unit cost of locking one wei of stake for one block is `apy / (B * u)`, and
//! a policy covering `v_cov` wei for `t_cov` blocks costs `c * t_cov * v_cov`.
//! All arithmetic is exact over big rationals; the premium is rounded up to the
//! next wei exactly once, at the end.

use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Ratio = BigRational;

pub const WEI_PER_ETH: u128 = 1_000_000_000_000_000_000;
pub const WEI_PER_GWEI: u128 = 1_000_000_000;
/// Nominal block interval.
pub const SECONDS_PER_BLOCK: u64 = 12;
/// 365 days of 12-second blocks.
pub const BLOCKS_PER_YEAR: u64 = 2_628_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PricingError {
    #[error("no providers to measure utilization over")]
    NoProviders,
    #[error("total stake is zero")]
    ZeroStake,
    #[error("empty utilization series")]
    EmptySeries,
    #[error("utilization must be positive")]
    ZeroUtilization,
    #[error("invalid pricing parameter: {0}")]
    InvalidParam(String),
    #[error("cannot parse decimal {0:?}")]
    BadDecimal(String),
}

pub fn ratio(n: i64, d: i64) -> Ratio {
    Ratio::new(BigInt::from(n), BigInt::from(d))
}

fn from_u128(v: u128) -> Ratio {
    Ratio::from_integer(BigInt::from(v))
}

/// Parses a plain decimal such as `0.06`, `3200` or `9.377` exactly.
pub fn parse_decimal(s: &str) -> Result<Ratio, PricingError> {
    let bad = || PricingError::BadDecimal(s.to_string());
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let numer: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| bad())? };
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    let r = Ratio::new(numer, denom);
    Ok(if neg { -r } else { r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingParams {
    #[serde(with = "ratio_str")]
    pub apy: Ratio,
    pub blocks_per_year: u64,
    #[serde(with = "ratio_str")]
    pub utilization: Ratio,
    #[serde(with = "ratio_str")]
    pub eth_price_usd: Ratio,
    pub gas_price_wei: u64,
    pub gas_units: u64,
}

impl Default for PricingParams {
    /// APY 6%, u = 0.75, $3200/ETH, 9.377 Gwei, 200k gas.
    fn default() -> Self {
        PricingParams {
            apy: ratio(6, 100),
            blocks_per_year: BLOCKS_PER_YEAR,
            utilization: ratio(3, 4),
            eth_price_usd: ratio(3200, 1),
            gas_price_wei: (9_377 * WEI_PER_GWEI / 1000) as u64,
            gas_units: 200_000,
        }
    }
}

impl PricingParams {
    pub fn validate(&self) -> Result<(), PricingError> {
        if !self.utilization.is_positive() {
            return Err(PricingError::ZeroUtilization);
        }
        if self.utilization > Ratio::one() {
            return Err(PricingError::InvalidParam("utilization above 1".into()));
        }
        if self.blocks_per_year == 0 {
            return Err(PricingError::InvalidParam("blocks_per_year must be positive".into()));
        }
        if self.apy.is_negative() {
            return Err(PricingError::InvalidParam("apy must be non-negative".into()));
        }
        if self.eth_price_usd.is_negative() {
            return Err(PricingError::InvalidParam("eth price must be non-negative".into()));
        }
        Ok(())
    }

    pub fn gas_cost_wei(&self) -> u128 {
        self.gas_units as u128 * self.gas_price_wei as u128
    }
}

/// Components of the minimum coverage window, all in blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageInputs {
    pub t_fin: u64,
    pub challenge_periods: Vec<u64>,
    pub delta_comm: u64,
    pub delta_comp: u64,
}

/// `T_fin + sum(T_cp^i) + delta_comm + delta_comp`.
pub fn min_coverage_duration(inputs: &CoverageInputs) -> u64 {
    inputs.t_fin + inputs.challenge_periods.iter().sum::<u64>() + inputs.delta_comm + inputs.delta_comp
}

/// Wall-clock seconds to whole blocks, rounding up.
pub fn seconds_to_blocks(seconds: u64) -> u64 {
    seconds.div_ceil(SECONDS_PER_BLOCK)
}

/// Fraction of stake locked among the given `(stake, locked)` pairs.
pub fn utilization_at_block(providers: &[(u128, u128)]) -> Result<Ratio, PricingError> {
    if providers.is_empty() {
        return Err(PricingError::NoProviders);
    }
    let stake: u128 = providers.iter().map(|p| p.0).sum();
    let locked: u128 = providers.iter().map(|p| p.1).sum();
    if stake == 0 {
        return Err(PricingError::ZeroStake);
    }
    Ok(Ratio::new(BigInt::from(locked), BigInt::from(stake)))
}

pub fn average_utilization(per_block: &[Ratio]) -> Result<Ratio, PricingError> {
    if per_block.is_empty() {
        return Err(PricingError::EmptySeries);
    }
    let sum = per_block.iter().fold(Ratio::zero(), |acc, u| acc + u);
    Ok(sum / Ratio::from_integer(BigInt::from(per_block.len())))
}

/// Cost of locking one unit of stake for one block.
pub fn unit_cost(params: &PricingParams) -> Result<Ratio, PricingError> {
    if !params.utilization.is_positive() {
        return Err(PricingError::ZeroUtilization);
    }
    if params.blocks_per_year == 0 {
        return Err(PricingError::InvalidParam("blocks_per_year must be positive".into()));
    }
    let b = Ratio::from_integer(BigInt::from(params.blocks_per_year));
    Ok(&params.apy / (b * &params.utilization))
}

/// Exact premium before rounding, in wei.
pub fn premium_exact(params: &PricingParams, t_cov: u64, v_cov: u128) -> Result<Ratio, PricingError> {
    Ok(unit_cost(params)? * Ratio::from_integer(BigInt::from(t_cov)) * from_u128(v_cov))
}

/// Premium in wei, rounded up.
pub fn premium(params: &PricingParams, t_cov: u64, v_cov: u128) -> Result<u128, PricingError> {
    let exact = premium_exact(params, t_cov, v_cov)?;
    ceil_to_u128(&exact)
}

fn ceil_to_u128(r: &Ratio) -> Result<u128, PricingError> {
    let (q, rem) = r.numer().div_rem(r.denom());
    let q = if rem.is_positive() { q + 1 } else { q };
    q.to_u128().ok_or_else(|| PricingError::InvalidParam("premium out of range".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub premium_wei: u128,
    pub gas_wei: u128,
    pub gas_usd: Ratio,
    pub premium_usd: Ratio,
    pub total_usd: Ratio,
}

/// Gas plus premium in USD for one insurance purchase.
pub fn total_cost_usd(params: &PricingParams, t_cov: u64, v_cov: u128) -> Result<CostBreakdown, PricingError> {
    let premium_wei = premium(params, t_cov, v_cov)?;
    let gas_wei = params.gas_cost_wei();
    let gas_usd = wei_to_usd(gas_wei, &params.eth_price_usd);
    let premium_usd = wei_to_usd(premium_wei, &params.eth_price_usd);
    let total_usd = &gas_usd + &premium_usd;
    Ok(CostBreakdown { premium_wei, gas_wei, gas_usd, premium_usd, total_usd })
}

pub fn wei_to_usd(wei: u128, eth_price_usd: &Ratio) -> Ratio {
    from_u128(wei) * eth_price_usd / from_u128(WEI_PER_ETH)
}

pub fn wei_to_eth(wei: u128) -> Ratio {
    from_u128(wei) / from_u128(WEI_PER_ETH)
}

pub fn eth(amount: u64) -> u128 {
    amount as u128 * WEI_PER_ETH
}

/// Converts a decimal ETH amount to wei, rounding up any sub-wei remainder.
pub fn eth_ratio_to_wei(amount: &Ratio) -> Result<u128, PricingError> {
    ceil_to_u128(&(amount * from_u128(WEI_PER_ETH)))
}

/// Rounds half away from zero to `places` decimal digits, returning the
/// scaled integer (e.g. cents for `places = 2`).
pub fn round_half_up(r: &Ratio, places: u32) -> BigInt {
    let scale = num_traits::pow(BigInt::from(10), places as usize);
    let scaled = r * Ratio::from_integer(scale);
    let twice = &scaled * ratio(2, 1);
    let bumped = if scaled.is_negative() { twice - Ratio::one() } else { twice + Ratio::one() };
    (bumped / ratio(2, 1)).trunc().to_integer()
}

/// Fixed-point decimal rendering, rounded half-up.
pub fn format_decimal(r: &Ratio, places: u32) -> String {
    let v = round_half_up(r, places);
    let neg = v.sign() == Sign::Minus;
    let digits = v.abs().to_string();
    let places = places as usize;
    let body = if places == 0 {
        digits
    } else {
        let padded = format!("{digits:0>width$}", width = places + 1);
        let (i, f) = padded.split_at(padded.len() - places);
        format!("{i}.{f}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

pub fn format_usd(r: &Ratio) -> String {
    format!("${}", format_decimal(r, 2))
}

pub fn to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

mod ratio_str {
    use super::{parse_decimal, Ratio};
    use num_traits::ToPrimitive;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio, s: S) -> Result<S::Ok, S::Error> {
        if r.is_integer() {
            s.serialize_str(&r.numer().to_string())
        } else if let Some(f) = r.to_f64().filter(|f| parse_decimal(&f.to_string()).ok().as_ref() == Some(r)) {
            s.serialize_str(&f.to_string())
        } else {
            s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
        }
    }

    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Float(f64),
        Int(i64),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio, D::Error> {
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Float(f) => f.to_string(),
            Raw::Int(i) => i.to_string(),
        };
        if let Some((n, dd)) = text.split_once('/') {
            let n: num_bigint::BigInt = n.trim().parse().map_err(serde::de::Error::custom)?;
            let dd: num_bigint::BigInt = dd.trim().parse().map_err(serde::de::Error::custom)?;
            if dd == num_bigint::BigInt::from(0) {
                return Err(serde::de::Error::custom("zero denominator"));
            }
            return Ok(Ratio::new(n, dd));
        }
        parse_decimal(&text).map_err(serde::de::Error::custom)
    }
}

/// An ETH amount held exactly in wei.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Eth(pub u128);

impl Eth {
    pub fn whole(n: u64) -> Self {
        Eth(eth(n))
    }

    pub fn wei(self) -> u128 {
        self.0
    }
}

impl fmt::Display for Eth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / WEI_PER_ETH;
        let frac = self.0 % WEI_PER_ETH;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let digits = format!("{frac:018}");
            write!(f, "{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl Serialize for Eth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Eth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Eth;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an ETH amount as a decimal string or integer")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Eth, E> {
                Ok(Eth::whole(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Eth, E> {
                u64::try_from(v).map(Eth::whole).map_err(|_| E::custom("negative ETH amount"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Eth, E> {
                let r = parse_decimal(v).map_err(E::custom)?;
                eth_ratio_to_wei(&r).map(Eth).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}
