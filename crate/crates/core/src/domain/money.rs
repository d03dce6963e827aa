//! Fixed-point money. Costs are tracked in integer nano-USD so that
//! per-token rates with up to six decimal places of USD multiply and sum
//! without rounding. Reports render at micro-USD precision or finer.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const NANOS_PER_USD: i64 = 1_000_000_000;

/// A non-negative USD amount held as integer nano-dollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Usd(i64);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub fn from_nanos(nanos: i64) -> Self {
        Usd(nanos)
    }

    pub fn nanos(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_USD as f64
    }

    /// Parse a decimal USD string ("0.005", "1", "$0.0200") with at most
    /// nine fractional digits.
    pub fn parse(s: &str) -> Result<Self, MoneyError> {
        let s = s.trim();
        let s = s.strip_prefix('$').unwrap_or(s);
        if s.is_empty() {
            return Err(MoneyError::Malformed(s.to_string()));
        }
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if frac.len() > 9 {
            return Err(MoneyError::TooPrecise(s.to_string()));
        }
        if whole.is_empty() && frac.is_empty() {
            return Err(MoneyError::Malformed(s.to_string()));
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(MoneyError::Malformed(s.to_string()));
        }
        let whole_part: i64 = if whole.is_empty() {
            0
        } else {
            whole
                .parse()
                .map_err(|_| MoneyError::Malformed(s.to_string()))?
        };
        let mut frac_nanos: i64 = 0;
        if !frac.is_empty() {
            let parsed: i64 = frac
                .parse()
                .map_err(|_| MoneyError::Malformed(s.to_string()))?;
            frac_nanos = parsed * 10i64.pow(9 - frac.len() as u32);
        }
        whole_part
            .checked_mul(NANOS_PER_USD)
            .and_then(|n| n.checked_add(frac_nanos))
            .map(Usd)
            .ok_or_else(|| MoneyError::Malformed(s.to_string()))
    }

    /// Canonical decimal rendering: six fractional digits, extended to nine
    /// when sub-microdollar precision is present.
    pub fn to_decimal_string(self) -> String {
        let whole = self.0 / NANOS_PER_USD;
        let nanos = self.0 % NANOS_PER_USD;
        if nanos % 1000 == 0 {
            format!("{}.{:06}", whole, nanos / 1000)
        } else {
            format!("{}.{:09}", whole, nanos)
        }
    }

    pub fn checked_add(self, other: Usd) -> Option<Usd> {
        self.0.checked_add(other.0).map(Usd)
    }
}

impl Add for Usd {
    type Output = Usd;

    fn add(self, other: Usd) -> Usd {
        self.checked_add(other)
            .expect("usd sum overflows i64 nanos")
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, other: Usd) {
        *self = *self + other;
    }
}

impl std::iter::Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.to_decimal_string())
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Usd::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MoneyError {
    #[error("malformed USD amount: {0:?}")]
    Malformed(String),
    #[error("USD amount has more than 9 decimal places: {0:?}")]
    TooPrecise(String),
    #[error("rate must be positive: {0:?}")]
    NonPositiveRate(String),
    #[error(
        "per-1K rate {0:?} needs more than 6 decimal places of USD; not representable per token"
    )]
    RateNotPerTokenExact(String),
    #[error("io error reading price sheet: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed price sheet: {0}")]
    BadSheet(String),
}

/// USD per 1,000 tokens for one model row.
///
/// Rates are constrained to at most six decimal places of USD so the
/// per-token rate is an exact nano-USD integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRate", into = "RawRate")]
pub struct PriceRate {
    input_per_1k: Usd,
    output_per_1k: Usd,
}

#[derive(Serialize, Deserialize)]
struct RawRate {
    input_per_1k: String,
    output_per_1k: String,
}

impl TryFrom<RawRate> for PriceRate {
    type Error = MoneyError;

    fn try_from(raw: RawRate) -> Result<Self, MoneyError> {
        PriceRate::new(
            Usd::parse(&raw.input_per_1k)?,
            Usd::parse(&raw.output_per_1k)?,
        )
    }
}

impl From<PriceRate> for RawRate {
    fn from(rate: PriceRate) -> RawRate {
        RawRate {
            input_per_1k: rate.input_per_1k.to_decimal_string(),
            output_per_1k: rate.output_per_1k.to_decimal_string(),
        }
    }
}

impl PriceRate {
    pub fn new(input_per_1k: Usd, output_per_1k: Usd) -> Result<Self, MoneyError> {
        for rate in [input_per_1k, output_per_1k] {
            if rate.nanos() <= 0 {
                return Err(MoneyError::NonPositiveRate(rate.to_decimal_string()));
            }
            if rate.nanos() % 1000 != 0 {
                return Err(MoneyError::RateNotPerTokenExact(rate.to_decimal_string()));
            }
        }
        Ok(PriceRate {
            input_per_1k,
            output_per_1k,
        })
    }

    pub fn parse(input_per_1k: &str, output_per_1k: &str) -> Result<Self, MoneyError> {
        PriceRate::new(Usd::parse(input_per_1k)?, Usd::parse(output_per_1k)?)
    }

    pub fn input_per_1k(&self) -> Usd {
        self.input_per_1k
    }

    pub fn output_per_1k(&self) -> Usd {
        self.output_per_1k
    }

    /// Exact nano-USD per single prompt token.
    pub fn input_per_token_nanos(&self) -> i64 {
        self.input_per_1k.nanos() / 1000
    }

    /// Exact nano-USD per single completion token.
    pub fn output_per_token_nanos(&self) -> i64 {
        self.output_per_1k.nanos() / 1000
    }
}

/// Per-model pricing, keyed by model key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceSheet {
    pub models: BTreeMap<String, PriceRate>,
}

impl PriceSheet {
    /// Built-in default rates for the stock A/B/C model keys.
    pub fn builtin_default() -> Self {
        let mut models = BTreeMap::new();
        models.insert(
            "A".to_string(),
            PriceRate::parse("0.0050", "0.0200").unwrap(),
        );
        models.insert(
            "B".to_string(),
            PriceRate::parse("0.0030", "0.0150").unwrap(),
        );
        models.insert(
            "C".to_string(),
            PriceRate::parse("0.00125", "0.0100").unwrap(),
        );
        PriceSheet { models }
    }

    pub fn rate(&self, model_key: &str) -> Option<&PriceRate> {
        self.models.get(model_key)
    }

    /// Load a TOML price sheet: one `[models.<key>]` table per model with
    /// `input_per_1k` / `output_per_1k` decimal strings.
    pub fn load(path: &Path) -> Result<Self, MoneyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, MoneyError> {
        let sheet: PriceSheet =
            toml::from_str(text).map_err(|e| MoneyError::BadSheet(e.to_string()))?;
        Ok(sheet)
    }

    /// Content hash over the canonical serialization, recorded in run
    /// manifests for provenance.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_string(self).expect("price sheet serializes");
        super::sha256_hex(canonical.as_bytes())
    }
}
