//! Token and cost accounting.
//!
//! Amounts are held as integer picodollars so per-item arithmetic is exact
//! at any price quoted to nine decimal places per thousand tokens.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::{JudgeError, TokenUsage};

const PICO_PER_UNIT: i128 = 1_000_000_000_000;
const PRICE_DECIMALS: u32 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoneyError {
    #[error("invalid amount {0:?}")]
    Invalid(String),
    #[error("amount {0:?} has more than 12 decimal places")]
    TooPrecise(String),
}

/// A currency amount in picounits (1e-12).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_pico(pico: i128) -> Self {
        Money(pico)
    }

    pub fn pico(self) -> i128 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / PICO_PER_UNIT as f64
    }

    /// Divides, rounding half away from zero.
    pub fn div_round(self, divisor: u64) -> Money {
        let d = divisor as i128;
        let q = self.0 / d;
        let r = self.0 % d;
        if 2 * r.abs() >= d {
            Money(q + self.0.signum())
        } else {
            Money(q)
        }
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / PICO_PER_UNIT as u128;
        let frac = abs % PICO_PER_UNIT as u128;
        if frac == 0 {
            return write!(f, "{sign}{whole}");
        }
        let digits = format!("{frac:012}");
        write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
    }
}

impl FromStr for Money {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || MoneyError::Invalid(s.to_string());
        let t = s.trim();
        let (negative, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (whole, frac) = t.split_once('.').unwrap_or((t, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(invalid());
        }
        if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(invalid());
        }
        if frac.len() > 12 {
            return Err(MoneyError::TooPrecise(s.to_string()));
        }
        let whole: i128 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| invalid())? };
        let frac_pico: i128 = if frac.is_empty() {
            0
        } else {
            frac.parse::<i128>().map_err(|_| invalid())? * 10i128.pow(12 - frac.len() as u32)
        };
        let pico = whole * PICO_PER_UNIT + frac_pico;
        Ok(Money(if negative { -pico } else { pico }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            // plain numbers in config files go through their shortest decimal form
            Raw::Number(v) => format!("{v}").parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Prices per thousand tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceTable {
    pub per_1k_prompt: Money,
    pub per_1k_completion: Money,
}

impl PriceTable {
    pub fn new(per_1k_prompt: &str, per_1k_completion: &str) -> Result<Self, MoneyError> {
        let table = Self {
            per_1k_prompt: per_1k_prompt.parse()?,
            per_1k_completion: per_1k_completion.parse()?,
        };
        for price in [table.per_1k_prompt, table.per_1k_completion] {
            // tokens * price / 1000 must stay integral in picounits
            if price.pico() % 10i128.pow(12 - PRICE_DECIMALS) != 0 {
                return Err(MoneyError::TooPrecise(price.to_string()));
            }
        }
        Ok(table)
    }

    pub fn cost(&self, usage: TokenUsage) -> Money {
        let prompt = usage.prompt_tokens as i128 * self.per_1k_prompt.pico() / 1000;
        let completion = usage.completion_tokens as i128 * self.per_1k_completion.pico() / 1000;
        Money(prompt + completion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u64,
    pub prices: PriceTable,
    pub total: Money,
    pub items: u64,
    pub per_item: Money,
}

#[derive(Debug, Default)]
struct Counters {
    prompt_tokens: u64,
    completion_tokens: u64,
    calls: u64,
}

/// Running token and cost totals, shared by concurrent dispatches.
#[derive(Debug)]
pub struct CostLedger {
    prices: PriceTable,
    cap: Option<Money>,
    counters: Mutex<Counters>,
}

impl CostLedger {
    pub fn new(prices: PriceTable) -> Self {
        Self {
            prices,
            cap: None,
            counters: Mutex::new(Counters::default()),
        }
    }

    pub fn with_cap(mut self, cap: Money) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn prices(&self) -> PriceTable {
        self.prices
    }

    /// Adds one exchange. Usage is always recorded; the error reports that
    /// the running total has passed the cap.
    pub fn record(&self, usage: TokenUsage) -> Result<Money, JudgeError> {
        let mut c = self.counters.lock().expect("ledger lock poisoned");
        c.prompt_tokens += usage.prompt_tokens;
        c.completion_tokens += usage.completion_tokens;
        c.calls += 1;
        let total = self.prices.cost(TokenUsage {
            prompt_tokens: c.prompt_tokens,
            completion_tokens: c.completion_tokens,
        });
        match self.cap {
            Some(cap) if total > cap => Err(JudgeError::BudgetExceeded { spent: total, cap }),
            _ => Ok(total),
        }
    }

    /// Fails once the running total has passed the cap.
    pub fn check_budget(&self) -> Result<(), JudgeError> {
        let total = self.total();
        match self.cap {
            Some(cap) if total > cap => Err(JudgeError::BudgetExceeded { spent: total, cap }),
            _ => Ok(()),
        }
    }

    pub fn total(&self) -> Money {
        let c = self.counters.lock().expect("ledger lock poisoned");
        self.prices.cost(TokenUsage {
            prompt_tokens: c.prompt_tokens,
            completion_tokens: c.completion_tokens,
        })
    }

    pub fn snapshot(&self, items: usize) -> LedgerSnapshot {
        let c = self.counters.lock().expect("ledger lock poisoned");
        let total = self.prices.cost(TokenUsage {
            prompt_tokens: c.prompt_tokens,
            completion_tokens: c.completion_tokens,
        });
        LedgerSnapshot {
            prompt_tokens: c.prompt_tokens,
            completion_tokens: c.completion_tokens,
            calls: c.calls,
            prices: self.prices,
            total,
            items: items as u64,
            per_item: if items == 0 { Money::ZERO } else { total.div_round(items as u64) },
        }
    }
}
