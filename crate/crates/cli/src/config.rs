use cda_core::{make_linear_market, Curve, Market, Side};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::CliError;

/// A parsed run configuration plus the hash of its source text.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketBlock,
    #[serde(default)]
    pub strategy: StrategyBlock,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(skip)]
    pub hash: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarketBlock {
    Linear { s_minus: f64, alpha: f64, d_plus: f64, beta: f64 },
    /// `(q, price)` knots spanning `q` from 0 to 1.
    Tabulated { supply: Vec<(f64, f64)>, demand: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategyBlock {
    #[default]
    Bne,
    Zic,
    OnePrice {
        /// Defaults to the competitive price.
        price: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Closed form for linear markets, shooting otherwise.
    #[default]
    Auto,
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub method: Method,
    pub grid: usize,
    pub runs: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub bins: usize,
    pub side: SideName,
    /// Trader type for `payoff`.
    #[serde(rename = "type")]
    pub trader_type: Option<f64>,
    /// Shouts evaluated by `payoff`; defaults to an even grid on [0, 1].
    pub shouts: Option<Vec<f64>>,
    /// Multiplier on every `verify` threshold.
    pub verify_tolerance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            method: Method::Auto,
            grid: 201,
            runs: 10_000,
            seed: 0,
            workers: None,
            bins: 20,
            side: SideName::Buyer,
            trader_type: None,
            shouts: None,
            verify_tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideName {
    Buyer,
    Seller,
}

impl From<SideName> for Side {
    fn from(s: SideName) -> Side {
        match s {
            SideName::Buyer => Side::Buyer,
            SideName::Seller => Side::Seller,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub path: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let digest = Sha256::digest(text.as_bytes());
        cfg.hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        cfg.market()?;
        if cfg.params.grid < 2 || cfg.params.runs == 0 || cfg.params.bins == 0 || !(cfg.params.verify_tolerance >= 0.0) {
            return Err(CliError::Config("grid must be at least 2, runs and bins positive, verify_tolerance nonnegative".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn market(&self) -> Result<Market, CliError> {
        let m = match &self.market {
            MarketBlock::Linear { s_minus, alpha, d_plus, beta } => make_linear_market(*s_minus, *alpha, *d_plus, *beta),
            MarketBlock::Tabulated { supply, demand } => {
                Curve::tabulated(supply).and_then(|s| Curve::tabulated(demand).and_then(|d| Market::general(s, d)))
            }
        };
        m.map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = RunConfig::parse("[market]\nkind = \"linear\"\ns_minus = 0\nalpha = 1\nd_plus = 1\nbeta = 1\n").unwrap();
        assert!(matches!(c.strategy, StrategyBlock::Bne));
        assert_eq!(c.params.runs, 10_000);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn rejects_bad_blocks() {
        assert!(matches!(RunConfig::parse("[market]\nkind = \"linear\"\n"), Err(CliError::Config(_))));
        let bad = "[market]\nkind = \"linear\"\ns_minus = 0.6\nalpha = 0.1\nd_plus = 0.5\nbeta = 0.1\n";
        assert!(matches!(RunConfig::parse(bad), Err(CliError::Config(_))));
        let typo = "[market]\nkind = \"linear\"\ns_minus = 0\nalpha = 1\nd_plus = 1\nbeta = 1\n[params]\nrun = 5\n";
        assert!(matches!(RunConfig::parse(typo), Err(CliError::Config(_))));
    }

    #[test]
    fn tabulated_market() {
        let text = "[market]\nkind = \"tabulated\"\nsupply = [[0, 0], [0.5, 0.4], [1, 1]]\ndemand = [[0, 1], [1, 0]]\n\n[strategy]\nkind = \"one-price\"\nprice = 0.45\n";
        let c = RunConfig::parse(text).unwrap();
        assert!(c.market().is_ok());
        assert!(matches!(c.strategy, StrategyBlock::OnePrice { price: Some(p) } if p == 0.45));
    }
}
