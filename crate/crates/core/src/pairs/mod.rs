//! Pair trading on a cointegrated portfolio: order-book ingestion, VAR and
//! eigen-portfolio construction, Johansen and Hamilton estimation, and
//! book-value backtests.

mod analysis;
mod backtest;
mod coint;
pub mod fixture;
mod hamilton;
mod johansen;
mod lobster;
mod normalize;
mod var;
mod zscore;

pub use analysis::{analyse_pair, train_rows, CointReport, HamiltonSummary, PairAnalysis};
pub use backtest::{
    backtest_agent, backtest_flat, backtest_positions, backtest_zscore, historical_env, trading_steps,
    write_backtest_csv, HistoricalSampler, BACKTEST_HEADER,
};
pub use coint::{cointegrate, eigen_structure, portfolio, CointResult, EigenStructure};
pub use hamilton::{hamilton_two_regime, HamiltonConfig, HamiltonFit};
pub use johansen::{johansen_test, Deterministic, JohansenConfig, JohansenResult};
pub use lobster::{ingest_pair, read_trades, resample_locf, LobsterFiles, MidPriceSeries, Trade, PRICE_SCALE, TRADE_EVENTS};
pub use normalize::MinMax;
pub use var::{fit_var, VarFit};
pub use zscore::{rolling_zscore, zscore_positions};
