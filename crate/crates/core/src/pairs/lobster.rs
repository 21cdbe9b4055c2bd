//! Level-1 LOBSTER message/order-book files to a uniform mid-price grid.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::fmt::{csv_line, g12};
use crate::{Error, Result};

/// LOBSTER event types that record executions (visible and hidden).
pub const TRADE_EVENTS: [u32; 2] = [4, 5];
pub const PRICE_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    /// Seconds after midnight.
    pub time: f64,
    pub mid: f64,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn fields<'a>(path: &Path, line: usize, text: &'a str, want: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = text.trim_end().split(',').collect();
    if parts.len() < want {
        return Err(parse_err(path, line, format!("expected at least {want} fields, found {}", parts.len())));
    }
    Ok(parts)
}

fn number<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} is not a number: {field:?}")))
}

/// Reads a message file and its order-book file in lock step and keeps the
/// mid-price prevailing after every trade event.
pub fn read_trades(message: &Path, orderbook: &Path) -> Result<Vec<Trade>> {
    let msg = BufReader::new(File::open(message)?);
    let mut book = BufReader::new(File::open(orderbook)?).lines();
    let mut trades = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (idx, line) in msg.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let book_line = book
            .next()
            .ok_or_else(|| parse_err(orderbook, lineno, "order-book file has fewer rows than the message file"))??;
        if line.trim().is_empty() {
            return Err(parse_err(message, lineno, "empty row"));
        }
        let m = fields(message, lineno, &line, 6)?;
        let time: f64 = number(message, lineno, m[0], "time")?;
        let kind: u32 = number(message, lineno, m[1], "event type")?;
        if !time.is_finite() || time < last_time {
            return Err(parse_err(message, lineno, "timestamps must be finite and non-decreasing"));
        }
        last_time = time;
        if !TRADE_EVENTS.contains(&kind) {
            continue;
        }
        let b = fields(orderbook, lineno, &book_line, 4)?;
        let ask: f64 = number(orderbook, lineno, b[0], "ask price")?;
        let bid: f64 = number(orderbook, lineno, b[2], "bid price")?;
        if !(ask > 0.0 && bid > 0.0) {
            return Err(parse_err(orderbook, lineno, "prices must be positive"));
        }
        trades.push(Trade { time, mid: 0.5 * (ask + bid) * PRICE_SCALE });
    }
    if trades.is_empty() {
        return Err(Error::InsufficientData(format!("{} contains no trade events", message.display())));
    }
    Ok(trades)
}

/// Last observation carried forward onto `start, start + grid, …` up to `end`.
/// Requires a trade at or before `start`.
pub fn resample_locf(trades: &[Trade], start: f64, end: f64, grid: f64) -> Result<Vec<f64>> {
    if !(grid > 0.0) {
        return Err(Error::Config("grid spacing must be positive".into()));
    }
    if trades.first().is_none_or(|t| t.time > start) || end < start {
        return Err(Error::InsufficientData("no trade at or before the grid start".into()));
    }
    let points = ((end - start) / grid + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(points);
    let mut j = 0;
    for k in 0..points {
        let at = start + k as f64 * grid;
        while j + 1 < trades.len() && trades[j + 1].time <= at {
            j += 1;
        }
        out.push(trades[j].mid);
    }
    Ok(out)
}

/// Mid-prices of two assets on a shared uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MidPriceSeries {
    /// Grid time of the first row, in seconds.
    pub start: f64,
    pub grid: f64,
    pub names: [String; 2],
    pub prices: [Vec<f64>; 2],
}

impl MidPriceSeries {
    pub fn len(&self) -> usize {
        self.prices[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.grid
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        out.write_all(csv_line(["t", self.names[0].as_str(), self.names[1].as_str()]).as_bytes())?;
        for k in 0..self.len() {
            out.write_all(csv_line([g12(self.time(k)), g12(self.prices[0][k]), g12(self.prices[1][k])]).as_bytes())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`MidPriceSeries::write_csv`].
    pub fn load_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| parse_err(path, 1, "missing header"))??;
        let h = fields(path, 1, &header, 3)?;
        let names = [h[1].to_string(), h[2].to_string()];
        let mut times = Vec::new();
        let mut prices = [Vec::new(), Vec::new()];
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line?;
            let f = fields(path, lineno, &line, 3)?;
            times.push(number::<f64>(path, lineno, f[0], "time")?);
            prices[0].push(number(path, lineno, f[1], "price")?);
            prices[1].push(number(path, lineno, f[2], "price")?);
        }
        if times.is_empty() {
            return Err(Error::InsufficientData(format!("{} has no rows", path.display())));
        }
        let grid = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - grid).abs() > 1e-6 {
                return Err(parse_err(path, k + 3, "grid is not uniform"));
            }
        }
        Ok(MidPriceSeries { start: times[0], grid, names, prices })
    }
}

/// Message and order-book file of one asset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LobsterFiles {
    pub name: String,
    pub message: PathBuf,
    pub orderbook: PathBuf,
}

/// Ingests both assets onto one grid spanning the period where both have traded.
pub fn ingest_pair(assets: &[LobsterFiles; 2], grid: f64) -> Result<MidPriceSeries> {
    let a = read_trades(&assets[0].message, &assets[0].orderbook)?;
    let b = read_trades(&assets[1].message, &assets[1].orderbook)?;
    let start = a[0].time.max(b[0].time);
    let end = a[a.len() - 1].time.min(b[b.len() - 1].time);
    if end < start {
        return Err(Error::InsufficientData("the two assets have no overlapping trading period".into()));
    }
    Ok(MidPriceSeries {
        start,
        grid,
        names: [assets[0].name.clone(), assets[1].name.clone()],
        prices: [resample_locf(&a, start, end, grid)?, resample_locf(&b, start, end, grid)?],
    })
}
