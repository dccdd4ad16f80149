//! Order book snapshot files and order flow reconstruction.
//!
//! A snapshot row carries the first five levels of each side plus optional
//! trade fields, timestamped to the millisecond. Diffing consecutive
//! snapshots recovers the order flow:
//!
//! 1. non-empty trade fields record a market order with that price and
//!    volume;
//! 2. a quantity increase at a price records a limit order for the
//!    difference;
//! 3. a quantity decrease with no transaction at that price records a
//!    cancellation for the difference (a decrease at the trade price is
//!    attributed to the trade first, only the excess cancels);
//! 4. records of the same timestamp, kind and side collapse into one with
//!    the summed volume (the price of the first record is kept).
//!
//! Prices entering or leaving the five-level window are inherently
//! ambiguous: an entering price counts as a limit order for its full
//! visible quantity, a price scrolling out is not a cancellation. Both are
//! tallied in [`ReconstructionDiagnostics`] rather than silently guessed.

use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::lob::{OrderBook, OrderKind, Price, Side, Volume};

pub const SNAPSHOT_LEVELS: usize = 5;

/// Exact column set of the snapshot CSV.
pub const SNAPSHOT_HEADER: &str = "ts_ms,bid_px_1,bid_qty_1,bid_px_2,bid_qty_2,bid_px_3,bid_qty_3,\
bid_px_4,bid_qty_4,bid_px_5,bid_qty_5,ask_px_1,ask_qty_1,ask_px_2,ask_qty_2,ask_px_3,ask_qty_3,\
ask_px_4,ask_qty_4,ask_px_5,ask_qty_5,trade_px,trade_qty";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamps out of order ({current} after {previous})")]
    UnorderedTimestamps { line: usize, previous: i64, current: i64 },
    #[error("reconstruction needs at least two snapshots, got {0}")]
    TooFewSnapshots(usize),
}

/// Book state at one instant: up to five levels per side, best first, plus
/// the trade that triggered the snapshot, if any.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Snapshot {
    pub ts_ms: i64,
    /// Bid levels, price descending.
    pub bids: Vec<(Price, Volume)>,
    /// Ask levels, price ascending.
    pub asks: Vec<(Price, Volume)>,
    pub trade: Option<(Price, Volume)>,
}

impl Snapshot {
    /// Captures the top five levels of a book.
    pub fn from_book(book: &OrderBook, ts_ms: i64, trade: Option<(Price, Volume)>) -> Self {
        Self {
            ts_ms,
            bids: book.top_levels(Side::Bid, SNAPSHOT_LEVELS),
            asks: book.top_levels(Side::Ask, SNAPSHOT_LEVELS),
            trade,
        }
    }

    fn validate(&self, line: usize) -> Result<(), IngestError> {
        let check = |levels: &[(Price, Volume)], descending: bool| -> Option<String> {
            for pair in levels.windows(2) {
                let ordered = if descending {
                    pair[0].0 > pair[1].0
                } else {
                    pair[0].0 < pair[1].0
                };
                if !ordered {
                    return Some(format!(
                        "levels not strictly price-ordered: {} then {}",
                        pair[0].0, pair[1].0
                    ));
                }
            }
            levels
                .iter()
                .find(|(p, q)| *q == 0 || *p <= 0)
                .map(|(p, _)| format!("level at price {p} has non-positive price or quantity"))
        };
        for (levels, descending) in [(&self.bids, true), (&self.asks, false)] {
            if levels.len() > SNAPSHOT_LEVELS {
                return Err(IngestError::Parse {
                    line,
                    message: "more than five levels on one side".into(),
                });
            }
            if let Some(message) = check(levels, descending) {
                return Err(IngestError::Parse { line, message });
            }
        }
        if let Some((price, qty)) = self.trade {
            if price <= 0 || qty == 0 {
                return Err(IngestError::Parse {
                    line,
                    message: "trade fields must be positive".into(),
                });
            }
        }
        Ok(())
    }
}

/// One inferred order flow event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReconstructedOrder {
    pub ts_ms: i64,
    pub kind: OrderKind,
    /// Book side the event happened on; for market orders, the side whose
    /// resting liquidity was consumed.
    pub side: Side,
    pub price: Price,
    pub volume: Volume,
}

/// Tallies of the transitions the diff rules cannot explain unambiguously.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReconstructionDiagnostics {
    /// Prices that appeared from beyond the visible window (recorded as
    /// limit orders for their full quantity).
    pub window_entries: u64,
    /// Prices that scrolled out of the visible window (not cancellations).
    pub window_exits: u64,
    /// Trades whose side could not be read off the previous best quotes.
    pub ambiguous_trade_side: u64,
    /// Trades larger than the visible quantity decrease at their price.
    pub trade_exceeds_visible: u64,
    /// Extra records absorbed by same-timestamp merging.
    pub merged_records: u64,
}

/// Writes snapshots in the exact column layout of [`SNAPSHOT_HEADER`].
pub fn write_snapshots<W: Write>(mut w: W, snapshots: &[Snapshot]) -> std::io::Result<()> {
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    for snap in snapshots {
        write_snapshot_row(&mut w, snap)?;
    }
    Ok(())
}

pub fn write_snapshot_row<W: Write>(w: &mut W, snap: &Snapshot) -> std::io::Result<()> {
    let mut fields: Vec<String> = Vec::with_capacity(23);
    fields.push(snap.ts_ms.to_string());
    for levels in [&snap.bids, &snap.asks] {
        for i in 0..SNAPSHOT_LEVELS {
            match levels.get(i) {
                Some((price, qty)) => {
                    fields.push(price.to_string());
                    fields.push(qty.to_string());
                }
                None => {
                    fields.push(String::new());
                    fields.push(String::new());
                }
            }
        }
    }
    match snap.trade {
        Some((price, qty)) => {
            fields.push(price.to_string());
            fields.push(qty.to_string());
        }
        None => {
            fields.push(String::new());
            fields.push(String::new());
        }
    }
    writeln!(w, "{}", fields.join(","))
}

/// Parses a snapshot CSV, validating the header, per-row level ordering and
/// global timestamp order. Errors carry 1-based file line numbers.
pub fn parse_snapshots<R: BufRead>(reader: R) -> Result<Vec<Snapshot>, IngestError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break (idx + 1, line);
            }
            None => {
                return Err(IngestError::Parse {
                    line: 0,
                    message: "empty file: missing header".into(),
                })
            }
        }
    };
    if header.1.trim() != SNAPSHOT_HEADER {
        return Err(IngestError::Parse {
            line: header.0,
            message: "header does not match the snapshot schema".into(),
        });
    }

    let mut snapshots = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 23 {
            return Err(IngestError::Parse {
                line: line_no,
                message: format!("expected 23 fields, got {}", fields.len()),
            });
        }
        let parse_int = |field: &str, what: &str| -> Result<i64, IngestError> {
            field.trim().parse().map_err(|_| IngestError::Parse {
                line: line_no,
                message: format!("bad {what}: {field:?}"),
            })
        };
        let ts_ms = parse_int(fields[0], "timestamp")?;

        let mut parse_levels = |offset: usize| -> Result<Vec<(Price, Volume)>, IngestError> {
            let mut levels = Vec::new();
            for i in 0..SNAPSHOT_LEVELS {
                let px = fields[offset + 2 * i].trim();
                let qty = fields[offset + 2 * i + 1].trim();
                match (px.is_empty(), qty.is_empty()) {
                    (true, true) => continue,
                    (false, false) => {
                        levels.push((
                            parse_int(px, "price")?,
                            parse_int(qty, "quantity")? as Volume,
                        ));
                    }
                    _ => {
                        return Err(IngestError::Parse {
                            line: line_no,
                            message: "price and quantity must be filled together".into(),
                        })
                    }
                }
            }
            Ok(levels)
        };
        let bids = parse_levels(1)?;
        let asks = parse_levels(11)?;
        let trade = match (fields[21].trim().is_empty(), fields[22].trim().is_empty()) {
            (true, true) => None,
            (false, false) => Some((
                parse_int(fields[21], "trade price")?,
                parse_int(fields[22], "trade quantity")? as Volume,
            )),
            _ => {
                return Err(IngestError::Parse {
                    line: line_no,
                    message: "trade price and quantity must be filled together".into(),
                })
            }
        };

        let snap = Snapshot { ts_ms, bids, asks, trade };
        snap.validate(line_no)?;
        if let Some(prev) = snapshots.last() {
            let prev: &Snapshot = prev;
            if ts_ms < prev.ts_ms {
                return Err(IngestError::UnorderedTimestamps {
                    line: line_no,
                    previous: prev.ts_ms,
                    current: ts_ms,
                });
            }
        }
        snapshots.push(snap);
    }
    Ok(snapshots)
}

pub fn parse_snapshots_file(path: &Path) -> Result<Vec<Snapshot>, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_snapshots(std::io::BufReader::new(file))
}

/// Applies the four diff rules to consecutive snapshot pairs.
pub fn reconstruct(
    snapshots: &[Snapshot],
) -> Result<(Vec<ReconstructedOrder>, ReconstructionDiagnostics), IngestError> {
    if snapshots.len() < 2 {
        return Err(IngestError::TooFewSnapshots(snapshots.len()));
    }
    let mut records = Vec::new();
    let mut diagnostics = ReconstructionDiagnostics::default();
    for pair in snapshots.windows(2) {
        diff_pair(&pair[0], &pair[1], &mut records, &mut diagnostics);
    }
    let merged = merge_same_timestamp(records, &mut diagnostics);
    Ok((merged, diagnostics))
}

fn diff_pair(
    prev: &Snapshot,
    cur: &Snapshot,
    out: &mut Vec<ReconstructedOrder>,
    diagnostics: &mut ReconstructionDiagnostics,
) {
    let ts_ms = cur.ts_ms;

    // rule 1: explicit transaction
    let mut trade_at: Option<(Side, Price, Volume)> = None;
    if let Some((price, volume)) = cur.trade {
        let side = infer_trade_side(prev, price, diagnostics);
        trade_at = Some((side, price, volume));
        out.push(ReconstructedOrder {
            ts_ms,
            kind: OrderKind::Market,
            side,
            price,
            volume,
        });
    }

    for (side, prev_levels, cur_levels) in [
        (Side::Bid, &prev.bids, &cur.bids),
        (Side::Ask, &prev.asks, &cur.asks),
    ] {
        // worst visible price bounds the window on each side
        let prev_worst = prev_levels.last().map(|(p, _)| *p);
        let cur_worst = cur_levels.last().map(|(p, _)| *p);
        let beyond = |price: Price, worst: Price| match side {
            Side::Bid => price < worst,
            Side::Ask => price > worst,
        };

        let mut prices: Vec<Price> = prev_levels
            .iter()
            .chain(cur_levels.iter())
            .map(|(p, _)| *p)
            .collect();
        prices.sort_unstable();
        prices.dedup();

        for price in prices {
            let before = prev_levels.iter().find(|(p, _)| *p == price).map(|(_, q)| *q);
            let after = cur_levels.iter().find(|(p, _)| *p == price).map(|(_, q)| *q);
            match (before, after) {
                (Some(q0), Some(q1)) if q1 > q0 => out.push(ReconstructedOrder {
                    ts_ms,
                    kind: OrderKind::Limit,
                    side,
                    price,
                    volume: q1 - q0,
                }),
                (Some(q0), Some(q1)) if q1 < q0 => {
                    record_decrease(ts_ms, side, price, q0 - q1, trade_at, out, diagnostics);
                }
                (Some(_), Some(_)) => {}
                (None, Some(q1)) => {
                    // rule 2 for a fresh price; full quantity is the order
                    if prev_levels.len() == SNAPSHOT_LEVELS
                        && prev_worst.is_some_and(|w| beyond(price, w))
                    {
                        diagnostics.window_entries += 1;
                    }
                    out.push(ReconstructedOrder {
                        ts_ms,
                        kind: OrderKind::Limit,
                        side,
                        price,
                        volume: q1,
                    });
                }
                (Some(q0), None) => {
                    // a price beyond a full current window scrolled out of
                    // sight; anything else genuinely vanished
                    if cur_levels.len() == SNAPSHOT_LEVELS
                        && cur_worst.is_some_and(|w| beyond(price, w))
                    {
                        diagnostics.window_exits += 1;
                    } else {
                        record_decrease(ts_ms, side, price, q0, trade_at, out, diagnostics);
                    }
                }
                (None, None) => unreachable!(),
            }
        }
    }
}

/// Rule 3 with the trade-first attribution: a decrease at the trade price is
/// explained by the trade up to its volume, the excess is a cancellation.
fn record_decrease(
    ts_ms: i64,
    side: Side,
    price: Price,
    decrease: Volume,
    trade_at: Option<(Side, Price, Volume)>,
    out: &mut Vec<ReconstructedOrder>,
    diagnostics: &mut ReconstructionDiagnostics,
) {
    let mut remaining = decrease;
    if let Some((t_side, t_price, t_volume)) = trade_at {
        if t_side == side && t_price == price {
            if t_volume > decrease {
                diagnostics.trade_exceeds_visible += 1;
            }
            remaining = decrease.saturating_sub(t_volume);
        }
    }
    if remaining > 0 {
        out.push(ReconstructedOrder {
            ts_ms,
            kind: OrderKind::Cancel,
            side,
            price,
            volume: remaining,
        });
    }
}

fn infer_trade_side(
    prev: &Snapshot,
    price: Price,
    diagnostics: &mut ReconstructionDiagnostics,
) -> Side {
    let best_bid = prev.bids.first().map(|(p, _)| *p);
    let best_ask = prev.asks.first().map(|(p, _)| *p);
    if best_bid == Some(price) {
        return Side::Bid;
    }
    if best_ask == Some(price) {
        return Side::Ask;
    }
    if prev.bids.iter().any(|(p, _)| *p == price) {
        return Side::Bid;
    }
    if prev.asks.iter().any(|(p, _)| *p == price) {
        return Side::Ask;
    }
    diagnostics.ambiguous_trade_side += 1;
    // fall back on proximity to the previous quotes
    match (best_bid, best_ask) {
        (Some(bid), Some(ask)) => {
            if (price - bid).abs() <= (price - ask).abs() {
                Side::Bid
            } else {
                Side::Ask
            }
        }
        (Some(_), None) => Side::Bid,
        _ => Side::Ask,
    }
}

/// Rule 4: same timestamp, kind and side collapse into one record carrying
/// the first price and the summed volume. Relative order of first
/// occurrences is preserved.
fn merge_same_timestamp(
    records: Vec<ReconstructedOrder>,
    diagnostics: &mut ReconstructionDiagnostics,
) -> Vec<ReconstructedOrder> {
    let mut out: Vec<ReconstructedOrder> = Vec::with_capacity(records.len());
    for record in records {
        match out.iter_mut().rev().take_while(|r| r.ts_ms == record.ts_ms).find(|r| {
            r.kind == record.kind && r.side == record.side
        }) {
            Some(existing) => {
                existing.volume += record.volume;
                diagnostics.merged_records += 1;
            }
            None => out.push(record),
        }
    }
    out
}

/// How to pair events into durations.
///
/// Cancellations never enter the event clock; the market-to-limit pairings
/// look at consecutive (adjacent) events in that clock, which is what makes
/// the homogeneous Poisson case distribution-identical to the all-events
/// clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Gaps between consecutive non-cancellation events.
    AllEvents,
    /// Gaps of adjacent market-then-limit event pairs.
    MarketToNextLimit,
    /// Gaps of adjacent limit-then-market event pairs.
    LimitToNextMarket,
    /// `MarketToNextLimit` restricted to limit orders on the same side.
    MarketToNextLimitSameSide,
    /// `MarketToNextLimit` restricted to limit orders on the opposite side.
    MarketToNextLimitOppositeSide,
}

impl Pairing {
    pub const ALL: [Pairing; 5] = [
        Pairing::AllEvents,
        Pairing::MarketToNextLimit,
        Pairing::LimitToNextMarket,
        Pairing::MarketToNextLimitSameSide,
        Pairing::MarketToNextLimitOppositeSide,
    ];

    /// Stable token used in CLI flags and output file names.
    pub fn token(self) -> &'static str {
        match self {
            Pairing::AllEvents => "all-events",
            Pairing::MarketToNextLimit => "market-next-limit",
            Pairing::LimitToNextMarket => "limit-next-market",
            Pairing::MarketToNextLimitSameSide => "market-next-limit-same-side",
            Pairing::MarketToNextLimitOppositeSide => "market-next-limit-opposite-side",
        }
    }
}

impl std::fmt::Display for Pairing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.token())
    }
}

impl std::str::FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pairing::ALL
            .into_iter()
            .find(|p| p.token() == s)
            .ok_or_else(|| {
                format!(
                    "unknown pairing {s:?}; expected one of: {}",
                    Pairing::ALL.map(|p| p.token()).join(", ")
                )
            })
    }
}

/// Durations in seconds for the chosen pairing over a generic time-ordered
/// event sequence `(seconds, kind, side)`.
pub fn durations_from_events(
    events: impl IntoIterator<Item = (f64, OrderKind, Side)>,
    pairing: Pairing,
) -> Vec<f64> {
    let clock: Vec<(f64, OrderKind, Side)> = events
        .into_iter()
        .filter(|(_, kind, _)| *kind != OrderKind::Cancel)
        .collect();
    clock
        .windows(2)
        .filter_map(|pair| {
            let (t0, k0, s0) = pair[0];
            let (t1, k1, s1) = pair[1];
            let duration = t1 - t0;
            let keep = match pairing {
                Pairing::AllEvents => true,
                Pairing::MarketToNextLimit => {
                    k0 == OrderKind::Market && k1 == OrderKind::Limit
                }
                Pairing::LimitToNextMarket => {
                    k0 == OrderKind::Limit && k1 == OrderKind::Market
                }
                Pairing::MarketToNextLimitSameSide => {
                    k0 == OrderKind::Market && k1 == OrderKind::Limit && s0 == s1
                }
                Pairing::MarketToNextLimitOppositeSide => {
                    k0 == OrderKind::Market && k1 == OrderKind::Limit && s0 != s1
                }
            };
            keep.then_some(duration)
        })
        .collect()
}

/// Durations in seconds between reconstructed orders under `pairing`.
pub fn extract_durations(orders: &[ReconstructedOrder], pairing: Pairing) -> Vec<f64> {
    durations_from_events(
        orders
            .iter()
            .map(|o| (o.ts_ms as f64 / 1_000.0, o.kind, o.side)),
        pairing,
    )
}
