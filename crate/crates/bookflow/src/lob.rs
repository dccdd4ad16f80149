//! Price-time-priority limit order book.
//!
//! Prices are integer ticks and volumes integer units, so book arithmetic is
//! exact. Each price level holds a FIFO queue of resting orders; matching
//! walks the opposite ladder best price first, oldest order first. Order ids
//! are assigned by the engine, monotonically.
//!
//! Market orders are labelled by the side of the book they consume: a
//! market order on the bid side removes resting bids (a sale). Trades carry
//! the same labelling.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

/// Price in integer ticks.
pub type Price = i64;
/// Volume in integer units.
pub type Volume = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BookError {
    #[error("unknown order id {0}")]
    UnknownOrder(OrderId),
    #[error("{0:?} side of the book is empty")]
    EmptySide(Side),
    #[error("order volume must be positive")]
    ZeroVolume,
    #[error("order price must be positive, got {0}")]
    BadPrice(Price),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    /// Single-letter code used in the CSV outputs.
    pub fn letter(self) -> char {
        match self {
            Side::Bid => 'B',
            Side::Ask => 'A',
        }
    }

    pub fn from_letter(c: char) -> Option<Side> {
        match c {
            'B' => Some(Side::Bid),
            'A' => Some(Side::Ask),
            _ => None,
        }
    }
}

/// Kind of an order flow event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderKind {
    Limit,
    Market,
    Cancel,
}

impl fmt::Display for OrderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderKind::Limit => write!(f, "limit"),
            OrderKind::Market => write!(f, "market"),
            OrderKind::Cancel => write!(f, "cancel"),
        }
    }
}

impl std::str::FromStr for OrderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "limit" => Ok(OrderKind::Limit),
            "market" => Ok(OrderKind::Market),
            "cancel" => Ok(OrderKind::Cancel),
            other => Err(format!("unknown order kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Order {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub volume: Volume,
    /// Caller-chosen tag identifying the submitting agent.
    pub owner: u32,
}

/// One fill: a resting order met an incoming market or crossing limit order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    pub time: f64,
    pub price: Price,
    pub volume: Volume,
    /// Book side that provided the resting order.
    pub side: Side,
    /// Resting order that was hit.
    pub maker: OrderId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderBook {
    bids: BTreeMap<Price, VecDeque<Order>>,
    asks: BTreeMap<Price, VecDeque<Order>>,
    index: HashMap<OrderId, (Side, Price)>,
    next_id: u64,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    fn ladder(&self, side: Side) -> &BTreeMap<Price, VecDeque<Order>> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn ladder_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<Order>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        match side {
            Side::Bid => self.best_bid(),
            Side::Ask => self.best_ask(),
        }
    }

    pub fn is_side_empty(&self, side: Side) -> bool {
        self.ladder(side).is_empty()
    }

    /// Best ask minus best bid, in ticks.
    pub fn spread(&self) -> Result<i64, BookError> {
        let bid = self.best_bid().ok_or(BookError::EmptySide(Side::Bid))?;
        let ask = self.best_ask().ok_or(BookError::EmptySide(Side::Ask))?;
        Ok(ask - bid)
    }

    /// Midpoint of the best quotes, in ticks (exactly representable: the
    /// fractional part is 0 or 1/2).
    pub fn mid_price(&self) -> Result<f64, BookError> {
        let bid = self.best_bid().ok_or(BookError::EmptySide(Side::Bid))?;
        let ask = self.best_ask().ok_or(BookError::EmptySide(Side::Ask))?;
        Ok((bid + ask) as f64 / 2.0)
    }

    /// Rests a limit order, first matching any crossing volume against the
    /// opposite queue. Returns the assigned id (even when fully filled on
    /// entry) and the trades executed.
    pub fn submit_limit(
        &mut self,
        side: Side,
        price: Price,
        volume: Volume,
        owner: u32,
        time: f64,
    ) -> Result<(OrderId, Vec<Trade>), BookError> {
        if volume == 0 {
            return Err(BookError::ZeroVolume);
        }
        if price <= 0 {
            return Err(BookError::BadPrice(price));
        }
        let id = OrderId(self.next_id);
        self.next_id += 1;

        let crosses = |book: &Self| -> bool {
            match (side, book.best(side.opposite())) {
                (Side::Bid, Some(ask)) => price >= ask,
                (Side::Ask, Some(bid)) => price <= bid,
                (_, None) => false,
            }
        };
        let mut remaining = volume;
        let mut trades = Vec::new();
        while remaining > 0 && crosses(self) {
            let trade = self
                .fill_best(side.opposite(), remaining, time)
                .expect("crossing level exists");
            remaining -= trade.volume;
            trades.push(trade);
        }
        if remaining > 0 {
            let order = Order { id, side, price, volume: remaining, owner };
            self.ladder_mut(side).entry(price).or_default().push_back(order);
            self.index.insert(id, (side, price));
        }
        Ok((id, trades))
    }

    /// Fills against the oldest order at the best price of `side`, for at
    /// most `max_volume` units. This is the single-fill matching primitive;
    /// [`OrderBook::submit_market`] loops it until the requested volume is
    /// done.
    pub fn fill_best(
        &mut self,
        side: Side,
        max_volume: Volume,
        time: f64,
    ) -> Result<Trade, BookError> {
        if max_volume == 0 {
            return Err(BookError::ZeroVolume);
        }
        let price = self.best(side).ok_or(BookError::EmptySide(side))?;
        let queue = self.ladder_mut(side).get_mut(&price).expect("level exists");
        let front = queue.front_mut().expect("no empty queues are retained");
        let fill = front.volume.min(max_volume);
        front.volume -= fill;
        let maker = front.id;
        let exhausted = front.volume == 0;
        if exhausted {
            queue.pop_front();
            let level_empty = queue.is_empty();
            self.index.remove(&maker);
            if level_empty {
                self.ladder_mut(side).remove(&price);
            }
        }
        Ok(Trade { time, price, volume: fill, side, maker })
    }

    /// Executes a market order consuming `side` of the book: best price
    /// first, FIFO within a price. Stops early if the side runs out of
    /// volume (the trades made so far are returned).
    pub fn submit_market(
        &mut self,
        side: Side,
        volume: Volume,
        time: f64,
    ) -> Result<Vec<Trade>, BookError> {
        if volume == 0 {
            return Err(BookError::ZeroVolume);
        }
        if self.is_side_empty(side) {
            return Err(BookError::EmptySide(side));
        }
        let mut remaining = volume;
        let mut trades = Vec::new();
        while remaining > 0 {
            match self.fill_best(side, remaining, time) {
                Ok(trade) => {
                    remaining -= trade.volume;
                    trades.push(trade);
                }
                Err(BookError::EmptySide(_)) => break,
                Err(other) => return Err(other),
            }
        }
        Ok(trades)
    }

    /// Removes a resting order, returning it with its remaining volume.
    pub fn cancel(&mut self, id: OrderId) -> Result<Order, BookError> {
        let (side, price) = self.index.remove(&id).ok_or(BookError::UnknownOrder(id))?;
        let queue = self.ladder_mut(side).get_mut(&price).expect("indexed level exists");
        let pos = queue
            .iter()
            .position(|o| o.id == id)
            .expect("indexed order exists");
        let order = queue.remove(pos).expect("position is valid");
        if queue.is_empty() {
            self.ladder_mut(side).remove(&price);
        }
        Ok(order)
    }

    pub fn order(&self, id: OrderId) -> Option<&Order> {
        let (side, price) = self.index.get(&id)?;
        self.ladder(*side)
            .get(price)?
            .iter()
            .find(|o| o.id == id)
    }

    /// Resting volume aggregated at one price.
    pub fn depth_at(&self, side: Side, price: Price) -> Volume {
        self.ladder(side)
            .get(&price)
            .map_or(0, |q| q.iter().map(|o| o.volume).sum())
    }

    /// Up to `count` best levels of `side` as `(price, total volume)`,
    /// ordered best first.
    pub fn top_levels(&self, side: Side, count: usize) -> Vec<(Price, Volume)> {
        let level = |(price, queue): (&Price, &VecDeque<Order>)| {
            (*price, queue.iter().map(|o| o.volume).sum())
        };
        match side {
            Side::Bid => self.bids.iter().rev().take(count).map(level).collect(),
            Side::Ask => self.asks.iter().take(count).map(level).collect(),
        }
    }

    /// Ids of all resting orders, in no particular priority order.
    pub fn resting_ids(&self) -> Vec<OrderId> {
        let mut ids: Vec<OrderId> = self.index.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// All resting orders of one side in price-time priority order.
    pub fn resting_orders(&self, side: Side) -> Vec<Order> {
        let mut out = Vec::new();
        match side {
            Side::Bid => {
                for queue in self.bids.values().rev() {
                    out.extend(queue.iter().copied());
                }
            }
            Side::Ask => {
                for queue in self.asks.values() {
                    out.extend(queue.iter().copied());
                }
            }
        }
        out
    }

    pub fn resting_count(&self) -> usize {
        self.index.len()
    }

    pub fn resting_volume(&self, side: Side) -> Volume {
        self.ladder(side)
            .values()
            .flat_map(|q| q.iter().map(|o| o.volume))
            .sum()
    }

    /// Book sanity: no crossed quotes, no empty retained levels, index in
    /// sync. Debug aid for the randomized engine tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(bid), Some(ask)) = (self.best_bid(), self.best_ask()) {
            if bid >= ask {
                return Err(format!("crossed book: bid {bid} >= ask {ask}"));
            }
        }
        let mut indexed = 0usize;
        for (side, ladder) in [(Side::Bid, &self.bids), (Side::Ask, &self.asks)] {
            for (price, queue) in ladder {
                if queue.is_empty() {
                    return Err(format!("empty queue retained at {price}"));
                }
                for order in queue {
                    if order.volume == 0 {
                        return Err(format!("zero-volume order {} resting", order.id));
                    }
                    if order.price != *price || order.side != side {
                        return Err(format!("order {} filed under wrong level", order.id));
                    }
                    match self.index.get(&order.id) {
                        Some((s, p)) if *s == side && p == price => indexed += 1,
                        _ => return Err(format!("order {} missing from index", order.id)),
                    }
                }
            }
        }
        if indexed != self.index.len() {
            return Err("index holds stale entries".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limit(book: &mut OrderBook, side: Side, price: Price, volume: Volume) -> OrderId {
        let (id, trades) = book.submit_limit(side, price, volume, 0, 0.0).unwrap();
        assert!(trades.is_empty(), "unexpected cross");
        id
    }

    #[test]
    fn resting_limit_sets_best_quote() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Bid, 100, 10);
        assert_eq!(book.best_bid(), Some(100));
        assert_eq!(book.best_ask(), None);
        assert_eq!(book.depth_at(Side::Bid, 100), 10);
    }

    #[test]
    fn crossing_limit_trades_then_rests_remainder() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Ask, 101, 5);
        let (_, trades) = book.submit_limit(Side::Bid, 101, 8, 0, 1.0).unwrap();
        assert_eq!(trades.len(), 1);
        assert_eq!((trades[0].price, trades[0].volume), (101, 5));
        assert_eq!(trades[0].side, Side::Ask);
        assert_eq!(book.best_bid(), Some(101));
        assert_eq!(book.depth_at(Side::Bid, 101), 3);
        assert!(book.is_side_empty(Side::Ask));
        book.check_invariants().unwrap();
    }

    #[test]
    fn fifo_within_a_level() {
        let mut book = OrderBook::new();
        let first = limit(&mut book, Side::Ask, 101, 4);
        let second = limit(&mut book, Side::Ask, 101, 6);
        let (_, trades) = book.submit_limit(Side::Bid, 101, 4, 0, 1.0).unwrap();
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].maker, first);
        assert_eq!(book.order(second).unwrap().volume, 6);
        book.check_invariants().unwrap();
    }

    #[test]
    fn market_order_walks_the_ladder() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Ask, 101, 5);
        limit(&mut book, Side::Ask, 102, 7);
        let trades = book.submit_market(Side::Ask, 9, 2.0).unwrap();
        assert_eq!(trades.len(), 2);
        assert_eq!((trades[0].price, trades[0].volume), (101, 5));
        assert_eq!((trades[1].price, trades[1].volume), (102, 4));
        assert_eq!(book.best_ask(), Some(102));
        assert_eq!(book.depth_at(Side::Ask, 102), 3);
    }

    #[test]
    fn market_order_exactly_clearing_a_level_removes_it() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Bid, 99, 6);
        limit(&mut book, Side::Bid, 98, 2);
        let trades = book.submit_market(Side::Bid, 6, 1.0).unwrap();
        assert_eq!(trades.len(), 1);
        assert_eq!(book.best_bid(), Some(98));
    }

    #[test]
    fn partial_fill_leaves_front_order_reduced() {
        let mut book = OrderBook::new();
        let id = limit(&mut book, Side::Ask, 101, 3);
        let trades = book.submit_market(Side::Ask, 1, 1.0).unwrap();
        assert_eq!(trades.len(), 1);
        assert_eq!(book.order(id).unwrap().volume, 2);
        assert_eq!(book.best_ask(), Some(101));
    }

    #[test]
    fn market_against_empty_side_errors() {
        let mut book = OrderBook::new();
        assert_eq!(
            book.submit_market(Side::Ask, 5, 0.0),
            Err(BookError::EmptySide(Side::Ask))
        );
    }

    #[test]
    fn market_larger_than_side_stops_early() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Ask, 101, 5);
        let trades = book.submit_market(Side::Ask, 50, 1.0).unwrap();
        assert_eq!(trades.len(), 1);
        assert!(book.is_side_empty(Side::Ask));
    }

    #[test]
    fn cancel_moves_best_and_preserves_queue_order() {
        let mut book = OrderBook::new();
        let best = limit(&mut book, Side::Bid, 100, 5);
        limit(&mut book, Side::Bid, 99, 4);
        assert_eq!(book.cancel(best).unwrap().volume, 5);
        assert_eq!(book.best_bid(), Some(99));

        let a = limit(&mut book, Side::Ask, 105, 1);
        let b = limit(&mut book, Side::Ask, 105, 2);
        let c = limit(&mut book, Side::Ask, 105, 3);
        book.cancel(b).unwrap();
        let trades = book.submit_market(Side::Ask, 4, 2.0).unwrap();
        assert_eq!(trades[0].maker, a);
        assert_eq!(trades[1].maker, c);
        book.check_invariants().unwrap();
    }

    #[test]
    fn double_cancel_errors() {
        let mut book = OrderBook::new();
        let id = limit(&mut book, Side::Bid, 100, 5);
        book.cancel(id).unwrap();
        assert_eq!(book.cancel(id), Err(BookError::UnknownOrder(id)));
    }

    #[test]
    fn spread_and_mid() {
        let mut book = OrderBook::new();
        limit(&mut book, Side::Bid, 100, 1);
        limit(&mut book, Side::Ask, 101, 1);
        assert_eq!(book.spread().unwrap(), 1);
        assert_eq!(book.mid_price().unwrap(), 100.5);

        let mut wide = OrderBook::new();
        limit(&mut wide, Side::Bid, 100, 1);
        limit(&mut wide, Side::Ask, 105, 1);
        assert_eq!(wide.spread().unwrap(), 5);
        assert_eq!(wide.mid_price().unwrap(), 102.5);

        let mut one_sided = OrderBook::new();
        limit(&mut one_sided, Side::Bid, 100, 1);
        assert_eq!(one_sided.spread(), Err(BookError::EmptySide(Side::Ask)));
        assert_eq!(one_sided.mid_price(), Err(BookError::EmptySide(Side::Ask)));
    }

    #[test]
    fn rejects_invalid_orders() {
        let mut book = OrderBook::new();
        assert_eq!(
            book.submit_limit(Side::Bid, 100, 0, 0, 0.0),
            Err(BookError::ZeroVolume)
        );
        assert_eq!(
            book.submit_limit(Side::Bid, 0, 5, 0, 0.0),
            Err(BookError::BadPrice(0))
        );
        assert_eq!(book.submit_market(Side::Bid, 0, 0.0), Err(BookError::ZeroVolume));
    }

    #[test]
    fn ids_are_monotone() {
        let mut book = OrderBook::new();
        let a = limit(&mut book, Side::Bid, 100, 1);
        let b = limit(&mut book, Side::Ask, 110, 1);
        assert!(b > a);
    }

    #[test]
    fn top_levels_are_ordered_best_first() {
        let mut book = OrderBook::new();
        for (price, volume) in [(100, 3), (99, 2), (98, 1), (97, 9), (96, 4), (95, 5)] {
            limit(&mut book, Side::Bid, price, volume);
        }
        let levels = book.top_levels(Side::Bid, 5);
        assert_eq!(levels.len(), 5);
        assert_eq!(levels[0], (100, 3));
        assert_eq!(levels[4], (96, 4));
    }
}
