//! Mutually exciting point processes for market and limit order flow.
//!
//! The order flow model is an (at most) bivariate Hawkes process with
//! exponential kernels and a triangular structure: market orders may excite
//! market orders (the `MM` effect), market orders may excite limit orders
//! (`LM`) and limit orders may excite limit orders (`LL`). There is no
//! channel from limit orders back to market orders, so the market component
//! is autonomous and the limit component sees market events as an exogenous
//! input.
//!
//! Intensities, in events per second with time in seconds:
//!
//! ```text
//! market(t) = market_base + sum over past market events  a_MM exp(-b_MM dt)
//! limit(t)  = limit_base  + sum over past market events  a_LM exp(-b_LM dt)
//!                         + sum over past limit events   a_LL exp(-b_LL dt)
//! ```
//!
//! All operations are pure given their inputs plus an explicit seed, so
//! independent simulations and fits can run in parallel freely.

mod fit;
mod likelihood;
mod simulate;

pub use fit::{fit_mle, FitResult, KernelStructure, ParamBounds};
pub(crate) use simulate::FlowSampler;

use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unstable model: {0}")]
    Unstable(String),
    #[error("invalid event stream: {0}")]
    InvalidStream(String),
    #[error("invalid horizon: must be positive")]
    InvalidHorizon,
    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),
    #[error("stream io: {0}")]
    Io(#[from] std::io::Error),
    #[error("stream parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One of the two order flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Market,
    Limit,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Market => write!(f, "market"),
            Component::Limit => write!(f, "limit"),
        }
    }
}

/// Exponential excitation kernel `alpha * exp(-beta * t)`.
///
/// `alpha` is the intensity jump at lag zero (events/s), `beta` the decay
/// rate (1/s). The kernel integral `alpha / beta` is the expected number of
/// direct children per event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialKernel<F> {
    alpha: F,
    beta: F,
}

impl<F: Scalar> ExponentialKernel<F> {
    pub fn new(alpha: F, beta: F) -> Result<Self, HawkesError> {
        if !(alpha >= F::zero()) || !alpha.is_finite() {
            return Err(HawkesError::InvalidKernel(format!(
                "alpha must be finite and >= 0, got {alpha}"
            )));
        }
        if !(beta > F::zero()) || !beta.is_finite() {
            return Err(HawkesError::InvalidKernel(format!(
                "beta must be finite and > 0, got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn beta(&self) -> F {
        self.beta
    }

    /// Kernel integral `alpha / beta`: expected direct offspring per event.
    pub fn branching_ratio(&self) -> F {
        self.alpha / self.beta
    }

    /// Kernel value at lag `dt >= 0`.
    pub fn eval(&self, dt: F) -> F {
        self.alpha * (-self.beta * dt).exp()
    }
}

/// Full parameter set of the bivariate order flow model.
///
/// Construction validates positivity of the baselines and stability of the
/// self-exciting kernels (branching ratio < 1 for `MM` and `LL`; the
/// triangular structure puts no constraint on `LM`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkesModel<F> {
    market_base: F,
    limit_base: F,
    market_on_market: Option<ExponentialKernel<F>>,
    limit_on_market: Option<ExponentialKernel<F>>,
    limit_on_limit: Option<ExponentialKernel<F>>,
}

impl<F: Scalar> HawkesModel<F> {
    pub fn new(
        market_base: F,
        limit_base: F,
        market_on_market: Option<ExponentialKernel<F>>,
        limit_on_market: Option<ExponentialKernel<F>>,
        limit_on_limit: Option<ExponentialKernel<F>>,
    ) -> Result<Self, HawkesError> {
        if !(market_base > F::zero()) || !market_base.is_finite() {
            return Err(HawkesError::InvalidModel(format!(
                "market base intensity must be finite and > 0, got {market_base}"
            )));
        }
        if !(limit_base >= F::zero()) || !limit_base.is_finite() {
            return Err(HawkesError::InvalidModel(format!(
                "limit base intensity must be finite and >= 0, got {limit_base}"
            )));
        }
        for (name, kernel) in [("MM", &market_on_market), ("LL", &limit_on_limit)] {
            if let Some(k) = kernel {
                let ratio = k.branching_ratio();
                if !(ratio < F::one()) {
                    return Err(HawkesError::Unstable(format!(
                        "{name} kernel violates alpha/beta < 1: {}/{} = {ratio}",
                        k.alpha(),
                        k.beta()
                    )));
                }
            }
        }
        Ok(Self {
            market_base,
            limit_base,
            market_on_market,
            limit_on_market,
            limit_on_limit,
        })
    }

    /// Model with no excitation at all: two independent Poisson flows.
    pub fn poisson(market_base: F, limit_base: F) -> Result<Self, HawkesError> {
        Self::new(market_base, limit_base, None, None, None)
    }

    pub fn market_base(&self) -> F {
        self.market_base
    }

    pub fn limit_base(&self) -> F {
        self.limit_base
    }

    pub fn market_on_market(&self) -> Option<&ExponentialKernel<F>> {
        self.market_on_market.as_ref()
    }

    pub fn limit_on_market(&self) -> Option<&ExponentialKernel<F>> {
        self.limit_on_market.as_ref()
    }

    pub fn limit_on_limit(&self) -> Option<&ExponentialKernel<F>> {
        self.limit_on_limit.as_ref()
    }

    /// Intensity of `component` at time `t` given the stream history.
    ///
    /// Uses the left limit: events at exactly `t` are excluded, so an event
    /// at `t = 0` sees the baseline intensity only.
    pub fn intensity_at(&self, stream: &EventStream<F>, t: F, component: Component) -> F {
        let mut total = match component {
            Component::Market => self.market_base,
            Component::Limit => self.limit_base,
        };
        for event in stream.events() {
            if event.time >= t {
                break;
            }
            let dt = t - event.time;
            match (component, event.mark) {
                (Component::Market, Component::Market) => {
                    if let Some(k) = &self.market_on_market {
                        total += k.eval(dt);
                    }
                }
                (Component::Limit, Component::Market) => {
                    if let Some(k) = &self.limit_on_market {
                        total += k.eval(dt);
                    }
                }
                (Component::Limit, Component::Limit) => {
                    if let Some(k) = &self.limit_on_limit {
                        total += k.eval(dt);
                    }
                }
                (Component::Market, Component::Limit) => {}
            }
        }
        total
    }

    /// Long-run mean event rates `(market, limit)` in events per second.
    ///
    /// Stability is a type invariant, so the closed form always exists:
    /// the market rate solves `m = market_base + (a/b)_MM * m`, and the
    /// limit rate sees the market flow as exogenous input.
    pub fn stationary_rates(&self) -> (F, F) {
        let ratio = |k: &Option<ExponentialKernel<F>>| {
            k.as_ref().map_or(F::zero(), ExponentialKernel::branching_ratio)
        };
        let market = self.market_base / (F::one() - ratio(&self.market_on_market));
        let limit = (self.limit_base + ratio(&self.limit_on_market) * market)
            / (F::one() - ratio(&self.limit_on_limit));
        (market, limit)
    }
}

/// A single marked event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<F> {
    pub time: F,
    pub mark: Component,
}

/// Time-ordered marked events on `[0, horizon]`.
///
/// Timestamps are strictly increasing; ties are broken at generation or
/// ingest by bumping to the next representable value.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream<F> {
    events: Vec<Event<F>>,
    horizon: F,
}

impl<F: Scalar> EventStream<F> {
    pub fn new(events: Vec<Event<F>>, horizon: F) -> Result<Self, HawkesError> {
        if !(horizon > F::zero()) || !horizon.is_finite() {
            return Err(HawkesError::InvalidHorizon);
        }
        let mut prev: Option<F> = None;
        for (i, event) in events.iter().enumerate() {
            if !(event.time >= F::zero()) || event.time > horizon {
                return Err(HawkesError::InvalidStream(format!(
                    "event {i} at t={} outside [0, {horizon}]",
                    event.time
                )));
            }
            if let Some(p) = prev {
                if event.time <= p {
                    return Err(HawkesError::InvalidStream(format!(
                        "event {i} at t={} does not increase past {p}",
                        event.time
                    )));
                }
            }
            prev = Some(event.time);
        }
        Ok(Self { events, horizon })
    }

    pub fn events(&self) -> &[Event<F>] {
        &self.events
    }

    pub fn horizon(&self) -> F {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, component: Component) -> usize {
        self.events.iter().filter(|e| e.mark == component).count()
    }

    pub fn times(&self, component: Component) -> impl Iterator<Item = F> + '_ {
        self.events
            .iter()
            .filter(move |e| e.mark == component)
            .map(|e| e.time)
    }

    /// Writes the stream as CSV: a `# horizon=<seconds>` comment line, a
    /// `t,mark` header, then one `t,M|L` row per event with nine fractional
    /// digits on the timestamp.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# horizon={:.9}", self.horizon.to_f64().unwrap())?;
        writeln!(w, "t,mark")?;
        for event in &self.events {
            let mark = match event.mark {
                Component::Market => 'M',
                Component::Limit => 'L',
            };
            writeln!(w, "{:.9},{}", event.time.to_f64().unwrap(), mark)?;
        }
        Ok(())
    }

    /// Parses the CSV format written by [`EventStream::write_csv`].
    ///
    /// Timestamp ties introduced by decimal rounding are re-broken by
    /// bumping to the next representable value.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, HawkesError> {
        let mut horizon: Option<F> = None;
        let mut events: Vec<Event<F>> = Vec::new();
        let mut saw_header = false;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(value) = rest.strip_prefix("horizon=") {
                    let parsed: f64 = value.trim().parse().map_err(|_| HawkesError::Parse {
                        line: line_no,
                        message: format!("bad horizon value {value:?}"),
                    })?;
                    horizon = Some(F::of(parsed));
                }
                continue;
            }
            if !saw_header {
                if trimmed != "t,mark" {
                    return Err(HawkesError::Parse {
                        line: line_no,
                        message: format!("expected header `t,mark`, got {trimmed:?}"),
                    });
                }
                saw_header = true;
                continue;
            }
            let (t_str, mark_str) = trimmed.split_once(',').ok_or_else(|| HawkesError::Parse {
                line: line_no,
                message: "expected `t,mark` row".into(),
            })?;
            let t: f64 = t_str.trim().parse().map_err(|_| HawkesError::Parse {
                line: line_no,
                message: format!("bad timestamp {t_str:?}"),
            })?;
            let mark = match mark_str.trim() {
                "M" => Component::Market,
                "L" => Component::Limit,
                other => {
                    return Err(HawkesError::Parse {
                        line: line_no,
                        message: format!("mark must be M or L, got {other:?}"),
                    })
                }
            };
            let mut t = F::of(t);
            if let Some(last) = events.last() {
                if t <= last.time {
                    t = last.time.next_above();
                }
            }
            events.push(Event { time: t, mark });
        }
        let horizon = horizon.ok_or_else(|| HawkesError::Parse {
            line: 0,
            message: "missing `# horizon=` line".into(),
        })?;
        Self::new(events, horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn kernel(alpha: f64, beta: f64) -> ExponentialKernel<f64> {
        ExponentialKernel::new(alpha, beta).unwrap()
    }

    pub(super) fn hp_model() -> HawkesModel<f64> {
        HawkesModel::poisson(0.22, 1.69).unwrap()
    }

    pub(super) fn mm_model() -> HawkesModel<f64> {
        HawkesModel::new(0.09, 1.69, Some(kernel(1.7, 6.0)), None, None).unwrap()
    }

    #[test]
    fn kernel_validation() {
        assert!(ExponentialKernel::new(-0.1, 1.0).is_err());
        assert!(ExponentialKernel::new(1.0, 0.0).is_err());
        assert!(ExponentialKernel::new(0.0, 1.0).is_ok());
        assert_relative_eq!(kernel(1.7, 6.0).branching_ratio(), 1.7 / 6.0);
    }

    #[test]
    fn model_rejects_unstable_self_excitation() {
        let err = HawkesModel::new(0.1, 0.1, Some(kernel(6.0, 6.0)), None, None).unwrap_err();
        assert!(matches!(err, HawkesError::Unstable(_)), "{err}");
        // cross-excitation LM has no stability constraint
        assert!(HawkesModel::new(0.22, 0.79, None, Some(kernel(5.8, 1.8)), None).is_ok());
    }

    #[test]
    fn model_rejects_bad_baselines() {
        assert!(HawkesModel::<f64>::poisson(0.0, 1.0).is_err());
        assert!(HawkesModel::<f64>::poisson(1.0, -0.5).is_err());
        assert!(HawkesModel::<f64>::poisson(1.0, 0.0).is_ok());
    }

    #[test]
    fn intensity_baseline_only_on_empty_stream() {
        let stream = EventStream::new(vec![], 100.0).unwrap();
        assert_relative_eq!(hp_model().intensity_at(&stream, 10.0, Component::Market), 0.22);
        assert_relative_eq!(hp_model().intensity_at(&stream, 10.0, Component::Limit), 1.69);
    }

    #[test]
    fn intensity_single_market_event() {
        let model = mm_model();
        let stream = EventStream::new(
            vec![Event { time: 0.0, mark: Component::Market }],
            10.0,
        )
        .unwrap();
        // left limit: the event at t=0 does not count at t=0
        assert_relative_eq!(model.intensity_at(&stream, 0.0, Component::Market), 0.09);
        // just after the event the full jump is present
        assert_relative_eq!(
            model.intensity_at(&stream, 1e-12, Component::Market),
            0.09 + 1.7,
            max_relative = 1e-9
        );
        // one decay time 1/beta later: 0.09 + 1.7 e^{-1}
        assert_relative_eq!(
            model.intensity_at(&stream, 1.0 / 6.0, Component::Market),
            0.09 + 1.7 * (-1.0_f64).exp(),
            max_relative = 1e-12
        );
        // the MM kernel feeds the market component only
        assert_relative_eq!(model.intensity_at(&stream, 0.5, Component::Limit), 1.69);
    }

    #[test]
    fn stationary_rates_match_closed_forms() {
        let (m, l) = hp_model().stationary_rates();
        assert_relative_eq!(m, 0.22);
        assert_relative_eq!(l, 1.69);
        // one trading day of the Poisson variant
        assert_relative_eq!(m * 86_400.0, 19_008.0, max_relative = 1e-12);
        assert_relative_eq!(l * 86_400.0, 146_016.0, max_relative = 1e-12);

        let (m, _) = mm_model().stationary_rates();
        assert_relative_eq!(m, 0.09 / (1.0 - 1.7 / 6.0), max_relative = 1e-12);

        let full = HawkesModel::new(
            0.12,
            0.02,
            Some(kernel(1.7, 5.8)),
            Some(kernel(5.8, 1.8)),
            Some(kernel(1.7, 6.0)),
        )
        .unwrap();
        let (m, l) = full.stationary_rates();
        let m_expect = 0.12 / (1.0 - 1.7 / 5.8);
        let l_expect = (0.02 + 5.8 / 1.8 * m_expect) / (1.0 - 1.7 / 6.0);
        assert_relative_eq!(m, m_expect, max_relative = 1e-12);
        assert_relative_eq!(l, l_expect, max_relative = 1e-12);
    }

    #[test]
    fn stream_validation() {
        let ev = |t: f64, mark| Event { time: t, mark };
        assert!(EventStream::new(vec![], 0.0).is_err());
        assert!(EventStream::new(vec![ev(-1.0, Component::Market)], 5.0).is_err());
        assert!(EventStream::new(vec![ev(6.0, Component::Market)], 5.0).is_err());
        assert!(EventStream::new(
            vec![ev(1.0, Component::Market), ev(1.0, Component::Limit)],
            5.0
        )
        .is_err());
        let s = EventStream::new(
            vec![ev(1.0, Component::Market), ev(2.0, Component::Limit)],
            5.0,
        )
        .unwrap();
        assert_eq!(s.count(Component::Market), 1);
        assert_eq!(s.count(Component::Limit), 1);
    }

    #[test]
    fn csv_round_trip() {
        let ev = |t: f64, mark| Event { time: t, mark };
        let stream = EventStream::new(
            vec![
                ev(0.000001, Component::Market),
                ev(1.25, Component::Limit),
                ev(86_399.999, Component::Market),
            ],
            86_400.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        stream.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# horizon=86400.000000000\nt,mark\n"));
        let back = EventStream::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.horizon(), 86_400.0);
        assert_relative_eq!(back.events()[1].time, 1.25);
    }

    #[test]
    fn csv_read_breaks_rounded_ties() {
        let text = "# horizon=10.0\nt,mark\n1.000000000,M\n1.000000000,L\n";
        let stream = EventStream::<f64>::read_csv(text.as_bytes()).unwrap();
        assert!(stream.events()[1].time > stream.events()[0].time);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(EventStream::<f64>::read_csv("t,mark\n1.0,M\n".as_bytes()).is_err());
        let text = "# horizon=10.0\nt,mark\n1.0,X\n";
        assert!(matches!(
            EventStream::<f64>::read_csv(text.as_bytes()),
            Err(HawkesError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn generic_over_f32() {
        let model = HawkesModel::<f32>::poisson(0.22, 1.69).unwrap();
        let (m, l) = model.stationary_rates();
        assert_relative_eq!(m, 0.22_f32);
        assert_relative_eq!(l, 1.69_f32);
    }
}
