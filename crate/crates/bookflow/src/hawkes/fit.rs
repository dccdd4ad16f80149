//! Maximum likelihood fitting.
//!
//! The triangular excitation structure makes the joint likelihood separable:
//! the market component depends only on (market_base, MM) and the limit
//! component only on (limit_base, LM, LL) with market events as exogenous
//! input. The fit therefore solves two independent problems. A component
//! with no kernels has the closed-form Poisson solution `count / horizon`;
//! anything else runs a derivative-free simplex search over log-parameters,
//! which keeps every parameter positive by construction. Stability of the
//! self-exciting kernels is enforced as the bound `alpha < 0.999 * beta`.

use std::fmt;
use std::str::FromStr;

use super::likelihood::{component_log_likelihood, Incoming};
use super::{Component, Event, EventStream, ExponentialKernel, HawkesError, HawkesModel};
use crate::Scalar;

/// Which excitation effects a fit should estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelStructure {
    pub market_on_market: bool,
    pub limit_on_market: bool,
    pub limit_on_limit: bool,
}

impl KernelStructure {
    /// No excitation: both flows homogeneous Poisson.
    pub fn poisson() -> Self {
        Self::default()
    }
}

impl fmt::Display for KernelStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.market_on_market {
            parts.push("MM");
        }
        if self.limit_on_limit {
            parts.push("LL");
        }
        if self.limit_on_market {
            parts.push("LM");
        }
        if parts.is_empty() {
            write!(f, "HP")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

impl FromStr for KernelStructure {
    type Err = String;

    /// Parses `HP` or a `+`-joined combination of `MM`, `LM`, `LL`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        if upper == "HP" {
            return Ok(Self::poisson());
        }
        let mut structure = Self::poisson();
        for token in upper.split('+') {
            match token.trim() {
                "MM" => structure.market_on_market = true,
                "LM" => structure.limit_on_market = true,
                "LL" => structure.limit_on_limit = true,
                other => return Err(format!("unknown effect {other:?} (expected MM, LM or LL)")),
            }
        }
        Ok(structure)
    }
}

/// Box constraints applied to every fitted parameter of its kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds<F> {
    pub base: (F, F),
    pub alpha: (F, F),
    pub beta: (F, F),
}

impl<F: Scalar> Default for ParamBounds<F> {
    fn default() -> Self {
        Self {
            base: (F::of(1e-6), F::of(1e4)),
            alpha: (F::of(1e-6), F::of(1e4)),
            beta: (F::of(1e-4), F::of(1e4)),
        }
    }
}

/// Outcome of a maximum likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<F> {
    pub model: HawkesModel<F>,
    pub log_likelihood: F,
    pub converged: bool,
    /// Objective evaluations spent across both component searches.
    pub iterations: usize,
}

const STABILITY_MARGIN: f64 = 0.999;
const MAX_EVALUATIONS: usize = 10_000;
const RELATIVE_TOL: f64 = 1e-6;

/// Fits the enabled parameters by maximizing the log-likelihood of `stream`.
///
/// `init` provides starting values; it must carry a kernel for every effect
/// enabled in `structure`, and every starting value must lie inside
/// `bounds`. Non-convergence is reported through [`FitResult::converged`],
/// never silently.
pub fn fit_mle<F: Scalar>(
    stream: &EventStream<F>,
    structure: KernelStructure,
    init: &HawkesModel<F>,
    bounds: &ParamBounds<F>,
) -> Result<FitResult<F>, HawkesError> {
    let n_market = stream.count(Component::Market);
    let n_limit = stream.count(Component::Limit);
    if structure.market_on_market && n_market < 2 {
        return Err(HawkesError::DegenerateFit(format!(
            "MM effect needs at least 2 market events, stream has {n_market}"
        )));
    }
    if structure.limit_on_market && (n_market < 2 || n_limit < 2) {
        return Err(HawkesError::DegenerateFit(format!(
            "LM effect needs at least 2 events of each flow, stream has {n_market} market / {n_limit} limit"
        )));
    }
    if structure.limit_on_limit && n_limit < 2 {
        return Err(HawkesError::DegenerateFit(format!(
            "LL effect needs at least 2 limit events, stream has {n_limit}"
        )));
    }

    let horizon = stream.horizon();

    // -- market side ------------------------------------------------------
    let market_events: Vec<Event<F>> = stream
        .events()
        .iter()
        .filter(|e| e.mark == Component::Market)
        .copied()
        .collect();
    let market_stream = EventStream::new(market_events, horizon)?;

    let (market_base, market_kernel, market_search) = if structure.market_on_market {
        let kernel = init
            .market_on_market()
            .ok_or_else(|| HawkesError::InvalidModel("init lacks an MM kernel".into()))?;
        let x0 = [init.market_base(), kernel.alpha(), kernel.beta()];
        check_within_bounds(&x0, &[Kind::Base, Kind::Alpha, Kind::Beta], bounds)?;
        let objective = |p: &[F]| {
            let penalty = box_penalty(p, &[Kind::Base, Kind::Alpha, Kind::Beta], bounds)
                + stability_penalty(p[1], p[2]);
            if penalty > F::zero() {
                return F::of(1e12) * (F::one() + penalty);
            }
            -component_log_likelihood(
                &market_stream,
                Component::Market,
                p[0],
                &[Incoming {
                    source: Component::Market,
                    alpha: p[1],
                    beta: p[2],
                }],
            )
        };
        let search = simplex_search(objective, &x0);
        (
            search.x[0],
            Some(ExponentialKernel::new(search.x[1], search.x[2])?),
            Some(search),
        )
    } else {
        // Poisson MLE in closed form; the lower bound keeps the baseline
        // positive when the stream has no market events at all.
        let raw = F::from_usize(n_market).unwrap() / horizon;
        (raw.max(bounds.base.0), None, None)
    };

    // -- limit side ---------------------------------------------------------
    let mut kinds = vec![Kind::Base];
    let mut x0 = vec![init.limit_base()];
    if structure.limit_on_market {
        let kernel = init
            .limit_on_market()
            .ok_or_else(|| HawkesError::InvalidModel("init lacks an LM kernel".into()))?;
        kinds.extend([Kind::Alpha, Kind::Beta]);
        x0.extend([kernel.alpha(), kernel.beta()]);
    }
    if structure.limit_on_limit {
        let kernel = init
            .limit_on_limit()
            .ok_or_else(|| HawkesError::InvalidModel("init lacks an LL kernel".into()))?;
        kinds.extend([Kind::Alpha, Kind::Beta]);
        x0.extend([kernel.alpha(), kernel.beta()]);
    }

    let (limit_base, lm_kernel, ll_kernel, limit_search) = if kinds.len() > 1 {
        check_within_bounds(&x0, &kinds, bounds)?;
        let with_lm = structure.limit_on_market;
        let objective = |p: &[F]| {
            let mut penalty = box_penalty(p, &kinds, bounds);
            if structure.limit_on_limit {
                let offset = if with_lm { 3 } else { 1 };
                penalty += stability_penalty(p[offset], p[offset + 1]);
            }
            if penalty > F::zero() {
                return F::of(1e12) * (F::one() + penalty);
            }
            let mut kernels = Vec::with_capacity(2);
            if with_lm {
                kernels.push(Incoming {
                    source: Component::Market,
                    alpha: p[1],
                    beta: p[2],
                });
            }
            if structure.limit_on_limit {
                let offset = if with_lm { 3 } else { 1 };
                kernels.push(Incoming {
                    source: Component::Limit,
                    alpha: p[offset],
                    beta: p[offset + 1],
                });
            }
            -component_log_likelihood(stream, Component::Limit, p[0], &kernels)
        };
        let search = simplex_search(objective, &x0);
        let lm = if with_lm {
            Some(ExponentialKernel::new(search.x[1], search.x[2])?)
        } else {
            None
        };
        let ll = if structure.limit_on_limit {
            let offset = if with_lm { 3 } else { 1 };
            Some(ExponentialKernel::new(
                search.x[offset],
                search.x[offset + 1],
            )?)
        } else {
            None
        };
        (search.x[0], lm, ll, Some(search))
    } else {
        let raw = F::from_usize(n_limit).unwrap() / horizon;
        (raw, None, None, None)
    };

    let model = HawkesModel::new(market_base, limit_base, market_kernel, lm_kernel, ll_kernel)?;
    let log_likelihood = model.log_likelihood(stream);
    let mut converged = true;
    let mut iterations = 0;
    for search in [&market_search, &limit_search].into_iter().flatten() {
        converged &= search.converged;
        iterations += search.evaluations;
    }
    Ok(FitResult {
        model,
        log_likelihood,
        converged,
        iterations,
    })
}

#[derive(Clone, Copy)]
enum Kind {
    Base,
    Alpha,
    Beta,
}

fn bounds_for<F: Scalar>(kind: Kind, bounds: &ParamBounds<F>) -> (F, F) {
    match kind {
        Kind::Base => bounds.base,
        Kind::Alpha => bounds.alpha,
        Kind::Beta => bounds.beta,
    }
}

fn check_within_bounds<F: Scalar>(
    params: &[F],
    kinds: &[Kind],
    bounds: &ParamBounds<F>,
) -> Result<(), HawkesError> {
    for (value, kind) in params.iter().zip(kinds) {
        let (lo, hi) = bounds_for(*kind, bounds);
        if !(*value >= lo && *value <= hi) {
            return Err(HawkesError::InvalidModel(format!(
                "init value {value} outside bounds [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

/// Total log-scale violation of the box; zero inside it.
fn box_penalty<F: Scalar>(params: &[F], kinds: &[Kind], bounds: &ParamBounds<F>) -> F {
    let mut total = F::zero();
    for (value, kind) in params.iter().zip(kinds) {
        let (lo, hi) = bounds_for(*kind, bounds);
        if *value < lo {
            total += (lo / *value).ln();
        } else if *value > hi {
            total += (*value / hi).ln();
        }
    }
    total
}

/// Penalty pushing a self-exciting kernel back under `alpha < 0.999 beta`.
fn stability_penalty<F: Scalar>(alpha: F, beta: F) -> F {
    let cap = F::of(STABILITY_MARGIN) * beta;
    if alpha >= cap {
        (alpha / cap).ln() + F::of(1e-9)
    } else {
        F::zero()
    }
}

struct SearchResult<F> {
    x: Vec<F>,
    converged: bool,
    evaluations: usize,
}

/// Nelder-Mead over log-parameters: minimizes `objective(exp(theta))`.
///
/// Stops when every vertex is within 1e-6 of the best one in log space
/// (i.e. relative parameter step below 1e-6) or after 10,000 objective
/// evaluations, whichever comes first. One restart with a tight fresh
/// simplex around the optimum guards against premature collapse.
fn simplex_search<F: Scalar>(mut objective: impl FnMut(&[F]) -> F, x0: &[F]) -> SearchResult<F> {
    let theta0: Vec<F> = x0.iter().map(|v| v.ln()).collect();
    let mut evals = 0usize;
    let mut eval = |theta: &[F], evals: &mut usize| {
        *evals += 1;
        let params: Vec<F> = theta.iter().map(|t| t.exp()).collect();
        objective(&params)
    };

    let mut best = theta0.clone();
    let mut converged = false;
    for (round, step) in [(0, 0.5), (1, 0.05)] {
        let _ = round;
        let outcome = nelder_mead(&mut eval, &best, F::of(step), &mut evals);
        best = outcome.0;
        converged = outcome.1;
        if evals >= MAX_EVALUATIONS {
            break;
        }
    }
    SearchResult {
        x: best.iter().map(|t| t.exp()).collect(),
        converged,
        evaluations: evals,
    }
}

fn nelder_mead<F: Scalar>(
    eval: &mut impl FnMut(&[F], &mut usize) -> F,
    start: &[F],
    step: F,
    evals: &mut usize,
) -> (Vec<F>, bool) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<F>, F)> = Vec::with_capacity(dim + 1);
    let f0 = eval(start, evals);
    simplex.push((start.to_vec(), f0));
    for i in 0..dim {
        let mut vertex = start.to_vec();
        vertex[i] += step;
        let fv = eval(&vertex, evals);
        simplex.push((vertex, fv));
    }

    let tol = F::of(RELATIVE_TOL);
    loop {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[1..]
            .iter()
            .flat_map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (*a - *b).abs())
            })
            .fold(F::zero(), F::max);
        if spread < tol {
            return (simplex[0].0.clone(), true);
        }
        if *evals >= MAX_EVALUATIONS {
            return (simplex[0].0.clone(), false);
        }

        let worst = simplex[dim].clone();
        let mut centroid = vec![F::zero(); dim];
        for (vertex, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(vertex) {
                *c += *v;
            }
        }
        let inv = F::one() / F::from_usize(dim).unwrap();
        for c in centroid.iter_mut() {
            *c = *c * inv;
        }

        let point = |coef: F| -> Vec<F> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| *c + coef * (*c - *w))
                .collect()
        };

        let reflected = point(F::one());
        let f_reflected = eval(&reflected, evals);
        if f_reflected < simplex[0].1 {
            let expanded = point(F::of(2.0));
            let f_expanded = eval(&expanded, evals);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
            continue;
        }
        let (contracted, f_contracted) = if f_reflected < worst.1 {
            let outside = point(F::of(0.5));
            let f = eval(&outside, evals);
            (outside, f)
        } else {
            let inside = point(F::of(-0.5));
            let f = eval(&inside, evals);
            (inside, f)
        };
        if f_contracted < worst.1.min(f_reflected) {
            simplex[dim] = (contracted, f_contracted);
            continue;
        }
        // shrink toward the best vertex
        let best_vertex = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let shrunk: Vec<F> = entry
                .0
                .iter()
                .zip(&best_vertex)
                .map(|(v, b)| *b + F::of(0.5) * (*v - *b))
                .collect();
            let f = eval(&shrunk, evals);
            *entry = (shrunk, f);
        }
    }
}
