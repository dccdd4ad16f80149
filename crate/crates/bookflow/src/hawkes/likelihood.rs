//! Log-likelihood and time-change residuals for the order flow model.
//!
//! Both walk the event stream once, carrying one decayed excitation level
//! per kernel, so evaluation is O(n) per component instead of the O(n^2)
//! pairwise sum.

use super::{Component, EventStream, HawkesModel};
use crate::Scalar;

/// Incoming kernel of a component: source mark, jump, decay.
#[derive(Clone, Copy)]
pub(super) struct Incoming<F> {
    pub source: Component,
    pub alpha: F,
    pub beta: F,
}

/// Log-likelihood of one component:
/// `sum_i ln intensity(t_i) - integral of the intensity over [0, horizon]`,
/// where `i` runs over the events of `target`.
///
/// Returns negative infinity when some target event has zero intensity
/// (possible only with a zero baseline and no prior excitation).
pub(super) fn component_log_likelihood<F: Scalar>(
    stream: &EventStream<F>,
    target: Component,
    base: F,
    kernels: &[Incoming<F>],
) -> F {
    let horizon = stream.horizon();
    let mut levels = vec![F::zero(); kernels.len()];
    let mut last_time = F::zero();
    let mut sum_ln = F::zero();
    let mut kernel_integral = F::zero();

    for event in stream.events() {
        let dt = event.time - last_time;
        for (level, k) in levels.iter_mut().zip(kernels) {
            *level = *level * (-k.beta * dt).exp();
        }
        last_time = event.time;

        if event.mark == target {
            let mut intensity = base;
            for level in &levels {
                intensity += *level;
            }
            if intensity <= F::zero() {
                return F::neg_infinity();
            }
            sum_ln += intensity.ln();
        }

        for (level, k) in levels.iter_mut().zip(kernels) {
            if k.source == event.mark {
                // this event's total future contribution to the compensator
                kernel_integral +=
                    k.alpha / k.beta * (F::one() - (-k.beta * (horizon - event.time)).exp());
                *level += k.alpha;
            }
        }
    }

    sum_ln - base * horizon - kernel_integral
}

pub(super) fn incoming_kernels<F: Scalar>(
    model: &HawkesModel<F>,
    target: Component,
) -> Vec<Incoming<F>> {
    let mut kernels = Vec::new();
    match target {
        Component::Market => {
            if let Some(k) = model.market_on_market() {
                kernels.push(Incoming {
                    source: Component::Market,
                    alpha: k.alpha(),
                    beta: k.beta(),
                });
            }
        }
        Component::Limit => {
            if let Some(k) = model.limit_on_market() {
                kernels.push(Incoming {
                    source: Component::Market,
                    alpha: k.alpha(),
                    beta: k.beta(),
                });
            }
            if let Some(k) = model.limit_on_limit() {
                kernels.push(Incoming {
                    source: Component::Limit,
                    alpha: k.alpha(),
                    beta: k.beta(),
                });
            }
        }
    }
    kernels
}

impl<F: Scalar> HawkesModel<F> {
    /// Log-likelihood of one component of the stream under this model.
    pub fn log_likelihood_component(&self, stream: &EventStream<F>, component: Component) -> F {
        let base = match component {
            Component::Market => self.market_base(),
            Component::Limit => self.limit_base(),
        };
        component_log_likelihood(stream, component, base, &incoming_kernels(self, component))
    }

    /// Joint log-likelihood of the stream: the two components share no
    /// parameters, so it is the sum of the component terms.
    ///
    /// Returns negative infinity if any event has zero intensity under the
    /// model.
    pub fn log_likelihood(&self, stream: &EventStream<F>) -> F {
        self.log_likelihood_component(stream, Component::Market)
            + self.log_likelihood_component(stream, Component::Limit)
    }

    /// Time-change residuals of one component: increments of the compensator
    /// between consecutive events of that component (the first one measured
    /// from 0).
    ///
    /// Under the true model these are i.i.d. unit-mean exponential.
    pub fn residuals(&self, stream: &EventStream<F>, component: Component) -> Vec<F> {
        let base = match component {
            Component::Market => self.market_base(),
            Component::Limit => self.limit_base(),
        };
        let kernels = incoming_kernels(self, component);
        let mut levels = vec![F::zero(); kernels.len()];
        let mut last_time = F::zero();
        let mut acc = F::zero();
        let mut out = Vec::new();

        for event in stream.events() {
            let dt = event.time - last_time;
            acc += base * dt;
            for (level, k) in levels.iter_mut().zip(&kernels) {
                let decay = (-k.beta * dt).exp();
                acc += *level * (F::one() - decay) / k.beta;
                *level = *level * decay;
            }
            last_time = event.time;

            if event.mark == component {
                out.push(acc);
                acc = F::zero();
            }
            for (level, k) in levels.iter_mut().zip(&kernels) {
                if k.source == event.mark {
                    *level += k.alpha;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Event, EventStream, ExponentialKernel, HawkesModel};
    use super::*;
    use approx::assert_relative_eq;

    fn stream(events: Vec<(f64, Component)>, horizon: f64) -> EventStream<f64> {
        EventStream::new(
            events
                .into_iter()
                .map(|(time, mark)| Event { time, mark })
                .collect(),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn poisson_single_event() {
        // one market event at t=1 over [0, 2] with unit rate: ln 1 - 2 = -2
        let model = HawkesModel::new(1.0, 0.0, None, None, None).unwrap();
        let s = stream(vec![(1.0, Component::Market)], 2.0);
        assert_relative_eq!(model.log_likelihood_component(&s, Component::Market), -2.0);
        assert_relative_eq!(model.log_likelihood(&s), -2.0);
    }

    #[test]
    fn empty_stream_is_minus_integrated_baselines() {
        let model = HawkesModel::new(0.22, 1.69, None, None, None).unwrap();
        let s = stream(vec![], 100.0);
        assert_relative_eq!(model.log_likelihood(&s), -(0.22 + 1.69) * 100.0);
    }

    #[test]
    fn zero_intensity_event_gives_neg_infinity() {
        // zero limit baseline and no excitation: a limit event is impossible
        let model = HawkesModel::new(1.0, 0.0, None, None, None).unwrap();
        let s = stream(vec![(1.0, Component::Limit)], 2.0);
        assert_eq!(
            model.log_likelihood_component(&s, Component::Limit),
            f64::NEG_INFINITY
        );
        assert_eq!(model.log_likelihood(&s), f64::NEG_INFINITY);
    }

    #[test]
    fn three_event_value_matches_hand_computation() {
        // MM model, market events at 1, 2, 3 over [0, 4]
        let model = HawkesModel::new(
            0.5,
            0.0,
            Some(ExponentialKernel::new(0.8, 2.0).unwrap()),
            None,
            None,
        )
        .unwrap();
        let s = stream(
            vec![
                (1.0, Component::Market),
                (2.0, Component::Market),
                (3.0, Component::Market),
            ],
            4.0,
        );
        let lam2 = 0.5 + 0.8 * (-2.0_f64).exp();
        let lam3 = 0.5 + 0.8 * ((-2.0_f64 * 2.0).exp() + (-2.0_f64).exp());
        let integral = 0.5 * 4.0
            + 0.8 / 2.0
                * ((1.0 - (-2.0_f64 * 3.0).exp())
                    + (1.0 - (-2.0_f64 * 2.0).exp())
                    + (1.0 - (-2.0_f64 * 1.0).exp()));
        let expected = 0.5_f64.ln() + lam2.ln() + lam3.ln() - integral;
        assert_relative_eq!(
            model.log_likelihood_component(&s, Component::Market),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn residuals_of_unit_poisson_are_gaps() {
        let model = HawkesModel::new(1.0, 0.0, None, None, None).unwrap();
        let s = stream(
            vec![
                (1.0, Component::Market),
                (2.0, Component::Market),
                (3.0, Component::Market),
            ],
            4.0,
        );
        let r = model.residuals(&s, Component::Market);
        assert_eq!(r.len(), 3);
        for value in r {
            assert_relative_eq!(value, 1.0);
        }
    }

    #[test]
    fn residuals_sum_to_compensator_at_last_event() {
        // cross-check: the residual sum telescopes to the full integral of
        // the intensity up to the last limit event
        let model = HawkesModel::new(
            0.3,
            0.2,
            Some(ExponentialKernel::new(0.5, 2.0).unwrap()),
            Some(ExponentialKernel::new(1.1, 1.5).unwrap()),
            Some(ExponentialKernel::new(0.4, 3.0).unwrap()),
        )
        .unwrap();
        let s = stream(
            vec![
                (0.4, Component::Limit),
                (0.9, Component::Market),
                (1.3, Component::Limit),
                (2.0, Component::Market),
                (3.1, Component::Limit),
            ],
            4.0,
        );
        let r = model.residuals(&s, Component::Limit);
        assert_eq!(r.len(), 3);
        let total: f64 = r.iter().sum();

        // brute-force compensator at t = 3.1 by fine quadrature
        let n = 2_000_000;
        let t_end = 3.1;
        let dt = t_end / n as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * dt;
            integral += model.intensity_at(&s, t, Component::Limit) * dt;
        }
        assert_relative_eq!(total, integral, max_relative = 1e-6);
    }
}
