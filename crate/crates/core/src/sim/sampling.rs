//! Latent event-time and accrual generators.

use rand::Rng;

use crate::dose_model::DoseLevel;
use crate::error::{Error, Result};
use crate::sim::Scenario;

/// Copula parameters below this are treated as independence.
const INDEPENDENCE_THETA: f64 = 1e-9;

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Weibull scale giving `P(T <= window) = prob_by_window`.
///
/// A zero probability yields an infinite scale: the event never happens.
pub fn weibull_scale(prob_by_window: f64, window: f64, shape: f64) -> Result<f64> {
    if !(window > 0.0) || !(shape > 0.0) {
        return Err(Error::invalid(format!(
            "window ({window}) and shape ({shape}) must be positive"
        )));
    }
    if !(0.0..1.0).contains(&prob_by_window) {
        return Err(Error::invalid(format!(
            "toxicity probability {prob_by_window} must lie in [0, 1)"
        )));
    }
    if prob_by_window == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(window / (-(-prob_by_window).ln_1p()).powf(1.0 / shape))
}

/// Inverse survival transform: the time at which `S(t) = survival`.
pub fn weibull_time(scale: f64, shape: f64, survival: f64) -> Option<f64> {
    if scale.is_infinite() {
        return None;
    }
    Some(scale * (-survival.ln()).powf(1.0 / shape))
}

/// Conditional inverse of the Clayton copula: given `U = s` and an independent
/// uniform `t`, returns `V` with `P(V <= v | U = s) = t`.
pub fn clayton_conditional(theta: f64, s: f64, t: f64) -> f64 {
    if theta < INDEPENDENCE_THETA {
        return t;
    }
    let a = t.powf(-theta / (1.0 + theta)) - 1.0;
    (a * s.powf(-theta) + 1.0).powf(-1.0 / theta)
}

/// One draw `(U, V)` from the Clayton copula with association `theta`.
pub fn clayton_pair<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> Result<(f64, f64)> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::invalid(format!(
            "Clayton theta must be a finite non-negative number, got {theta}"
        )));
    }
    let s = open_unit(rng);
    let t = open_unit(rng);
    Ok((s, clayton_conditional(theta, s, t)))
}

/// Latent (clinician, patient) event times, in weeks from entry, for one patient.
///
/// Times beyond the window are kept; they simply never count as toxicities.
pub fn draw_event_times<R: Rng + ?Sized>(
    dose: DoseLevel,
    scenario: &Scenario,
    window: f64,
    rng: &mut R,
) -> Result<(Option<f64>, Option<f64>)> {
    let i = dose.index();
    let (Some(&pc), Some(&pp)) = (scenario.clin_probs.get(i), scenario.pat_probs.get(i)) else {
        return Err(Error::invalid(format!(
            "dose {dose} outside the scenario's {} levels",
            scenario.clin_probs.len()
        )));
    };
    let (u, v) = clayton_pair(scenario.copula_theta, rng)?;
    let shape = scenario.hazard_shape;
    let clin = weibull_time(weibull_scale(pc, window, shape)?, shape, u);
    let pat = weibull_time(weibull_scale(pp, window, shape)?, shape, v);
    Ok((clin, pat))
}

/// Next arrival of a Poisson process with `accrual_per_window` expected
/// arrivals per window.
pub fn next_arrival<R: Rng + ?Sized>(
    previous: f64,
    accrual_per_window: f64,
    window: f64,
    rng: &mut R,
) -> f64 {
    let mean_gap = window / accrual_per_window;
    previous - mean_gap * open_unit(rng).ln()
}
