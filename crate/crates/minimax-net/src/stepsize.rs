//! Stepsize and batch planning.
//!
//! The planners turn certified problem constants and the mixing matrix's
//! `lambda` into stepsizes that provably satisfy the convergence analysis'
//! constraint set:
//!
//! ```text
//!     eta_y <= sqrt(1 - lambda^2) / (9 (L + mu))
//!     eta_x <= min{ (1-lambda^2)^2 / (120 sqrt(3) kappa L),
//!                   eta_y / (8 sqrt(6) kappa^2),
//!                   (eta_y mu)^(1/4) (1-lambda^2) / (50 kappa L) }
//! ```
//!
//! Three regimes are provided: the deterministic schedule (`corollary1`), the
//! horizon-dependent unit-batch schedule (`corollary2_b1`), and the
//! accuracy-dependent large-batch schedule (`corollary3`). Every planner
//! returns the slack of each constraint so the harness can print it, and
//! refuses to hand out a plan whose constraints do not hold. Manual plans are
//! never checked at construction; they carry their slack report for callers
//! to inspect.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::one_minus_lambda_sq;
use crate::problems::ProblemConstants;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("corollary2_b1 needs sigma > 0 (use corollary1 for deterministic runs)")]
    ZeroNoise,
    #[error("corollary3 needs epsilon > 0")]
    BadEpsilon,
    #[error("invalid rate constants: {0}")]
    BadConstants(String),
    #[error("planned stepsizes violate '{constraint}' (margin {margin:.3e}); enlarge D or reduce T/kappa")]
    Infeasible { constraint: &'static str, margin: f64 },
}

/// Everything the planners need to evaluate the published schedules.
#[derive(Debug, Clone, Copy)]
pub struct RateConstants {
    pub smoothness: f64,
    pub strong_concavity: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub diameter: f64,
    /// `Phi(x_bar^0) - Phi^*`, or a configured upper bound for it.
    pub initial_gap: f64,
    pub agents: usize,
    pub horizon: usize,
}

impl RateConstants {
    pub fn new(
        constants: ProblemConstants,
        lambda: f64,
        sigma: f64,
        initial_gap: f64,
        agents: usize,
        horizon: usize,
    ) -> Result<Self, PlanError> {
        let rc = Self {
            smoothness: constants.smoothness,
            strong_concavity: constants.strong_concavity,
            lambda,
            sigma,
            diameter: constants.diameter,
            initial_gap,
            agents,
            horizon,
        };
        rc.validate()?;
        Ok(rc)
    }

    fn validate(&self) -> Result<(), PlanError> {
        if !(self.strong_concavity > 0.0) || self.smoothness < self.strong_concavity {
            return Err(PlanError::BadConstants(format!(
                "need L >= mu > 0, got L = {}, mu = {}",
                self.smoothness, self.strong_concavity
            )));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(PlanError::BadConstants(format!("lambda = {} not in [0, 1)", self.lambda)));
        }
        if self.initial_gap < 0.0 {
            return Err(PlanError::BadConstants("initial gap must be nonnegative".into()));
        }
        if self.agents == 0 {
            return Err(PlanError::BadConstants("agent count must be positive".into()));
        }
        Ok(())
    }

    pub fn condition_number(&self) -> f64 {
        self.smoothness / self.strong_concavity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Corollary1,
    Corollary2B1,
    Corollary3,
    Manual,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintSlack {
    pub name: &'static str,
    pub satisfied: bool,
    /// `cap - value`; nonnegative when satisfied.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepsizePlan {
    pub eta_x: f64,
    pub eta_y: f64,
    pub batch: usize,
    pub regime: Regime,
    pub slack: Vec<ConstraintSlack>,
}

impl StepsizePlan {
    /// Deterministic schedule: `eta_y` at its cap and `eta_x = 1/gamma` with
    /// the aggregated curvature/topology coefficient `gamma`.
    pub fn corollary1(c: &RateConstants) -> Result<Self, PlanError> {
        c.validate()?;
        let eta_y = eta_y_cap(c);
        let eta_x = 1.0 / gamma_coefficient(c);
        Self::assemble(eta_x, eta_y, 1, Regime::Corollary1, c)
    }

    /// Unit-batch stochastic schedule with horizon-dependent stepsizes.
    ///
    /// The published schedule is used verbatim. Note that for small
    /// constraint diameters it can violate the `eta_x <= eta_y / (8 sqrt(6)
    /// kappa^2)` cap (the horizon term drags `eta_y` down faster than
    /// `eta_x`), so unlike the other regimes the plan is returned with its
    /// slack flags rather than rejected; callers that need the full
    /// constraint set inspect `slack`.
    pub fn corollary2_b1(c: &RateConstants) -> Result<Self, PlanError> {
        c.validate()?;
        if c.sigma <= 0.0 {
            return Err(PlanError::ZeroNoise);
        }
        if c.horizon < 1 {
            return Err(PlanError::BadConstants("horizon must be >= 1".into()));
        }
        if c.diameter <= 0.0 || c.initial_gap <= 0.0 {
            return Err(PlanError::BadConstants(
                "corollary2_b1 needs positive diameter and initial gap".into(),
            ));
        }
        let l = c.smoothness;
        let mu = c.strong_concavity;
        let kappa = c.condition_number();
        let gap_sq = one_minus_lambda_sq(c.lambda);
        let t = c.horizon as f64;
        let sigma_sq = c.sigma * c.sigma;
        let eta_y = 1.0
            / (9.0 * (l + mu) / gap_sq.sqrt() + (3.0 * t * sigma_sq / (c.diameter * c.diameter)).sqrt());
        let eta_x = 1.0
            / ((l * kappa * sigma_sq * t / (c.agents as f64 * c.initial_gap)).sqrt()
                + gamma_coefficient(c));
        let mut plan = Self { eta_x, eta_y, batch: 1, regime: Regime::Corollary2B1, slack: Vec::new() };
        plan.slack = check_constraints(&plan, c);
        Ok(plan)
    }

    /// Large-batch schedule: stepsizes as in the deterministic regime with
    /// `b = ceil(kappa sigma^2 / epsilon^2)`.
    pub fn corollary3(c: &RateConstants, epsilon: f64) -> Result<Self, PlanError> {
        c.validate()?;
        if epsilon <= 0.0 {
            return Err(PlanError::BadEpsilon);
        }
        let eta_y = eta_y_cap(c);
        let eta_x = 1.0 / gamma_coefficient(c);
        let batch = if c.sigma == 0.0 {
            1
        } else {
            let raw = c.condition_number() * c.sigma * c.sigma / (epsilon * epsilon);
            raw.ceil().max(1.0) as usize
        };
        Self::assemble(eta_x, eta_y, batch, Regime::Corollary3, c)
    }

    /// Uncurated stepsizes; the slack report is attached but not enforced.
    pub fn manual(eta_x: f64, eta_y: f64, batch: usize, c: &RateConstants) -> Self {
        let mut plan =
            Self { eta_x, eta_y, batch, regime: Regime::Manual, slack: Vec::new() };
        plan.slack = check_constraints(&plan, c);
        plan
    }

    fn assemble(
        eta_x: f64,
        eta_y: f64,
        batch: usize,
        regime: Regime,
        c: &RateConstants,
    ) -> Result<Self, PlanError> {
        let mut plan = Self { eta_x, eta_y, batch, regime, slack: Vec::new() };
        plan.slack = check_constraints(&plan, c);
        if let Some(bad) = plan.slack.iter().find(|s| !s.satisfied) {
            return Err(PlanError::Infeasible { constraint: bad.name, margin: bad.margin });
        }
        Ok(plan)
    }
}

fn eta_y_cap(c: &RateConstants) -> f64 {
    one_minus_lambda_sq(c.lambda).sqrt() / (9.0 * (c.smoothness + c.strong_concavity))
}

/// `gamma = 120 sqrt(3) kappa L / (1-lambda^2)^2
///        + 72 sqrt(6) kappa^2 (L+mu) / sqrt(1-lambda^2)
///        + 110 kappa^(5/4) L / (1-lambda^2)^(9/8)`.
fn gamma_coefficient(c: &RateConstants) -> f64 {
    let l = c.smoothness;
    let mu = c.strong_concavity;
    let kappa = c.condition_number();
    let gap_sq = one_minus_lambda_sq(c.lambda);
    120.0 * 3.0_f64.sqrt() * kappa * l / (gap_sq * gap_sq)
        + 72.0 * 6.0_f64.sqrt() * kappa * kappa * (l + mu) / gap_sq.sqrt()
        + 110.0 * kappa.powf(1.25) * l / gap_sq.powf(9.0 / 8.0)
}

/// Evaluates the analysis' stepsize constraints and reports the margins.
pub fn check_constraints(plan: &StepsizePlan, c: &RateConstants) -> Vec<ConstraintSlack> {
    let l = c.smoothness;
    let mu = c.strong_concavity;
    let kappa = c.condition_number();
    let gap_sq = one_minus_lambda_sq(c.lambda);

    let caps = [
        ("eta_y <= sqrt(1-lambda^2)/(9(L+mu))", eta_y_cap(c), plan.eta_y),
        (
            "eta_x <= (1-lambda^2)^2/(120 sqrt(3) kappa L)",
            gap_sq * gap_sq / (120.0 * 3.0_f64.sqrt() * kappa * l),
            plan.eta_x,
        ),
        (
            "eta_x <= eta_y/(8 sqrt(6) kappa^2)",
            plan.eta_y / (8.0 * 6.0_f64.sqrt() * kappa * kappa),
            plan.eta_x,
        ),
        (
            "eta_x <= (eta_y mu)^(1/4)(1-lambda^2)/(50 kappa L)",
            (plan.eta_y * mu).powf(0.25) * gap_sq / (50.0 * kappa * l),
            plan.eta_x,
        ),
    ];
    caps.into_iter()
        .map(|(name, cap, value)| ConstraintSlack {
            name,
            satisfied: value <= cap,
            margin: cap - value,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_constants(lambda: f64) -> RateConstants {
        RateConstants {
            smoothness: 1.0,
            strong_concavity: 1.0,
            lambda,
            sigma: 0.0,
            diameter: 1.0,
            initial_gap: 1.0,
            agents: 1,
            horizon: 1,
        }
    }

    #[test]
    fn corollary1_matches_direct_evaluation_at_unit_constants() {
        let plan = StepsizePlan::corollary1(&unit_constants(0.0)).unwrap();
        assert!((plan.eta_y - 1.0 / 18.0).abs() < 1e-15);
        // gamma = 120 sqrt(3) + 144 sqrt(6) + 110
        let gamma = 120.0 * 3.0_f64.sqrt() + 144.0 * 6.0_f64.sqrt() + 110.0;
        assert!((gamma - 670.5733942331) < 1e-6);
        let expected = 1.0 / gamma;
        assert!(
            (plan.eta_x - expected).abs() <= 1e-15,
            "eta_x {} vs {expected}",
            plan.eta_x
        );
        assert!((plan.eta_x - 1.4913e-3).abs() < 1e-6);
    }

    #[test]
    fn corollary1_satisfies_all_constraints_by_construction() {
        for lambda in [0.0, 0.3, 0.9, 0.99] {
            for (l, mu) in [(1.0, 1.0), (5.0, 0.5), (20.0, 0.1)] {
                let c = RateConstants { smoothness: l, strong_concavity: mu, ..unit_constants(lambda) };
                let plan = StepsizePlan::corollary1(&c).unwrap();
                assert!(plan.slack.iter().all(|s| s.satisfied), "{lambda} {l} {mu}: {:?}", plan.slack);
            }
        }
    }

    #[test]
    fn corollary1_eta_x_shrinks_with_connectivity_loss() {
        let at = |lambda: f64| StepsizePlan::corollary1(&unit_constants(lambda)).unwrap().eta_x;
        let (e0, e9, e99) = (at(0.0), at(0.9), at(0.99));
        assert!(e0 > e9 && e9 > e99);
        // the dominant coefficient scales the cap by (1 - lambda^2)^2
        for lambda in [0.0, 0.9, 0.99] {
            let gap_sq = one_minus_lambda_sq(lambda);
            assert!(at(lambda) <= gap_sq * gap_sq / (120.0 * 3.0_f64.sqrt()));
        }
    }

    #[test]
    fn corollary1_eta_x_monotone_in_condition_number() {
        let at = |l: f64| {
            let c = RateConstants { smoothness: l, ..unit_constants(0.3) };
            StepsizePlan::corollary1(&c).unwrap().eta_x
        };
        let mut last = f64::INFINITY;
        for l in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let eta = at(l);
            assert!(eta < last);
            last = eta;
        }
    }

    #[test]
    fn corollary2_matches_direct_evaluation() {
        let c = RateConstants {
            sigma: 1.0,
            horizon: 10_000,
            ..unit_constants(0.0)
        };
        let plan = StepsizePlan::corollary2_b1(&c).unwrap();
        // eta_y = 1 / (18 + sqrt(3e4))
        let expected_eta_y = 1.0 / (18.0 + 30_000.0_f64.sqrt());
        assert!((plan.eta_y - expected_eta_y).abs() < 1e-18);
        assert!((plan.eta_y - 5.2300e-3).abs() < 1e-6, "eta_y = {}", plan.eta_y);
        assert_eq!(plan.batch, 1);
    }

    #[test]
    fn corollary2_satisfies_the_full_constraint_set_given_enough_diameter() {
        // at unit diameter the horizon term drags eta_y below the eta_x cap
        let tight = RateConstants { sigma: 1.0, horizon: 10_000, ..unit_constants(0.0) };
        let plan = StepsizePlan::corollary2_b1(&tight).unwrap();
        assert!(plan.slack.iter().any(|s| !s.satisfied));

        // a wide enough diameter restores every cap, for any horizon
        for horizon in [1_000usize, 100_000] {
            let wide = RateConstants { diameter: 80.0, horizon, ..tight };
            let plan = StepsizePlan::corollary2_b1(&wide).unwrap();
            assert!(
                plan.slack.iter().all(|s| s.satisfied),
                "T={horizon}: {:?}",
                plan.slack
            );
        }
    }

    #[test]
    fn corollary2_stepsizes_decay_like_inverse_sqrt_horizon() {
        let at = |t: usize| {
            let c = RateConstants { sigma: 1.0, horizon: t, ..unit_constants(0.0) };
            let p = StepsizePlan::corollary2_b1(&c).unwrap();
            (p.eta_x, p.eta_y)
        };
        let (x3, y3) = at(1_000);
        let (x8, y8) = at(100_000_000);
        let (x10, y10) = at(10_000_000_000);
        assert!(x8 < x3 && x10 < x8 && y8 < y3 && y10 < y8);
        // times 100 in T shrinks both by roughly 10 once sqrt(T) dominates
        assert!(x8 / x10 > 8.0 && x8 / x10 < 12.0, "ratio {}", x8 / x10);
        assert!(y8 / y10 > 8.0 && y8 / y10 < 12.0, "ratio {}", y8 / y10);
    }

    #[test]
    fn corollary2_rejects_zero_noise() {
        let c = unit_constants(0.0);
        assert!(matches!(StepsizePlan::corollary2_b1(&c), Err(PlanError::ZeroNoise)));
    }

    #[test]
    fn corollary3_batch_sizes() {
        let c = RateConstants {
            smoothness: 2.0,
            strong_concavity: 1.0,
            sigma: 1.0,
            ..unit_constants(0.0)
        };
        assert_eq!(StepsizePlan::corollary3(&c, 0.1).unwrap().batch, 200);
        assert_eq!(StepsizePlan::corollary3(&c, 1e9).unwrap().batch, 1);
        let det = RateConstants { sigma: 0.0, ..c };
        assert_eq!(StepsizePlan::corollary3(&det, 0.1).unwrap().batch, 1);
    }

    #[test]
    fn manual_plans_report_violations_without_failing() {
        let c = RateConstants {
            smoothness: 1.0,
            strong_concavity: 0.1,
            ..unit_constants(0.0)
        };
        // kappa = 10: cap on eta_x is (1)^2 / (120 sqrt(3) * 10) ~ 4.81e-4
        let plan = StepsizePlan::manual(1.0, 0.01, 1, &c);
        let cap = 1.0 / (120.0 * 3.0_f64.sqrt() * 10.0);
        assert!((cap - 4.811e-4).abs() < 1e-6);
        let violated: Vec<_> = plan.slack.iter().filter(|s| !s.satisfied).collect();
        assert!(violated.iter().any(|s| s.name.contains("120 sqrt(3)")));
    }

    #[test]
    fn eta_y_above_cap_is_flagged_first() {
        let c = unit_constants(0.0);
        let plan = StepsizePlan::manual(1e-6, 1.0, 1, &c);
        assert!(!plan.slack[0].satisfied);
        assert!(plan.slack[0].name.starts_with("eta_y"));
    }
}
