//! Shared inputs for the criterion benchmarks.

use attackkf_core::filter::predict;
use attackkf_core::sim::{default_paper_scenario, simulate_measurements};
use attackkf_core::{CtScenario, GaussianBelief, ThetaParams, Vector};

pub struct Fixture {
    pub scenario: CtScenario,
    pub theta: ThetaParams,
    /// Predicted belief at the first step.
    pub prior: GaussianBelief,
    /// Attacked measurements of one 400-step run.
    pub measurements: Vec<Vector>,
}

impl Fixture {
    pub fn paper() -> Self {
        let scenario = default_paper_scenario();
        let theta = scenario.theta().expect("paper scenario is valid");
        let prior = predict(&scenario.init_estimator, &scenario.model).expect("dimensions agree");
        let measurements = simulate_measurements(&scenario, 0)
            .expect("paper scenario simulates")
            .measurements;
        Fixture {
            scenario,
            theta,
            prior,
            measurements,
        }
    }
}
