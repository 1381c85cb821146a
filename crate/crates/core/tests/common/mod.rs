#![allow(dead_code)]

use hsmm_core::{
    CovariateSummary, Dataset, DurationModel, EmissionParams, Link, ModelParams, TransitionMatrix,
};
use hsmm_testkit::enumeration::Fixture;
pub use hsmm_testkit::fixtures::*;

pub fn to_model(f: &Fixture) -> (ModelParams, Dataset) {
    let params = ModelParams::new(
        EmissionParams::new(f.means.clone(), f.variances.clone()).unwrap(),
        TransitionMatrix::new(f.transitions.clone(), f.initial.clone()).unwrap(),
        DurationModel::new(f.beta.clone(), CovariateSummary::LastValue, Link::Exp).unwrap(),
    )
    .unwrap();
    let data = Dataset::new(f.y.clone(), f.covariates.clone(), Some(f.x0.clone())).unwrap();
    (params, data)
}
