//! Small models for exhaustive comparisons.

use crate::enumeration::Fixture;

/// Two states, no covariates.
pub fn plain_two_state() -> Fixture {
    Fixture {
        y: vec![-0.4, 0.3, 0.9, 1.6, 1.2, 0.2, -0.1],
        covariates: vec![vec![]; 7],
        x0: vec![],
        means: vec![0.0, 1.2],
        variances: vec![0.5, 0.8],
        initial: vec![0.6, 0.4],
        transitions: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        beta: vec![vec![1.5f64.ln()], vec![2.5f64.ln()]],
    }
}

/// Two states whose duration rates move with one covariate.
pub fn covariate_two_state() -> Fixture {
    Fixture {
        y: vec![0.1, -0.3, 0.5, 2.1, 1.7, 2.4, 0.2, 0.0],
        covariates: vec![
            vec![0.3],
            vec![-1.2],
            vec![0.8],
            vec![1.5],
            vec![-0.4],
            vec![0.0],
            vec![2.0],
            vec![-0.7],
        ],
        x0: vec![0.5],
        means: vec![0.0, 2.0],
        variances: vec![0.6, 0.4],
        initial: vec![0.5, 0.5],
        transitions: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        beta: vec![vec![0.8, 0.6], vec![1.1, -0.5]],
    }
}

/// Two states with overlapping emissions and short durations, so the posterior is diffuse.
pub fn diffuse_two_state() -> Fixture {
    Fixture {
        y: vec![0.2, 0.4, -0.1, 0.6, 0.3, 0.5],
        covariates: vec![vec![-0.5, 1.0]; 6],
        x0: vec![0.1, -0.2],
        means: vec![0.1, 0.5],
        variances: vec![1.0, 1.0],
        initial: vec![0.3, 0.7],
        transitions: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        beta: vec![vec![-0.2, 0.3, 0.1], vec![0.4, -0.2, 0.2]],
    }
}

/// Three states with an asymmetric transition matrix.
pub fn three_state() -> Fixture {
    Fixture {
        y: vec![-1.1, -0.8, 0.2, 0.1, 1.3, 0.9],
        covariates: vec![vec![]; 6],
        x0: vec![],
        means: vec![-1.0, 0.0, 1.0],
        variances: vec![0.3, 0.3, 0.3],
        initial: vec![0.2, 0.3, 0.5],
        transitions: vec![
            vec![0.0, 0.7, 0.3],
            vec![0.4, 0.0, 0.6],
            vec![0.5, 0.5, 0.0],
        ],
        beta: vec![vec![0.5], vec![0.9], vec![0.2]],
    }
}
