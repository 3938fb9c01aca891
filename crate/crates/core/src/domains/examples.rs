//! The two five- and four-state models where quasi-distance and value
//! function part ways.

use crate::error::{Error, Result};
use crate::model::{MdpModel, ModelBuilder};

/// States A..E. At A, `u1` goes to B for 3 and `u2` splits evenly between C
/// and D for 2; B, C and D step to E for 2, 2.5 and 2.5. E is the goal.
/// With `unit_cost` every positive cost becomes 1.
pub fn build_example_a(unit_cost: bool) -> Result<MdpModel> {
    let c = |g: f64| if unit_cost { 1.0 } else { g };
    ModelBuilder::new(5, 2)
        .labels(["A", "B", "C", "D", "E"])
        .action(0, 0, c(3.0), &[(1, 1.0)])
        .action(0, 1, c(2.0), &[(2, 0.5), (3, 0.5)])
        .action(1, 0, c(2.0), &[(4, 1.0)])
        .action(2, 0, c(2.5), &[(4, 1.0)])
        .action(3, 0, c(2.5), &[(4, 1.0)])
        .action(4, 0, 0.0, &[(4, 1.0)])
        .goal_stay(4, 0)
        .build()
}

/// States A..D with a prison at C. At A, `u1` goes to B for 1 and `u2`
/// goes straight to the goal D for `omega`. B's only action reaches D with
/// probability `1 - epsilon` and falls into C otherwise.
pub fn build_example_b(epsilon: f64, omega: f64, with_u2: bool) -> Result<MdpModel> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            reason: "must lie in (0, 1)",
        });
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "omega",
            value: omega,
            reason: "must be positive and finite",
        });
    }
    let mut b = ModelBuilder::new(4, 2)
        .labels(["A", "B", "C", "D"])
        .action(0, 0, 1.0, &[(1, 1.0)])
        .action(1, 0, 1.0, &[(2, epsilon), (3, 1.0 - epsilon)])
        .action(2, 0, 1.0, &[(2, 1.0)])
        .action(3, 0, 0.0, &[(3, 1.0)])
        .goal_stay(3, 0);
    if with_u2 {
        b = b.action(0, 1, omega, &[(3, 1.0)]);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn both_examples_validate() {
        assert!(validate_model(&build_example_a(false).unwrap()).is_empty());
        assert!(validate_model(&build_example_a(true).unwrap()).is_empty());
        assert!(validate_model(&build_example_b(0.1, 10.0, true).unwrap()).is_empty());
        assert!(validate_model(&build_example_b(0.1, 10.0, false).unwrap()).is_empty());
    }

    #[test]
    fn example_b_ranges() {
        assert!(build_example_b(0.0, 1.0, true).is_err());
        assert!(build_example_b(0.5, 0.0, true).is_err());
        assert!(build_example_b(1.0, 1.0, true).is_err());
    }
}
