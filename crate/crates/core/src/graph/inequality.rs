//! Discrete checks of the network Poincaré and Trudinger-Moser inequalities.
//!
//! Both are evaluated on the piecewise-linear interpolant of the nodal
//! values. Since the trapezoid rule is exact on that interpolant, a
//! mean-zero grid function is a genuine mean-zero `H¹(Γ)` function and the
//! continuous inequalities apply verbatim.

use super::{GraphError, GridFunction};

/// Relative tolerance on `|mean(f)|` for the mean-zero precondition.
pub const MEAN_TOL: f64 = 1e-10;

/// Relative slack applied to every `lhs ≤ rhs` comparison.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PoincareCheck {
    /// `sup|f|`
    pub sup: f64,
    /// `sqrt(|Γ|)·‖∂f‖₂`
    pub sup_bound: f64,
    /// `∫f²`
    pub l2_squared: f64,
    /// `|Γ|²·∫|∂f|²`
    pub l2_bound: f64,
    pub holds_pointwise: bool,
    pub holds_l2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MoserCheck {
    /// `∫e^{βf²}`
    pub integral: f64,
    /// `|Γ|·e^{β|Γ|δ}` for `β > 0`, `|Γ|` otherwise.
    pub bound: f64,
    pub holds: bool,
}

fn require_mean_zero(f: &GridFunction) -> Result<(), GraphError> {
    let mean = f.mean();
    if mean.abs() > MEAN_TOL * f.sup_norm().max(1.0) {
        return Err(GraphError::NotMeanZero(mean));
    }
    Ok(())
}

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + ROUNDING_SLACK) + f64::MIN_POSITIVE
}

pub fn check_poincare(f: &GridFunction) -> Result<PoincareCheck, GraphError> {
    require_mean_zero(f)?;
    let len = f.grid().total_length();
    let norms = f.norms();
    let energy = f.dirichlet_energy();
    let sup_bound = len.sqrt() * energy.sqrt();
    let l2_squared = norms.l2 * norms.l2;
    let l2_bound = len * len * energy;
    Ok(PoincareCheck {
        sup: norms.sup,
        sup_bound,
        l2_squared,
        l2_bound,
        holds_pointwise: le(norms.sup, sup_bound),
        holds_l2: le(l2_squared, l2_bound),
    })
}

pub fn check_moser(f: &GridFunction, beta: f64, delta: f64) -> Result<MoserCheck, GraphError> {
    if !(delta > 0.0) {
        return Err(GraphError::NonpositiveDelta(delta));
    }
    require_mean_zero(f)?;
    let energy = f.dirichlet_energy();
    if energy > delta {
        return Err(GraphError::SeminormExceedsDelta { energy, delta });
    }
    let len = f.grid().total_length();
    let integral = f.map(|v| (beta * v * v).exp()).integrate();
    let bound = len * (beta.max(0.0) * len * delta).exp();
    Ok(MoserCheck {
        integral,
        bound,
        holds: le(integral, bound),
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{Grid, Resolution};
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn poincare_cosine() {
        let g = Grid::new(unit_edge(), &Resolution::Uniform(256)).unwrap();
        let f = GridFunction::from_fn(g, |_, s| (PI * s).cos()).unwrap();
        let c = check_poincare(&f).unwrap();
        assert_abs_diff_eq!(c.l2_squared, 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(c.l2_bound, PI * PI / 2.0, epsilon = 1e-3);
        assert!(c.holds_l2 && c.holds_pointwise);
    }

    #[test]
    fn poincare_zero_and_constant() {
        let g = Grid::new(star3(), &Resolution::Uniform(4)).unwrap();
        let c = check_poincare(&GridFunction::zeros(g.clone())).unwrap();
        assert_eq!(c.l2_squared, 0.0);
        assert!(c.holds_l2 && c.holds_pointwise);
        assert!(matches!(
            check_poincare(&GridFunction::constant(g, 1.0)),
            Err(GraphError::NotMeanZero(_))
        ));
    }

    #[test]
    fn moser_examples() {
        let g = Grid::new(star3(), &Resolution::Uniform(4)).unwrap();
        let c = check_moser(&GridFunction::zeros(g), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(c.integral, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.bound, 3.0 * 3f64.exp(), epsilon = 1e-12);
        assert!(c.holds);

        let g = Grid::new(unit_edge(), &Resolution::Uniform(128)).unwrap();
        let eps = 0.3;
        let f = GridFunction::from_fn(g, |_, s| eps * (PI * s).cos()).unwrap();
        let delta = PI * PI * eps * eps / 2.0;
        let c = check_moser(&f, 2.0, delta).unwrap();
        assert!(c.holds);
        let c = check_moser(&f, -1.0, delta).unwrap();
        assert!(c.integral <= 1.0 && c.bound == 1.0 && c.holds);
    }

    #[test]
    fn moser_preconditions() {
        let g = Grid::new(unit_edge(), &Resolution::Uniform(32)).unwrap();
        let f = GridFunction::from_fn(g, |_, s| (PI * s).cos()).unwrap();
        assert!(matches!(
            check_moser(&f, 1.0, 0.1),
            Err(GraphError::SeminormExceedsDelta { .. })
        ));
        assert!(matches!(check_moser(&f, 1.0, 0.0), Err(GraphError::NonpositiveDelta(_))));
    }
}
