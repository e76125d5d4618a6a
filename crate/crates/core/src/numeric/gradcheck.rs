use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::param::ParamSet;
use crate::numeric::tensor::Scalar;

pub const DEFAULT_STEP: f64 = 1e-3;

/// Which parameter components a finite-difference check perturbs.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    All,
    /// At most `per_tensor` components of each parameter, drawn without
    /// replacement from a seeded generator.
    Sample { per_tensor: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstComponent {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Over components whose perturbation stays inside one linear piece of
    /// every ReLU (all of them for [`finite_difference_check`]).
    pub max_relative_error: f64,
    pub checked: usize,
    pub worst: Option<WorstComponent>,
    /// Components whose `θ ± step` straddles a ReLU kink. The central
    /// difference there does not estimate the derivative, so they are
    /// excluded from `max_relative_error`.
    pub kink_crossings: usize,
    /// Maximum over every checked component, kink crossings included.
    pub max_relative_error_including_kinks: f64,
}

pub fn relative_error(analytic: f64, estimate: f64) -> f64 {
    (analytic - estimate).abs() / (analytic.abs() + estimate.abs()).max(1e-8)
}

/// Compares the gradients already stored in `params` against central
/// finite differences of `loss_fn`.
///
/// Run in double precision; single precision cannot resolve differences at
/// the default step.
pub fn finite_difference_check<T, F>(
    params: &mut ParamSet<T>,
    step: f64,
    selection: &Selection,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<f64>,
{
    finite_difference_check_piecewise(params, step, selection, |p| Ok((loss_fn(p)?, Vec::new())))
}

/// Like [`finite_difference_check`] for piecewise-smooth losses:
/// `loss_fn` also returns the regime it evaluated in (for example
/// [`Graph::relu_pattern`](crate::numeric::Graph::relu_pattern)).
/// Components whose perturbed regimes differ from the unperturbed one are
/// counted as kink crossings instead of scored.
pub fn finite_difference_check_piecewise<T, F>(
    params: &mut ParamSet<T>,
    step: f64,
    selection: &Selection,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<(f64, Vec<bool>)>,
{
    if !(step > 0.0) {
        return Err(Error::contract("finite_difference_check", format!("step must be positive, got {step}")));
    }
    let (first, regime) = loss_fn(params)?;
    let (second, regime_again) = loss_fn(params)?;
    if first.to_bits() != second.to_bits() || regime != regime_again {
        return Err(Error::Numeric(format!(
            "loss function is not deterministic: two identical evaluations gave {first:e} and {second:e}"
        )));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
        kink_crossings: 0,
        max_relative_error_including_kinks: 0.0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let len = params.get(id).value.len();
        let components: Vec<usize> = match *selection {
            Selection::All => (0..len).collect(),
            Selection::Sample { per_tensor, seed } if per_tensor < len => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (id.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut picked = index::sample(&mut rng, len, per_tensor).into_vec();
                picked.sort_unstable();
                picked
            }
            Selection::Sample { .. } => (0..len).collect(),
        };
        for i in components {
            let original = params.get(id).value.data()[i];
            let analytic = params.get(id).gradient.data()[i].as_f64();

            params.get_mut(id).value.data_mut()[i] = T::of(original.as_f64() + step);
            let plus = loss_fn(params);
            params.get_mut(id).value.data_mut()[i] = T::of(original.as_f64() - step);
            let minus = loss_fn(params);
            params.get_mut(id).value.data_mut()[i] = original;
            let ((plus, regime_plus), (minus, regime_minus)) = (plus?, minus?);

            let estimate = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic, estimate);
            report.checked += 1;
            report.max_relative_error_including_kinks = report.max_relative_error_including_kinks.max(err);
            if regime_plus != regime || regime_minus != regime {
                report.kink_crossings += 1;
                continue;
            }
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some(WorstComponent {
                    param: params.get(id).name.clone(),
                    index: i,
                    analytic,
                    estimate,
                });
            }
        }
    }
    Ok(report)
}
