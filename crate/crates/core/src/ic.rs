//! Differentiable rank-IC objective: a logistic rank kernel applied to the
//! factor and return cross-sections, Pearson correlation of the kernelized
//! vectors, and the negative mean IC over sampled days, with analytic
//! gradients with respect to the factor values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::STD_FLOOR;
use crate::num::{mean, std_dev, Real};

/// Correlations with a kernelized side flatter than this are degenerate.
const DEGENERATE_STD: f64 = 1e-12;

/// Rank-kernel shape. The default steepness balances rank fidelity against
/// outlier compression for cross-sections of a few hundred stocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankKernelParams {
    pub steepness: f64,
}

impl Default for RankKernelParams {
    fn default() -> Self {
        RankKernelParams { steepness: 1.83 }
    }
}

impl RankKernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.steepness > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "steepness must be > 0, got {}",
                self.steepness
            )))
        }
    }
}

/// One day's factor cross-section and matching forward returns.
#[derive(Debug, Clone, PartialEq)]
pub struct IcSample<F> {
    pub factor_values: Vec<F>,
    pub factor_returns: Vec<F>,
}

/// Correlation value plus a flag for constant (rankless) inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcOutcome<F> {
    pub value: F,
    pub degenerate: bool,
}

/// Loss over a day sample, with per-day ICs for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<F> {
    pub loss: F,
    pub day_ics: Vec<F>,
    pub degenerate_days: usize,
}

fn logistic<F: Real>(t: F) -> F {
    if t >= F::zero() {
        F::one() / (F::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (F::one() + e)
    }
}

struct Kernelized<F> {
    g: Vec<F>,
    mean: F,
    std: F,
    /// Standard deviation of the raw input after flooring.
    input_std: F,
    input_mean: F,
    floored: bool,
}

fn kernelize<F: Real>(values: &[F], k: &RankKernelParams) -> Kernelized<F> {
    let mu = mean(values);
    let raw_std = std_dev(values);
    let floor = F::cast(STD_FLOOR);
    let floored = raw_std < floor;
    let s = if floored { floor } else { raw_std };
    let p = F::cast(k.steepness);
    let two = F::cast(2.0);
    let g: Vec<F> = values
        .iter()
        .map(|&x| logistic(p * (x - mu) / (two * s)))
        .collect();
    Kernelized {
        mean: mean(&g),
        std: std_dev(&g),
        g,
        input_std: s,
        input_mean: mu,
        floored,
    }
}

/// The logistic rank surrogate g: elementwise in (0, 1), strictly order
/// preserving when the input varies, all 0.5 on constant input.
pub fn rank_kernel<F: Real>(values: &[F], k: &RankKernelParams) -> Vec<F> {
    kernelize(values, k).g
}

/// Smooth IC: Pearson correlation of g(x) and g(y). Constant kernelized
/// sides yield 0 with the degenerate flag instead of an error so training
/// can ride out collapsed cross-sections.
pub fn ic<F: Real>(x: &[F], y: &[F], k: &RankKernelParams) -> Result<IcOutcome<F>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let u = kernelize(x, k);
    let v = kernelize(y, k);
    Ok(pearson_of(&u, &v))
}

fn pearson_of<F: Real>(u: &Kernelized<F>, v: &Kernelized<F>) -> IcOutcome<F> {
    let tiny = F::cast(DEGENERATE_STD);
    if u.g.len() < 2 || u.std < tiny || v.std < tiny {
        return IcOutcome {
            value: F::zero(),
            degenerate: true,
        };
    }
    let m = F::cast(u.g.len() as f64);
    let mut cov = F::zero();
    for (&a, &b) in u.g.iter().zip(&v.g) {
        cov += (a - u.mean) * (b - v.mean);
    }
    cov /= m;
    IcOutcome {
        value: cov / (u.std * v.std),
        degenerate: false,
    }
}

/// Negative mean IC over the sampled days.
pub fn loss<F: Real>(samples: &[IcSample<F>], k: &RankKernelParams) -> Result<LossReport<F>> {
    loss_and_grad(samples, k).map(|(report, _)| report)
}

/// Per-day gradients ∂loss/∂x, zero on degenerate days.
pub fn loss_grad<F: Real>(
    samples: &[IcSample<F>],
    k: &RankKernelParams,
) -> Result<Vec<Vec<F>>> {
    loss_and_grad(samples, k).map(|(_, grads)| grads)
}

/// Loss and gradients in one pass; the mean and std inside the kernel are
/// differentiated as functions of x, so these are exact gradients of the
/// objective, not a stop-gradient approximation.
pub fn loss_and_grad<F: Real>(
    samples: &[IcSample<F>],
    k: &RankKernelParams,
) -> Result<(LossReport<F>, Vec<Vec<F>>)> {
    k.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidConfig(
            "ic loss needs at least one sampled day".into(),
        ));
    }
    let q = F::cast(samples.len() as f64);
    let p = F::cast(k.steepness);
    let half = F::cast(0.5);
    let mut day_ics = Vec::with_capacity(samples.len());
    let mut grads = Vec::with_capacity(samples.len());
    let mut degenerate = 0usize;
    let mut total = F::zero();
    for sample in samples {
        let x = &sample.factor_values;
        let y = &sample.factor_returns;
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let u = kernelize(x, k);
        let v = kernelize(y, k);
        let outcome = pearson_of(&u, &v);
        day_ics.push(outcome.value);
        total += outcome.value;
        if outcome.degenerate {
            degenerate += 1;
            grads.push(vec![F::zero(); x.len()]);
            continue;
        }
        let m = F::cast(x.len() as f64);
        let cov = outcome.value * u.std * v.std;
        // ∂IC/∂u_j, then through the logistic to ∂IC/∂t_j
        let mut d_t = Vec::with_capacity(x.len());
        let scale = F::one() / (m * u.std * v.std);
        let ratio = cov / (u.std * u.std);
        for j in 0..x.len() {
            let d_u = scale * ((v.g[j] - v.mean) - ratio * (u.g[j] - u.mean));
            d_t.push(d_u * u.g[j] * (F::one() - u.g[j]));
        }
        let mean_dt = mean(&d_t);
        // ∂IC/∂x through t = p·(x − mean)/(2·std); the std term drops when
        // the floor clamped it (constant input derivative is zero)
        let mut a = F::zero();
        if !u.floored {
            for (dt, &xv) in d_t.iter().zip(x) {
                a += *dt * (xv - u.input_mean);
            }
        }
        let s = u.input_std;
        let neg_inv_q = -F::one() / q;
        let grad: Vec<F> = x
            .iter()
            .zip(&d_t)
            .map(|(&xv, &dt)| {
                let term1 = (dt - mean_dt) / s;
                let term2 = if u.floored {
                    F::zero()
                } else {
                    a * (xv - u.input_mean) / (m * s * s * s)
                };
                neg_inv_q * p * half * (term1 - term2)
            })
            .collect();
        grads.push(grad);
    }
    Ok((
        LossReport {
            loss: -total / q,
            day_ics,
            degenerate_days: degenerate,
        },
        grads,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn params() -> RankKernelParams {
        RankKernelParams::default()
    }

    #[test]
    fn kernel_hand_values() {
        // mean 0, population std exactly 1; element 2 sits at mean + 2·std
        let x: Vec<f64> = vec![1.0, -1.0, 2.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let g = rank_kernel(&x, &params());
        let expect = 1.0 / (1.0 + (-1.83f64).exp());
        assert!((g[2] - expect).abs() < 1e-15);
        // elements at the mean map to exactly 0.5
        for i in 4..10 {
            assert!((g[i] - 0.5).abs() < 1e-15);
        }
        assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn kernel_constant_input_is_half() {
        let g = rank_kernel(&[3.0f64; 8], &params());
        assert!(g.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn kernel_negation_symmetry() {
        let x: Vec<f64> = vec![0.3, -1.2, 4.5, 2.2, -0.7, 1.1];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let g = rank_kernel(&x, &params());
        let gn = rank_kernel(&neg, &params());
        for (a, b) in g.iter().zip(&gn) {
            assert!((a + b - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ic_self_and_anti() {
        let x: Vec<f64> = vec![0.4, -1.0, 2.5, 0.1, -0.3, 1.9];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let same = ic(&x, &x, &params()).unwrap();
        assert!(!same.degenerate);
        assert!((same.value - 1.0).abs() < 1e-12);
        let anti = ic(&x, &neg, &params()).unwrap();
        assert!((anti.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ic_affine_invariance_and_symmetry() {
        let x: Vec<f64> = vec![0.4, -1.0, 2.5, 0.1, -0.3, 1.9];
        let y: Vec<f64> = vec![1.0, 0.2, 0.9, -0.4, 0.5, 2.0];
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        let base = ic(&x, &y, &params()).unwrap().value;
        let affine = ic(&scaled, &y, &params()).unwrap().value;
        assert!((base - affine).abs() < 1e-12);
        let swapped = ic(&y, &x, &params()).unwrap().value;
        assert!((base - swapped).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sides_flagged() {
        let x: Vec<f64> = vec![1.0; 5];
        let y: Vec<f64> = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let out = ic(&x, &y, &params()).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.value, 0.0);
        assert!(matches!(
            ic(&x, &y[..3], &params()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        let x: Vec<f64> = vec![0.4, -1.0, 2.5, 0.1];
        let perfect = IcSample {
            factor_values: x.clone(),
            factor_returns: x.clone(),
        };
        let report = loss(&[perfect.clone()], &params()).unwrap();
        assert!((report.loss + 1.0).abs() < 1e-12);

        let inverted = IcSample {
            factor_values: x.clone(),
            factor_returns: x.iter().map(|v| -v).collect(),
        };
        let report = loss(&[perfect, inverted], &params()).unwrap();
        assert!(report.loss.abs() < 1e-12);
        assert_eq!(report.degenerate_days, 0);

        let flat = IcSample {
            factor_values: vec![1.0; 4],
            factor_returns: x,
        };
        let report = loss(&[flat.clone(), flat], &params()).unwrap();
        assert_eq!(report.loss, 0.0);
        assert_eq!(report.degenerate_days, 2);

        assert!(loss::<f64>(&[], &params()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::rng::rng_for(13, 0);
        for m in [5usize, 20] {
            let sample = IcSample::<f64> {
                factor_values: (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                factor_returns: (0..m).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            };
            let samples = vec![sample];
            let grads = loss_grad(&samples, &params()).unwrap();
            let h = 1e-6;
            for i in 0..m {
                let mut up = samples.clone();
                up[0].factor_values[i] += h;
                let mut down = samples.clone();
                down[0].factor_values[i] -= h;
                let fd = (loss(&up, &params()).unwrap().loss
                    - loss(&down, &params()).unwrap().loss)
                    / (2.0 * h);
                let an = grads[0][i];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    ((fd - an) / denom).abs() <= 1e-5,
                    "m={m} i={i}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_perfect_correlation() {
        let x: Vec<f64> = vec![0.4, -1.0, 2.5, 0.1, -0.3, 1.9];
        let sample = IcSample {
            factor_values: x.clone(),
            factor_returns: x,
        };
        let grads = loss_grad(&[sample], &params()).unwrap();
        for g in &grads[0] {
            assert!(g.abs() <= 1e-6);
        }
    }

    #[test]
    fn descent_reduces_loss() {
        let mut rng = crate::rng::rng_for(29, 0);
        let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let mut x: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut improvements = 0;
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let sample = IcSample {
                factor_values: x.clone(),
                factor_returns: y.clone(),
            };
            let (report, grads) = loss_and_grad(&[sample], &params()).unwrap();
            if report.loss < prev {
                improvements += 1;
            }
            prev = report.loss;
            for (xi, g) in x.iter_mut().zip(&grads[0]) {
                *xi -= 1e-2 * g;
            }
        }
        assert!(improvements >= 45, "only {improvements} improving steps");
    }

    #[test]
    fn permutation_leaves_loss_unchanged() {
        let x: Vec<f64> = vec![0.4, -1.0, 2.5, 0.1, -0.3, 1.9];
        let y: Vec<f64> = vec![1.0, 0.2, 0.9, -0.4, 0.5, 2.0];
        let perm = [3usize, 0, 5, 1, 4, 2];
        let a = loss(
            &[IcSample {
                factor_values: x.clone(),
                factor_returns: y.clone(),
            }],
            &params(),
        )
        .unwrap()
        .loss;
        let b = loss(
            &[IcSample {
                factor_values: perm.iter().map(|&i| x[i]).collect(),
                factor_returns: perm.iter().map(|&i| y[i]).collect(),
            }],
            &params(),
        )
        .unwrap()
        .loss;
        assert!((a - b).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn kernel_is_monotone(values in prop::collection::vec(-100.0f64..100.0, 2..40)) {
            let g = rank_kernel(&values, &params());
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] < values[j] {
                        prop_assert!(g[i] < g[j]);
                    }
                }
            }
        }

        #[test]
        fn ic_is_bounded(
            x in prop::collection::vec(-50.0f64..50.0, 2..30),
            scale in 0.01f64..10.0,
        ) {
            let y: Vec<f64> = x.iter().rev().map(|v| v * scale).collect();
            let out = ic(&x, &y, &params()).unwrap();
            prop_assert!(out.value.abs() <= 1.0 + 1e-12);
        }
    }
}
