//! Adam optimizer over MLP parameters and finite-difference gradient
//! checkers, the verification oracle for every analytic gradient here.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mlp::{Gradients, MlpParams, PruneMask};
use crate::num::Real;
use crate::rng::rng_for;
use crate::tensor::Tensor;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Relative-error denominators are floored here so that near-zero gradient
/// pairs compare on absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// First/second moment accumulators, shapes mirroring the parameters.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Gradients<F>,
    v: Gradients<F>,
    t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &MlpParams<F>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

fn adam_update<F: Real>(p: &mut F, g: F, m: &mut F, v: &mut F, lr: F, correction: (F, F)) {
    let b1 = F::cast(BETA1);
    let b2 = F::cast(BETA2);
    *m = b1 * *m + (F::one() - b1) * g;
    *v = b2 * *v + (F::one() - b2) * g * g;
    let m_hat = *m / correction.0;
    let v_hat = *v / correction.1;
    *p = *p - lr * m_hat / (v_hat.sqrt() + F::cast(ADAM_EPS));
}

/// One Adam step in place. Rejects non-finite gradients naming the layer;
/// when a mask is given, masked weights stay exactly zero.
pub fn optimizer_step<F: Real>(
    state: &mut AdamState<F>,
    params: &mut MlpParams<F>,
    grads: &Gradients<F>,
    lr: f64,
    mask: Option<&PruneMask<F>>,
) -> Result<()> {
    for (layer, w) in grads.weights.iter().enumerate() {
        if !w.all_finite() || grads.biases[layer].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { layer });
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let correction = (
        F::cast(1.0 - BETA1.powf(t)),
        F::cast(1.0 - BETA2.powf(t)),
    );
    let lr = F::cast(lr);
    for l in 0..params.weights.len() {
        let pw = params.weights[l].data_mut();
        let gw = grads.weights[l].data();
        let mw = state.m.weights[l].data_mut();
        let vw = state.v.weights[l].data_mut();
        for i in 0..pw.len() {
            adam_update(&mut pw[i], gw[i], &mut mw[i], &mut vw[i], lr, correction);
        }
        if let Some(mask) = mask {
            let mk = mask.layers[l].data();
            for i in 0..pw.len() {
                if mk[i] == F::zero() {
                    pw[i] = F::zero();
                }
            }
        }
        let pb = &mut params.biases[l];
        let gb = &grads.biases[l];
        let mb = &mut state.m.biases[l];
        let vb = &mut state.v.biases[l];
        for i in 0..pb.len() {
            adam_update(&mut pb[i], gb[i], &mut mb[i], &mut vb[i], lr, correction);
        }
    }
    Ok(())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

fn param_coord_count<F: Real>(params: &MlpParams<F>) -> usize {
    params.weights.iter().map(Tensor::len).sum::<usize>()
        + params.biases.iter().map(Vec::len).sum::<usize>()
}

fn perturb<F: Real>(params: &MlpParams<F>, coord: usize, delta: F) -> MlpParams<F> {
    let mut out = params.clone();
    let mut idx = coord;
    for l in 0..out.weights.len() {
        let wl = out.weights[l].len();
        if idx < wl {
            out.weights[l].data_mut()[idx] += delta;
            return out;
        }
        idx -= wl;
        let bl = out.biases[l].len();
        if idx < bl {
            out.biases[l][idx] += delta;
            return out;
        }
        idx -= bl;
    }
    unreachable!("coordinate out of range");
}

fn grad_coord<F: Real>(grads: &Gradients<F>, coord: usize) -> F {
    let mut idx = coord;
    for l in 0..grads.weights.len() {
        let wl = grads.weights[l].len();
        if idx < wl {
            return grads.weights[l].data()[idx];
        }
        idx -= wl;
        let bl = grads.biases[l].len();
        if idx < bl {
            return grads.biases[l][idx];
        }
        idx -= bl;
    }
    unreachable!("coordinate out of range");
}

/// Max relative error between `analytic` and central finite differences of
/// `loss_fn` at `probes` seeded random parameter coordinates.
pub fn gradient_check<F: Real>(
    params: &MlpParams<F>,
    analytic: &Gradients<F>,
    loss_fn: impl Fn(&MlpParams<F>) -> F,
    probes: usize,
    step: f64,
    seed: u64,
) -> f64 {
    let total = param_coord_count(params);
    let mut rng = rng_for(seed, 0x67726164);
    let h = F::cast(step);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let coord = rng.gen_range(0..total);
        let up = loss_fn(&perturb(params, coord, h));
        let down = loss_fn(&perturb(params, coord, -h));
        let fd = (up - down).to_f64_lossy() / (2.0 * step);
        let an = grad_coord(analytic, coord).to_f64_lossy();
        worst = worst.max(rel_err(fd, an));
    }
    worst
}

/// Finite-difference check of an input gradient (saliency backbone): max
/// relative error at `probes` seeded random input coordinates.
pub fn input_gradient_check<F: Real>(
    input: &Tensor<F>,
    analytic: &Tensor<F>,
    loss_fn: impl Fn(&Tensor<F>) -> F,
    probes: usize,
    step: f64,
    seed: u64,
) -> f64 {
    let mut rng = rng_for(seed, 0x696e7074);
    let h = F::cast(step);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let coord = rng.gen_range(0..input.len());
        let mut up = input.clone();
        up.data_mut()[coord] += h;
        let mut down = input.clone();
        down.data_mut()[coord] -= h;
        let fd = (loss_fn(&up) - loss_fn(&down)).to_f64_lossy() / (2.0 * step);
        let an = analytic.data()[coord].to_f64_lossy();
        worst = worst.max(rel_err(fd, an));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{backward, forward, MlpConfig};

    fn scalar_params(w: f64) -> MlpParams<f64> {
        MlpParams {
            weights: vec![Tensor::from_vec(&[1, 1], vec![w]).unwrap()],
            biases: vec![vec![0.0]],
        }
    }

    #[test]
    fn adam_first_step_hand_value() {
        let mut params = scalar_params(1.0);
        let mut state = AdamState::new(&params);
        let grads = scalar_params(1.0);
        optimizer_step(&mut state, &mut params, &grads, 0.1, None).unwrap();
        // fresh-state Adam with bias correction moves by ~lr for unit grads
        assert!((params.weights[0].data()[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradients_leave_params_fixed() {
        let cfg = MlpConfig {
            layers: 2,
            width: 3,
            input_size: 2,
            ..MlpConfig::default()
        };
        let mut params = MlpParams::<f64>::init(&cfg, 1);
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let zero = params.zeros_like();
        for _ in 0..5 {
            optimizer_step(&mut state, &mut params, &zero, 0.01, None).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn masked_entries_stay_zero_under_pressure() {
        let cfg = MlpConfig {
            layers: 2,
            width: 4,
            input_size: 3,
            dropout_rate: 0.0,
            l2_coeff: 0.0,
            ..MlpConfig::default()
        };
        let mut params = MlpParams::<f64>::init(&cfg, 2);
        let mut mask = PruneMask::all_ones(&cfg);
        mask.layers[0].data_mut()[5] = 0.0;
        params.weights[0].data_mut()[5] = 0.0;
        let mut state = AdamState::new(&params);
        // gradients nonzero everywhere except where backward would zero them
        let mut grads = params.zeros_like();
        for w in grads.weights.iter_mut() {
            for x in w.data_mut() {
                *x = 0.3;
            }
        }
        grads.weights[0].data_mut()[5] = 0.0;
        for _ in 0..100 {
            optimizer_step(&mut state, &mut params, &grads, 0.05, Some(&mask)).unwrap();
        }
        assert_eq!(params.weights[0].data()[5], 0.0);
        assert!(params.weights[0].data()[0] != 0.0);
    }

    #[test]
    fn non_finite_gradients_name_the_layer() {
        let mut params = scalar_params(1.0);
        let mut state = AdamState::new(&params);
        let grads = scalar_params(f64::NAN);
        match optimizer_step(&mut state, &mut params, &grads, 0.1, None) {
            Err(Error::NonFiniteGradient { layer: 0 }) => {}
            other => panic!("expected NonFiniteGradient, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_loss_checks_to_machine_precision() {
        let cfg = MlpConfig {
            layers: 2,
            width: 5,
            input_size: 4,
            ..MlpConfig::default()
        };
        let params = MlpParams::<f64>::init(&cfg, 11);
        // loss = 0.5·Σ w² (+ biases), gradient = the parameter itself
        let loss = |p: &MlpParams<f64>| -> f64 {
            let w: f64 = p.weights.iter().map(|w| w.data().iter().map(|x| x * x).sum::<f64>()).sum();
            let b: f64 = p.biases.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>()).sum();
            0.5 * (w + b)
        };
        let analytic = params.clone();
        let err = gradient_check(&params, &analytic, loss, 100, 1e-5, 0);
        assert!(err <= 1e-8, "relative error {err}");
        assert_eq!(gradient_check(&params, &analytic, loss, 0, 1e-5, 0), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = MlpConfig {
            layers: 3,
            width: 6,
            input_size: 5,
            dropout_rate: 0.0,
            l2_coeff: 3e-3,
            ..MlpConfig::default()
        };
        let params = MlpParams::<f64>::init(&cfg, 4);
        let input = Tensor::from_vec(
            &[4, 5],
            (0..20).map(|i| ((i * 37) % 11) as f64 * 0.13 - 0.6).collect(),
        )
        .unwrap();
        // scalar loss: weighted sum of outputs plus the L2 penalty
        let coeffs = [0.7, -1.2, 0.4, 2.0];
        let loss = |p: &MlpParams<f64>| -> f64 {
            let (out, _) = forward(&cfg, p, None, &input, false, 0).unwrap();
            let data: f64 = out
                .data()
                .iter()
                .zip(coeffs.iter())
                .map(|(o, c)| o * c)
                .sum();
            data + p.l2_penalty(&cfg, None)
        };
        let (out, cache) = forward(&cfg, &params, None, &input, false, 0).unwrap();
        assert_eq!(out.shape(), &[4, 1]);
        let upstream = Tensor::from_vec(&[4, 1], coeffs.to_vec()).unwrap();
        let (analytic, dx) = backward(&cache, &upstream);
        let err = gradient_check(&params, &analytic, loss, 200, 1e-5, 1);
        assert!(err <= 1e-6, "param gradient error {err}");

        // input gradient against the same oracle
        let input_loss = |x: &Tensor<f64>| -> f64 {
            let (out, _) = forward(&cfg, &params, None, x, false, 0).unwrap();
            out.data()
                .iter()
                .zip(coeffs.iter())
                .map(|(o, c)| o * c)
                .sum()
        };
        let err = input_gradient_check(&input, &dx, input_loss, 20, 1e-5, 2);
        assert!(err <= 1e-6, "input gradient error {err}");
    }
}
