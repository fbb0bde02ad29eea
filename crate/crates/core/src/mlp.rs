//! The MLP factor extractor: explicit forward/backward passes over dense
//! layers with tanh/relu activations, inverted dropout, L2 regularization,
//! and a binary prune mask applied as a Hadamard product on the weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

/// Extractor hyperparameters. `layers` counts all dense layers including
/// the linear output, so the default 4 means three hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub l2_coeff: f64,
    pub input_size: usize,
    pub output_size: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            layers: 4,
            width: 128,
            activation: Activation::Tanh,
            dropout_rate: 0.1,
            l2_coeff: 1e-4,
            input_size: 150,
            output_size: 1,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.layers == 0 {
            return bad("mlp needs at least one layer");
        }
        if self.width == 0 || self.input_size == 0 || self.output_size == 0 {
            return bad("mlp dimensions must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.l2_coeff < 0.0 {
            return bad("l2_coeff must be >= 0");
        }
        Ok(())
    }

    /// (fan_in, fan_out) per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let fan_in = if l == 0 { self.input_size } else { self.width };
                let fan_out = if l + 1 == self.layers {
                    self.output_size
                } else {
                    self.width
                };
                (fan_in, fan_out)
            })
            .collect()
    }
}

/// Dense layer parameters; weight l has shape (fan_in, fan_out) so the
/// forward pass is `x · w + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<F> {
    pub weights: Vec<Tensor<F>>,
    pub biases: Vec<Vec<F>>,
}

/// Gradient container; shapes mirror [`MlpParams`].
pub type Gradients<F> = MlpParams<F>;

/// Per-layer binary matrices multiplied into the weights; biases are
/// never masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask<F> {
    pub layers: Vec<Tensor<F>>,
}

impl<F: Real> PruneMask<F> {
    pub fn all_ones(config: &MlpConfig) -> Self {
        PruneMask {
            layers: config
                .layer_dims()
                .iter()
                .map(|&(i, o)| Tensor::from_vec(&[i, o], vec![F::one(); i * o]).unwrap())
                .collect(),
        }
    }

    /// Fraction of zeros per layer.
    pub fn sparsity(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|m| {
                let zeros = m.data().iter().filter(|&&x| x == F::zero()).count();
                zeros as f64 / m.len() as f64
            })
            .collect()
    }
}

impl<F: Real> MlpParams<F> {
    /// Seeded uniform init scaled by 1/sqrt(fan_in); biases start at zero.
    pub fn init(config: &MlpConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(config.layers);
        let mut biases = Vec::with_capacity(config.layers);
        for (fan_in, fan_out) in config.layer_dims() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<F> = (0..fan_in * fan_out)
                .map(|_| F::cast(rng.gen_range(-bound..bound)))
                .collect();
            weights.push(Tensor::from_vec(&[fan_in, fan_out], data).unwrap());
            biases.push(vec![F::zero(); fan_out]);
        }
        MlpParams { weights, biases }
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            weights: self.weights.iter().map(|w| Tensor::zeros(w.shape())).collect(),
            biases: self.biases.iter().map(|b| vec![F::zero(); b.len()]).collect(),
        }
    }

    pub fn validate_shapes(&self, config: &MlpConfig) -> Result<()> {
        let dims = config.layer_dims();
        if self.weights.len() != dims.len() || self.biases.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers, got {} weights / {} biases",
                dims.len(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, &(i, o)) in dims.iter().enumerate() {
            if self.weights[l].shape() != [i, o] || self.biases[l].len() != o {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: expected ({i}, {o})"
                )));
            }
        }
        Ok(())
    }

    /// Weights with the mask applied.
    pub fn masked(&self, mask: Option<&PruneMask<F>>) -> Vec<Tensor<F>> {
        match mask {
            None => self.weights.clone(),
            Some(m) => self
                .weights
                .iter()
                .zip(&m.layers)
                .map(|(w, mk)| {
                    let mut w = w.clone();
                    w.zip_mut(mk, |a, b| a * b);
                    w
                })
                .collect(),
        }
    }

    /// `(l2/2)·Σ w²` over effective (masked) weights; the matching gradient
    /// term `l2·w` is added by [`backward`].
    pub fn l2_penalty(&self, config: &MlpConfig, mask: Option<&PruneMask<F>>) -> F {
        let half = F::cast(0.5);
        let l2 = F::cast(config.l2_coeff);
        self.masked(mask)
            .iter()
            .map(|w| w.data().iter().map(|&x| x * x).sum::<F>())
            .sum::<F>()
            * l2
            * half
    }
}

/// Intermediate state saved by [`forward`] for the matching [`backward`].
#[derive(Debug, Clone)]
pub struct Cache<F> {
    config: MlpConfig,
    /// Input to each layer (index 0 = network input), post-dropout.
    layer_inputs: Vec<Tensor<F>>,
    /// Activation outputs (pre-dropout) per hidden layer.
    hidden: Vec<Tensor<F>>,
    /// Inverted-dropout multipliers per hidden layer, when training.
    drops: Vec<Option<Tensor<F>>>,
    masked_weights: Vec<Tensor<F>>,
    mask_ref: Option<PruneMask<F>>,
}

/// Run the network. `train_mode` enables inverted dropout seeded by
/// `rng_seed`; evaluation is deterministic and dropout-free.
pub fn forward<F: Real>(
    config: &MlpConfig,
    params: &MlpParams<F>,
    mask: Option<&PruneMask<F>>,
    input: &Tensor<F>,
    train_mode: bool,
    rng_seed: u64,
) -> Result<(Tensor<F>, Cache<F>)> {
    params.validate_shapes(config)?;
    if input.shape().len() != 2 || input.cols() != config.input_size {
        return Err(Error::ShapeMismatch(format!(
            "input shape {:?}, expected (m, {})",
            input.shape(),
            config.input_size
        )));
    }
    let masked = params.masked(mask);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let keep = 1.0 - config.dropout_rate;
    let mut layer_inputs = vec![input.clone()];
    let mut hidden = Vec::new();
    let mut drops = Vec::new();
    let mut current = input.clone();
    for l in 0..config.layers {
        let mut z = current.matmul(&masked[l]);
        z.add_bias(&params.biases[l]);
        if l + 1 == config.layers {
            current = z;
            break;
        }
        let h = match config.activation {
            Activation::Tanh => z.map(|x| x.tanh()),
            Activation::Relu => z.map(|x| x.max(F::zero())),
        };
        let a = if train_mode && config.dropout_rate > 0.0 {
            let scale = F::cast(1.0 / keep);
            let d_data: Vec<F> = (0..h.len())
                .map(|_| {
                    if rng.gen::<f64>() < config.dropout_rate {
                        F::zero()
                    } else {
                        scale
                    }
                })
                .collect();
            let d = Tensor::from_vec(h.shape(), d_data)?;
            let mut a = h.clone();
            a.zip_mut(&d, |x, m| x * m);
            drops.push(Some(d));
            a
        } else {
            drops.push(None);
            h.clone()
        };
        hidden.push(h);
        layer_inputs.push(a.clone());
        current = a;
    }
    if !current.all_finite() {
        return Err(Error::ShapeMismatch("non-finite forward output".into()));
    }
    Ok((
        current,
        Cache {
            config: *config,
            layer_inputs,
            hidden,
            drops,
            masked_weights: masked,
            mask_ref: mask.cloned(),
        },
    ))
}

/// Reverse pass. `upstream` holds ∂loss/∂output per row; returns parameter
/// gradients (with the `l2·w` term added and masked entries forced to zero)
/// and the gradient with respect to the network input.
pub fn backward<F: Real>(cache: &Cache<F>, upstream: &Tensor<F>) -> (Gradients<F>, Tensor<F>) {
    let config = &cache.config;
    let layers = config.layers;
    let l2 = F::cast(config.l2_coeff);
    let mut d_weights = vec![Tensor::zeros(&[0]); layers];
    let mut d_biases = vec![Vec::new(); layers];
    let mut delta = upstream.clone();
    for l in (0..layers).rev() {
        let x = &cache.layer_inputs[l];
        let mut dw = x.matmul_tn(&delta);
        if config.l2_coeff > 0.0 {
            dw.zip_mut(&cache.masked_weights[l], |g, w| g + l2 * w);
        }
        if let Some(mask) = &cache.mask_ref {
            dw.zip_mut(&mask.layers[l], |g, m| g * m);
        }
        d_biases[l] = delta.col_sums();
        d_weights[l] = dw;
        delta = delta.matmul_nt(&cache.masked_weights[l]);
        if l > 0 {
            if let Some(d) = &cache.drops[l - 1] {
                delta.zip_mut(d, |g, m| g * m);
            }
            let h = &cache.hidden[l - 1];
            match config.activation {
                Activation::Tanh => delta.zip_mut(h, |g, hv| g * (F::one() - hv * hv)),
                Activation::Relu => {
                    delta.zip_mut(h, |g, hv| if hv > F::zero() { g } else { F::zero() })
                }
            }
        }
    }
    (
        MlpParams {
            weights: d_weights,
            biases: d_biases,
        },
        delta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> MlpConfig {
        MlpConfig {
            layers: 3,
            width: 7,
            input_size: 4,
            output_size: 1,
            dropout_rate: 0.0,
            l2_coeff: 0.0,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let cfg = tiny_config();
        let params = MlpParams::<f64>::init(&cfg, 1).zeros_like();
        let input = Tensor::from_vec(&[3, 4], (0..12).map(f64::from).collect()).unwrap();
        let (out, _) = forward(&cfg, &params, None, &input, false, 0).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_linear_layer_is_identity() {
        let cfg = MlpConfig {
            layers: 1,
            width: 1,
            input_size: 1,
            output_size: 1,
            dropout_rate: 0.0,
            l2_coeff: 0.0,
            ..MlpConfig::default()
        };
        let params = MlpParams {
            weights: vec![Tensor::from_vec(&[1, 1], vec![1.0]).unwrap()],
            biases: vec![vec![0.0]],
        };
        let input = Tensor::from_vec(&[4, 1], vec![-2.0, 0.5, 3.0, 7.0]).unwrap();
        let (out, _) = forward(&cfg, &params, None, &input, false, 0).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn mask_equals_literal_zeroing() {
        let cfg = tiny_config();
        let params = MlpParams::<f64>::init(&cfg, 42);
        let mut mask = PruneMask::all_ones(&cfg);
        // zero a scattering of entries in every layer
        for layer in mask.layers.iter_mut() {
            for i in (0..layer.len()).step_by(3) {
                layer.data_mut()[i] = 0.0;
            }
        }
        let mut zeroed = params.clone();
        for (w, m) in zeroed.weights.iter_mut().zip(&mask.layers) {
            w.zip_mut(m, |a, b| a * b);
        }
        let input = Tensor::from_vec(&[5, 4], (0..20).map(|i| f64::from(i) * 0.1).collect()).unwrap();
        let (masked_out, _) = forward(&cfg, &params, Some(&mask), &input, false, 0).unwrap();
        let (zeroed_out, _) = forward(&cfg, &zeroed, None, &input, false, 0).unwrap();
        assert_eq!(masked_out, zeroed_out);
    }

    #[test]
    fn eval_forward_is_deterministic_and_dropout_free() {
        let cfg = MlpConfig {
            dropout_rate: 0.4,
            ..tiny_config()
        };
        let params = MlpParams::<f64>::init(&cfg, 9);
        let input = Tensor::from_vec(&[6, 4], (0..24).map(|i| f64::from(i) * 0.05).collect()).unwrap();
        let (a, _) = forward(&cfg, &params, None, &input, false, 111).unwrap();
        let (b, _) = forward(&cfg, &params, None, &input, false, 999).unwrap();
        assert_eq!(a, b);
        // training mode with different seeds must differ (dropout active)
        let (c, _) = forward(&cfg, &params, None, &input, true, 111).unwrap();
        let (d, _) = forward(&cfg, &params, None, &input, true, 999).unwrap();
        assert_ne!(c, d);
        // same seed reproduces the same dropout pattern
        let (e, _) = forward(&cfg, &params, None, &input, true, 111).unwrap();
        assert_eq!(c, e);
    }

    #[test]
    fn zero_upstream_gives_zero_grads_without_l2() {
        let cfg = tiny_config();
        let params = MlpParams::<f64>::init(&cfg, 3);
        let input = Tensor::from_vec(&[2, 4], vec![0.1, -0.2, 0.3, 0.4, 0.5, 0.6, -0.7, 0.8]).unwrap();
        let (_, cache) = forward(&cfg, &params, None, &input, false, 0).unwrap();
        let upstream = Tensor::zeros(&[2, 1]);
        let (grads, dx) = backward(&cache, &upstream);
        for w in &grads.weights {
            assert!(w.data().iter().all(|&x| x == 0.0));
        }
        for b in &grads.biases {
            assert!(b.iter().all(|&x| x == 0.0));
        }
        assert!(dx.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn masked_gradients_are_zero() {
        let cfg = MlpConfig {
            l2_coeff: 0.01,
            ..tiny_config()
        };
        let params = MlpParams::<f64>::init(&cfg, 5);
        let mut mask = PruneMask::all_ones(&cfg);
        mask.layers[1].data_mut()[3] = 0.0;
        mask.layers[1].data_mut()[10] = 0.0;
        let input = Tensor::from_vec(&[3, 4], (0..12).map(|i| f64::from(i) * 0.2).collect()).unwrap();
        let (_, cache) = forward(&cfg, &params, Some(&mask), &input, false, 0).unwrap();
        let upstream = Tensor::from_vec(&[3, 1], vec![1.0, -2.0, 0.5]).unwrap();
        let (grads, _) = backward(&cache, &upstream);
        assert_eq!(grads.weights[1].data()[3], 0.0);
        assert_eq!(grads.weights[1].data()[10], 0.0);
        // unmasked entries carry gradient
        assert!(grads.weights[1].data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = MlpConfig::default();
        let a = MlpParams::<f64>::init(&cfg, 7);
        let b = MlpParams::<f64>::init(&cfg, 7);
        let c = MlpParams::<f64>::init(&cfg, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        // scaled by fan_in: first layer entries within 1/sqrt(150)
        let bound = 1.0 / (150f64).sqrt();
        assert!(a.weights[0].data().iter().all(|&x| x.abs() <= bound));
    }

    #[test]
    fn config_validation() {
        assert!(MlpConfig::default().validate().is_ok());
        assert!(MlpConfig {
            layers: 0,
            ..MlpConfig::default()
        }
        .validate()
        .is_err());
        assert!(MlpConfig {
            dropout_rate: 1.0,
            ..MlpConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn layer_dims_chain() {
        let cfg = MlpConfig::default();
        assert_eq!(
            cfg.layer_dims(),
            vec![(150, 128), (128, 128), (128, 128), (128, 1)]
        );
    }
}
