use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpNetwork};
use crate::error::{Error, Result};

/// Adam moments for one network, flattened per layer as `[weights.., biases..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &MlpNetwork) -> Self {
        Self::with_betas(net, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &MlpNetwork, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let sizes: Vec<usize> = net
            .layers()
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .collect();
        Self {
            step: 0,
            beta1,
            beta2,
            epsilon,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient
    /// is non-finite.
    pub fn step(&mut self, net: &mut MlpNetwork, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::Shape(format!(
                "{} gradient layers for a {}-layer network",
                grads.layers.len(),
                net.layers().len()
            )));
        }
        for (l, (g, p)) in grads.layers.iter().zip(net.layers()).enumerate() {
            if !g.weight.same_shape(&p.weight) || !g.bias.same_shape(&p.bias) {
                return Err(Error::Shape(format!(
                    "gradient shape mismatch in layer {l}"
                )));
            }
            if !g.weight.is_finite() || !g.bias.is_finite() {
                return Err(Error::Numeric {
                    layer: l,
                    detail: "non-finite gradient".into(),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);

        for (l, (layer, g)) in net.layers_mut().iter_mut().zip(&grads.layers).enumerate() {
            let m = &mut self.first[l];
            let v = &mut self.second[l];
            let params = layer
                .weight
                .values_mut()
                .iter_mut()
                .chain(layer.bias.values_mut().iter_mut());
            let gs = g.weight.values().iter().chain(g.bias.values());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Dense, Tensor};

    fn scalar_net(w: f64) -> MlpNetwork {
        // one weight feeding two logits; we only look at weight[0]
        MlpNetwork::from_layers(vec![Dense {
            weight: Tensor::new(vec![2, 1], vec![w, 0.0]).unwrap(),
            bias: Tensor::zeros(vec![2]),
        }])
        .unwrap()
    }

    fn grads(g: f64) -> Gradients {
        Gradients {
            layers: vec![Dense {
                weight: Tensor::new(vec![2, 1], vec![g, 0.0]).unwrap(),
                bias: Tensor::zeros(vec![2]),
            }],
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(0.5);
        let mut state = AdamState::new(&net);
        state.step(&mut net, &grads(1.0), 0.001).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + eps)
        let moved = 0.5 - net.layers()[0].weight.values()[0];
        assert!((moved - 0.001).abs() < 1e-9);
        assert!((moved - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradients_leave_parameters_alone() {
        let mut net = MlpNetwork::init(&[3, 4, 2], 1).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let zero = Gradients::zeros_like(&net);
        for _ in 0..5 {
            state.step(&mut net, &zero, 0.01).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn replayed_trajectory_is_identical() {
        let run = || {
            let mut net = scalar_net(0.3);
            let mut state = AdamState::new(&net);
            state.step(&mut net, &grads(0.7), 0.01).unwrap();
            state.step(&mut net, &grads(-0.2), 0.01).unwrap();
            net.layers()[0].weight.values()[0].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_reports_layer() {
        let mut net = MlpNetwork::init(&[2, 3, 2], 1).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].bias.values_mut()[0] = f64::NAN;
        let mut state = AdamState::new(&net);
        let before = net.clone();
        match state.step(&mut net, &g, 0.1) {
            Err(Error::Numeric { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected numeric error, got {other:?}"),
        }
        assert_eq!(net, before);
        assert_eq!(state.step, 0);
    }
}
