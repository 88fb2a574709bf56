//! Central finite-difference validation of analytic gradients.

use rand::seq::index;

use super::mlp::{Gradients, MlpNetwork};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

pub const FD_STEP: f64 = 1e-5;

/// Above this many parameters only a seeded random subsample is checked.
pub const FULL_CHECK_LIMIT: usize = 10_000;

/// `|a - b| / max(1e-8, |a| + |b|)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Worst relative error between analytic and central-difference gradients.
///
/// `loss` maps logits to `(value, d value / d logits)`.
pub fn finite_diff_check<L>(net: &MlpNetwork, batch: &Tensor, loss: L) -> Result<f64>
where
    L: Fn(&Tensor) -> (f64, Tensor),
{
    let trace = net.forward_trace(batch)?;
    let (_, upstream) = loss(trace.logits());
    let analytic = net.backward_trace(&trace, &upstream)?;
    compare_gradients(net, batch, &loss, &analytic)
}

/// Like [`finite_diff_check`] but against caller-supplied gradients.
pub fn compare_gradients<L>(
    net: &MlpNetwork,
    batch: &Tensor,
    loss: L,
    analytic: &Gradients,
) -> Result<f64>
where
    L: Fn(&Tensor) -> (f64, Tensor),
{
    // (layer, is_bias, index) for every parameter
    let mut coords = Vec::with_capacity(net.param_count());
    for (l, layer) in net.layers().iter().enumerate() {
        coords.extend((0..layer.weight.len()).map(|i| (l, false, i)));
        coords.extend((0..layer.bias.len()).map(|i| (l, true, i)));
    }
    if coords.len() > FULL_CHECK_LIMIT {
        let mut r = rng::stream(coords.len() as u64, "gradcheck/subsample");
        let mut picked: Vec<_> = index::sample(&mut r, coords.len(), FULL_CHECK_LIMIT)
            .into_iter()
            .collect();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (l, is_bias, i) in coords {
        let value_at = |probe: &mut MlpNetwork, v: f64| -> Result<f64> {
            set_param(probe, l, is_bias, i, v);
            Ok(loss(&probe.forward(batch)?).0)
        };
        let original = get_param(net, l, is_bias, i);
        let plus = value_at(&mut probe, original + FD_STEP)?;
        let minus = value_at(&mut probe, original - FD_STEP)?;
        set_param(&mut probe, l, is_bias, i, original);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = get_grad(analytic, l, is_bias, i);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

fn get_param(net: &MlpNetwork, l: usize, is_bias: bool, i: usize) -> f64 {
    let layer = &net.layers()[l];
    if is_bias {
        layer.bias.values()[i]
    } else {
        layer.weight.values()[i]
    }
}

fn set_param(net: &mut MlpNetwork, l: usize, is_bias: bool, i: usize, v: f64) {
    let layer = &mut net.layers_mut()[l];
    if is_bias {
        layer.bias.values_mut()[i] = v;
    } else {
        layer.weight.values_mut()[i] = v;
    }
}

fn get_grad(g: &Gradients, l: usize, is_bias: bool, i: usize) -> f64 {
    if is_bias {
        g.layers[l].bias.values()[i]
    } else {
        g.layers[l].weight.values()[i]
    }
}
