use super::loss::HyperParams;
use super::params::NetworkParams;

/// Velocity buffers, one per parameter, starting at zero.
#[derive(Debug, Clone)]
pub struct MomentumState {
    pub velocity: NetworkParams,
}

impl MomentumState {
    pub fn new(params: &NetworkParams) -> Self {
        Self {
            velocity: params.zeros_like(),
        }
    }
}

/// `v <- momentum * v + g; theta <- theta - lr * v`
#[inline]
pub fn momentum_update(theta: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for ((t, v), &g) in theta.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *t -= lr * *v;
    }
}

pub fn sgd_momentum_step(
    params: &mut NetworkParams,
    state: &mut MomentumState,
    grads: &NetworkParams,
    hyper: &HyperParams,
) {
    debug_assert_eq!(params.sizes(), grads.sizes());
    for ((t, v), g) in params
        .tensors_mut()
        .into_iter()
        .zip(state.velocity.tensors_mut())
        .zip(grads.tensors())
    {
        momentum_update(t, v, g, hyper.learning_rate, hyper.momentum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashnet::params::{init_glorot, LayerSizes};

    #[test]
    fn plain_gradient_step() {
        let (mut t, mut v) = ([5.0], [0.0]);
        momentum_update(&mut t, &mut v, &[2.0], 1.0, 0.0);
        assert_eq!(t, [3.0]);
    }

    #[test]
    fn two_momentum_steps() {
        let (mut t, mut v) = ([0.0], [0.0]);
        momentum_update(&mut t, &mut v, &[1.0], 1.0, 0.9);
        momentum_update(&mut t, &mut v, &[1.0], 1.0, 0.9);
        assert!((t[0] - (-2.9)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let sizes = LayerSizes {
            input: 3,
            hidden: 4,
            bits: 2,
            embed: 2,
        };
        let mut p = init_glorot(sizes, 1).unwrap();
        let before = p.clone();
        let mut state = MomentumState::new(&p);
        let zero = p.zeros_like();
        for _ in 0..3 {
            sgd_momentum_step(&mut p, &mut state, &zero, &HyperParams::default());
        }
        assert_eq!(p, before);
    }

    #[test]
    fn zero_momentum_is_vanilla_sgd() {
        let sizes = LayerSizes {
            input: 3,
            hidden: 4,
            bits: 2,
            embed: 2,
        };
        let mut p = init_glorot(sizes, 1).unwrap();
        let g = init_glorot(sizes, 2).unwrap();
        let hyper = HyperParams {
            momentum: 0.0,
            learning_rate: 0.05,
            ..HyperParams::default()
        };
        let mut expected = p.clone();
        for (t, gt) in expected.tensors_mut().into_iter().zip(g.tensors()) {
            for (x, d) in t.iter_mut().zip(gt) {
                *x -= 0.05 * d;
            }
        }
        let mut state = MomentumState::new(&p);
        sgd_momentum_step(&mut p, &mut state, &g, &hyper);
        assert_eq!(p, expected);
    }
}
