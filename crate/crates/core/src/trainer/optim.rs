use crate::autodiff::Tensor;

/// Adaptive per-coordinate step with no first-moment momentum and decoupled
/// weight decay. Two parameter groups share one state layout; group 0 is
/// the first `split` tensors.
#[derive(Clone, Debug)]
pub struct Optimizer {
    lrs: [f64; 2],
    weight_decay: f64,
    beta2: f64,
    eps: f64,
    split: usize,
    step: u64,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(shapes: &[usize], split: usize, lr_group0: f64, lr_group1: f64, weight_decay: f64) -> Self {
        Optimizer {
            lrs: [lr_group0, lr_group1],
            weight_decay,
            beta2: 0.999,
            eps: 1e-8,
            split,
            step: 0,
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Tensors without a gradient are left alone, as is
    /// every tensor of a group whose learning rate is zero.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>]) {
        assert_eq!(params.len(), self.second.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let correction = 1.0 - self.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let lr = self.lrs[usize::from(i >= self.split)];
            let Some(g) = g else { continue };
            if lr == 0.0 {
                continue;
            }
            let v = &mut self.second[i];
            for ((w, &gj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                let vhat = *vj / correction;
                *w -= lr * (gj / (vhat.sqrt() + self.eps) + self.weight_decay * *w);
            }
        }
    }
}
