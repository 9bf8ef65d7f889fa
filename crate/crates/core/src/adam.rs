/// Adam moment estimates over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Consumes one gradient and returns the update to add to the parameters.
    pub fn deltas(&mut self, grads: &[f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        grads
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                -self.lr * m_hat / (v_hat.sqrt() + self.eps)
            })
            .collect()
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        for (p, d) in params.iter_mut().zip(self.deltas(grads)) {
            *p += d;
        }
    }
}
