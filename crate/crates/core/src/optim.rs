//! First/second-moment gradient steps.

/// Adam over a flat parameter vector with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-12,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    /// `x -= lr * scale[i] * m_hat / (sqrt(v_hat) + eps)` where `scale`
    /// (per coordinate, optional) expresses parameter units.
    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64, scale: Option<&[f64]>) {
        assert_eq!(x.len(), self.m.len());
        assert_eq!(g.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            let s = scale.map_or(1.0, |s| s[i]);
            x[i] -= lr * s * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Bias-corrected moment update on vertex-attached state.
///
/// Each vertex carries `[m.x, m.y, m.z, v]` where `v` tracks the squared
/// gradient norm, so the step keeps the smoothed gradient's direction.
pub(crate) fn vertex_adam_step(
    positions: &mut [crate::mesh::Vec3],
    state: &mut [f64],
    grads: &[crate::mesh::Vec3],
    t: u32,
    lr: f64,
    beta1: f64,
    beta2: f64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for (i, (x, g)) in positions.iter_mut().zip(grads).enumerate() {
        let s = &mut state[4 * i..4 * i + 4];
        for k in 0..3 {
            s[k] = beta1 * s[k] + (1.0 - beta1) * g[k];
        }
        s[3] = beta2 * s[3] + (1.0 - beta2) * g.norm_squared();
        let denom = (s[3] / c2).sqrt();
        if denom > 0.0 {
            for k in 0..3 {
                x[k] -= lr * (s[k] / c1) / denom;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2);
        for k in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            let lr = 0.05 * (1.0 - k as f64 / 2000.0);
            opt.step(&mut x, &g, lr, None);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn first_step_has_unit_magnitude() {
        let mut x = vec![0.0];
        let mut opt = Adam::new(1);
        opt.step(&mut x, &[123.0], 0.1, Some(&[2.0]));
        assert!((x[0] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_never_moves() {
        let mut x = vec![1.0; 3];
        let mut opt = Adam::new(3);
        for _ in 0..10 {
            opt.step(&mut x, &[0.0; 3], 1.0, None);
        }
        assert_eq!(x, vec![1.0; 3]);
    }
}
