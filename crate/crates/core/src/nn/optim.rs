/// Anything holding trainable parameters with matching gradient buffers.
/// Visiting order defines the flat parameter layout.
pub trait Module {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32]));
    fn visit_params_ref(&self, f: &mut dyn FnMut(&[f32]));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |_, g| g.fill(0.0));
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params_ref(&mut |p| n += p.len());
        n
    }

    fn export_params(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params_ref(&mut |p| out.extend_from_slice(p));
        out
    }

    /// Loads a flat blob produced by [`Module::export_params`].
    fn import_params(&mut self, blob: &[f32]) -> crate::Result<()> {
        let n = self.param_count();
        if blob.len() != n {
            return Err(crate::Error::shape(format!("{n} parameters"), blob.len()));
        }
        let mut off = 0;
        self.visit_params(&mut |p, _| {
            p.copy_from_slice(&blob[off..off + p.len()]);
            off += p.len();
        });
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step(&mut self, module: &mut dyn Module) {
        if self.m.is_empty() {
            let n = module.param_count();
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut off = 0;
        module.visit_params(&mut |p, g| {
            for i in 0..p.len() {
                let gi = g[i];
                let mi = &mut m[off + i];
                let vi = &mut v[off + i];
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                p[i] -= step * *mi / (vi.sqrt() + eps * c2.sqrt());
            }
            off += p.len();
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad {
        x: Vec<f32>,
        g: Vec<f32>,
    }

    impl Module for Quad {
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
            f(&mut self.x, &mut self.g);
        }
        fn visit_params_ref(&self, f: &mut dyn FnMut(&[f32])) {
            f(&self.x);
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut q = Quad { x: vec![3.0, -2.0], g: vec![0.0; 2] };
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            q.g = q.x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut q);
        }
        assert!(q.x.iter().all(|v| v.abs() < 1e-2), "{:?}", q.x);
    }

    #[test]
    fn params_roundtrip() {
        let mut q = Quad { x: vec![1.0, 2.0], g: vec![0.0; 2] };
        let blob = q.export_params();
        q.x = vec![0.0, 0.0];
        q.import_params(&blob).unwrap();
        assert_eq!(q.x, vec![1.0, 2.0]);
        assert!(q.import_params(&[1.0]).is_err());
    }
}
