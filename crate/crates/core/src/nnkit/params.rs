/// Gradients laid out like the owner's parameter tensors, in visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros_like<P: Parameterized + ?Sized>(p: &P) -> Self {
        let mut out = Vec::new();
        p.visit_params(&mut |t| out.push(vec![0.0; t.len()]));
        Self(out)
    }

    pub fn extend(&mut self, other: Grads) {
        self.0.extend(other.0);
    }

    /// Elementwise `self += other`; shapes must agree.
    pub fn accumulate(&mut self, other: &Grads) {
        assert_eq!(self.0.len(), other.0.len(), "gradient tensor count mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            assert_eq!(a.len(), b.len(), "gradient tensor shape mismatch");
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.concat()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Anything with trainable tensors. Visiting order must be stable; it defines
/// the layout of [`Grads`] and of optimizer state.
pub trait Parameterized {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a [f64]));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |t| n += t.len());
        n
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |t| out.extend_from_slice(t));
        out
    }

    /// Adds `delta` to flat coordinate `index`.
    fn nudge(&mut self, index: usize, delta: f64) {
        let mut offset = 0;
        self.visit_params_mut(&mut |t| {
            if index >= offset && index < offset + t.len() {
                t[index - offset] += delta;
            }
            offset += t.len();
        });
    }
}
