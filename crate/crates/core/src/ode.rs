//! Classic fixed-step fourth-order Runge–Kutta for autonomous systems
//! `y' = f(y)`. External inputs are held constant across a step by the
//! caller (zero-order hold), so the right-hand side takes no time argument.

#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    scratch: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            scratch: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Advances `y` in place by one step of length `dt`.
    pub fn step<F>(&mut self, y: &mut [f64], dt: f64, mut rhs: F)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        debug_assert_eq!(y.len(), self.dim());
        let half = 0.5 * dt;

        rhs(y, &mut self.k1);
        for ((s, &yi), &k) in self.scratch.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = yi + half * k;
        }
        rhs(&self.scratch, &mut self.k2);
        for ((s, &yi), &k) in self.scratch.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = yi + half * k;
        }
        rhs(&self.scratch, &mut self.k3);
        for ((s, &yi), &k) in self.scratch.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = yi + dt * k;
        }
        rhs(&self.scratch, &mut self.k4);

        let sixth = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}
