//! Algebraic and calculus checks of the training-design objective on random
//! small problems.

use num_complex::Complex64;
use trainsens_core::comsens::{
    build_problem, design, exp_covariance, AuxMatrix, CMatrix, ComsensSettings, LinkModel,
};
use trainsens_core::specfun::McOracle;

/// Sequential draws from the counter-mode generator.
struct Draws {
    oracle: McOracle,
    next: u64,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Self { oracle: McOracle::new(seed, 1).unwrap(), next: 0 }
    }

    fn uniform(&mut self) -> f64 {
        self.next += 1;
        self.oracle.uniform(self.next)
    }

    fn index(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((hi - lo + 1) as f64 * self.uniform()) as usize
    }

    /// Standard complex Gaussian via Box–Muller.
    fn cgauss(&mut self) -> Complex64 {
        let (u, v) = (self.uniform(), self.uniform());
        Complex64::from_polar((-u.ln()).sqrt(), 2.0 * std::f64::consts::PI * v)
    }

    fn matrix(&mut self, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| self.cgauss())
    }

    /// Unit-trace Hermitian positive definite `AAᴴ + δI`.
    fn hpd(&mut self, n: usize) -> CMatrix {
        let a = self.matrix(n, n);
        let mut s = &a * a.adjoint();
        for i in 0..n {
            s[(i, i)] += 0.1;
        }
        let tr = s.trace().re;
        s / Complex64::new(tr, 0.0)
    }

    fn instance(&mut self) -> (LinkModel, CMatrix) {
        let n_tx = self.index(1, 3);
        let n_rx = self.index(1, 3);
        let b = self.index(2, 6);
        let link = LinkModel::new(self.hpd(n_tx * n_rx), self.hpd(b * n_rx), n_tx, n_rx).unwrap();
        let p = self.matrix(b, n_tx);
        (link, p)
    }
}

#[test]
fn optimal_aux_attains_channel_mse() {
    let mut d = Draws::new(7);
    for _ in 0..50 {
        let (link, p) = d.instance();
        let mse = link.mse(&p).unwrap();
        let v = link.optimal_aux(&p).unwrap();
        let f = link.aux_objective(&v, &p).unwrap();
        assert!((f - mse).abs() <= 1e-10 * (1.0 + mse), "F = {f}, mse = {mse}");
    }
}

#[test]
fn optimal_aux_is_a_minimizer_over_v2() {
    let mut d = Draws::new(8);
    for _ in 0..10 {
        let (link, p) = d.instance();
        let v = link.optimal_aux(&p).unwrap();
        let f0 = link.aux_objective(&v, &p).unwrap();
        for _ in 0..100 {
            let dir = d.matrix(v.v2.nrows(), v.v2.ncols());
            let t = Complex64::new(1e-3 * d.uniform(), 0.0);
            let moved = AuxMatrix { v1: v.v1.clone(), v2: &v.v2 + dir * t };
            assert!(link.aux_objective(&moved, &p).unwrap() >= f0 - 1e-12 * (1.0 + f0));
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut d = Draws::new(9);
    let h = 1e-5;
    for _ in 0..20 {
        let (link, p) = d.instance();
        // A generic auxiliary matrix exercises both V₁ and V₂ terms.
        let dim = link.r.nrows();
        let v = AuxMatrix { v1: d.matrix(dim, dim), v2: d.matrix(link.m.nrows(), dim) };
        let grad = link.aux_gradient(&v, &p).unwrap();
        let f = |q: &CMatrix| link.aux_objective(&v, q).unwrap();
        let mut fd = CMatrix::zeros(p.nrows(), p.ncols());
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let mut diff = [0.0; 2];
                for (slot, unit) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)].into_iter().enumerate() {
                    let (mut up, mut down) = (p.clone(), p.clone());
                    up[(i, j)] += unit;
                    down[(i, j)] -= unit;
                    diff[slot] = (f(&up) - f(&down)) / (2.0 * h);
                }
                fd[(i, j)] = Complex64::new(diff[0], diff[1]);
            }
        }
        let rel = (&grad - &fd).norm() / grad.norm().max(1e-300);
        assert!(rel <= 1e-6, "relative gradient error {rel}");
    }
}

#[test]
fn majorizer_step_does_not_increase_objective() {
    let mut d = Draws::new(10);
    for _ in 0..30 {
        let (link, p) = d.instance();
        // Aux matrix of a different point, so P is not already optimal.
        let v = link.optimal_aux(&d.matrix(p.nrows(), p.ncols())).unwrap();
        let before = link.aux_objective(&v, &p).unwrap();
        let after = link.aux_objective(&v, &link.target(&v, &p).unwrap()).unwrap();
        assert!(after <= before + 1e-12 * (1.0 + before), "{after} > {before}");
    }
}

#[test]
fn more_training_power_never_raises_mse() {
    let mut d = Draws::new(11);
    for _ in 0..20 {
        let (link, p) = d.instance();
        let mut last = f64::INFINITY;
        for c in [0.0, 0.1, 0.5, 1.0, 2.0, 10.0] {
            let mse = link.mse(&(&p * Complex64::new(c, 0.0))).unwrap();
            assert!(mse <= last + 1e-12, "mse rose to {mse} at scale {c}");
            last = mse;
        }
        // Zero training leaves the prior: tr(R) = 1.
        let zero = link.mse(&CMatrix::zeros(p.nrows(), p.ncols())).unwrap();
        assert!((zero - 1.0).abs() < 1e-12);
    }
}

#[test]
fn exponential_covariances_factor() {
    let mut d = Draws::new(12);
    for _ in 0..40 {
        let dim = d.index(1, 32);
        let corr = Complex64::from_polar(0.95 * d.uniform(), 2.0 * std::f64::consts::PI * d.uniform());
        let c = exp_covariance(dim, corr).unwrap();
        assert!(c.clone().cholesky().is_some(), "dim {dim}, corr {corr}");
        assert!((&c - c.adjoint()).norm() < 1e-14);
    }
}

fn small_settings(k: usize) -> ComsensSettings {
    ComsensSettings { b: 6, n_t: 2, n_r: 2, k, ..ComsensSettings::default() }
}

#[test]
fn design_is_deterministic() {
    let prob = build_problem(&small_settings(2)).unwrap();
    let a = design(&prob, 5).unwrap();
    let b = design(&prob, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dropping_the_zone_does_not_hurt() {
    for seed in 1..=3 {
        let zoned = design(&build_problem(&small_settings(2)).unwrap(), seed).unwrap();
        let free = design(&build_problem(&small_settings(0)).unwrap(), seed).unwrap();
        assert!(zoned.trace.converged && free.trace.converged);
        assert!(
            free.final_mse <= zoned.final_mse + 1e-6,
            "seed {seed}: k = 0 gives {}, k = 2 gives {}",
            free.final_mse,
            zoned.final_mse
        );
    }
}

#[test]
fn converged_aux_objective_equals_mse() {
    let prob = build_problem(&small_settings(2)).unwrap();
    let r = design(&prob, 4).unwrap();
    let v = prob.downlink.optimal_aux(&r.pair.x).unwrap();
    let f = prob.downlink.aux_objective(&v, &r.pair.x).unwrap();
    assert!((f - prob.downlink.mse(&r.pair.x).unwrap()).abs() <= 1e-8);
}
