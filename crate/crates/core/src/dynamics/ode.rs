//! Dormand–Prince 8(5,3) explicit Runge–Kutta for complex linear systems.
//!
//! Step-size control follows Hairer's DOP853 with the combined 5th/3rd order
//! error estimate. Steps are shortened to land exactly on requested output
//! times, so no dense output is needed.

use crate::error::{Error, Result};
use crate::hilbert::{C64, ZERO};

const C: [f64; 12] = [
    0.0,
    0.05260015195876773,
    0.0789002279381516,
    0.1183503419072274,
    0.2816496580927726,
    0.3333333333333333,
    0.25,
    0.3076923076923077,
    0.6512820512820513,
    0.6,
    0.8571428571428571,
    1.0,
];

const A: [[f64; 12]; 12] = [
    [0.0; 12],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0],
];

const B: [f64; 12] = [
    0.054293734116568765,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450312892752409,
    1.8915178993145003,
    -5.801203960010585,
    0.3111643669578199,
    -0.1521609496625161,
    0.20136540080403034,
    0.04471061572777259,
];

const E3: [f64; 12] = [
    -0.18980075407240762,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450312892752409,
    1.8915178993145003,
    -5.801203960010585,
    -0.4226823213237919,
    -0.1521609496625161,
    0.20136540080403034,
    0.02265179219836082,
];

const E5: [f64; 12] = [
    0.01312004499419488,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.2251564463762044,
    -0.4957589496572502,
    1.6643771824549864,
    -0.35032884874997366,
    0.3341791187130175,
    0.08192320648511571,
    -0.022355307863886294,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const EXPONENT: f64 = -1.0 / 8.0;

/// `dy/dt = f(t, y)` on complex vectors.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]);
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs: 1e-10,
        }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel > 0.0 && self.abs > 0.0) || !self.rel.is_finite() || !self.abs.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: format!("rel and abs must be positive (rel={}, abs={})", self.rel, self.abs),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rel: self.rel * factor,
            abs: self.abs * factor,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Dop853 {
    pub tol: Tolerance,
    pub max_step: f64,
    pub first_step: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    /// Step size suggested for continuing past the last output.
    pub last_step: f64,
}

impl StepStats {
    pub fn merge(&mut self, other: &StepStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evaluations += other.rhs_evaluations;
        self.last_step = other.last_step;
    }
}

impl Dop853 {
    pub fn new(tol: Tolerance) -> Self {
        Self {
            tol,
            max_step: f64::INFINITY,
            first_step: None,
        }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    pub fn with_first_step(mut self, h: Option<f64>) -> Self {
        self.first_step = h;
        self
    }

    fn scale(&self, a: C64, b: C64) -> f64 {
        self.tol.abs + self.tol.rel * a.norm().max(b.norm())
    }

    fn initial_step<S: OdeSystem>(&self, sys: &S, t: f64, y: &[C64], f0: &[C64], stats: &mut StepStats) -> f64 {
        let n = y.len() as f64;
        let sc: Vec<f64> = y.iter().map(|v| self.tol.abs + self.tol.rel * v.norm()).collect();
        let rms = |v: &[C64]| (v.iter().zip(&sc).map(|(x, s)| (x.norm() / s).powi(2)).sum::<f64>() / n).sqrt();
        let d0 = rms(y);
        let d1 = rms(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.max_step);
        let y1: Vec<C64> = y.iter().zip(f0).map(|(a, b)| a + b * h0).collect();
        let mut f1 = vec![ZERO; y.len()];
        sys.rhs(t + h0, &y1, &mut f1);
        stats.rhs_evaluations += 1;
        let diff: Vec<C64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(self.max_step)
    }

    /// Integrates from `t0`, invoking `on_output(k, t_k, y(t_k))` at every
    /// output time. `outputs` must be non-decreasing and start at or after `t0`.
    pub fn integrate<S, F>(
        &self,
        sys: &S,
        t0: f64,
        y: &mut [C64],
        outputs: &[f64],
        mut on_output: F,
    ) -> Result<StepStats>
    where
        S: OdeSystem,
        F: FnMut(usize, f64, &[C64]) -> Result<()>,
    {
        self.tol.validate()?;
        let n = sys.dim();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if outputs.iter().any(|t| !t.is_finite()) || outputs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidGrid("output times must be finite and non-decreasing".into()));
        }
        if outputs.first().is_some_and(|&t| t < t0) {
            return Err(Error::InvalidGrid("first output precedes the initial time".into()));
        }
        let mut stats = StepStats::default();
        let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 12];
        let mut f_new = vec![ZERO; n];
        let mut y_stage = vec![ZERO; n];
        let mut y_new = vec![ZERO; n];
        let mut t = t0;
        sys.rhs(t, y, &mut k[0]);
        stats.rhs_evaluations += 1;
        let mut h = match self.first_step {
            Some(h) if h > 0.0 => h.min(self.max_step),
            _ => self.initial_step(sys, t, y, &k[0], &mut stats),
        };

        for (idx, &target) in outputs.iter().enumerate() {
            while t < target {
                let remaining = target - t;
                let mut step_rejected = false;
                loop {
                    let min_step = 10.0 * f64::EPSILON * t.abs().max(1.0);
                    if h < min_step {
                        return Err(Error::Stiffness { time: t, step: h });
                    }
                    let clamped = h >= remaining;
                    let hs = if clamped { remaining } else { h };
                    for s in 1..12 {
                        for i in 0..n {
                            let mut acc = ZERO;
                            for (j, kj) in k.iter().enumerate().take(s) {
                                let a = A[s][j];
                                if a != 0.0 {
                                    acc += kj[i] * a;
                                }
                            }
                            y_stage[i] = y[i] + acc * hs;
                        }
                        sys.rhs(t + C[s] * hs, &y_stage, &mut k[s]);
                    }
                    for i in 0..n {
                        let mut acc = ZERO;
                        for (j, kj) in k.iter().enumerate() {
                            if B[j] != 0.0 {
                                acc += kj[i] * B[j];
                            }
                        }
                        y_new[i] = y[i] + acc * hs;
                    }
                    let t_new = if clamped { target } else { t + hs };
                    sys.rhs(t_new, &y_new, &mut f_new);
                    stats.rhs_evaluations += 12;

                    let mut e5 = 0.0;
                    let mut e3 = 0.0;
                    for i in 0..n {
                        let sc = self.scale(y[i], y_new[i]);
                        let mut a5 = ZERO;
                        let mut a3 = ZERO;
                        for j in 0..12 {
                            if E5[j] != 0.0 {
                                a5 += k[j][i] * E5[j];
                            }
                            if E3[j] != 0.0 {
                                a3 += k[j][i] * E3[j];
                            }
                        }
                        e5 += (a5.norm() / sc).powi(2);
                        e3 += (a3.norm() / sc).powi(2);
                    }
                    let err = if e5 == 0.0 && e3 == 0.0 {
                        0.0
                    } else {
                        hs * e5 / ((e5 + 0.01 * e3) * n as f64).sqrt()
                    };
                    if !err.is_finite() {
                        h = hs * MIN_FACTOR;
                        stats.rejected += 1;
                        step_rejected = true;
                        continue;
                    }
                    if err < 1.0 {
                        let mut factor = if err == 0.0 {
                            MAX_FACTOR
                        } else {
                            (SAFETY * err.powf(EXPONENT)).min(MAX_FACTOR)
                        };
                        if step_rejected {
                            factor = factor.min(1.0);
                        }
                        // A step cut short by an output time keeps the
                        // unclamped proposal unless the error asks for less.
                        h = if clamped {
                            if factor < 1.0 {
                                h.min(hs * factor)
                            } else {
                                h
                            }
                        } else {
                            hs * factor
                        }
                        .min(self.max_step);
                        t = t_new;
                        y.copy_from_slice(&y_new);
                        std::mem::swap(&mut k[0], &mut f_new);
                        stats.accepted += 1;
                        break;
                    }
                    h = hs * (SAFETY * err.powf(EXPONENT)).max(MIN_FACTOR);
                    stats.rejected += 1;
                    step_rejected = true;
                }
            }
            on_output(idx, target, y)?;
        }
        stats.last_step = h;
        Ok(stats)
    }
}
