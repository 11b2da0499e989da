use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, Factor, Ladder, QOperator, SpaceDims, C64, ZERO};
use crate::model::{self, SystemConfig};

use super::sparse::{commutator_superop, lindblad_superop, CsrMatrix};

pub type Coefficient = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// A Hamiltonian term `f(t) X + f(t)* X†`.
#[derive(Clone)]
pub struct DriveTerm {
    pub operator: QOperator,
    pub coefficient: Coefficient,
}

impl fmt::Debug for DriveTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriveTerm")
            .field("operator", &self.operator)
            .finish_non_exhaustive()
    }
}

/// Lindblad generator `L(t)ρ = −i[H(t), ρ] + Σ_k D[c_k]ρ` with
/// `H(t) = H₀ + Σ_j (f_j(t) X_j + h.c.)`.
#[derive(Clone, Debug)]
pub struct Generator {
    dims: SpaceDims,
    h0: QOperator,
    collapse: Vec<QOperator>,
    drives: Vec<DriveTerm>,
    l0: CsrMatrix,
    /// `(−i[X, ·], −i[X†, ·])` per drive term.
    drive_superops: Vec<(CsrMatrix, CsrMatrix)>,
}

impl Generator {
    pub fn new(h0: QOperator, collapse: Vec<QOperator>, drives: Vec<DriveTerm>) -> Result<Self> {
        let dims = match h0.space() {
            Factor::Composite(d) => d,
            other => {
                return Err(Error::InvalidDimension(format!(
                    "generator needs a composite-space Hamiltonian, got {other:?}"
                )))
            }
        };
        if h0.hermitian_deviation() > crate::hilbert::HERMITIAN_TOL {
            return Err(Error::InvalidParameter {
                name: "hamiltonian",
                reason: "static Hamiltonian is not Hermitian".into(),
            });
        }
        for op in collapse.iter().chain(drives.iter().map(|d| &d.operator)) {
            if op.space() != h0.space() {
                return Err(Error::DimensionMismatch {
                    expected: dims.dim(),
                    found: op.dim(),
                });
            }
        }
        let cs: Vec<&CMatrix> = collapse.iter().map(|c| c.matrix()).collect();
        let l0 = lindblad_superop(h0.matrix(), &cs);
        let drive_superops = drives
            .iter()
            .map(|d| {
                (
                    commutator_superop(d.operator.matrix()),
                    commutator_superop(&d.operator.matrix().adjoint()),
                )
            })
            .collect();
        Ok(Self {
            dims,
            h0,
            collapse,
            drives,
            l0,
            drive_superops,
        })
    }

    /// Generator of the model in the frame of the reference tone. CW tones at
    /// the reference detuning are folded into the static part.
    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let ladder = Ladder::new(config.cutoff);
        let collapse = model::build_collapse_ops(config);
        let raising = ladder.sigma.adjoint();
        if config.is_time_independent() {
            let c = config.drive_coefficient(0.0);
            let h = model::static_hamiltonian(config) + raising.scaled(c) + ladder.sigma.scaled(c.conj());
            let h = QOperator::new_hermitian(h.space(), h.into_matrix())?;
            return Self::new(h, collapse, Vec::new());
        }
        let cfg = config.clone();
        let coefficient: Coefficient = Arc::new(move |t| cfg.drive_coefficient(t));
        let h0 = model::static_hamiltonian(config);
        let h0 = QOperator::new_hermitian(h0.space(), h0.into_matrix())?;
        Self::new(
            h0,
            collapse,
            vec![DriveTerm {
                operator: raising,
                coefficient,
            }],
        )
    }

    /// Generator for `ρ̃ = U†ρU`, `U = exp(−iω_b b†b t)`. The phonon
    /// rotation is removed from the state and the coupling becomes the drive
    /// `g0 σ†σ b† e^{iω_b t} + h.c.`; populations are unchanged.
    pub fn mode_interaction_picture(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let ladder = Ladder::new(config.cutoff);
        let collapse = model::build_collapse_ops(config);
        let h0 = ladder.excited_projector.scaled(C64::new(config.frame_detuning(), 0.0));
        let cfg = config.clone();
        let omega_b = config.phonon.omega_b;
        let coupling = (&ladder.excited_projector * &ladder.b.adjoint()).scaled(C64::new(config.coupling.g0, 0.0));
        Self::new(
            h0,
            collapse,
            vec![
                DriveTerm {
                    operator: ladder.sigma.adjoint(),
                    coefficient: Arc::new(move |t| cfg.drive_coefficient(t)),
                },
                DriveTerm {
                    operator: coupling,
                    coefficient: Arc::new(move |t| C64::new(0.0, omega_b * t).exp()),
                },
            ],
        )
    }

    pub fn dims(&self) -> SpaceDims {
        self.dims
    }

    /// Dimension of the vectorised state, `(2N)²`.
    pub fn superdim(&self) -> usize {
        self.dims.dim() * self.dims.dim()
    }

    pub fn is_time_independent(&self) -> bool {
        self.drives.is_empty()
    }

    pub fn collapse_ops(&self) -> &[QOperator] {
        &self.collapse
    }

    pub fn static_hamiltonian(&self) -> &QOperator {
        &self.h0
    }

    pub fn hamiltonian(&self, t: f64) -> QOperator {
        let mut h = self.h0.matrix().clone();
        for d in &self.drives {
            let f = (d.coefficient)(t);
            h += d.operator.matrix() * f + d.operator.matrix().adjoint() * f.conj();
        }
        QOperator::new_hermitian(self.h0.space(), h).expect("drive terms are Hermitian by construction")
    }

    /// Time-independent part of the Liouvillian.
    pub fn static_superop(&self) -> &CsrMatrix {
        &self.l0
    }

    /// Full Liouvillian at time `t` as a sparse matrix.
    pub fn superop_at(&self, t: f64) -> CsrMatrix {
        if self.drives.is_empty() {
            return self.l0.clone();
        }
        let mut triplets: Vec<(usize, usize, C64)> = self.l0.iter().collect();
        for (d, (lx, lxd)) in self.drives.iter().zip(&self.drive_superops) {
            let f = (d.coefficient)(t);
            triplets.extend(lx.iter().map(|(r, c, v)| (r, c, v * f)));
            triplets.extend(lxd.iter().map(|(r, c, v)| (r, c, v * f.conj())));
        }
        let n = self.superdim();
        CsrMatrix::from_triplets(n, n, triplets)
    }

    /// `y = L(t) x`
    pub fn apply(&self, t: f64, x: &[C64], y: &mut [C64]) {
        self.l0.mul_vec(x, y);
        for (d, (lx, lxd)) in self.drives.iter().zip(&self.drive_superops) {
            let f = (d.coefficient)(t);
            if f != ZERO {
                lx.mul_vec_add(f, x, y);
                lxd.mul_vec_add(f.conj(), x, y);
            }
        }
    }

    /// Same generator with all drive terms removed.
    pub fn undriven(&self) -> Result<Self> {
        Self::new(self.h0.clone(), self.collapse.clone(), Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Level;
    use crate::model::PulseTone;

    #[test]
    fn cw_config_is_static() {
        let cfg = SystemConfig::cw(1.0, 177.15, 1.6, 1.0, 0.0, 3).unwrap();
        let g = Generator::from_config(&cfg).unwrap();
        assert!(g.is_time_independent());
        let h = g.hamiltonian(0.7);
        let d = cfg.cutoff;
        assert_eq!(
            h.get(d.index(Level::Excited, 0), d.index(Level::Ground, 0)),
            C64::new(1.0, 0.0)
        );
    }

    #[test]
    fn pulsed_config_matches_model_hamiltonian() {
        let mut cfg = SystemConfig::cw(1.0, 177.15, 1e-3, 0.0, 0.0, 3).unwrap();
        cfg.tones = vec![
            PulseTone::gaussian(C64::new(0.2, 0.1), 0.0, 10.0, 3.0),
            PulseTone::gaussian(C64::new(1.5, 0.0), 177.15, 10.0, 3.0),
        ];
        let g = Generator::from_config(&cfg).unwrap();
        assert!(!g.is_time_independent());
        for &t in &[0.0, 8.3, 10.0, 13.1] {
            let a = g.hamiltonian(t);
            let b = model::build_hamiltonian(&cfg, t);
            assert!((a.matrix() - b.matrix()).norm() < 1e-12);
            let full = g.superop_at(t);
            let x: Vec<C64> = (0..g.superdim()).map(|k| C64::new(k as f64, 1.0)).collect();
            let mut y1 = vec![ZERO; x.len()];
            let mut y2 = vec![ZERO; x.len()];
            full.mul_vec(&x, &mut y1);
            g.apply(t, &x, &mut y2);
            let err: f64 = y1.iter().zip(&y2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9);
        }
    }
}
