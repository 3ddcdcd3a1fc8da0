//! Error measures between a reduced trajectory and full-order snapshots.

use nalgebra::DVector;

use super::{RomError, RomState};
use crate::fom::SnapshotSet;
use crate::operators::OperatorSet;
use crate::pod::ReducedBasis;

/// `K(u) = int |u|^2`
pub fn kinetic_energy(ops: &OperatorSet, u: &DVector<f64>) -> f64 {
    ops.mass.bilinear(u, u)
}

/// `E(u) = int |curl u|^2`
pub fn enstrophy(ops: &OperatorSet, u: &DVector<f64>) -> f64 {
    ops.curl_gramian.bilinear(u, u)
}

/// Relative errors at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleErrors {
    pub t: f64,
    /// `|u_r - u_h|_{H1} / |u_h|_{H1}`
    pub err_u: f64,
    /// `||p_r - p_h||_{L2} / ||p_h||_{L2}`
    pub err_p: f64,
    pub err_k: f64,
    pub err_e: f64,
}

/// Per-sample errors and their time-integrated counterparts
/// `sqrt(sum_n |e(t_n)|^2) / sqrt(sum_n |ref(t_n)|^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: Vec<SampleErrors>,
    pub err_u: f64,
    pub err_p: f64,
    pub err_k: f64,
    pub err_e: f64,
    /// Supremizer coefficient size relative to velocity coefficients, when present.
    pub dormancy: Option<f64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

#[derive(Default)]
struct Acc {
    err: f64,
    reference: f64,
}

impl Acc {
    fn push(&mut self, e2: f64, r2: f64) -> f64 {
        self.err += e2;
        self.reference += r2;
        ratio(e2.sqrt(), r2.sqrt())
    }
    fn value(&self) -> f64 {
        ratio(self.err.sqrt(), self.reference.sqrt())
    }
}

/// Compares the lifted reduced trajectory with the snapshots sample by sample.
pub fn metrics(
    ops: &OperatorSet,
    basis: &ReducedBasis,
    states: &[RomState],
    fom: &SnapshotSet,
) -> Result<MetricsReport, RomError> {
    if states.len() != fom.states.len() {
        return Err(RomError::TimeGridMismatch(format!(
            "{} reduced samples against {} snapshots",
            states.len(),
            fom.states.len()
        )));
    }
    let mut acc = [
        Acc::default(),
        Acc::default(),
        Acc::default(),
        Acc::default(),
    ];
    let mut samples = Vec::with_capacity(states.len());
    for (r, h) in states.iter().zip(&fom.states) {
        if (r.t - h.t).abs() > 1e-9 * h.t.abs().max(1.0) {
            return Err(RomError::TimeGridMismatch(format!(
                "reduced sample at t = {} against snapshot at t = {}",
                r.t, h.t
            )));
        }
        let u = basis.velocity(&r.c.rows(1, basis.n_free()).into_owned());
        let p = basis.pressure(&r.q);
        let eu = &u - &h.u;
        let ep = &p - &h.p;
        let (kr, kh) = (kinetic_energy(ops, &u), kinetic_energy(ops, &h.u));
        let (er, eh) = (enstrophy(ops, &u), enstrophy(ops, &h.u));
        samples.push(SampleErrors {
            t: h.t,
            err_u: acc[0].push(
                ops.h1_gramian.bilinear(&eu, &eu),
                ops.h1_gramian.bilinear(&h.u, &h.u),
            ),
            err_p: acc[1].push(
                ops.pressure_mass.bilinear(&ep, &ep),
                ops.pressure_mass.bilinear(&h.p, &h.p),
            ),
            err_k: acc[2].push((kr - kh).powi(2), kh * kh),
            err_e: acc[3].push((er - eh).powi(2), eh * eh),
        });
    }
    Ok(MetricsReport {
        samples,
        err_u: acc[0].value(),
        err_p: acc[1].value(),
        err_k: acc[2].value(),
        err_e: acc[3].value(),
        dormancy: super::supremizer_dormancy(basis, states),
    })
}
