use super::vector::dot;
use crate::optim::NoiseBank;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const PSD_SLACK: f64 = 1e-10;

/// Eigenvalues of a positive semi-definite matrix, ascending.
///
/// Values in `[-eps, 0)` with `eps = 1e-10 * max` are clamped to zero; anything
/// more negative is rejected as a numerical failure.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult {
    eigenvalues: Vec<f64>,
}

impl EigenResult {
    pub fn from_psd(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty spectrum"));
        }
        values.sort_by(f64::total_cmp);
        let eps = PSD_SLACK * values.last().copied().unwrap_or(0.0).max(0.0);
        for v in &mut values {
            if *v < 0.0 {
                if *v < -eps {
                    return Err(Error::Numerical(format!(
                        "eigenvalue {v:e} below PSD slack -{eps:e}"
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(Self {
            eigenvalues: values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// The PSD slack `eps` below which an eigenvalue counts as zero.
    pub fn slack(&self) -> f64 {
        PSD_SLACK * self.max()
    }
}

/// Eigenvalues of the symmetric `n x n` row-major matrix `a` by cyclic Jacobi
/// rotations, unsorted.
///
/// Sweeps until the off-diagonal Frobenius norm drops to `1e-12 * |A|_F`; gives
/// up after 100 sweeps.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::invalid(format!(
            "matrix of {} entries is not {n}x{n}",
            a.len()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    for i in 0..n {
        for j in 0..i {
            if a[i * n + j] != a[j * n + i] {
                return Err(Error::invalid(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }

    let mut a = a.to_vec();
    let total = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = OFF_DIAGONAL_TOL * total;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= threshold {
            return Ok((0..n).map(|i| a[i * n + i]).collect());
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;

                // A <- A J
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                // A <- J^T A
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi iteration did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Spectrum of `(1/M) W^T W` for the `M` column vectors `W`.
///
/// The nonzero part equals the nonzero spectrum of `(1/M) W W^T`.
pub fn gram_spectrum<V: AsRef<[f64]>>(columns: &[V]) -> Result<EigenResult> {
    let m = columns.len();
    if m < 2 {
        return Err(Error::invalid(format!("Gram spectrum needs M >= 2, got {m}")));
    }
    let dim = columns[0].as_ref().len();
    if columns.iter().any(|c| c.as_ref().len() != dim) {
        return Err(Error::invalid("noise vectors differ in dimension"));
    }
    let scale = 1.0 / m as f64;
    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let g = scale * dot(columns[i].as_ref(), columns[j].as_ref());
            gram[i * m + j] = g;
            gram[j * m + i] = g;
        }
    }
    EigenResult::from_psd(symmetric_eigenvalues(&gram, m)?)
}

/// Spectrum of the dense `l x l` matrix `(1/M) W W^T` for the `M` column
/// vectors `W`; cheaper than the Gram route when `l < M`.
pub fn covariance_spectrum<V: AsRef<[f64]>>(columns: &[V]) -> Result<EigenResult> {
    let m = columns.len();
    if m == 0 {
        return Err(Error::invalid("covariance of zero vectors"));
    }
    let l = columns[0].as_ref().len();
    if l == 0 || columns.iter().any(|c| c.as_ref().len() != l) {
        return Err(Error::invalid("noise vectors differ in dimension or are empty"));
    }
    let mut cov = vec![0.0; l * l];
    for c in columns {
        let c = c.as_ref();
        for i in 0..l {
            for j in 0..=i {
                cov[i * l + j] += c[i] * c[j];
            }
        }
    }
    let scale = 1.0 / m as f64;
    for i in 0..l {
        for j in 0..=i {
            let v = cov[i * l + j] * scale;
            cov[i * l + j] = v;
            cov[j * l + i] = v;
        }
    }
    EigenResult::from_psd(symmetric_eigenvalues(&cov, l)?)
}

/// Eigenvalues of `(1/M) Ω^T Ω` for a mean-centered noise bank.
pub fn gram_eigenvalues(bank: &NoiseBank) -> Result<EigenResult> {
    gram_spectrum(bank.columns())
}

/// `λ_max / λ_min*` where `λ_min*` is the second-smallest eigenvalue; the
/// smallest is annihilated by mean-centering.
///
/// Returns `Ok(None)` (degenerate) when `λ_min*` is within the PSD slack of
/// zero.
pub fn condition_number(eigs: &EigenResult) -> Result<Option<f64>> {
    if eigs.len() < 3 {
        return Err(Error::invalid(format!(
            "condition number needs at least 3 eigenvalues, got {}",
            eigs.len()
        )));
    }
    Ok(ratio_above_slack(eigs.max(), eigs.values()[1], eigs.slack()))
}

/// `λ_1 / λ_r` over the descending spectrum: the condition number of the part
/// of the spectrum that can be nonzero when the covariance has rank at most
/// `rank`. With `rank = M - 1` on an `M`-point Gram spectrum this is
/// [`condition_number`].
pub fn condition_at_rank(eigs: &EigenResult, rank: usize) -> Result<Option<f64>> {
    if rank < 2 || rank > eigs.len() {
        return Err(Error::invalid(format!(
            "rank {rank} outside 2..={} for a condition number",
            eigs.len()
        )));
    }
    let bottom = eigs.values()[eigs.len() - rank];
    Ok(ratio_above_slack(eigs.max(), bottom, eigs.slack()))
}

pub(crate) fn ratio_above_slack(top: f64, bottom: f64, slack: f64) -> Option<f64> {
    if bottom <= slack || bottom <= 0.0 {
        None
    } else {
        Some(top / bottom)
    }
}
