//! Compressed sparse rows, ILU(0) and preconditioned BiCGSTAB.

use crate::error::{Error, Result};

/// Square CSR matrix with sorted column indices in each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col[r.clone()], &self.val[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    /// `alpha I + beta self` on the same pattern (the diagonal must be stored).
    pub fn shifted(&self, alpha: f64, beta: f64) -> Result<Csr> {
        let mut out = self.clone();
        for i in 0..self.n {
            let (c, _) = self.row(i);
            let d = c.binary_search(&i).map_err(|_| Error::Assembly(format!("row {i} has no diagonal entry")))?;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.val[k] *= beta;
            }
            out.val[self.row_ptr[i] + d] += alpha;
        }
        Ok(out)
    }
}

/// Incomplete LU factorisation with the sparsity of the input.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let n = a.n;
        let mut lu = a.clone();
        let mut diag = vec![0usize; n];
        for (i, d) in diag.iter_mut().enumerate() {
            let (c, _) = a.row(i);
            *d = a.row_ptr[i] + c.binary_search(&i).map_err(|_| Error::Assembly(format!("row {i} has no diagonal entry")))?;
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col[k]] = k;
            }
            for kk in start..diag[i] {
                let k = lu.col[kk];
                let pivot = lu.val[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::SolverDiverged { iterations: 0, residual: f64::INFINITY });
                }
                let lik = lu.val[kk] / pivot;
                lu.val[kk] = lik;
                for kj in diag[k] + 1..lu.row_ptr[k + 1] {
                    let p = pos[lu.col[kj]];
                    if p != usize::MAX {
                        lu.val[p] -= lik * lu.val[kj];
                    }
                }
            }
            for k in start..end {
                pos[lu.col[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// Solves `L U z = r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                s -= lu.val[k] * z[lu.col[k]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.val[k] * z[lu.col[k]];
            }
            z[i] = s / lu.val[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB; `x` holds the initial guess on entry.
pub fn bicgstab(a: &Csr, m: &Ilu0, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = norm(&r) / bn;
    if res <= rtol {
        return Ok(SolveStats { iterations: 0, residual: res });
    }
    let mut rhat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut sh = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&rhat, &r);
        if rho_new.abs() < 1e-300 {
            // Lost bi-orthogonality: restart from the current residual.
            rhat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(&p, &mut ph);
        a.matvec(&ph, &mut v);
        alpha = rho / dot(&rhat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn <= rtol {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return Ok(SolveStats { iterations: it, residual: norm(&s) / bn });
        }
        m.apply(&s, &mut sh);
        a.matvec(&sh, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bn;
        if !res.is_finite() {
            return Err(Error::SolverDiverged { iterations: it, residual: res });
        }
        if res <= rtol {
            return Ok(SolveStats { iterations: it, residual: res });
        }
    }
    Err(Error::SolverDiverged { iterations: max_iter, residual: res })
}
