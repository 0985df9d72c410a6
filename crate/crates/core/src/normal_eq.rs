//! Penalized normal equations for the subject-blocked designs.
//!
//! Coefficients split into at most two global ones (`mu`, `nu`) and at most
//! two local ones per subject (`alpha_i`, `theta_i`). The penalized cross
//! product `Z'Z + D` is then an arrowhead matrix: subject blocks couple only
//! through the globals. Eliminating the subject blocks first (Schur
//! complement on the globals) gives a block Cholesky factor in O(N).
//!
//! The response is centered at its grand mean before accumulation. The flat
//! intercept absorbs the shift, so marginal likelihoods are unchanged and the
//! residual sums of squares avoid cancellation on millisecond data.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{BlockLabel, DesignMatrix, GGroup};

type M2 = [[f64; 2]; 2];
type V2 = [f64; 2];

const Z2: M2 = [[0.0; 2]; 2];

#[derive(Debug, Clone)]
struct Cell {
    group: usize,
    gf: V2,
    lf: V2,
    n: f64,
    /// Centered cell mean.
    mean: f64,
    ss_within: f64,
}

/// Sufficient statistics of a design for all g-conditional computations.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub n_obs: usize,
    pub n_groups: usize,
    pub n_globals: usize,
    pub n_locals: usize,
    pub y_mean: f64,
    g_groups: Vec<GGroup>,
    /// Index into the g vector for each global / local coefficient.
    global_pen: [Option<usize>; 2],
    local_pen: [Option<usize>; 2],
    /// Design column index of each global coefficient and, for locals, of the
    /// first subject's column in the block.
    global_cols: [usize; 2],
    local_cols: [usize; 2],
    /// Local coefficient whose column, within a subject, equals the global's.
    global_map: [Option<usize>; 2],
    ggi: Vec<M2>,
    rgi: Vec<V2>,
    gl: Vec<M2>,
    ll: Vec<M2>,
    rl: Vec<V2>,
    cells: Vec<Cell>,
    ss_total: f64,
}

/// Coefficients in block form.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefs {
    pub global: V2,
    pub local: Vec<V2>,
}

impl BlockSystem {
    pub fn from_design(d: &DesignMatrix) -> Result<Self> {
        let n = d.n_rows;
        if n < 2 {
            return Err(Error::Design("need at least two observations".into()));
        }
        let g_groups = d.g_groups();
        let pen_of = |g: Option<GGroup>| g.map(|g| g_groups.iter().position(|&x| x == g).unwrap());

        let mut global_blocks = Vec::new();
        let mut local_blocks = Vec::new();
        let mut col = 0;
        for b in &d.blocks {
            match b.label {
                BlockLabel::Intercept | BlockLabel::CommonEffect => global_blocks.push((b, col)),
                BlockLabel::SubjectDev | BlockLabel::EffectDev => local_blocks.push((b, col)),
            }
            col += b.columns.ncols();
        }
        if global_blocks.first().map(|(b, _)| b.label) != Some(BlockLabel::Intercept) {
            return Err(Error::Design("design must start with an intercept".into()));
        }
        let subj = local_blocks
            .iter()
            .find(|(b, _)| b.label == BlockLabel::SubjectDev)
            .ok_or_else(|| Error::Design("design has no subject block".into()))?
            .0;

        let mut global_pen = [None; 2];
        let mut global_cols = [0; 2];
        for (k, (b, c)) in global_blocks.iter().enumerate() {
            global_pen[k] = pen_of(b.g_group);
            global_cols[k] = *c;
        }
        let mut local_pen = [None; 2];
        let mut local_cols = [0; 2];
        for (k, (b, c)) in local_blocks.iter().enumerate() {
            local_pen[k] = pen_of(b.g_group);
            local_cols[k] = *c;
        }

        let y_mean = d.response.mean();
        let ns = d.n_subjects;
        // Welford accumulation per cell.
        let mut index: HashMap<(usize, [u64; 4]), usize> = HashMap::new();
        let mut cells: Vec<Cell> = Vec::new();
        for r in 0..n {
            let i = (0..ns)
                .find(|&i| subj.columns[(r, i)] != 0.0)
                .ok_or_else(|| Error::Design(format!("row {} belongs to no subject", r + 1)))?;
            let mut gf = [0.0; 2];
            for (k, (b, _)) in global_blocks.iter().enumerate() {
                gf[k] = b.columns[(r, 0)];
            }
            let mut lf = [0.0; 2];
            for (k, (b, _)) in local_blocks.iter().enumerate() {
                lf[k] = b.columns[(r, i)];
            }
            let key = (i, [gf[0].to_bits(), gf[1].to_bits(), lf[0].to_bits(), lf[1].to_bits()]);
            let c = *index.entry(key).or_insert_with(|| {
                cells.push(Cell { group: i, gf, lf, n: 0.0, mean: 0.0, ss_within: 0.0 });
                cells.len() - 1
            });
            let y = d.response[r] - y_mean;
            let cell = &mut cells[c];
            cell.n += 1.0;
            let delta = y - cell.mean;
            cell.mean += delta / cell.n;
            cell.ss_within += delta * (y - cell.mean);
        }

        let (kg, kl) = (global_blocks.len(), local_blocks.len());
        let mut sys = BlockSystem {
            n_obs: n,
            n_groups: ns,
            n_globals: kg,
            n_locals: kl,
            y_mean,
            g_groups,
            global_pen,
            local_pen,
            global_cols,
            local_cols,
            global_map: [None; 2],
            ggi: vec![Z2; ns],
            rgi: vec![[0.0; 2]; ns],
            gl: vec![Z2; ns],
            ll: vec![Z2; ns],
            rl: vec![[0.0; 2]; ns],
            ss_total: 0.0,
            cells: Vec::new(),
        };
        for c in &cells {
            let s = c.n * c.mean;
            for a in 0..kg {
                sys.rgi[c.group][a] += c.gf[a] * s;
                for b in 0..kg {
                    sys.ggi[c.group][a][b] += c.n * c.gf[a] * c.gf[b];
                }
                for b in 0..kl {
                    sys.gl[c.group][a][b] += c.n * c.gf[a] * c.lf[b];
                }
            }
            for a in 0..kl {
                sys.rl[c.group][a] += c.lf[a] * s;
                for b in 0..kl {
                    sys.ll[c.group][a][b] += c.n * c.lf[a] * c.lf[b];
                }
            }
            sys.ss_total += c.ss_within + c.n * c.mean * c.mean;
        }
        for a in 0..kg {
            sys.global_map[a] = (0..kl).find(|&m| cells.iter().all(|c| c.gf[a] == c.lf[m]));
        }
        sys.cells = cells;
        Ok(sys)
    }

    pub fn g_groups(&self) -> &[GGroup] {
        &self.g_groups
    }

    /// Number of penalized coefficients in each g-group, aligned with [`Self::g_groups`].
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut k = vec![0; self.g_groups.len()];
        for p in self.global_pen.iter().take(self.n_globals).flatten() {
            k[*p] += 1;
        }
        for p in self.local_pen.iter().take(self.n_locals).flatten() {
            k[*p] += self.n_groups;
        }
        k
    }

    /// Centered total sum of squares `sum (y - ybar)^2`.
    pub fn ss_total(&self) -> f64 {
        self.ss_total
    }

    fn check_g(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.g_groups.len() {
            return Err(Error::Domain(format!(
                "expected {} g values ({:?}), got {}",
                self.g_groups.len(),
                self.g_groups,
                g.len()
            )));
        }
        if let Some(v) = g.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("g values must be positive, got {v}")));
        }
        Ok(())
    }

    /// Block Cholesky factor of `Z'Z + D(g)`, with `D` holding `1/g` on the
    /// penalized diagonal entries.
    pub fn factor(&self, g: &[f64]) -> Result<Factor<'_>> {
        self.check_g(g)?;
        let (kg, kl) = (self.n_globals, self.n_locals);
        let mut lpen = [0.0; 2];
        for a in 0..kl {
            lpen[a] = self.local_pen[a].map_or(0.0, |p| 1.0 / g[p]);
        }
        let mut schur = Z2;
        for a in 0..kg {
            schur[a][a] += self.global_pen[a].map_or(0.0, |p| 1.0 / g[p]);
        }
        let mut rg = [0.0; 2];

        let ns = self.n_groups;
        let mut lb = Vec::with_capacity(ns);
        let mut f = Vec::with_capacity(ns);
        let mut wl = Vec::with_capacity(ns);
        let mut log_det = 0.0;
        for i in 0..ns {
            let mut b = self.ll[i];
            for a in 0..kl {
                b[a][a] += lpen[a];
            }
            let l = chol(&b, kl).ok_or_else(|| Error::Numeric(format!("subject block {i} is not positive definite")))?;
            for a in 0..kl {
                log_det += 2.0 * l[a][a].ln();
            }
            // F = L^{-1} C', column per global.
            let mut fi = Z2;
            for gcol in 0..kg {
                let mut rhs = [0.0; 2];
                for a in 0..kl {
                    rhs[a] = self.gl[i][gcol][a];
                }
                let col = forward(&l, &rhs, kl);
                for a in 0..kl {
                    fi[a][gcol] = col[a];
                }
            }
            let w = forward(&l, &self.rl[i], kl);
            let (si, ri) = self.subject_reduction(i, &lpen);
            for a in 0..kg {
                for b2 in 0..kg {
                    schur[a][b2] += si[a][b2];
                }
                rg[a] += ri[a];
            }
            lb.push(l);
            f.push(fi);
            wl.push(w);
        }
        let ls = chol(&schur, kg).ok_or_else(|| Error::Numeric("global Schur complement is not positive definite".into()))?;
        for a in 0..kg {
            log_det += 2.0 * ls[a][a].ln();
        }
        let wg = forward(&ls, &rg, kg);
        Ok(Factor { sys: self, lb, f, ls, wl, wg, log_det })
    }

    /// Subject `i`'s share of the global Schur complement,
    /// `G_i - C_gl B^{-1} C_lg`, and of the reduced right-hand side.
    ///
    /// `B = C + D` is inverted through its adjugate with the determinant
    /// expanded in `D`. For a global whose column coincides with a local one
    /// within the subject, `I - C B^{-1} = D B^{-1}` removes the subtraction,
    /// which otherwise cancels catastrophically when `1/g` is tiny.
    fn subject_reduction(&self, i: usize, d: &V2) -> (M2, V2) {
        let (kg, kl) = (self.n_globals, self.n_locals);
        let c = &self.ll[i];
        let (adj, det_c, det_b) = if kl == 1 {
            ([[1.0, 0.0], [0.0, 0.0]], c[0][0], c[0][0] + d[0])
        } else {
            let det_c = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            (
                [[c[1][1] + d[1], -c[0][1]], [-c[1][0], c[0][0] + d[0]]],
                det_c,
                det_c + d[0] * c[1][1] + d[1] * c[0][0] + d[0] * d[1],
            )
        };
        // C adj(B) D, expanded.
        let cad = if kl == 1 {
            [[det_c * d[0], 0.0], [0.0, 0.0]]
        } else {
            [
                [(det_c + c[0][0] * d[1]) * d[0], c[0][1] * d[0] * d[1]],
                [c[1][0] * d[0] * d[1], (det_c + c[1][1] * d[0]) * d[1]],
            ]
        };
        let adj_times = |v: &V2| -> V2 {
            let mut out = [0.0; 2];
            for a in 0..kl {
                out[a] = (0..kl).map(|b| adj[a][b] * v[b]).sum();
            }
            out
        };
        let cross = |g: usize| -> V2 { self.gl[i][g] };
        let mut s = Z2;
        let mut r = [0.0; 2];
        for a in 0..kg {
            for b in 0..kg {
                s[a][b] = match (self.global_map[a], self.global_map[b]) {
                    (Some(p), Some(q)) => cad[p][q] / det_b,
                    (Some(p), None) => d[p] * adj_times(&cross(b))[p] / det_b,
                    (None, Some(q)) => d[q] * adj_times(&cross(a))[q] / det_b,
                    (None, None) => {
                        let v = adj_times(&cross(b));
                        self.ggi[i][a][b] - (0..kl).map(|e| cross(a)[e] * v[e]).sum::<f64>() / det_b
                    }
                };
            }
            r[a] = match self.global_map[a] {
                Some(p) => d[p] * adj_times(&self.rl[i])[p] / det_b,
                None => {
                    let v = adj_times(&self.rl[i]);
                    self.rgi[i][a] - (0..kl).map(|e| cross(a)[e] * v[e]).sum::<f64>() / det_b
                }
            };
        }
        (s, r)
    }

    /// Residual sum of squares `||y - Z b||^2` (b in centered coordinates).
    pub fn residual_ss(&self, b: &Coefs) -> f64 {
        self.cells
            .iter()
            .map(|c| {
                let pred: f64 = (0..self.n_globals).map(|a| c.gf[a] * b.global[a]).sum::<f64>()
                    + (0..self.n_locals).map(|a| c.lf[a] * b.local[c.group][a]).sum::<f64>();
                let d = c.mean - pred;
                c.ss_within + c.n * d * d
            })
            .sum()
    }

    /// Sum of squares of each g-group's coefficients, aligned with [`Self::g_groups`].
    pub fn group_sums_of_squares(&self, b: &Coefs) -> Vec<f64> {
        let mut out = vec![0.0; self.g_groups.len()];
        for a in 0..self.n_globals {
            if let Some(p) = self.global_pen[a] {
                out[p] += b.global[a] * b.global[a];
            }
        }
        for a in 0..self.n_locals {
            if let Some(p) = self.local_pen[a] {
                out[p] += b.local.iter().map(|v| v[a] * v[a]).sum::<f64>();
            }
        }
        out
    }

    /// Converts block coefficients (centered) to design column order on the
    /// original response scale.
    pub fn to_design_order(&self, b: &Coefs) -> Vec<f64> {
        let p = 1 + self.n_groups * self.n_locals + (self.n_globals - 1);
        let mut out = vec![0.0; p];
        for a in 0..self.n_globals {
            out[self.global_cols[a]] = b.global[a];
        }
        out[self.global_cols[0]] += self.y_mean;
        for a in 0..self.n_locals {
            for i in 0..self.n_groups {
                out[self.local_cols[a] + i] = b.local[i][a];
            }
        }
        out
    }
}

/// Block Cholesky factor `L` of `A = Z'Z + D`, together with `w = L^{-1} Z'y`.
pub struct Factor<'a> {
    sys: &'a BlockSystem,
    lb: Vec<M2>,
    f: Vec<M2>,
    ls: M2,
    wl: Vec<V2>,
    wg: V2,
    log_det: f64,
}

impl Factor<'_> {
    /// `log |Z'Z + D|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `y'y - y'Z A^{-1} Z'y` on the centered response.
    pub fn residual_quadratic(&self) -> f64 {
        let kg = self.sys.n_globals;
        let kl = self.sys.n_locals;
        let fit: f64 = self.wg[..kg].iter().map(|v| v * v).sum::<f64>()
            + self.wl.iter().map(|w| w[..kl].iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
        (self.sys.ss_total - fit).max(0.0)
    }

    /// Solves `L' x = v` for block vector `v`.
    fn back_substitute(&self, vg: &V2, vl: &[V2]) -> Coefs {
        let (kg, kl) = (self.sys.n_globals, self.sys.n_locals);
        let xg = backward(&self.ls, vg, kg);
        let local = (0..self.sys.n_groups)
            .map(|i| {
                let mut rhs = vl[i];
                for a in 0..kl {
                    rhs[a] -= (0..kg).map(|c| self.f[i][a][c] * xg[c]).sum::<f64>();
                }
                backward(&self.lb[i], &rhs, kl)
            })
            .collect();
        Coefs { global: xg, local }
    }

    /// Conditional mean `A^{-1} Z'y` (centered coordinates).
    pub fn mean(&self) -> Coefs {
        self.back_substitute(&self.wg, &self.wl)
    }

    /// Draws from `N(A^{-1} Z'y, scale^2 A^{-1})` given standard normal
    /// variates; `z` must hold `n_globals + n_groups * n_locals` values,
    /// globals first.
    pub fn draw(&self, scale: f64, z: &[f64]) -> Coefs {
        let (kg, kl) = (self.sys.n_globals, self.sys.n_locals);
        let mut vg = self.wg;
        for a in 0..kg {
            vg[a] += scale * z[a];
        }
        let vl: Vec<V2> = self
            .wl
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut v = *w;
                for a in 0..kl {
                    v[a] += scale * z[kg + i * kl + a];
                }
                v
            })
            .collect();
        self.back_substitute(&vg, &vl)
    }

    /// Dense `A^{-1}` in design column order. Only for testing and small designs.
    pub fn inverse_dense(&self) -> Vec<Vec<f64>> {
        let (kg, kl) = (self.sys.n_globals, self.sys.n_locals);
        let dim = kg + self.sys.n_groups * kl;
        // Columns of A^{-1} = L^{-T} L^{-1} e_j; with L^{-1} e_j via forward substitution.
        let mut cols = Vec::with_capacity(dim);
        for j in 0..dim {
            let (ug, ul) = self.forward_unit(j);
            let x = self.back_substitute(&ug, &ul);
            cols.push(self.sys.to_design_order_raw(&x));
        }
        let order = self.sys.block_to_design_index();
        let mut out = vec![vec![0.0; dim]; dim];
        for (j, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                out[r][order[j]] = *v;
            }
        }
        out
    }

    /// `L^{-1} e_j` for the block-ordered unit vector `e_j`.
    fn forward_unit(&self, j: usize) -> (V2, Vec<V2>) {
        let (kg, kl) = (self.sys.n_globals, self.sys.n_locals);
        let mut eg = [0.0; 2];
        let mut el = vec![[0.0; 2]; self.sys.n_groups];
        if j < kg {
            eg[j] = 1.0;
        } else {
            el[(j - kg) / kl][(j - kg) % kl] = 1.0;
        }
        let ul: Vec<V2> = (0..self.sys.n_groups).map(|i| forward(&self.lb[i], &el[i], kl)).collect();
        let mut rg = eg;
        for i in 0..self.sys.n_groups {
            for a in 0..kg {
                rg[a] -= (0..kl).map(|c| self.f[i][c][a] * ul[i][c]).sum::<f64>();
            }
        }
        (forward(&self.ls, &rg, kg), ul)
    }
}

impl BlockSystem {
    fn to_design_order_raw(&self, b: &Coefs) -> Vec<f64> {
        let mut v = self.to_design_order(b);
        v[self.global_cols[0]] -= self.y_mean;
        v
    }

    /// Design column index of each block-ordered coefficient (globals first).
    fn block_to_design_index(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.global_cols[..self.n_globals].to_vec();
        for i in 0..self.n_groups {
            for a in 0..self.n_locals {
                out.push(self.local_cols[a] + i);
            }
        }
        out
    }
}

fn chol(a: &M2, k: usize) -> Option<M2> {
    let mut l = Z2;
    match k {
        1 => {
            if !(a[0][0] > 0.0) {
                return None;
            }
            l[0][0] = a[0][0].sqrt();
        }
        2 => {
            if !(a[0][0] > 0.0) {
                return None;
            }
            l[0][0] = a[0][0].sqrt();
            l[1][0] = a[1][0] / l[0][0];
            let d = a[1][1] - l[1][0] * l[1][0];
            if !(d > 0.0) {
                return None;
            }
            l[1][1] = d.sqrt();
        }
        _ => unreachable!("block dimension {k}"),
    }
    Some(l)
}

fn forward(l: &M2, b: &V2, k: usize) -> V2 {
    let mut x = [0.0; 2];
    x[0] = b[0] / l[0][0];
    if k == 2 {
        x[1] = (b[1] - l[1][0] * x[0]) / l[1][1];
    }
    x
}

fn backward(l: &M2, b: &V2, k: usize) -> V2 {
    let mut x = [0.0; 2];
    if k == 2 {
        x[1] = b[1] / l[1][1];
        x[0] = (b[0] - l[1][0] * x[1]) / l[0][0];
    } else {
        x[0] = b[0] / l[0][0];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::TrialTable;
    use crate::model::{build_design, ModelKind};
    use nalgebra::{DMatrix, DVector};

    fn table() -> TrialTable {
        let ys = [
            ("a", 0, 512.0), ("a", 0, 480.0), ("a", 1, 560.0), ("a", 1, 590.0), ("a", 1, 541.0),
            ("b", 0, 430.0), ("b", 1, 470.0), ("b", 0, 455.0),
            ("c", 1, 702.0), ("c", 0, 640.0), ("c", 1, 655.0), ("c", 0, 610.0),
        ];
        TrialTable::from_triples(ys, ["x0", "x1"]).unwrap()
    }

    fn dense(d: &DesignMatrix, g: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let z = d.columns();
        let mut a = z.transpose() * &z;
        let groups = d.g_groups();
        for (j, grp) in d.column_groups().iter().enumerate() {
            if let Some(grp) = grp {
                a[(j, j)] += 1.0 / g[groups.iter().position(|x| x == grp).unwrap()];
            }
        }
        let rhs = z.transpose() * &d.response;
        (a, rhs)
    }

    #[test]
    fn block_route_matches_dense_route() {
        for kind in [ModelKind::Null, ModelKind::CommonEffect, ModelKind::Unconstrained] {
            let d = build_design(&table(), kind);
            let g: Vec<f64> = [0.7, 0.05, 0.3][..d.g_groups().len()].to_vec();
            let sys = BlockSystem::from_design(&d).unwrap();
            let f = sys.factor(&g).unwrap();
            let (a, rhs) = dense(&d, &g);
            let ch = a.clone().cholesky().unwrap();
            let mean = ch.solve(&rhs);
            let ld = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            assert!((f.log_det() - ld).abs() < 1e-9 * ld.abs().max(1.0), "{kind:?}");

            let got = sys.to_design_order(&f.mean());
            for (x, y) in got.iter().zip(mean.iter()) {
                assert!((x - y).abs() < 1e-8 * y.abs().max(1.0), "{kind:?}: {x} vs {y}");
            }
            let yty = d.response.dot(&d.response);
            let quad = yty - rhs.dot(&mean);
            assert!((f.residual_quadratic() - quad).abs() < 1e-7 * quad, "{kind:?}");

            let inv = ch.inverse();
            let ours = f.inverse_dense();
            for r in 0..inv.nrows() {
                for c in 0..inv.ncols() {
                    assert!((ours[r][c] - inv[(r, c)]).abs() < 1e-9 * inv[(r, c)].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn residual_ss_matches_direct() {
        let d = build_design(&table(), ModelKind::Unconstrained);
        let sys = BlockSystem::from_design(&d).unwrap();
        let b = Coefs { global: [3.0, 20.0], local: vec![[10.0, -4.0], [-60.0, 7.0], [90.0, 1.5]] };
        let beta = DVector::from_vec(sys.to_design_order(&b));
        let direct = (&d.response - d.columns() * beta).norm_squared();
        assert!((sys.residual_ss(&b) - direct).abs() < 1e-8 * direct);
        assert_eq!(sys.group_sizes(), vec![3, 1, 3]);
        let ss = sys.group_sums_of_squares(&b);
        assert_eq!(ss, vec![100.0 + 3600.0 + 8100.0, 400.0, 16.0 + 49.0 + 2.25]);
    }

    /// `-1/2 log|A| - 1/2 sum_k p_k ln g_k - (n-1)/2 ln S`, the g-dependent part of the marginal.
    fn log_m(sys: &BlockSystem, g: &[f64]) -> f64 {
        let f = sys.factor(g).unwrap();
        let p = sys.group_sizes();
        let pen: f64 = p.iter().zip(g).map(|(k, gk)| *k as f64 * gk.ln()).sum();
        -0.5 * f.log_det() - 0.5 * pen - 0.5 * (sys.n_obs as f64 - 1.0) * f.residual_quadratic().ln()
    }

    #[test]
    fn huge_g_follows_the_asymptote() {
        // The N subject columns span the flat intercept, so m(y|g) ~ g_alpha^{-(N-1)/2}.
        // The effect columns span nu, which keeps its own penalty: m(y|g) ~ g_delta^{-N/2}.
        let n = 3.0;
        for kind in [ModelKind::Null, ModelKind::CommonEffect, ModelKind::Unconstrained] {
            let d = build_design(&table(), kind);
            let sys = BlockSystem::from_design(&d).unwrap();
            let k = d.g_groups().len();
            for which in [0, k - 1] {
                if which == k - 1 && kind != ModelKind::Unconstrained {
                    continue;
                }
                let at = |v: f64| {
                    let mut g: Vec<f64> = [0.7, 0.05, 0.3][..k].to_vec();
                    g[which] = v;
                    log_m(&sys, &g)
                };
                for (lo, hi) in [(1e10, 1e12), (1e14, 1e16), (1e18, 1e20)] {
                    let slope = (at(hi) - at(lo)) / (hi / lo as f64).ln();
                    let want = if which == 0 { -0.5 * (n - 1.0) } else { -0.5 * n };
                    assert!((slope - want).abs() < 1e-3, "{kind:?} g[{which}] in ({lo}, {hi}): {slope}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_g() {
        let d = build_design(&table(), ModelKind::Null);
        let sys = BlockSystem::from_design(&d).unwrap();
        assert!(sys.factor(&[0.0]).is_err());
        assert!(sys.factor(&[1.0, 1.0]).is_err());
    }
}
