//! Reference solvers for the general discrete transport problem over an
//! arbitrary ground matrix: an exact network simplex and the entropic
//! (Sinkhorn) approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_metric::GroundMatrix;
use crate::histogram::Histogram;

/// Flows `W[i][j]` of mass from source bin `i` to target bin `j`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransportPlan {
    n: usize,
    flows: Vec<f64>,
}

impl TransportPlan {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.flows[i * self.n + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.flows.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for row in self.flows.chunks(self.n) {
            out.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.flows.iter().sum()
    }

    pub fn cost(&self, d: &GroundMatrix) -> f64 {
        let mut c = 0.0;
        for i in 0..self.n {
            for (w, dij) in self.flows[i * self.n..(i + 1) * self.n].iter().zip(d.row(i)) {
                c += w * dij;
            }
        }
        c
    }

    /// Checks non-negativity and the marginal constraints within `tol`.
    pub fn check_marginals(&self, s: &[f64], t: &[f64], tol: f64) -> bool {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let target = s.iter().sum::<f64>().min(t.iter().sum::<f64>());
        self.flows.iter().all(|&w| w >= 0.0)
            && rows.iter().zip(s).all(|(r, si)| *r <= si + tol)
            && cols.iter().zip(t).all(|(c, tj)| *c <= tj + tol)
            && (self.total() - target).abs() <= tol
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut flows = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::LengthMismatch(n, row.len()));
            }
            flows.extend_from_slice(row);
        }
        Ok(Self { n, flows })
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.flows.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransportPlan {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<TransportPlan> for Vec<Vec<f64>> {
    fn from(p: TransportPlan) -> Self {
        p.rows()
    }
}

/// Exact solution of a transport problem with its dual certificate.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub cost: f64,
    pub plan: TransportPlan,
    /// Source potentials `u`, with `u[i] + v[j] <= D[i][j]`.
    pub source_potentials: Vec<f64>,
    /// Target potentials `v`.
    pub target_potentials: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    /// Dual objective `sum s*u + sum t*v`; equals the primal cost at optimum
    /// for balanced marginals.
    pub fn dual_objective(&self, s: &[f64], t: &[f64]) -> f64 {
        let a: f64 = s.iter().zip(&self.source_potentials).map(|(x, u)| x * u).sum();
        let b: f64 = t.iter().zip(&self.target_potentials).map(|(x, v)| x * v).sum();
        a + b
    }
}

/// Exact minimum-cost transport between `s` and `t` under ground matrix `d`.
pub fn lp_exact(s: &Histogram, t: &Histogram, d: &GroundMatrix) -> Result<LpSolution> {
    let n = s.check_same_len(t)?;
    if d.n() != n {
        return Err(Error::LengthMismatch(n, d.n()));
    }
    transport_simplex(s.values(), t.values(), d)
}

/// Flows below this are treated as exact zeros inside the simplex.
const FLOW_SNAP: f64 = 1e-15;

/// Primal network simplex on the bipartite transport graph, started from an
/// all-artificial strongly feasible tree. Pivots use block-search pricing and
/// the strongly-feasible leaving-arc rule, so the pivot sequence is fully
/// determined by the input.
struct NetworkSimplex {
    src: Vec<usize>,
    dst: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    root: usize,
    parent: Vec<usize>,
    pred: Vec<usize>,
    // pred arc points from the node to its parent
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
    eps: f64,
    block: usize,
    next_arc: usize,
}

impl NetworkSimplex {
    fn new(supply: &[f64], mut arcs: Vec<(usize, usize, f64)>, max_cost: f64) -> Self {
        let n_nodes = supply.len() + 1;
        let root = supply.len();
        let art_cost = (max_cost + 1.0) * n_nodes as f64;
        let mut parent = vec![root; n_nodes];
        let mut pred = vec![usize::MAX; n_nodes];
        let mut up = vec![false; n_nodes];
        let mut init_flow = Vec::with_capacity(supply.len());
        let n_real = arcs.len();
        for (v, &b) in supply.iter().enumerate() {
            pred[v] = arcs.len();
            if b > 0.0 {
                arcs.push((v, root, art_cost));
                up[v] = true;
                init_flow.push(b);
            } else {
                arcs.push((root, v, art_cost));
                init_flow.push(-b);
            }
        }
        parent[root] = usize::MAX;
        let n_arcs = arcs.len();
        let mut flow = vec![0.0; n_arcs];
        flow[n_real..].copy_from_slice(&init_flow);
        let mut in_tree = vec![false; n_arcs];
        in_tree[n_real..].iter_mut().for_each(|x| *x = true);
        let (src, dst, cost) = arcs.into_iter().fold(
            (Vec::with_capacity(n_arcs), Vec::with_capacity(n_arcs), Vec::with_capacity(n_arcs)),
            |(mut s, mut d, mut c), (a, b, w)| {
                s.push(a);
                d.push(b);
                c.push(w);
                (s, d, c)
            },
        );
        let block = ((n_arcs as f64).sqrt() as usize).max(10);
        let mut ns = Self {
            src,
            dst,
            cost,
            flow,
            in_tree,
            root,
            parent,
            pred,
            up,
            depth: vec![0; n_nodes],
            pi: vec![0.0; n_nodes],
            children: vec![Vec::new(); n_nodes],
            eps: 1e-14 * art_cost + 1e-12 * max_cost.max(1.0),
            block,
            next_arc: 0,
        };
        ns.rebuild();
        ns
    }

    fn reduced_cost(&self, a: usize) -> f64 {
        self.cost[a] + self.pi[self.src[a]] - self.pi[self.dst[a]]
    }

    /// Recomputes depths and potentials from the parent pointers.
    fn rebuild(&mut self) {
        self.children.iter_mut().for_each(Vec::clear);
        for v in 0..self.parent.len() {
            if v != self.root {
                self.children[self.parent[v]].push(v);
            }
        }
        let mut stack = vec![self.root];
        self.pi[self.root] = 0.0;
        self.depth[self.root] = 0;
        while let Some(p) = stack.pop() {
            for k in 0..self.children[p].len() {
                let c = self.children[p][k];
                let a = self.pred[c];
                self.pi[c] = if self.up[c] {
                    self.pi[p] - self.cost[a]
                } else {
                    self.pi[p] + self.cost[a]
                };
                self.depth[c] = self.depth[p] + 1;
                stack.push(c);
            }
        }
    }

    fn find_entering(&mut self) -> Option<usize> {
        let m = self.cost.len();
        let mut best = None;
        let mut best_rc = -self.eps;
        let mut scanned = 0;
        let mut a = self.next_arc;
        while scanned < m {
            let end = (scanned + self.block).min(m);
            while scanned < end {
                if !self.in_tree[a] {
                    let rc = self.reduced_cost(a);
                    if rc < best_rc {
                        best_rc = rc;
                        best = Some(a);
                    }
                }
                a += 1;
                if a == m {
                    a = 0;
                }
                scanned += 1;
            }
            if best.is_some() {
                self.next_arc = a;
                return best;
            }
        }
        None
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let u = self.src[entering];
        let v = self.dst[entering];
        let (mut a, mut b) = (u, v);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        let mut delta = f64::INFINITY;
        let mut leave_node = usize::MAX;
        let mut side = 0;
        let mut x = u;
        while x != join {
            if self.up[x] && self.flow[self.pred[x]] < delta {
                delta = self.flow[self.pred[x]];
                leave_node = x;
                side = 1;
            }
            x = self.parent[x];
        }
        let mut x = v;
        while x != join {
            if !self.up[x] && self.flow[self.pred[x]] <= delta {
                delta = self.flow[self.pred[x]];
                leave_node = x;
                side = 2;
            }
            x = self.parent[x];
        }
        if side == 0 {
            return Err(Error::NumericalFailure("unbounded pivot cycle".into()));
        }

        if delta > 0.0 {
            self.flow[entering] += delta;
            let mut x = u;
            while x != join {
                let e = self.pred[x];
                self.flow[e] += if self.up[x] { -delta } else { delta };
                if self.flow[e] < FLOW_SNAP {
                    self.flow[e] = 0.0;
                }
                x = self.parent[x];
            }
            let mut x = v;
            while x != join {
                let e = self.pred[x];
                self.flow[e] += if self.up[x] { delta } else { -delta };
                if self.flow[e] < FLOW_SNAP {
                    self.flow[e] = 0.0;
                }
                x = self.parent[x];
            }
        }
        // the exact blocking arc leaves at zero flow
        let leaving = self.pred[leave_node];
        self.flow[leaving] = 0.0;
        self.in_tree[leaving] = false;
        self.in_tree[entering] = true;

        // re-hang the detached subtree from the entering arc
        let (mut x, mut new_parent, mut new_up) = if side == 1 { (u, v, true) } else { (v, u, false) };
        let mut new_pred = entering;
        loop {
            let old_parent = self.parent[x];
            let old_pred = self.pred[x];
            let old_up = self.up[x];
            self.parent[x] = new_parent;
            self.pred[x] = new_pred;
            self.up[x] = new_up;
            if x == leave_node {
                break;
            }
            new_parent = x;
            new_pred = old_pred;
            new_up = !old_up;
            x = old_parent;
        }
        self.rebuild();
        Ok(())
    }

    fn run(&mut self, max_pivots: usize) -> Result<usize> {
        let mut pivots = 0;
        while let Some(a) = self.find_entering() {
            self.pivot(a)?;
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::NumericalFailure(format!(
                    "network simplex exceeded {max_pivots} pivots"
                )));
            }
        }
        Ok(pivots)
    }
}

fn transport_simplex(s: &[f64], t: &[f64], d: &GroundMatrix) -> Result<LpSolution> {
    let n = s.len();
    for i in 0..n {
        for (j, &w) in d.row(i).iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::BadParameter(format!("ground cost D[{i}][{j}] = {w}")));
            }
        }
    }
    let s_total: f64 = s.iter().sum();
    let t_total: f64 = t.iter().sum();
    let mut supply: Vec<f64> = s.iter().copied().chain(t.iter().map(|x| -x)).collect();
    let mut arcs = Vec::with_capacity(n * n + n);
    for i in 0..n {
        for j in 0..n {
            arcs.push((i, n + j, d.get(i, j)));
        }
    }
    // unequal totals: a zero-cost slack node absorbs or supplies the excess
    let excess = s_total - t_total;
    if excess.abs() > 1e-15 {
        let slack = 2 * n;
        supply.push(-excess);
        for k in 0..n {
            if excess > 0.0 {
                arcs.push((k, slack, 0.0));
            } else {
                arcs.push((slack, n + k, 0.0));
            }
        }
    }
    let n_real = arcs.len();
    let max_cost = d.max();
    let mut ns = NetworkSimplex::new(&supply, arcs, max_cost);
    let max_pivots = 50 * ns.cost.len() + 1000;
    let pivots = ns.run(max_pivots)?;

    let art_flow: f64 = ns.flow[n_real..].iter().sum();
    if art_flow > 1e-9 {
        return Err(Error::NumericalFailure(format!(
            "artificial flow {art_flow:e} left in final tree"
        )));
    }
    let flows = ns.flow[..n * n].to_vec();
    let plan = TransportPlan { n, flows };
    let cost = plan.cost(d);
    let source_potentials = (0..n).map(|i| -ns.pi[i]).collect();
    let target_potentials = (0..n).map(|j| ns.pi[n + j]).collect();
    Ok(LpSolution {
        cost,
        plan,
        source_potentials,
        target_potentials,
        pivots,
    })
}

/// Parameters of the entropic approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic regularization; `None` means `0.01 * max(D)`.
    pub reg: Option<f64>,
    pub max_iters: usize,
    /// Stop once the l1 marginal violation drops below this.
    pub tol: f64,
    /// Mass added to every bin before renormalizing.
    pub floor: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            reg: None,
            max_iters: 10_000,
            tol: 1e-9,
            floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub cost: f64,
    pub plan: TransportPlan,
    pub iterations: usize,
    pub violation: f64,
    /// l1 marginal violation measured at the start of each iteration.
    pub violation_history: Vec<f64>,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Row and column log-sum-exps of `kernel + potential`.
///
/// When no kernel entry underflows, `exp(kernel)` is precomputed and each
/// reduction becomes a matrix-vector product against `exp(potential - max)`;
/// the largest term is then at least the smallest kernel entry, so the sum
/// stays positive. Otherwise every entry is exponentiated per call.
struct KernelLse<'a> {
    n: usize,
    kernel: &'a [f64],
    kernel_t: &'a [f64],
    dense: Option<(Vec<f64>, Vec<f64>)>,
}

// exp(-700) ~ 1e-304, comfortably above the subnormal range
const DENSE_KERNEL_FLOOR: f64 = -700.0;

impl<'a> KernelLse<'a> {
    fn new(kernel: &'a [f64], kernel_t: &'a [f64], n: usize) -> Self {
        let lowest = kernel.iter().copied().fold(f64::INFINITY, f64::min);
        let dense = (lowest > DENSE_KERNEL_FLOOR).then(|| {
            (
                kernel.iter().map(|k| k.exp()).collect(),
                kernel_t.iter().map(|k| k.exp()).collect(),
            )
        });
        Self { n, kernel, kernel_t, dense }
    }

    fn rows(&self, pot: &[f64], out: &mut [f64]) {
        self.reduce(self.kernel, self.dense.as_ref().map(|d| &d.0[..]), pot, out)
    }

    fn cols(&self, pot: &[f64], out: &mut [f64]) {
        self.reduce(self.kernel_t, self.dense.as_ref().map(|d| &d.1[..]), pot, out)
    }

    fn reduce(&self, logk: &[f64], expk: Option<&[f64]>, pot: &[f64], out: &mut [f64]) {
        let n = self.n;
        match expk {
            Some(expk) => {
                let m = pot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let scaled: Vec<f64> = pot.iter().map(|p| (p - m).exp()).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &expk[i * n..(i + 1) * n];
                    let sum: f64 = row.iter().zip(&scaled).map(|(k, e)| k * e).sum();
                    *o = m + sum.ln();
                }
            }
            None => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &logk[i * n..(i + 1) * n];
                    *o = log_sum_exp(row.iter().zip(pot).map(|(k, p)| k + p));
                }
            }
        }
    }
}

fn floored(h: &[f64], floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = h.iter().map(|x| x + floor).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Entropically regularized transport cost `<D, W_reg>`, iterated in the log
/// domain until the marginal violation is below `cfg.tol`.
pub fn sinkhorn_approx(
    s: &Histogram,
    t: &Histogram,
    d: &GroundMatrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornResult> {
    let n = s.check_same_len(t)?;
    if d.n() != n {
        return Err(Error::LengthMismatch(n, d.n()));
    }
    let reg = match cfg.reg {
        Some(r) => r,
        None => 0.01 * d.max(),
    };
    if !(reg.is_finite() && reg > 0.0) {
        return Err(Error::BadParameter(format!("regularization {reg} must be > 0")));
    }
    if !(cfg.tol > 0.0) || !(cfg.floor >= 0.0) {
        return Err(Error::BadParameter("tol must be > 0 and floor >= 0".into()));
    }
    let a = floored(s.values(), cfg.floor);
    let b = floored(t.values(), cfg.floor);
    if a.iter().chain(&b).any(|&x| x <= 0.0) {
        return Err(Error::BadParameter("marginals must be positive after flooring".into()));
    }
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let kernel: Vec<f64> = (0..n)
        .flat_map(|i| d.row(i).iter().map(move |c| -c / reg))
        .collect();
    let kernel_t: Vec<f64> = (0..n)
        .flat_map(|j| (0..n).map(|i| kernel[i * n + j]).collect::<Vec<_>>())
        .collect();
    let lse = KernelLse::new(&kernel, &kernel_t, n);

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut lse_row = vec![0.0; n];
    let mut lse_col = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut violation;
    loop {
        lse.rows(&g, &mut lse_row);
        violation = (0..n).map(|i| ((f[i] + lse_row[i]).exp() - a[i]).abs()).sum::<f64>();
        if !violation.is_finite() {
            return Err(Error::NumericalFailure("sinkhorn produced non-finite scalings".into()));
        }
        history.push(violation);
        if violation < cfg.tol || iterations >= cfg.max_iters {
            break;
        }
        for i in 0..n {
            f[i] = log_a[i] - lse_row[i];
        }
        lse.cols(&f, &mut lse_col);
        for j in 0..n {
            g[j] = log_b[j] - lse_col[j];
        }
        iterations += 1;
    }
    if violation >= cfg.tol {
        return Err(Error::NotConverged {
            violation,
            iters: iterations,
        });
    }
    let mut flows = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            flows[i * n + j] = (f[i] + kernel[i * n + j] + g[j]).exp();
        }
    }
    let plan = TransportPlan { n, flows };
    Ok(SinkhornResult {
        cost: plan.cost(d),
        plan,
        iterations,
        violation,
        violation_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_kernel_reduction_matches_log_sum_exp() {
        let n = 7;
        let kernel: Vec<f64> = (0..n * n).map(|k| -((k * 37 % 101) as f64) * 0.9).collect();
        let kernel_t: Vec<f64> = (0..n * n).map(|k| kernel[(k % n) * n + k / n]).collect();
        let pot: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin() * 40.0).collect();
        let dense = KernelLse::new(&kernel, &kernel_t, n);
        assert!(dense.dense.is_some());
        let plain = KernelLse { dense: None, ..KernelLse::new(&kernel, &kernel_t, n) };
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        let close = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs().max(1.0))
        };
        dense.rows(&pot, &mut a);
        plain.rows(&pot, &mut b);
        assert!(close(&a, &b), "{a:?} vs {b:?}");
        dense.cols(&pot, &mut a);
        plain.cols(&pot, &mut b);
        assert!(close(&a, &b), "{a:?} vs {b:?}");
        let deep: Vec<f64> = kernel.iter().map(|k| k * 10.0).collect();
        assert!(KernelLse::new(&deep, &deep, n).dense.is_none());
    }
}
