//! A small reverse-mode tape over dense row-major tensors.
//!
//! Tensors carry an explicit shape; most ops treat every dimension but the
//! last as a flat batch. Elementwise functions with known partials (the
//! activations and the bounding-line coefficients) enter through
//! [`Tape::local`], so the tape itself stays free of activation logic.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dot, gemm_nn, gemm_nt, gemm_tn};
use crate::math::{exp, ln, sqrt};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `a (n x k) * b (k x m)`, or `b^T` with `b` stored `(m x k)`.
    MatMul { a: Var, b: Var, trans_b: bool },
    /// `a (.. x c) + b (c)`.
    AddBias { a: Var, b: Var },
    /// `a (c)` repeated `n` times.
    BroadcastRows { a: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Abs(Var),
    PosPart(Var),
    NegPart(Var),
    /// Elementwise function of same-shaped inputs with known partials.
    Local(Vec<(Var, Vec<f64>)>),
    /// `out[b, i] = sum_j lam[b, i, j] * v[b, j]`.
    BatchRowDot { lam: Var, v: Var },
    /// `out[b, i, j] = lam[b, i, j] * s[b, j]`.
    MulBcast { lam: Var, s: Var },
    /// `out[b, i, :] = w[y_b, :] - w[i, :]`.
    GatherMargin { w: Var, labels: Vec<usize> },
    /// Euclidean norm over the last dimension.
    Norm2Last(Var),
    /// Mean cross-entropy of rows of logits.
    CrossEntropyMean { logits: Var, labels: Vec<usize> },
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
}

/// Records values and their dependencies; [`Tape::backward`] returns the
/// gradient of a scalar node with respect to every node.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn last(shape: &[usize]) -> usize {
    *shape.last().unwrap_or(&1)
}

fn lead(shape: &[usize]) -> usize {
    shape[..shape.len().saturating_sub(1)].iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node { value, shape, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// An input or parameter.
    pub fn leaf(&mut self, value: Vec<f64>, shape: &[usize]) -> Var {
        assert_eq!(value.len(), shape.iter().product::<usize>(), "leaf shape");
        self.push(value, shape.to_vec(), Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b));
        assert_eq!(sb.len(), 2, "matmul rhs must be a matrix");
        let (n, k) = (lead(&sa), last(&sa));
        let (m, kb) = if trans_b { (sb[0], sb[1]) } else { (sb[1], sb[0]) };
        assert_eq!(k, kb, "matmul inner dimension");
        let mut out = vec![0.0; n * m];
        if trans_b {
            gemm_nt(self.value(a), self.value(b), &mut out, n, k, m);
        } else {
            gemm_nn(self.value(a), self.value(b), &mut out, n, k, m);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = m;
        self.push(out, shape, Op::MatMul { a, b, trans_b })
    }

    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let c = last(self.shape(a));
        assert_eq!(self.value(b).len(), c, "bias width");
        let bv = self.value(b);
        let out: Vec<f64> = self.value(a).chunks(c).flat_map(|row| row.iter().zip(bv).map(|(x, y)| x + y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::AddBias { a, b })
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let c = self.value(a).len();
        let out = self.value(a).repeat(n);
        self.push(out, vec![n, c], Op::BroadcastRows { a })
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(out, shape, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(out, shape, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, f64::abs, Op::Abs(a))
    }

    pub fn pos_part(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::PosPart(a))
    }

    pub fn neg_part(&mut self, a: Var) -> Var {
        self.map(a, |x| x.min(0.0), Op::NegPart(a))
    }

    /// A node whose value is `value` and whose elementwise partial with
    /// respect to `inputs[j].0` is `inputs[j].1`.
    pub fn local(&mut self, value: Vec<f64>, inputs: Vec<(Var, Vec<f64>)>) -> Var {
        let shape = self.shape(inputs[0].0).to_vec();
        for (v, p) in &inputs {
            assert_eq!(self.shape(*v), &shape[..], "local input shape");
            assert_eq!(p.len(), value.len(), "local partial length");
        }
        self.push(value, shape, Op::Local(inputs))
    }

    pub fn batch_row_dot(&mut self, lam: Var, v: Var) -> Var {
        let (sl, sv) = (self.shape(lam).to_vec(), self.shape(v));
        assert!(sl.len() == 3 && sv.len() == 2 && sl[0] == sv[0] && sl[2] == sv[1], "batch_row_dot shapes");
        let (b, c, n) = (sl[0], sl[1], sl[2]);
        let (lv, vv) = (self.value(lam), self.value(v));
        let mut out = vec![0.0; b * c];
        for bi in 0..b {
            let vrow = &vv[bi * n..(bi + 1) * n];
            for i in 0..c {
                let at = (bi * c + i) * n;
                out[bi * c + i] = dot(&lv[at..at + n], vrow);
            }
        }
        self.push(out, vec![b, c], Op::BatchRowDot { lam, v })
    }

    pub fn mul_bcast(&mut self, lam: Var, s: Var) -> Var {
        let (sl, ss) = (self.shape(lam).to_vec(), self.shape(s));
        assert!(sl.len() == 3 && ss.len() == 2 && sl[0] == ss[0] && sl[2] == ss[1], "mul_bcast shapes");
        let (c, n) = (sl[1], sl[2]);
        let sv = self.value(s);
        let out = self
            .value(lam)
            .chunks(n)
            .enumerate()
            .flat_map(|(row, lrow)| {
                let srow = &sv[(row / c) * n..(row / c + 1) * n];
                lrow.iter().zip(srow).map(|(a, b)| a * b)
            })
            .collect();
        self.push(out, sl, Op::MulBcast { lam, s })
    }

    pub fn gather_margin(&mut self, w: Var, labels: &[usize]) -> Var {
        let sw = self.shape(w).to_vec();
        assert_eq!(sw.len(), 2, "gather_margin needs a matrix");
        let (c, n) = (sw[0], sw[1]);
        let wv = self.value(w);
        let mut out = Vec::with_capacity(labels.len() * c * n);
        for &y in labels {
            assert!(y < c, "label out of range");
            let wy = &wv[y * n..(y + 1) * n];
            for i in 0..c {
                out.extend(wy.iter().zip(&wv[i * n..(i + 1) * n]).map(|(a, b)| a - b));
            }
        }
        self.push(out, vec![labels.len(), c, n], Op::GatherMargin { w, labels: labels.to_vec() })
    }

    pub fn norm2_last(&mut self, a: Var) -> Var {
        let s = self.shape(a).to_vec();
        let c = last(&s);
        let out = self.value(a).chunks(c).map(|r| sqrt(dot(r, r))).collect();
        self.push(out, s[..s.len() - 1].to_vec(), Op::Norm2Last(a))
    }

    pub fn cross_entropy_mean(&mut self, logits: Var, labels: &[usize]) -> Var {
        let c = last(self.shape(logits));
        assert_eq!(lead(self.shape(logits)), labels.len(), "one label per row");
        let total: f64 = self
            .value(logits)
            .chunks(c)
            .zip(labels)
            .map(|(row, &y)| crate::math::cross_entropy(row, y))
            .sum();
        let out = vec![total / labels.len() as f64];
        self.push(out, vec![], Op::CrossEntropyMean { logits, labels: labels.to_vec() })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        assert_eq!(shape.iter().product::<usize>(), self.value(a).len(), "reshape size");
        let v = self.value(a).to_vec();
        self.push(v, shape.to_vec(), Op::Reshape(a))
    }

    /// Gradients of the scalar `root` with respect to every node; entries of
    /// nodes that do not influence `root` are `None`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar");
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        g[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(go) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    g[idx] = Some(go);
                    continue;
                }
                Op::MatMul { a, b, trans_b } => {
                    let sa = self.shape(*a);
                    let (n, k) = (lead(sa), last(sa));
                    let m = last(&node.shape);
                    let mut ga = vec![0.0; n * k];
                    let mut gb = vec![0.0; k * m];
                    if *trans_b {
                        // out = a b^T: ga = go b, gb = go^T a.
                        gemm_nn(&go, self.value(*b), &mut ga, n, m, k);
                        gemm_tn(&go, self.value(*a), &mut gb, m, n, k);
                    } else {
                        // out = a b: ga = go b^T, gb = a^T go.
                        gemm_nt(&go, self.value(*b), &mut ga, n, m, k);
                        gemm_tn(self.value(*a), &go, &mut gb, k, n, m);
                    }
                    acc(&mut g, *a, ga);
                    acc(&mut g, *b, gb);
                }
                Op::AddBias { a, b } => {
                    let c = self.value(*b).len();
                    let mut gb = vec![0.0; c];
                    for row in go.chunks(c) {
                        for (x, y) in gb.iter_mut().zip(row) {
                            *x += y;
                        }
                    }
                    acc(&mut g, *b, gb);
                    acc(&mut g, *a, go);
                }
                Op::BroadcastRows { a } => {
                    let c = self.value(*a).len();
                    let mut ga = vec![0.0; c];
                    for row in go.chunks(c) {
                        for (x, y) in ga.iter_mut().zip(row) {
                            *x += y;
                        }
                    }
                    acc(&mut g, *a, ga);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *b, go.clone());
                    acc(&mut g, *a, go);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *b, go.iter().map(|x| -x).collect());
                    acc(&mut g, *a, go);
                }
                Op::Scale(a, c) => acc(&mut g, *a, go.iter().map(|x| c * x).collect()),
                Op::Abs(a) => {
                    let gv = go.iter().zip(self.value(*a)).map(|(x, &v)| if v > 0.0 { *x } else if v < 0.0 { -x } else { 0.0 });
                    acc(&mut g, *a, gv.collect());
                }
                Op::PosPart(a) => {
                    let gv = go.iter().zip(self.value(*a)).map(|(x, &v)| if v > 0.0 { *x } else { 0.0 });
                    acc(&mut g, *a, gv.collect());
                }
                Op::NegPart(a) => {
                    let gv = go.iter().zip(self.value(*a)).map(|(x, &v)| if v < 0.0 { *x } else { 0.0 });
                    acc(&mut g, *a, gv.collect());
                }
                Op::Local(inputs) => {
                    for (v, p) in inputs {
                        acc(&mut g, *v, go.iter().zip(p).map(|(x, y)| x * y).collect());
                    }
                }
                Op::BatchRowDot { lam, v } => {
                    let s = self.shape(*lam);
                    let (b, c, n) = (s[0], s[1], s[2]);
                    let (lv, vv) = (self.value(*lam), self.value(*v));
                    let mut gl = vec![0.0; b * c * n];
                    let mut gv = vec![0.0; b * n];
                    for bi in 0..b {
                        for i in 0..c {
                            let gi = go[bi * c + i];
                            if gi == 0.0 {
                                continue;
                            }
                            let at = (bi * c + i) * n;
                            for j in 0..n {
                                gl[at + j] = gi * vv[bi * n + j];
                                gv[bi * n + j] += gi * lv[at + j];
                            }
                        }
                    }
                    acc(&mut g, *lam, gl);
                    acc(&mut g, *v, gv);
                }
                Op::MulBcast { lam, s } => {
                    let sh = self.shape(*lam);
                    let (c, n) = (sh[1], sh[2]);
                    let (lv, sv) = (self.value(*lam), self.value(*s));
                    let mut gl = vec![0.0; go.len()];
                    let mut gs = vec![0.0; sv.len()];
                    for (row, grow) in go.chunks(n).enumerate() {
                        let bi = row / c;
                        for j in 0..n {
                            gl[row * n + j] = grow[j] * sv[bi * n + j];
                            gs[bi * n + j] += grow[j] * lv[row * n + j];
                        }
                    }
                    acc(&mut g, *lam, gl);
                    acc(&mut g, *s, gs);
                }
                Op::GatherMargin { w, labels } => {
                    let sw = self.shape(*w);
                    let (c, n) = (sw[0], sw[1]);
                    let mut gw = vec![0.0; c * n];
                    for (bi, &y) in labels.iter().enumerate() {
                        for i in 0..c {
                            let at = (bi * c + i) * n;
                            for j in 0..n {
                                gw[y * n + j] += go[at + j];
                                gw[i * n + j] -= go[at + j];
                            }
                        }
                    }
                    acc(&mut g, *w, gw);
                }
                Op::Norm2Last(a) => {
                    let c = last(self.shape(*a));
                    let av = self.value(*a);
                    let mut ga = vec![0.0; av.len()];
                    for (row, (&gi, &ni)) in go.iter().zip(&node.value).enumerate() {
                        if ni > 0.0 {
                            for j in 0..c {
                                ga[row * c + j] = gi * av[row * c + j] / ni;
                            }
                        }
                    }
                    acc(&mut g, *a, ga);
                }
                Op::CrossEntropyMean { logits, labels } => {
                    let c = last(self.shape(*logits));
                    let scale = go[0] / labels.len() as f64;
                    let mut gl = Vec::with_capacity(self.value(*logits).len());
                    for (row, &y) in self.value(*logits).chunks(c).zip(labels) {
                        let lse = log_sum_exp(row);
                        gl.extend(row.iter().enumerate().map(|(i, &z)| scale * (exp(z - lse) - if i == y { 1.0 } else { 0.0 })));
                    }
                    acc(&mut g, *logits, gl);
                }
                Op::Reshape(a) => acc(&mut g, *a, go),
            }
        }
        Gradients { grads: g }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + ln(v.iter().map(|&x| exp(x - max)).sum::<f64>())
}

fn acc(g: &mut [Option<Vec<f64>>], v: Var, add: Vec<f64>) {
    match &mut g[v.0] {
        Some(cur) => {
            for (c, a) in cur.iter_mut().zip(&add) {
                *c += a;
            }
        }
        slot @ None => *slot = Some(add),
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf; zeros if the root does not depend on it.
    pub fn of(&self, tape: &Tape, v: Var) -> Vec<f64> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            _ => vec![0.0; tape.value(v).len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of `build` at every leaf entry.
    fn check(leaves: &[(Vec<f64>, Vec<usize>)], build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|(v, s)| tape.leaf(v.clone(), s)).collect();
        let root = build(&mut tape, &vars);
        let grads = tape.backward(root);
        let eval = |vals: &[(Vec<f64>, Vec<usize>)]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = vals.iter().map(|(v, s)| t.leaf(v.clone(), s)).collect();
            let r = build(&mut t, &vs);
            t.value(r)[0]
        };
        let h = 1e-6;
        for (li, var) in vars.iter().enumerate() {
            let analytic = grads.of(&tape, *var);
            for j in 0..leaves[li].0.len() {
                let mut plus = leaves.to_vec();
                plus[li].0[j] += h;
                let mut minus = leaves.to_vec();
                minus[li].0[j] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                assert!((fd - analytic[j]).abs() <= 1e-6 * (1.0 + fd.abs()), "leaf {li}[{j}]: fd {fd} vs {}", analytic[j]);
            }
        }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        // Keep away from zero so the kinked ops are differentiable.
        (0..n).map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen::<bool>() { v } else { -v }
        }).collect()
    }

    #[test]
    fn matmul_bias_and_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let leaves = vec![
            (rand_vec(&mut rng, 6), vec![2, 3]),
            (rand_vec(&mut rng, 12), vec![4, 3]),
            (rand_vec(&mut rng, 4), vec![4]),
            (rand_vec(&mut rng, 12), vec![3, 4]),
        ];
        check(&leaves, |t, v| {
            let z = t.matmul(v[0], v[1], true);
            let z = t.add_bias(z, v[2]);
            let z = t.abs(z);
            let w = t.matmul(v[0], v[3], false);
            let s = t.sub(z, w);
            t.cross_entropy_mean(s, &[1, 3])
        });
    }

    #[test]
    fn batched_margin_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let leaves = vec![
            (rand_vec(&mut rng, 12), vec![3, 4]),
            (rand_vec(&mut rng, 8), vec![2, 4]),
            (rand_vec(&mut rng, 8), vec![2, 4]),
            (rand_vec(&mut rng, 4), vec![4]),
        ];
        check(&leaves, |t, v| {
            let lam = t.gather_margin(v[0], &[2, 0]);
            let p = t.pos_part(lam);
            let n = t.neg_part(lam);
            let a = t.mul_bcast(p, v[1]);
            let b = t.mul_bcast(n, v[2]);
            let lam = t.add(a, b);
            let d = t.batch_row_dot(lam, v[1]);
            let nrm = t.norm2_last(lam);
            let nrm = t.scale(nrm, 0.3);
            let out = t.sub(d, nrm);
            let r = t.broadcast_rows(v[3], 2);
            let r = t.reshape(r, &[2, 4]);
            let rw = t.matmul(r, v[0], true);
            let rw = t.reshape(rw, &[2, 3]);
            let out = t.add(out, rw);
            t.cross_entropy_mean(out, &[0, 1])
        });
    }

    #[test]
    fn local_partials_flow_back() {
        let leaves = vec![(vec![0.5, -2.0, 3.0], vec![3])];
        check(&leaves, |t, v| {
            let x = t.value(v[0]).to_vec();
            let sq = t.local(x.iter().map(|a| a * a).collect(), vec![(v[0], x.iter().map(|a| 2.0 * a).collect())]);
            let sq = t.reshape(sq, &[1, 3]);
            t.cross_entropy_mean(sq, &[2])
        });
    }

    #[test]
    fn unused_leaves_get_zero_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, 2.0], &[1, 2]);
        let b = t.leaf(vec![3.0], &[1]);
        let l = t.cross_entropy_mean(a, &[0]);
        let g = t.backward(l);
        assert_eq!(g.of(&t, b), vec![0.0]);
        let ga = g.of(&t, a);
        assert!((ga[0] + ga[1]).abs() < 1e-15);
    }
}
