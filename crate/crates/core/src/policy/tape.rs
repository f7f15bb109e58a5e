//! Reverse-mode gradients over a fixed set of vector operations.
//!
//! Every node holds a vector value; scalars are length-1 vectors and
//! broadcast in binary elementwise ops. Parameters enter as [`Tape::param`]
//! leaves that map onto a flat parameter buffer, so [`Tape::backward`]
//! returns a gradient laid out exactly like the parameter vector. Values
//! entered through [`Tape::constant`] are detached: no gradient flows into
//! them.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TapeError {
    #[error("tape already consumed by a backward pass")]
    Consumed,
    #[error("backward requires a scalar output, node has length {0}")]
    NotScalar(usize),
    #[error("non-finite value in tape output")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param { offset: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    MinZero(Var),
    Sum(Var),
    Dot(Var, Var),
    Softmax(Var),
    MatVec { w: Var, x: Var, rows: usize, cols: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    param_len: usize,
    consumed: bool,
}

/// Adjoints of every node plus the flat parameter gradient.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Vec<f64>>,
    params: Vec<f64>,
}

impl Gradients {
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn wrt(&self, v: Var) -> &[f64] {
        &self.adjoints[v.0]
    }
}

fn binary(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a.len(), b.len()) {
        (n, m) if n == m => a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect(),
        (1, _) => b.iter().map(|y| f(a[0], *y)).collect(),
        (_, 1) => a.iter().map(|x| f(*x, b[0])).collect(),
        (n, m) => panic!("shape mismatch in elementwise op: {n} vs {m}"),
    }
}

/// Adds `g` into `acc`, summing when `acc` is a broadcast scalar.
fn accumulate(acc: &mut [f64], g: impl Iterator<Item = f64>) {
    if acc.len() == 1 {
        acc[0] += g.sum::<f64>();
    } else {
        acc.iter_mut().zip(g).for_each(|(a, x)| *a += x);
    }
}

impl Tape {
    /// New tape whose parameter leaves index a flat buffer of `param_len`.
    pub fn new(param_len: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(1024),
            param_len,
            consumed: false,
        }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.push(vec![value], Op::Const)
    }

    /// Parameter leaf covering `flat[offset..offset + value.len()]`.
    pub fn param(&mut self, offset: usize, value: &[f64]) -> Var {
        assert!(offset + value.len() <= self.param_len, "parameter slice out of range");
        self.push(value.to_vec(), Op::Param { offset })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = binary(self.value(a), self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = binary(self.value(a), self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = binary(self.value(a), self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = binary(self.value(a), self.value(b), |x, y| x / y);
        self.push(v, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).iter().map(|x| x * k).collect();
        self.push(v, Op::Scale(a, k))
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).iter().map(|x| x + k).collect();
        self.push(v, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.exp()).collect();
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.ln()).collect();
        self.push(v, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.sqrt()).collect();
        self.push(v, Op::Sqrt(a))
    }

    /// Subgradient at zero is taken as zero.
    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.abs()).collect();
        self.push(v, Op::Abs(a))
    }

    /// `min(x, 0)` elementwise.
    pub fn min_zero(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.min(0.0)).collect();
        self.push(v, Op::MinZero(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = vec![self.value(a).iter().sum()];
        self.push(v, Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.len(), y.len(), "dot shape mismatch");
        let v = vec![x.iter().zip(y).map(|(p, q)| p * q).sum()];
        self.push(v, Op::Dot(a, b))
    }

    /// Max-subtracted softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = crate::env::softmax(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    /// `W x` with `W` stored row-major as `rows × cols`.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        let (wv, xv) = (self.value(w), self.value(x));
        assert_eq!(wv.len(), rows * cols, "matvec weight shape");
        assert_eq!(xv.len(), cols, "matvec input shape");
        let v = wv
            .chunks_exact(cols)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(v, Op::MatVec { w, x, rows, cols })
    }

    /// Reverse pass from a scalar output. A tape supports one backward pass.
    pub fn backward(&mut self, out: Var) -> Result<Gradients, TapeError> {
        if self.consumed {
            return Err(TapeError::Consumed);
        }
        self.consumed = true;
        let n = self.value(out).len();
        if n != 1 {
            return Err(TapeError::NotScalar(n));
        }
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        let mut params = vec![0.0; self.param_len];
        adj[out.0][0] = 1.0;

        for i in (0..=out.0).rev() {
            let g = std::mem::take(&mut adj[i]);
            if g.iter().all(|x| *x == 0.0) {
                adj[i] = g;
                continue;
            }
            let node = &self.nodes[i];
            let y = &node.value;
            match node.op {
                Op::Const => {}
                Op::Param { offset } => {
                    params[offset..offset + g.len()]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(p, x)| *p += x);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], g.iter().copied());
                    accumulate(&mut adj[b.0], g.iter().copied());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[a.0], g.iter().copied());
                    accumulate(&mut adj[b.0], g.iter().map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = binary(&g, bv, |x, y| x * y);
                    let gb = binary(&g, av, |x, y| x * y);
                    accumulate(&mut adj[a.0], ga.into_iter());
                    accumulate(&mut adj[b.0], gb.into_iter());
                }
                Op::Div(a, b) => {
                    let bv = &self.nodes[b.0].value;
                    let ga = binary(&g, bv, |x, y| x / y);
                    // d(a/b)/db = -y / b
                    let gy = binary(&g, y, |x, q| x * q);
                    let gb = binary(&gy, bv, |x, q| -x / q);
                    accumulate(&mut adj[a.0], ga.into_iter());
                    accumulate(&mut adj[b.0], gb.into_iter());
                }
                Op::Scale(a, k) => accumulate(&mut adj[a.0], g.iter().map(|x| x * k)),
                Op::Offset(a) => accumulate(&mut adj[a.0], g.iter().copied()),
                Op::Tanh(a) => accumulate(&mut adj[a.0], g.iter().zip(y).map(|(x, t)| x * (1.0 - t * t))),
                Op::Exp(a) => accumulate(&mut adj[a.0], g.iter().zip(y).map(|(x, e)| x * e)),
                Op::Ln(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga: Vec<f64> = g.iter().zip(av).map(|(x, v)| x / v).collect();
                    accumulate(&mut adj[a.0], ga.into_iter());
                }
                Op::Sqrt(a) => accumulate(&mut adj[a.0], g.iter().zip(y).map(|(x, s)| x * 0.5 / s)),
                Op::Abs(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(av)
                        .map(|(x, v)| if *v > 0.0 { *x } else if *v < 0.0 { -x } else { 0.0 })
                        .collect();
                    accumulate(&mut adj[a.0], ga.into_iter());
                }
                Op::MinZero(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga: Vec<f64> = g.iter().zip(av).map(|(x, v)| if *v < 0.0 { *x } else { 0.0 }).collect();
                    accumulate(&mut adj[a.0], ga.into_iter());
                }
                Op::Sum(a) => {
                    let len = adj[a.0].len();
                    accumulate(&mut adj[a.0], std::iter::repeat_n(g[0], len));
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga: Vec<f64> = bv.iter().map(|x| g[0] * x).collect();
                    let gb: Vec<f64> = av.iter().map(|x| g[0] * x).collect();
                    accumulate(&mut adj[a.0], ga.into_iter());
                    accumulate(&mut adj[b.0], gb.into_iter());
                }
                Op::Softmax(a) => {
                    let gy: f64 = g.iter().zip(y).map(|(x, p)| x * p).sum();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(x, p)| p * (x - gy)).collect();
                    accumulate(&mut adj[a.0], ga.into_iter());
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (wv, xv) = (&self.nodes[w.0].value, &self.nodes[x.0].value);
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let row = &wv[r * cols..(r + 1) * cols];
                        for (gxc, wrc) in gx.iter_mut().zip(row) {
                            *gxc += g[r] * wrc;
                        }
                    }
                    {
                        let gw = &mut adj[w.0];
                        for r in 0..rows {
                            if g[r] == 0.0 {
                                continue;
                            }
                            for (gwc, xc) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *gwc += g[r] * xc;
                            }
                        }
                    }
                    accumulate(&mut adj[x.0], gx.into_iter());
                }
            }
            adj[i] = g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(TapeError::NonFinite);
        }
        Ok(Gradients { adjoints: adj, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let mut p = x.to_vec();
        p[i] += h;
        let up = f(&p);
        p[i] -= 2.0 * h;
        let down = f(&p);
        (up - down) / (2.0 * h)
    }

    #[test]
    fn scalar_product_rule() {
        let mut t = Tape::new(2);
        let x = t.param(0, &[3.0]);
        let y = t.param(1, &[4.0]);
        let z = t.mul(x, y);
        let g = t.backward(z).unwrap();
        assert_eq!(g.params(), &[4.0, 3.0]);
    }

    #[test]
    fn second_backward_is_lifecycle_error() {
        let mut t = Tape::new(1);
        let x = t.param(0, &[1.0]);
        let y = t.tanh(x);
        t.backward(y).unwrap();
        assert_eq!(t.backward(y).unwrap_err(), TapeError::Consumed);
    }

    #[test]
    fn constants_are_detached() {
        let mut t = Tape::new(1);
        let x = t.param(0, &[2.0]);
        let c = t.scalar_constant(5.0);
        let y = t.mul(x, c);
        let g = t.backward(y).unwrap();
        assert_eq!(g.params(), &[5.0]);
        assert_eq!(g.wrt(c), &[2.0]);
    }

    #[test]
    fn composite_matches_finite_differences() {
        // f(p) = sum(abs(softmax(tanh(W x) ) - q)) * sqrt(exp(p_b)) + ln(1 + min(p_c, 0)^2)
        let x0 = [0.3, -0.2, 0.5];
        let q = [0.1, 0.6];
        let eval = |p: &[f64]| -> (f64, Vec<f64>) {
            let mut t = Tape::new(p.len());
            let w = t.param(0, &p[0..6]);
            let b = t.param(6, &p[6..7]);
            let c = t.param(7, &p[7..8]);
            let x = t.constant(x0.to_vec());
            let h = t.matvec(w, x, 2, 3);
            let h = t.tanh(h);
            let s = t.softmax(h);
            let qv = t.constant(q.to_vec());
            let d = t.sub(s, qv);
            let d = t.abs(d);
            let l1 = t.sum(d);
            let e = t.exp(b);
            let r = t.sqrt(e);
            let f1 = t.mul(l1, r);
            let m = t.min_zero(c);
            let m2 = t.mul(m, m);
            let m2 = t.offset(m2, 1.0);
            let f2 = t.ln(m2);
            let f = t.add(f1, f2);
            let k = t.scalar_constant(2.0);
            let f = t.div(f, k);
            let f = t.scale(f, 3.0);
            let val = t.scalar(f);
            let g = t.backward(f).unwrap();
            (val, g.into_params())
        };
        let p = [0.4, -0.7, 0.2, 0.9, 0.1, -0.3, 0.25, -0.6];
        let (_, g) = eval(&p);
        for i in 0..p.len() {
            let n = fd(|q| eval(q).0, &p, i);
            assert!((g[i] - n).abs() < 1e-7 * (1.0 + n.abs()), "i={i}: {} vs {}", g[i], n);
        }
    }

    #[test]
    fn broadcast_scalar_accumulates() {
        let mut t = Tape::new(1);
        let s = t.param(0, &[2.0]);
        let v = t.constant(vec![1.0, 2.0, 3.0]);
        let y = t.mul(v, s);
        let y = t.sum(y);
        let g = t.backward(y).unwrap();
        assert_eq!(g.params(), &[6.0]);
    }
}
