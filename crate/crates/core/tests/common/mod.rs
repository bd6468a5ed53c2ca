//! Independent reference computations shared by the integration tests.
//! Nothing here calls the library's dynamic programs; only graph edges and
//! potential values are taken from it.

#![allow(dead_code)]

use tmshift::models::Model;
use tmshift::shift::{State, StateGraph, TailPoint};
use tmshift::transfer::{SimpleFunction, System};

pub fn s(m: &Model, label: &str) -> State {
    m.graph().parse_label(label).expect("known label")
}

pub fn word(m: &Model, labels: &[&str]) -> Vec<State> {
    labels.iter().map(|l| s(m, l)).collect()
}

/// Words `u` of length `n` with `u · x0` admissible, by exhaustive search.
pub fn backward_words(g: &StateGraph, x0: State, n: usize) -> Vec<Vec<State>> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![], x0)];
    while let Some((u, head)) = stack.pop() {
        if u.len() == n {
            out.push(u);
            continue;
        }
        for &b in g.in_edges(head).unwrap().iter() {
            let mut v = vec![b];
            v.extend_from_slice(&u);
            stack.push((v, b));
        }
    }
    out.sort();
    out
}

/// `(L^n f)(x)` by listing every preimage `u·x` and summing
/// `e^{phi_n(u x)} f(u x)` term by term.
pub fn brute_ln(sys: &System, f: &SimpleFunction, x: &TailPoint, n: usize) -> f64 {
    let r = sys.potential.range();
    let longest = f.terms.iter().map(|(_, c)| c.len()).max().unwrap_or(1);
    let mut total = 0.0;
    for u in backward_words(&sys.graph, x.first(), n) {
        let mut y = u.clone();
        y.extend(x.coords((n + r).max(longest) + 1));
        let phi: f64 = (0..n).map(|i| sys.potential.value(&y[i..i + r]).unwrap()).sum();
        let fy: f64 = f
            .terms
            .iter()
            .filter(|(_, c)| c.word() == &y[..c.len()])
            .map(|(k, _)| k)
            .sum();
        total += phi.exp() * fy;
    }
    total
}

/// Sum over paths `a = v_0, ..., v_n = b` with `v_i != b` for `0 < i < n`
/// and `n <= depth` of `prod e^{phi(v_i, v_{i+1})}`, by depth-first search.
/// The empty path counts when `a == b`.
pub fn brute_first_passage(sys: &System, a: State, b: State, depth: usize) -> f64 {
    fn go(sys: &System, v: State, b: State, left: usize, w: f64, acc: &mut f64) {
        if left == 0 {
            return;
        }
        for &t in sys.graph.out_edges(v).unwrap().iter() {
            let wt = w * sys.potential.edge(v, t).unwrap().exp();
            if t == b {
                *acc += wt;
            } else {
                go(sys, t, b, left - 1, wt, acc);
            }
        }
    }
    let mut acc = if a == b { 1.0 } else { 0.0 };
    if a != b {
        go(sys, a, b, depth, 1.0, &mut acc);
    }
    acc
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let k = a[row][col] / a[col][col];
            if k != 0.0 {
                for j in col..n {
                    a[row][j] -= k * a[col][j];
                }
                b[row] -= k * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Stationary law of the reflecting walk on `{0, ..., m}` (up `p`, down
/// `1 - p`, holding at 0 with `1 - p`, truncated by holding at `m` with `p`),
/// from `pi (P - I) = 0` with `sum pi = 1`.
pub fn halfline_stationary(p: f64, m: usize) -> Vec<f64> {
    let n = m + 1;
    let mut pm = vec![vec![0.0; n]; n];
    for i in 0..n {
        if i + 1 < n {
            pm[i][i + 1] = p;
        } else {
            pm[i][i] += p;
        }
        if i > 0 {
            pm[i][i - 1] = 1.0 - p;
        } else {
            pm[i][i] += 1.0 - p;
        }
    }
    // Rows of the system are the columns of P^T - I, the last one replaced
    // by the normalization.
    let mut a = vec![vec![0.0; n]; n];
    for j in 0..n {
        for i in 0..n {
            a[j][i] = pm[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[n - 1] = vec![1.0; n];
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    solve(a, b)
}

/// `ln C(2k, k)`.
pub fn ln_central_binomial(k: usize) -> f64 {
    (1..=k).map(|i| ((k + i) as f64 / i as f64).ln()).sum()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}
