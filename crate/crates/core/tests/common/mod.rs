//! Straight-line scalar re-implementations of the losses, used as oracles.
//! Outside `bridge`, nothing here touches tensors or the crate's loss code.

#![allow(dead_code)]

pub mod bridge;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Vecs = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn unit(rng: &mut ChaCha8Rng, j: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..j).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&x);
        if n > 0.1 {
            return x.iter().map(|a| a / n).collect();
        }
    }
}

pub fn units(rng: &mut ChaCha8Rng, n: usize, j: usize) -> Vecs {
    (0..n).map(|_| unit(rng, j)).collect()
}

/// `tau0 + softmax(row without its diagonal)`, diagonal fixed at `tau0`.
pub fn tau_matrix(d: &Vecs, tau0: f64) -> Vecs {
    let g = d.len();
    let mut out = vec![vec![tau0; g]; g];
    if g == 1 {
        return out;
    }
    for j in 0..g {
        let mut total = 0.0;
        for k in 0..g {
            if k != j {
                total += d[j][k].exp();
            }
        }
        for k in 0..g {
            if k != j {
                out[j][k] = tau0 + d[j][k].exp() / total;
            }
        }
    }
    out
}

/// One sample's intra loss: anchors `v[k]`, positive `v_tilde[k]`, negatives
/// the other `v[j]` and the other `v_tilde[j]`.
pub fn intra(v: &Vecs, vt: &Vecs, tw: &Vecs, tc: &Vecs) -> f64 {
    let g = v.len();
    let mut sum = 0.0;
    for k in 0..g {
        let mut logits = Vec::new();
        for j in 0..g {
            if j != k {
                logits.push(dot(&v[k], &v[j]) / tw[k][j]);
            }
        }
        for j in 0..g {
            logits.push(dot(&v[k], &vt[j]) / tc[k][j]);
        }
        sum += lse(&logits) - dot(&v[k], &vt[k]) / tc[k][k];
    }
    sum
}

/// Per-sample inter losses over a batch of prototypes.
pub fn inter(z: &Vecs, zt: &Vecs, tau: f64) -> Vec<f64> {
    let b = z.len();
    (0..b)
        .map(|i| {
            let mut logits = Vec::new();
            for j in 0..b {
                if j != i {
                    logits.push(dot(&z[i], &z[j]) / tau);
                }
            }
            for j in 0..b {
                logits.push(dot(&z[i], &zt[j]) / tau);
            }
            lse(&logits) - dot(&z[i], &zt[i]) / tau
        })
        .collect()
}

pub fn proto(inter: &[f64], intra: &[f64], alpha: f64) -> f64 {
    let b = inter.len() as f64;
    inter
        .iter()
        .zip(intra)
        .map(|(e, a)| alpha * e + (1.0 - alpha) * a)
        .sum::<f64>()
        / (2.0 * b)
}

/// Symmetric InfoNCE between image rows `u` and series rows `v`.
pub fn naive(u: &Vecs, v: &Vecs, tau: f64) -> f64 {
    let b = u.len();
    let mut total = 0.0;
    for i in 0..b {
        let row: Vec<f64> = (0..b).map(|j| dot(&u[i], &v[j]) / tau).collect();
        let col: Vec<f64> = (0..b).map(|j| dot(&u[j], &v[i]) / tau).collect();
        let pos = dot(&u[i], &v[i]) / tau;
        total += (lse(&row) - pos) + (lse(&col) - pos);
    }
    total / (2.0 * b as f64)
}

/// Point at angle `lambda * theta` from `v` towards `u` on their great circle,
/// built from `v` and the unit component of `u` orthogonal to it.
pub fn slerp(u: &[f64], v: &[f64], lambda: f64) -> Vec<f64> {
    let c = dot(u, v).clamp(-1.0, 1.0);
    let theta = c.acos();
    let perp: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - c * b).collect();
    let pn = norm(&perp);
    let phi = lambda * theta;
    v.iter()
        .zip(&perp)
        .map(|(b, p)| phi.cos() * b + phi.sin() * p / pn)
        .collect()
}

pub fn mix(u: &Vecs, v: &Vecs, lambdas: &[f64], tau: f64) -> f64 {
    let b = u.len();
    let m: Vecs = (0..b).map(|j| slerp(&u[j], &v[j], lambdas[j])).collect();
    let mut total = 0.0;
    for i in 0..b {
        let pos = dot(&u[i], &v[i]) / tau;
        let a: Vec<f64> = m.iter().map(|mj| dot(&u[i], mj) / tau).collect();
        let s: Vec<f64> = m.iter().map(|mj| dot(&v[i], mj) / tau).collect();
        total += (lse(&a) - pos) + (lse(&s) - pos);
    }
    total / (2.0 * b as f64)
}

/// Everything the full objective consumes, as plain vectors.
#[derive(Debug, Clone)]
pub struct Instance {
    /// `[b][g]` projected views.
    pub v: Vec<Vecs>,
    pub vt: Vec<Vecs>,
    pub tw: Vec<Vecs>,
    pub tc: Vec<Vecs>,
    pub z: Vecs,
    pub zt: Vecs,
    pub u: Vecs,
    pub s: Vecs,
    pub lambdas: Vec<f64>,
}

pub fn random_distances(rng: &mut ChaCha8Rng, g: usize) -> Vecs {
    (0..g)
        .map(|_| (0..g).map(|_| rng.random_range(0.0..3.0)).collect())
        .collect()
}

pub fn random_instance(rng: &mut ChaCha8Rng, b: usize, g: usize, j: usize, tau0: f64) -> Instance {
    let mut inst = Instance {
        v: Vec::new(),
        vt: Vec::new(),
        tw: Vec::new(),
        tc: Vec::new(),
        z: units(rng, b, j),
        zt: units(rng, b, j),
        u: units(rng, b, j),
        s: units(rng, b, j),
        lambdas: (0..b).map(|_| rng.random_range(0.05..0.95)).collect(),
    };
    for _ in 0..b {
        inst.v.push(units(rng, g, j));
        inst.vt.push(units(rng, g, j));
        inst.tw.push(tau_matrix(&random_distances(rng, g), tau0));
        inst.tc.push(tau_matrix(&random_distances(rng, g), tau0));
    }
    inst
}

pub fn intra_terms(x: &Instance) -> Vec<f64> {
    (0..x.v.len())
        .map(|i| intra(&x.v[i], &x.vt[i], &x.tw[i], &x.tc[i]))
        .collect()
}

/// `L_proto + beta * L_naive + (1 - beta) * L_mix`.
pub fn total(x: &Instance, alpha: f64, beta: f64, tau: f64) -> f64 {
    proto(&inter(&x.z, &x.zt, tau), &intra_terms(x), alpha)
        + beta * naive(&x.u, &x.s, tau)
        + (1.0 - beta) * mix(&x.u, &x.s, &x.lambdas, tau)
}

/// Central finite difference of `f` with respect to every coordinate of `x`.
pub fn central_diff(x: &Vecs, h: f64, mut f: impl FnMut(&Vecs) -> f64) -> Vecs {
    let mut grad = vec![vec![0.0; x[0].len()]; x.len()];
    let mut y = x.clone();
    for i in 0..x.len() {
        for k in 0..x[i].len() {
            y[i][k] = x[i][k] + h;
            let plus = f(&y);
            y[i][k] = x[i][k] - h;
            let minus = f(&y);
            y[i][k] = x[i][k];
            grad[i][k] = (plus - minus) / (2.0 * h);
        }
    }
    grad
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Which part of the objective to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Proto,
    Naive,
    Mix,
    Total,
}

pub const PARTS: [Part; 4] = [Part::Proto, Part::Naive, Part::Mix, Part::Total];

pub fn part_value(x: &Instance, part: Part, alpha: f64, beta: f64, tau: f64) -> f64 {
    match part {
        Part::Proto => proto(&inter(&x.z, &x.zt, tau), &intra_terms(x), alpha),
        Part::Naive => naive(&x.u, &x.s, tau),
        Part::Mix => mix(&x.u, &x.s, &x.lambdas, tau),
        Part::Total => total(x, alpha, beta, tau),
    }
}

pub fn normalize_rows(x: &Vecs) -> Vecs {
    x.iter()
        .map(|r| {
            let n = norm(r);
            r.iter().map(|a| a / n).collect()
        })
        .collect()
}

/// The six embedding inputs, each viewed as a list of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    V,
    VTilde,
    Z,
    ZTilde,
    U,
    S,
}

pub const INPUTS: [Input; 6] = [
    Input::V,
    Input::VTilde,
    Input::Z,
    Input::ZTilde,
    Input::U,
    Input::S,
];

impl Instance {
    pub fn rows(&self, which: Input) -> Vecs {
        match which {
            Input::V => self.v.concat(),
            Input::VTilde => self.vt.concat(),
            Input::Z => self.z.clone(),
            Input::ZTilde => self.zt.clone(),
            Input::U => self.u.clone(),
            Input::S => self.s.clone(),
        }
    }

    pub fn with_rows(&self, which: Input, rows: Vecs) -> Instance {
        let mut out = self.clone();
        let g = self.v[0].len();
        match which {
            Input::V => out.v = rows.chunks(g).map(|c| c.to_vec()).collect(),
            Input::VTilde => out.vt = rows.chunks(g).map(|c| c.to_vec()).collect(),
            Input::Z => out.z = rows,
            Input::ZTilde => out.zt = rows,
            Input::U => out.u = rows,
            Input::S => out.s = rows,
        }
        out
    }
}

/// Central differences of `part` with respect to raw (pre-normalization)
/// rows of `which`.
pub fn fd_gradient(
    x: &Instance,
    which: Input,
    part: Part,
    alpha: f64,
    beta: f64,
    tau: f64,
    h: f64,
) -> Vec<f64> {
    central_diff(&x.rows(which), h, |y| {
        part_value(
            &x.with_rows(which, normalize_rows(y)),
            part,
            alpha,
            beta,
            tau,
        )
    })
    .concat()
}
