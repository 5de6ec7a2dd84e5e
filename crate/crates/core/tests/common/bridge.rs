//! Feeds oracle instances through the crate's tensor implementation.

use candle_core::{DType, Device, Tensor, Var};
use tsproto::losses::{self, LossConfig, LossInputs};

use super::{fd_gradient, max_rel_err, Input, Instance, Part, Vecs, INPUTS};

pub fn t2(x: &Vecs) -> Tensor {
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    Tensor::from_vec(flat, (x.len(), x[0].len()), &Device::Cpu).unwrap()
}

pub fn t3(x: &[Vecs]) -> Tensor {
    let flat: Vec<f64> = x.iter().flatten().flatten().copied().collect();
    Tensor::from_vec(flat, (x.len(), x[0].len(), x[0][0].len()), &Device::Cpu).unwrap()
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

pub fn rows(t: &Tensor) -> Vecs {
    t.to_dtype(DType::F64).unwrap().to_vec2::<f64>().unwrap()
}

pub fn flat(t: &Tensor) -> Vec<f64> {
    t.flatten_all()
        .unwrap()
        .to_dtype(DType::F64)
        .unwrap()
        .to_vec1::<f64>()
        .unwrap()
}

/// Trainable copies of every embedding input of an instance.
pub struct Vars {
    pub v: Var,
    pub vt: Var,
    pub z: Var,
    pub zt: Var,
    pub u: Var,
    pub s: Var,
}

impl Vars {
    pub fn new(x: &Instance) -> Self {
        let var = |t: Tensor| Var::from_tensor(&t).unwrap();
        Self {
            v: var(t3(&x.v)),
            vt: var(t3(&x.vt)),
            z: var(t2(&x.z)),
            zt: var(t2(&x.zt)),
            u: var(t2(&x.u)),
            s: var(t2(&x.s)),
        }
    }
}

/// Loss of `part` through the crate's `objective`, with every embedding
/// passed through `l2_normalize` first.
pub fn loss(x: &Instance, vars: &Vars, part: Part, cfg: &LossConfig) -> Tensor {
    let n = |t: &Tensor| losses::l2_normalize(t).unwrap();
    let (v, vt, z, zt, u, s) = (
        n(&vars.v),
        n(&vars.vt),
        n(&vars.z),
        n(&vars.zt),
        n(&vars.u),
        n(&vars.s),
    );
    let (tw, tc) = (t3(&x.tw), t3(&x.tc));
    let lambdas = Tensor::from_vec(x.lambdas.clone(), x.lambdas.len(), &Device::Cpu).unwrap();
    match part {
        Part::Proto | Part::Total => {
            let inputs = LossInputs {
                v: &v,
                v_tilde: &vt,
                tau_within: &tw,
                tau_cross: &tc,
                taus_b: None,
                z: &z,
                z_tilde: &zt,
                si: Some((&u, &s, &lambdas)),
            };
            let mut c = cfg.clone();
            c.use_si = part == Part::Total;
            losses::objective(&inputs, &c).unwrap().0
        }
        Part::Naive => losses::naive_si_loss(&u, &s, cfg.tau).unwrap(),
        Part::Mix => losses::mixup_si_loss_with(&u, &s, &lambdas, cfg.tau, false).unwrap(),
    }
}

impl Vars {
    pub fn get(&self, which: Input) -> &Var {
        match which {
            Input::V => &self.v,
            Input::VTilde => &self.vt,
            Input::Z => &self.z,
            Input::ZTilde => &self.zt,
            Input::U => &self.u,
            Input::S => &self.s,
        }
    }
}

/// Worst relative disagreement between autograd through the crate and
/// central differences of the scalar oracle, over all six inputs.
pub fn gradient_error(x: &Instance, part: Part, cfg: &LossConfig, h: f64, floor: f64) -> f64 {
    let vars = Vars::new(x);
    let l = loss(x, &vars, part, cfg);
    let grads = l.backward().unwrap();
    let mut worst = 0.0f64;
    for which in INPUTS {
        let var = vars.get(which);
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => flat(g),
            None => vec![0.0; var.elem_count()],
        };
        let numeric = fd_gradient(x, which, part, cfg.alpha, cfg.beta, cfg.tau, h);
        worst = worst.max(max_rel_err(&analytic, &numeric, floor));
    }
    worst
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Relative error of every loss quantity against its scalar oracle.
pub fn value_errors(x: &Instance, cfg: &LossConfig) -> Vec<(&'static str, f64)> {
    use super as o;
    let (v, vt, tw, tc) = (t3(&x.v), t3(&x.vt), t3(&x.tw), t3(&x.tc));
    let (z, zt, u, s) = (t2(&x.z), t2(&x.zt), t2(&x.u), t2(&x.s));
    let lambdas = Tensor::from_vec(x.lambdas.clone(), x.lambdas.len(), &Device::Cpu).unwrap();
    let worst = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(p, q)| rel(*p, *q))
            .fold(0.0, f64::max)
    };

    let intra = losses::intra_prototype_terms(&v, &vt, &tw, &tc).unwrap();
    let inter = losses::inter_prototype_terms(&z, &zt, cfg.tau).unwrap();
    let proto = losses::prototype_loss(&inter, &intra, cfg.alpha).unwrap();
    let naive = losses::naive_si_loss(&u, &s, cfg.tau).unwrap();
    let mix = losses::mixup_si_loss_with(&u, &s, &lambdas, cfg.tau, false).unwrap();
    let mixed = losses::geodesic_mixup_rows(&u, &s, &lambdas).unwrap();
    let inputs = LossInputs {
        v: &v,
        v_tilde: &vt,
        tau_within: &tw,
        tau_cross: &tc,
        taus_b: None,
        z: &z,
        z_tilde: &zt,
        si: Some((&u, &s, &lambdas)),
    };
    let (total, breakdown) = losses::objective(&inputs, cfg).unwrap();

    let o_intra = o::intra_terms(x);
    let o_inter = o::inter(&x.z, &x.zt, cfg.tau);
    let o_proto = o::proto(&o_inter, &o_intra, cfg.alpha);
    let o_naive = o::naive(&x.u, &x.s, cfg.tau);
    let o_mix = o::mix(&x.u, &x.s, &x.lambdas, cfg.tau);
    let o_mixed: Vec<f64> = (0..x.u.len())
        .flat_map(|i| o::slerp(&x.u[i], &x.s[i], x.lambdas[i]))
        .collect();
    let o_total = o::total(x, cfg.alpha, cfg.beta, cfg.tau);
    let o_si = cfg.beta * o_naive + (1.0 - cfg.beta) * o_mix;
    vec![
        ("intra", worst(&flat(&intra), &o_intra)),
        ("inter", worst(&flat(&inter), &o_inter)),
        ("proto", rel(scalar(&proto), o_proto)),
        ("naive", rel(scalar(&naive), o_naive)),
        ("mixup", worst(&flat(&mixed), &o_mixed)),
        ("mix", rel(scalar(&mix), o_mix)),
        ("si", rel(breakdown.l_si, o_si)),
        ("total", rel(scalar(&total), o_total)),
    ]
}
