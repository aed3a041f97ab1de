//! Reference implementations shared by the integration tests and the
//! acceptance suite: central finite differences, a tiny JEPA problem and
//! exhaustive chart-metric oracles.
#![allow(dead_code)]

use std::collections::HashMap;

use chartjepa::channelsim::{Split, TrajectoryInfo};
use chartjepa::evaluation::Point;
use chartjepa::models::{CellKind, Encoder, Mlp, Params, Predictor};
use chartjepa::ndnum::{Matrix, Tape, Var};
use chartjepa::rng::rng;
use chartjepa::training::{jepa_loss, JepaState, TargetBranch, WindowData};
use chartjepa::Result;
use rand::Rng as _;

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.gen_range(-2.0..2.0))
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

/// Weighted sum `Σ c ⊙ y` so that no output entry's gradient is trivially 1.
pub fn reduce(t: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = t.value(y).shape();
    let w = t.constant(random(r, c, seed))?;
    let p = t.mul(y, w)?;
    t.sum(p)
}

/// Checks d loss / d input for every entry of every input. Returns the worst
/// relative error.
pub fn check_inputs<F>(inputs: &[Matrix<f64>], build: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Matrix<f64>]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.param(x.clone()).unwrap()).collect();
        let loss = build(&mut t, &vars).unwrap();
        t.value(loss).get(0, 0)
    };

    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.param(x.clone()).unwrap()).collect();
    let loss = build(&mut t, &vars).unwrap();
    t.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let g = t.grad(vars[i]);
        for j in 0..x.len() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] += FD_EPS;
            let up = eval(&xs);
            xs[i].data_mut()[j] -= 2.0 * FD_EPS;
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(g.data()[j], numeric));
        }
    }
    worst
}

/// Same check over the tensors of a parameter set. `build` binds `model` into
/// the tape and must return the loss plus the bound tensors in `tensors()` order.
pub fn check_params<P, F>(model: &P, build: F) -> f64
where
    P: Params<f64> + Clone,
    F: Fn(&P, &mut Tape<f64>) -> Result<(Var, Vec<Var>)>,
{
    let mut t = Tape::new();
    let (loss, vars) = build(model, &mut t).unwrap();
    assert_eq!(vars.len(), model.tensors().len());
    t.backward(loss).unwrap();

    let eval = |m: &P| -> f64 {
        let mut t = Tape::new();
        let (loss, _) = build(m, &mut t).unwrap();
        t.value(loss).get(0, 0)
    };

    let mut worst = 0.0f64;
    for (k, var) in vars.iter().enumerate() {
        let g = t.grad(*var);
        for j in 0..g.len() {
            let mut m = model.clone();
            m.tensors_mut()[k].data_mut()[j] += FD_EPS;
            let up = eval(&m);
            m.tensors_mut()[k].data_mut()[j] -= 2.0 * FD_EPS;
            let down = eval(&m);
            let numeric = (up - down) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(g.data()[j], numeric));
        }
    }
    worst
}

/// Worst relative error of every differentiable tape op, keyed by name.
pub fn op_errors() -> Vec<(&'static str, f64)> {
    type Binary = fn(&mut Tape<f64>, Var, Var) -> Result<Var>;
    type Unary = fn(&mut Tape<f64>, Var) -> Result<Var>;
    let mut out = Vec::new();
    out.push((
        "matmul",
        check_inputs(&[random(3, 4, 1), random(4, 2, 2)], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            reduce(t, y, 100)
        }),
    ));
    let binary: [(&str, Binary); 3] = [
        ("add", |t, a, b| t.add(a, b)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
    ];
    for (name, op) in binary {
        out.push((
            name,
            check_inputs(&[random(3, 4, 3), random(3, 4, 4)], |t, v| {
                let y = op(t, v[0], v[1])?;
                reduce(t, y, 5)
            }),
        ));
    }
    let unary: [(&str, Unary); 4] = [
        ("relu", |t, a| t.relu(a)),
        ("tanh", |t, a| t.tanh(a)),
        ("sigmoid", |t, a| t.sigmoid(a)),
        ("scale", |t, a| t.scale(a, -1.75)),
    ];
    for (name, op) in unary {
        out.push((
            name,
            check_inputs(&[random(4, 3, 6)], |t, v| {
                let y = op(t, v[0])?;
                reduce(t, y, 7)
            }),
        ));
    }
    out.push((
        "add_bias",
        check_inputs(&[random(5, 3, 8), random(1, 3, 9)], |t, v| {
            let y = t.add_bias(v[0], v[1])?;
            reduce(t, y, 10)
        }),
    ));
    out.push((
        "gather",
        check_inputs(&[random(4, 3, 11)], |t, v| {
            let y = t.gather(v[0], &[2, 0, 2, 3])?;
            reduce(t, y, 12)
        }),
    ));
    out.push((
        "row_norm",
        check_inputs(&[random(6, 2, 13)], |t, v| {
            let y = t.row_norm(v[0])?;
            reduce(t, y, 14)
        }),
    ));
    let target = random(3, 2, 16);
    out.push(("mse", check_inputs(&[random(3, 2, 15)], |t, v| t.mse(v[0], &target))));
    out.push((
        "sum",
        check_inputs(&[random(3, 3, 17)], |t, v| {
            let y = t.mul(v[0], v[0])?;
            t.sum(y)
        }),
    ));
    let mlp = Mlp::<f64>::init(&[5, 7, 6, 2], &mut rng(17)).unwrap();
    let x = random(4, 5, 18);
    let y = random(4, 2, 19);
    out.push((
        "mlp",
        check_params(&mlp, |m, t| {
            let bound = m.bind(t)?;
            let xv = t.constant(x.clone())?;
            let out = bound.forward(t, &xv)?;
            Ok((t.mse(out, &y)?, bound.vars()))
        }),
    ));
    out
}

/// Five-step BPTT through one predictor, checked per parameter.
pub fn predictor_unroll_check(kind: CellKind) -> f64 {
    let p = Predictor::<f64>::init(kind, 4, 3, 1.5, &mut rng(20)).unwrap();
    let batch = 3;
    let z0 = random(batch, 2, 21);
    let velocities: Vec<Matrix<f64>> = (0..5).map(|i| random(batch, 2, 30 + i)).collect();
    let targets: Vec<Matrix<f64>> = (0..5).map(|i| random(batch, 2, 40 + i)).collect();
    check_params(&p, |m, t| {
        let bound = m.bind(t)?;
        let z = t.constant(z0.clone())?;
        let inputs = velocities
            .iter()
            .map(|v| t.constant(m.scaled_inputs(v, 0.04)))
            .collect::<Result<Vec<_>>>()?;
        let preds = bound.rollout(t, &z, &inputs, 0.5)?;
        let mut loss = t.mse(preds[0], &targets[0])?;
        for (p, y) in preds.iter().zip(&targets).skip(1) {
            let l = t.mse(*p, y)?;
            loss = t.add(loss, l)?;
        }
        Ok((loss, bound.vars()))
    })
}

// A tiny JEPA problem: F = 8 features, encoder widths (8, 4), hidden 4, H = 3.

pub const TINY_HORIZON: usize = 3;

pub fn tiny_trajectories() -> Vec<TrajectoryInfo> {
    vec![
        TrajectoryInfo {
            start: 0,
            len: 9,
            split: Split::Train,
        },
        TrajectoryInfo {
            start: 9,
            len: 7,
            split: Split::Train,
        },
        TrajectoryInfo {
            start: 16,
            len: 6,
            split: Split::Test,
        },
    ]
}

/// 22 samples with 8 random features each.
pub fn tiny_data(seed: u64) -> WindowData<f64> {
    let mut r = rng(seed);
    let n = 22;
    WindowData {
        features: Matrix::from_fn(n, 8, |_, _| r.gen_range(-1.0..1.0)),
        velocities: (0..n).map(|_| [r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5)]).collect(),
        dt: 0.04,
        trajectories: tiny_trajectories(),
    }
}

pub fn tiny_state(seed: u64, kind: CellKind) -> JepaState<f64> {
    let online = Encoder::init(8, &[8, 4], &mut rng(seed)).unwrap();
    let target = Encoder::init(8, &[8, 4], &mut rng(seed + 100)).unwrap();
    let predictor = Predictor::init(kind, 4, 4, 10.0, &mut rng(seed + 200)).unwrap();
    JepaState {
        online,
        target,
        predictor,
    }
}

pub fn tiny_loss(s: &JepaState<f64>, data: &WindowData<f64>, w: &[usize], branch: TargetBranch) -> f64 {
    jepa_loss(&s.online, &s.target, &s.predictor, data, w, TINY_HORIZON, branch)
        .unwrap()
        .0
}

/// Central differences over every parameter of `pick(state)`.
pub fn jepa_fd_worst<P: Params<f64>>(
    state: &JepaState<f64>,
    grads: &[Matrix<f64>],
    pick: impl Fn(&mut JepaState<f64>) -> &mut P,
    data: &WindowData<f64>,
    windows: &[usize],
    branch: TargetBranch,
) -> f64 {
    let mut worst = 0.0f64;
    let count = pick(&mut state.clone()).tensors().len();
    assert_eq!(count, grads.len());
    for k in 0..count {
        for j in 0..grads[k].len() {
            let mut up = state.clone();
            pick(&mut up).tensors_mut()[k].data_mut()[j] += FD_EPS;
            let mut down = state.clone();
            pick(&mut down).tensors_mut()[k].data_mut()[j] -= FD_EPS;
            let numeric = (tiny_loss(&up, data, windows, branch)
                - tiny_loss(&down, data, windows, branch))
                / (2.0 * FD_EPS);
            worst = worst.max(rel_err(grads[k].data()[j], numeric));
        }
    }
    worst
}

/// Worst encoder and predictor errors of the full H = 3 unroll for one cell
/// and target branch.
pub fn jepa_unroll_errors(kind: CellKind, branch: TargetBranch) -> (f64, f64) {
    let data = tiny_data(1);
    let windows = [0, 3, 5, 9, 12];
    let state = tiny_state(2, kind);
    let (_, g) = jepa_loss(
        &state.online,
        &state.target,
        &state.predictor,
        &data,
        &windows,
        TINY_HORIZON,
        branch,
    )
    .unwrap();
    let enc = jepa_fd_worst(&state, &g.encoder, |s| &mut s.online, &data, &windows, branch);
    let pred = jepa_fd_worst(&state, &g.predictor, |s| &mut s.predictor, &data, &windows, branch);
    (enc, pred)
}

// Exhaustive chart-metric references.

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// 1-based rank of `j` among the neighbours of `i`, counted directly.
pub fn brute_rank(x: &[Point], i: usize, j: usize) -> usize {
    let dij = dist(x[i], x[j]);
    1 + (0..x.len())
        .filter(|&l| l != i && l != j)
        .filter(|&l| {
            let dil = dist(x[i], x[l]);
            dil < dij || (dil == dij && l < j)
        })
        .count()
}

pub fn brute_ct_tw(p: &[Point], z: &[Point], k: usize) -> (f64, f64) {
    let n = p.len();
    let (mut ct, mut tw) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (rp, rz) = (brute_rank(p, i, j), brute_rank(z, i, j));
            if rz <= k && rp > k {
                tw += (rp - k) as f64;
            }
            if rp <= k && rz > k {
                ct += (rz - k) as f64;
            }
        }
    }
    let c = 2.0 / (n * k * (2 * n - 3 * k - 1)) as f64;
    (1.0 - c * ct, 1.0 - c * tw)
}

pub fn pair_distances(x: &[Point]) -> Vec<f64> {
    let mut v = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            v.push(dist(x[i], x[j]));
        }
    }
    v
}

/// Stress with the scale found by ternary search on the convex residual.
pub fn brute_ks(p: &[Point], z: &[Point]) -> f64 {
    let (dp, dz) = (pair_distances(p), pair_distances(z));
    let f = |b: f64| dp.iter().zip(&dz).map(|(x, y)| (x - b * y).powi(2)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1e3);
    for _ in 0..400 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    (f(0.5 * (lo + hi)) / dp.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Rajski distance with bins found by counting and MI summed cell by cell.
pub fn brute_rd(p: &[Point], z: &[Point], bins: usize) -> f64 {
    let (dp, dz) = (pair_distances(p), pair_distances(z));
    let bin = |v: &[f64], x: f64| -> usize {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        (1..bins).filter(|&b| s[b * s.len() / bins] <= x).count()
    };
    let n = dp.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut px: HashMap<usize, f64> = HashMap::new();
    let mut py: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in dp.iter().zip(&dz) {
        let (x, y) = (bin(&dp, a), bin(&dz, b));
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *px.entry(x).or_default() += 1.0 / n;
        *py.entry(y).or_default() += 1.0 / n;
    }
    if px.len() == 1 || py.len() == 1 {
        return if px.len() > 1 || py.len() > 1 { 1.0 } else { 0.0 };
    }
    let h: f64 = joint.values().map(|q| -q * q.ln()).sum();
    let i: f64 = joint.iter().map(|(&(x, y), &q)| q * (q / (px[&x] * py[&y])).ln()).sum();
    1.0 - i / h
}

pub fn random_points(n: usize, seed: u64) -> Vec<Point> {
    let mut r = rng(seed);
    (0..n).map(|_| [r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0)]).collect()
}

/// Rounds every coordinate so that distances tie.
pub fn quantised(x: Vec<Point>) -> Vec<Point> {
    x.into_iter().map(|p| [p[0].round(), p[1].round()]).collect()
}

pub fn similarity(x: &[Point], angle: f64, scale: f64, shift: Point) -> Vec<Point> {
    let (s, c) = angle.sin_cos();
    x.iter()
        .map(|p| {
            [
                scale * (c * p[0] - s * p[1]) + shift[0],
                scale * (s * p[0] + c * p[1]) + shift[1],
            ]
        })
        .collect()
}
