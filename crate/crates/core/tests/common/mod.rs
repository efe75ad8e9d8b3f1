#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rvlbm::lattice::{default_basis, VelocitySet};
use rvlbm::scheme::{SchemeSpec, ShiftMode};

pub fn d1q2(c: f64, s1: f64) -> SchemeSpec {
    SchemeSpec::new(
        VelocitySet::d1q2(1.0),
        default_basis(1, 2).unwrap(),
        vec![0.0, s1],
        vec![(1.0 + c) / 2.0, (1.0 - c) / 2.0],
        ShiftMode::Zero,
    )
    .unwrap()
}

/// D1Q3 with positive weights and rates in `[0.8, 1.5]` drawn from `seed`.
pub fn seeded_d1q3(seed: u64) -> SchemeSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let e: Vec<f64> = w.iter().map(|x| x / total).collect();
    let s = vec![0.0, rng.gen_range(0.8..1.5), rng.gen_range(0.8..1.5)];
    SchemeSpec::new(VelocitySet::d1q3(1.0), default_basis(1, 3).unwrap(), s, e, ShiftMode::Zero).unwrap()
}

pub fn d2q5() -> SchemeSpec {
    SchemeSpec::new(
        VelocitySet::d2q5(1.0),
        default_basis(2, 5).unwrap(),
        vec![0.0, 1.2, 1.3, 1.1, 1.4],
        vec![0.4, 0.2, 0.15, 0.1, 0.15],
        ShiftMode::Zero,
    )
    .unwrap()
}

/// The reference family at `ũ = 0`.
pub fn reference_schemes() -> Vec<(String, SchemeSpec)> {
    let mut out = Vec::new();
    for c in [0.0, 0.3, 0.6] {
        for s in [0.8, 1.0, 1.5, 2.0] {
            out.push((format!("D1Q2 c={c} s1={s}"), d1q2(c, s)));
        }
    }
    for seed in [7, 11] {
        out.push((format!("D1Q3 seed={seed}"), seeded_d1q3(seed)));
    }
    out.push(("D2Q5".to_string(), d2q5()));
    out
}

/// `ũ = u λ` in every component; `u = 0` gives the zero mode.
pub fn shifted(spec: &SchemeSpec, u: f64) -> SchemeSpec {
    let shift = if u == 0.0 {
        ShiftMode::Zero
    } else {
        ShiftMode::Constant(vec![u * spec.lambda(); spec.dim()])
    };
    spec.with_shift(shift).unwrap()
}

pub const U_SWEEP: [f64; 3] = [0.0, 0.2, 0.5];

/// Eight wavevectors with `|k|` from 0.5 to 4.
pub fn k_samples(dim: usize) -> Vec<Vec<f64>> {
    (0..8)
        .map(|i| {
            let mag = 0.5 + 0.5 * i as f64;
            if dim == 1 {
                vec![if i % 2 == 0 { mag } else { -mag }]
            } else {
                let a = 0.3 + 0.7 * i as f64;
                vec![mag * a.cos(), mag * a.sin()]
            }
        })
        .collect()
}

/// Plain multiple-relaxation-time step at rest: moments `P_k(v_j)`,
/// Gauss-Jordan inverse, periodic shift by the integer offsets.
pub struct ClassicalMrt {
    q: usize,
    sizes: Vec<usize>,
    offsets: Vec<Vec<i64>>,
    m: Vec<Vec<f64>>,
    m_inv: Vec<Vec<f64>>,
    s: Vec<f64>,
    e: Vec<f64>,
}

fn gauss_jordan(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut w: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| w[x][col].abs().total_cmp(&w[y][col].abs())).unwrap();
        w.swap(col, piv);
        let p = w[col][col];
        for x in w[col].iter_mut() {
            *x /= p;
        }
        for r in 0..n {
            if r != col {
                let f = w[r][col];
                let pivot_row = w[col].clone();
                for (x, y) in w[r].iter_mut().zip(pivot_row) {
                    *x -= f * y;
                }
            }
        }
    }
    w.into_iter().map(|r| r[n..].to_vec()).collect()
}

impl ClassicalMrt {
    /// `polys[k](v)` evaluates the k-th moment polynomial.
    pub fn new(
        offsets: Vec<Vec<i64>>,
        lambda: f64,
        polys: &[fn(&[f64]) -> f64],
        s: Vec<f64>,
        e: Vec<f64>,
        sizes: Vec<usize>,
    ) -> Self {
        let q = offsets.len();
        let v: Vec<Vec<f64>> = offsets
            .iter()
            .map(|o| o.iter().map(|&x| x as f64 * lambda).collect())
            .collect();
        let m: Vec<Vec<f64>> = (0..q).map(|k| (0..q).map(|j| polys[k](&v[j])).collect()).collect();
        let m_inv = gauss_jordan(&m);
        Self {
            q,
            sizes,
            offsets,
            m,
            m_inv,
            s,
            e,
        }
    }

    fn cells(&self) -> usize {
        self.sizes.iter().product()
    }

    fn upstream(&self, cell: usize, offset: &[i64]) -> usize {
        let mut rest = cell;
        let mut idx = 0;
        let mut stride = 1;
        for (a, &n) in self.sizes.iter().enumerate() {
            let c = rest % n;
            rest /= n;
            let src = (c as i64 - offset[a]).rem_euclid(n as i64) as usize;
            idx += src * stride;
            stride *= n;
        }
        idx
    }

    /// One collide-and-stream step on `f[j][cell]`.
    pub fn step(&self, f: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let q = self.q;
        let n = self.cells();
        let mut post = vec![vec![0.0; n]; q];
        for c in 0..n {
            let rho: f64 = (0..q).map(|j| f[j][c]).sum();
            let mut mstar = vec![0.0; q];
            for k in 0..q {
                let mk: f64 = (0..q).map(|j| self.m[k][j] * f[j][c]).sum();
                let eq: f64 = (0..q).map(|j| self.m[k][j] * self.e[j] * rho).sum();
                mstar[k] = mk + self.s[k] * (eq - mk);
            }
            for j in 0..q {
                post[j][c] = (0..q).map(|k| self.m_inv[j][k] * mstar[k]).sum();
            }
        }
        let mut out = vec![vec![0.0; n]; q];
        for j in 0..q {
            for c in 0..n {
                out[j][c] = post[j][self.upstream(c, &self.offsets[j])];
            }
        }
        out
    }
}

pub fn classical_for(spec: &SchemeSpec, sizes: Vec<usize>) -> ClassicalMrt {
    let one: fn(&[f64]) -> f64 = |_| 1.0;
    let x: fn(&[f64]) -> f64 = |v| v[0];
    let y: fn(&[f64]) -> f64 = |v| v[1];
    let xx: fn(&[f64]) -> f64 = |v| v[0] * v[0];
    let xx_plus_yy: fn(&[f64]) -> f64 = |v| v[0] * v[0] + v[1] * v[1];
    let xx_minus_yy: fn(&[f64]) -> f64 = |v| v[0] * v[0] - v[1] * v[1];
    let polys: Vec<fn(&[f64]) -> f64> = match (spec.dim(), spec.q()) {
        (1, 2) => vec![one, x],
        (1, 3) => vec![one, x, xx],
        (2, 5) => vec![one, x, y, xx_plus_yy, xx_minus_yy],
        other => panic!("no classical basis for {other:?}"),
    };
    ClassicalMrt::new(
        spec.velocity_set().offsets().to_vec(),
        spec.lambda(),
        &polys,
        spec.relaxation().to_vec(),
        spec.equilibrium().to_vec(),
        sizes,
    )
}

pub fn shipped_config(name: &str) -> rvlbm::config::ExperimentConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"));
    rvlbm::config::load_config_file(&path).unwrap()
}

pub const SHIPPED: [&str; 3] = ["d1q2", "d1q3", "d2q5"];
