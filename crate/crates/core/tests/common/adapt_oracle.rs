//! Straight-line per-view implementation of the adaptation module.

use lfsafa::adapt::{AdaptConfig, AdaptFlags, AdaptationParams};
use lfsafa::nn::{ConvParams, Tensor};
use rand::Rng;

/// A `[C, H, W]` feature map as plain nested data.
#[derive(Clone, Debug)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Map {
    pub fn from_tensor(t: &Tensor<f32>) -> Map {
        let s = t.shape();
        Map {
            c: s[0],
            h: s[1],
            w: s[2],
            v: t.data().iter().map(|&x| x as f64).collect(),
        }
    }
    fn at(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.v[(c * self.h + y as usize) * self.w + x as usize]
        }
    }
}

fn conv(m: &Map, p: &ConvParams<f32>) -> Map {
    let (co, ci, k) = (p.kernel.shape()[0], p.kernel.shape()[1], p.kernel.shape()[2]);
    assert_eq!(ci, m.c);
    let r = (k / 2) as isize;
    let kw = p.kernel.data();
    let mut v = vec![0.0; co * m.h * m.w];
    for o in 0..co {
        for y in 0..m.h {
            for x in 0..m.w {
                let mut acc = p.bias.data()[o] as f64;
                for c in 0..ci {
                    for dy in 0..k {
                        for dx in 0..k {
                            let w = kw[((o * ci + c) * k + dy) * k + dx] as f64;
                            acc += w * m.at(c, y as isize + dy as isize - r, x as isize + dx as isize - r);
                        }
                    }
                }
                v[(o * m.h + y) * m.w + x] = acc;
            }
        }
    }
    Map { c: co, h: m.h, w: m.w, v }
}

fn relu(m: &Map) -> Map {
    Map {
        v: m.v.iter().map(|&x| x.max(0.0)).collect(),
        ..m.clone()
    }
}

fn add(a: &Map, b: &Map) -> Map {
    Map {
        v: a.v.iter().zip(&b.v).map(|(x, y)| x + y).collect(),
        ..a.clone()
    }
}

fn cat(parts: &[Map]) -> Map {
    Map {
        c: parts.iter().map(|p| p.c).sum(),
        h: parts[0].h,
        w: parts[0].w,
        v: parts.iter().flat_map(|p| p.v.iter().copied()).collect(),
    }
}

/// `f_i' = f_i + F_s(concat_j SAS_j([f_j, f_i - f_j]))`, one view at a time.
pub fn oracle(features: &[Map], p: &AdaptationParams<f32>) -> Vec<Map> {
    let n = features.len();
    (0..n)
        .map(|i| {
            let fi = &features[i];
            let shifted: Vec<Map> = (0..n)
                .map(|j| {
                    let fj = &features[j];
                    let input = if p.config.flags.use_difference {
                        let diff = Map {
                            v: fi.v.iter().zip(&fj.v).map(|(a, b)| a - b).collect(),
                            ..fi.clone()
                        };
                        cat(&[fj.clone(), diff])
                    } else {
                        fj.clone()
                    };
                    let mut h = conv(&input, &p.sas[j].entry);
                    for b in &p.sas[j].blocks {
                        h = add(&h, &conv(&relu(&conv(&h, &b.conv1)), &b.conv2));
                    }
                    h
                })
                .collect();
            let fused = conv(&conv(&cat(&shifted), &p.fusion.blend), &p.fusion.process);
            if p.config.flags.use_residual {
                add(fi, &fused)
            } else {
                fused
            }
        })
        .collect()
}

fn randomize(t: &mut Tensor<f32>, scale: f32, rng: &mut impl Rng) {
    for v in t.data_mut() {
        *v = rng.random_range(-scale..scale);
    }
}

/// Initialized parameters with a non-zero process conv so every term contributes.
pub fn live_params(angular: usize, c: usize, cx: usize, flags: AdaptFlags, rng: &mut impl Rng) -> AdaptationParams<f32> {
    let mut p = AdaptationParams::init(AdaptConfig::new(angular, c, cx, flags), rng).unwrap();
    randomize(&mut p.fusion.process.kernel, 0.3, rng);
    randomize(&mut p.fusion.process.bias, 0.1, rng);
    p
}

pub fn features(n: usize, c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Vec<Tensor<f32>> {
    (0..n).map(|_| Tensor::uniform(vec![c, h, w], -0.5, 0.5, rng)).collect()
}

/// Largest absolute gap between the library outputs and the oracle.
pub fn max_gap(got: &[Tensor<f32>], want: &[Map]) -> f64 {
    let mut worst: f64 = 0.0;
    for (g, e) in got.iter().zip(want) {
        assert_eq!(g.shape(), &[e.c, e.h, e.w]);
        for (a, b) in g.data().iter().zip(&e.v) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    worst
}

/// Flag combinations exercised against the oracle.
pub fn flag_variants() -> [AdaptFlags; 3] {
    [
        AdaptFlags::default(),
        AdaptFlags {
            use_difference: false,
            use_residual: true,
        },
        AdaptFlags {
            use_difference: true,
            use_residual: false,
        },
    ]
}
