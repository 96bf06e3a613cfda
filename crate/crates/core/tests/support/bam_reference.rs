//! Step-by-step scalar evaluation of a bottleneck attention module with
//! running batch-norm statistics, written without the library's layers.

use ffsv_core::nn::{BamModule, FeatureMap3, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p<'a>(s: &'a ParamStore, name: &str) -> &'a [f64] {
    s.get(s.find(name).unwrap_or_else(|| panic!("missing {name}")))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Returns `(refined, mask)` flattened as `(c, t, f)`.
pub fn reference_bam(x: &FeatureMap3, s: &ParamStore, prefix: &str) -> (Vec<f64>, Vec<f64>) {
    let (cn, tn, fnn) = (x.channels, x.frames, x.bins);
    let w1 = p(s, &format!("{prefix}.fc1.weight"));
    let b1 = p(s, &format!("{prefix}.fc1.bias"));
    let w2 = p(s, &format!("{prefix}.fc2.weight"));
    let hidden = b1.len();
    let bn = |name: &str, i: usize, v: f64| {
        let g = p(s, &format!("{prefix}.{name}.gamma"))[i];
        let b = p(s, &format!("{prefix}.{name}.beta"))[i];
        let m = p(s, &format!("{prefix}.{name}.running_mean"))[i];
        let var = p(s, &format!("{prefix}.{name}.running_var"))[i];
        g * (v - m) / (var + 1e-5).sqrt() + b
    };

    let mut mc = vec![0.0; cn];
    let mut gc = vec![0.0; cn];
    for c in 0..cn {
        let mut sum = 0.0;
        for t in 0..tn {
            for f in 0..fnn {
                sum += x.get(c, t, f);
            }
        }
        gc[c] = sum / (tn * fnn) as f64;
    }
    let mut h1 = vec![0.0; hidden];
    for j in 0..hidden {
        let mut a = b1[j];
        for c in 0..cn {
            a += w1[j * cn + c] * gc[c];
        }
        h1[j] = a.max(0.0);
    }
    for c in 0..cn {
        let mut a = 0.0;
        for j in 0..hidden {
            a += w2[c * hidden + j] * h1[j];
        }
        mc[c] = bn("bn_c", c, a);
    }

    let wr = p(s, &format!("{prefix}.tf_reduce.weight"));
    let br = p(s, &format!("{prefix}.tf_reduce.bias"));
    let wd = p(s, &format!("{prefix}.tf_dilated.weight"));
    let bd = p(s, &format!("{prefix}.tf_dilated.bias"));
    let wo = p(s, &format!("{prefix}.tf_out.weight"));
    let mut pooled = vec![vec![0.0; fnn]; tn];
    for t in 0..tn {
        for f in 0..fnn {
            let mut sum = 0.0;
            for c in 0..cn {
                sum += x.get(c, t, f);
            }
            pooled[t][f] = sum / cn as f64;
        }
    }
    let mut t1 = vec![vec![vec![0.0; fnn]; tn]; hidden];
    for j in 0..hidden {
        for t in 0..tn {
            for f in 0..fnn {
                t1[j][t][f] = (wr[j] * pooled[t][f] + br[j]).max(0.0);
            }
        }
    }
    let mut t2 = vec![vec![vec![0.0; fnn]; tn]; hidden];
    for j in 0..hidden {
        for t in 0..tn {
            for f in 0..fnn {
                let mut a = bd[j];
                for i in 0..hidden {
                    for kh in 0..3 {
                        for kw in 0..3 {
                            let tt = t as isize + 2 * (kh as isize - 1);
                            let ff = f as isize + 2 * (kw as isize - 1);
                            if tt < 0 || ff < 0 || tt >= tn as isize || ff >= fnn as isize {
                                continue;
                            }
                            a += wd[((j * hidden + i) * 3 + kh) * 3 + kw] * t1[i][tt as usize][ff as usize];
                        }
                    }
                }
                t2[j][t][f] = a.max(0.0);
            }
        }
    }
    let mut refined = Vec::with_capacity(cn * tn * fnn);
    let mut mask = Vec::with_capacity(cn * tn * fnn);
    for c in 0..cn {
        for t in 0..tn {
            for f in 0..fnn {
                let mut a = 0.0;
                for j in 0..hidden {
                    a += wo[j] * t2[j][t][f];
                }
                let mtf = bn("bn_tf", 0, a);
                let m = (sigmoid(mc[c]) + sigmoid(mtf)) / 2.0;
                mask.push(m);
                refined.push(x.get(c, t, f) * (1.0 + m));
            }
        }
    }
    (refined, mask)
}

/// A 2-channel, 2-frame, 2-bin input with every module parameter and
/// running statistic pinned to small seeded values.
pub fn pinned_fixture() -> (BamModule, ParamStore, FeatureMap3) {
    let mut store = ParamStore::new();
    let bam = BamModule::new(&mut store, "bam", 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for prm in &mut store.params {
        for v in &mut prm.value {
            *v = if prm.name.ends_with("running_var") {
                rng.random_range(0.5..1.5)
            } else if prm.name.ends_with(".bias") {
                // keeps the rectifiers in their active region
                rng.random_range(0.1..0.5)
            } else {
                rng.random_range(-0.5..0.5)
            };
        }
    }
    let x = FeatureMap3::new(2, 2, 2, vec![0.3, -1.2, 0.7, 2.1, -0.4, 0.9, 1.6, -0.8]).unwrap();
    (bam, store, x)
}
