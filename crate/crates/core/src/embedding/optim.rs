//! AMSGrad: Adam with a running maximum of the second-moment estimate.

use ndarray::{Array2, Zip};

#[derive(Debug, Clone)]
struct Moments {
    m: Array2<f64>,
    v: Array2<f64>,
    v_max: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct AmsGrad {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    state: Vec<Moments>,
}

impl AmsGrad {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        AmsGrad {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            state: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update over every parameter tensor. Tensors must be passed in the same
    /// order and with the same shapes on every call.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[&Array2<f64>]) {
        assert_eq!(params.len(), grads.len());
        if self.state.is_empty() {
            self.state = params
                .iter()
                .map(|p| Moments {
                    m: Array2::zeros(p.raw_dim()),
                    v: Array2::zeros(p.raw_dim()),
                    v_max: Array2::zeros(p.raw_dim()),
                })
                .collect();
        }
        assert_eq!(self.state.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let t = self.t as i32;
        let step_size = self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.state) {
            assert_eq!(p.raw_dim(), g.raw_dim());
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, v_max: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                if *v > *v_max {
                    *v_max = *v;
                }
                *p -= step_size * *m / (v_max.sqrt() + eps);
            };
            match (p.as_slice_mut(), g.as_slice()) {
                (Some(ps), Some(gs)) => {
                    let (ms, vs, xs) = (
                        s.m.as_slice_mut().expect("owned"),
                        s.v.as_slice_mut().expect("owned"),
                        s.v_max.as_slice_mut().expect("owned"),
                    );
                    for i in 0..ps.len() {
                        update(&mut ps[i], gs[i], &mut ms[i], &mut vs[i], &mut xs[i]);
                    }
                }
                _ => Zip::from(&mut **p)
                    .and(*g)
                    .and(&mut s.m)
                    .and(&mut s.v)
                    .and(&mut s.v_max)
                    .for_each(|p, &g, m, v, v_max| update(p, g, m, v, v_max)),
            }
        }
    }
}
