use crate::error::{invalid, Error, Result};

/// Dense `n × c × h × w` tensor. Vectors are stored with `h = w = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {n}x{c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(n, c, h, w)]
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let l = self.sample_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n, self.c, self.h, self.w)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Row `n` of a vector-shaped tensor.
    pub fn row(&self, n: usize) -> &[f64] {
        self.sample(n)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Single feature map indexed `(channel, time, frequency)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap3 {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl FeatureMap3 {
    pub fn new(channels: usize, frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * frames * bins {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels}x{frames}x{bins}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("feature map contains non-finite values");
        }
        Ok(Self {
            channels,
            frames,
            bins,
            data,
        })
    }

    pub fn get(&self, c: usize, t: usize, f: usize) -> f64 {
        self.data[(c * self.frames + t) * self.bins + f]
    }

    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4 {
            n: 1,
            c: self.channels,
            h: self.frames,
            w: self.bins,
            data: self.data.clone(),
        }
    }

    pub fn from_tensor(t: &Tensor4) -> Self {
        assert_eq!(t.n, 1);
        Self {
            channels: t.c,
            frames: t.h,
            bins: t.w,
            data: t.data.clone(),
        }
    }
}
