use crate::error::{Error, Result};

/// Dense `[time, spectral, maps]` tensor stored in `[t][v][l]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "{} values for a {:?} tensor ({n} expected)",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    /// A single-map tensor from a time × spectral matrix.
    pub fn from_matrix(m: &ndarray::Array2<f64>) -> Self {
        let (n, v) = m.dim();
        Self {
            dims: [n, v, 1],
            data: m.iter().copied().collect(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, t: usize, v: usize, l: usize) -> usize {
        (t * self.dims[1] + v) * self.dims[2] + l
    }

    #[inline]
    pub fn get(&self, t: usize, v: usize, l: usize) -> f64 {
        self.data[self.index(t, v, l)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, v: usize, l: usize, value: f64) {
        let i = self.index(t, v, l);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Map-major copy: `planes[l][t * M + v]`.
    pub fn to_planar(&self) -> Vec<Vec<f64>> {
        let [n, m, l] = self.dims;
        let mut planes = vec![vec![0.0; n * m]; l];
        for (i, chunk) in self.data.chunks_exact(l.max(1)).enumerate() {
            for (k, &x) in chunk.iter().enumerate() {
                planes[k][i] = x;
            }
        }
        planes
    }

    pub fn from_planar(dims: [usize; 3], planes: &[Vec<f64>]) -> Self {
        let [n, m, l] = dims;
        let mut data = vec![0.0; n * m * l];
        for (k, plane) in planes.iter().enumerate() {
            for (i, &x) in plane.iter().enumerate() {
                data[i * l + k] = x;
            }
        }
        Self { dims, data }
    }
}
