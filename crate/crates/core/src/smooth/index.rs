//! Uniform cell index over the leading coordinates of a sample set, used to
//! visit only samples inside a compact kernel window.

const MAX_INDEXED_DIMS: usize = 3;
const MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Clone)]
pub(crate) struct CellIndex {
    dims: usize,
    origin: Vec<f64>,
    width: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    /// CSR layout: samples of cell `c` are `order[start[c]..start[c + 1]]`.
    start: Vec<usize>,
    order: Vec<u32>,
}

impl CellIndex {
    /// Index `n` points of dimension `dim` stored row-major in `x`, with cell
    /// widths no smaller than the window half-widths `radius`.
    pub(crate) fn build(x: &[f64], dim: usize, radius: &[f64]) -> Self {
        let n = x.len().checked_div(dim).unwrap_or(0);
        let dims = dim.min(MAX_INDEXED_DIMS);
        let mut origin = vec![f64::INFINITY; dims];
        let mut upper = vec![f64::NEG_INFINITY; dims];
        for i in 0..n {
            for k in 0..dims {
                let v = x[i * dim + k];
                origin[k] = origin[k].min(v);
                upper[k] = upper[k].max(v);
            }
        }
        let mut width: Vec<f64> = radius[..dims].iter().map(|&r| r.max(f64::MIN_POSITIVE)).collect();
        let mut counts = vec![1usize; dims];
        loop {
            let mut total = 1usize;
            for k in 0..dims {
                let span = (upper[k] - origin[k]).max(0.0);
                counts[k] = ((span / width[k]).floor() as usize).saturating_add(1).max(1);
                total = total.saturating_mul(counts[k]);
            }
            if total <= MAX_CELLS {
                break;
            }
            for w in &mut width {
                *w *= 2.0;
            }
        }
        let mut strides = vec![1usize; dims];
        for k in (0..dims.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * counts[k + 1];
        }
        let n_cells: usize = counts.iter().product();

        let mut index = Self {
            dims,
            origin,
            width,
            counts,
            strides,
            start: Vec::new(),
            order: Vec::new(),
        };
        let cell_of: Vec<usize> = (0..n)
            .map(|i| {
                (0..dims)
                    .map(|k| index.cell_coord(k, x[i * dim + k]) * index.strides[k])
                    .sum()
            })
            .collect();
        let mut start = vec![0usize; n_cells + 1];
        for &c in &cell_of {
            start[c + 1] += 1;
        }
        for c in 0..n_cells {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut order = vec![0u32; n];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c]] = i as u32;
            fill[c] += 1;
        }
        index.start = start;
        index.order = order;
        index
    }

    #[inline]
    fn cell_coord(&self, k: usize, v: f64) -> usize {
        let c = ((v - self.origin[k]) / self.width[k]).floor();
        if c <= 0.0 {
            0
        } else {
            (c as usize).min(self.counts[k] - 1)
        }
    }

    /// Call `f` for every sample whose indexed coordinates may lie within
    /// `radius` of `query`. Visiting order is deterministic.
    pub(crate) fn for_each_candidate(&self, query: &[f64], radius: &[f64], mut f: impl FnMut(usize)) {
        let dims = self.dims;
        let mut lo = [0usize; MAX_INDEXED_DIMS];
        let mut hi = [0usize; MAX_INDEXED_DIMS];
        for k in 0..dims {
            let a = (query[k] - radius[k] - self.origin[k]) / self.width[k] - 1e-9;
            let b = (query[k] + radius[k] - self.origin[k]) / self.width[k] + 1e-9;
            if b < 0.0 || a > (self.counts[k] - 1) as f64 + 1.0 {
                return;
            }
            lo[k] = if a <= 0.0 {
                0
            } else {
                (a.floor() as usize).min(self.counts[k] - 1)
            };
            hi[k] = if b <= 0.0 {
                0
            } else {
                (b.floor() as usize).min(self.counts[k] - 1)
            };
        }
        let mut cur = lo;
        loop {
            let cell: usize = (0..dims).map(|k| cur[k] * self.strides[k]).sum();
            for &i in &self.order[self.start[cell]..self.start[cell + 1]] {
                f(i as usize);
            }
            // odometer increment, last dimension fastest
            let mut k = dims;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    cur[k + 1..dims].copy_from_slice(&lo[k + 1..dims]);
                    break;
                }
            }
        }
    }
}
