//! Complex vector-valued samples on uniform boxes: the universal
//! discretization behind every norm and solve in this crate.
//!
//! Axes are periodic (spectral), half-line (trapezoid quadrature, finite
//! differences in time), or full-line with a marked origin (used by the
//! reflection and zero extensions). The fiber dimension is last and fastest
//! in memory.

use num_complex::Complex64 as C64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// Geometry of one grid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisKind {
    /// Samples at j * (length / n); spectrally differentiable.
    Periodic { length: f64 },
    /// Samples at j * dt, j >= 0; non-periodic, always the last axis.
    HalfLine { dt: f64 },
    /// Samples at (j - origin) * dt; produced by half-line extensions.
    Line { dt: f64, origin: usize },
}

/// One axis: sample count plus geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub kind: AxisKind,
}

impl Axis {
    pub fn periodic(n: usize, length: f64) -> Self {
        Axis { n, kind: AxisKind::Periodic { length } }
    }

    pub fn half_line(n: usize, dt: f64) -> Self {
        Axis { n, kind: AxisKind::HalfLine { dt } }
    }

    pub fn line(n: usize, dt: f64, origin: usize) -> Self {
        Axis { n, kind: AxisKind::Line { dt, origin } }
    }

    pub fn spacing(&self) -> f64 {
        match self.kind {
            AxisKind::Periodic { length } => length / self.n as f64,
            AxisKind::HalfLine { dt } | AxisKind::Line { dt, .. } => dt,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        match self.kind {
            AxisKind::Periodic { .. } => i as f64 * self.spacing(),
            AxisKind::HalfLine { dt } => i as f64 * dt,
            AxisKind::Line { dt, origin } => (i as f64 - origin as f64) * dt,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, AxisKind::Periodic { .. })
    }

    /// Trapezoid weight on bounded axes, flat weight on periodic ones.
    pub fn quad_weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        match self.kind {
            AxisKind::Periodic { .. } => h,
            _ => {
                if i == 0 || i + 1 == self.n {
                    0.5 * h
                } else {
                    h
                }
            }
        }
    }
}

/// Complex grid samples with fiber dimension `fiber`, row-major, fiber last.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    axes: Vec<Axis>,
    fiber: usize,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn zeros(axes: Vec<Axis>, fiber: usize) -> Self {
        let n: usize = axes.iter().map(|a| a.n).product::<usize>() * fiber;
        GridFunction { axes, fiber, values: vec![C64::new(0.0, 0.0); n] }
    }

    /// Builds a grid by evaluating `f` at every node coordinate.
    pub fn from_fn(axes: Vec<Axis>, fiber: usize, f: impl Fn(&[f64]) -> Vec<C64> + Sync) -> Self {
        let mut g = GridFunction::zeros(axes, fiber);
        let shape: Vec<usize> = g.axes.iter().map(|a| a.n).collect();
        let axes = g.axes.clone();
        let fib = g.fiber;
        g.values
            .par_chunks_mut(fib)
            .enumerate()
            .for_each(|(flat, block)| {
                let idx = unflatten(flat, &shape);
                let x: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| axes[k].coord(i)).collect();
                let v = f(&x);
                debug_assert_eq!(v.len(), fib);
                block.copy_from_slice(&v);
            });
        g
    }

    pub fn from_scalar_fn(axes: Vec<Axis>, f: impl Fn(&[f64]) -> C64 + Sync) -> Self {
        GridFunction::from_fn(axes, 1, |x| vec![f(x)])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.axes.iter().all(Axis::is_periodic)
    }

    /// The fiber block at a flat node index.
    pub fn fiber_at(&self, flat: usize) -> &[C64] {
        &self.values[flat * self.fiber..(flat + 1) * self.fiber]
    }

    pub fn fiber_at_mut(&mut self, flat: usize) -> &mut [C64] {
        &mut self.values[flat * self.fiber..(flat + 1) * self.fiber]
    }

    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        let shape = self.shape();
        let idx = unflatten(flat, &shape);
        idx.iter().enumerate().map(|(k, &i)| self.axes[k].coord(i)).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.axes[k].n);
            f = f * self.axes[k].n + i;
        }
        f
    }

    /// Quadrature weight of a node (product of per-axis weights).
    pub fn quad_weight(&self, flat: usize) -> f64 {
        let shape = self.shape();
        let idx = unflatten(flat, &shape);
        idx.iter()
            .enumerate()
            .map(|(k, &i)| self.axes[k].quad_weight(i))
            .product()
    }

    pub fn same_layout(&self, other: &GridFunction) -> bool {
        self.axes == other.axes && self.fiber == other.fiber
    }

    pub fn check_same_layout(&self, other: &GridFunction) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::shape(format!(
                "grid layouts differ: {:?}/{} vs {:?}/{}",
                self.shape(),
                self.fiber,
                other.shape(),
                other.fiber
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_layout(other)?;
        let mut out = self.clone();
        out.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_layout(other)?;
        let mut out = self.clone();
        out.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn scale(&self, z: C64) -> GridFunction {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|a| *a *= z);
        out
    }

    /// self += c * other.
    pub fn axpy(&mut self, c: C64, other: &GridFunction) -> Result<()> {
        self.check_same_layout(other)?;
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += c * b);
        Ok(())
    }

    /// Pointwise multiplication by a scalar field on the same grid
    /// (fiber-broadcast when the factor has fiber 1).
    pub fn mul_scalar_field(&self, factor: &GridFunction) -> Result<GridFunction> {
        if factor.fiber != 1 || factor.axes != self.axes {
            return Err(Error::shape("scalar field factor must share the grid and have fiber 1"));
        }
        let mut out = self.clone();
        let fib = self.fiber;
        out.values
            .par_chunks_mut(fib)
            .zip(factor.values.par_iter())
            .for_each(|(block, &s)| block.iter_mut().for_each(|v| *v *= s));
        Ok(out)
    }

    /// Maximum pointwise fiber norm (the grid sup).
    pub fn max_fiber_norm(&self) -> f64 {
        self.values
            .par_chunks(self.fiber)
            .map(|block| block.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .reduce(|| 0.0, f64::max)
    }

    /// Plain L2 norm of the coefficient vector (no quadrature weights).
    pub fn l2_raw(&self) -> f64 {
        det_sum(self.values.len(), |i| self.values[i].norm_sqr()).sqrt()
    }

    /// In-place DFT along one periodic axis (unnormalized forward,
    /// 1/n-normalized inverse).
    pub fn fft_axis(&mut self, axis: usize, direction: FftDirection) -> Result<()> {
        if !self.axes[axis].is_periodic() {
            return Err(Error::config(format!("axis {axis} is not periodic; cannot DFT")));
        }
        let n = self.axes[axis].n;
        if n == 1 {
            return Ok(());
        }
        let plan = plan_fft(n, direction);
        let stride: usize = self.axes[axis + 1..].iter().map(|a| a.n).product::<usize>() * self.fiber;
        let block = stride * n;
        let norm = if direction == FftDirection::Inverse {
            1.0 / n as f64
        } else {
            1.0
        };
        self.values.par_chunks_mut(block).for_each_init(
            || vec![C64::new(0.0, 0.0); n],
            |scratch, chunk| {
                for inner in 0..stride {
                    for j in 0..n {
                        scratch[j] = chunk[inner + j * stride];
                    }
                    plan.process(scratch);
                    for j in 0..n {
                        chunk[inner + j * stride] = scratch[j] * norm;
                    }
                }
            },
        );
        Ok(())
    }

    /// Forward DFT over all periodic axes.
    pub fn fft_forward_all(&mut self) -> Result<()> {
        for k in 0..self.axes.len() {
            if self.axes[k].is_periodic() {
                self.fft_axis(k, FftDirection::Forward)?;
            }
        }
        Ok(())
    }

    /// Inverse DFT over all periodic axes.
    pub fn fft_inverse_all(&mut self) -> Result<()> {
        for k in 0..self.axes.len() {
            if self.axes[k].is_periodic() {
                self.fft_axis(k, FftDirection::Inverse)?;
            }
        }
        Ok(())
    }

    /// Signed frequency of DFT index j on a periodic axis: 2 pi s(j) / length.
    pub fn frequency(&self, axis: usize, j: usize) -> f64 {
        let n = self.axes[axis].n;
        let length = match self.axes[axis].kind {
            AxisKind::Periodic { length } => length,
            _ => panic!("frequency of a non-periodic axis"),
        };
        let s = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        std::f64::consts::TAU * s / length
    }

    /// True at the unmatched Nyquist index of an even-length axis.
    pub fn is_nyquist(&self, axis: usize, j: usize) -> bool {
        let n = self.axes[axis].n;
        n % 2 == 0 && j == n / 2
    }

    /// Spectral mixed derivative d^alpha over periodic axes. Odd-order
    /// factors zero the Nyquist mode.
    pub fn spectral_derivative(&self, alpha: &[u32]) -> Result<GridFunction> {
        if alpha.len() != self.axes.len() {
            return Err(Error::shape("derivative multiindex rank mismatch"));
        }
        for (k, &a) in alpha.iter().enumerate() {
            if a > 0 && !self.axes[k].is_periodic() {
                return Err(Error::config(format!(
                    "spectral derivative requested on non-periodic axis {k}"
                )));
            }
        }
        let mut hat = self.clone();
        hat.fft_forward_all()?;
        let shape = self.shape();
        let fib = self.fiber;
        let axes_ref = &hat.axes;
        let alpha_ref = alpha;
        let factors: Vec<C64> = (0..self.node_count())
            .into_par_iter()
            .map(|flat| {
                let idx = unflatten(flat, &shape);
                let mut f = C64::new(1.0, 0.0);
                for (k, &a) in alpha_ref.iter().enumerate() {
                    if a == 0 {
                        continue;
                    }
                    let n = axes_ref[k].n;
                    let is_nyq = n % 2 == 0 && idx[k] == n / 2;
                    if is_nyq && a % 2 == 1 {
                        f = C64::new(0.0, 0.0);
                        break;
                    }
                    let freq = {
                        let s = if idx[k] <= n / 2 {
                            idx[k] as f64
                        } else {
                            idx[k] as f64 - n as f64
                        };
                        let length = match axes_ref[k].kind {
                            AxisKind::Periodic { length } => length,
                            _ => unreachable!(),
                        };
                        std::f64::consts::TAU * s / length
                    };
                    f *= C64::new(0.0, freq).powu(a);
                }
                f
            })
            .collect();
        hat.values
            .par_chunks_mut(fib)
            .zip(factors.par_iter())
            .for_each(|(block, &f)| block.iter_mut().for_each(|v| *v *= f));
        hat.fft_inverse_all()?;
        Ok(hat)
    }

    /// Finite-difference derivative of order `order` along the last axis
    /// (half-line or full-line), with centered interior stencils of accuracy
    /// `accuracy` and one-sided stencils near the ends.
    pub fn fd_derivative_last_axis(&self, order: u32, accuracy: usize) -> Result<GridFunction> {
        let axis = self.axes.len() - 1;
        let n = self.axes[axis].n;
        let width = order as usize + accuracy; // stencil points
        if n < width {
            return Err(Error::config(format!(
                "axis of {n} samples is too short for an order-{order} derivative at accuracy {accuracy}"
            )));
        }
        let dt = self.axes[axis].spacing();
        // Precompute Fornberg weights per target index.
        let weights: Vec<(usize, Vec<f64>)> = (0..n)
            .map(|i| {
                let half = width / 2;
                let start = i.saturating_sub(half).min(n - width);
                let nodes: Vec<f64> = (0..width).map(|j| (start + j) as f64 * dt).collect();
                (start, fornberg_weights(i as f64 * dt, &nodes, order as usize))
            })
            .collect();
        let mut out = self.clone();
        let fib = self.fiber;
        let stride = fib; // last axis is fastest over fiber blocks
        let lane = n * stride;
        let src = &self.values;
        out.values
            .par_chunks_mut(lane)
            .enumerate()
            .for_each(|(lane_idx, chunk)| {
                let base = lane_idx * lane;
                for i in 0..n {
                    let (start, w) = &weights[i];
                    for c in 0..fib {
                        let mut acc = C64::new(0.0, 0.0);
                        for (j, &wj) in w.iter().enumerate() {
                            acc += src[base + (start + j) * stride + c] * wj;
                        }
                        chunk[i * stride + c] = acc;
                    }
                }
            });
        Ok(out)
    }

    /// Extracts the slice at index `i` of the last axis (e.g. one time level).
    pub fn slice_last_axis(&self, i: usize) -> GridFunction {
        let axis = self.axes.len() - 1;
        let n = self.axes[axis].n;
        assert!(i < n);
        let stride = self.fiber;
        let lane = n * stride;
        let mut out = GridFunction::zeros(self.axes[..axis].to_vec(), self.fiber);
        let src = &self.values;
        out.values
            .iter_mut()
            .enumerate()
            .for_each(|(q, v)| {
                let outer = q / stride;
                let c = q % stride;
                *v = src[outer * lane + i * stride + c];
            });
        out
    }

    /// Writes `slice` into position `i` of the last axis.
    pub fn set_slice_last_axis(&mut self, i: usize, slice: &GridFunction) -> Result<()> {
        let axis = self.axes.len() - 1;
        if slice.axes != self.axes[..axis] || slice.fiber != self.fiber {
            return Err(Error::shape("slice layout does not match leading axes"));
        }
        let n = self.axes[axis].n;
        assert!(i < n);
        let stride = self.fiber;
        let lane = n * stride;
        for (q, &v) in slice.values.iter().enumerate() {
            let outer = q / stride;
            let c = q % stride;
            self.values[outer * lane + i * stride + c] = v;
        }
        Ok(())
    }

    /// Replaces the last axis marker (sample count must match).
    pub fn with_last_axis(mut self, axis: Axis) -> Result<GridFunction> {
        let k = self.axes.len() - 1;
        if axis.n != self.axes[k].n {
            return Err(Error::shape("axis replacement must preserve sample count"));
        }
        self.axes[k] = axis;
        Ok(self)
    }
}

/// Deterministic chunked sum: fixed-size sequential chunks are summed in
/// parallel, then combined in index order, so results do not depend on the
/// worker count.
pub fn det_sum(len: usize, term: impl Fn(usize) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 4096;
    if len == 0 {
        return 0.0;
    }
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(len);
            let mut s = 0.0;
            for i in lo..hi {
                s += term(i);
            }
            s
        })
        .collect();
    partial.iter().sum()
}

pub fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0usize; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

static FFT_PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

pub fn plan_fft(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    FFT_PLANNER.lock().unwrap().plan_fft(n, direction)
}

/// Fornberg weights: w such that f^(m)(xbar) ~= sum_j w_j f(x_j).
pub fn fornberg_weights(xbar: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n > m, "need more than m nodes for an m-th derivative");
    let mut c = vec![vec![0.0_f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - xbar;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - xbar;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// Periodic trigonometric interpolation of a grid at arbitrary points.
/// Exact on band-limited data; O(node_count) per query.
pub struct TrigInterpolator {
    spectrum: GridFunction,
}

impl TrigInterpolator {
    pub fn new(u: &GridFunction) -> Result<Self> {
        if !u.is_fully_periodic() {
            return Err(Error::config("trig interpolation requires periodic axes"));
        }
        let mut spectrum = u.clone();
        spectrum.fft_forward_all()?;
        let n = spectrum.node_count() as f64;
        spectrum.values.iter_mut().for_each(|z| *z /= n);
        Ok(TrigInterpolator { spectrum })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<C64> {
        let shape = self.spectrum.shape();
        let fib = self.spectrum.fiber_dim();
        let d = shape.len();
        // Per-axis phase tables e^{i k x}.
        let mut phases: Vec<Vec<C64>> = Vec::with_capacity(d);
        for k in 0..d {
            let n = shape[k];
            let tbl: Vec<C64> = (0..n)
                .map(|j| {
                    let freq = self.spectrum.frequency(k, j);
                    // Real part convention at the Nyquist mode: cosine only.
                    if self.spectrum.is_nyquist(k, j) {
                        C64::new((freq * x[k]).cos(), 0.0)
                    } else {
                        C64::new(0.0, freq * x[k]).exp()
                    }
                })
                .collect();
            phases.push(tbl);
        }
        let mut out = vec![C64::new(0.0, 0.0); fib];
        for flat in 0..self.spectrum.node_count() {
            let idx = unflatten(flat, &shape);
            let mut ph = C64::new(1.0, 0.0);
            for k in 0..d {
                ph *= phases[k][idx[k]];
            }
            let block = self.spectrum.fiber_at(flat);
            for c in 0..fib {
                out[c] += block[c] * ph;
            }
        }
        out
    }
}

/// Tensor-product Lagrange interpolation of fixed window width on periodic
/// axes; cheap local alternative to [`TrigInterpolator`] for smooth data.
pub fn interp_lagrange_periodic(u: &GridFunction, x: &[f64], window: usize) -> Result<Vec<C64>> {
    if !u.is_fully_periodic() {
        return Err(Error::config("Lagrange interpolation requires periodic axes"));
    }
    let shape = u.shape();
    let d = shape.len();
    let fib = u.fiber_dim();
    // Per-axis window nodes (periodic indices) and barycentric-style weights.
    let mut nodes: Vec<Vec<usize>> = Vec::with_capacity(d);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let n = shape[k];
        let h = u.axes()[k].spacing();
        let length = n as f64 * h;
        let t = x[k].rem_euclid(length) / h;
        let center = t.floor() as isize;
        let w = window.min(n);
        let start = center - (w as isize - 1) / 2;
        let idxs: Vec<usize> = (0..w as isize)
            .map(|j| (start + j).rem_euclid(n as isize) as usize)
            .collect();
        // Lagrange weights on the unwrapped positions start..start+w.
        let mut lw = vec![1.0_f64; w];
        for a in 0..w {
            let xa = (start + a as isize) as f64;
            for b in 0..w {
                if a != b {
                    let xb = (start + b as isize) as f64;
                    lw[a] *= (t - xb) / (xa - xb);
                }
            }
        }
        nodes.push(idxs);
        weights.push(lw);
    }
    let mut out = vec![C64::new(0.0, 0.0); fib];
    let mut sel = vec![0usize; d];
    loop {
        let mut wgt = 1.0;
        let mut idx = vec![0usize; d];
        for k in 0..d {
            wgt *= weights[k][sel[k]];
            idx[k] = nodes[k][sel[k]];
        }
        let flat = u.flat_index(&idx);
        let block = u.fiber_at(flat);
        for c in 0..fib {
            out[c] += block[c] * wgt;
        }
        let mut k = 0;
        loop {
            if k == d {
                return Ok(out);
            }
            sel[k] += 1;
            if sel[k] < nodes[k].len() {
                break;
            }
            sel[k] = 0;
            k += 1;
        }
    }
}
