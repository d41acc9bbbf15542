//! Inflating 2D convolution kernels into 3D ones.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Kernel2d {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::domain(format!(
                "kernel of {rows}x{cols} given {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// `depth × rows × cols` kernel, depth outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3d {
    pub depth: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Kernel3d {
    pub fn get(&self, d: usize, r: usize, c: usize) -> f64 {
        self.data[(d * self.rows + r) * self.cols + c]
    }

    pub fn slice(&self, d: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[d * n..(d + 1) * n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflationMode {
    /// 2D kernel in the temporally central slice, zeros elsewhere.
    Central,
    /// 2D kernel divided by depth, repeated in every slice.
    Average,
}

impl FromStr for InflationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" => Ok(Self::Central),
            "average" => Ok(Self::Average),
            _ => Err(Error::usage(format!("unknown inflation mode {s:?}"))),
        }
    }
}

impl fmt::Display for InflationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Central => "central",
            Self::Average => "average",
        })
    }
}

pub fn inflate_kernel(kernel: &Kernel2d, depth: usize, mode: InflationMode) -> Result<Kernel3d> {
    if depth == 0 {
        return Err(Error::usage("inflation depth must be positive"));
    }
    let plane = kernel.rows * kernel.cols;
    let mut data = vec![0.0; depth * plane];
    match mode {
        InflationMode::Central => {
            if depth % 2 == 0 {
                return Err(Error::usage(format!(
                    "central inflation needs an odd depth, got {depth}"
                )));
            }
            let mid = depth / 2;
            data[mid * plane..(mid + 1) * plane].copy_from_slice(&kernel.data);
        }
        InflationMode::Average => {
            let scale = depth as f64;
            for slice in data.chunks_exact_mut(plane) {
                for (o, k) in slice.iter_mut().zip(&kernel.data) {
                    *o = k / scale;
                }
            }
        }
    }
    Ok(Kernel3d {
        depth,
        rows: kernel.rows,
        cols: kernel.cols,
        data,
    })
}
