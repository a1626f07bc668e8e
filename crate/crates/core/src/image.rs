use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Result};

/// Row-major raster of surface temperatures in kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    /// Capture time in seconds.
    pub timestamp: f64,
}

impl ThermalImage {
    pub fn filled(width: usize, height: usize, value: f64, timestamp: f64) -> Self {
        ThermalImage {
            width,
            height,
            data: vec![value; width * height],
            timestamp,
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>, timestamp: f64) -> Result<Self> {
        check_len("thermal image", width * height, data.len())?;
        Ok(ThermalImage {
            width,
            height,
            data,
            timestamp,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
