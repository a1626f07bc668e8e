use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ThermalImage;
use crate::scene::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One thermal frame with its camera. The capture time is `image.timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedCapture {
    pub view_id: usize,
    pub camera: Camera,
    pub image: ThermalImage,
    pub split: Split,
}

impl TimedCapture {
    pub fn time(&self) -> f64 {
        self.image.timestamp
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub captures: Vec<TimedCapture>,
}

impl Dataset {
    pub fn train(&self) -> impl Iterator<Item = &TimedCapture> {
        self.captures.iter().filter(|c| c.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &TimedCapture> {
        self.captures.iter().filter(|c| c.split == Split::Test)
    }

    /// Earliest and latest training timestamps.
    pub fn train_span(&self) -> Result<(f64, f64)> {
        let mut it = self.train().map(|c| c.time());
        let first = it.next().ok_or_else(|| Error::invalid("dataset has no training captures"))?;
        Ok(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    /// Integration anchor: the earliest training time.
    pub fn t0(&self) -> Result<f64> {
        Ok(self.train_span()?.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.train_span()?;
        for (i, c) in self.captures.iter().enumerate() {
            if c.image.width != c.camera.width || c.image.height != c.camera.height {
                return Err(Error::invalid(format!(
                    "capture {i}: image is {}x{} but camera is {}x{}",
                    c.image.width, c.image.height, c.camera.width, c.camera.height
                )));
            }
            if c.split == Split::Test && !(c.time() >= lo && c.time() <= hi) {
                return Err(Error::invalid(format!(
                    "capture {i}: test time {} outside training span [{lo}, {hi}]",
                    c.time()
                )));
            }
        }
        Ok(())
    }

    /// Distinct capture times, ascending.
    pub fn times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.captures.iter().map(|c| c.time()).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}
