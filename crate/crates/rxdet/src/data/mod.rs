//! Dataset types and the data pipeline: file I/O, binning-minimum
//! down-sampling, normalization, augmentation, synthetic generation, and
//! anchor computation.

pub mod anchors;
pub mod augment;
pub mod downsample;
pub mod io;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of impairment classes in the RxMER task.
pub const N_CLASSES: usize = 5;
/// Upper bound of raw MER values (dB).
pub const MER_MAX: f32 = 63.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpairmentClass {
    LteIngress,
    Wave,
    RollOff,
    SuckOut,
    Spike,
}

impl ImpairmentClass {
    pub const ALL: [ImpairmentClass; N_CLASSES] = [
        ImpairmentClass::LteIngress,
        ImpairmentClass::Wave,
        ImpairmentClass::RollOff,
        ImpairmentClass::SuckOut,
        ImpairmentClass::Spike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImpairmentClass::LteIngress => "lte_ingress",
            ImpairmentClass::Wave => "wave",
            ImpairmentClass::RollOff => "roll_off",
            ImpairmentClass::SuckOut => "suck_out",
            ImpairmentClass::Spike => "spike",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Canonical class-name list, in index order.
    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

/// Ground-truth anomaly: proportional center, proportional width, class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class: ImpairmentClass,
    pub x: f32,
    pub w: f32,
}

impl Annotation {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.x) || !self.x.is_finite() {
            return Err(Error::Input(format!("annotation center {} outside [0,1]", self.x)));
        }
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(Error::Input(format!("annotation width {} outside (0,1]", self.w)));
        }
        Ok(())
    }

    pub fn interval(&self) -> (f32, f32) {
        (self.x - self.w / 2.0, self.x + self.w / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Synthetic,
    #[default]
    Labeled,
}

/// One capture: raw per-sub-carrier MER values plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f32>,
    pub annotations: Vec<Annotation>,
    pub source: SourceTag,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Ground-truth instances per class.
    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0usize; N_CLASSES];
        for s in &self.samples {
            for a in &s.annotations {
                counts[a.class.index()] += 1;
            }
        }
        counts
    }
}
