//! Shipped hyperparameter presets per dataset and backbone layer: generated
//! samples per batch, attribute keep rate and the validated calibration
//! constant.

/// One dataset/backbone preset.
#[derive(Clone, Copy, Debug)]
pub struct Preset {
    pub name: &'static str,
    /// Generated samples per batch.
    pub m: usize,
    /// Fraction of attributes kept by a mask.
    pub keep_rate: f64,
    /// Calibration constant selected on the validation folds.
    pub gamma: f64,
}

impl Preset {
    /// Drop probability corresponding to the keep rate.
    pub fn drop_p(&self) -> f64 {
        1.0 - self.keep_rate
    }
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "cub-dt3", m: 70, keep_rate: 0.5, gamma: 2.58 },
    Preset { name: "cub-rl3", m: 30, keep_rate: 0.5, gamma: 3.139 },
    Preset { name: "cub-rl4", m: 30, keep_rate: 0.5, gamma: 4.53 },
    Preset { name: "awa2-dt3", m: 8, keep_rate: 0.5, gamma: 4.231 },
    Preset { name: "awa2-rl3", m: 15, keep_rate: 0.5, gamma: 8.721 },
    Preset { name: "awa2-rl4", m: 8, keep_rate: 0.25, gamma: 5.457 },
    Preset { name: "sun-dt3", m: 30, keep_rate: 0.85, gamma: 1.086 },
    Preset { name: "sun-rl3", m: 25, keep_rate: 0.75, gamma: 1.508 },
    Preset { name: "sun-rl4", m: 8, keep_rate: 0.75, gamma: 1.594 },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
