//! Vehicle parameter presets. Two are shipped: a full-size pair (sedan-class
//! target, heavier pursuit bullet) and a desk-scale half-scale pair matched
//! to small chassis platforms. Both are also written out as JSON so runs can
//! pin and archive the exact numbers they used.

use super::{BulletParams, ContactParams, TargetParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A complete parameter set for one experiment: both vehicles plus the
/// contact law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePreset {
    pub name_hint: PresetId,
    pub target: TargetParams,
    pub bullet: BulletParams,
    pub contact: ContactParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetId {
    FullSize,
    HalfScale,
}

impl VehiclePreset {
    /// Full-size pair: ~1500 kg target, ~1800 kg bullet.
    pub fn full_size() -> Self {
        Self {
            name_hint: PresetId::FullSize,
            target: TargetParams {
                m: 1500.0,
                iz: 2500.0,
                ix: 500.0,
                lf: 1.2,
                lr: 1.5,
                h_cg: 0.55,
                k_phi: 8.0e4,
                c_phi: 6.0e3,
                c_alpha_f: 8.0e4,
                c_alpha_r: 9.0e4,
                width: 1.85,
                length: 4.7,
                r_w: 0.32,
            },
            bullet: BulletParams {
                m: 1800.0,
                iz: 3200.0,
                lf: 1.35,
                lr: 1.45,
                eta_d: 0.9,
                i_g: 8.0,
                r_w: 0.33,
                c_alpha_f: 9.5e4,
                c_alpha_r: 1.05e5,
                width: 1.95,
                length: 5.0,
                t_bounds: [-600.0, 250.0],
                delta_bounds: [-0.5, 0.5],
            },
            contact: ContactParams::default(),
        }
    }

    /// Half-scale desk pair: 100 kg target chassis, 290 kg bullet platform.
    pub fn half_scale() -> Self {
        Self {
            name_hint: PresetId::HalfScale,
            target: TargetParams {
                m: 100.0,
                iz: 37.0,
                ix: 8.0,
                lf: 0.55,
                lr: 0.6,
                h_cg: 0.2,
                k_phi: 3.0e3,
                c_phi: 150.0,
                c_alpha_f: 3.0e3,
                c_alpha_r: 3.4e3,
                width: 0.9,
                length: 1.9,
                r_w: 0.15,
            },
            bullet: BulletParams {
                m: 290.0,
                iz: 137.0,
                lf: 0.6,
                lr: 0.7,
                eta_d: 0.9,
                i_g: 6.0,
                r_w: 0.15,
                c_alpha_f: 8.0e3,
                c_alpha_r: 9.0e3,
                width: 1.12,
                length: 2.1,
                t_bounds: [-60.0, 25.0],
                delta_bounds: [-0.5, 0.5],
            },
            contact: ContactParams { k_c: 4.0e4, c_c: 800.0, c_t: 400.0, mu_c: 0.6 },
        }
    }

    pub fn by_id(id: PresetId) -> Self {
        match id {
            PresetId::FullSize => Self::full_size(),
            PresetId::HalfScale => Self::half_scale(),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let preset: Self = serde_json::from_str(&text)?;
        preset.validate()?;
        Ok(preset)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let t = &self.target;
        let b = &self.bullet;
        anyhow::ensure!(
            t.m > 0.0 && t.iz > 0.0 && t.ix > 0.0 && t.lf > 0.0 && t.lr > 0.0 && t.width > 0.0 && t.r_w > 0.0,
            "target parameters must be positive"
        );
        anyhow::ensure!(t.lf + t.lr < t.length, "target wheelbase must fit in its length");
        anyhow::ensure!(
            b.m > 0.0 && b.iz > 0.0 && b.lf > 0.0 && b.lr > 0.0 && b.width > 0.0 && b.r_w > 0.0,
            "bullet parameters must be positive"
        );
        anyhow::ensure!(b.lf + b.lr < b.length, "bullet wheelbase must fit in its length");
        anyhow::ensure!(b.t_bounds[0] < b.t_bounds[1], "torque bounds must be ordered");
        anyhow::ensure!(b.delta_bounds[0] < b.delta_bounds[1], "steering bounds must be ordered");
        anyhow::ensure!(
            self.contact.k_c > 0.0 && self.contact.c_c >= 0.0 && self.contact.c_t >= 0.0 && self.contact.mu_c >= 0.0,
            "contact parameters must be non-negative with positive stiffness"
        );
        Ok(())
    }
}
